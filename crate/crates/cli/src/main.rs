use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand};
use telecoop::bridge::{self, ServeOptions};
use telecoop::io::{self, PlotKind, RunConfig};
use telecoop::scenarios::tracking::{self, SweepConfig};
use telecoop::scenarios::{self, energy_audit, AuditConfig, ScenarioConfig, ScenarioReport};
use telecoop::{Error, Result};

#[derive(Parser)]
#[command(
    name = "telecoop",
    version,
    about = "Tele-cooperation simulator with fractal impedance control"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for traces, metadata, the resolved config and the report.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Simulated run length in seconds, overriding the scenario's own.
    #[arg(long)]
    duration: Option<f64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario: exp1, drilling, exp52, exp6, exp51, tracking, sweep, interactive.
    Run {
        scenario: Option<String>,
        #[command(flatten)]
        common: Common,
    },
    /// FIC against the constant-stiffness baseline on the yielding wall.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Step tracking over the delay × rate grid.
    Sweep {
        /// Comma-separated delays in seconds.
        #[arg(long, value_delimiter = ',')]
        delays: Option<Vec<f64>>,
        /// Comma-separated channel rates in Hz.
        #[arg(long, value_delimiter = ',')]
        rates: Option<Vec<f64>>,
        #[command(flatten)]
        common: Common,
    },
    /// Energy audit of saved traces, or of a fresh run of the configured scenario.
    Audit {
        #[arg(long = "trace")]
        traces: Vec<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Serve the interactive scenario over a websocket.
    Serve {
        #[arg(long, env = "TELECOOP_PORT", default_value_t = bridge::DEFAULT_PORT)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, default_value_t = 60.0)]
        snapshot_rate: f64,
        #[command(flatten)]
        common: Common,
    },
    /// Export plot series from saved traces.
    Plot {
        /// force-profile or path3d.
        #[arg(long)]
        kind: String,
        #[arg(long = "trace", required = true)]
        traces: Vec<PathBuf>,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(common: &Common, scenario: Option<&str>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => io::load_config(p)?,
        None => RunConfig::default(),
    };
    if let Some(id) = scenario {
        if cfg.scenario.id() != id {
            cfg.scenario = ScenarioConfig::from_id(id)?;
        }
    }
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if common.duration.is_some() {
        cfg.duration = common.duration;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_report(r: &ScenarioReport) {
    println!("scenario {}", r.scenario);
    for (k, v) in &r.metrics {
        println!("  {k:<28} {v:.6}");
    }
    for f in &r.flags {
        println!("  FLAG {f}");
    }
}

fn save_outputs(dir: &Path, cfg: &RunConfig, report: &ScenarioReport) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    io::save_config(cfg, dir.join("config.toml"))?;
    for tr in &report.traces {
        io::write_trace(tr, dir.join(format!("{}.csv", tr.label)), Some(cfg))?;
    }
    let summary = serde_json::json!({
        "scenario": report.scenario,
        "metrics": report.metrics,
        "flags": report.flags,
        "config_sha256": cfg.hash(),
    });
    std::fs::write(
        dir.join("report.json"),
        serde_json::to_vec_pretty(&summary)?,
    )?;
    Ok(())
}

fn run_and_report(common: &Common, cfg: &RunConfig) -> Result<ScenarioReport> {
    let report = scenarios::run_scenario(&cfg.setup()?, &cfg.scenario)?;
    print_report(&report);
    if let Some(dir) = &common.out {
        save_outputs(dir, cfg, &report)?;
    }
    Ok(report)
}

/// `Ok(false)` means the command ran but its check failed.
fn execute(cmd: Cmd) -> Result<bool> {
    match cmd {
        Cmd::Run { scenario, common } => {
            let cfg = resolve(&common, scenario.as_deref())?;
            run_and_report(&common, &cfg)?;
        }
        Cmd::Compare { common } => {
            let cfg = resolve(&common, Some("exp1"))?;
            run_and_report(&common, &cfg)?;
        }
        Cmd::Sweep {
            delays,
            rates,
            common,
        } => {
            let mut cfg = resolve(&common, Some("sweep"))?;
            if let ScenarioConfig::Sweep(s) = &mut cfg.scenario {
                let d = SweepConfig::default();
                s.delays = delays.unwrap_or_else(|| {
                    if s.delays.is_empty() {
                        d.delays
                    } else {
                        s.delays.clone()
                    }
                });
                s.rates = rates.unwrap_or_else(|| {
                    if s.rates.is_empty() {
                        d.rates
                    } else {
                        s.rates.clone()
                    }
                });
            }
            let setup = cfg.setup()?;
            let ScenarioConfig::Sweep(s) = &cfg.scenario else {
                unreachable!("resolved to sweep")
            };
            let outcomes = tracking::run_delay_sweep(&setup, &s.tracking, &s.delays, &s.rates)?;
            for o in &outcomes {
                println!(
                    "delay {:>5.2} s  rate {:>6.0} Hz  final error {:.2e} m  audit {}  {}",
                    o.delay,
                    o.rate,
                    o.final_error,
                    if o.audit.passed { "ok" } else { "FAIL" },
                    if o.passed() { "PASS" } else { "FAIL" }
                );
            }
            let mut report = tracking::sweep_report(&outcomes);
            if let Some(dir) = &common.out {
                report.traces = outcomes.into_iter().map(|o| o.trace).collect();
                save_outputs(dir, &cfg, &report)?;
            }
            return Ok(report.flags.is_empty());
        }
        Cmd::Audit { traces, common } => {
            let audit_cfg = AuditConfig::default();
            let loaded = if traces.is_empty() {
                let cfg = resolve(&common, None)?;
                scenarios::run_scenario(&cfg.setup()?, &cfg.scenario)?.traces
            } else {
                traces
                    .iter()
                    .map(io::read_trace)
                    .collect::<Result<Vec<_>>>()?
            };
            let mut all = true;
            for tr in &loaded {
                let r = energy_audit(tr, &audit_cfg)?;
                all &= r.passed;
                println!(
                    "{:<28} {}  worst excess {:.3e} J at {:.3} s{}",
                    tr.label,
                    if r.passed { "PASS" } else { "FAIL" },
                    r.worst_excess,
                    r.worst_time,
                    r.violation.map(|v| format!("  ({v})")).unwrap_or_default()
                );
            }
            return Ok(all);
        }
        Cmd::Serve {
            port,
            host,
            snapshot_rate,
            common,
        } => {
            let mut cfg = resolve(&common, Some("interactive"))?;
            // here the duration bounds wall time, not the scenario
            let wall = cfg.duration.take();
            let addr = format!("{host}:{port}")
                .parse()
                .map_err(|e| Error::Validation(format!("bad listen address {host}:{port}: {e}")))?;
            let handle = bridge::serve(
                &cfg,
                ServeOptions {
                    addr,
                    snapshot_rate,
                    ..Default::default()
                },
            )?;
            println!("serving on ws://{}", handle.addr());
            let start = Instant::now();
            while !handle.is_finished() && wall.is_none_or(|w| start.elapsed().as_secs_f64() < w) {
                std::thread::sleep(Duration::from_millis(50));
            }
            let record = handle.shutdown()?;
            println!(
                "session ended after {} steps, {} inputs",
                record.steps,
                record.log.len()
            );
            if let Some(dir) = &common.out {
                std::fs::create_dir_all(dir)?;
                std::fs::write(
                    dir.join("session.json"),
                    serde_json::to_vec_pretty(&record)?,
                )?;
                if let Some(tr) = &record.trace {
                    io::write_trace(tr, dir.join("interactive.csv"), Some(&cfg))?;
                }
            }
        }
        Cmd::Plot { kind, traces, out } => {
            let kind: PlotKind = kind.parse()?;
            let loaded = traces
                .iter()
                .map(io::read_trace)
                .collect::<Result<Vec<_>>>()?;
            io::write_plotdata(&io::export_plotdata(&loaded, kind)?, &out)?;
            println!("wrote {kind} data to {}", out.display());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
