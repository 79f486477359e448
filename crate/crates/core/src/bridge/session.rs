//! Session state owned by the stepper: the simulation, its command log and
//! the identity of the controlling client.

use serde::{Deserialize, Serialize};

use super::protocol::Snapshot;
use crate::error::{Error, Result};
use crate::io::RunConfig;
use crate::scenarios::interactive::{self, InteractiveConfig, InteractiveSim, MasterInput};
use crate::scenarios::{ScenarioConfig, Setup};
use crate::trace::SimTrace;

/// An input together with the step it took effect before.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedInput {
    pub step: u64,
    pub input: MasterInput,
}

/// Everything needed to reproduce a session offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionRecord {
    pub config: RunConfig,
    pub steps: u64,
    pub log: Vec<LoggedInput>,
    /// Trace recorded live; absent when recording was off.
    #[serde(skip)]
    pub trace: Option<SimTrace>,
}

impl SessionRecord {
    /// Re-run the logged inputs against a fresh simulation.
    pub fn replay(&self) -> Result<SimTrace> {
        let (setup, icfg) = interactive_parts(&self.config)?;
        let log: Vec<_> = self.log.iter().map(|l| (l.step, l.input)).collect();
        interactive::replay(&setup, &icfg, &log, self.steps)
    }
}

fn interactive_parts(config: &RunConfig) -> Result<(Setup, InteractiveConfig)> {
    match &config.scenario {
        ScenarioConfig::Interactive(c) => Ok((config.setup()?, *c)),
        other => Err(Error::Validation(format!(
            "serving needs scenario 'interactive', got '{}'",
            other.id()
        ))),
    }
}

#[derive(Debug)]
pub struct Session {
    config: RunConfig,
    sim: InteractiveSim,
    log: Vec<LoggedInput>,
    controller: Option<u64>,
}

impl Session {
    pub fn new(config: &RunConfig) -> Result<Self> {
        let (setup, icfg) = interactive_parts(config)?;
        Ok(Self {
            config: config.clone(),
            sim: InteractiveSim::new(&setup, &icfg)?,
            log: Vec::new(),
            controller: None,
        })
    }

    pub fn dt(&self) -> f64 {
        self.config.dt
    }

    pub fn steps(&self) -> u64 {
        self.sim.steps()
    }

    pub fn time(&self) -> f64 {
        self.sim.time()
    }

    pub fn controller(&self) -> Option<u64> {
        self.controller
    }

    /// Claim control for `client`. Fails while another client holds it.
    pub fn attach(&mut self, client: u64) -> bool {
        match self.controller {
            None => {
                self.controller = Some(client);
                true
            }
            Some(c) => c == client,
        }
    }

    /// Drop `client`; if it was in control the master is released and centred
    /// so the replica holds where it is.
    pub fn detach(&mut self, client: u64) -> Result<()> {
        if self.controller == Some(client) {
            self.controller = None;
            self.submit(MasterInput::Grasp { grasp: false })?;
            self.submit(MasterInput::Pose { x_m: [0.0; 6] })?;
        }
        Ok(())
    }

    /// Apply an input before the next step and log it. Rejected inputs are not logged.
    pub fn submit(&mut self, input: MasterInput) -> Result<()> {
        self.sim.apply(&input)?;
        self.log.push(LoggedInput {
            step: self.sim.steps(),
            input,
        });
        Ok(())
    }

    pub fn step(&mut self) -> Result<()> {
        self.sim.step()
    }

    pub fn snapshot(&self, stale: bool) -> Snapshot {
        Snapshot::from_state(self.sim.state(), self.sim.channel(), stale)
    }

    pub fn log(&self) -> &[LoggedInput] {
        &self.log
    }

    pub fn into_record(self) -> SessionRecord {
        let steps = self.sim.steps();
        let trace = Some(self.sim.into_trace()).filter(|t| !t.is_empty() || steps == 0);
        SessionRecord {
            config: self.config,
            steps,
            log: self.log,
            trace,
        }
    }
}
