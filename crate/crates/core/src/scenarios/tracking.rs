//! Grasp-mode step tracking over a degraded link, swept over delay and
//! channel rate.

use nalgebra::{Vector3, Vector6};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::audit::{energy_audit, AuditConfig, EnergyReport};
use super::{Rig, ScenarioReport, Setup};
use crate::arm::{pose_error, Pose};
use crate::error::Result;
use crate::teleop::{ChannelParams, MasterSample, ReplicaMode, TeleopLink, WorkspaceMap};
use crate::trace::SimTrace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrackingConfig {
    /// Replica start pose (x, y, yaw) and centre of the master workspace.
    pub start: [f64; 3],
    /// Master deflections (x, y) held from the paired time onward.
    pub steps: Vec<(f64, [f64; 2])>,
    pub duration: f64,
    pub delay: f64,
    pub rate: f64,
    pub drop_probability: f64,
    pub audit: AuditConfig,
}

impl Default for TrackingConfig {
    fn default() -> Self {
        Self {
            start: [0.45, 0.25, 0.0],
            steps: vec![
                (1.0, [0.04, 0.0]),
                (4.0, [0.04, -0.03]),
                (7.0, [-0.02, -0.03]),
                (10.0, [0.0, 0.02]),
            ],
            duration: 30.0,
            delay: 0.0,
            rate: 1000.0,
            drop_probability: 0.0,
            audit: AuditConfig::default(),
        }
    }
}

impl TrackingConfig {
    /// Scripted master deflection at `t`.
    pub fn master_at(&self, t: f64) -> Vector6<f64> {
        let mut x = Vector6::zeros();
        for (t0, d) in &self.steps {
            if t >= *t0 {
                x[0] = d[0];
                x[1] = d[1];
            }
        }
        x
    }

    /// Time of the last master move.
    pub fn halt_time(&self) -> f64 {
        self.steps.iter().map(|(t, _)| *t).fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingOutcome {
    pub delay: f64,
    pub rate: f64,
    pub trace: SimTrace,
    pub audit: EnergyReport,
    /// Linear distance from the final master pose at the end of the run (m).
    pub final_error: f64,
    pub saturation_error: f64,
}

impl TrackingOutcome {
    pub fn report(&self) -> ScenarioReport {
        let mut r = sweep_report(std::slice::from_ref(self));
        r.scenario = "tracking".into();
        r.traces = vec![self.trace.clone()];
        r
    }

    pub fn converged(&self) -> bool {
        self.final_error <= self.saturation_error
    }

    pub fn passed(&self) -> bool {
        self.audit.passed && self.converged()
    }
}

pub const AUX: [&str; 3] = ["master_x", "master_y", "feedback_norm"];

pub fn run_step_tracking(setup: &Setup, cfg: &TrackingConfig) -> Result<TrackingOutcome> {
    let dt = setup.dt;
    let start = Pose::planar(cfg.start[0], cfg.start[1], cfg.start[2]);
    let map = WorkspaceMap::new(start, setup.teleop.scale)?;
    let channel = ChannelParams::new(cfg.delay, cfg.rate, cfg.drop_probability)?;
    let mut params = setup.teleop;
    params.forward = channel;
    params.feedback = channel;
    let mut link = TeleopLink::new(params, map, start, setup.seed)?;
    let mut rig = Rig::at_pose(
        setup.plant.clone(),
        &start,
        &[0.8, -1.4, 0.6],
        setup.law(),
        dt,
    )?;
    let k_c = params.k_c();

    let label = format!("tracking_d{}_r{}", cfg.delay, cfg.rate);
    let mut trace = SimTrace::new(label, dt, vec![rig.arm.dof()], &AUX);
    for k in 0..setup.steps(setup.duration_or(cfg.duration)) {
        let t = k as f64 * dt;
        let x_m = cfg.master_at(t);
        let x_r = rig.pose();
        let step = match link.replica_mode(MasterSample { x_m, grasp: true }, t, &x_r) {
            ReplicaMode::Grasp { target } => rig.control(&target, &Vector6::zeros()),
            // nothing has crossed the link yet: hold the start, nudged by whatever arrived
            ReplicaMode::Released { x_d, x_m } => rig.control(&x_d, &k_c.component_mul(&x_m)),
        };
        // the free-space replica senses no contact; the spring wrench is what the master feels
        let fb = link.feedback(step.spring, t);
        trace.push(
            vec![rig.sample(&step, &Vector6::zeros())],
            vec![x_m[0], x_m[1], fb.norm()],
        );
        rig.advance(&step, &Vector6::zeros(), dt)?;
    }
    let goal = map.to_replica(&cfg.master_at(f64::INFINITY));
    let err = pose_error(&goal, &rig.pose());
    let audit = energy_audit(&trace, &cfg.audit)?;
    Ok(TrackingOutcome {
        delay: cfg.delay,
        rate: cfg.rate,
        trace,
        audit,
        final_error: Vector3::new(err[0], err[1], err[2]).norm(),
        saturation_error: setup.fic.profiles[0].x_b,
    })
}

/// Delays (s) and channel rates (Hz) of the robustness grid.
pub const GRID_DELAYS: [f64; 4] = [0.0, 0.25, 0.5, 1.0];
pub const GRID_RATES: [f64; 3] = [1000.0, 100.0, 20.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub delays: Vec<f64>,
    pub rates: Vec<f64>,
    pub tracking: TrackingConfig,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            delays: GRID_DELAYS.to_vec(),
            rates: GRID_RATES.to_vec(),
            tracking: TrackingConfig::default(),
        }
    }
}

/// Runs every (delay, rate) pair in parallel; results keep the input order.
pub fn run_delay_sweep(
    setup: &Setup,
    cfg: &TrackingConfig,
    delays: &[f64],
    rates: &[f64],
) -> Result<Vec<TrackingOutcome>> {
    let grid: Vec<(f64, f64)> = delays
        .iter()
        .flat_map(|&d| rates.iter().map(move |&r| (d, r)))
        .collect();
    grid.par_iter()
        .map(|&(delay, rate)| {
            run_step_tracking(
                setup,
                &TrackingConfig {
                    delay,
                    rate,
                    ..cfg.clone()
                },
            )
        })
        .collect()
}

pub fn sweep_report(outcomes: &[TrackingOutcome]) -> ScenarioReport {
    let mut r = ScenarioReport::new("sweep");
    for o in outcomes {
        let tag = format!("d{}_r{}", o.delay, o.rate);
        r.metric(&format!("{tag}_final_error"), o.final_error);
        r.metric(&format!("{tag}_worst_excess"), o.audit.worst_excess);
        if !o.passed() {
            r.flags.push(match &o.audit.violation {
                Some(v) => format!("{tag}: {v}"),
                None => format!(
                    "{tag}: final error {:.4} m above {:.4} m",
                    o.final_error, o.saturation_error
                ),
            });
        }
    }
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn master_schedule_holds_last_step() {
        let cfg = TrackingConfig::default();
        assert_eq!(cfg.master_at(0.5), Vector6::zeros());
        assert_eq!(cfg.master_at(4.0)[1], -0.03);
        assert_eq!(cfg.master_at(1e9)[1], 0.02);
        assert_eq!(cfg.halt_time(), 10.0);
    }

    #[test]
    fn delayed_slow_link_still_converges() {
        let setup = Setup {
            duration: Some(16.0),
            ..Setup::default()
        };
        let cfg = TrackingConfig {
            delay: 0.5,
            rate: 20.0,
            ..Default::default()
        };
        let o = run_step_tracking(&setup, &cfg).unwrap();
        assert!(o.audit.passed, "{:?}", o.audit.violation);
        assert!(o.final_error < 1e-3, "final error {}", o.final_error);
        // the replica must not move before the first step has crossed the link
        let before = o.trace.rows[(1.4 / setup.dt) as usize].arms[0].x[0];
        assert!(
            (before - cfg.start[0]).abs() < 1e-9,
            "{:e}",
            before - cfg.start[0]
        );
    }

    #[test]
    fn sweep_keeps_grid_order() {
        let setup = Setup {
            duration: Some(2.0),
            ..Setup::default()
        };
        let outs = run_delay_sweep(
            &setup,
            &TrackingConfig::default(),
            &[0.0, 0.25],
            &[100.0, 20.0],
        )
        .unwrap();
        let grid: Vec<_> = outs.iter().map(|o| (o.delay, o.rate)).collect();
        assert_eq!(
            grid,
            vec![(0.0, 100.0), (0.0, 20.0), (0.25, 100.0), (0.25, 20.0)]
        );
    }
}
