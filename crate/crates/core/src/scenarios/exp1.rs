//! FIC vs constant-stiffness IC pushing a drill into a yielding wall.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::contact::{ContactModel, ContactState};
use super::{window_mean, Rig, ScenarioReport, Setup};
use crate::arm::Pose;
use crate::error::Result;
use crate::teleop::{cubic_path, ControlLaw};
use crate::trace::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Config {
    /// Tool start above the surface (x, y), tool pointing down.
    pub start: [f64; 2],
    /// How far past the surface the set-point is driven (m).
    pub overshoot: f64,
    pub approach_time: f64,
    pub duration: f64,
    pub k_wall: f64,
    pub threshold: f64,
    pub yield_rate: f64,
    /// Linear saturation error of the FIC for this experiment (m).
    pub fic_x_b: f64,
    /// Length of the closing window used for steady-state values (s).
    pub window: f64,
}

impl Default for Exp1Config {
    fn default() -> Self {
        Self {
            start: [0.4, 0.05],
            overshoot: 0.03,
            approach_time: 2.0,
            duration: 10.0,
            k_wall: 1e4,
            threshold: 5.0,
            yield_rate: 1.2e-4,
            fic_x_b: 0.005,
            window: 2.0,
        }
    }
}

/// Steady-state summary of one drilling run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DrillSummary {
    /// Mean normal contact force over the closing window (N).
    pub steady_force: f64,
    /// Tool depth below the original surface at the end (m).
    pub penetration: f64,
    /// Material removed (m).
    pub removed: f64,
    /// Set-point minus tool position along the drilling axis at the end (m).
    pub final_error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Outcome {
    pub fic: SimTrace,
    pub ic: SimTrace,
    pub fic_summary: DrillSummary,
    pub ic_summary: DrillSummary,
}

impl Exp1Outcome {
    pub fn report(&self) -> ScenarioReport {
        let mut r = ScenarioReport::new("exp1");
        for (tag, s) in [("fic", &self.fic_summary), ("ic", &self.ic_summary)] {
            r.metric(&format!("{tag}_steady_force"), s.steady_force);
            r.metric(&format!("{tag}_penetration"), s.penetration);
            r.metric(&format!("{tag}_removed"), s.removed);
            r.metric(&format!("{tag}_final_error"), s.final_error);
        }
        r.traces = vec![self.fic.clone(), self.ic.clone()];
        r
    }
}

pub const AUX: [&str; 3] = ["normal_force", "removed", "depth"];

pub fn drill_once(
    setup: &Setup,
    cfg: &Exp1Config,
    law: ControlLaw,
    label: &str,
) -> Result<(SimTrace, DrillSummary)> {
    let dt = setup.dt;
    let start = Pose::planar(cfg.start[0], cfg.start[1], -FRAC_PI_2);
    let target = start.shifted(Vector3::new(0.0, -(cfg.start[1] + cfg.overshoot), 0.0));
    let contact = ContactModel::new(
        Vector3::zeros(),
        Vector3::y(),
        cfg.k_wall,
        cfg.threshold,
        cfg.yield_rate,
    )?;
    let mut cs = ContactState::default();
    let mut rig = Rig::at_pose(setup.plant.clone(), &start, &[0.5, -1.0, -1.0], law, dt)?;
    let duration = setup.duration_or(cfg.duration);
    let mut trace = SimTrace::new(label, dt, vec![rig.arm.dof()], &AUX);
    for k in 0..setup.steps(duration) {
        let t = k as f64 * dt;
        let x_d = cubic_path(&start, &target, cfg.approach_time, t)?;
        let step = rig.control(&x_d, &Vector6::zeros());
        let p = step.x.position;
        let w = contact.wrench(&cs, &p);
        let f_n = w.fixed_rows::<3>(0).dot(&contact.normal);
        trace.push(
            vec![rig.sample(&step, &w)],
            vec![f_n, cs.removed, contact.depth_below_original(&p)],
        );
        contact.advance(&mut cs, &p, f_n, dt);
        rig.advance(&step, &w, dt)?;
    }
    let end = duration;
    let f_col = trace.aux_index("normal_force").expect("aux column");
    let last = trace.rows.last().expect("non-empty run");
    let summary = DrillSummary {
        steady_force: window_mean(&trace, end - cfg.window, end, |r| r.aux[f_col]),
        penetration: last.aux[2],
        removed: last.aux[1],
        final_error: last.arms[0].x_tilde[1].abs(),
    };
    Ok((trace, summary))
}

pub fn run_exp1_drilling_comparison(setup: &Setup, cfg: &Exp1Config) -> Result<Exp1Outcome> {
    let fic_gains = setup.fic_with_linear_x_b(cfg.fic_x_b)?;
    let (fic, fic_summary) = drill_once(setup, cfg, ControlLaw::Fic(fic_gains), "exp1_fic")?;
    let (ic, ic_summary) = drill_once(setup, cfg, ControlLaw::Ic(setup.ic), "exp1_ic")?;
    Ok(Exp1Outcome {
        fic,
        ic,
        fic_summary,
        ic_summary,
    })
}
