//! Inclination funnel: the operator pushes the drill into a clamped piece
//! while twisting it; angular saturation bounds the tilt.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::contact::{ContactModel, ContactState};
use super::{window_mean, Rig, ScenarioReport, Setup};
use crate::arm::Pose;
use crate::error::{Error, Result};
use crate::trace::SimTrace;

/// Five degrees, the allowed inclination error.
pub const FUNNEL: f64 = 5.0 * std::f64::consts::PI / 180.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FunnelConfig {
    /// Disturbance torque about the drilling-plane normal as a share of the angular `f_max`.
    pub torque_fraction: f64,
    pub ramp_time: f64,
    pub duration: f64,
    /// Push into the clamped piece along the tool axis (N).
    pub push: f64,
    /// Tool tip position (x, y) on the piece surface.
    pub tip: [f64; 2],
    pub k_wall: f64,
    /// Sideways stiffness of the pilot hole holding the tip (N/m).
    pub lateral_stiffness: f64,
    /// Inclination error at which the run is stopped (rad).
    pub abort_error: f64,
    pub window: f64,
}

impl Default for FunnelConfig {
    fn default() -> Self {
        Self {
            torque_fraction: 0.9,
            ramp_time: 1.0,
            duration: 6.0,
            push: 10.0,
            tip: [0.45, 0.0],
            k_wall: 2e4,
            lateral_stiffness: 4e3,
            abort_error: 0.5,
            window: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunnelOutcome {
    pub trace: SimTrace,
    pub disturbance: f64,
    /// Mean inclination error over the closing window (rad).
    pub steady_error: f64,
    pub max_error: f64,
    /// Inclination left the funnel.
    pub flagged: bool,
    /// Stopped early at `abort_error`.
    pub aborted: bool,
}

impl FunnelOutcome {
    pub fn report(&self) -> ScenarioReport {
        let mut r = ScenarioReport::new("exp52");
        r.metric("disturbance", self.disturbance);
        r.metric("steady_error", self.steady_error);
        r.metric("max_error", self.max_error);
        if self.flagged {
            r.flags.push(format!(
                "inclination error {:.4} rad left the ±5° funnel",
                self.max_error
            ));
        }
        if self.aborted {
            r.flags.push("run stopped at the abort error".into());
        }
        r.traces = vec![self.trace.clone()];
        r
    }
}

pub const AUX: [&str; 2] = ["disturbance", "normal_force"];

pub fn run_exp52_inclination_funnel(setup: &Setup, cfg: &FunnelConfig) -> Result<FunnelOutcome> {
    if !(cfg.ramp_time > 0.0) || !(cfg.duration > 0.0) {
        return Err(Error::Validation(format!(
            "funnel ramp and duration must be > 0 (got {} s, {} s)",
            cfg.ramp_time, cfg.duration
        )));
    }
    let dt = setup.dt;
    let axis = 5; // rotation about z, the only tilt a planar tool has
    let law = setup.law();
    // scaled by the FIC saturation even when the baseline runs, so both see the same torque
    let disturbance = cfg.torque_fraction * setup.fic.profiles[axis].f_max;
    let x_d = Pose::planar(cfg.tip[0], cfg.tip[1], -FRAC_PI_2);
    let contact = ContactModel::new(
        Vector3::new(0.0, cfg.tip[1], 0.0),
        Vector3::y(),
        cfg.k_wall,
        f64::INFINITY,
        0.0,
    )?
    .with_lateral_stiffness(cfg.lateral_stiffness);
    let mut cs = ContactState::default();
    let mut rig = Rig::at_pose(setup.plant.clone(), &x_d, &[0.5, -1.0, -1.0], law, dt)?;

    let mut trace = SimTrace::new("exp52_funnel", dt, vec![rig.arm.dof()], &AUX);
    let duration = setup.duration_or(cfg.duration);
    let mut max_error: f64 = 0.0;
    let mut aborted = false;
    for k in 0..setup.steps(duration) {
        let t = k as f64 * dt;
        let ramp = (t / cfg.ramp_time).min(1.0);
        let mut human = Vector6::zeros();
        human[1] = -cfg.push * ramp;
        human[axis] = disturbance * ramp;
        let step = rig.control(&x_d, &Vector6::zeros());
        let p = step.x.position;
        let w = contact.wrench(&cs, &p);
        let f_n = w.fixed_rows::<3>(0).dot(&contact.normal);
        trace.push(vec![rig.sample(&step, &w)], vec![human[axis], f_n]);
        contact.advance(&mut cs, &p, f_n, dt);
        max_error = max_error.max(step.x_tilde[axis].abs());
        if max_error > cfg.abort_error {
            aborted = true;
            break;
        }
        rig.advance(&step, &(w + human), dt)?;
    }
    let end = trace.time(trace.len());
    let steady_error = window_mean(&trace, end - cfg.window, end, |r| {
        r.arms[0].x_tilde[axis].abs()
    });
    Ok(FunnelOutcome {
        trace,
        disturbance,
        steady_error,
        max_error,
        flagged: max_error >= FUNNEL,
        aborted,
    })
}
