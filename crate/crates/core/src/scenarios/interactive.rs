//! Operator-driven session: one replica arm under live master input.
//!
//! The stepper is fully deterministic. Feeding the same inputs at the same
//! step indices reproduces the same trace, which is how recorded sessions
//! replay offline.

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use super::{Rig, Setup};
use crate::arm::Pose;
use crate::error::{Error, Result};
use crate::fic::{Phase, DOF};
use crate::teleop::{
    ChannelParams, MasterSample, ReplicaMode, TeleopLink, ViaPointPlan, WorkspaceMap,
};
use crate::trace::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InteractiveConfig {
    /// Replica start pose (x, y, yaw), also the centre of the master workspace.
    pub start: [f64; 3],
    /// Length of an offline replay when no command log says otherwise (s).
    pub duration: f64,
    /// Record a trace row every step.
    pub record: bool,
}

impl Default for InteractiveConfig {
    fn default() -> Self {
        Self {
            start: [0.45, 0.25, 0.0],
            duration: 10.0,
            record: true,
        }
    }
}

/// One operator action, already validated.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MasterInput {
    /// Absolute master pose in its workspace frame: position then rotation vector.
    Pose {
        x_m: [f64; DOF],
    },
    Grasp {
        grasp: bool,
    },
    /// New settings for both link directions.
    Channel {
        params: ChannelParams,
    },
    /// Append a replica pose to the non-haptic plan, reached after `duration` seconds.
    ViaPoint {
        pose: [f64; DOF],
        duration: f64,
    },
}

/// What a client needs to draw the replica at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractiveState {
    pub t: f64,
    pub q: Vec<f64>,
    pub pose: [f64; DOF],
    pub x_d: [f64; DOF],
    pub feedback: [f64; DOF],
    pub phase: [u8; DOF],
    pub kinetic: f64,
    pub storage: f64,
    pub grasp: bool,
}

pub const AUX: [&str; 7] = [
    "master_x",
    "master_y",
    "master_z",
    "master_rx",
    "master_ry",
    "master_rz",
    "grasp",
];

#[derive(Debug, Clone)]
pub struct InteractiveSim {
    dt: f64,
    rig: Rig,
    link: TeleopLink,
    k_c: Vector6<f64>,
    master: MasterSample,
    /// Non-haptic plan and the session time it started at.
    plan: Option<(ViaPointPlan, f64)>,
    steps: u64,
    record: bool,
    trace: SimTrace,
    last: InteractiveState,
}

impl InteractiveSim {
    pub fn new(setup: &Setup, cfg: &InteractiveConfig) -> Result<Self> {
        let start = Pose::planar(cfg.start[0], cfg.start[1], cfg.start[2]);
        let map = WorkspaceMap::new(start, setup.teleop.scale)?;
        let link = TeleopLink::new(setup.teleop, map, start, setup.seed)?;
        let rig = Rig::at_pose(
            setup.plant.clone(),
            &start,
            &[0.8, -1.4, 0.6],
            setup.law(),
            setup.dt,
        )?;
        let last = InteractiveState {
            t: 0.0,
            q: rig.state.q.iter().cloned().collect(),
            pose: super::to_array(&start.to_vector()),
            x_d: super::to_array(&start.to_vector()),
            feedback: [0.0; DOF],
            phase: [Phase::Divergence.flag(); DOF],
            kinetic: 0.0,
            storage: 0.0,
            grasp: false,
        };
        Ok(Self {
            dt: setup.dt,
            trace: SimTrace::new("interactive", setup.dt, vec![rig.arm.dof()], &AUX),
            k_c: setup.teleop.k_c(),
            rig,
            link,
            master: MasterSample {
                x_m: Vector6::zeros(),
                grasp: false,
            },
            plan: None,
            steps: 0,
            record: cfg.record,
            last,
        })
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.dt
    }

    /// Steps taken so far; inputs apply from the next one.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn trace(&self) -> &SimTrace {
        &self.trace
    }

    pub fn into_trace(self) -> SimTrace {
        self.trace
    }

    /// State after the most recent step.
    pub fn state(&self) -> &InteractiveState {
        &self.last
    }

    pub fn channel(&self) -> ChannelParams {
        self.link.params.forward
    }

    pub fn apply(&mut self, input: &MasterInput) -> Result<()> {
        match *input {
            MasterInput::Pose { x_m } => {
                if x_m.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation("master pose must be finite".into()));
                }
                self.master.x_m = WorkspaceMap::confine(&x_m.into());
            }
            MasterInput::Grasp { grasp } => self.master.grasp = grasp,
            MasterInput::Channel { params } => self.link.set_channels(params, params)?,
            MasterInput::ViaPoint { pose, duration } => {
                if pose.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Validation("via-point pose must be finite".into()));
                }
                let t = self.time();
                let target = Pose::from_vector(&pose.into());
                match &mut self.plan {
                    Some((plan, t0)) if t - *t0 < plan.duration() => plan.push(target, duration)?,
                    _ => {
                        let mut plan = ViaPointPlan::new(self.released_setpoint(t));
                        plan.push(target, duration)?;
                        self.plan = Some((plan, t));
                    }
                }
            }
        }
        Ok(())
    }

    fn released_setpoint(&self, t: f64) -> Pose {
        match &self.plan {
            Some((plan, t0)) => plan.sample(t - t0),
            None => self.link.latched(),
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let t = self.time();
        let x_r = self.rig.pose();
        let step = match self.link.replica_mode(self.master, t, &x_r) {
            ReplicaMode::Grasp { target } => {
                // the operator took over; a later release latches wherever the arm is
                self.plan = None;
                self.rig.control(&target, &Vector6::zeros())
            }
            ReplicaMode::Released { x_m, .. } => {
                let x_d = self.released_setpoint(t);
                self.rig.control(&x_d, &self.k_c.component_mul(&x_m))
            }
        };
        let fb = self.link.feedback(step.spring, t);
        let sample = self.rig.sample(&step, &Vector6::zeros());
        self.last = InteractiveState {
            t,
            q: sample.q.clone(),
            pose: sample.x,
            x_d: sample.x_d,
            feedback: super::to_array(&fb),
            phase: sample.phase,
            kinetic: sample.kinetic,
            storage: sample.storage,
            grasp: self.master.grasp,
        };
        if self.record {
            let m = self.master.x_m;
            let aux = vec![
                m[0],
                m[1],
                m[2],
                m[3],
                m[4],
                m[5],
                if self.master.grasp { 1.0 } else { 0.0 },
            ];
            self.trace.push(vec![sample], aux);
        }
        self.rig.advance(&step, &Vector6::zeros(), self.dt)?;
        self.steps += 1;
        Ok(())
    }
}

/// Re-run a session offline from its inputs, each tagged with the step it applied before.
pub fn replay(
    setup: &Setup,
    cfg: &InteractiveConfig,
    log: &[(u64, MasterInput)],
    steps: u64,
) -> Result<SimTrace> {
    let mut sim = InteractiveSim::new(
        setup,
        &InteractiveConfig {
            record: true,
            ..*cfg
        },
    )?;
    let mut pending = log.iter().peekable();
    for k in 0..steps {
        while let Some((_, input)) = pending.next_if(|(at, _)| *at <= k) {
            // inputs rejected live were never logged, so failures here are real divergences
            sim.apply(input)?;
        }
        sim.step()?;
    }
    Ok(sim.into_trace())
}
