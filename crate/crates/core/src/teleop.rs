//! Master and replica control laws, via-point paths, and the degraded
//! master↔replica link.

use std::collections::VecDeque;

use nalgebra::{DVector, UnitQuaternion, Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::arm::{pose_error, ArmModel, ArmState, Pose, TorqueCommand};
use crate::error::{Error, Result};
use crate::fic::{
    fic_wrench, spring_potential, FicGains, FicState, Phase, StiffnessProfile, TaskSpaceError, DOF,
};
use crate::ic::{ic_storage, ic_wrench, IcGains};

/// Half-width of the master workspace box (m).
pub const MASTER_BOX: f64 = 0.1;
/// Rotational half-range of the master workspace (rad).
pub const MASTER_TILT: f64 = 0.5;
/// Grid-alignment tolerance of the channel clock (s).
const CLOCK_EPS: f64 = 1e-9;

/// Cubic time scaling `s = 3τ² - 2τ³` and its derivative with respect to `τ`.
pub fn cubic_scaling(tau: f64) -> (f64, f64) {
    let tau = tau.clamp(0.0, 1.0);
    (tau * tau * (3.0 - 2.0 * tau), 6.0 * tau * (1.0 - tau))
}

/// Straight-line pose interpolation with cubic timing. `t` is clamped to `[0, T]`.
pub fn cubic_path(p0: &Pose, p1: &Pose, duration: f64, t: f64) -> Result<Pose> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::InvalidDuration(duration));
    }
    let (s, _) = cubic_scaling(t / duration);
    Ok(p0.interpolate(p1, s))
}

/// Sequence of cubic segments starting from `start`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViaPointPlan {
    pub start: Pose,
    pub segments: Vec<(Pose, f64)>,
}

impl ViaPointPlan {
    pub fn new(start: Pose) -> Self {
        Self {
            start,
            segments: Vec::new(),
        }
    }

    pub fn push(&mut self, target: Pose, duration: f64) -> Result<()> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::InvalidDuration(duration));
        }
        self.segments.push((target, duration));
        Ok(())
    }

    pub fn then(mut self, target: Pose, duration: f64) -> Result<Self> {
        self.push(target, duration)?;
        Ok(self)
    }

    pub fn duration(&self) -> f64 {
        self.segments.iter().map(|(_, d)| d).sum()
    }

    /// Start time of every segment plus the final end time.
    pub fn boundary_times(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        let mut t = 0.0;
        out.push(t);
        for (_, d) in &self.segments {
            t += d;
            out.push(t);
        }
        out
    }

    pub fn end(&self) -> Pose {
        self.segments.last().map(|(p, _)| *p).unwrap_or(self.start)
    }

    /// Index of the segment active at `t`, or `None` once the plan is finished.
    pub fn segment_at(&self, t: f64) -> Option<usize> {
        let mut t0 = 0.0;
        for (i, (_, d)) in self.segments.iter().enumerate() {
            if t < t0 + d {
                return Some(i);
            }
            t0 += d;
        }
        None
    }

    pub fn sample(&self, t: f64) -> Pose {
        let mut from = self.start;
        let mut t0 = 0.0;
        for (target, d) in &self.segments {
            if t < t0 + d {
                let (s, _) = cubic_scaling((t - t0) / d);
                return from.interpolate(target, s);
            }
            from = *target;
            t0 += d;
        }
        from
    }

    /// Linear velocity of the set-point at `t`.
    pub fn linear_velocity(&self, t: f64) -> Vector3<f64> {
        let mut from = self.start;
        let mut t0 = 0.0;
        for (target, d) in &self.segments {
            if t < t0 + d {
                let (_, ds) = cubic_scaling((t - t0) / d);
                return (target.position - from.position) * (ds / d);
            }
            from = *target;
            t0 += d;
        }
        Vector3::zeros()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    pub delay: f64,
    pub rate: f64,
    pub drop_probability: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            delay: 0.0,
            rate: 1000.0,
            drop_probability: 0.0,
        }
    }
}

impl ChannelParams {
    pub fn new(delay: f64, rate: f64, drop_probability: f64) -> Result<Self> {
        let p = Self {
            delay,
            rate,
            drop_probability,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delay >= 0.0 && self.delay.is_finite()) {
            return Err(Error::Validation(format!(
                "channel delay must be >= 0, got {}",
                self.delay
            )));
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::Validation(format!(
                "channel rate must be > 0, got {}",
                self.rate
            )));
        }
        if !(0.0..1.0).contains(&self.drop_probability) {
            return Err(Error::Validation(format!(
                "channel drop probability must be in [0, 1), got {}",
                self.drop_probability
            )));
        }
        Ok(())
    }
}

/// Delayed, resampled, lossy link with zero-order hold.
///
/// The output at `t` is the newest input sampled on the `1/rate` grid at or
/// before `t - delay` whose grid instant was not dropped.
#[derive(Debug, Clone)]
pub struct ChannelModel<T> {
    params: ChannelParams,
    rng: ChaCha8Rng,
    buffer: VecDeque<(f64, T)>,
    /// Last grid index already emitted, counted on the current rate.
    last_index: Option<i64>,
    held: Option<T>,
}

impl<T: Clone> ChannelModel<T> {
    pub fn new(params: ChannelParams, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            rng: ChaCha8Rng::seed_from_u64(seed),
            buffer: VecDeque::new(),
            last_index: None,
            held: None,
        })
    }

    pub fn params(&self) -> &ChannelParams {
        &self.params
    }

    /// Change the link settings live. Samples already in flight are kept.
    pub fn set_params(&mut self, params: ChannelParams) -> Result<()> {
        params.validate()?;
        if let Some(k) = self.last_index {
            let t_last = k as f64 / self.params.rate;
            self.last_index = Some((t_last * params.rate + CLOCK_EPS).floor() as i64);
        }
        self.params = params;
        Ok(())
    }

    /// Feed the sample taken at `t` and read the channel output at `t`.
    pub fn step(&mut self, input: T, t: f64) -> Option<T> {
        self.buffer.push_back((t, input));
        let rate = self.params.rate;
        let horizon = t - self.params.delay;
        if horizon >= -CLOCK_EPS {
            let target = ((horizon + CLOCK_EPS) * rate).floor() as i64;
            let first = self.last_index.map_or(0, |k| k + 1);
            // only the newest undropped instant matters, but every instant draws
            for k in first..=target {
                let dropped = self.rng.random::<f64>() < self.params.drop_probability;
                if dropped {
                    continue;
                }
                let grid_t = k as f64 / rate + CLOCK_EPS;
                if let Some((_, v)) = self.buffer.iter().rev().find(|(ts, _)| *ts <= grid_t) {
                    self.held = Some(v.clone());
                }
            }
            if target >= first {
                self.last_index = Some(target);
                let grid_t = target as f64 / rate + CLOCK_EPS;
                // keep the newest sample at or before the last grid instant
                while self.buffer.len() > 1 && self.buffer[1].0 <= grid_t {
                    self.buffer.pop_front();
                }
            }
        }
        self.held.clone()
    }
}

/// Master→replica coordinate map: replica pose = centre ⊕ scale · master deflection.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkspaceMap {
    pub replica_center: Pose,
    pub scale: f64,
}

impl WorkspaceMap {
    pub fn new(replica_center: Pose, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Validation(format!(
                "workspace scale must be > 0, got {scale}"
            )));
        }
        Ok(Self {
            replica_center,
            scale,
        })
    }

    /// Clamp a master deflection to the workspace box.
    pub fn confine(x_m: &Vector6<f64>) -> Vector6<f64> {
        let mut out = *x_m;
        for i in 0..3 {
            out[i] = out[i].clamp(-MASTER_BOX, MASTER_BOX);
            out[i + 3] = out[i + 3].clamp(-MASTER_TILT, MASTER_TILT);
        }
        out
    }

    pub fn to_replica(&self, x_m: &Vector6<f64>) -> Pose {
        let lin = Vector3::new(x_m[0], x_m[1], x_m[2]) * self.scale;
        let rot = UnitQuaternion::from_scaled_axis(Vector3::new(x_m[3], x_m[4], x_m[5]));
        Pose::new(
            self.replica_center.position + lin,
            rot * self.replica_center.orientation,
        )
    }

    pub fn to_master(&self, pose: &Pose) -> Vector6<f64> {
        let lin = (pose.position - self.replica_center.position) / self.scale;
        let rot = (pose.orientation * self.replica_center.orientation.inverse()).scaled_axis();
        Vector6::new(lin.x, lin.y, lin.z, rot.x, rot.y, rot.z)
    }
}

/// Master device state in its own workspace frame (deflection from centre).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MasterState {
    pub x_m: Vector6<f64>,
    pub xd_m: Vector6<f64>,
    pub grasp: bool,
}

/// Master gains: pure exponential springs centring the device.
pub fn default_master_gains() -> FicGains {
    let lin = StiffnessProfile::new(0.0, 15.0, 0.05).expect("valid master profile");
    let ang = StiffnessProfile::new(0.0, 0.4, 0.0873).expect("valid master profile");
    FicGains::uniform(lin, ang, 2.5, 0.0)
}

/// `F_M = K_M(x̃_M) x̃_M - D_M ẋ_M + K_A F_FB`, with `x̃_M` measured toward the centre.
pub fn master_wrench(
    master: &MasterState,
    f_fb: &Vector6<f64>,
    gains: &FicGains,
    state: &FicState,
    k_a: f64,
) -> (Vector6<f64>, FicState) {
    let error = TaskSpaceError {
        x_tilde: -master.x_m,
        x_tilde_dot: -master.xd_m,
    };
    let (out, next) = fic_wrench(&error, &master.xd_m, state, gains);
    (out.wrench() + f_fb * k_a, next)
}

/// Replica stiffness law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlLaw {
    Fic(FicGains),
    Ic(IcGains),
}

impl ControlLaw {
    pub fn f_max(&self, dof: usize) -> f64 {
        match self {
            ControlLaw::Fic(g) => g.profiles[dof].f_max,
            ControlLaw::Ic(_) => f64::INFINITY,
        }
    }
}

/// One control evaluation and everything the traces record about it.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlStep {
    pub command: TorqueCommand,
    pub x: Pose,
    pub x_dot: Vector6<f64>,
    pub x_d: Pose,
    pub x_tilde: Vector6<f64>,
    pub spring: Vector6<f64>,
    pub damping: Vector6<f64>,
    pub storage: f64,
    /// Storage added by moving the set-point since the previous call.
    pub input_work: f64,
    pub phases: [Phase; DOF],
}

/// Replica-side controller: the stiffness law plus its phase machine.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplicaController {
    pub law: ControlLaw,
    pub fic_state: FicState,
    pub dt: f64,
    last_setpoint: Option<Pose>,
}

impl ReplicaController {
    pub fn new(law: ControlLaw, dt: f64) -> Self {
        Self {
            law,
            fic_state: FicState::default(),
            dt,
            last_setpoint: None,
        }
    }

    /// Evaluate the law toward `x_d`, adding `extra` to the commanded wrench.
    ///
    /// A moved set-point restarts every phase machine in Divergence.
    pub fn control(
        &mut self,
        arm: &ArmModel,
        state: &ArmState,
        x_d: &Pose,
        extra: &Vector6<f64>,
        tau_null: Option<&DVector<f64>>,
    ) -> ControlStep {
        let x = arm.forward_kinematics(&state.q);
        let x_dot = arm.twist(state);
        let x_tilde = pose_error(x_d, &x);
        let moved = self.last_setpoint.filter(|prev| prev != x_d);
        let mut stored_before = None;
        let mut xd_rate = Vector6::zeros();
        if let Some(prev) = moved {
            stored_before = Some(self.storage_at(&pose_error(&prev, &x)));
            self.fic_state.reset();
            xd_rate = pose_error(x_d, &prev) / self.dt;
        }
        self.last_setpoint = Some(*x_d);
        let (spring, damping, storage, phases) = match &self.law {
            ControlLaw::Fic(gains) => {
                let error = TaskSpaceError {
                    x_tilde,
                    x_tilde_dot: xd_rate - x_dot,
                };
                let (out, next) = fic_wrench(&error, &x_dot, &self.fic_state, gains);
                self.fic_state = next;
                (out.spring, out.damping, out.storage, next.phases())
            }
            ControlLaw::Ic(gains) => {
                let (s, d) = ic_wrench(&x_tilde, &x_dot, gains);
                (s, d, ic_storage(&x_tilde, gains), [Phase::Divergence; DOF])
            }
        };
        let input_work = stored_before.map_or(0.0, |before| storage - before);
        let command =
            arm.assemble_torque_command(&(spring + damping + extra), &state.q, &state.qd, tau_null);
        ControlStep {
            command,
            x,
            x_dot,
            x_d: *x_d,
            x_tilde,
            spring,
            damping,
            storage,
            input_work,
            phases,
        }
    }

    /// Spring energy the current phase machine assigns to error `x_tilde`.
    fn storage_at(&self, x_tilde: &Vector6<f64>) -> f64 {
        match &self.law {
            ControlLaw::Fic(g) => (0..DOF)
                .map(|i| {
                    spring_potential(&self.fic_state.dofs[i], x_tilde[i], &g.profiles[i], g.law)
                })
                .sum(),
            ControlLaw::Ic(g) => ic_storage(x_tilde, g),
        }
    }
}

/// Grasp engaged: the replica tracks the mapped master pose directly.
pub fn replica_torque_grasp(
    controller: &mut ReplicaController,
    arm: &ArmModel,
    state: &ArmState,
    x_m_replica: &Pose,
    tau_null: Option<&DVector<f64>>,
) -> ControlStep {
    controller.control(arm, state, x_m_replica, &Vector6::zeros(), tau_null)
}

/// Grasp released: regulation about `x_d` nudged by the virtual force `K_c x_M`.
pub fn replica_torque_released(
    controller: &mut ReplicaController,
    arm: &ArmModel,
    state: &ArmState,
    x_m: &Vector6<f64>,
    x_d: &Pose,
    k_c: &Vector6<f64>,
    tau_null: Option<&DVector<f64>>,
) -> ControlStep {
    let mut step = controller.control(arm, state, x_d, &Vector6::zeros(), tau_null);
    let push = k_c.component_mul(x_m);
    if push != Vector6::zeros() {
        let j = arm.jacobian(&state.q);
        step.command.tau += j.transpose() * DVector::from_column_slice(push.as_slice());
    }
    step
}

/// Non-haptic mode: pure fractal impedance regulation toward the moving set-point.
pub fn replica_torque_nonhaptic(
    controller: &mut ReplicaController,
    arm: &ArmModel,
    state: &ArmState,
    x_d: &Pose,
    tau_null: Option<&DVector<f64>>,
) -> ControlStep {
    controller.control(arm, state, x_d, &Vector6::zeros(), tau_null)
}

/// A master sample as it travels over the link.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MasterSample {
    pub x_m: Vector6<f64>,
    pub grasp: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeleopParams {
    /// Virtual-force gain `K_c` (N/m linear, N·m/rad angular).
    pub k_c_linear: f64,
    pub k_c_angular: f64,
    pub k_a: f64,
    pub scale: f64,
    pub forward: ChannelParams,
    pub feedback: ChannelParams,
}

impl Default for TeleopParams {
    fn default() -> Self {
        Self {
            k_c_linear: 200.0,
            k_c_angular: 10.0,
            k_a: 1.0,
            scale: 1.0,
            forward: ChannelParams::default(),
            feedback: ChannelParams::default(),
        }
    }
}

impl TeleopParams {
    pub fn k_c(&self) -> Vector6<f64> {
        let (l, a) = (self.k_c_linear, self.k_c_angular);
        Vector6::new(l, l, l, a, a, a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_c_linear >= 0.0 && self.k_c_angular >= 0.0 && self.k_a >= 0.0) {
            return Err(Error::Validation("teleop gains must be >= 0".into()));
        }
        if !(self.scale > 0.0) {
            return Err(Error::Validation(format!(
                "teleop scale must be > 0, got {}",
                self.scale
            )));
        }
        self.forward.validate()?;
        self.feedback.validate()
    }
}

/// What the replica is asked to do this step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReplicaMode {
    /// Grasp engaged: track the mapped master pose.
    Grasp { target: Pose },
    /// Regulate about a latched or planned set-point, nudged by the master.
    Released { x_d: Pose, x_m: Vector6<f64> },
}

/// Replica side of a teleoperation link: both channels plus the grasp bookkeeping.
#[derive(Debug, Clone)]
pub struct TeleopLink {
    pub params: TeleopParams,
    pub map: WorkspaceMap,
    forward: ChannelModel<MasterSample>,
    feedback: ChannelModel<Vector6<f64>>,
    latched: Pose,
    grasp_engaged: bool,
}

impl TeleopLink {
    pub fn new(params: TeleopParams, map: WorkspaceMap, initial: Pose, seed: u64) -> Result<Self> {
        params.validate()?;
        Ok(Self {
            params,
            map,
            forward: ChannelModel::new(params.forward, seed)?,
            feedback: ChannelModel::new(params.feedback, seed ^ 0x9e37_79b9_7f4a_7c15)?,
            latched: initial,
            grasp_engaged: false,
        })
    }

    pub fn set_channels(&mut self, forward: ChannelParams, feedback: ChannelParams) -> Result<()> {
        self.forward.set_params(forward)?;
        self.feedback.set_params(feedback)?;
        self.params.forward = forward;
        self.params.feedback = feedback;
        Ok(())
    }

    pub fn grasp_engaged(&self) -> bool {
        self.grasp_engaged
    }

    /// Latched set-point used while released.
    pub fn latched(&self) -> Pose {
        self.latched
    }

    pub fn set_latched(&mut self, pose: Pose) {
        self.latched = pose;
    }

    /// Push the master sample taken at `t` and decide the replica's mode.
    /// `x_r` is the current replica pose, latched on release.
    pub fn replica_mode(&mut self, sample: MasterSample, t: f64, x_r: &Pose) -> ReplicaMode {
        let arrived = self.forward.step(sample, t);
        let grasp = arrived.is_some_and(|s| s.grasp);
        if self.grasp_engaged && !grasp {
            self.latched = *x_r;
        }
        self.grasp_engaged = grasp;
        match arrived {
            Some(s) if s.grasp => ReplicaMode::Grasp {
                target: self.map.to_replica(&s.x_m),
            },
            Some(s) => ReplicaMode::Released {
                x_d: self.latched,
                x_m: s.x_m,
            },
            None => ReplicaMode::Released {
                x_d: self.latched,
                x_m: Vector6::zeros(),
            },
        }
    }

    /// Push the replica's sensed wrench and read what reaches the master.
    pub fn feedback(&mut self, wrench: Vector6<f64>, t: f64) -> Vector6<f64> {
        self.feedback.step(wrench, t).unwrap_or_else(Vector6::zeros)
    }
}
