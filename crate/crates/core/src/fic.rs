//! Fractal impedance control.
//!
//! Each task-space degree of freedom owns a nonlinear spring. While the pose
//! error grows (divergence) the spring follows an exponential stiffening
//! profile that saturates at `f_max` beyond `x_b`. When the error turns back
//! toward zero (convergence) the stiffness is frozen to four times the energy
//! stored during the divergence divided by `x_max²`, and stays frozen until the
//! error crosses zero or starts growing again.
//!
//! ```text
//! K_d(x) = k_zeta + exp(beta x²)      |x| <= x_b
//!        = f_max / |x|                 |x| >  x_b
//! K_c    = 4 / x_max² ∫₀^x_max K_d(s) s ds
//! ```

use nalgebra::Vector6;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Task-space dimension: three linear and three angular components.
pub const DOF: usize = 6;

/// Numerical guard used by the phase machine.
pub const PHASE_EPS: f64 = 1e-9;

/// `beta` from force continuity at `x_b`: `exp(beta x_b²) = f_max/x_b - k_zeta`.
pub fn compute_beta(k_zeta: f64, f_max: f64, x_b: f64) -> Result<f64> {
    if !(f_max > 0.0 && f_max.is_finite()) {
        return Err(Error::InvalidProfile(format!(
            "f_max must be > 0, got {f_max}"
        )));
    }
    if !(x_b > 0.0 && x_b.is_finite()) {
        return Err(Error::InvalidProfile(format!("x_b must be > 0, got {x_b}")));
    }
    if !(k_zeta >= 0.0 && k_zeta.is_finite()) {
        return Err(Error::InvalidProfile(format!(
            "k_zeta must be >= 0, got {k_zeta}"
        )));
    }
    let arg = f_max / x_b - k_zeta;
    if arg <= 1.0 {
        return Err(Error::InvalidProfile(format!(
            "f_max/x_b - k_zeta must exceed 1 (got {arg}); the exponential profile would be non-monotone"
        )));
    }
    Ok(arg.ln() / (x_b * x_b))
}

/// Nonlinear spring of one degree of freedom.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StiffnessProfile {
    pub k_zeta: f64,
    pub f_max: f64,
    pub x_b: f64,
    pub beta: f64,
}

impl StiffnessProfile {
    pub fn new(k_zeta: f64, f_max: f64, x_b: f64) -> Result<Self> {
        let beta = compute_beta(k_zeta, f_max, x_b)?;
        Ok(Self {
            k_zeta,
            f_max,
            x_b,
            beta,
        })
    }

    /// Divergence stiffness `K_d(x)`.
    pub fn stiffness(&self, x: f64) -> f64 {
        let a = x.abs();
        if a <= self.x_b {
            self.k_zeta + (self.beta * a * a).exp()
        } else {
            self.f_max / a
        }
    }

    /// Signed divergence force `K_d(x)·x`.
    pub fn force(&self, x: f64) -> f64 {
        if x.abs() <= self.x_b {
            self.stiffness(x) * x
        } else {
            self.f_max.copysign(x)
        }
    }

    /// Energy stored in the divergence spring, `∫₀^|x| K_d(s) s ds`.
    pub fn energy(&self, x: f64) -> f64 {
        let a = x.abs();
        let below = a.min(self.x_b);
        let mut e = 0.5 * self.k_zeta * below * below
            + (self.beta * below * below).exp_m1() / (2.0 * self.beta);
        if a > self.x_b {
            e += self.f_max * (a - self.x_b);
        }
        e
    }

    /// Frozen convergence stiffness for a cycle that peaked at `x_max`.
    pub fn convergence_stiffness(&self, x_max: f64) -> Result<f64> {
        if !(x_max > 0.0) {
            return Err(Error::DegenerateCycle(x_max));
        }
        Ok(4.0 * self.energy(x_max) / (x_max * x_max))
    }
}

pub fn k_divergence(x_tilde: f64, profile: &StiffnessProfile) -> f64 {
    profile.stiffness(x_tilde)
}

pub fn k_convergence(x_tilde_max: f64, profile: &StiffnessProfile) -> Result<f64> {
    profile.convergence_stiffness(x_tilde_max)
}

/// How the frozen convergence stiffness is turned into a force.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConvergenceLaw {
    /// `K_c (x - sgn(x) x_max/2)`, clamped to `±f_max`. The error returns from the
    /// turning point toward zero on a spring centred half way, so an undamped
    /// axis arrives at rest at zero and the switch never adds energy.
    #[default]
    Centered,
    /// `K_c x` about zero. Releases twice the stored energy per half cycle.
    Proportional,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Phase {
    #[default]
    Divergence,
    Convergence,
}

impl Phase {
    pub fn flag(self) -> u8 {
        match self {
            Phase::Divergence => 0,
            Phase::Convergence => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct DofState {
    pub phase: Phase,
    /// Peak `|x̃|` of the cycle frozen at the last turning point.
    pub x_tilde_max: f64,
    pub k_conv: f64,
    pub x_tilde_prev: Option<f64>,
    /// Running peak `|x̃|` during the current divergence.
    pub peak: f64,
    /// Sign of the error for the frozen convergence cycle.
    pub anchor: f64,
    /// Storage offset that makes the convergence potential continuous at the switch.
    pub conv_offset: f64,
    /// The error has grown since divergence began, so a reversal is a turning point.
    #[serde(default)]
    pub armed: bool,
}

impl DofState {
    fn enter_divergence(&mut self, x: f64) {
        self.phase = Phase::Divergence;
        self.x_tilde_max = 0.0;
        self.k_conv = 0.0;
        self.anchor = 0.0;
        self.conv_offset = 0.0;
        self.peak = x.abs();
        self.armed = false;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FicState {
    pub dofs: [DofState; DOF],
}

impl FicState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }

    pub fn phases(&self) -> [Phase; DOF] {
        self.dofs.map(|d| d.phase)
    }
}

/// Pose error and its rate, linear part first.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TaskSpaceError {
    pub x_tilde: Vector6<f64>,
    pub x_tilde_dot: Vector6<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FicGains {
    pub profiles: [StiffnessProfile; DOF],
    pub damping: [f64; DOF],
    /// Minimum `|dx̃/dt|` for a turning point to count. Slower reversals
    /// (quasi-static contact, drilling feed) stay on the divergence profile.
    pub turn_rate: [f64; DOF],
    pub law: ConvergenceLaw,
}

impl FicGains {
    pub fn uniform(
        linear: StiffnessProfile,
        angular: StiffnessProfile,
        d_linear: f64,
        d_angular: f64,
    ) -> Self {
        Self {
            profiles: [linear, linear, linear, angular, angular, angular],
            damping: [
                d_linear, d_linear, d_linear, d_angular, d_angular, d_angular,
            ],
            turn_rate: [5e-3, 5e-3, 5e-3, 2e-2, 2e-2, 2e-2],
            law: ConvergenceLaw::Centered,
        }
    }

    pub fn with_turn_rate(mut self, linear: f64, angular: f64) -> Self {
        self.turn_rate = [linear, linear, linear, angular, angular, angular];
        self
    }

    pub fn with_law(mut self, law: ConvergenceLaw) -> Self {
        self.law = law;
        self
    }
}

/// Controller wrench split into its spring and damping parts.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FicOutput {
    pub spring: Vector6<f64>,
    pub damping: Vector6<f64>,
    /// Energy held by the springs after the update (J).
    pub storage: f64,
}

impl FicOutput {
    pub fn wrench(&self) -> Vector6<f64> {
        self.spring + self.damping
    }
}

/// Antiderivative of `clamp(k w, -f, f)` over `[0, |w|]`.
fn clamped_spring_energy(k: f64, f: f64, w: f64) -> f64 {
    let w = w.abs();
    if k <= 0.0 {
        return 0.0;
    }
    let knee = f / k;
    if w <= knee {
        0.5 * k * w * w
    } else {
        0.5 * k * knee * knee + f * (w - knee)
    }
}

fn convergence_force(d: &DofState, x: f64, profile: &StiffnessProfile, law: ConvergenceLaw) -> f64 {
    match law {
        ConvergenceLaw::Proportional => d.k_conv * x,
        ConvergenceLaw::Centered => {
            let w = x.abs() - 0.5 * d.x_tilde_max;
            d.anchor * (d.k_conv * w).clamp(-profile.f_max, profile.f_max)
        }
    }
}

fn convergence_potential(
    d: &DofState,
    x: f64,
    profile: &StiffnessProfile,
    law: ConvergenceLaw,
) -> f64 {
    match law {
        ConvergenceLaw::Proportional => 0.5 * d.k_conv * x * x,
        ConvergenceLaw::Centered => {
            let w = x.abs() - 0.5 * d.x_tilde_max;
            d.conv_offset + clamped_spring_energy(d.k_conv, profile.f_max, w)
        }
    }
}

/// Spring force of one axis in its current phase.
pub fn spring_force(d: &DofState, x: f64, profile: &StiffnessProfile, law: ConvergenceLaw) -> f64 {
    match d.phase {
        Phase::Divergence => profile.force(x),
        Phase::Convergence => convergence_force(d, x, profile, law),
    }
}

/// Energy held by one axis' spring in its current phase.
pub fn spring_potential(
    d: &DofState,
    x: f64,
    profile: &StiffnessProfile,
    law: ConvergenceLaw,
) -> f64 {
    match d.phase {
        Phase::Divergence => profile.energy(x),
        Phase::Convergence => convergence_potential(d, x, profile, law),
    }
}

/// Advance one axis' phase machine with the current error `x` and rate `rate`.
///
/// Divergence turns into Convergence at a turning point: the error grew and now
/// shrinks at least `turn_rate` fast. Convergence ends on a zero crossing, on
/// regrowth, or when the error stalls below half that rate.
pub fn update_phase(
    d: &DofState,
    x: f64,
    rate: f64,
    profile: &StiffnessProfile,
    turn_rate: f64,
    law: ConvergenceLaw,
) -> DofState {
    let mut next = *d;
    let s = x * rate;
    match d.phase {
        Phase::Divergence => {
            let crossed = d.x_tilde_prev.is_some_and(|p| p * x < 0.0);
            if crossed {
                next.peak = x.abs();
            } else {
                next.peak = next.peak.max(x.abs());
            }
            if s > PHASE_EPS {
                next.armed = true;
            }
            if d.armed && s < -PHASE_EPS && rate.abs() >= turn_rate && next.peak > PHASE_EPS {
                let x_max = next.peak.max(x.abs());
                // peak > 0 so this cannot fail
                let k_conv = profile.convergence_stiffness(x_max).unwrap_or(0.0);
                next.phase = Phase::Convergence;
                next.armed = false;
                next.x_tilde_max = x_max;
                next.k_conv = k_conv;
                next.anchor = 1f64.copysign(x);
                next.conv_offset = 0.0;
                if law == ConvergenceLaw::Centered {
                    let w = x.abs() - 0.5 * x_max;
                    let base = clamped_spring_energy(k_conv, profile.f_max, w);
                    next.conv_offset = (profile.energy(x) - base).max(0.0);
                }
            }
        }
        Phase::Convergence => {
            let crossed = x * d.anchor <= 0.0;
            let regrowing = s > PHASE_EPS;
            // a stalled error counts as stationary, the divergence side of the rule;
            // half the entry rate keeps the two switches apart
            let stationary = rate.abs() < 0.5 * turn_rate;
            if crossed || regrowing || stationary {
                next.enter_divergence(x);
            }
        }
    }
    next.x_tilde_prev = Some(x);
    next
}

/// Fractal impedance wrench `K(x̃)x̃ - D ẋ` and the updated phase machine.
///
/// `x_dot` is the end-effector velocity used by the damping term.
pub fn fic_wrench(
    error: &TaskSpaceError,
    x_dot: &Vector6<f64>,
    state: &FicState,
    gains: &FicGains,
) -> (FicOutput, FicState) {
    let mut next = *state;
    let mut out = FicOutput::default();
    for i in 0..DOF {
        let x = error.x_tilde[i];
        let profile = &gains.profiles[i];
        let d = update_phase(
            &state.dofs[i],
            x,
            error.x_tilde_dot[i],
            profile,
            gains.turn_rate[i],
            gains.law,
        );
        out.spring[i] = spring_force(&d, x, profile, gains.law);
        out.damping[i] = -gains.damping[i] * x_dot[i];
        out.storage += spring_potential(&d, x, profile, gains.law);
        next.dofs[i] = d;
    }
    (out, next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn replica() -> StiffnessProfile {
        StiffnessProfile::new(100.0, 15.0, 0.05).unwrap()
    }

    #[test]
    fn beta_from_continuity() {
        let beta = compute_beta(100.0, 15.0, 0.05).unwrap();
        assert_relative_eq!(beta, 200f64.ln() / 0.0025, max_relative = 1e-15);
        assert!((beta - 2119.3).abs() < 0.1);
        let p = replica();
        let inside = (p.k_zeta + (p.beta * 0.0025f64).exp()) * 0.05;
        assert_relative_eq!(inside, 15.0, max_relative = 1e-12);
    }

    #[test]
    fn beta_unit_case() {
        let beta = compute_beta(0.0, std::f64::consts::E, 1.0).unwrap();
        assert_relative_eq!(beta, 1.0, max_relative = 1e-15);
    }

    #[test]
    fn beta_rejects_flat_profile() {
        assert!(matches!(
            compute_beta(100.0, 5.0, 0.05),
            Err(Error::InvalidProfile(_))
        ));
        assert!(compute_beta(0.0, 1.0, 0.0).is_err());
        assert!(compute_beta(-1.0, 15.0, 0.05).is_err());
        assert!(compute_beta(0.0, -1.0, 0.05).is_err());
    }

    #[test]
    fn divergence_stiffness_examples() {
        let p = replica();
        assert_eq!(k_divergence(0.0, &p), 101.0);
        assert_relative_eq!(k_divergence(0.1, &p), 150.0, max_relative = 1e-15);
        assert_eq!(p.force(0.1), 15.0);
        assert_eq!(p.force(-0.2), -15.0);
        let below = p.force(0.05 - 1e-12);
        let above = p.force(0.05 + 1e-12);
        assert_relative_eq!(below, 15.0, max_relative = 1e-6);
        assert_relative_eq!(above, 15.0, max_relative = 1e-6);
    }

    #[test]
    fn convergence_stiffness_examples() {
        let p = replica();
        let k = k_convergence(0.1, &p).unwrap();
        let e = 0.125 + 199.0 / (2.0 * p.beta) + 15.0 * 0.05;
        assert_relative_eq!(k, 400.0 * e, max_relative = 1e-12);
        assert!((k - 368.8).abs() < 0.05, "{k}");
        assert_relative_eq!(k_convergence(1e-6, &p).unwrap(), 202.0, max_relative = 1e-6);
        assert!(matches!(
            k_convergence(0.0, &p),
            Err(Error::DegenerateCycle(_))
        ));
        assert!(k_convergence(-0.1, &p).is_err());
    }

    #[test]
    fn convergence_at_saturation_without_constant_term() {
        let p = StiffnessProfile::new(0.0, 15.0, 0.05).unwrap();
        let xb2 = 0.05 * 0.05;
        let expected = 2.0 / (p.beta * xb2) * ((p.beta * xb2).exp() - 1.0);
        assert_relative_eq!(
            k_convergence(0.05, &p).unwrap(),
            expected,
            max_relative = 1e-12
        );
    }

    #[test]
    fn zero_error_gives_zero_wrench() {
        let gains = FicGains::uniform(
            replica(),
            StiffnessProfile::new(5.0, 2.0, 0.0873).unwrap(),
            2.5,
            1.25,
        );
        let (out, _) = fic_wrench(
            &TaskSpaceError::default(),
            &Vector6::zeros(),
            &FicState::default(),
            &gains,
        );
        assert_eq!(out.wrench(), Vector6::zeros());
        assert_eq!(out.storage, 0.0);
    }

    #[test]
    fn saturated_axis_puts_out_f_max() {
        let gains = FicGains::uniform(
            replica(),
            StiffnessProfile::new(5.0, 2.0, 0.0873).unwrap(),
            2.5,
            1.25,
        );
        let mut err = TaskSpaceError::default();
        err.x_tilde[1] = 0.2;
        let (out, next) = fic_wrench(&err, &Vector6::zeros(), &FicState::default(), &gains);
        assert_eq!(out.spring[1], 15.0);
        assert_eq!(next.dofs[1].phase, Phase::Divergence);
    }

    fn ramp_cycle(law: ConvergenceLaw) -> Vec<(f64, f64, Phase)> {
        let p = replica();
        let ang = StiffnessProfile::new(5.0, 2.0, 0.0873).unwrap();
        let gains = FicGains::uniform(p, ang, 0.0, 0.0).with_law(law);
        let dt = 1e-3;
        let rate = 0.1;
        let mut state = FicState::default();
        let mut out = Vec::new();
        for k in 0..=2000 {
            let t = k as f64 * dt;
            let (x, r) = if k <= 1000 {
                (rate * t, rate)
            } else {
                (0.2 - rate * t, -rate)
            };
            let mut err = TaskSpaceError::default();
            err.x_tilde[0] = x;
            err.x_tilde_dot[0] = r;
            let (o, next) = fic_wrench(&err, &Vector6::zeros(), &state, &gains);
            state = next;
            out.push((x, o.spring[0], state.dofs[0].phase));
        }
        out
    }

    #[test]
    fn proportional_cycle_follows_frozen_line_back() {
        let p = replica();
        let k_conv = k_convergence(0.1, &p).unwrap();
        for (x, f, phase) in ramp_cycle(ConvergenceLaw::Proportional) {
            if phase == Phase::Convergence {
                assert_relative_eq!(f, k_conv * x, max_relative = 1e-9);
            } else {
                assert_relative_eq!(f, p.force(x), max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn centered_cycle_is_bounded_and_centred() {
        let p = replica();
        let k_conv = k_convergence(0.1, &p).unwrap();
        let mut saw_conv = false;
        for (x, f, phase) in ramp_cycle(ConvergenceLaw::Centered) {
            assert!(f.abs() <= p.f_max + 1e-12);
            if phase == Phase::Convergence && x > 1e-9 {
                saw_conv = true;
                let expected = (k_conv * (x - 0.05)).clamp(-15.0, 15.0);
                assert_relative_eq!(f, expected, epsilon = 1e-9);
            }
        }
        assert!(saw_conv);
    }

    #[test]
    fn slow_reversal_stays_on_divergence_curve() {
        let p = replica();
        let gains = FicGains::uniform(p, p, 0.0, 0.0);
        let mut state = FicState::default();
        for k in 0..100 {
            let mut err = TaskSpaceError::default();
            err.x_tilde[0] = 0.03 - 1e-5 * k as f64;
            err.x_tilde_dot[0] = -1e-3;
            let (o, next) = fic_wrench(&err, &Vector6::zeros(), &state, &gains);
            state = next;
            assert_eq!(state.dofs[0].phase, Phase::Divergence);
            assert_eq!(o.spring[0], p.force(err.x_tilde[0]));
        }
    }

    #[test]
    fn each_turning_point_refreezes() {
        let p = replica();
        let g = FicGains::uniform(p, p, 0.0, 0.0);
        let mut d = DofState::default();
        for (x, r) in [(0.02, 1.0), (0.03, 1.0), (0.029, -1.0)] {
            d = update_phase(&d, x, r, &p, g.turn_rate[0], g.law);
        }
        assert_eq!(d.phase, Phase::Convergence);
        assert_eq!(d.x_tilde_max, 0.03);
        // crosses zero, new cycle on the other side
        for (x, r) in [(-0.001, -1.0), (-0.01, -1.0), (-0.009, 1.0)] {
            d = update_phase(&d, x, r, &p, g.turn_rate[0], g.law);
        }
        assert_eq!(d.phase, Phase::Convergence);
        assert_eq!(d.x_tilde_max, 0.01);
        assert_relative_eq!(d.k_conv, k_convergence(0.01, &p).unwrap());
    }

    #[test]
    fn shrinking_without_prior_growth_is_no_turning_point() {
        let p = replica();
        let g = FicGains::uniform(p, p, 0.0, 0.0);
        let mut d = DofState::default();
        for k in 0..10 {
            d = update_phase(&d, 0.08 - 0.001 * k as f64, -1.0, &p, g.turn_rate[0], g.law);
            assert_eq!(d.phase, Phase::Divergence);
        }
    }

    #[test]
    fn stall_in_convergence_returns_to_divergence() {
        let p = replica();
        let g = FicGains::uniform(p, p, 0.0, 0.0);
        let mut d = DofState::default();
        for (x, r) in [(0.02, 1.0), (0.03, 1.0), (0.029, -1.0), (0.028, -1.0)] {
            d = update_phase(&d, x, r, &p, g.turn_rate[0], g.law);
        }
        assert_eq!(d.phase, Phase::Convergence);
        d = update_phase(&d, 0.028, -0.4 * g.turn_rate[0], &p, g.turn_rate[0], g.law);
        assert_eq!(d.phase, Phase::Divergence);
        assert_eq!(d.x_tilde_max, 0.0);
    }

    #[test]
    fn conv_storage_continuous_at_switch() {
        let p = replica();
        let g = FicGains::uniform(p, p, 0.0, 0.0);
        let mut d = DofState::default();
        for (x, r) in [(0.07, 1.0), (0.08, 1.0)] {
            d = update_phase(&d, x, r, &p, g.turn_rate[0], g.law);
        }
        let before = spring_potential(&d, 0.0799, &p, g.law);
        d = update_phase(&d, 0.0799, -1.0, &p, g.turn_rate[0], g.law);
        let after = spring_potential(&d, 0.0799, &p, g.law);
        assert_eq!(d.phase, Phase::Convergence);
        assert_relative_eq!(before, after, max_relative = 1e-12);
    }
}
