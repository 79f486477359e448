//! Desk-scale re-creations of the drilling and cooperative-manipulation
//! experiments, plus the energy observer used to audit them.

pub mod audit;
pub mod carry;
pub mod contact;
pub mod drilling;
pub mod exp1;
pub mod funnel;
pub mod interactive;
pub mod payload;
pub mod tracking;

use std::collections::BTreeMap;

use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, ArmState, Pose};
use crate::error::{Error, Result};
use crate::fic::{FicGains, StiffnessProfile};
use crate::ic::IcGains;
use crate::teleop::{ControlLaw, ControlStep, ReplicaController, TeleopParams};
use crate::trace::{ArmSample, SimTrace};

pub use audit::{energy_audit, AuditConfig, EnergyReport};

/// Shared ingredients of every scenario run.
#[derive(Debug, Clone, PartialEq)]
pub struct Setup {
    pub dt: f64,
    pub seed: u64,
    /// Overrides the scenario's own run length when set.
    pub duration: Option<f64>,
    pub plant: ArmModel,
    /// Replica controller of single-law scenarios. The comparison always runs both.
    pub controller: ControllerKind,
    pub fic: FicGains,
    pub ic: IcGains,
    pub teleop: TeleopParams,
}

impl Default for Setup {
    fn default() -> Self {
        Self {
            dt: 1e-3,
            seed: 0,
            duration: None,
            plant: ArmModel::planar3(),
            controller: ControllerKind::Fic,
            fic: table_one_fic(),
            ic: IcGains::default(),
            teleop: TeleopParams::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Fic,
    Ic,
}

impl Setup {
    pub fn law(&self) -> ControlLaw {
        match self.controller {
            ControllerKind::Fic => ControlLaw::Fic(self.fic),
            ControllerKind::Ic => ControlLaw::Ic(self.ic),
        }
    }

    pub fn duration_or(&self, default: f64) -> f64 {
        self.duration.unwrap_or(default)
    }

    pub fn steps(&self, duration: f64) -> usize {
        (duration / self.dt).round() as usize
    }

    /// Replica FIC gains with the linear saturation moved to `x_b`.
    pub fn fic_with_linear_x_b(&self, x_b: f64) -> Result<FicGains> {
        let mut gains = self.fic;
        for i in 0..3 {
            let p = gains.profiles[i];
            gains.profiles[i] = StiffnessProfile::new(p.k_zeta, p.f_max, x_b)?;
        }
        Ok(gains)
    }
}

/// Replica FIC gains of the reference setup (15 N, 2 N·m saturation).
pub fn table_one_fic() -> FicGains {
    let lin = StiffnessProfile::new(100.0, 15.0, 0.05).expect("valid profile");
    let ang = StiffnessProfile::new(5.0, 2.0, 0.0873).expect("valid profile");
    FicGains::uniform(lin, ang, 2.5, 1.25)
}

/// Scenario selection plus its own settings, as stored in a run config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "snake_case")]
pub enum ScenarioConfig {
    Exp1(exp1::Exp1Config),
    Drilling(drilling::DrillingConfig),
    Exp52(funnel::FunnelConfig),
    Exp6(carry::CarryConfig),
    Exp51(carry::HoldConfig),
    Tracking(tracking::TrackingConfig),
    Sweep(tracking::SweepConfig),
    Interactive(interactive::InteractiveConfig),
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig::Exp1(Default::default())
    }
}

impl ScenarioConfig {
    pub const IDS: [&'static str; 8] = [
        "exp1",
        "drilling",
        "exp52",
        "exp6",
        "exp51",
        "tracking",
        "sweep",
        "interactive",
    ];

    /// Default settings of the scenario called `id`.
    pub fn from_id(id: &str) -> Result<Self> {
        Ok(match id {
            "exp1" => ScenarioConfig::Exp1(Default::default()),
            "drilling" => ScenarioConfig::Drilling(Default::default()),
            "exp52" => ScenarioConfig::Exp52(Default::default()),
            "exp6" => ScenarioConfig::Exp6(Default::default()),
            "exp51" => ScenarioConfig::Exp51(Default::default()),
            "tracking" => ScenarioConfig::Tracking(Default::default()),
            "sweep" => ScenarioConfig::Sweep(Default::default()),
            "interactive" => ScenarioConfig::Interactive(Default::default()),
            other => {
                return Err(Error::Validation(format!(
                    "unknown scenario '{other}', expected one of {}",
                    Self::IDS.join(", ")
                )))
            }
        })
    }

    pub fn id(&self) -> &'static str {
        match self {
            ScenarioConfig::Exp1(_) => "exp1",
            ScenarioConfig::Drilling(_) => "drilling",
            ScenarioConfig::Exp52(_) => "exp52",
            ScenarioConfig::Exp6(_) => "exp6",
            ScenarioConfig::Exp51(_) => "exp51",
            ScenarioConfig::Tracking(_) => "tracking",
            ScenarioConfig::Sweep(_) => "sweep",
            ScenarioConfig::Interactive(_) => "interactive",
        }
    }
}

/// Run a batch scenario. The interactive one only runs under the bridge,
/// so here it replays an idle session of its configured length.
pub fn run_scenario(setup: &Setup, scenario: &ScenarioConfig) -> Result<ScenarioReport> {
    Ok(match scenario {
        ScenarioConfig::Exp1(c) => exp1::run_exp1_drilling_comparison(setup, c)?.report(),
        ScenarioConfig::Drilling(c) => drilling::run_drilling_accuracy(setup, c)?.report(),
        ScenarioConfig::Exp52(c) => funnel::run_exp52_inclination_funnel(setup, c)?.report(),
        ScenarioConfig::Exp6(c) => carry::run_exp6_payload_carry(setup, c)?.report(),
        ScenarioConfig::Exp51(c) => carry::run_exp51_cooperative_hold(setup, c)?.report(),
        ScenarioConfig::Tracking(c) => tracking::run_step_tracking(setup, c)?.report(),
        ScenarioConfig::Sweep(c) => tracking::sweep_report(&tracking::run_delay_sweep(
            setup,
            &c.tracking,
            &c.delays,
            &c.rates,
        )?),
        ScenarioConfig::Interactive(c) => {
            let steps = setup.steps(setup.duration_or(c.duration)) as u64;
            let mut r = ScenarioReport::new("interactive");
            r.traces = vec![interactive::replay(setup, c, &[], steps)?];
            r
        }
    })
}

/// Outcome of a scenario: traces plus named scalar metrics and flags.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub traces: Vec<SimTrace>,
    pub metrics: BTreeMap<String, f64>,
    pub flags: Vec<String>,
}

impl ScenarioReport {
    pub fn new(scenario: &str) -> Self {
        Self {
            scenario: scenario.to_string(),
            ..Default::default()
        }
    }

    pub fn metric(&mut self, name: &str, value: f64) {
        self.metrics.insert(name.to_string(), value);
    }
}

/// One simulated arm with its replica controller.
#[derive(Debug, Clone)]
pub struct Rig {
    pub arm: ArmModel,
    pub state: ArmState,
    pub ctrl: ReplicaController,
}

impl Rig {
    /// Arm at rest with its end-effector at `pose`; `seed` picks the IK branch.
    pub fn at_pose(
        arm: ArmModel,
        pose: &Pose,
        seed: &[f64],
        law: ControlLaw,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(Error::Validation(format!("dt must be > 0, got {dt}")));
        }
        let q = arm.inverse_kinematics(pose, &DVector::from_column_slice(seed))?;
        Ok(Self {
            state: ArmState::at_rest(q),
            ctrl: ReplicaController::new(law, dt),
            arm,
        })
    }

    pub fn pose(&self) -> Pose {
        self.arm.forward_kinematics(&self.state.q)
    }

    pub fn control(&mut self, x_d: &Pose, extra: &Vector6<f64>) -> ControlStep {
        self.ctrl.control(&self.arm, &self.state, x_d, extra, None)
    }

    pub fn sample(&self, step: &ControlStep, contact: &Vector6<f64>) -> ArmSample {
        ArmSample {
            q: self.state.q.iter().cloned().collect(),
            x: to_array(&step.x.to_vector()),
            xdot: to_array(&step.x_dot),
            x_d: to_array(&step.x_d.to_vector()),
            x_tilde: to_array(&step.x_tilde),
            spring: to_array(&step.spring),
            damping: to_array(&step.damping),
            contact: to_array(contact),
            phase: step.phases.map(|p| p.flag()),
            kinetic: self.arm.kinetic_energy(&self.state),
            storage: step.storage,
            input_work: step.input_work,
        }
    }

    /// Apply the step's torque with `contact` acting on the end-effector.
    pub fn advance(&mut self, step: &ControlStep, contact: &Vector6<f64>, dt: f64) -> Result<()> {
        self.state = self.arm.step(&self.state, &step.command.tau, contact, dt)?;
        Ok(())
    }
}

pub(crate) fn to_array(v: &Vector6<f64>) -> [f64; 6] {
    [v[0], v[1], v[2], v[3], v[4], v[5]]
}

/// Mean of `values` over rows whose time falls in `[t0, t1)`.
pub fn window_mean(
    trace: &SimTrace,
    t0: f64,
    t1: f64,
    value: impl Fn(&crate::trace::TraceRow) -> f64,
) -> f64 {
    let mut sum = 0.0;
    let mut n = 0usize;
    for row in trace.rows.iter().filter(|r| r.t >= t0 && r.t < t1) {
        sum += value(row);
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}
