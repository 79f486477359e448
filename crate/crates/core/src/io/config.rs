//! Run configuration: one TOML document fully describes a batch run.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::arm::ArmModel;
use crate::error::{Error, Result};
use crate::fic::{ConvergenceLaw, FicGains, StiffnessProfile};
use crate::ic::IcGains;
use crate::scenarios::{ControllerKind, ScenarioConfig, Setup};
use crate::teleop::{ChannelParams, TeleopParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlantKind {
    /// The three-link desk arm.
    #[default]
    Planar3,
    /// A planar chain built from `lengths` and `masses`.
    Planar,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlantConfig {
    pub kind: PlantKind,
    pub lengths: Vec<f64>,
    pub masses: Vec<f64>,
    pub gravity: f64,
}

impl Default for PlantConfig {
    fn default() -> Self {
        Self {
            kind: PlantKind::Planar3,
            lengths: vec![0.3, 0.3, 0.2],
            masses: vec![1.5, 1.0, 0.5],
            gravity: 9.81,
        }
    }
}

impl PlantConfig {
    pub fn build(&self) -> Result<ArmModel> {
        let arm = match self.kind {
            PlantKind::Planar3 => ArmModel::planar3(),
            PlantKind::Planar => ArmModel::planar(&self.lengths, &self.masses, self.gravity)?,
        };
        // every scenario seeds its inverse kinematics with three joints
        if arm.dof() != 3 {
            return Err(Error::Validation(format!(
                "scenarios need a three-joint plant, got {} joints",
                arm.dof()
            )));
        }
        Ok(arm)
    }
}

macro_rules! axis_group {
    ($name:ident, $k:expr, $f:expr, $xb:expr, $d:expr, $turn:expr) => {
        /// Saturating spring and damping shared by one group of axes.
        #[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            pub k_zeta: f64,
            pub f_max: f64,
            pub x_b: f64,
            pub damping: f64,
            /// Error rate that counts as a turning point.
            pub turn_rate: f64,
        }

        impl Default for $name {
            fn default() -> Self {
                Self {
                    k_zeta: $k,
                    f_max: $f,
                    x_b: $xb,
                    damping: $d,
                    turn_rate: $turn,
                }
            }
        }

        impl $name {
            pub fn profile(&self) -> Result<StiffnessProfile> {
                StiffnessProfile::new(self.k_zeta, self.f_max, self.x_b)
            }
        }
    };
}

axis_group!(LinearAxes, 100.0, 15.0, 0.05, 2.5, 5e-3);
axis_group!(AngularAxes, 5.0, 2.0, 0.0873, 1.25, 2e-2);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IcConfig {
    pub k_linear: f64,
    pub k_angular: f64,
    pub d_linear: f64,
    pub d_angular: f64,
}

impl Default for IcConfig {
    fn default() -> Self {
        Self {
            k_linear: 100.0,
            k_angular: 5.0,
            d_linear: 20.0,
            d_angular: 1.25,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ControllerConfig {
    pub law: ControllerKind,
    pub convergence: ConvergenceLaw,
    pub linear: LinearAxes,
    pub angular: AngularAxes,
    pub ic: IcConfig,
}

impl ControllerConfig {
    pub fn fic_gains(&self) -> Result<FicGains> {
        let (lin, ang) = (&self.linear, &self.angular);
        for (group, d, turn) in [
            ("linear", lin.damping, lin.turn_rate),
            ("angular", ang.damping, ang.turn_rate),
        ] {
            if !(d >= 0.0) || !(turn > 0.0) {
                return Err(Error::Validation(format!(
                    "{group} damping must be >= 0 and turn_rate > 0 (got {d}, {turn})"
                )));
            }
        }
        let lin_p = lin
            .profile()
            .map_err(|e| Error::Validation(format!("controller.linear: {e}")))?;
        let ang_p = ang
            .profile()
            .map_err(|e| Error::Validation(format!("controller.angular: {e}")))?;
        Ok(FicGains::uniform(lin_p, ang_p, lin.damping, ang.damping)
            .with_turn_rate(lin.turn_rate, ang.turn_rate)
            .with_law(self.convergence))
    }

    pub fn ic_gains(&self) -> Result<IcGains> {
        let c = &self.ic;
        IcGains::uniform(c.k_linear, c.k_angular, c.d_linear, c.d_angular)
            .map_err(|e| Error::Validation(format!("controller.ic: {e}")))
    }
}

/// Teleoperation gains; the channel settings live in their own section.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LinkConfig {
    pub k_c_linear: f64,
    pub k_c_angular: f64,
    pub k_a: f64,
    pub scale: f64,
}

impl Default for LinkConfig {
    fn default() -> Self {
        let p = TeleopParams::default();
        Self {
            k_c_linear: p.k_c_linear,
            k_c_angular: p.k_c_angular,
            k_a: p.k_a,
            scale: p.scale,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub dt: f64,
    /// Overrides the scenario's own length.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub teleop: LinkConfig,
    /// Applied to both link directions.
    pub channel: ChannelParams,
    pub scenario: ScenarioConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            dt: 1e-3,
            duration: None,
            plant: PlantConfig::default(),
            controller: ControllerConfig::default(),
            teleop: LinkConfig::default(),
            channel: ChannelParams::default(),
            scenario: ScenarioConfig::default(),
        }
    }
}

impl RunConfig {
    /// Parse and validate. Omitted fields take their defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::ConfigParse(format!("cannot encode config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.setup().map(|_| ())
    }

    pub fn teleop_params(&self) -> Result<TeleopParams> {
        let l = &self.teleop;
        let params = TeleopParams {
            k_c_linear: l.k_c_linear,
            k_c_angular: l.k_c_angular,
            k_a: l.k_a,
            scale: l.scale,
            forward: self.channel,
            feedback: self.channel,
        };
        params.validate()?;
        Ok(params)
    }

    /// Everything a scenario needs, checked.
    pub fn setup(&self) -> Result<Setup> {
        if !(self.dt > 0.0 && self.dt <= 0.01) {
            return Err(Error::Validation(format!(
                "dt must be in (0, 0.01] s, got {}",
                self.dt
            )));
        }
        if let Some(d) = self.duration {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::Validation(format!("duration must be > 0, got {d}")));
            }
        }
        Ok(Setup {
            dt: self.dt,
            seed: self.seed,
            duration: self.duration,
            plant: self.plant.build()?,
            controller: self.controller.law,
            fic: self.controller.fic_gains()?,
            ic: self.controller.ic_gains()?,
            teleop: self.teleop_params()?,
        })
    }

    /// SHA-256 of the canonical JSON encoding, stored next to every trace.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config always encodes");
        hex::encode(Sha256::digest(&json))
    }
}

pub fn load_config(path: impl AsRef<Path>) -> Result<RunConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    RunConfig::from_toml(&text).map_err(|e| match e {
        Error::ConfigParse(msg) => Error::ConfigParse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn save_config(cfg: &RunConfig, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, cfg.to_toml()?)?;
    Ok(())
}
