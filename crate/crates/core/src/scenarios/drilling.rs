//! Teleoperated drilling of a row of holes with operator tremor.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::contact::{ContactModel, ContactState};
use super::{Rig, ScenarioReport, Setup};
use crate::arm::Pose;
use crate::error::Result;
use crate::teleop::{MasterSample, ReplicaMode, TeleopLink, ViaPointPlan, WorkspaceMap};
use crate::trace::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Wood,
    Pla,
    Cardboard,
}

impl Material {
    pub const ALL: [Material; 3] = [Material::Wood, Material::Pla, Material::Cardboard];

    pub fn name(self) -> &'static str {
        match self {
            Material::Wood => "wood",
            Material::Pla => "pla",
            Material::Cardboard => "cardboard",
        }
    }

    /// Surface stiffness, yield threshold, yield rate and hole-wall lateral stiffness.
    pub fn properties(self) -> MaterialProperties {
        match self {
            Material::Wood => MaterialProperties {
                k_wall: 2e4,
                threshold: 6.0,
                yield_rate: 6e-5,
                lateral_stiffness: 4e3,
            },
            Material::Pla => MaterialProperties {
                k_wall: 3e4,
                threshold: 8.0,
                yield_rate: 4e-5,
                lateral_stiffness: 6e3,
            },
            Material::Cardboard => MaterialProperties {
                k_wall: 3e3,
                threshold: 3.0,
                yield_rate: 4e-4,
                lateral_stiffness: 2e2,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaterialProperties {
    pub k_wall: f64,
    pub threshold: f64,
    pub yield_rate: f64,
    pub lateral_stiffness: f64,
}

/// Band-limited operator tremor: a seeded sum of sinusoids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tremor {
    components: Vec<(f64, f64, f64)>,
}

impl Tremor {
    /// `amplitude` is the RMS displacement (m) spread over `n` components in `band` (Hz).
    pub fn new(amplitude: f64, band: [f64; 2], n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = if n == 0 {
            0.0
        } else {
            amplitude * (2.0 / n as f64).sqrt()
        };
        let components = (0..n)
            .map(|_| {
                let f = rng.random_range(band[0]..=band[1]);
                let phase = rng.random_range(0.0..TAU);
                (a, f, phase)
            })
            .collect();
        Self { components }
    }

    pub fn none() -> Self {
        Self {
            components: Vec::new(),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        self.components
            .iter()
            .map(|(a, f, ph)| a * (TAU * f * t + ph).sin())
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DrillingConfig {
    pub material: Material,
    pub holes: usize,
    /// x of the first hole and spacing between holes (m).
    pub first_hole: f64,
    pub spacing: f64,
    /// Commanded push past the surface (m).
    pub overshoot: f64,
    pub approach_time: f64,
    pub drill_time: f64,
    pub retract_time: f64,
    /// RMS lateral tremor (m); zero disables it.
    pub tremor_rms: f64,
    pub tremor_band: [f64; 2],
    pub tremor_components: usize,
    /// Yield time skipped before lateral statistics are taken, so the impact transient at first touch is excluded (s).
    pub engagement_settle: f64,
    /// Replaces the material's built-in surface values when set.
    pub properties: Option<MaterialProperties>,
}

impl Default for DrillingConfig {
    fn default() -> Self {
        Self {
            material: Material::Wood,
            holes: 5,
            first_hole: 0.36,
            spacing: 0.02,
            overshoot: 0.06,
            approach_time: 3.0,
            drill_time: 4.0,
            retract_time: 1.0,
            tremor_rms: 1e-3,
            tremor_band: [4.0, 12.0],
            tremor_components: 6,
            engagement_settle: 0.25,
            properties: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HoleResult {
    pub target: f64,
    /// Mean lateral tool position while the material yielded, after the engagement settle (m).
    pub center: f64,
    pub error: f64,
    /// Lateral max minus min while yielding, after the engagement settle (m).
    pub excursion: f64,
    /// RMS lateral deviation from `center` over the same samples (m).
    pub wobble: f64,
    pub removed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DrillingOutcome {
    pub material: Material,
    pub holes: Vec<HoleResult>,
    pub traces: Vec<SimTrace>,
}

impl DrillingOutcome {
    pub fn mean_error(&self) -> f64 {
        self.holes.iter().map(|h| h.error).sum::<f64>() / self.holes.len().max(1) as f64
    }

    pub fn max_excursion(&self) -> f64 {
        self.holes.iter().map(|h| h.excursion).fold(0.0, f64::max)
    }

    pub fn mean_wobble(&self) -> f64 {
        self.holes.iter().map(|h| h.wobble).sum::<f64>() / self.holes.len().max(1) as f64
    }

    pub fn report(&self) -> ScenarioReport {
        let mut r = ScenarioReport::new("drilling");
        r.metric("mean_error", self.mean_error());
        r.metric("max_excursion", self.max_excursion());
        r.metric("mean_wobble", self.mean_wobble());
        for (i, h) in self.holes.iter().enumerate() {
            r.metric(&format!("hole{i}_error"), h.error);
            r.metric(&format!("hole{i}_excursion"), h.excursion);
        }
        r.traces = self.traces.clone();
        r
    }
}

pub const AUX: [&str; 4] = ["normal_force", "removed", "yielding", "tremor"];

fn drill_hole(setup: &Setup, cfg: &DrillingConfig, index: usize) -> Result<(HoleResult, SimTrace)> {
    let dt = setup.dt;
    let props = cfg.properties.unwrap_or_else(|| cfg.material.properties());
    let target_x = cfg.first_hole + cfg.spacing * index as f64;
    let above = Pose::planar(target_x, 0.03, -FRAC_PI_2);
    let contact = ContactModel::new(
        Vector3::zeros(),
        Vector3::y(),
        props.k_wall,
        props.threshold,
        props.yield_rate,
    )?
    .with_lateral_stiffness(props.lateral_stiffness);
    let mut cs = ContactState::default();
    let mut rig = Rig::at_pose(
        setup.plant.clone(),
        &above,
        &[0.5, -1.0, -1.0],
        setup.law(),
        dt,
    )?;

    // operator path in replica coordinates, mapped back into master deflections
    let map = WorkspaceMap::new(Pose::planar(target_x, 0.0, -FRAC_PI_2), setup.teleop.scale)?;
    let bottom = above.shifted(Vector3::new(0.0, -(0.03 + cfg.overshoot), 0.0));
    let plan = ViaPointPlan::new(above)
        .then(bottom, cfg.approach_time)?
        .then(bottom, cfg.drill_time)?
        .then(above, cfg.retract_time)?;
    let seed = setup
        .seed
        .wrapping_mul(1_000_003)
        .wrapping_add(index as u64);
    let tremor = if cfg.tremor_rms > 0.0 {
        Tremor::new(cfg.tremor_rms, cfg.tremor_band, cfg.tremor_components, seed)
    } else {
        Tremor::none()
    };
    let mut link = TeleopLink::new(setup.teleop, map, above, seed)?;

    let label = format!("drilling_{}_hole{index}", cfg.material.name());
    let mut trace = SimTrace::new(label, dt, vec![rig.arm.dof()], &AUX);
    let mut lateral = Vec::new();
    let mut first_yield: Option<f64> = None;
    for k in 0..setup.steps(plan.duration()) {
        let t = k as f64 * dt;
        let shake = tremor.at(t);
        let operator = plan.sample(t).shifted(Vector3::new(shake, 0.0, 0.0));
        let sample = MasterSample {
            x_m: map.to_master(&operator),
            grasp: true,
        };
        let x_r = rig.pose();
        let x_d = match link.replica_mode(sample, t, &x_r) {
            ReplicaMode::Grasp { target } => target,
            ReplicaMode::Released { x_d, .. } => x_d,
        };
        let step = rig.control(&x_d, &Vector6::zeros());
        let p = step.x.position;
        let w = contact.wrench(&cs, &p);
        let f_n = w.fixed_rows::<3>(0).dot(&contact.normal);
        link.feedback(w, t);
        trace.push(
            vec![rig.sample(&step, &w)],
            vec![
                f_n,
                cs.removed,
                if f_n > props.threshold { 1.0 } else { 0.0 },
                shake,
            ],
        );
        contact.advance(&mut cs, &p, f_n, dt);
        if cs.yielding {
            let t0 = *first_yield.get_or_insert(t);
            if t >= t0 + cfg.engagement_settle {
                lateral.push(p.x);
            }
        }
        rig.advance(&step, &w, dt)?;
    }
    let (center, excursion, wobble) = if lateral.is_empty() {
        (f64::NAN, 0.0, 0.0)
    } else {
        let n = lateral.len() as f64;
        let mean = lateral.iter().sum::<f64>() / n;
        let lo = lateral.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = lateral.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let rms = (lateral.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        (mean, hi - lo, rms)
    };
    let hole = HoleResult {
        target: target_x,
        center,
        error: (center - target_x).abs(),
        excursion,
        wobble,
        removed: cs.removed,
    };
    Ok((hole, trace))
}

pub fn run_drilling_accuracy(setup: &Setup, cfg: &DrillingConfig) -> Result<DrillingOutcome> {
    let mut holes = Vec::with_capacity(cfg.holes);
    let mut traces = Vec::with_capacity(cfg.holes);
    for i in 0..cfg.holes {
        let (h, tr) = drill_hole(setup, cfg, i)?;
        holes.push(h);
        traces.push(tr);
    }
    Ok(DrillingOutcome {
        material: cfg.material,
        holes,
        traces,
    })
}
