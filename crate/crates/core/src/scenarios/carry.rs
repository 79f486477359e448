//! Two arms carrying one work-piece under independent FIC controllers that
//! share only synchronised via-point plans.

use std::f64::consts::PI;

use nalgebra::{Isometry3, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::payload::PayloadModel;
use super::{Rig, ScenarioReport, Setup};
use crate::arm::{ArmModel, Pose};
use crate::error::{Error, Result};
use crate::teleop::{ControlStep, ViaPointPlan};
use crate::trace::SimTrace;

/// Per-arm plans with shared segment boundary times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DualArmPlan {
    pub left: ViaPointPlan,
    pub right: ViaPointPlan,
}

impl DualArmPlan {
    pub fn new(left: ViaPointPlan, right: ViaPointPlan) -> Result<Self> {
        if left.boundary_times() != right.boundary_times() {
            return Err(Error::Validation(
                "dual-arm plans must share segment boundary times".into(),
            ));
        }
        Ok(Self { left, right })
    }

    /// Both arms' grips around a piece centre following `center`.
    pub fn around(center: &ViaPointPlan, half_width: f64) -> Result<Self> {
        let grip = |c: &Pose, side: f64| {
            let yaw = if side < 0.0 { 0.0 } else { PI };
            Pose::planar(c.position.x + side * half_width, c.position.y, yaw)
        };
        let side_plan = |side: f64| -> Result<ViaPointPlan> {
            let mut plan = ViaPointPlan::new(grip(&center.start, side));
            for (p, d) in &center.segments {
                plan.push(grip(p, side), *d)?;
            }
            Ok(plan)
        };
        Self::new(side_plan(-1.0)?, side_plan(1.0)?)
    }

    pub fn duration(&self) -> f64 {
        self.left.duration()
    }

    pub fn sample(&self, t: f64) -> [Pose; 2] {
        [self.left.sample(t), self.right.sample(t)]
    }
}

/// Everything shared by the dual-arm scenarios.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConfig {
    /// Arm bases sit at `(±base_offset, 0)`; the right one faces the left.
    pub base_offset: f64,
    /// Half the grip-to-grip width of the piece (m).
    pub half_width: f64,
}

impl Default for CellConfig {
    fn default() -> Self {
        Self {
            base_offset: 0.45,
            half_width: 0.1,
        }
    }
}

/// Two arms plus the piece they hold.
struct Cell {
    rigs: [Rig; 2],
    piece: PayloadModel,
}

pub const AUX: [&str; 8] = [
    "piece_x",
    "piece_y",
    "piece_mass",
    "grip0_x",
    "grip0_y",
    "grip1_x",
    "grip1_y",
    "piece_energy",
];

impl Cell {
    fn new(setup: &Setup, cell: &CellConfig, first: &[Pose; 2], mass: f64) -> Result<Self> {
        let law = setup.law();
        let left = setup.plant.clone().with_base(Isometry3::from_parts(
            Translation3::new(-cell.base_offset, 0.0, 0.0),
            UnitQuaternion::identity(),
        ));
        let right = setup.plant.clone().with_base(Isometry3::from_parts(
            Translation3::new(cell.base_offset, 0.0, 0.0),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), PI),
        ));
        let rigs = [
            Rig::at_pose(left, &first[0], &elbow_up(&setup.plant, 1.0), law, setup.dt)?,
            Rig::at_pose(
                right,
                &first[1],
                &elbow_up(&setup.plant, -1.0),
                law,
                setup.dt,
            )?,
        ];
        let ees = rigs.each_ref().map(|r| r.pose().position);
        let mut piece = PayloadModel::new(mass, (ees[0] + ees[1]) * 0.5, 2, setup.plant.gravity)?;
        piece.grasp(0, &ees[0]);
        piece.grasp(1, &ees[1]);
        Ok(Self { rigs, piece })
    }

    fn grips(&self) -> [Vector3<f64>; 2] {
        self.rigs.each_ref().map(|r| r.pose().position)
    }

    /// Force the piece applies to each end-effector, as wrenches.
    fn grip_wrenches(&self) -> [Vector6<f64>; 2] {
        let f = self.piece.arm_forces(&self.grips());
        [0, 1].map(|i| Vector6::new(f[i].x, f[i].y, f[i].z, 0.0, 0.0, 0.0))
    }

    /// Kinetic, attachment-spring and gravity energy of the piece (J).
    fn piece_energy(&self) -> f64 {
        let p = &self.piece;
        let spring: f64 = p
            .arm_forces(&self.grips())
            .iter()
            .map(|f| 0.5 * f.norm_squared() / p.k_attach)
            .sum();
        0.5 * p.mass * p.velocity.norm_squared() + spring - p.mass * p.gravity.dot(&p.position)
    }

    /// Controls both arms toward `targets`, logs the row, then advances everything.
    fn tick(
        &mut self,
        trace: &mut SimTrace,
        targets: &[Pose; 2],
        external: &Vector3<f64>,
        dt: f64,
    ) -> Result<[ControlStep; 2]> {
        let zero = Vector6::zeros();
        let steps = [
            self.rigs[0].control(&targets[0], &zero),
            self.rigs[1].control(&targets[1], &zero),
        ];
        let w = self.grip_wrenches();
        let p = &self.piece;
        trace.push(
            vec![
                self.rigs[0].sample(&steps[0], &w[0]),
                self.rigs[1].sample(&steps[1], &w[1]),
            ],
            vec![
                p.position.x,
                p.position.y,
                p.mass,
                w[0][0],
                w[0][1],
                w[1][0],
                w[1][1],
                self.piece_energy(),
            ],
        );
        for i in 0..2 {
            self.rigs[i].advance(&steps[i], &w[i], dt)?;
        }
        // the piece sees where the grips end the step, so a moving grasp drags no lag force
        self.piece.step(&self.grips(), external, dt);
        Ok(steps)
    }
}

/// IK seed for a grip with the forearm raised above the piece.
fn elbow_up(arm: &ArmModel, side: f64) -> Vec<f64> {
    let mut q = vec![0.0; arm.dof()];
    if let Some(first) = q.first_mut() {
        *first = side * 1.2;
    }
    if q.len() > 1 {
        q[1] = -side * 1.6;
    }
    q
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CarryConfig {
    pub cell: CellConfig,
    /// Numbered piece-centre via-points (x, y); number `k` is entry `k - 1`.
    pub via_points: Vec<[f64; 2]>,
    /// Visiting order, by via-point number; the first entry is the start.
    pub sequence: Vec<usize>,
    pub segment_time: f64,
    /// Via-point where material is loaded into the piece, on first arrival.
    pub load_at: usize,
    pub load_mass: f64,
    /// Wait at the loading via-point before moving on (s).
    pub dwell: f64,
    /// Closing part of the dwell used for the steady-state error (s).
    pub window: f64,
    /// Vertical error at which the run is stopped (m).
    pub abort_error: f64,
}

impl Default for CarryConfig {
    fn default() -> Self {
        Self {
            cell: CellConfig::default(),
            via_points: vec![
                [0.0, 0.40],
                [0.0, 0.35],
                [0.0, 0.30],
                [0.05, 0.30],
                [0.05, 0.25],
                [0.0, 0.25],
            ],
            sequence: vec![1, 3, 6, 3, 1],
            segment_time: 5.0,
            load_at: 6,
            load_mass: 2.0,
            dwell: 10.0,
            window: 2.0,
            abort_error: 0.15,
        }
    }
}

impl CarryConfig {
    fn via(&self, number: usize) -> Result<Pose> {
        let v = number
            .checked_sub(1)
            .and_then(|i| self.via_points.get(i))
            .ok_or_else(|| Error::Validation(format!("via-point {number} is not defined")))?;
        Ok(Pose::planar(v[0], v[1], 0.0))
    }

    /// Piece-centre plan with the loading dwell inserted, and the load time.
    pub fn center_plan(&self) -> Result<(ViaPointPlan, Option<f64>)> {
        let (&first, rest) = self
            .sequence
            .split_first()
            .ok_or_else(|| Error::Validation("via-point sequence is empty".into()))?;
        let mut plan = ViaPointPlan::new(self.via(first)?);
        let mut load_time = None;
        for &n in rest {
            plan.push(self.via(n)?, self.segment_time)?;
            if n == self.load_at && load_time.is_none() {
                load_time = Some(plan.duration());
                if self.dwell > 0.0 {
                    plan.push(self.via(n)?, self.dwell)?;
                }
            }
        }
        Ok((plan, load_time))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CarryOutcome {
    pub trace: SimTrace,
    pub load_time: Option<f64>,
    /// Mean vertical error of each arm over the closing dwell window, or at
    /// the stop for an aborted run (m).
    pub steady_error: [f64; 2],
    /// Largest linear tracking error of either arm before loading (m).
    pub max_error_unloaded: f64,
    /// Largest linear tracking error over the whole run (m).
    pub max_error: f64,
    pub saturation_error: f64,
    /// The steady error passed the saturation error: the load exceeds the controller.
    pub flagged: bool,
    pub aborted: bool,
}

impl CarryOutcome {
    pub fn report(&self) -> ScenarioReport {
        let mut r = ScenarioReport::new("exp6");
        r.metric("steady_error_left", self.steady_error[0]);
        r.metric("steady_error_right", self.steady_error[1]);
        r.metric("max_error_unloaded", self.max_error_unloaded);
        r.metric("max_error", self.max_error);
        if self.flagged {
            let e = self.steady_error[0].abs().max(self.steady_error[1].abs());
            r.flags.push(format!(
                "vertical error {e:.4} m passed x_b = {:.4} m: load exceeds the controller",
                self.saturation_error
            ));
        }
        if self.aborted {
            r.flags.push("run stopped at the abort error".into());
        }
        r.traces = vec![self.trace.clone()];
        r
    }
}

fn linear_error(step: &ControlStep) -> f64 {
    step.x_tilde.fixed_rows::<3>(0).norm()
}

pub fn run_exp6_payload_carry(setup: &Setup, cfg: &CarryConfig) -> Result<CarryOutcome> {
    let dt = setup.dt;
    let (center, load_time) = cfg.center_plan()?;
    let plan = DualArmPlan::around(&center, cfg.cell.half_width)?;
    let mut cell = Cell::new(setup, &cfg.cell, &plan.sample(0.0), 0.0)?;
    let x_b = setup.fic.profiles[1].x_b;

    let mut trace = SimTrace::new("exp6_carry", dt, vec![setup.plant.dof(); 2], &AUX);
    let duration = setup.duration_or(plan.duration());
    let (mut max_unloaded, mut max_error) = (0.0f64, 0.0f64);
    let mut loaded = false;
    let mut aborted = false;
    for k in 0..setup.steps(duration) {
        let t = k as f64 * dt;
        if let Some(tl) = load_time {
            if !loaded && t >= tl {
                cell.piece.add_mass(cfg.load_mass);
                loaded = true;
            }
        }
        let steps = cell.tick(&mut trace, &plan.sample(t), &Vector3::zeros(), dt)?;
        let e = linear_error(&steps[0]).max(linear_error(&steps[1]));
        max_error = max_error.max(e);
        if !loaded {
            max_unloaded = max_unloaded.max(e);
        }
        if steps.iter().any(|s| s.x_tilde[1].abs() > cfg.abort_error) {
            aborted = true;
            break;
        }
    }

    let last = trace.rows.last().expect("at least one row");
    let steady_error = match load_time {
        _ if aborted => [0, 1].map(|a| last.arms[a].x_tilde[1]),
        Some(tl) => {
            let end = (tl + cfg.dwell).min(trace.time(trace.len()));
            [0, 1].map(|a| {
                super::window_mean(&trace, end - cfg.window, end, |r| r.arms[a].x_tilde[1])
            })
        }
        None => [f64::NAN; 2],
    };
    let flagged = aborted || steady_error.iter().any(|e| e.abs() > x_b);
    Ok(CarryOutcome {
        trace,
        load_time,
        steady_error,
        max_error_unloaded: max_unloaded,
        max_error,
        saturation_error: x_b,
        flagged,
        aborted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HoldConfig {
    pub cell: CellConfig,
    pub mass: f64,
    /// Piece centre while the operator drills into it (x, y).
    pub center: [f64; 2],
    /// Operator push on the piece (N); it vanishes at `release_time`.
    pub push: [f64; 2],
    pub push_ramp: f64,
    pub release_time: f64,
    pub duration: f64,
    /// Command both grips to the piece centre instead of its sides.
    pub squeeze: bool,
}

impl Default for HoldConfig {
    fn default() -> Self {
        Self {
            cell: CellConfig::default(),
            mass: 0.5,
            center: [0.0, 0.3],
            push: [0.0, -10.0],
            push_ramp: 1.0,
            release_time: 5.0,
            duration: 10.0,
            squeeze: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HoldOutcome {
    pub trace: SimTrace,
    /// Largest linear error of either arm before / after the release (m).
    pub pre_release_error: f64,
    pub post_release_error: f64,
    /// Whole-system energy at the release and its peak afterwards (J).
    pub energy_at_release: f64,
    pub peak_energy_after: f64,
    /// Mean grip force along the grip axis over the closing second (N).
    pub squeeze_force: f64,
}

impl HoldOutcome {
    pub fn report(&self) -> ScenarioReport {
        let mut r = ScenarioReport::new("exp51");
        r.metric("pre_release_error", self.pre_release_error);
        r.metric("post_release_error", self.post_release_error);
        r.metric("energy_at_release", self.energy_at_release);
        r.metric("peak_energy_after", self.peak_energy_after);
        r.metric("squeeze_force", self.squeeze_force);
        r.traces = vec![self.trace.clone()];
        r
    }
}

/// Arm kinetic energy, controller storage and piece energy of one row, with
/// arm gravity left out because the compensation cancels it.
pub fn system_energy(row: &crate::trace::TraceRow, piece_energy_column: usize) -> f64 {
    row.arms.iter().map(|a| a.kinetic + a.storage).sum::<f64>() + row.aux[piece_energy_column]
}

pub fn run_exp51_cooperative_hold(setup: &Setup, cfg: &HoldConfig) -> Result<HoldOutcome> {
    if !(cfg.push_ramp > 0.0) || !(cfg.release_time > 0.0) || !(cfg.duration > cfg.release_time) {
        return Err(Error::Validation(format!(
            "hold needs push_ramp > 0 and 0 < release_time < duration (got {}, {}, {})",
            cfg.push_ramp, cfg.release_time, cfg.duration
        )));
    }
    let dt = setup.dt;
    let c = Pose::planar(cfg.center[0], cfg.center[1], 0.0);
    let sides = DualArmPlan::around(&ViaPointPlan::new(c), cfg.cell.half_width)?.sample(0.0);
    let mut cell = Cell::new(setup, &cfg.cell, &sides, cfg.mass)?;
    let targets = if cfg.squeeze {
        [
            Pose::planar(c.position.x, c.position.y, 0.0),
            Pose::planar(c.position.x, c.position.y, PI),
        ]
    } else {
        sides
    };

    let mut trace = SimTrace::new(
        if cfg.squeeze {
            "exp51_squeeze"
        } else {
            "exp51_hold"
        },
        dt,
        vec![setup.plant.dof(); 2],
        &AUX,
    );
    let energy_col = AUX.len() - 1;
    let duration = setup.duration_or(cfg.duration);
    let (mut pre, mut post) = (0.0f64, 0.0f64);
    let mut energy_at_release = f64::NAN;
    let mut peak_after = f64::NEG_INFINITY;
    for k in 0..setup.steps(duration) {
        let t = k as f64 * dt;
        let ramp = (t / cfg.push_ramp).min(1.0);
        let push = if t < cfg.release_time {
            Vector3::new(cfg.push[0], cfg.push[1], 0.0) * ramp
        } else {
            Vector3::zeros()
        };
        let steps = cell.tick(&mut trace, &targets, &push, dt)?;
        let e = linear_error(&steps[0]).max(linear_error(&steps[1]));
        let energy = system_energy(trace.rows.last().expect("row just pushed"), energy_col);
        if t < cfg.release_time {
            pre = pre.max(e);
            energy_at_release = energy;
        } else {
            post = post.max(e);
            peak_after = peak_after.max(energy);
        }
    }
    let tail = ((1.0 / dt).round() as usize).min(trace.len());
    let closing = &trace.rows[trace.len() - tail..];
    let squeeze_force = closing
        .iter()
        .map(|r| 0.5 * (r.aux[3].abs() + r.aux[5].abs()))
        .sum::<f64>()
        / tail as f64;
    Ok(HoldOutcome {
        trace,
        pre_release_error: pre,
        post_release_error: post,
        energy_at_release,
        peak_energy_after: peak_after,
        squeeze_force,
    })
}
