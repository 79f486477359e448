//! Energy observer: checks that the controller springs never release more
//! energy over an interval than they held at its start plus what the moving
//! set-point put in.

use serde::{Deserialize, Serialize};

use crate::arm::{pose_error, Pose};
use crate::error::{Error, Result};
use crate::trace::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditConfig {
    /// Allowed excess release from discretisation (J).
    pub tolerance: f64,
    /// Trailing share of the run checked for energy growth.
    pub tail_fraction: f64,
    /// Allowed growth of peak total energy in the tail (J).
    pub growth_tolerance: f64,
}

impl Default for AuditConfig {
    fn default() -> Self {
        Self {
            tolerance: 5e-3,
            tail_fraction: 0.2,
            growth_tolerance: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub passed: bool,
    /// Largest `release(t0, t1) - storage(t0) - input(t0, t1)` found (J).
    pub worst_excess: f64,
    pub worst_time: f64,
    /// Net work the springs did on the plant (J).
    pub spring_work: f64,
    /// Work the damping terms did on the plant (J, non-positive when dissipative).
    pub damping_work: f64,
    /// Storage added by set-point motion (J).
    pub input_work: f64,
    pub peak_total_early: f64,
    pub peak_total_tail: f64,
    pub final_total: f64,
    pub violation: Option<String>,
}

fn step_work(a: &[f64; 6], b: &[f64; 6], x0: &[f64; 6], x1: &[f64; 6]) -> f64 {
    let p0 = Pose::from_vector(&(*x0).into());
    let p1 = Pose::from_vector(&(*x1).into());
    let dx = pose_error(&p1, &p0);
    (0..6).map(|i| 0.5 * (a[i] + b[i]) * dx[i]).sum()
}

/// Audit a trace. Errors only on an empty trace; violations are reported.
pub fn energy_audit(trace: &SimTrace, cfg: &AuditConfig) -> Result<EnergyReport> {
    if trace.is_empty() {
        return Err(Error::TraceFormat("cannot audit an empty trace".into()));
    }
    let storage = |k: usize| trace.rows[k].arms.iter().map(|a| a.storage).sum::<f64>();
    let total = |k: usize| {
        trace.rows[k]
            .arms
            .iter()
            .map(|a| a.storage + a.kinetic)
            .sum::<f64>()
    };

    let mut released = 0.0; // spring work minus set-point input, cumulative
    let mut spring_work = 0.0;
    let mut damping_work = 0.0;
    let mut input_work = 0.0;
    let mut best_floor = storage(0);
    let mut worst_excess = f64::NEG_INFINITY;
    let mut worst_time = 0.0;
    for k in 1..trace.len() {
        let (prev, row) = (&trace.rows[k - 1], &trace.rows[k]);
        for (a, b) in prev.arms.iter().zip(&row.arms) {
            let w = step_work(&a.spring, &b.spring, &a.x, &b.x);
            spring_work += w;
            damping_work += step_work(&a.damping, &b.damping, &a.x, &b.x);
            input_work += b.input_work;
            released += w - b.input_work;
        }
        let excess = released - best_floor;
        if excess > worst_excess {
            worst_excess = excess;
            worst_time = row.t;
        }
        best_floor = best_floor.min(released + storage(k));
    }
    if trace.len() == 1 {
        worst_excess = 0.0;
    }

    let n = trace.len();
    let split = ((1.0 - cfg.tail_fraction) * n as f64).floor() as usize;
    let split = split.clamp(1, n);
    let peak = |r: std::ops::Range<usize>| r.map(total).fold(f64::NEG_INFINITY, f64::max);
    let peak_total_early = peak(0..split);
    let peak_total_tail = if split < n {
        peak(split..n)
    } else {
        peak_total_early
    };

    let mut violation = None;
    if worst_excess > cfg.tolerance {
        violation = Some(format!(
            "springs released {worst_excess:.3e} J more than stored plus input by t = {worst_time:.3} s"
        ));
    } else if peak_total_tail > peak_total_early + cfg.growth_tolerance {
        violation = Some(format!(
            "total energy grew in the final {:.0}% of the run: {peak_total_tail:.4e} J > {peak_total_early:.4e} J",
            cfg.tail_fraction * 100.0
        ));
    }
    Ok(EnergyReport {
        passed: violation.is_none(),
        worst_excess,
        worst_time,
        spring_work,
        damping_work,
        input_work,
        peak_total_early,
        peak_total_tail,
        final_total: total(n - 1),
        violation,
    })
}
