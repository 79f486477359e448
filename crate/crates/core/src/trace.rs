//! Fixed-rate simulation log shared by scenarios, persistence and the bridge.

use serde::{Deserialize, Serialize};

use crate::fic::DOF;

/// Column-set version. Readers reject any other value.
pub const SCHEMA_VERSION: u32 = 1;

/// Per-arm record of one time step, taken before the plant is advanced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSample {
    pub q: Vec<f64>,
    /// End-effector pose: position then rotation vector.
    pub x: [f64; DOF],
    pub xdot: [f64; DOF],
    pub x_d: [f64; DOF],
    pub x_tilde: [f64; DOF],
    pub spring: [f64; DOF],
    pub damping: [f64; DOF],
    /// Wrench the environment applies to the end-effector.
    pub contact: [f64; DOF],
    pub phase: [u8; DOF],
    pub kinetic: f64,
    pub storage: f64,
    /// Energy put into the springs by moving the set-point this step.
    pub input_work: f64,
}

impl ArmSample {
    pub fn width(dof: usize) -> usize {
        dof + 8 * DOF + 3
    }

    pub fn push_values(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(&self.q);
        for block in [
            &self.x,
            &self.xdot,
            &self.x_d,
            &self.x_tilde,
            &self.spring,
            &self.damping,
            &self.contact,
        ] {
            out.extend_from_slice(block);
        }
        out.extend(self.phase.iter().map(|p| f64::from(*p)));
        out.extend([self.kinetic, self.storage, self.input_work]);
    }

    /// Inverse of `push_values`. `values` must hold exactly `width(dof)` entries.
    pub fn from_values(dof: usize, values: &[f64]) -> Option<Self> {
        if values.len() != Self::width(dof) {
            return None;
        }
        let six = |k: usize| -> [f64; DOF] {
            let start = dof + k * DOF;
            values[start..start + DOF].try_into().expect("6 values")
        };
        let mut phase = [0u8; DOF];
        for (i, p) in phase.iter_mut().enumerate() {
            let v = values[dof + 7 * DOF + i];
            if v != 0.0 && v != 1.0 {
                return None;
            }
            *p = v as u8;
        }
        let tail = dof + 8 * DOF;
        Some(Self {
            q: values[..dof].to_vec(),
            x: six(0),
            xdot: six(1),
            x_d: six(2),
            x_tilde: six(3),
            spring: six(4),
            damping: six(5),
            contact: six(6),
            phase,
            kinetic: values[tail],
            storage: values[tail + 1],
            input_work: values[tail + 2],
        })
    }

    pub fn column_names(arm: usize, dof: usize) -> Vec<String> {
        const AXES: [&str; DOF] = ["x", "y", "z", "rx", "ry", "rz"];
        let mut names: Vec<String> = (0..dof).map(|i| format!("a{arm}_q{i}")).collect();
        for block in [
            "pose", "vel", "pose_d", "err", "spring", "damp", "contact", "phase",
        ] {
            names.extend(AXES.iter().map(|a| format!("a{arm}_{block}_{a}")));
        }
        names.extend(
            ["kinetic", "storage", "input_work"]
                .iter()
                .map(|s| format!("a{arm}_{s}")),
        );
        names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub t: f64,
    pub arms: Vec<ArmSample>,
    pub aux: Vec<f64>,
}

/// Time-stamped log of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTrace {
    pub label: String,
    pub dt: f64,
    /// Joint count of each arm.
    pub arm_dofs: Vec<usize>,
    pub aux_names: Vec<String>,
    pub rows: Vec<TraceRow>,
}

impl SimTrace {
    pub fn new(
        label: impl Into<String>,
        dt: f64,
        arm_dofs: Vec<usize>,
        aux_names: &[&str],
    ) -> Self {
        Self {
            label: label.into(),
            dt,
            arm_dofs,
            aux_names: aux_names.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Time of row `k`; rows sit on an exact `k·dt` grid.
    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn push(&mut self, arms: Vec<ArmSample>, aux: Vec<f64>) {
        debug_assert_eq!(arms.len(), self.arm_dofs.len());
        debug_assert_eq!(aux.len(), self.aux_names.len());
        let t = self.time(self.rows.len());
        self.rows.push(TraceRow { t, arms, aux });
    }

    pub fn column_names(&self) -> Vec<String> {
        let mut names = vec!["t".to_string()];
        for (a, &dof) in self.arm_dofs.iter().enumerate() {
            names.extend(ArmSample::column_names(a, dof));
        }
        names.extend(self.aux_names.iter().cloned());
        names
    }

    pub fn aux_index(&self, name: &str) -> Option<usize> {
        self.aux_names.iter().position(|n| n == name)
    }

    /// Values of an auxiliary column.
    pub fn aux_series(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.aux_index(name)?;
        Some(self.rows.iter().map(|r| r.aux[i]).collect())
    }

    pub fn times(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.t).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_width_matches_columns_and_values() {
        let s = ArmSample {
            q: vec![0.1, 0.2, 0.3],
            x: [1.0; DOF],
            xdot: [2.0; DOF],
            x_d: [3.0; DOF],
            x_tilde: [4.0; DOF],
            spring: [5.0; DOF],
            damping: [6.0; DOF],
            contact: [7.0; DOF],
            phase: [1, 0, 1, 0, 0, 1],
            kinetic: 8.0,
            storage: 9.0,
            input_work: 10.0,
        };
        let mut v = Vec::new();
        s.push_values(&mut v);
        assert_eq!(v.len(), ArmSample::width(3));
        assert_eq!(ArmSample::column_names(0, 3).len(), ArmSample::width(3));
        assert_eq!(ArmSample::from_values(3, &v), Some(s));
    }
}
