//! Point-mass work-piece held by stiff spring attachments.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Attachment stiffness between an end-effector and the piece (N/m).
pub const ATTACH_STIFFNESS: f64 = 1e4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PayloadModel {
    pub mass: f64,
    pub k_attach: f64,
    pub gravity: Vector3<f64>,
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    /// Piece position relative to each end-effector, fixed when it grasps.
    pub attachments: Vec<Option<Vector3<f64>>>,
}

impl PayloadModel {
    pub fn new(
        mass: f64,
        position: Vector3<f64>,
        arms: usize,
        gravity: Vector3<f64>,
    ) -> Result<Self> {
        if !(mass >= 0.0) {
            return Err(Error::Validation(format!(
                "payload mass must be >= 0, got {mass}"
            )));
        }
        Ok(Self {
            mass,
            k_attach: ATTACH_STIFFNESS,
            gravity,
            position,
            velocity: Vector3::zeros(),
            attachments: vec![None; arms],
        })
    }

    pub fn grasp(&mut self, arm: usize, ee: &Vector3<f64>) {
        self.attachments[arm] = Some(self.position - ee);
    }

    /// Step change of the carried mass (loading event).
    pub fn add_mass(&mut self, dm: f64) {
        self.mass = (self.mass + dm).max(0.0);
    }

    pub fn grasped(&self) -> usize {
        self.attachments.iter().filter(|a| a.is_some()).count()
    }

    /// Force the piece exerts on each end-effector.
    pub fn arm_forces(&self, ees: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        ees.iter()
            .zip(&self.attachments)
            .map(|(ee, att)| match att {
                Some(o) => (self.position - (ee + o)) * self.k_attach,
                None => Vector3::zeros(),
            })
            .collect()
    }

    /// Implicit Euler step under the attachment springs, gravity and `external`.
    /// An ungrasped piece does not move.
    pub fn step(&mut self, ees: &[Vector3<f64>], external: &Vector3<f64>, dt: f64) {
        let n = self.grasped();
        if n == 0 {
            self.velocity = Vector3::zeros();
            return;
        }
        let anchors: Vector3<f64> = ees
            .iter()
            .zip(&self.attachments)
            .filter_map(|(ee, att)| att.map(|o| ee + o))
            .sum();
        let k = self.k_attach;
        let m = self.mass;
        let rhs = (self.position + self.velocity * dt) * m
            + (anchors * k + self.gravity * m + external) * (dt * dt);
        let next = rhs / (m + n as f64 * k * dt * dt);
        self.velocity = (next - self.position) / dt;
        self.position = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn massless_piece_sits_between_grips() {
        let mut p =
            PayloadModel::new(0.0, Vector3::zeros(), 2, Vector3::new(0.0, -9.81, 0.0)).unwrap();
        let ees = [Vector3::new(-0.1, 0.0, 0.0), Vector3::new(0.1, 0.0, 0.0)];
        p.grasp(0, &ees[0]);
        p.grasp(1, &ees[1]);
        let moved = [ees[0] + Vector3::new(0.0, 0.02, 0.0), ees[1]];
        p.step(&moved, &Vector3::zeros(), 1e-3);
        assert!((p.position.y - 0.01).abs() < 1e-12);
        let f = p.arm_forces(&moved);
        assert!((f[0] + f[1]).norm() < 1e-9);
    }

    #[test]
    fn hanging_mass_loads_each_grip_by_half_weight() {
        let mut p =
            PayloadModel::new(2.0, Vector3::zeros(), 2, Vector3::new(0.0, -9.81, 0.0)).unwrap();
        let ees = [Vector3::new(-0.1, 0.0, 0.0), Vector3::new(0.1, 0.0, 0.0)];
        p.grasp(0, &ees[0]);
        p.grasp(1, &ees[1]);
        for _ in 0..5000 {
            p.step(&ees, &Vector3::zeros(), 1e-3);
        }
        for f in p.arm_forces(&ees) {
            assert!((f.y + 9.81).abs() < 1e-6, "{f}");
        }
    }

    #[test]
    fn ungrasped_piece_stays_put() {
        let mut p = PayloadModel::new(
            1.0,
            Vector3::new(0.0, 0.2, 0.0),
            1,
            Vector3::new(0.0, -9.81, 0.0),
        )
        .unwrap();
        p.step(&[Vector3::zeros()], &Vector3::zeros(), 1e-3);
        assert_eq!(p.position, Vector3::new(0.0, 0.2, 0.0));
        assert!(PayloadModel::new(-1.0, Vector3::zeros(), 1, Vector3::zeros()).is_err());
    }
}
