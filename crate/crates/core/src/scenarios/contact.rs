//! Unilateral wall with a quasi-static yield (drilling) model.

use nalgebra::{Unit, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactModel {
    /// A point on the undrilled surface.
    pub origin: Vector3<f64>,
    /// Outward surface normal.
    pub normal: Unit<Vector3<f64>>,
    pub k_wall: f64,
    /// Normal force above which the material yields (N).
    pub penetration_threshold: f64,
    /// Material removal speed per newton of excess force (m/(N·s)).
    pub yield_rate: f64,
    /// Stiffness of the hole wall against sideways motion once drilling has begun (N/m).
    pub lateral_stiffness: f64,
}

/// Evolving state of the drilled surface.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactState {
    /// Depth of material removed along the normal (m).
    pub removed: f64,
    /// Tool position at first touch; the hole wall pins the tool here sideways.
    pub hole_anchor: Option<Vector3<f64>>,
    /// Normal force above threshold in the last step.
    pub yielding: bool,
}

impl ContactModel {
    pub fn new(
        origin: Vector3<f64>,
        normal: Vector3<f64>,
        k_wall: f64,
        threshold: f64,
        yield_rate: f64,
    ) -> Result<Self> {
        if !(k_wall > 0.0) || !(threshold >= 0.0) || !(yield_rate >= 0.0) {
            return Err(Error::Validation(format!(
                "contact needs k_wall > 0, threshold >= 0, yield_rate >= 0 (got {k_wall}, {threshold}, {yield_rate})"
            )));
        }
        let normal = Unit::try_new(normal, 1e-12)
            .ok_or_else(|| Error::Validation("contact normal must be non-zero".into()))?;
        Ok(Self {
            origin,
            normal,
            k_wall,
            penetration_threshold: threshold,
            yield_rate,
            lateral_stiffness: 0.0,
        })
    }

    pub fn with_lateral_stiffness(mut self, k: f64) -> Self {
        self.lateral_stiffness = k;
        self
    }

    /// Depth of the tool below the current (drilled) surface.
    pub fn penetration(&self, state: &ContactState, p: &Vector3<f64>) -> f64 {
        (self.origin - p).dot(&self.normal) - state.removed
    }

    /// Depth of the tool below the original surface.
    pub fn depth_below_original(&self, p: &Vector3<f64>) -> f64 {
        (self.origin - p).dot(&self.normal).max(0.0)
    }

    /// Wrench the surface applies to a tool tip at `p`.
    pub fn wrench(&self, state: &ContactState, p: &Vector3<f64>) -> Vector6<f64> {
        let pen = self.penetration(state, p).max(0.0);
        let mut f = self.normal.into_inner() * (self.k_wall * pen);
        if let Some(anchor) = state.hole_anchor {
            if self.lateral_stiffness > 0.0 && self.depth_below_original(p) > 0.0 {
                let off = p - anchor;
                let lateral = off - self.normal.into_inner() * off.dot(&self.normal);
                f -= lateral * self.lateral_stiffness;
            }
        }
        Vector6::new(f.x, f.y, f.z, 0.0, 0.0, 0.0)
    }

    /// Remove material for one step under normal force `f_n`.
    pub fn advance(&self, state: &mut ContactState, p: &Vector3<f64>, f_n: f64, dt: f64) {
        if state.hole_anchor.is_none() && self.penetration(state, p) > 0.0 {
            state.hole_anchor = Some(*p);
        }
        let excess = f_n - self.penetration_threshold;
        state.yielding = excess > 0.0;
        if state.yielding {
            state.removed += self.yield_rate * excess * dt;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn floor() -> ContactModel {
        ContactModel::new(Vector3::zeros(), Vector3::y(), 1e4, 5.0, 1e-4).unwrap()
    }

    #[test]
    fn unilateral_force() {
        let c = floor();
        let s = ContactState::default();
        assert_eq!(
            c.wrench(&s, &Vector3::new(0.0, 0.01, 0.0)),
            Vector6::zeros()
        );
        let w = c.wrench(&s, &Vector3::new(0.0, -0.001, 0.0));
        assert!((w[1] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn yields_only_above_threshold() {
        let c = floor();
        let mut s = ContactState::default();
        let p = Vector3::new(0.1, -0.0004, 0.0);
        c.advance(&mut s, &p, 4.0, 1e-3);
        assert_eq!(s.removed, 0.0);
        c.advance(&mut s, &p, 15.0, 1.0);
        assert!((s.removed - 1e-3).abs() < 1e-15);
        assert_eq!(s.hole_anchor, Some(p));
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ContactModel::new(Vector3::zeros(), Vector3::y(), 0.0, 5.0, 1e-4).is_err());
        assert!(ContactModel::new(Vector3::zeros(), Vector3::zeros(), 1e4, 5.0, 1e-4).is_err());
    }
}
