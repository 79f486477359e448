//! Constant-stiffness impedance controller used as the comparison baseline.

use nalgebra::{DVector, Vector6};
use serde::{Deserialize, Serialize};

use crate::arm::{ArmModel, TorqueCommand};
use crate::error::{Error, Result};
use crate::fic::DOF;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IcGains {
    pub k: [f64; DOF],
    pub d: [f64; DOF],
}

impl Default for IcGains {
    fn default() -> Self {
        Self::uniform(100.0, 5.0, 20.0, 1.25).expect("positive defaults")
    }
}

impl IcGains {
    pub fn uniform(k_linear: f64, k_angular: f64, d_linear: f64, d_angular: f64) -> Result<Self> {
        let gains = Self {
            k: [
                k_linear, k_linear, k_linear, k_angular, k_angular, k_angular,
            ],
            d: [
                d_linear, d_linear, d_linear, d_angular, d_angular, d_angular,
            ],
        };
        gains.validate()?;
        Ok(gains)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k.iter().chain(&self.d).all(|v| *v > 0.0) {
            Ok(())
        } else {
            Err(Error::Validation(format!(
                "IC gains must be > 0: k = {:?}, d = {:?}",
                self.k, self.d
            )))
        }
    }
}

/// Spring and damping parts of `K x̃ - D ẋ`.
pub fn ic_wrench(
    x_tilde: &Vector6<f64>,
    x_dot: &Vector6<f64>,
    gains: &IcGains,
) -> (Vector6<f64>, Vector6<f64>) {
    let k = Vector6::from_column_slice(&gains.k);
    let d = Vector6::from_column_slice(&gains.d);
    (k.component_mul(x_tilde), -d.component_mul(x_dot))
}

/// Stored energy `½ Σ k x̃²`.
pub fn ic_storage(x_tilde: &Vector6<f64>, gains: &IcGains) -> f64 {
    x_tilde
        .iter()
        .zip(&gains.k)
        .map(|(x, k)| 0.5 * k * x * x)
        .sum()
}

/// `τ = Jᵀ(K x̃ - D ẋ) + F_ND + (I - J⁺J) τ_null`.
pub fn ic_torque(
    arm: &ArmModel,
    q: &DVector<f64>,
    qd: &DVector<f64>,
    x_tilde: &Vector6<f64>,
    x_dot: &Vector6<f64>,
    gains: &IcGains,
    tau_null: Option<&DVector<f64>>,
) -> TorqueCommand {
    let (spring, damping) = ic_wrench(x_tilde, x_dot, gains);
    arm.assemble_torque_command(&(spring + damping), q, qd, tau_null)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_spring_examples() {
        let g = IcGains::default();
        let zero = Vector6::zeros();
        let (s, d) = ic_wrench(&zero, &zero, &g);
        assert_eq!(s + d, zero);
        let (s, _) = ic_wrench(&Vector6::new(0.03, 0.0, 0.0, 0.0, 0.0, 0.0), &zero, &g);
        assert!((s[0] - 3.0).abs() < 1e-12);
        let (s, _) = ic_wrench(&Vector6::new(0.2, 0.0, 0.0, 0.0, 0.0, 0.0), &zero, &g);
        assert!((s[0] - 20.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_non_positive_gains() {
        assert!(IcGains::uniform(0.0, 5.0, 20.0, 1.25).is_err());
        assert!(IcGains::uniform(100.0, 5.0, -1.0, 1.25).is_err());
    }

    #[test]
    fn rest_torque_is_compensation_only() {
        let arm = ArmModel::planar3();
        let q = DVector::from_vec(vec![0.2, 0.3, -0.1]);
        let qd = DVector::zeros(3);
        let cmd = ic_torque(
            &arm,
            &q,
            &qd,
            &Vector6::zeros(),
            &Vector6::zeros(),
            &IcGains::default(),
            None,
        );
        assert_eq!(cmd.tau, arm.compensate_nonlinear_dynamics(&q, &qd));
    }
}
