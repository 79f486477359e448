//! Fixtures shared by the controller benchmarks.

use nalgebra::{DVector, Vector6};
use telecoop::arm::{ArmModel, ArmState};
use telecoop::fic::{FicState, TaskSpaceError};
use telecoop::scenarios::{table_one_fic, Rig};
use telecoop::teleop::ControlLaw;

/// A mid-range task error with every axis moving away from zero.
pub fn sample_error() -> TaskSpaceError {
    TaskSpaceError {
        x_tilde: Vector6::new(0.03, -0.02, 0.01, 0.05, -0.04, 0.02),
        x_tilde_dot: Vector6::new(0.1, -0.1, 0.05, 0.2, -0.2, 0.1),
    }
}

pub fn fresh_state() -> FicState {
    FicState::default()
}

/// Arm at a generic configuration, slightly in motion.
pub fn moving(arm: &ArmModel) -> ArmState {
    let n = arm.dof();
    let q = DVector::from_fn(n, |i, _| 0.3 + 0.2 * i as f64);
    let qd = DVector::from_fn(n, |i, _| 0.1 - 0.03 * i as f64);
    ArmState::moving(arm, q, qd)
}

pub fn planar_rig() -> Rig {
    let mut rig = Rig::at_pose(
        ArmModel::planar3(),
        &telecoop::arm::Pose::planar(0.45, 0.25, 0.0),
        &[0.8, -1.4, 0.6],
        ControlLaw::Fic(table_one_fic()),
        1e-3,
    )
    .expect("reachable start");
    rig.state = moving(&rig.arm);
    rig
}
