//! Invariants over randomly drawn profiles, configurations and inputs.

mod common;

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DVector, Vector6};
use proptest::prelude::*;
use telecoop::arm::{nullspace_projection, pseudo_inverse, ArmModel, ArmState};
use telecoop::fic::{fic_wrench, FicGains, FicState, StiffnessProfile, TaskSpaceError, DOF};
use telecoop::io::{read_trace, write_trace, RunConfig};
use telecoop::scenarios::interactive::{replay, InteractiveConfig};
use telecoop::scenarios::Setup;
use telecoop::teleop::{ChannelModel, ChannelParams};
use telecoop::trace::{ArmSample, SimTrace};

/// Valid profiles: `f_max/x_b - k_zeta` is kept above one.
fn profile() -> impl Strategy<Value = StiffnessProfile> {
    (1.0..500.0f64, 1e-3..0.2f64, 0.05..20.0f64).prop_map(|(k, x_b, excess)| {
        StiffnessProfile::new(k, x_b * (k + 1.0 + excess), x_b).unwrap()
    })
}

fn gains(p: StiffnessProfile) -> FicGains {
    FicGains::uniform(p, p, 0.0, 0.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn spring_force_never_exceeds_saturation(
        p in profile(),
        steps in prop::collection::vec(-1.0..1.0f64, 1..200),
        scale in 0.1..5.0f64,
    ) {
        let g = gains(p);
        let dt = 1e-3;
        let mut state = FicState::default();
        let mut x = 0.0;
        for s in steps {
            let next = x + s * scale * p.x_b;
            let mut err = TaskSpaceError::default();
            for i in 0..DOF {
                err.x_tilde[i] = next;
                err.x_tilde_dot[i] = (next - x) / dt;
            }
            let (out, st) = fic_wrench(&err, &Vector6::zeros(), &state, &g);
            for i in 0..DOF {
                prop_assert!(out.spring[i].abs() <= p.f_max * (1.0 + 1e-12), "{} > {}", out.spring[i], p.f_max);
            }
            prop_assert!(out.storage >= 0.0);
            state = st;
            x = next;
        }
    }

    #[test]
    fn divergence_force_is_odd_and_monotone(p in profile(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let (lo, hi) = (lo * 3.0 * p.x_b, hi * 3.0 * p.x_b);
        prop_assert_eq!(p.force(-hi), -p.force(hi));
        prop_assert!(p.force(lo) <= p.force(hi) * (1.0 + 1e-12));
    }

    #[test]
    fn spring_energy_integrates_the_force(p in profile(), u in 0.01..3.0f64) {
        let x = u * p.x_b;
        let oracle = if x <= p.x_b {
            common::integrate(|s| p.force(s), 0.0, x, 1e-13)
        } else {
            common::integrate(|s| p.force(s), 0.0, p.x_b, 1e-13) + p.f_max * (x - p.x_b)
        };
        prop_assert!((p.energy(x) - oracle).abs() <= 1e-8 * oracle.max(1e-12), "{} vs {}", p.energy(x), oracle);
        prop_assert!((p.energy(-x) - p.energy(x)).abs() <= 1e-15 * oracle.max(1.0));
    }

    #[test]
    fn convergence_stiffness_matches_stored_energy(p in profile(), u in 0.01..3.0f64) {
        let x_max = u * p.x_b;
        let split = x_max.min(p.x_b);
        let energy = common::integrate(|s| common::k_d(p.k_zeta, p.f_max, p.x_b, s) * s, 0.0, split, 1e-13)
            + p.f_max * (x_max - split);
        let oracle = 4.0 * energy / (x_max * x_max);
        let k = p.convergence_stiffness(x_max).unwrap();
        prop_assert!((k - oracle).abs() <= 1e-8 * oracle, "{k} vs {oracle}");
    }
}

fn joint_angles(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn planar_jacobian_matches_finite_differences(q in joint_angles(3)) {
        let arm = ArmModel::planar3();
        let lengths = [0.3, 0.3, 0.2];
        let j = arm.jacobian(&DVector::from_column_slice(&q));
        let fd = common::fd_jacobian(|q: &[f64]| common::planar_fk(&lengths, q), &q, 1e-6);
        for (c, col) in fd.iter().enumerate() {
            for r in 0..6 {
                prop_assert!((j[(r, c)] - col[r]).abs() <= 1e-6, "({r},{c}): {} vs {}", j[(r, c)], col[r]);
            }
        }
    }

    #[test]
    fn null_space_torque_leaves_the_task_untouched(q in joint_angles(7), tau in prop::collection::vec(-10.0..10.0f64, 7)) {
        let arm = ArmModel::spatial7();
        let j = arm.jacobian(&DVector::from_column_slice(&q));
        prop_assume!(!pseudo_inverse(&j).damped);
        let tau = DVector::from_vec(tau);
        let (proj, _) = nullspace_projection(&j, &tau);
        prop_assert!((&j * &proj).norm() <= 1e-9 * tau.norm().max(1.0));
        // a projector: applying it twice changes nothing
        let (twice, _) = nullspace_projection(&j, &proj);
        prop_assert!((twice - &proj).norm() <= 1e-9 * tau.norm().max(1.0));
    }

    #[test]
    fn unforced_small_swings_conserve_energy(offsets in prop::collection::vec(-0.3..0.3f64, 3)) {
        let arm = ArmModel::planar3();
        let q0 = DVector::from_vec(vec![-FRAC_PI_2 + offsets[0], offsets[1], offsets[2]]);
        let mut s = ArmState::at_rest(q0);
        let e0 = arm.mechanical_energy(&s);
        let zero = DVector::zeros(3);
        let mut worst: f64 = 0.0;
        for _ in 0..3000 {
            s = arm.step(&s, &zero, &Vector6::zeros(), 1e-3).unwrap();
            worst = worst.max((arm.mechanical_energy(&s) - e0).abs());
        }
        prop_assert!(worst <= 1e-5, "energy wandered by {worst:e} J");
    }

    #[test]
    fn channel_output_is_never_newer_than_the_delay(
        delay in 0.0..0.3f64,
        rate in 5.0..1000.0f64,
        drop in 0.0..0.5f64,
        seed in any::<u64>(),
    ) {
        let dt = 1e-3;
        let mut ch = ChannelModel::new(ChannelParams::new(delay, rate, drop).unwrap(), seed).unwrap();
        for k in 0..800 {
            let t = k as f64 * dt;
            if let Some(sent) = ch.step(t, t) {
                prop_assert!(sent <= t - delay + 1e-9, "at {t}: got sample from {sent}, delay {delay}");
            } else {
                // nothing may arrive before the first delay has elapsed, and only drops delay it further
                prop_assert!(drop > 0.0 || t < delay + 1.0 / rate + 1e-9);
            }
        }
    }
}

fn sample(dof: usize, v: &[f64]) -> ArmSample {
    let mut values = v[..ArmSample::width(dof)].to_vec();
    for p in &mut values[dof + 7 * DOF..dof + 8 * DOF] {
        *p = if *p > 0.0 { 1.0 } else { 0.0 };
    }
    ArmSample::from_values(dof, &values).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn traces_survive_a_csv_round_trip(
        rows in prop::collection::vec(prop::collection::vec(-1e3..1e3f64, 2 * ArmSample::width(3) + 2), 1..20),
    ) {
        let mut tr = SimTrace::new("prop", 1e-3, vec![3, 3], &["a", "b"]);
        let w = ArmSample::width(3);
        for r in &rows {
            tr.push(vec![sample(3, &r[..w]), sample(3, &r[w..2 * w])], r[2 * w..].to_vec());
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("prop.csv");
        write_trace(&tr, &path, None).unwrap();
        prop_assert_eq!(read_trace(&path).unwrap(), tr);
    }

    #[test]
    fn configs_survive_a_toml_round_trip(
        seed in any::<u64>(),
        dt in 1e-4..1e-2f64,
        p in profile(),
        damping in 0.0..50.0f64,
        delay in 0.0..1.0f64,
        rate in 1.0..2000.0f64,
    ) {
        let mut cfg = RunConfig { seed, dt, ..Default::default() };
        cfg.controller.linear.k_zeta = p.k_zeta;
        cfg.controller.linear.f_max = p.f_max;
        cfg.controller.linear.x_b = p.x_b;
        cfg.controller.linear.damping = damping;
        cfg.channel = ChannelParams::new(delay, rate, 0.0).unwrap();
        let text = cfg.to_toml().unwrap();
        let back = RunConfig::from_toml(&text).unwrap();
        prop_assert_eq!(back.hash(), cfg.hash());
        prop_assert_eq!(back, cfg);
    }
}

#[test]
fn commanded_start_pose_is_held_for_ten_seconds() {
    let tr = replay(
        &Setup::default(),
        &InteractiveConfig::default(),
        &[],
        10_000,
    )
    .unwrap();
    let first = tr.rows[0].arms[0].x;
    let worst = tr
        .rows
        .iter()
        .map(|r| {
            (0..3)
                .map(|i| (r.arms[0].x[i] - first[i]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    assert!(worst <= 1e-6, "drifted {worst:e} m");
}
