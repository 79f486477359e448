//! Scenario-level properties checked against static-balance oracles.

mod common;

use telecoop::scenarios::carry::{
    run_exp51_cooperative_hold, run_exp6_payload_carry, CarryConfig, HoldConfig,
};
use telecoop::scenarios::drilling::{run_drilling_accuracy, DrillingConfig, Material};
use telecoop::scenarios::exp1::{run_exp1_drilling_comparison, Exp1Config};
use telecoop::scenarios::funnel::{run_exp52_inclination_funnel, FunnelConfig};
use telecoop::scenarios::{energy_audit, window_mean, AuditConfig, Setup};

fn rigid_wall() -> Exp1Config {
    Exp1Config {
        threshold: f64::INFINITY,
        yield_rate: 0.0,
        ..Default::default()
    }
}

#[test]
fn rigid_wall_forces_match_series_balance() {
    let setup = Setup::default();
    let cfg = rigid_wall();
    let out = run_exp1_drilling_comparison(&setup, &cfg).unwrap();

    // controller spring in series with the wall: k_c (s - d) = k_wall d
    let k = setup.ic.k[1];
    let ic_force = k * cfg.overshoot * cfg.k_wall / (cfg.k_wall + k);
    assert!(
        (out.ic_summary.steady_force - ic_force).abs() < 1e-3 * ic_force,
        "{:?}",
        out.ic_summary
    );

    let p = setup.fic_with_linear_x_b(cfg.fic_x_b).unwrap().profiles[1];
    let depth = common::bisect(
        |d| {
            common::k_d(p.k_zeta, p.f_max, p.x_b, cfg.overshoot - d) * (cfg.overshoot - d)
                - cfg.k_wall * d
        },
        0.0,
        cfg.overshoot,
    );
    let fic_force = cfg.k_wall * depth;
    assert!((fic_force - 15.0).abs() < 1e-9);
    assert!(
        (out.fic_summary.steady_force - fic_force).abs() < 1e-3 * fic_force,
        "{:?}",
        out.fic_summary
    );
}

#[test]
fn no_overshoot_means_no_contact_force() {
    let cfg = Exp1Config {
        overshoot: 0.0,
        ..rigid_wall()
    };
    let out = run_exp1_drilling_comparison(&Setup::default(), &cfg).unwrap();
    // the tool rests on the surface with sub-nanometre numerical penetration
    assert!(
        out.fic_summary.steady_force.abs() < 1e-4,
        "{:?}",
        out.fic_summary
    );
    assert!(
        out.ic_summary.steady_force.abs() < 1e-4,
        "{:?}",
        out.ic_summary
    );
}

#[test]
fn only_the_saturating_controller_drills_past_the_threshold() {
    let setup = Setup::default();
    let out = run_exp1_drilling_comparison(&setup, &Exp1Config::default()).unwrap();
    assert!(out.fic_summary.removed > 1e-3, "{:?}", out.fic_summary);
    // the impact spike may chip the surface, but the baseline never keeps cutting
    assert!(
        out.ic_summary.removed < 1e-3 * out.fic_summary.removed,
        "{:?}",
        out.ic_summary
    );
    assert!(out.ic_summary.steady_force < Exp1Config::default().threshold);
    assert!(out.fic_summary.penetration > out.ic_summary.penetration);
    // the saturation bound carries over to every recorded spring force
    for row in &out.fic.rows {
        for i in 0..6 {
            assert!(row.arms[0].spring[i].abs() <= setup.fic.profiles[i].f_max * (1.0 + 1e-12));
        }
    }
}

fn short_drill(material: Material, tremor: f64) -> DrillingConfig {
    DrillingConfig {
        material,
        holes: 2,
        tremor_rms: tremor,
        ..Default::default()
    }
}

#[test]
fn tremor_free_drilling_is_limited_by_tracking() {
    let out = run_drilling_accuracy(&Setup::default(), &short_drill(Material::Wood, 0.0)).unwrap();
    assert!(out.mean_error() <= 5e-4, "mean error {}", out.mean_error());
}

#[test]
fn default_tremor_stays_in_the_millimetre_band() {
    let out = run_drilling_accuracy(&Setup::default(), &short_drill(Material::Pla, 1e-3)).unwrap();
    assert!(out.mean_error() < 3e-3, "mean error {}", out.mean_error());
}

#[test]
fn cardboard_holes_are_less_neat_than_wood() {
    let setup = Setup::default();
    let wood = run_drilling_accuracy(&setup, &short_drill(Material::Wood, 1e-3)).unwrap();
    let card = run_drilling_accuracy(&setup, &short_drill(Material::Cardboard, 1e-3)).unwrap();
    assert!(
        card.max_excursion() > wood.max_excursion(),
        "{} vs {}",
        card.max_excursion(),
        wood.max_excursion()
    );
}

#[test]
fn undisturbed_tool_keeps_its_inclination() {
    let out = run_exp52_inclination_funnel(
        &Setup::default(),
        &FunnelConfig {
            torque_fraction: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(out.steady_error < 1e-6, "{}", out.steady_error);
    // settling onto the board disturbs the tilt only transiently
    assert!(out.max_error < 1e-3, "{}", out.max_error);
    assert!(!out.flagged);
}

#[test]
fn unloaded_carry_tracks_within_a_millimetre() {
    let out = run_exp6_payload_carry(
        &Setup::default(),
        &CarryConfig {
            load_mass: 0.0,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(out.max_error <= 1e-3, "{}", out.max_error);
    assert!(!out.flagged && !out.aborted);
    assert!(
        energy_audit(&out.trace, &AuditConfig::default())
            .unwrap()
            .passed
    );
}

#[test]
fn sudden_release_does_not_rebound() {
    let out = run_exp51_cooperative_hold(&Setup::default(), &HoldConfig::default()).unwrap();
    assert!(
        out.post_release_error <= out.pre_release_error,
        "{} > {}",
        out.post_release_error,
        out.pre_release_error
    );
    assert!(
        out.peak_energy_after <= out.energy_at_release + 1e-9,
        "{} > {}",
        out.peak_energy_after,
        out.energy_at_release
    );
}

#[test]
fn held_piece_without_push_sags_by_the_payload_balance() {
    let setup = Setup::default();
    let cfg = HoldConfig {
        push: [0.0, 0.0],
        ..Default::default()
    };
    let out = run_exp51_cooperative_hold(&setup, &cfg).unwrap();
    let p = setup.fic.profiles[1];
    let per_arm = cfg.mass * 9.81 / 2.0;
    let sag = common::bisect(
        |x| common::k_d(p.k_zeta, p.f_max, p.x_b, x) * x - per_arm,
        0.0,
        p.x_b,
    );
    let end = cfg.duration;
    for arm in 0..2 {
        let e = window_mean(&out.trace, end - 1.0, end, |r| r.arms[arm].x_tilde[1]).abs();
        assert!((e - sag).abs() <= 0.05 * sag, "arm {arm}: {e} vs {sag}");
    }
}

#[test]
fn squeezing_grips_stay_below_saturation() {
    let setup = Setup::default();
    let out = run_exp51_cooperative_hold(
        &setup,
        &HoldConfig {
            squeeze: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert!(
        out.squeeze_force.abs() <= setup.fic.profiles[0].f_max * (1.0 + 1e-9),
        "{}",
        out.squeeze_force
    );
    assert!(
        out.squeeze_force.abs() > 1.0,
        "grips should press on the piece: {}",
        out.squeeze_force
    );
}
