use stokes_lab::verification::local::{
    corner_bump_h2_series, run_local_energy_check, run_local_h2_check, LocalEnergyConfig,
    PairSource,
};
use stokes_lab::verification::series::variation;
use stokes_lab::verification::stability::{
    run_stability_experiment, ExperimentConfig, Scenario, StabilityKind,
};

#[test]
fn local_h2_norm_ignores_a_corner_singularity() {
    let rows = corner_bump_h2_series(&[16, 32], 2, 2, [0.1, 0.1], [0.6, 0.6], 0.18, 0.36).unwrap();
    let local: Vec<f64> = rows.iter().map(|r| r.lhs).collect();
    let global: Vec<f64> = rows.iter().map(|r| r.global_h2).collect();
    assert!(variation(&local) < 1.1, "{local:?}");
    assert!(global[1] / global[0] > 1.8, "{global:?}");
}

#[test]
fn whole_domain_h2_estimate_is_finite() {
    let r = run_local_h2_check([0.5, 0.5], 0.8, 1.0, 8).unwrap();
    assert!(r.implied_constant.is_finite() && r.implied_constant > 0.0, "{r:?}");
}

#[test]
fn manufactured_local_energy_constant_is_stable() {
    let cfg = LocalEnergyConfig {
        source: PairSource::Manufactured,
        ..Default::default()
    };
    let r = run_local_energy_check(&cfg).unwrap();
    let strict: Vec<f64> = r.rows.iter().map(|row| row.strict_constant).collect();
    assert!(r.verdict.ok(), "{r:?}");
    assert!(variation(&strict) < 1.25, "{strict:?}");
}

#[test]
fn null_velocity_interior_ratio_is_zero() {
    let cfg = ExperimentConfig {
        levels: vec![16, 20],
        ..Default::default()
    };
    let o = run_stability_experiment(&cfg, StabilityKind::InteriorLinf, Scenario::NullVelocity).unwrap();
    assert!(o.series.ratios().iter().all(|&r| r < 1e-8), "{:?}", o.series);
}
