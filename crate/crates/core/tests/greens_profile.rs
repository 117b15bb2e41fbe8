use std::sync::Arc;

use stokes_lab::greens::{dyadic_profile, solve_greens, GreensCase, GreensKind};
use stokes_lab::mesh::build_dyadic;
use stokes_lab::space::FeSpace;
use stokes_lab::stokes::SaddleSystem;
use stokes_lab::verification::greens_study::{oracle_gate, run_greens_study, GreensStudyConfig};
use stokes_lab::{Domain, Mesh};

#[test]
fn pressure_maxima_decay_away_from_the_point() {
    let domain = Domain::unit_square();
    let x0 = [5.0 / 12.0, 7.0 / 12.0];
    let mesh = Arc::new(Mesh::structured(&domain, 32).unwrap());
    let space = FeSpace::taylor_hood(mesh.clone(), 2).unwrap();
    let sys = SaddleSystem::assemble(&space).unwrap();
    let case = GreensCase::new(&space, GreensKind::G0 { i: 0 }, x0, &domain).unwrap();
    let sol = solve_greens(&sys, &case).unwrap();
    let decomp = build_dyadic(&mesh, x0, 4.0).unwrap();
    let p = dyadic_profile(&sol.velocity, &sol.pressure, &decomp, 4);
    let lam: Vec<f64> = p.annuli.iter().map(|a| a.max_pressure).collect();
    // annuli run from the outermost inwards, so maxima grow along the list
    assert!(lam.len() >= 2, "{lam:?}");
    assert!(lam.windows(2).all(|w| w[0] <= w[1]), "{lam:?}");
    assert!(p.inner.max_pressure >= *lam.last().unwrap());
    assert!(p.grad_slope.slope < 0.0, "{:?}", p.grad_slope);
}

#[test]
fn oracle_is_self_convergent_on_a_coarse_mesh() {
    let g = oracle_gate(&Domain::unit_square(), 2, 4, GreensKind::G0 { i: 1 }, [0.45, 0.55], 2).unwrap();
    assert!(g.pass, "{g:?}");
}

#[test]
fn g1_errors_stay_bounded_on_coarse_levels() {
    let cfg = GreensStudyConfig {
        levels: vec![4, 8],
        big_k: 2.0,
        cases: vec![GreensKind::G1 { i: 1, j: 0 }],
        ..Default::default()
    };
    let study = run_greens_study(&cfg, false).unwrap();
    let s = study.series("greens/g1_i2_j1/grad_l1").unwrap();
    assert!(s.variation < 1.5, "{s:?}");
}
