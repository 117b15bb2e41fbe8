mod common;

use std::sync::Arc;

use stokes_lab::space::FeSpace;
use stokes_lab::stokes::{compute_infsup, SaddleSystem};
use stokes_lab::{Domain, Mesh};

fn system(n: usize, v: usize, p: usize) -> SaddleSystem {
    let mesh = Arc::new(Mesh::structured(&Domain::unit_square(), n).unwrap());
    SaddleSystem::assemble(&FeSpace::with_degrees(mesh, v, p)).unwrap()
}

#[test]
fn library_beta_matches_the_dense_oracle() {
    for (n, v, p) in [(4, 2, 1), (6, 2, 1), (3, 3, 2)] {
        let sys = system(n, v, p);
        let lib = compute_infsup(&sys).unwrap().beta;
        let oracle = common::dense_infsup(&sys);
        assert!((lib - oracle).abs() <= 1e-8, "n={n} P{v}/P{p}: {lib} vs {oracle}");
        assert!(lib > 0.2, "{lib}");
    }
}

#[test]
fn oracle_sees_the_equal_order_kernel() {
    let sys = system(4, 1, 1);
    assert!(common::dense_infsup(&sys) < 1e-6);
    assert!(compute_infsup(&sys).unwrap().beta < 1e-6);
}

#[test]
fn polygon_domain_has_a_positive_constant() {
    let domain = Domain::new(vec![[0.0, 0.0], [1.0, 0.0], [1.2, 0.7], [0.3, 0.9]]).unwrap();
    let mesh = Arc::new(Mesh::structured(&domain, 4).unwrap());
    let sys = SaddleSystem::assemble(&FeSpace::taylor_hood(mesh, 2).unwrap()).unwrap();
    let lib = compute_infsup(&sys).unwrap().beta;
    assert!((lib - common::dense_infsup(&sys)).abs() <= 1e-8);
    assert!(lib > 0.1);
}
