//! Exact-to-tolerance contracts: discrete inf-sup uniformity, the δ_h
//! reproduction and scaling contract, and the representation identities that
//! turn point values of `u_h` into Green's pairings.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::geometry::{Domain, Point};
use crate::greens::{solve_greens, GreensCase, GreensKind};
use crate::mesh::Mesh;
use crate::regularization::{delta_test_field, DeltaFunction};
use crate::space::FeSpace;
use crate::stokes::{body_force, compute_infsup, Rhs, SaddleSystem};
use crate::verification::series::variation;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct InfSupRow {
    pub n: usize,
    pub h: f64,
    pub beta: f64,
}

/// `β_h` on `Mesh::structured(domain, n)` for each level.
pub fn infsup_sweep(
    domain: &Domain,
    levels: &[usize],
    velocity_degree: usize,
    pressure_degree: usize,
) -> Result<Vec<InfSupRow>> {
    levels
        .iter()
        .map(|&n| {
            let mesh = Arc::new(Mesh::structured(domain, n)?);
            let space = FeSpace::with_degrees(mesh.clone(), velocity_degree, pressure_degree);
            let sys = SaddleSystem::assemble(&space)?;
            Ok(InfSupRow {
                n,
                h: mesh.h(),
                beta: compute_infsup(&sys)?.beta,
            })
        })
        .collect()
}

/// `|β_fine / β_second - 1|` for the two finest levels.
pub fn finest_pair_change(rows: &[InfSupRow]) -> f64 {
    match rows {
        [.., a, b] => (b.beta / a.beta - 1.0).abs(),
        _ => 0.0,
    }
}

/// Whether `β_h` never grows across the levels and ends below `tol`, the
/// signature of an unstable pair. Equal-order P1/P1 on the structured mesh
/// has more pressure than interior velocity nodes, so `β_h` is 0 already.
pub fn infsup_collapses(rows: &[InfSupRow], tol: f64) -> bool {
    rows.windows(2).all(|w| w[1].beta <= w[0].beta + 1e-12)
        && rows.last().is_some_and(|r| r.beta < tol)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DeltaRow {
    pub n: usize,
    pub h: f64,
    /// Largest `|(v, δ_h e_i) - v_i(x0)|` over the local velocity basis.
    pub reproduction_error: f64,
    pub l1: f64,
    /// `h² ‖δ_h‖_∞`.
    pub linf_scaled: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DeltaContract {
    pub x0: Point,
    pub rows: Vec<DeltaRow>,
    pub l1_variation: f64,
    pub linf_variation: f64,
}

pub fn delta_contract(domain: &Domain, x0: Point, levels: &[usize], k: usize) -> Result<DeltaContract> {
    let mut rows = Vec::new();
    for &n in levels {
        let mesh = Arc::new(Mesh::structured(domain, n)?);
        let space = FeSpace::taylor_hood(mesh.clone(), k)?;
        let delta = DeltaFunction::build(&space, x0)?;
        let mut err = 0.0f64;
        for &node in space.velocity().element_nodes(delta.element) {
            for comp in 0..2 {
                let v = delta_test_field(&space, node, comp);
                let exact = v.eval_in(delta.element, x0).value;
                for (i, e) in exact.iter().enumerate() {
                    err = err.max((delta.pair_component(&v, i) - e).abs());
                }
            }
        }
        let h = mesh.h();
        rows.push(DeltaRow {
            n,
            h,
            reproduction_error: err,
            l1: delta.lq_norm(1.0, false, None),
            linf_scaled: h * h * delta.linf_norm(40),
        });
    }
    let l1: Vec<f64> = rows.iter().map(|r| r.l1).collect();
    let li: Vec<f64> = rows.iter().map(|r| r.linf_scaled).collect();
    Ok(DeltaContract {
        x0,
        l1_variation: variation(&l1),
        linf_variation: variation(&li),
        rows,
    })
}

/// Point values of a Stokes solution against their Green's pairings at one
/// `x0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RepresentationRow {
    pub x0: Point,
    pub value: [f64; 2],
    /// `a((u_h, p_h), (g_{0,h}, λ_{0,h}))` for `i = 1, 2`.
    pub value_pairing: [f64; 2],
    /// `grad[i][j] = ∂_j u_{h,i}(x0)`.
    pub grad: [[f64; 2]; 2],
    /// `-a((u_h, p_h), (g_{1,h}, λ_{1,h}))` for each `(i, j)`.
    pub grad_pairing: [[f64; 2]; 2],
    pub max_error: f64,
}

/// Solves with a smooth force and checks both identities at `x0`.
pub fn representation_check(sys: &SaddleSystem, domain: &Domain, x0: Point) -> Result<RepresentationRow> {
    let space = sys.space();
    let k = space.velocity_degree();
    let f = |x: Point| [(3.0 * x[1]).sin() + x[0], (2.0 * x[0]).cos() * x[1]];
    let sol = sys.solve(&Rhs {
        f: body_force(sys, &f, 2 * k + 4),
        g: vec![0.0; sys.n_pressure()],
    })?;
    let t = space.mesh().locate_point(x0)?;
    let s = sol.velocity.eval_in(t, x0);
    let mut row = RepresentationRow {
        x0,
        value: s.value,
        value_pairing: [0.0; 2],
        grad: s.grad,
        grad_pairing: [[0.0; 2]; 2],
        max_error: 0.0,
    };
    let pair = |kind| -> Result<f64> {
        let case = GreensCase::new(space, kind, x0, domain)?;
        let g = solve_greens(sys, &case)?;
        Ok(sys.a_form(&sol.velocity, &sol.pressure, &g.velocity, &g.pressure))
    };
    for i in 0..2 {
        row.value_pairing[i] = pair(GreensKind::G0 { i })?;
        row.max_error = row.max_error.max((row.value_pairing[i] - row.value[i]).abs());
        for j in 0..2 {
            row.grad_pairing[i][j] = -pair(GreensKind::G1 { i, j })?;
            row.max_error = row.max_error.max((row.grad_pairing[i][j] - row.grad[i][j]).abs());
        }
    }
    Ok(row)
}

/// `count` points drawn uniformly from `[0.05, 0.95]²` with the given seed.
pub fn random_points(seed: u64, count: usize) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn representation_holds_on_a_coarse_mesh() {
        let domain = Domain::unit_square();
        let mesh = Arc::new(Mesh::structured(&domain, 4).unwrap());
        let sys = SaddleSystem::assemble(&FeSpace::taylor_hood(mesh, 2).unwrap()).unwrap();
        for x0 in random_points(3, 2) {
            let row = representation_check(&sys, &domain, x0).unwrap();
            assert!(row.max_error < 1e-8, "{row:?}");
        }
    }

    #[test]
    fn delta_contract_reproduces_the_basis() {
        let c = delta_contract(&Domain::unit_square(), [0.3, 0.7], &[4, 8], 2).unwrap();
        for r in &c.rows {
            assert!(r.reproduction_error < 1e-12, "{r:?}");
        }
    }

    #[test]
    fn equal_order_pair_collapses() {
        let rows = infsup_sweep(&Domain::unit_square(), &[4, 8], 1, 1).unwrap();
        assert!(infsup_collapses(&rows, 1e-6), "{rows:?}");
        let th = infsup_sweep(&Domain::unit_square(), &[4, 8], 2, 1).unwrap();
        assert!(!infsup_collapses(&th, 1e-6));
    }

    #[test]
    fn random_points_are_seeded() {
        assert_eq!(random_points(1, 3), random_points(1, 3));
        assert_ne!(random_points(1, 3), random_points(2, 3));
    }
}
