//! Closed-form Stokes solutions on the unit square and the convergence study
//! built on them.
//!
//! Velocity is the curl of `ψ = g(x) g(y)`, `g(s) = s²(1 - s)²`, so it is
//! divergence free and vanishes on the boundary; the pressure is `x³ - 1/4`.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::greens::SlopeFit;
use crate::mesh::Mesh;
use crate::norms::{probe_norm, Lp, NormSpec, Quantity};
use crate::space::{FeSpace, Probe, Sampled};
use crate::stokes::{body_force, projection_rh, ritz_projection, Rhs, SaddleSystem, Solution};

fn g(s: f64) -> [f64; 4] {
    // g, g', g'', g'''
    [
        s * s * (1.0 - s) * (1.0 - s),
        2.0 * s * (1.0 - s) * (1.0 - 2.0 * s),
        2.0 - 12.0 * s + 12.0 * s * s,
        -12.0 + 24.0 * s,
    ]
}

/// `hess[c][i][j] = ∂_i ∂_j u_c`.
pub type Hessian = [[[f64; 2]; 2]; 2];

#[derive(Clone, Copy, Debug, Default)]
pub struct Manufactured;

impl Manufactured {
    /// Only the unit square is supported.
    pub fn on(domain: &Domain) -> Result<Self> {
        let sq = Domain::unit_square();
        let same = domain.vertices().len() == 4
            && domain
                .vertices()
                .iter()
                .zip(sq.vertices())
                .all(|(a, b)| (a[0] - b[0]).abs() < 1e-14 && (a[1] - b[1]).abs() < 1e-14);
        if !same {
            return Err(Error::Precondition(
                "the manufactured solution is defined on the unit square only".into(),
            ));
        }
        Ok(Self)
    }

    pub fn velocity(&self, x: Point) -> Sampled {
        let (a, b) = (g(x[0]), g(x[1]));
        Sampled {
            value: [a[0] * b[1], -a[1] * b[0]],
            grad: [[a[1] * b[1], a[0] * b[2]], [-a[2] * b[0], -a[1] * b[1]]],
        }
    }

    pub fn velocity_hessian(&self, x: Point) -> Hessian {
        let (a, b) = (g(x[0]), g(x[1]));
        [
            [[a[2] * b[1], a[1] * b[2]], [a[1] * b[2], a[0] * b[3]]],
            [[-a[3] * b[0], -a[2] * b[1]], [-a[2] * b[1], -a[1] * b[2]]],
        ]
    }

    pub fn pressure(&self, x: Point) -> Sampled {
        Sampled::scalar(x[0].powi(3) - 0.25, [3.0 * x[0] * x[0], 0.0])
    }

    /// `f = -Δu + ∇p`.
    pub fn force(&self, x: Point) -> [f64; 2] {
        let h = self.velocity_hessian(x);
        let gp = self.pressure(x).grad[0];
        [
            -(h[0][0][0] + h[0][1][1]) + gp[0],
            -(h[1][0][0] + h[1][1][1]) + gp[1],
        ]
    }

    pub fn solve(&self, sys: &SaddleSystem) -> Result<Solution> {
        let k = sys.space().velocity_degree();
        let rhs = Rhs {
            f: body_force(sys, &|x| self.force(x), 2 * k + 6),
            g: vec![0.0; sys.n_pressure()],
        };
        sys.solve(&rhs)
    }
}

/// The velocity as a probe.
pub struct MsVelocity;
/// The pressure as a probe.
pub struct MsPressure;

impl Probe for MsVelocity {
    fn probe(&self, _t: usize, x: Point) -> Sampled {
        Manufactured.velocity(x)
    }
}

impl Probe for MsPressure {
    fn probe(&self, _t: usize, x: Point) -> Sampled {
        Manufactured.pressure(x)
    }
}

/// `f = ∇(x + y - 1)`: the exact solution has zero velocity and a linear
/// pressure, which every pressure space reproduces.
pub fn null_velocity_force(_x: Point) -> [f64; 2] {
    [1.0, 1.0]
}

pub fn null_velocity_pressure(x: Point) -> f64 {
    x[0] + x[1] - 1.0
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub n: usize,
    pub h: f64,
    pub velocity_h1: f64,
    pub pressure_l2: f64,
    pub error: f64,
    /// Same measure for the Ritz projection of `u` and `r_h p`.
    pub best: f64,
    pub quasi_optimality: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub degree: usize,
    pub rows: Vec<ConvergenceRow>,
    pub rate: f64,
    pub rate_std_err: f64,
}

fn error_measure(
    mesh: &Mesh,
    u: &dyn Probe,
    p: &dyn Probe,
    deg: usize,
) -> (f64, f64) {
    let v = probe_norm(mesh, None, &MsVelocity, Some(u), &NormSpec::new(Lp::L2, Quantity::Value, deg));
    let gr = probe_norm(mesh, None, &MsVelocity, Some(u), &NormSpec::new(Lp::L2, Quantity::Gradient, deg));
    let pe = probe_norm(mesh, None, &MsPressure, Some(p), &NormSpec::new(Lp::L2, Quantity::Value, deg));
    (v.hypot(gr), pe)
}

/// Solves on `Mesh::structured(domain, n)` for each `n` and fits the rate of
/// `‖u - u_h‖_{H¹} + ‖p - p_h‖_{L²}` against `h`.
pub fn convergence_study(levels: &[usize], k: usize) -> Result<ConvergenceStudy> {
    let domain = Domain::unit_square();
    let ms = Manufactured::on(&domain)?;
    let mut rows = Vec::new();
    for &n in levels {
        let mesh = Arc::new(Mesh::structured(&domain, n)?);
        let space = FeSpace::taylor_hood(mesh.clone(), k)?;
        let sys = SaddleSystem::assemble(&space)?;
        let sol = ms.solve(&sys)?;
        let deg = 2 * k + 8;
        let (ve, pe) = error_measure(&mesh, &sol.velocity, &sol.pressure, deg);
        let ru = ritz_projection(&sys, &MsVelocity, deg);
        let rp = projection_rh(&sys, &MsPressure, deg);
        let (bv, bp) = error_measure(&mesh, &ru, &rp, deg);
        rows.push(ConvergenceRow {
            n,
            h: mesh.h(),
            velocity_h1: ve,
            pressure_l2: pe,
            error: ve + pe,
            best: bv + bp,
            quasi_optimality: (ve + pe) / (bv + bp),
            iterations: sol.stats.iterations,
        });
    }
    let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
    let e: Vec<f64> = rows.iter().map(|r| r.error).collect();
    let fit = SlopeFit::fit(&h, &e);
    Ok(ConvergenceStudy {
        degree: k,
        rows,
        rate: fit.slope,
        rate_std_err: fit.std_err,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn closed_form_is_consistent() {
        let ms = Manufactured;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let e = 1e-5;
        for _ in 0..10 {
            let x = [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)];
            let u = ms.velocity(x);
            let hs = ms.velocity_hessian(x);
            assert!(u.divergence().abs() < 1e-14);
            for d in 0..2 {
                let mut xp = x;
                let mut xm = x;
                xp[d] += e;
                xm[d] -= e;
                let (up, um) = (ms.velocity(xp), ms.velocity(xm));
                for c in 0..2 {
                    let fd = (up.value[c] - um.value[c]) / (2.0 * e);
                    assert!((fd - u.grad[c][d]).abs() < 1e-8);
                    for j in 0..2 {
                        let fd = (up.grad[c][j] - um.grad[c][j]) / (2.0 * e);
                        assert!((fd - hs[c][d][j]).abs() < 1e-7);
                    }
                }
                let fd = (ms.pressure(xp).value[0] - ms.pressure(xm).value[0]) / (2.0 * e);
                assert!((fd - ms.pressure(x).grad[0][d]).abs() < 1e-8);
            }
        }
        // zero trace and zero mean pressure
        for s in [0.0, 0.3, 1.0] {
            assert_eq!(ms.velocity([0.0, s]).value_norm(), 0.0);
            assert_eq!(ms.velocity([s, 1.0]).value_norm(), 0.0);
        }
    }

    #[test]
    fn only_on_the_unit_square() {
        let tri = Domain::new(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap();
        assert!(Manufactured::on(&tri).is_err());
        assert!(Manufactured::on(&Domain::unit_square()).is_ok());
    }

    #[test]
    fn coarse_study_converges() {
        let s = convergence_study(&[4, 8], 2).unwrap();
        assert!(s.rows[1].error < s.rows[0].error / 3.0);
        for r in &s.rows {
            assert!(r.quasi_optimality < 10.0, "{r:?}");
        }
    }
}
