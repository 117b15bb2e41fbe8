//! Assembly and solution of the discrete Stokes saddle-point problem
//!
//! ```text
//! (∇u_h, ∇v_h) - (p_h, ∇·v_h) = F(v_h)   for all v_h in V_h
//! (∇·u_h, q_h)                = G(q_h)   for all q_h in M_h
//! ```
//!
//! The velocity block is factored once per space; the pressure is found by
//! conjugate gradients on the Schur complement with the pressure mass matrix
//! as preconditioner, then normalized to zero mean.

use std::sync::Arc;

use faer::{Mat, Side};

use crate::error::{Error, Result};
use crate::basis::MAX_BASIS;
use crate::geometry::Point;
use crate::mesh::Mesh;
use crate::quadrature::QuadratureRule;
use crate::regularization::{DeltaFunction, SmoothBump};
use crate::space::{FeField, FeSpace, FieldKind, Probe};
use crate::sparse::{dot, norm2, Cholesky, Csr, UNUSED};

/// Relative tolerance of the Schur-complement iteration.
pub const SCHUR_TOL: f64 = 1e-13;
const MAX_ITERATIONS: usize = 2000;

/// Physical basis data of one element at the points of a rule.
struct ElementData {
    det: f64,
    points: Vec<Point>,
    vel_vals: Vec<f64>,
    vel_grads: Vec<Point>,
    pres_vals: Vec<f64>,
}

struct Kernel<'a> {
    space: &'a FeSpace,
    rule: QuadratureRule,
    vel: crate::basis::Tabulation,
    pres: crate::basis::Tabulation,
}

impl<'a> Kernel<'a> {
    fn new(space: &'a FeSpace, degree: usize) -> Self {
        let rule = QuadratureRule::triangle(degree);
        let vel = space.velocity().basis().tabulate(&rule);
        let pres = space.pressure().basis().tabulate(&rule);
        Self {
            space,
            rule,
            vel,
            pres,
        }
    }

    fn element(&self, t: usize) -> ElementData {
        let a = self.space.mesh().affine(t);
        let points = self.rule.points.iter().map(|&p| a.to_physical(p)).collect();
        let vel_grads = self.vel.grads.iter().map(|&g| a.push_gradient(g)).collect();
        ElementData {
            det: a.det.abs(),
            points,
            vel_vals: self.vel.values.clone(),
            vel_grads,
            pres_vals: self.pres.values.clone(),
        }
    }
}

/// Assembled operators of one velocity/pressure space pair.
pub struct SaddleSystem {
    space: Arc<FeSpace>,
    free_index: Vec<usize>,
    free_nodes: Vec<usize>,
    /// Scalar stiffness on interior velocity nodes; `A = diag(K, K)`.
    pub k: Csr,
    /// Divergence coupling, pressure rows by `[comp 0 | comp 1]` free columns.
    pub b: Csr,
    /// Pressure mass matrix.
    pub mp: Csr,
    /// `∫ ψ_q` for every pressure basis function.
    pub pmass: Vec<f64>,
    area: f64,
    k_chol: Cholesky,
    mp_chol: Cholesky,
}

impl std::fmt::Debug for SaddleSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SaddleSystem")
            .field("free", &self.free_nodes.len())
            .field("pressure", &self.mp.n_rows)
            .finish()
    }
}

/// Load vectors: `f` on free velocity dofs, `g` on pressure dofs.
#[derive(Clone, Debug)]
pub struct Rhs {
    pub f: Vec<f64>,
    pub g: Vec<f64>,
}

#[derive(Clone, Debug, Default)]
pub struct SolveStats {
    pub iterations: usize,
    /// Relative algebraic residual of the full saddle system.
    pub residual: f64,
    /// `Σ g_q` removed by the compatibility projection.
    pub compatibility_defect: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub velocity: FeField,
    pub pressure: FeField,
    pub stats: SolveStats,
}

impl SaddleSystem {
    pub fn assemble(space: &Arc<FeSpace>) -> Result<Self> {
        let mesh = space.mesh();
        let vs = space.velocity();
        let ps = space.pressure();
        let mut free_index = vec![UNUSED; vs.n_nodes()];
        let mut free_nodes = Vec::new();
        for (i, &b) in vs.boundary_nodes().iter().enumerate() {
            if !b {
                free_index[i] = free_nodes.len();
                free_nodes.push(i);
            }
        }
        let nf = free_nodes.len();
        let np = ps.n_nodes();
        if nf == 0 {
            return Err(Error::SingularSystem("no interior velocity nodes".into()));
        }
        let fi = &free_index;
        let mut k = Csr::from_elements(
            nf,
            nf,
            mesh.n_elements(),
            |t, out| out.extend(vs.element_nodes(t).iter().map(|&g| fi[g])),
            |t, out| out.extend(vs.element_nodes(t).iter().map(|&g| fi[g])),
        );
        let mut b = Csr::from_elements(
            np,
            2 * nf,
            mesh.n_elements(),
            |t, out| out.extend_from_slice(ps.element_nodes(t)),
            |t, out| {
                for c in 0..2 {
                    out.extend(vs.element_nodes(t).iter().map(|&g| {
                        if fi[g] == UNUSED {
                            UNUSED
                        } else {
                            c * nf + fi[g]
                        }
                    }));
                }
            },
        );
        let mut mp = Csr::from_elements(
            np,
            np,
            mesh.n_elements(),
            |t, out| out.extend_from_slice(ps.element_nodes(t)),
            |t, out| out.extend_from_slice(ps.element_nodes(t)),
        );
        let mut pmass = vec![0.0; np];
        let kern = Kernel::new(space, 2 * space.velocity_degree());
        let nv = vs.local_count();
        let npl = ps.local_count();
        for t in 0..mesh.n_elements() {
            let e = kern.element(t);
            let vn = vs.element_nodes(t);
            let pn = ps.element_nodes(t);
            for (q, w) in kern.rule.weights.iter().enumerate() {
                let wd = w * e.det;
                let g = &e.vel_grads[q * nv..(q + 1) * nv];
                let pv = &e.pres_vals[q * npl..(q + 1) * npl];
                for i in 0..nv {
                    let ri = fi[vn[i]];
                    if ri == UNUSED {
                        continue;
                    }
                    for j in 0..nv {
                        let cj = fi[vn[j]];
                        if cj != UNUSED {
                            k.add(ri, cj, wd * (g[i][0] * g[j][0] + g[i][1] * g[j][1]));
                        }
                    }
                    for (l, &pq) in pn.iter().enumerate() {
                        b.add(pq, ri, wd * pv[l] * g[i][0]);
                        b.add(pq, nf + ri, wd * pv[l] * g[i][1]);
                    }
                }
                for (l, &pq) in pn.iter().enumerate() {
                    pmass[pq] += wd * pv[l];
                    for (m, &pr) in pn.iter().enumerate() {
                        mp.add(pq, pr, wd * pv[l] * pv[m]);
                    }
                }
            }
        }
        let k_chol = Cholesky::new(&k, "velocity stiffness")?;
        let mp_chol = Cholesky::new(&mp, "pressure mass")?;
        Ok(Self {
            space: space.clone(),
            free_index,
            free_nodes,
            k,
            b,
            mp,
            pmass,
            area: mesh.area(),
            k_chol,
            mp_chol,
        })
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn n_free(&self) -> usize {
        self.free_nodes.len()
    }

    pub fn n_pressure(&self) -> usize {
        self.mp.n_rows
    }

    pub fn free_index(&self) -> &[usize] {
        &self.free_index
    }

    /// Interior velocity coefficients `[comp 0 | comp 1]` of a field.
    pub fn restrict(&self, v: &FeField) -> Vec<f64> {
        let n = self.space.velocity().n_nodes();
        let c = v.coeffs();
        let mut out = Vec::with_capacity(2 * self.n_free());
        for comp in 0..2 {
            out.extend(self.free_nodes.iter().map(|&g| c[comp * n + g]));
        }
        out
    }

    /// Velocity field with the given interior coefficients and zero trace.
    pub fn extend(&self, u: &[f64]) -> FeField {
        let n = self.space.velocity().n_nodes();
        let nf = self.n_free();
        let mut c = vec![0.0; 2 * n];
        for comp in 0..2 {
            for (i, &g) in self.free_nodes.iter().enumerate() {
                c[comp * n + g] = u[comp * nf + i];
            }
        }
        FeField::new(self.space.clone(), FieldKind::Velocity, c)
    }

    pub fn pressure_field(&self, p: Vec<f64>) -> FeField {
        FeField::new(self.space.clone(), FieldKind::Pressure, p)
    }

    pub fn apply_a(&self, u: &[f64]) -> Vec<f64> {
        let nf = self.n_free();
        let mut y = vec![0.0; 2 * nf];
        self.k.mul_into(&u[..nf], &mut y[..nf]);
        self.k.mul_into(&u[nf..], &mut y[nf..]);
        y
    }

    pub fn solve_a(&self, f: &[f64]) -> Vec<f64> {
        let nf = self.n_free();
        let mut m = Mat::from_fn(nf, 2, |i, c| f[c * nf + i]);
        self.k_chol.solve_columns(&mut m);
        let mut out = Vec::with_capacity(2 * nf);
        for c in 0..2 {
            out.extend((0..nf).map(|i| m[(i, c)]));
        }
        out
    }

    /// Scalar stiffness solve on interior nodes.
    pub fn solve_k(&self, f: &[f64]) -> Vec<f64> {
        self.k_chol.solve(f)
    }

    pub fn solve_mass(&self, g: &[f64]) -> Vec<f64> {
        self.mp_chol.solve(g)
    }

    /// Removes the mean of a pressure coefficient vector (as a function).
    pub fn zero_mean(&self, p: &mut [f64]) {
        let m = dot(&self.pmass, p) / self.area;
        p.iter_mut().for_each(|v| *v -= m);
    }

    /// Projects a pressure load onto the annihilator of constants.
    fn compatible(&self, g: &mut [f64]) -> f64 {
        let s: f64 = g.iter().sum();
        let c = s / self.area;
        for (v, m) in g.iter_mut().zip(&self.pmass) {
            *v -= c * m;
        }
        s
    }

    fn schur(&self, d: &[f64]) -> Vec<f64> {
        self.b.mul(&self.solve_a(&self.b.mul_transpose(d)))
    }

    pub fn solve(&self, rhs: &Rhs) -> Result<Solution> {
        let nf = self.n_free();
        let np = self.n_pressure();
        if rhs.f.len() != 2 * nf || rhs.g.len() != np {
            return Err(Error::MismatchedSpaces(format!(
                "load sizes ({}, {}) vs system ({}, {np})",
                rhs.f.len(),
                rhs.g.len(),
                2 * nf
            )));
        }
        let f = &rhs.f;
        let mut g = rhs.g.clone();
        let defect = self.compatible(&mut g);
        let af = self.solve_a(f);
        let baf = self.b.mul(&af);
        let mut r: Vec<f64> = g.iter().zip(&baf).map(|(a, b)| a - b).collect();
        self.compatible(&mut r);
        let mut p = vec![0.0; np];
        let precondition = |r: &[f64]| {
            let mut z = self.mp_chol.solve(r);
            self.zero_mean(&mut z);
            z
        };
        let mut z = precondition(&r);
        let mut rz = dot(&r, &z);
        let rz0 = rz;
        let mut iterations = 0;
        if rz0 > 0.0 {
            let mut d = z.clone();
            loop {
                let w = self.schur(&d);
                let dw = dot(&d, &w);
                if dw <= 0.0 {
                    return Err(Error::SingularSystem(format!(
                        "Schur complement not positive (d·Sd = {dw:e}) after {iterations} iterations"
                    )));
                }
                let alpha = rz / dw;
                for i in 0..np {
                    p[i] += alpha * d[i];
                    r[i] -= alpha * w[i];
                }
                self.compatible(&mut r);
                z = precondition(&r);
                let rz_new = dot(&r, &z);
                iterations += 1;
                if rz_new.max(0.0).sqrt() <= SCHUR_TOL * rz0.sqrt() {
                    break;
                }
                if iterations >= MAX_ITERATIONS {
                    return Err(Error::NonConvergence(format!(
                        "Schur iteration stalled at relative residual {:e}",
                        (rz_new / rz0).sqrt()
                    )));
                }
                let beta = rz_new / rz;
                rz = rz_new;
                for i in 0..np {
                    d[i] = z[i] + beta * d[i];
                }
            }
        }
        self.zero_mean(&mut p);
        let btp = self.b.mul_transpose(&p);
        let load: Vec<f64> = f.iter().zip(&btp).map(|(a, b)| a + b).collect();
        let u = self.solve_a(&load);
        // full residual of the saddle system
        let au = self.apply_a(&u);
        let r1: Vec<f64> = au.iter().zip(&btp).zip(f).map(|((a, b), c)| a - b - c).collect();
        let bu = self.b.mul(&u);
        let r2: Vec<f64> = bu.iter().zip(&g).map(|(a, b)| a - b).collect();
        let scale = norm2(f).max(norm2(&g)).max(norm2(&au)).max(norm2(&btp));
        let residual = if scale > 0.0 {
            norm2(&r1).hypot(norm2(&r2)) / scale
        } else {
            0.0
        };
        if residual > 1e-10 {
            return Err(Error::NonConvergence(format!(
                "saddle residual {residual:e} exceeds 1e-10"
            )));
        }
        Ok(Solution {
            velocity: self.extend(&u),
            pressure: self.pressure_field(p),
            stats: SolveStats {
                iterations,
                residual,
                compatibility_defect: defect,
            },
        })
    }

    /// `a((u, p), (v, q)) = (∇u, ∇v) - (p, ∇·v) + (∇·u, q)`.
    pub fn a_form(&self, u: &FeField, p: &FeField, v: &FeField, q: &FeField) -> f64 {
        let uu = self.restrict(u);
        let vv = self.restrict(v);
        dot(&self.apply_a(&uu), &vv) - dot(p.coeffs(), &self.b.mul(&vv))
            + dot(q.coeffs(), &self.b.mul(&uu))
    }

    /// Dense Schur complement `B A⁻¹ Bᵀ`.
    pub fn schur_dense(&self) -> Mat<f64> {
        let nf = self.n_free();
        let np = self.n_pressure();
        let bt = self.b.to_dense();
        let mut y = Mat::<f64>::zeros(nf, 2 * np);
        for q in 0..np {
            for c in 0..2 {
                for i in 0..nf {
                    y[(i, c * np + q)] = bt[(q, c * nf + i)];
                }
            }
        }
        self.k_chol.solve_columns(&mut y);
        let mut s = Mat::<f64>::zeros(np, np);
        for q in 0..np {
            for r in 0..np {
                let mut acc = 0.0;
                for c in 0..2 {
                    for i in 0..nf {
                        acc += bt[(r, c * nf + i)] * y[(i, c * np + q)];
                    }
                }
                s[(r, q)] = acc;
            }
        }
        s
    }
}

/// Result of the discrete inf-sup computation.
#[derive(Clone, Debug)]
pub struct InfSup {
    pub beta: f64,
    /// Smallest generalized eigenvalues of `S q = λ M q`, ascending.
    pub lowest: Vec<f64>,
}

/// `β_h = sqrt(λ_2)` of `B A⁻¹ Bᵀ q = λ M_p q`; the first eigenvalue belongs
/// to the constant pressure, which is excluded by the zero-mean constraint.
pub fn compute_infsup(sys: &SaddleSystem) -> Result<InfSup> {
    let s = sys.schur_dense();
    let m = sys.mp.to_dense();
    let eig = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::NonConvergence(format!("mass eigensolver: {e:?}")))?;
    let n = m.nrows();
    let u = eig.U();
    let sv = eig.S();
    let mut w = Mat::<f64>::zeros(n, n);
    for j in 0..n {
        let lam = sv[j];
        if lam <= 0.0 {
            return Err(Error::SingularSystem("pressure mass matrix not definite".into()));
        }
        let f = 1.0 / lam.sqrt();
        for i in 0..n {
            w[(i, j)] = u[(i, j)] * f;
        }
    }
    // W = U Λ^{-1/2}; Wᵀ S W has the generalized eigenvalues
    let c = w.transpose() * &s * &w;
    let c = Mat::from_fn(n, n, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    let vals = c
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::NonConvergence(format!("Schur eigensolver: {e:?}")))?;
    let beta = vals.get(1).copied().unwrap_or(0.0).max(0.0).sqrt();
    Ok(InfSup {
        beta,
        lowest: vals.iter().take(6).copied().collect(),
    })
}

fn zero_rhs(sys: &SaddleSystem) -> Rhs {
    Rhs {
        f: vec![0.0; 2 * sys.n_free()],
        g: vec![0.0; sys.n_pressure()],
    }
}

/// `(f, v)` for a body force.
pub fn body_force(sys: &SaddleSystem, f: &dyn Fn(Point) -> [f64; 2], degree: usize) -> Vec<f64> {
    let space = sys.space();
    let vs = space.velocity();
    let nf = sys.n_free();
    let nv = vs.local_count();
    let kern = Kernel::new(space, degree);
    let mut out = vec![0.0; 2 * nf];
    for t in 0..space.mesh().n_elements() {
        let e = kern.element(t);
        let vn = vs.element_nodes(t);
        for (q, w) in kern.rule.weights.iter().enumerate() {
            let fx = f(e.points[q]);
            let wd = w * e.det;
            for i in 0..nv {
                let r = sys.free_index[vn[i]];
                if r != UNUSED {
                    let phi = e.vel_vals[q * nv + i];
                    out[r] += wd * fx[0] * phi;
                    out[nf + r] += wd * fx[1] * phi;
                }
            }
        }
    }
    out
}

/// `(∇w, ∇v)` for a probe sampled on the space's own mesh.
pub fn gradient_pairing(sys: &SaddleSystem, w: &dyn Probe, degree: usize) -> Vec<f64> {
    let space = sys.space();
    let vs = space.velocity();
    let nf = sys.n_free();
    let nv = vs.local_count();
    let kern = Kernel::new(space, degree);
    let mut out = vec![0.0; 2 * nf];
    for t in 0..space.mesh().n_elements() {
        let e = kern.element(t);
        let vn = vs.element_nodes(t);
        for (q, wt) in kern.rule.weights.iter().enumerate() {
            let s = w.probe(t, e.points[q]);
            let wd = wt * e.det;
            for i in 0..nv {
                let r = sys.free_index[vn[i]];
                if r != UNUSED {
                    let g = e.vel_grads[q * nv + i];
                    out[r] += wd * (s.grad[0][0] * g[0] + s.grad[0][1] * g[1]);
                    out[nf + r] += wd * (s.grad[1][0] * g[0] + s.grad[1][1] * g[1]);
                }
            }
        }
    }
    out
}

/// `(w, v)` for a vector probe.
pub fn l2_pairing(sys: &SaddleSystem, w: &dyn Probe, degree: usize) -> Vec<f64> {
    let space = sys.space();
    let vs = space.velocity();
    let nf = sys.n_free();
    let nv = vs.local_count();
    let kern = Kernel::new(space, degree);
    let mut out = vec![0.0; 2 * nf];
    for t in 0..space.mesh().n_elements() {
        let e = kern.element(t);
        let vn = vs.element_nodes(t);
        for (q, wt) in kern.rule.weights.iter().enumerate() {
            let s = w.probe(t, e.points[q]);
            let wd = wt * e.det;
            for i in 0..nv {
                let r = sys.free_index[vn[i]];
                if r != UNUSED {
                    let phi = e.vel_vals[q * nv + i];
                    out[r] += wd * s.value[0] * phi;
                    out[nf + r] += wd * s.value[1] * phi;
                }
            }
        }
    }
    out
}

/// `(∇·w, ψ_q)` for every pressure basis function.
pub fn divergence_moments(sys: &SaddleSystem, w: &dyn Probe, degree: usize) -> Vec<f64> {
    scalar_moments(sys, degree, |t, x| w.probe(t, x).divergence())
}

/// `(s, ψ_q)` for a scalar probe (component 0).
pub fn pressure_moments(sys: &SaddleSystem, s: &dyn Probe, degree: usize) -> Vec<f64> {
    scalar_moments(sys, degree, |t, x| s.probe(t, x).value[0])
}

fn scalar_moments(sys: &SaddleSystem, degree: usize, f: impl Fn(usize, Point) -> f64) -> Vec<f64> {
    let space = sys.space();
    let ps = space.pressure();
    let npl = ps.local_count();
    let kern = Kernel::new(space, degree);
    let mut out = vec![0.0; sys.n_pressure()];
    for t in 0..space.mesh().n_elements() {
        let e = kern.element(t);
        let pn = ps.element_nodes(t);
        for (q, wt) in kern.rule.weights.iter().enumerate() {
            let v = f(t, e.points[q]) * wt * e.det;
            if v == 0.0 {
                continue;
            }
            for (l, &g) in pn.iter().enumerate() {
                out[g] += v * e.pres_vals[q * npl + l];
            }
        }
    }
    out
}

/// Runs `visit(t, x, weight·|det|, values, physical gradients)` over the
/// quadrature points of the elements carrying `δ_h`.
fn delta_points(
    sys: &SaddleSystem,
    delta: &DeltaFunction,
    mut visit: impl FnMut(usize, f64, &[f64], &[Point], &[f64]),
) {
    let space = sys.space();
    let degree = delta.pairing_degree(space.velocity_degree());
    let kern = Kernel::new(space, degree);
    let nv = space.velocity().local_count();
    let npl = space.pressure().local_count();
    for t in delta.support_elements(space.mesh()) {
        let e = kern.element(t);
        for (q, wt) in kern.rule.weights.iter().enumerate() {
            let d = delta.eval(e.points[q]).0;
            visit(
                t,
                wt * e.det * d,
                &e.vel_vals[q * nv..(q + 1) * nv],
                &e.vel_grads[q * nv..(q + 1) * nv],
                &e.pres_vals[q * npl..(q + 1) * npl],
            );
        }
    }
}

/// `(δ_h e_i, v)`.
pub fn delta_load(sys: &SaddleSystem, delta: &DeltaFunction, i: usize) -> Vec<f64> {
    let nf = sys.n_free();
    let vs = sys.space().velocity();
    let mut out = vec![0.0; 2 * nf];
    delta_points(sys, delta, |t, wd, vals, _, _| {
        for (l, &g) in vs.element_nodes(t).iter().enumerate() {
            let r = sys.free_index[g];
            if r != UNUSED {
                out[i * nf + r] += wd * vals[l];
            }
        }
    });
    out
}

/// `((∂_j δ_h) e_i, v) = -(δ_h, ∂_j v_i)`.
pub fn delta_derivative_load(
    sys: &SaddleSystem,
    delta: &DeltaFunction,
    i: usize,
    j: usize,
) -> Vec<f64> {
    let nf = sys.n_free();
    let vs = sys.space().velocity();
    let mut out = vec![0.0; 2 * nf];
    delta_points(sys, delta, |t, wd, _, grads, _| {
        for (l, &g) in vs.element_nodes(t).iter().enumerate() {
            let r = sys.free_index[g];
            if r != UNUSED {
                out[i * nf + r] -= wd * grads[l][j];
            }
        }
    });
    out
}

/// `(δ_h, ψ_q)`.
pub fn delta_pressure_moments(sys: &SaddleSystem, delta: &DeltaFunction) -> Vec<f64> {
    let ps = sys.space().pressure();
    let mut out = vec![0.0; sys.n_pressure()];
    delta_points(sys, delta, |t, wd, _, _, pv| {
        for (l, &g) in ps.element_nodes(t).iter().enumerate() {
            out[g] += wd * pv[l];
        }
    });
    out
}

/// Right-hand sides of the problems solved in this crate.
pub enum RhsFunctional<'a> {
    /// `(f, v)`.
    BodyForce(&'a dyn Fn(Point) -> [f64; 2]),
    /// `(δ_h e_i, v)`.
    DeltaComponent { delta: &'a DeltaFunction, i: usize },
    /// `((∂_j δ_h) e_i, v)`, assembled by parts.
    DeltaDerivative {
        delta: &'a DeltaFunction,
        i: usize,
        j: usize,
    },
    /// Divergence data `δ_h - φ` with zero momentum load.
    DivergenceData {
        delta: &'a DeltaFunction,
        bump: &'a SmoothBump,
    },
}

/// Load vectors of a functional; the quadrature degree applies to body forces.
pub fn assemble_rhs(sys: &SaddleSystem, rhs: &RhsFunctional, degree: usize) -> Result<Rhs> {
    let mut out = zero_rhs(sys);
    match rhs {
        RhsFunctional::BodyForce(f) => out.f = body_force(sys, *f, degree),
        RhsFunctional::DeltaComponent { delta, i } => out.f = delta_load(sys, delta, *i),
        RhsFunctional::DeltaDerivative { delta, i, j } => {
            out.f = delta_derivative_load(sys, delta, *i, *j)
        }
        RhsFunctional::DivergenceData { delta, bump } => {
            let d = delta_pressure_moments(sys, delta);
            let b = bump.pressure_moments(sys.space());
            let mismatch = delta.mass() - bump.mass_on(sys.space().mesh());
            if mismatch.abs() > 1e-9 {
                return Err(Error::Compatibility(format!(
                    "∫(δ_h - φ) = {mismatch:e} exceeds 1e-9"
                )));
            }
            out.g = d.iter().zip(&b).map(|(a, b)| a - b).collect();
        }
    }
    Ok(out)
}

/// `R_h z`: componentwise discrete Laplacian projection of a probe.
pub fn ritz_projection(sys: &SaddleSystem, z: &dyn Probe, degree: usize) -> FeField {
    let load = gradient_pairing(sys, z, degree);
    let u = sys.solve_a(&load);
    sys.extend(&u)
}

/// `P_h v`: the divergence-constrained H¹ projection.
pub fn projection_ph(sys: &SaddleSystem, v: &dyn Probe, degree: usize) -> Result<FeField> {
    let rhs = Rhs {
        f: gradient_pairing(sys, v, degree),
        g: divergence_moments(sys, v, degree),
    };
    Ok(sys.solve(&rhs)?.velocity)
}

/// `r_h q`: the L² projection onto the full continuous pressure space.
pub fn projection_rh(sys: &SaddleSystem, q: &dyn Probe, degree: usize) -> FeField {
    let load = pressure_moments(sys, q, degree);
    sys.pressure_field(sys.solve_mass(&load))
}

/// `max_q |(∇·(v - w_h), ψ_q)| / ‖ψ_q‖` over all pressure basis functions.
pub fn divergence_defect(sys: &SaddleSystem, v: &dyn Probe, wh: &FeField, degree: usize) -> f64 {
    let dv = divergence_moments(sys, v, degree);
    let dw = sys.b.mul(&sys.restrict(wh));
    dv.iter()
        .zip(&dw)
        .enumerate()
        .map(|(q, (a, b))| (a - b).abs() / sys.mp.get(q, q).sqrt())
        .fold(0.0, f64::max)
}

/// A finer nested mesh used as the quadrature mesh for data that is only
/// piecewise smooth on it (reference solutions).
#[derive(Clone, Copy)]
pub struct Transfer<'a> {
    pub mesh: &'a Mesh,
    /// Coarse element containing each fine element.
    pub parent: &'a [usize],
}

/// Visits quadrature points of the fine mesh with the coarse basis evaluated
/// there: `visit(coarse t, fine t, x, weight, vel values, vel grads, pres values)`.
fn fine_points(
    sys: &SaddleSystem,
    tr: Transfer,
    degree: usize,
    mut visit: impl FnMut(usize, usize, Point, f64, &[f64], &[Point], &[f64]),
) {
    let space = sys.space();
    let vb = space.velocity().basis();
    let pb = space.pressure().basis();
    let rule = QuadratureRule::triangle(degree);
    let mut vv = [0.0; MAX_BASIS];
    let mut vg = [[0.0; 2]; MAX_BASIS];
    let mut pv = [0.0; MAX_BASIS];
    let mut pg = [[0.0; 2]; MAX_BASIS];
    for tf in 0..tr.mesh.n_elements() {
        let tc = tr.parent[tf];
        let af = tr.mesh.affine(tf);
        let ac = space.mesh().affine(tc);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = af.to_physical(*p);
            let xi = ac.to_reference(x);
            vb.eval_into(xi, &mut vv, &mut vg);
            pb.eval_into(xi, &mut pv, &mut pg);
            for g in vg.iter_mut().take(vb.len()) {
                *g = ac.push_gradient(*g);
            }
            visit(tc, tf, x, w * af.det.abs(), &vv[..vb.len()], &vg[..vb.len()], &pv[..pb.len()]);
        }
    }
}

/// [`gradient_pairing`] with `w` sampled on a finer nested mesh.
pub fn gradient_pairing_on(sys: &SaddleSystem, tr: Transfer, w: &dyn Probe, degree: usize) -> Vec<f64> {
    let nf = sys.n_free();
    let vs = sys.space().velocity();
    let mut out = vec![0.0; 2 * nf];
    fine_points(sys, tr, degree, |tc, tf, x, wd, _, grads, _| {
        let s = w.probe(tf, x);
        for (l, &g) in vs.element_nodes(tc).iter().enumerate() {
            let r = sys.free_index[g];
            if r != UNUSED {
                out[r] += wd * (s.grad[0][0] * grads[l][0] + s.grad[0][1] * grads[l][1]);
                out[nf + r] += wd * (s.grad[1][0] * grads[l][0] + s.grad[1][1] * grads[l][1]);
            }
        }
    });
    out
}

fn scalar_moments_on(
    sys: &SaddleSystem,
    tr: Transfer,
    degree: usize,
    f: impl Fn(usize, Point) -> f64,
) -> Vec<f64> {
    let ps = sys.space().pressure();
    let mut out = vec![0.0; sys.n_pressure()];
    fine_points(sys, tr, degree, |tc, tf, x, wd, _, _, pv| {
        let v = f(tf, x) * wd;
        for (l, &g) in ps.element_nodes(tc).iter().enumerate() {
            out[g] += v * pv[l];
        }
    });
    out
}

/// [`divergence_moments`] with `w` sampled on a finer nested mesh.
pub fn divergence_moments_on(sys: &SaddleSystem, tr: Transfer, w: &dyn Probe, degree: usize) -> Vec<f64> {
    scalar_moments_on(sys, tr, degree, |t, x| w.probe(t, x).divergence())
}

/// [`pressure_moments`] with `s` sampled on a finer nested mesh.
pub fn pressure_moments_on(sys: &SaddleSystem, tr: Transfer, s: &dyn Probe, degree: usize) -> Vec<f64> {
    scalar_moments_on(sys, tr, degree, |t, x| s.probe(t, x).value[0])
}

/// `P_h v` of a field living on a finer nested mesh.
pub fn projection_ph_on(sys: &SaddleSystem, tr: Transfer, v: &dyn Probe, degree: usize) -> Result<FeField> {
    let rhs = Rhs {
        f: gradient_pairing_on(sys, tr, v, degree),
        g: divergence_moments_on(sys, tr, v, degree),
    };
    Ok(sys.solve(&rhs)?.velocity)
}

/// `r_h q` of a field living on a finer nested mesh.
pub fn projection_rh_on(sys: &SaddleSystem, tr: Transfer, q: &dyn Probe, degree: usize) -> FeField {
    let load = pressure_moments_on(sys, tr, q, degree);
    sys.pressure_field(sys.solve_mass(&load))
}

/// Shared handle to an assembled system.
pub type SharedSystem = Arc<SaddleSystem>;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::space::{parent_map, Analytic, Nested, Sampled};

    fn system(n: usize, k: usize) -> SaddleSystem {
        let mesh = Arc::new(Mesh::structured(&Domain::unit_square(), n).unwrap());
        SaddleSystem::assemble(&FeSpace::taylor_hood(mesh, k).unwrap()).unwrap()
    }

    #[test]
    fn reference_p1_stiffness_entry() {
        // one interior vertex of a 2x2 grid: the sum over its six triangles
        let sys = system(2, 2);
        assert!(sys.k.asymmetry() < 1e-12);
        // P1 reference element: ∫∇φ0·∇φ0 = 1 for the right-angle vertex
        let b = crate::basis::LagrangeBasis::new(1);
        let rule = QuadratureRule::triangle(2);
        let mut s = 0.0;
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let g = b.gradients(*p)[0];
            s += w * (g[0] * g[0] + g[1] * g[1]);
        }
        assert!((s - 1.0).abs() < 1e-14);
    }

    #[test]
    fn zero_force_gives_zero_solution() {
        let sys = system(4, 2);
        let rhs = assemble_rhs(&sys, &RhsFunctional::BodyForce(&|_| [0.0, 0.0]), 6).unwrap();
        assert!(rhs.f.iter().all(|&v| v == 0.0));
        let s = sys.solve(&rhs).unwrap();
        assert!(s.velocity.coeffs().iter().all(|&v| v == 0.0));
        assert!(s.pressure.coeffs().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_force_is_balanced_by_pressure() {
        let sys = system(4, 2);
        let rhs = assemble_rhs(&sys, &RhsFunctional::BodyForce(&|_| [1.0, 1.0]), 6).unwrap();
        let s = sys.solve(&rhs).unwrap();
        let umax = s.velocity.coeffs().iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(umax < 1e-12, "{umax}");
        for (x, p) in sys.space().pressure().node_coords().iter().zip(s.pressure.coeffs()) {
            assert!((p - (x[0] + x[1] - 1.0)).abs() < 1e-10);
        }
        assert!(s.stats.residual < 1e-10);
    }

    #[test]
    fn projections_fix_their_ranges() {
        let sys = system(4, 2);
        let space = sys.space().clone();
        let v = space
            .interpolate_velocity(|x| [(3.0 * x[0]).sin() * x[1], x[0] * x[0] - x[1]])
            .pin_boundary();
        let ph = projection_ph(&sys, &v, 6).unwrap();
        let rz = ritz_projection(&sys, &v, 6);
        for ((a, b), c) in v.coeffs().iter().zip(ph.coeffs()).zip(rz.coeffs()) {
            assert!((a - b).abs() < 1e-12 && (a - c).abs() < 1e-12);
        }
        let q = space.interpolate_pressure(|x| x[0] * x[1] + 2.0);
        let rq = projection_rh(&sys, &q, 6);
        for (a, b) in q.coeffs().iter().zip(rq.coeffs()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn ph_preserves_discrete_divergence() {
        let sys = system(6, 2);
        let v = Analytic(|x: Point| {
            let b = x[0] * (1.0 - x[0]) * x[1] * (1.0 - x[1]);
            let bx = (1.0 - 2.0 * x[0]) * x[1] * (1.0 - x[1]);
            let by = x[0] * (1.0 - x[0]) * (1.0 - 2.0 * x[1]);
            let s = (2.0 * x[0] + x[1]).sin();
            let (sx, sy) = (2.0 * (2.0 * x[0] + x[1]).cos(), (2.0 * x[0] + x[1]).cos());
            Sampled {
                value: [b * s, b],
                grad: [[bx * s + b * sx, by * s + b * sy], [bx, by]],
            }
        });
        let ph = projection_ph(&sys, &v, 10).unwrap();
        assert!(divergence_defect(&sys, &v, &ph, 10) < 1e-12);
    }

    #[test]
    fn a_form_reproduces_loads() {
        let sys = system(4, 2);
        let f = |x: Point| [x[1].sin(), x[0] * x[0]];
        let rhs = assemble_rhs(&sys, &RhsFunctional::BodyForce(&f), 8).unwrap();
        let s = sys.solve(&rhs).unwrap();
        let space = sys.space();
        let v = space
            .interpolate_velocity(|x| [x[0] * x[1], (x[0] - x[1]).cos()])
            .pin_boundary();
        let zero_p = space.zero(FieldKind::Pressure);
        let lhs = sys.a_form(&s.velocity, &s.pressure, &v, &zero_p);
        let expected = dot(&rhs.f, &sys.restrict(&v));
        assert!((lhs - expected).abs() < 1e-12 * expected.abs().max(1.0));
    }

    #[test]
    fn transfer_loaders_match_native_ones() {
        let sys = system(3, 2);
        let space = sys.space().clone();
        let fine = space.mesh().subdivide(2);
        let parent = parent_map(&fine, space.mesh()).unwrap();
        let tr = Transfer { mesh: &fine, parent: &parent };
        let v = space.interpolate_velocity(|x| [x[0] * x[1] * x[1], x[0] - x[1] * x[1]]);
        let nested = Nested { field: &v, parent: &parent };
        let a = gradient_pairing(&sys, &v, 4);
        let b = gradient_pairing_on(&sys, tr, &nested, 4);
        let c = divergence_moments(&sys, &v, 4);
        let d = divergence_moments_on(&sys, tr, &nested, 4);
        for (x, y) in a.iter().zip(&b).chain(c.iter().zip(&d)) {
            assert!((x - y).abs() < 1e-13);
        }
    }
}
