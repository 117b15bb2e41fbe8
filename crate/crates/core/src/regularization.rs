//! The regularized delta function, the weight σ and the normalized bump.

use faer::linalg::solvers::SolveCore;
use faer::{Conj, Mat, Side};

use crate::basis::{LagrangeBasis, MAX_BASIS};
use crate::error::{Error, Result};
use crate::geometry::{barycentric, dist, Affine, Domain, Point};
use crate::mesh::Mesh;
use crate::quadrature::{gauss_legendre, QuadratureRule};
use crate::space::{FeField, FeSpace, FieldKind, Probe, Sampled};

/// `σ(x) = sqrt(|x - x0|² + (κh)²)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightSigma {
    pub x0: Point,
    pub kappa: f64,
    pub h: f64,
}

impl WeightSigma {
    pub fn new(x0: Point, kappa: f64, h: f64) -> Self {
        Self { x0, kappa, h }
    }

    #[inline]
    pub fn eval(&self, x: Point) -> f64 {
        let (dx, dy) = (x[0] - self.x0[0], x[1] - self.x0[1]);
        let kh = self.kappa * self.h;
        (dx * dx + dy * dy + kh * kh).sqrt()
    }

    pub fn gradient(&self, x: Point) -> Point {
        let s = self.eval(x);
        [(x[0] - self.x0[0]) / s, (x[1] - self.x0[1]) / s]
    }

    /// The weight requires `κ > 1` and `κh` not exceeding the domain reach.
    pub fn check(&self, reach: f64) -> Result<()> {
        if self.kappa <= 1.0 {
            return Err(Error::Precondition(format!("kappa = {} must exceed 1", self.kappa)));
        }
        if self.kappa * self.h > reach {
            return Err(Error::Precondition(format!(
                "kappa*h = {} exceeds {reach}",
                self.kappa * self.h
            )));
        }
        Ok(())
    }
}

/// `δ_h = b_T² r` on the element `T` containing `x0`, with `b_T` the cubic
/// bubble and `r ∈ P_k(T)` chosen so that `(q, δ_h)_T = q(x0)` for all
/// `q ∈ P_k(T)`.
#[derive(Clone, Debug)]
pub struct DeltaFunction {
    pub element: usize,
    pub x0: Point,
    pub vertices: [Point; 3],
    basis: LagrangeBasis,
    coeffs: Vec<f64>,
    affine: Affine,
    /// Condition number of the local weighted Gram matrix.
    pub condition: f64,
}

impl DeltaFunction {
    pub fn build(space: &FeSpace, x0: Point) -> Result<Self> {
        let mesh = space.mesh();
        let element = mesh.locate_point(x0)?;
        Self::on_element(mesh, element, x0, space.velocity_degree())
    }

    pub fn on_element(mesh: &Mesh, element: usize, x0: Point, degree: usize) -> Result<Self> {
        let vertices = mesh.vertices(element);
        let affine = Affine::new(vertices);
        let basis = LagrangeBasis::new(degree);
        let n = basis.len();
        let rule = QuadratureRule::triangle(2 * degree + 12);
        let mut g = Mat::<f64>::zeros(n, n);
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let b = bubble_ref(*p);
            let v = basis.values(*p);
            let wt = w * b * b * affine.det.abs();
            for i in 0..n {
                for j in 0..n {
                    g[(i, j)] += wt * v[i] * v[j];
                }
            }
        }
        let eig = g
            .self_adjoint_eigenvalues(Side::Lower)
            .map_err(|_| Error::DegenerateElement {
                element,
                condition: f64::INFINITY,
            })?;
        let (lo, hi) = (eig[0], eig[n - 1]);
        let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
        if condition > 1e12 {
            return Err(Error::DegenerateElement { element, condition });
        }
        let llt = g.llt(Side::Lower).map_err(|_| Error::DegenerateElement {
            element,
            condition,
        })?;
        let xi0 = affine.to_reference(x0);
        let rhs = basis.values(xi0);
        let mut c = Mat::<f64>::from_fn(n, 1, |i, _| rhs[i]);
        llt.solve_in_place_with_conj(Conj::No, c.as_mut());
        let coeffs = (0..n).map(|i| c[(i, 0)]).collect();
        Ok(Self {
            element,
            x0,
            vertices,
            basis,
            coeffs,
            affine,
            condition,
        })
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn contains(&self, x: Point) -> bool {
        barycentric(self.vertices, x).iter().all(|&l| l >= -1e-12)
    }

    /// Value and gradient; zero outside the element.
    pub fn eval(&self, x: Point) -> (f64, Point) {
        let xi = self.affine.to_reference(x);
        let mut l = [1.0 - xi[0] - xi[1], xi[0], xi[1]];
        if l.iter().any(|&v| v < -1e-12) {
            return (0.0, [0.0, 0.0]);
        }
        // points on the element boundary up to roundoff
        for v in &mut l {
            if v.abs() < 1e-14 {
                *v = 0.0;
            }
        }
        let mut vals = [0.0; MAX_BASIS];
        let mut grads = [[0.0; 2]; MAX_BASIS];
        self.basis.eval_into(xi, &mut vals, &mut grads);
        let mut r = 0.0;
        let mut gr = [0.0, 0.0];
        for (i, c) in self.coeffs.iter().enumerate() {
            r += c * vals[i];
            gr[0] += c * grads[i][0];
            gr[1] += c * grads[i][1];
        }
        let b = 27.0 * l[0] * l[1] * l[2];
        let gb = [
            27.0 * (-(l[1] * l[2]) + l[0] * l[2]),
            27.0 * (-(l[1] * l[2]) + l[0] * l[1]),
        ];
        // reference gradient of b² r, pushed forward
        let g = [
            2.0 * b * gb[0] * r + b * b * gr[0],
            2.0 * b * gb[1] * r + b * b * gr[1],
        ];
        (b * b * r, self.affine.push_gradient(g))
    }

    /// Elements of `mesh` (a nested refinement of the construction mesh, or the
    /// construction mesh itself) lying inside the support element.
    pub fn support_elements(&self, mesh: &Mesh) -> Vec<usize> {
        (0..mesh.n_elements())
            .filter(|&t| {
                let c = mesh.centroid(t);
                (c[0] - self.x0[0]).abs() <= 2.0 * mesh.h() + self.diameter()
                    && (c[1] - self.x0[1]).abs() <= 2.0 * mesh.h() + self.diameter()
                    && barycentric(self.vertices, c).iter().all(|&l| l > 0.0)
            })
            .collect()
    }

    pub fn diameter(&self) -> f64 {
        let v = &self.vertices;
        dist(v[0], v[1]).max(dist(v[1], v[2])).max(dist(v[2], v[0]))
    }

    /// Quadrature degree that integrates `δ_h` times a degree-`p` polynomial.
    pub fn pairing_degree(&self, p: usize) -> usize {
        6 + self.degree() + p
    }

    /// `(v, δ_h e_i)` for a velocity field.
    pub fn pair_component(&self, v: &FeField, i: usize) -> f64 {
        let mesh = v.space().mesh();
        let rule = QuadratureRule::triangle(self.pairing_degree(v.space().velocity_degree()));
        let support = self.support_elements(mesh);
        crate::norms::integrate(mesh, Some(&support), &rule, |t, x| {
            self.eval(x).0 * v.eval_in(t, x).value[i]
        })
    }

    /// `-(δ_h, ∂_j v_i)`, the weak form of `((∂_j δ_h) e_i, v)`.
    pub fn pair_derivative(&self, v: &FeField, i: usize, j: usize) -> f64 {
        let mesh = v.space().mesh();
        let rule = QuadratureRule::triangle(self.pairing_degree(v.space().velocity_degree()));
        let support = self.support_elements(mesh);
        -crate::norms::integrate(mesh, Some(&support), &rule, |t, x| {
            self.eval(x).0 * v.eval_in(t, x).grad[i][j]
        })
    }

    /// Integral of `|δ_h|^q` (or its gradient magnitude) over the support, by
    /// a composite rule.
    pub fn lq_norm(&self, q: f64, derivative: bool, weight: Option<(&WeightSigma, f64)>) -> f64 {
        let rule = QuadratureRule::composite(2 * self.degree() + 14, 3);
        let mut s = 0.0;
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            let x = self.affine.to_physical(*p);
            let (v, g) = self.eval(x);
            let mut f = if derivative { g[0].hypot(g[1]) } else { v.abs() };
            if let Some((sig, nu)) = weight {
                f *= sig.eval(x).powf(nu);
            }
            s += w * f.powf(q);
        }
        (s * self.affine.det.abs()).powf(1.0 / q)
    }

    /// Sampled maximum of `|δ_h|`.
    pub fn linf_norm(&self, density: usize) -> f64 {
        let mut best = 0.0f64;
        for (a, b) in crate::mesh::lattice(density) {
            let x = self
                .affine
                .to_physical([a as f64 / density as f64, b as f64 / density as f64]);
            best = best.max(self.eval(x).0.abs());
        }
        best
    }

    pub fn mass(&self) -> f64 {
        let rule = QuadratureRule::triangle(6 + self.degree());
        let mut s = 0.0;
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            s += w * self.eval(self.affine.to_physical(*p)).0;
        }
        s * self.affine.det.abs()
    }
}

impl Probe for DeltaFunction {
    fn probe(&self, _t: usize, x: Point) -> Sampled {
        let (v, g) = self.eval(x);
        Sampled::scalar(v, g)
    }
}

fn bubble_ref(xi: Point) -> f64 {
    27.0 * (1.0 - xi[0] - xi[1]) * xi[0] * xi[1]
}

/// `φ(x) = Z exp(-1 / (1 - |x - c|²/r²))` inside the ball, zero outside,
/// normalized to unit mass.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SmoothBump {
    pub center: Point,
    pub radius: f64,
    pub scale: f64,
}

impl SmoothBump {
    pub fn new(domain: &Domain, center: Point, radius: f64) -> Result<Self> {
        if radius <= 0.0 {
            return Err(Error::Clearance(format!("radius {radius} must be positive")));
        }
        if domain.signed_distance(center) < radius {
            return Err(Error::Clearance(format!(
                "ball of radius {radius} at {center:?} leaves the domain"
            )));
        }
        for &v in domain.vertices() {
            if dist(v, center) < 1.5 * radius {
                return Err(Error::Clearance(format!(
                    "corner {v:?} closer than 1.5 radius to the bump"
                )));
            }
        }
        Ok(Self {
            center,
            radius,
            scale: 1.0 / (radius * radius * profile_mass()),
        })
    }

    /// Defaults: domain centroid and radius 0.2·diam.
    pub fn default_for(domain: &Domain) -> Result<Self> {
        Self::new(domain, domain.centroid(), 0.2 * domain.diameter())
    }

    pub fn eval(&self, x: Point) -> (f64, Point) {
        let r2 = self.radius * self.radius;
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        let s = (d[0] * d[0] + d[1] * d[1]) / r2;
        if s >= 1.0 {
            return (0.0, [0.0, 0.0]);
        }
        let v = self.scale * (-1.0 / (1.0 - s)).exp();
        // d/dx of -1/(1-s) is -(1-s)^{-2} ds/dx, ds/dx = 2d/r²
        let f = -v / ((1.0 - s) * (1.0 - s)) * 2.0 / r2;
        (v, [f * d[0], f * d[1]])
    }

    /// Whether the triangle can meet the support.
    pub fn touches(&self, v: [Point; 3]) -> bool {
        let inside = barycentric(v, self.center).iter().all(|&l| l >= 0.0);
        inside
            || (0..3).any(|i| {
                crate::geometry::segment_distance(self.center, v[i], v[(i + 1) % 3]) < self.radius
            })
    }

    /// Elementwise quadrature rule fine enough to resolve the profile.
    pub fn rule_for(&self, h: f64) -> QuadratureRule {
        let mut levels = 0u32;
        while h / f64::from(1u32 << levels) > self.radius / 4.0 {
            levels += 1;
        }
        QuadratureRule::composite(20, levels)
    }

    /// `∫ φ ψ_q` for every pressure basis function.
    pub fn pressure_moments(&self, space: &FeSpace) -> Vec<f64> {
        let mesh = space.mesh();
        let ps = space.pressure();
        let rule = self.rule_for(mesh.h());
        let mut out = vec![0.0; ps.n_nodes()];
        let mut vals = [0.0; MAX_BASIS];
        let mut grads = [[0.0; 2]; MAX_BASIS];
        for t in 0..mesh.n_elements() {
            let v = mesh.vertices(t);
            if !self.touches(v) {
                continue;
            }
            let a = mesh.affine(t);
            let nodes = ps.element_nodes(t);
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                let phi = self.eval(a.to_physical(*p)).0;
                if phi == 0.0 {
                    continue;
                }
                ps.basis().eval_into(*p, &mut vals, &mut grads);
                let wt = w * a.det.abs() * phi;
                for (l, &g) in nodes.iter().enumerate() {
                    out[g] += wt * vals[l];
                }
            }
        }
        out
    }

    pub fn mass_on(&self, mesh: &Mesh) -> f64 {
        let rule = self.rule_for(mesh.h());
        let mut s = 0.0;
        for t in 0..mesh.n_elements() {
            if !self.touches(mesh.vertices(t)) {
                continue;
            }
            let a = mesh.affine(t);
            let mut e = 0.0;
            for (p, w) in rule.points.iter().zip(&rule.weights) {
                e += w * self.eval(a.to_physical(*p)).0;
            }
            s += e * a.det.abs();
        }
        s
    }
}

impl Probe for SmoothBump {
    fn probe(&self, _t: usize, x: Point) -> Sampled {
        let (v, g) = self.eval(x);
        Sampled::scalar(v, g)
    }
}

/// `∫_{B_1} exp(-1/(1-|y|²)) dy = π ∫_0^1 exp(-1/(1-u)) du`.
fn profile_mass() -> f64 {
    let (x, w) = gauss_legendre(20);
    let panels = 64;
    let mut s = 0.0;
    for p in 0..panels {
        let a = p as f64 / panels as f64;
        let len = 1.0 / panels as f64;
        for (xi, wi) in x.iter().zip(&w) {
            let u = a + len * xi;
            s += wi * len * (-1.0 / (1.0 - u)).exp();
        }
    }
    std::f64::consts::PI * s
}

/// Zero-trace velocity field used as a test function inside the support of δ_h.
pub fn delta_test_field(space: &std::sync::Arc<FeSpace>, node: usize, comp: usize) -> FeField {
    let mut c = vec![0.0; space.n_vel_dofs()];
    c[comp * space.velocity().n_nodes() + node] = 1.0;
    FeField::new(space.clone(), FieldKind::Velocity, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use std::sync::Arc;

    fn space(n: usize) -> Arc<FeSpace> {
        let mesh = Arc::new(Mesh::structured(&Domain::unit_square(), n).unwrap());
        FeSpace::taylor_hood(mesh, 2).unwrap()
    }

    #[test]
    fn sigma_examples() {
        let w = WeightSigma::new([0.3, 0.3], 4.0, 1.0 / 16.0);
        assert_eq!(w.eval([0.3, 0.3]), 0.25);
        let mut lo = f64::INFINITY;
        for i in 0..=50 {
            for j in 0..=50 {
                lo = lo.min(w.eval([i as f64 / 50.0, j as f64 / 50.0]));
            }
        }
        assert!(lo >= 0.25);
        assert!(w.check(1.0).is_ok());
        assert!(WeightSigma::new([0.0, 0.0], 1.0, 0.1).check(1.0).is_err());
    }

    #[test]
    fn delta_reproduces_linears_and_constants() {
        let s = space(8);
        let d = DeltaFunction::build(&s, [0.3, 0.7]).unwrap();
        let one = s.interpolate_velocity(|_| [1.0, 0.0]);
        assert!((d.pair_component(&one, 0) - 1.0).abs() < 1e-12);
        let lin = s.interpolate_velocity(|x| [x[0], 0.0]);
        assert!((d.pair_component(&lin, 0) - 0.3).abs() < 1e-12);
        assert!((d.mass() - 1.0).abs() < 1e-12);
        assert!(d.pair_derivative(&one, 0, 1).abs() < 1e-12);
    }

    #[test]
    fn delta_vanishes_on_the_element_boundary() {
        let s = space(8);
        let d = DeltaFunction::build(&s, [0.41, 0.63]).unwrap();
        for k in 0..12 {
            let e = k % 3;
            let t = (k / 3) as f64 / 4.0 + 0.1;
            let a = d.vertices[e];
            let b = d.vertices[(e + 1) % 3];
            let x = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            let (v, g) = d.eval(x);
            assert!(v.abs() < 1e-12 && g[0].abs() < 1e-12 && g[1].abs() < 1e-12, "{x:?} {v} {g:?}");
        }
    }

    #[test]
    fn delta_gradient_matches_finite_difference() {
        let s = space(4);
        let d = DeltaFunction::build(&s, [0.41, 0.63]).unwrap();
        let x = [0.4, 0.62];
        let e = 1e-7;
        let (_, g) = d.eval(x);
        let fx = (d.eval([x[0] + e, x[1]]).0 - d.eval([x[0] - e, x[1]]).0) / (2.0 * e);
        let fy = (d.eval([x[0], x[1] + e]).0 - d.eval([x[0], x[1] - e]).0) / (2.0 * e);
        let scale = g[0].abs().max(g[1].abs());
        assert!((fx - g[0]).abs() < 1e-5 * scale && (fy - g[1]).abs() < 1e-5 * scale);
    }

    #[test]
    fn bump_normalization_and_clearance() {
        let dom = Domain::unit_square();
        let b = SmoothBump::default_for(&dom).unwrap();
        let mesh = Mesh::structured(&dom, 8).unwrap();
        assert!((b.mass_on(&mesh) - 1.0).abs() < 1e-10);
        let edge = [b.center[0] + b.radius, b.center[1]];
        assert_eq!(b.eval(edge).0, 0.0);
        assert!(SmoothBump::new(&dom, [0.1, 0.1], 0.2).is_err());
        let s = space(8);
        let total: f64 = b.pressure_moments(&s).iter().sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn bump_gradient_matches_finite_difference() {
        let b = SmoothBump::default_for(&Domain::unit_square()).unwrap();
        let x = [0.6, 0.45];
        let e = 1e-7;
        let (_, g) = b.eval(x);
        let fx = (b.eval([x[0] + e, x[1]]).0 - b.eval([x[0] - e, x[1]]).0) / (2.0 * e);
        assert!((fx - g[0]).abs() < 1e-5 * g[0].abs().max(1.0));
    }
}
