//! Continuous Lagrange spaces, Taylor–Hood pairs and finite element fields.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::basis::{LagrangeBasis, MAX_BASIS};
use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::mesh::{LatticeNumbering, Mesh};

/// Scalar continuous Lagrange space of a fixed degree.
#[derive(Clone, Debug)]
pub struct ScalarSpace {
    basis: LagrangeBasis,
    numbering: LatticeNumbering,
    coords: Vec<Point>,
    on_boundary: Vec<bool>,
}

impl ScalarSpace {
    pub fn new(mesh: &Mesh, degree: usize) -> Self {
        assert!(degree >= 1, "continuous spaces need degree >= 1");
        let basis = LagrangeBasis::new(degree);
        let numbering = LatticeNumbering::new(
            mesh.n_points(),
            mesh.triangles(),
            mesh.element_edges(),
            mesh.edges().len(),
            degree,
        );
        let mut coords = vec![[0.0; 2]; numbering.n_nodes];
        let mut on_boundary = vec![false; numbering.n_nodes];
        let mut written = vec![false; numbering.n_nodes];
        for t in 0..mesh.n_elements() {
            let a = mesh.affine(t);
            let tri = mesh.triangles()[t];
            for (l, (&xi, &g)) in basis.nodes().iter().zip(numbering.nodes(t)).enumerate() {
                if written[g] {
                    continue;
                }
                written[g] = true;
                let (i, j) = crate::mesh::lattice(degree)[l];
                let c = [degree - i - j, i, j];
                let zeros = c.iter().filter(|&&v| v == 0).count();
                on_boundary[g] = match zeros {
                    2 => mesh.boundary_flags()[tri[c.iter().position(|&v| v == degree).unwrap()]],
                    1 => {
                        let z = c.iter().position(|&v| v == 0).unwrap();
                        mesh.is_boundary_edge(mesh.element_edges()[t][z])
                    }
                    _ => false,
                };
                coords[g] = if zeros == 2 {
                    mesh.points()[g]
                } else {
                    a.to_physical(xi)
                };
            }
        }
        Self {
            basis,
            numbering,
            coords,
            on_boundary,
        }
    }

    pub fn degree(&self) -> usize {
        self.basis.degree()
    }

    pub fn n_nodes(&self) -> usize {
        self.numbering.n_nodes
    }

    pub fn basis(&self) -> &LagrangeBasis {
        &self.basis
    }

    pub fn local_count(&self) -> usize {
        self.numbering.local_count
    }

    #[inline]
    pub fn element_nodes(&self, t: usize) -> &[usize] {
        self.numbering.nodes(t)
    }

    pub fn node_coords(&self) -> &[Point] {
        &self.coords
    }

    pub fn boundary_nodes(&self) -> &[bool] {
        &self.on_boundary
    }
}

/// Velocity (vector, zero trace) and pressure spaces on one mesh.
#[derive(Clone, Debug)]
pub struct FeSpace {
    mesh: Arc<Mesh>,
    velocity: ScalarSpace,
    pressure: ScalarSpace,
}

impl FeSpace {
    /// Taylor–Hood pair: velocity degree `k`, pressure degree `k - 1`.
    pub fn taylor_hood(mesh: Arc<Mesh>, k: usize) -> Result<Arc<Self>> {
        if k < 2 {
            return Err(Error::Config(format!("Taylor–Hood needs k >= 2, got {k}")));
        }
        Ok(Self::with_degrees(mesh, k, k - 1))
    }

    /// Arbitrary continuous pair, for example the unstable equal-order one.
    pub fn with_degrees(mesh: Arc<Mesh>, velocity: usize, pressure: usize) -> Arc<Self> {
        let v = ScalarSpace::new(&mesh, velocity);
        let p = ScalarSpace::new(&mesh, pressure);
        Arc::new(Self {
            mesh,
            velocity: v,
            pressure: p,
        })
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn velocity(&self) -> &ScalarSpace {
        &self.velocity
    }

    pub fn pressure(&self) -> &ScalarSpace {
        &self.pressure
    }

    pub fn velocity_degree(&self) -> usize {
        self.velocity.degree()
    }

    pub fn n_vel_dofs(&self) -> usize {
        2 * self.velocity.n_nodes()
    }

    pub fn n_pres_dofs(&self) -> usize {
        self.pressure.n_nodes()
    }

    /// Quadrature degree used for norms of fields in this space.
    pub fn norm_degree(&self) -> usize {
        2 * self.velocity_degree() + 2
    }

    pub fn same_as(&self, other: &FeSpace) -> bool {
        std::ptr::eq(self, other)
            || (Arc::ptr_eq(&self.mesh, &other.mesh)
                && self.velocity.degree() == other.velocity.degree()
                && self.pressure.degree() == other.pressure.degree())
    }

    pub fn interpolate_velocity(self: &Arc<Self>, f: impl Fn(Point) -> [f64; 2]) -> FeField {
        let n = self.velocity.n_nodes();
        let mut c = vec![0.0; 2 * n];
        for (i, &x) in self.velocity.coords.iter().enumerate() {
            let v = f(x);
            c[i] = v[0];
            c[n + i] = v[1];
        }
        FeField::new(self.clone(), FieldKind::Velocity, c)
    }

    pub fn interpolate_pressure(self: &Arc<Self>, f: impl Fn(Point) -> f64) -> FeField {
        let c = self.pressure.coords.iter().map(|&x| f(x)).collect();
        FeField::new(self.clone(), FieldKind::Pressure, c)
    }

    pub fn zero(self: &Arc<Self>, kind: FieldKind) -> FeField {
        let n = match kind {
            FieldKind::Velocity => self.n_vel_dofs(),
            FieldKind::Pressure => self.n_pres_dofs(),
        };
        FeField::new(self.clone(), kind, vec![0.0; n])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Velocity,
    Pressure,
}

impl FieldKind {
    fn name(self) -> &'static str {
        match self {
            FieldKind::Velocity => "velocity",
            FieldKind::Pressure => "pressure",
        }
    }
}

/// Pointwise value and gradient. Scalars use component 0.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Sampled {
    pub value: [f64; 2],
    /// `grad[c][d] = ∂_d value[c]`.
    pub grad: [[f64; 2]; 2],
}

impl Sampled {
    pub fn scalar(value: f64, grad: Point) -> Self {
        Self {
            value: [value, 0.0],
            grad: [grad, [0.0, 0.0]],
        }
    }

    pub fn minus(&self, o: &Sampled) -> Sampled {
        Sampled {
            value: [self.value[0] - o.value[0], self.value[1] - o.value[1]],
            grad: [
                [self.grad[0][0] - o.grad[0][0], self.grad[0][1] - o.grad[0][1]],
                [self.grad[1][0] - o.grad[1][0], self.grad[1][1] - o.grad[1][1]],
            ],
        }
    }

    pub fn value_norm(&self) -> f64 {
        self.value[0].hypot(self.value[1])
    }

    /// Frobenius norm of the gradient.
    pub fn grad_norm(&self) -> f64 {
        let g = &self.grad;
        (g[0][0] * g[0][0] + g[0][1] * g[0][1] + g[1][0] * g[1][0] + g[1][1] * g[1][1]).sqrt()
    }

    pub fn divergence(&self) -> f64 {
        self.grad[0][0] + self.grad[1][1]
    }
}

/// Something that can be sampled at a point of element `t` of a quadrature mesh.
pub trait Probe: Sync {
    fn probe(&self, t: usize, x: Point) -> Sampled;
}

/// Coefficient vector of a velocity or pressure field. Velocity coefficients
/// are stored component-major: all first components, then all second.
#[derive(Clone, Debug)]
pub struct FeField {
    space: Arc<FeSpace>,
    kind: FieldKind,
    coeffs: Vec<f64>,
}

impl FeField {
    pub fn new(space: Arc<FeSpace>, kind: FieldKind, coeffs: Vec<f64>) -> Self {
        let n = match kind {
            FieldKind::Velocity => space.n_vel_dofs(),
            FieldKind::Pressure => space.n_pres_dofs(),
        };
        assert_eq!(coeffs.len(), n, "coefficient count for {}", kind.name());
        Self {
            space,
            kind,
            coeffs,
        }
    }

    pub fn space(&self) -> &Arc<FeSpace> {
        &self.space
    }

    pub fn kind(&self) -> FieldKind {
        self.kind
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    fn scalar_space(&self) -> &ScalarSpace {
        match self.kind {
            FieldKind::Velocity => &self.space.velocity,
            FieldKind::Pressure => &self.space.pressure,
        }
    }

    /// Zeroes boundary coefficients of a velocity field.
    pub fn pin_boundary(mut self) -> Self {
        if self.kind == FieldKind::Velocity {
            let n = self.space.velocity.n_nodes();
            for (i, &b) in self.space.velocity.on_boundary.iter().enumerate() {
                if b {
                    self.coeffs[i] = 0.0;
                    self.coeffs[n + i] = 0.0;
                }
            }
        }
        self
    }

    pub fn is_pinned(&self) -> bool {
        let n = self.space.velocity.n_nodes();
        self.kind != FieldKind::Velocity
            || self
                .space
                .velocity
                .on_boundary
                .iter()
                .enumerate()
                .all(|(i, &b)| !b || (self.coeffs[i] == 0.0 && self.coeffs[n + i] == 0.0))
    }

    pub fn axpy(&mut self, a: f64, other: &FeField) -> Result<()> {
        self.check_compatible(other)?;
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
        Ok(())
    }

    pub fn scaled(&self, a: f64) -> FeField {
        let mut f = self.clone();
        f.coeffs.iter_mut().for_each(|c| *c *= a);
        f
    }

    pub fn check_compatible(&self, other: &FeField) -> Result<()> {
        if self.kind != other.kind || !self.space.same_as(&other.space) {
            return Err(Error::MismatchedSpaces(format!(
                "{} field on {} elements vs {} field on {} elements",
                self.kind.name(),
                self.space.mesh.n_elements(),
                other.kind.name(),
                other.space.mesh.n_elements()
            )));
        }
        Ok(())
    }

    /// Value and gradient at `x`, taken as a point of element `t`.
    pub fn eval_in(&self, t: usize, x: Point) -> Sampled {
        let s = self.scalar_space();
        let a = self.space.mesh.affine(t);
        let xi = a.to_reference(x);
        let mut vals = [0.0; MAX_BASIS];
        let mut grads = [[0.0; 2]; MAX_BASIS];
        s.basis.eval_into(xi, &mut vals, &mut grads);
        let nodes = s.element_nodes(t);
        let n = s.n_nodes();
        let comps = if self.kind == FieldKind::Velocity { 2 } else { 1 };
        let mut out = Sampled::default();
        for c in 0..comps {
            let off = c * n;
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for (l, &g) in nodes.iter().enumerate() {
                let w = self.coeffs[off + g];
                v += w * vals[l];
                gx += w * grads[l][0];
                gy += w * grads[l][1];
            }
            out.value[c] = v;
            out.grad[c] = a.push_gradient([gx, gy]);
        }
        out
    }

    /// Value and gradient at `x`, located with the lowest-id tie-break.
    pub fn evaluate(&self, x: Point) -> Result<Sampled> {
        let t = self.space.mesh.locate_point(x)?;
        Ok(self.eval_in(t, x))
    }

    /// Elementwise second derivatives `hess[c]` at `x` in element `t`.
    pub fn hessian_in(&self, t: usize, x: Point) -> [[[f64; 2]; 2]; 2] {
        let s = self.scalar_space();
        let a = self.space.mesh.affine(t);
        let xi = a.to_reference(x);
        let hs = s.basis.hessians(xi);
        let nodes = s.element_nodes(t);
        let n = s.n_nodes();
        let comps = if self.kind == FieldKind::Velocity { 2 } else { 1 };
        let mut out = [[[0.0; 2]; 2]; 2];
        for (c, slot) in out.iter_mut().enumerate().take(comps) {
            let mut h = [[0.0; 2]; 2];
            for (l, &g) in nodes.iter().enumerate() {
                let w = self.coeffs[c * n + g];
                for i in 0..2 {
                    for j in 0..2 {
                        h[i][j] += w * hs[l][i][j];
                    }
                }
            }
            *slot = a.push_hessian(h);
        }
        out
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let degree = self.scalar_space().degree();
        let _ = writeln!(
            s,
            "FIELD {} {} {}",
            self.kind.name(),
            degree,
            self.coeffs.len()
        );
        for c in &self.coeffs {
            let _ = writeln!(s, "{c:?}");
        }
        s
    }

    /// Reads coefficients written by [`FeField::to_text`] into `space`.
    pub fn from_text(space: Arc<FeSpace>, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty field file".into()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        if parts.len() != 4 || parts[0] != "FIELD" {
            return Err(Error::Parse(format!("bad field header '{header}'")));
        }
        let kind = match parts[1] {
            "velocity" => FieldKind::Velocity,
            "pressure" => FieldKind::Pressure,
            other => return Err(Error::Parse(format!("unknown field kind '{other}'"))),
        };
        let degree: usize = parts[2]
            .parse()
            .map_err(|_| Error::Parse("bad degree".into()))?;
        let n: usize = parts[3]
            .parse()
            .map_err(|_| Error::Parse("bad dof count".into()))?;
        let expected = match kind {
            FieldKind::Velocity => (space.velocity.degree(), space.n_vel_dofs()),
            FieldKind::Pressure => (space.pressure.degree(), space.n_pres_dofs()),
        };
        if (degree, n) != expected {
            return Err(Error::MismatchedSpaces(format!(
                "file has degree {degree} with {n} dofs, space expects {expected:?}"
            )));
        }
        let coeffs = lines
            .take(n)
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("bad coefficient '{l}'")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if coeffs.len() != n {
            return Err(Error::Parse("truncated field file".into()));
        }
        Ok(Self::new(space, kind, coeffs))
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }
}

impl Probe for FeField {
    fn probe(&self, t: usize, x: Point) -> Sampled {
        self.eval_in(t, x)
    }
}

/// A field sampled on a nested finer mesh through a fine-to-coarse element map.
pub struct Nested<'a> {
    pub field: &'a FeField,
    pub parent: &'a [usize],
}

impl Probe for Nested<'_> {
    fn probe(&self, t: usize, x: Point) -> Sampled {
        self.field.eval_in(self.parent[t], x)
    }
}

/// A closed-form function with its gradient.
pub struct Analytic<F>(pub F);

impl<F: Fn(Point) -> Sampled + Sync> Probe for Analytic<F> {
    fn probe(&self, _t: usize, x: Point) -> Sampled {
        (self.0)(x)
    }
}

/// Zero everywhere.
pub struct ZeroProbe;

impl Probe for ZeroProbe {
    fn probe(&self, _t: usize, _x: Point) -> Sampled {
        Sampled::default()
    }
}

/// For each element of `fine`, the element of `coarse` containing its centroid.
pub fn parent_map(fine: &Mesh, coarse: &Mesh) -> Result<Vec<usize>> {
    (0..fine.n_elements())
        .map(|t| coarse.locate_point(fine.centroid(t)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;

    fn space(n: usize, k: usize) -> Arc<FeSpace> {
        let mesh = Arc::new(Mesh::structured(&Domain::unit_square(), n).unwrap());
        FeSpace::taylor_hood(mesh, k).unwrap()
    }

    #[test]
    fn dof_counts() {
        let s = space(4, 2);
        assert_eq!(s.velocity().n_nodes(), 81);
        assert_eq!(s.n_pres_dofs(), 25);
        let s3 = space(4, 3);
        assert_eq!(s3.velocity().n_nodes(), 13 * 13);
        let nb = s.velocity().boundary_nodes().iter().filter(|&&b| b).count();
        assert_eq!(nb, 32);
    }

    #[test]
    fn evaluation_examples() {
        let s = space(4, 2);
        let one = s.interpolate_pressure(|_| 1.0);
        assert!((one.evaluate([0.37, 0.81]).unwrap().value[0] - 1.0).abs() < 1e-14);
        let lin = s.interpolate_velocity(|x| [x[0], 0.0]);
        let v = lin.evaluate([0.25, 0.5]).unwrap();
        assert!((v.value[0] - 0.25).abs() < 1e-14 && v.value[1].abs() < 1e-14);
        assert!((v.grad[0][0] - 1.0).abs() < 1e-12 && v.grad[0][1].abs() < 1e-12);
        assert!(v.grad[1][0].abs() < 1e-12 && v.grad[1][1].abs() < 1e-12);
        assert!(lin.evaluate([2.0, 2.0]).is_err());
    }

    #[test]
    fn reproduces_polynomials_of_degree_k() {
        for k in [2, 3] {
            let s = space(3, k);
            let f = move |x: Point| {
                if k == 2 {
                    [x[0] * x[0] - 0.3 * x[1], 0.5 * x[0] * x[1]]
                } else {
                    [x[0] * x[1] * x[1], x[1].powi(3)]
                }
            };
            let field = s.interpolate_velocity(f);
            for t in 0..s.mesh().n_elements() {
                let a = s.mesh().affine(t);
                for xi in [[0.1, 0.2], [0.6, 0.3], [0.25, 0.7]] {
                    let x = a.to_physical(xi);
                    let v = field.eval_in(t, x).value;
                    let e = f(x);
                    assert!((v[0] - e[0]).abs() < 1e-12 && (v[1] - e[1]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn pinned_fields_and_file_round_trip() {
        let s = space(3, 2);
        let f = s.interpolate_velocity(|x| [x[0].sin(), x[1].exp()]).pin_boundary();
        assert!(f.is_pinned());
        let back = FeField::from_text(s.clone(), &f.to_text()).unwrap();
        assert_eq!(back.coeffs(), f.coeffs());
        let zero = s.interpolate_velocity(|_| [0.0, 0.0]);
        assert!(zero.coeffs().iter().all(|&c| c == 0.0));
        let other = space(3, 3);
        assert!(FeField::from_text(other, &f.to_text()).is_err());
    }

    #[test]
    fn nested_probe_matches_direct_evaluation() {
        let s = space(2, 2);
        let fine = s.mesh().refine_uniform().refine_uniform();
        let parent = parent_map(&fine, s.mesh()).unwrap();
        let f = s.interpolate_velocity(|x| [x[0] * x[1], x[1].cos()]);
        let nested = Nested {
            field: &f,
            parent: &parent,
        };
        for t in 0..fine.n_elements() {
            let x = fine.centroid(t);
            let a = nested.probe(t, x);
            let b = f.evaluate(x).unwrap();
            assert!((a.value[0] - b.value[0]).abs() < 1e-14);
        }
    }
}
