//! Quadrature integration, lattice-sampled maxima and the (weighted) norms
//! built on them.

use crate::error::Result;
use crate::geometry::Point;
use crate::mesh::{lattice, Mesh};
use crate::quadrature::QuadratureRule;
use crate::regularization::WeightSigma;
use crate::space::{FeField, Probe, Sampled};

/// Sum over elements (all, or a subset) of a quadrature rule applied to `f`.
pub fn integrate(
    mesh: &Mesh,
    elements: Option<&[usize]>,
    rule: &QuadratureRule,
    f: impl Fn(usize, Point) -> f64,
) -> f64 {
    let mut total = 0.0;
    let mut each = |t: usize| {
        let a = mesh.affine(t);
        let jac = a.det.abs();
        let mut s = 0.0;
        for (p, w) in rule.points.iter().zip(&rule.weights) {
            s += w * f(t, a.to_physical(*p));
        }
        total += s * jac;
    };
    match elements {
        Some(list) => list.iter().for_each(|&t| each(t)),
        None => (0..mesh.n_elements()).for_each(each),
    }
    total
}

/// Maximum of `f` over the degree-`m` lattice points of each element.
pub fn sample_max(
    mesh: &Mesh,
    elements: Option<&[usize]>,
    m: usize,
    f: impl Fn(usize, Point) -> f64,
) -> f64 {
    let pts: Vec<Point> = lattice(m.max(1))
        .into_iter()
        .map(|(a, b)| [a as f64 / m.max(1) as f64, b as f64 / m.max(1) as f64])
        .collect();
    let mut best = 0.0f64;
    let mut each = |t: usize| {
        let a = mesh.affine(t);
        for &p in &pts {
            let v = f(t, a.to_physical(p));
            if v > best || v.is_nan() {
                best = v;
            }
        }
    };
    match elements {
        Some(list) => list.iter().for_each(|&t| each(t)),
        None => (0..mesh.n_elements()).for_each(each),
    }
    best
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lp {
    L1,
    L2,
    Linf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Quantity {
    /// Euclidean norm of the value.
    Value,
    /// Frobenius norm of the gradient.
    Gradient,
    Divergence,
}

#[derive(Clone, Copy, Debug)]
pub struct NormSpec<'a> {
    pub lp: Lp,
    pub quantity: Quantity,
    /// Multiplies the pointwise quantity by `σ^ν`.
    pub weight: Option<(&'a WeightSigma, f64)>,
    /// Quadrature exactness for integral norms.
    pub degree: usize,
    /// Lattice density for sampled maxima.
    pub density: usize,
}

impl<'a> NormSpec<'a> {
    pub fn new(lp: Lp, quantity: Quantity, degree: usize) -> Self {
        Self {
            lp,
            quantity,
            weight: None,
            degree,
            density: degree / 2,
        }
    }

    /// Exactness `2k + 2` and lattice density `2k + 1` for velocity degree `k`.
    pub fn for_degree(lp: Lp, quantity: Quantity, k: usize) -> Self {
        Self::new(lp, quantity, 2 * k + 2).density(2 * k + 1)
    }

    pub fn weighted(mut self, w: &'a WeightSigma, nu: f64) -> Self {
        self.weight = Some((w, nu));
        self
    }

    pub fn density(mut self, m: usize) -> Self {
        self.density = m;
        self
    }
}

fn pointwise(s: &Sampled, q: Quantity) -> f64 {
    match q {
        Quantity::Value => s.value_norm(),
        Quantity::Gradient => s.grad_norm(),
        Quantity::Divergence => s.divergence().abs(),
    }
}

/// Norm of `a - b` (or of `a` alone) over the elements of `mesh`, where both
/// probes are sampled at points of `mesh`.
pub fn probe_norm(
    mesh: &Mesh,
    elements: Option<&[usize]>,
    a: &dyn Probe,
    b: Option<&dyn Probe>,
    spec: &NormSpec,
) -> f64 {
    let value = |t: usize, x: Point| -> f64 {
        let sa = a.probe(t, x);
        let s = match b {
            Some(b) => sa.minus(&b.probe(t, x)),
            None => sa,
        };
        let mut v = pointwise(&s, spec.quantity);
        if let Some((w, nu)) = spec.weight {
            if nu != 0.0 {
                v *= w.eval(x).powf(nu);
            }
        }
        v
    };
    match spec.lp {
        Lp::L1 => {
            let rule = QuadratureRule::triangle(spec.degree);
            integrate(mesh, elements, &rule, value)
        }
        Lp::L2 => {
            let rule = QuadratureRule::triangle(spec.degree);
            integrate(mesh, elements, &rule, |t, x| value(t, x).powi(2)).sqrt()
        }
        Lp::Linf => sample_max(mesh, elements, spec.density, value),
    }
}

/// Norm of a field on its own mesh.
pub fn field_norm(f: &FeField, elements: Option<&[usize]>, spec: &NormSpec) -> f64 {
    probe_norm(f.space().mesh(), elements, f, None, spec)
}

/// Norm of the difference of two fields in the same space.
pub fn difference_norm(
    a: &FeField,
    b: &FeField,
    elements: Option<&[usize]>,
    spec: &NormSpec,
) -> Result<f64> {
    a.check_compatible(b)?;
    Ok(probe_norm(a.space().mesh(), elements, a, Some(b), spec))
}

/// `∫ q` for a scalar field.
pub fn mean_integral(f: &FeField) -> f64 {
    let rule = QuadratureRule::triangle(f.space().norm_degree());
    integrate(f.space().mesh(), None, &rule, |t, x| f.eval_in(t, x).value[0])
}

/// Full H¹ norm: sqrt(‖v‖² + ‖∇v‖²).
pub fn h1_norm(f: &FeField, elements: Option<&[usize]>) -> f64 {
    let d = f.space().norm_degree();
    let v = field_norm(f, elements, &NormSpec::new(Lp::L2, Quantity::Value, d));
    let g = field_norm(f, elements, &NormSpec::new(Lp::L2, Quantity::Gradient, d));
    v.hypot(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Domain;
    use crate::space::{FeSpace, FieldKind};
    use std::sync::Arc;

    fn space(n: usize) -> Arc<FeSpace> {
        let mesh = Arc::new(Mesh::structured(&Domain::unit_square(), n).unwrap());
        FeSpace::taylor_hood(mesh, 2).unwrap()
    }

    #[test]
    fn zero_and_constant_fields() {
        let s = space(4);
        let z = s.zero(FieldKind::Velocity);
        let one = s.interpolate_pressure(|_| 1.0);
        for lp in [Lp::L1, Lp::L2, Lp::Linf] {
            let spec = NormSpec::new(lp, Quantity::Value, 6).density(5);
            assert_eq!(field_norm(&z, None, &spec), 0.0);
            assert!((field_norm(&one, None, &spec) - 1.0).abs() < 1e-14);
        }
        assert!((mean_integral(&one) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn sigma_zero_weight_is_identity() {
        let s = space(4);
        let f = s.interpolate_velocity(|x| [x[0].sin(), x[0] * x[1]]);
        let w = WeightSigma::new([0.3, 0.4], 4.0, s.mesh().h());
        for q in [Quantity::Value, Quantity::Gradient] {
            let plain = NormSpec::new(Lp::L2, q, 6);
            let weighted = plain.weighted(&w, 0.0);
            let a = field_norm(&f, None, &plain);
            let b = field_norm(&f, None, &weighted);
            assert!((a - b).abs() <= 1e-14 * a);
        }
    }

    #[test]
    fn mismatched_spaces_are_rejected() {
        let a = space(4).zero(FieldKind::Velocity);
        let b = space(4).zero(FieldKind::Velocity);
        let spec = NormSpec::new(Lp::L2, Quantity::Value, 6);
        assert!(difference_norm(&a, &b, None, &spec).is_err());
        assert!(difference_norm(&a, &a, None, &spec).is_ok());
    }

    #[test]
    fn interpolation_error_rate() {
        let mut errs = Vec::new();
        for n in [4, 8, 16] {
            let s = space(n);
            let exact = |x: Point| (std::f64::consts::PI * x[0]).sin() * (std::f64::consts::PI * x[1]).sin();
            let f = s.interpolate_velocity(|x| [exact(x), 0.0]);
            let truth = crate::space::Analytic(|x: Point| Sampled::scalar(exact(x), [0.0, 0.0]));
            let spec = NormSpec::new(Lp::L2, Quantity::Value, 8);
            errs.push(probe_norm(s.mesh(), None, &f, Some(&truth), &spec));
        }
        for w in errs.windows(2) {
            let rate = (w[0] / w[1]).log2();
            assert!((rate - 3.0).abs() < 0.15, "rate {rate}");
        }
    }

    #[test]
    fn linf_sampling_converges() {
        let s = space(8);
        let f = s.interpolate_velocity(|x| [(5.0 * x[0]).sin() * x[1], 0.0]);
        let spec = NormSpec::new(Lp::Linf, Quantity::Gradient, 6);
        let a = field_norm(&f, None, &spec.density(5));
        let b = field_norm(&f, None, &spec.density(10));
        assert!((b - a).abs() < 0.01 * b);
    }
}
