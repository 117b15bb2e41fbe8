//! Diagnostics for the local energy estimate of Galerkin-orthogonal pairs and
//! for the localized H² regularity estimate of the continuous problem.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{dist, Domain, Point};
use crate::greens::{reference_space, GreensCase, GreensKind, ReferencePair};
use crate::mesh::{classify_elements, Mesh, Region};
use crate::norms::{integrate, probe_norm, Lp, NormSpec, Quantity};
use crate::quadrature::QuadratureRule;
use crate::regularization::SmoothBump;
use crate::space::{FeField, FeSpace, Nested, Probe};
use crate::stokes::{body_force, projection_ph_on, projection_rh_on, Rhs, SaddleSystem, Solution};
use crate::verification::manufactured::{Hessian, Manufactured};
use crate::verification::series::{variation, Verdict, CONSTANT_VARIATION};

/// `dist(Ā₁, ∂A₂ ∖ ∂Ω)` for concentric balls and annuli; infinite when `A₂`
/// is the whole domain.
pub fn set_separation(a1: &Region, a2: &Region) -> Result<f64> {
    a1.validate()?;
    a2.validate()?;
    let parts = |r: &Region| match *r {
        Region::Full => None,
        Region::Ball { center, radius } => Some((center, 0.0, radius)),
        Region::Annulus {
            center,
            inner,
            outer,
        } => Some((center, inner, outer)),
    };
    let Some((c2, i2, o2)) = parts(a2) else {
        return Ok(f64::INFINITY);
    };
    let Some((c1, i1, o1)) = parts(a1) else {
        return Err(Error::InvalidSubdomain("A₁ = Ω is not inside A₂".into()));
    };
    if dist(c1, c2) > 1e-14 {
        return Err(Error::InvalidSubdomain("A₁ and A₂ must be concentric".into()));
    }
    if i1 < i2 || o1 > o2 {
        return Err(Error::InvalidSubdomain("A₁ is not contained in A₂".into()));
    }
    let inner_gap = if i2 > 0.0 { i1 - i2 } else { f64::INFINITY };
    Ok((o2 - o1).min(inner_gap))
}

/// Checks `dist(Ā₁, ∂A₂ ∖ ∂Ω) ≥ d ≥ κ̄h`.
pub fn check_separation(a1: &Region, a2: &Region, d: f64, kappa_bar: f64, h: f64) -> Result<()> {
    let sep = set_separation(a1, a2)?;
    if !(d >= kappa_bar * h) {
        return Err(Error::InvalidSubdomain(format!(
            "d = {d} is below κ̄h = {}",
            kappa_bar * h
        )));
    }
    if sep < d - 1e-14 {
        return Err(Error::InvalidSubdomain(format!(
            "sets are {sep} apart, less than d = {d}"
        )));
    }
    Ok(())
}

/// Both sides of the local energy estimate for one pair, with every constant
/// on the right set to one except the implied `C`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalEnergyRow {
    pub h: f64,
    /// `‖∇(v - v_h)‖_{L²(A₁)}`.
    pub lhs: f64,
    /// `‖∇(v - P_h v)‖_{L²(A₂)}`.
    pub grad_projection: f64,
    /// `‖q - r_h q‖_{L²(A₂)}`.
    pub pressure_projection: f64,
    /// `‖v - P_h v‖_{L²(A₂)}`.
    pub value_projection: f64,
    /// `‖∇(v - v_h)‖_{L²(A₂)}`.
    pub grad_error: f64,
    /// `‖v - v_h‖_{L²(A₂)}`.
    pub value_error: f64,
    /// Smallest `C` making the inequality hold.
    pub implied_constant: f64,
    /// `lhs` over the right side without the `ε‖∇(v - v_h)‖` term.
    pub strict_constant: f64,
}

/// Evaluates every term on the reference mesh of `pair`.
pub fn local_energy_terms(
    pair: &ReferencePair,
    coarse_sys: &SaddleSystem,
    a1: &Region,
    a2: &Region,
    d: f64,
    epsilon: f64,
) -> Result<LocalEnergyRow> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("ε = {epsilon}")));
    }
    let tr = pair.transfer();
    let fine = tr.mesh;
    let deg = pair.reference.velocity.space().norm_degree();
    let v = &pair.reference.velocity;
    let q = &pair.reference.pressure;
    let vh = Nested {
        field: &pair.coarse.velocity,
        parent: &pair.parent,
    };
    let pv = projection_ph_on(coarse_sys, tr, v, deg)?;
    let rq = projection_rh_on(coarse_sys, tr, q, deg);
    let pv = Nested {
        field: &pv,
        parent: &pair.parent,
    };
    let rq = Nested {
        field: &rq,
        parent: &pair.parent,
    };
    let e1 = classify_elements(fine, a1);
    let e2 = classify_elements(fine, a2);
    let norm = |a: &dyn Probe, b: &dyn Probe, el: &[usize], qty| {
        probe_norm(fine, Some(el), a, Some(b), &NormSpec::new(Lp::L2, qty, deg))
    };
    let lhs = norm(v, &vh, &e1, Quantity::Gradient);
    let grad_projection = norm(v, &pv, &e2, Quantity::Gradient);
    let pressure_projection = norm(q, &rq, &e2, Quantity::Value);
    let value_projection = norm(v, &pv, &e2, Quantity::Value);
    let grad_error = norm(v, &vh, &e2, Quantity::Gradient);
    let value_error = norm(v, &vh, &e2, Quantity::Value);
    let num = (lhs - epsilon * grad_error).max(0.0);
    let den = grad_projection
        + pressure_projection
        + (value_projection + value_error) / (epsilon * d);
    let implied_constant = if num == 0.0 {
        0.0
    } else if den > 0.0 {
        num / den
    } else {
        f64::INFINITY
    };
    let strict_constant = if lhs == 0.0 { 0.0 } else { lhs / den };
    Ok(LocalEnergyRow {
        h: pair.coarse.velocity.space().mesh().h(),
        strict_constant,
        lhs,
        grad_projection,
        pressure_projection,
        value_projection,
        grad_error,
        value_error,
        implied_constant,
    })
}

/// Source of the Galerkin-orthogonal pair.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum PairSource {
    Green { kind: GreensKindTag, x0: Point },
    Manufactured,
}

/// Serializable mirror of [`GreensKind`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GreensKindTag {
    G0 { i: usize },
    G1 { i: usize, j: usize },
}

impl GreensKindTag {
    fn kind(self) -> GreensKind {
        match self {
            Self::G0 { i } => GreensKind::G0 { i },
            Self::G1 { i, j } => GreensKind::G1 { i, j },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalEnergyConfig {
    pub domain: Domain,
    pub degree: usize,
    pub levels: Vec<usize>,
    pub source: PairSource,
    pub a1: Region,
    pub a2: Region,
    pub d: f64,
    pub epsilon: f64,
    pub kappa_bar: f64,
    pub oracle_gap: u32,
}

impl Default for LocalEnergyConfig {
    fn default() -> Self {
        let x0 = [5.0 / 12.0, 7.0 / 12.0];
        Self {
            domain: Domain::unit_square(),
            degree: 2,
            levels: vec![16, 32],
            source: PairSource::Green {
                kind: GreensKindTag::G0 { i: 0 },
                x0,
            },
            a1: Region::Annulus {
                center: x0,
                inner: 0.25,
                outer: 0.3,
            },
            a2: Region::Annulus {
                center: x0,
                inner: 0.05,
                outer: 0.5,
            },
            d: 0.2,
            epsilon: 0.5,
            kappa_bar: 2.0,
            oracle_gap: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LocalEnergyReport {
    pub config: LocalEnergyConfig,
    pub rows: Vec<LocalEnergyRow>,
    pub variation: f64,
    pub verdict: Verdict,
}

fn coarse_and_reference(
    domain: &Domain,
    n: usize,
    k: usize,
    gap: u32,
) -> Result<(SaddleSystem, SaddleSystem)> {
    let mesh = Arc::new(Mesh::structured(domain, n)?);
    let space = FeSpace::taylor_hood(mesh, k)?;
    let rs = reference_space(&space, gap)?;
    Ok((SaddleSystem::assemble(&space)?, SaddleSystem::assemble(&rs)?))
}

pub fn run_local_energy_check(cfg: &LocalEnergyConfig) -> Result<LocalEnergyReport> {
    if cfg.levels.is_empty() {
        return Err(Error::Config("no levels".into()));
    }
    let mut rows = Vec::new();
    for &n in &cfg.levels {
        let (sys, ref_sys) = coarse_and_reference(&cfg.domain, n, cfg.degree, cfg.oracle_gap)?;
        check_separation(&cfg.a1, &cfg.a2, cfg.d, cfg.kappa_bar, sys.space().mesh().h())?;
        let pair = match cfg.source {
            PairSource::Green { kind, x0 } => {
                let case = GreensCase::new(sys.space(), kind.kind(), x0, &cfg.domain)?;
                let coarse = crate::greens::solve_greens(&sys, &case)?;
                ReferencePair::new(coarse, &ref_sys, &case)?
            }
            PairSource::Manufactured => {
                let ms = Manufactured::on(&cfg.domain)?;
                ReferencePair::from_solutions(ms.solve(&sys)?, ms.solve(&ref_sys)?)?
            }
        };
        rows.push(local_energy_terms(&pair, &sys, &cfg.a1, &cfg.a2, cfg.d, cfg.epsilon)?);
    }
    let c: Vec<f64> = rows.iter().map(|r| r.implied_constant).collect();
    let variation = variation(&c);
    let finite = c.iter().all(|v| v.is_finite());
    Ok(LocalEnergyReport {
        config: cfg.clone(),
        rows,
        variation,
        verdict: Verdict::from_bool(finite && variation < CONSTANT_VARIATION),
    })
}

/// Pointwise data of a Stokes solution for the H² diagnostic.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct H2Sample {
    pub u: [f64; 2],
    pub grad: [[f64; 2]; 2],
    pub hess: Hessian,
    pub p: f64,
    pub grad_p: Point,
    pub f: [f64; 2],
}

/// A solution `(u, p)` with its forcing, sampled on a quadrature mesh.
pub trait H2Source: Sync {
    fn mesh(&self) -> &Mesh;
    fn sample(&self, t: usize, x: Point) -> H2Sample;
}

/// The manufactured solution integrated on a structured mesh.
pub struct ClosedForm {
    pub mesh: Mesh,
}

impl H2Source for ClosedForm {
    fn mesh(&self) -> &Mesh {
        &self.mesh
    }

    fn sample(&self, _t: usize, x: Point) -> H2Sample {
        let ms = Manufactured;
        let u = ms.velocity(x);
        let p = ms.pressure(x);
        H2Sample {
            u: u.value,
            grad: u.grad,
            hess: ms.velocity_hessian(x),
            p: p.value[0],
            grad_p: p.grad[0],
            f: ms.force(x),
        }
    }
}

/// Finite element fields (typically a reference solution) with elementwise
/// second derivatives, plus the forcing they were computed from.
pub struct Discrete<'a> {
    pub velocity: &'a FeField,
    pub pressure: &'a FeField,
    pub force: &'a (dyn Fn(Point) -> [f64; 2] + Sync),
}

impl H2Source for Discrete<'_> {
    fn mesh(&self) -> &Mesh {
        self.velocity.space().mesh()
    }

    fn sample(&self, t: usize, x: Point) -> H2Sample {
        let u = self.velocity.eval_in(t, x);
        let p = self.pressure.eval_in(t, x);
        H2Sample {
            u: u.value,
            grad: u.grad,
            hess: self.velocity.hessian_in(t, x),
            p: p.value[0],
            grad_p: p.grad[0],
            f: (self.force)(x),
        }
    }
}

/// Both sides of the localized H² estimate over `A₁ = B_r(x̃)`,
/// `A₂ = B_r̃(x̃)`, with `d = r̃ - r`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LocalH2Row {
    pub h: f64,
    /// `‖u‖_{H²(A₁)} + ‖p‖_{H¹(A₁)}`, second derivatives taken elementwise.
    pub lhs: f64,
    /// `‖f‖_{L²(A₂)}`.
    pub force: f64,
    /// `‖∇u‖_{L²(A₂)} / d`.
    pub grad: f64,
    /// `‖u‖_{L²(A₂)} / d²`.
    pub value: f64,
    /// `‖p‖_{L²(A₂)} / d`.
    pub pressure: f64,
    pub rhs: f64,
    pub implied_constant: f64,
    /// `‖u‖_{H²(Ω)}`, the global surrogate.
    pub global_h2: f64,
}

fn sq(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum()
}

pub fn local_h2_terms(
    src: &dyn H2Source,
    center: Point,
    r: f64,
    r_tilde: f64,
    degree: usize,
) -> Result<LocalH2Row> {
    if !(r_tilde > r && r > 0.0) {
        return Err(Error::InvalidSubdomain(format!("radii r = {r}, r̃ = {r_tilde}")));
    }
    let d = r_tilde - r;
    let mesh = src.mesh();
    let rule = QuadratureRule::triangle(degree);
    let e1 = classify_elements(mesh, &Region::Ball { center, radius: r });
    let e2 = classify_elements(mesh, &Region::Ball {
        center,
        radius: r_tilde,
    });
    let int = |el: Option<&[usize]>, f: &dyn Fn(&H2Sample) -> f64| {
        integrate(mesh, el, &rule, |t, x| f(&src.sample(t, x))).sqrt()
    };
    let h2 = |s: &H2Sample| {
        let hs = s.hess;
        sq(&s.u)
            + sq(&[s.grad[0][0], s.grad[0][1], s.grad[1][0], s.grad[1][1]])
            + sq(&[
                hs[0][0][0], hs[0][0][1], hs[0][1][0], hs[0][1][1], hs[1][0][0], hs[1][0][1],
                hs[1][1][0], hs[1][1][1],
            ])
    };
    let lhs = int(Some(&e1), &h2) + int(Some(&e1), &|s| s.p * s.p + sq(&s.grad_p));
    let force = int(Some(&e2), &|s| sq(&s.f));
    let grad = int(Some(&e2), &|s| {
        sq(&[s.grad[0][0], s.grad[0][1], s.grad[1][0], s.grad[1][1]])
    }) / d;
    let value = int(Some(&e2), &|s| sq(&s.u)) / (d * d);
    let pressure = int(Some(&e2), &|s| s.p * s.p) / d;
    let rhs = force + grad + value + pressure;
    let implied_constant = if lhs == 0.0 { 0.0 } else { lhs / rhs };
    Ok(LocalH2Row {
        h: mesh.h(),
        lhs,
        force,
        grad,
        value,
        pressure,
        rhs,
        implied_constant,
        global_h2: int(None, &h2),
    })
}

/// Localized H² check for the manufactured solution on a structured mesh of
/// `n` cells per side.
pub fn run_local_h2_check(center: Point, r: f64, r_tilde: f64, n: usize) -> Result<LocalH2Row> {
    let domain = Domain::unit_square();
    Manufactured::on(&domain)?;
    let src = ClosedForm {
        mesh: Mesh::structured(&domain, n)?,
    };
    local_h2_terms(&src, center, r, r_tilde, 16)
}

/// The localization contrast: reference solutions for a bump of radius `h`
/// at `bump_center`, outside `A₂`. Returns one row per level.
pub fn corner_bump_h2_series(
    levels: &[usize],
    degree: usize,
    gap: u32,
    bump_center: Point,
    center: Point,
    r: f64,
    r_tilde: f64,
) -> Result<Vec<LocalH2Row>> {
    let domain = Domain::unit_square();
    let mut rows = Vec::new();
    for &n in levels {
        let mesh = Arc::new(Mesh::structured(&domain, n)?);
        let h = mesh.h();
        if dist(bump_center, center) <= r_tilde + h {
            return Err(Error::InvalidSubdomain("the bump support meets A₂".into()));
        }
        let space = FeSpace::taylor_hood(mesh, degree)?;
        let rs = reference_space(&space, gap)?;
        let ref_sys = SaddleSystem::assemble(&rs)?;
        let bump = SmoothBump::new(&domain, bump_center, h)?;
        let f = move |x: Point| [bump.eval(x).0, 0.0];
        let sol: Solution = ref_sys.solve(&Rhs {
            f: body_force(&ref_sys, &f, 20),
            g: vec![0.0; ref_sys.n_pressure()],
        })?;
        let src = Discrete {
            velocity: &sol.velocity,
            pressure: &sol.pressure,
            force: &f,
        };
        let mut row = local_h2_terms(&src, center, r, r_tilde, 2 * rs.velocity_degree() + 2)?;
        row.h = h;
        rows.push(row);
    }
    Ok(rows)
}
