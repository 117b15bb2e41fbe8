//! Regularized Green's functions: discrete solves, fine-mesh reference
//! solutions standing in for the continuous functions, and the error,
//! interpolation and dyadic quantities measured on them.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::mesh::{DyadicDecomposition, Mesh};
use crate::norms::{field_norm, integrate, probe_norm, sample_max, Lp, NormSpec, Quantity};
use crate::quadrature::QuadratureRule;
use crate::regularization::{DeltaFunction, SmoothBump, WeightSigma};
use crate::space::{parent_map, FeField, FeSpace, Nested};
use crate::stokes::{
    assemble_rhs, projection_ph_on, projection_rh_on, RhsFunctional, SaddleSystem, Solution,
    Transfer,
};

/// Largest reference velocity node count attempted.
pub const MAX_REFERENCE_NODES: usize = 3_000_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GreensKind {
    /// `-Δg + ∇λ = δ_h e_i`.
    G0 { i: usize },
    /// `-Δg + ∇λ = (∂_j δ_h) e_i`.
    G1 { i: usize, j: usize },
    /// `-ΔG + ∇Λ = 0`, `∇·G = δ_h - φ`.
    PressureGreen,
}

impl GreensKind {
    /// Short name; components are printed 1-based.
    pub fn label(&self) -> String {
        match *self {
            GreensKind::G0 { i } => format!("g0_i{}", i + 1),
            GreensKind::G1 { i, j } => format!("g1_i{}_j{}", i + 1, j + 1),
            GreensKind::PressureGreen => "pressure".into(),
        }
    }
}

/// A Green's problem with its data. `δ_h` is built once on the mesh under
/// study and reused unchanged on reference meshes.
#[derive(Clone, Debug)]
pub struct GreensCase {
    pub kind: GreensKind,
    pub x0: Point,
    pub delta: DeltaFunction,
    pub bump: Option<SmoothBump>,
}

impl GreensCase {
    pub fn new(space: &FeSpace, kind: GreensKind, x0: Point, domain: &Domain) -> Result<Self> {
        match kind {
            GreensKind::G0 { i } if i < 2 => {}
            GreensKind::G1 { i, j } if i < 2 && j < 2 => {}
            GreensKind::PressureGreen => {}
            _ => return Err(Error::Precondition(format!("component index in {kind:?}"))),
        }
        let delta = DeltaFunction::build(space, x0)?;
        let bump = match kind {
            GreensKind::PressureGreen => Some(SmoothBump::default_for(domain)?),
            _ => None,
        };
        Ok(Self {
            kind,
            x0,
            delta,
            bump,
        })
    }

    pub fn functional(&self) -> RhsFunctional<'_> {
        match self.kind {
            GreensKind::G0 { i } => RhsFunctional::DeltaComponent {
                delta: &self.delta,
                i,
            },
            GreensKind::G1 { i, j } => RhsFunctional::DeltaDerivative {
                delta: &self.delta,
                i,
                j,
            },
            GreensKind::PressureGreen => RhsFunctional::DivergenceData {
                delta: &self.delta,
                bump: self.bump.as_ref().expect("pressure case carries a bump"),
            },
        }
    }
}

pub fn solve_greens(sys: &SaddleSystem, case: &GreensCase) -> Result<Solution> {
    let rhs = assemble_rhs(sys, &case.functional(), 0)?;
    sys.solve(&rhs)
}

/// Degree `k + 1` space on the mesh refined `gap` times.
pub fn reference_space(coarse: &FeSpace, gap: u32) -> Result<Arc<FeSpace>> {
    let m = 1usize << gap;
    let k = coarse.velocity_degree() + 1;
    let n_elems = coarse.mesh().n_elements() * m * m;
    let estimate = n_elems * k * k / 2 + coarse.mesh().n_points() * m * k;
    if estimate > MAX_REFERENCE_NODES {
        return Err(Error::ResourceLimit(format!(
            "reference space with about {estimate} velocity nodes; use fewer levels or a smaller oracle gap"
        )));
    }
    let mesh = Arc::new(coarse.mesh().subdivide(m));
    FeSpace::taylor_hood(mesh, k)
}

/// A coarse solution together with the reference standing in for the
/// continuous Green's function.
#[derive(Clone, Debug)]
pub struct ReferencePair {
    pub coarse: Solution,
    pub reference: Solution,
    /// Coarse element of every reference element.
    pub parent: Vec<usize>,
}

impl ReferencePair {
    /// Pairs a coarse solution with the reference solve of the same case.
    pub fn new(coarse: Solution, ref_sys: &SaddleSystem, case: &GreensCase) -> Result<Self> {
        let reference = solve_greens(ref_sys, case)?;
        Self::from_solutions(coarse, reference)
    }

    pub fn from_solutions(coarse: Solution, reference: Solution) -> Result<Self> {
        let parent = parent_map(
            reference.velocity.space().mesh(),
            coarse.velocity.space().mesh(),
        )?;
        Ok(Self {
            coarse,
            reference,
            parent,
        })
    }

    pub fn fine_mesh(&self) -> &Mesh {
        self.reference.velocity.space().mesh()
    }

    pub fn transfer(&self) -> Transfer<'_> {
        Transfer {
            mesh: self.fine_mesh(),
            parent: &self.parent,
        }
    }

    fn coarse_velocity(&self) -> Nested<'_> {
        Nested {
            field: &self.coarse.velocity,
            parent: &self.parent,
        }
    }

    fn degree(&self) -> usize {
        self.reference.velocity.space().norm_degree()
    }
}

/// Solves a case on the coarse system and on the reference system refined
/// `gap >= 2` times with one degree more.
pub fn reference_solve(
    coarse_sys: &SaddleSystem,
    case: &GreensCase,
    gap: u32,
) -> Result<ReferencePair> {
    if gap < 2 {
        return Err(Error::Precondition(format!("oracle gap {gap} must be at least 2")));
    }
    let space = reference_space(coarse_sys.space(), gap)?;
    let ref_sys = SaddleSystem::assemble(&space)?;
    ReferencePair::new(solve_greens(coarse_sys, case)?, &ref_sys, case)
}

/// Error quantities of one Green's pair. `ν` is the weight exponent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct GreensErrors {
    /// `‖∇(g - g_h)‖_{L¹}`.
    pub grad_l1: f64,
    /// `‖σ^ν ∇(g - g_h)‖_{L²}`.
    pub grad_weighted_l2: f64,
    /// `‖∇λ_h‖_{L¹}`.
    pub pressure_grad_l1: f64,
    /// `‖σ^ν ∇λ_h‖_{L²}`.
    pub pressure_grad_weighted_l2: f64,
    /// `‖λ - r_h λ‖_{L¹}`.
    pub pressure_interp_l1: f64,
}

/// All error norms, integrated on the reference mesh so that both fields are
/// polynomial on every quadrature cell.
pub fn error_norms(
    pair: &ReferencePair,
    coarse_sys: &SaddleSystem,
    sigma: &WeightSigma,
    nu: f64,
) -> GreensErrors {
    let fine = pair.fine_mesh();
    let deg = pair.degree();
    let uh = pair.coarse_velocity();
    let u = &pair.reference.velocity;
    let l1 = NormSpec::new(Lp::L1, Quantity::Gradient, deg);
    let l2w = NormSpec::new(Lp::L2, Quantity::Gradient, deg).weighted(sigma, nu);
    let coarse_deg = coarse_sys.space().norm_degree();
    let ph = &pair.coarse.pressure;
    GreensErrors {
        grad_l1: probe_norm(fine, None, u, Some(&uh), &l1),
        grad_weighted_l2: probe_norm(fine, None, u, Some(&uh), &l2w),
        pressure_grad_l1: field_norm(ph, None, &NormSpec::new(Lp::L1, Quantity::Gradient, coarse_deg)),
        pressure_grad_weighted_l2: field_norm(
            ph,
            None,
            &NormSpec::new(Lp::L2, Quantity::Gradient, coarse_deg).weighted(sigma, nu),
        ),
        pressure_interp_l1: interpolation_error_lambda0(pair, coarse_sys),
    }
}

/// `‖λ - r_h λ‖_{L¹}` with `λ` the reference pressure.
pub fn interpolation_error_lambda0(pair: &ReferencePair, coarse_sys: &SaddleSystem) -> f64 {
    let tr = pair.transfer();
    let lam = &pair.reference.pressure;
    let rh = projection_rh_on(coarse_sys, tr, lam, pair.degree());
    let nested = Nested {
        field: &rh,
        parent: &pair.parent,
    };
    probe_norm(
        tr.mesh,
        None,
        lam,
        Some(&nested),
        &NormSpec::new(Lp::L1, Quantity::Value, pair.degree()),
    )
}

/// Interpolation quantities of the pressure Green's pair `(G, Λ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PressureGreenQuantities {
    /// `‖∇(P_h G - G)‖_{L¹}`.
    pub ph_grad_l1: f64,
    /// `‖r_h Λ - Λ‖_{L¹}`.
    pub rh_l1: f64,
    /// `‖σ^ν ∇(P_h G - G)‖_{L²}`.
    pub ph_grad_weighted_l2: f64,
    /// `‖σ^ν (r_h Λ - Λ)‖_{L²}`.
    pub rh_weighted_l2: f64,
}

impl PressureGreenQuantities {
    pub fn l1_sum(&self) -> f64 {
        self.ph_grad_l1 + self.rh_l1
    }

    pub fn weighted_sum(&self) -> f64 {
        self.ph_grad_weighted_l2 + self.rh_weighted_l2
    }
}

pub fn pressure_green_quantities(
    pair: &ReferencePair,
    coarse_sys: &SaddleSystem,
    sigma: &WeightSigma,
    nu: f64,
) -> Result<PressureGreenQuantities> {
    let tr = pair.transfer();
    let deg = pair.degree();
    let g = &pair.reference.velocity;
    let lam = &pair.reference.pressure;
    let pg = projection_ph_on(coarse_sys, tr, g, deg)?;
    let rl = projection_rh_on(coarse_sys, tr, lam, deg);
    let pg_n = Nested {
        field: &pg,
        parent: &pair.parent,
    };
    let rl_n = Nested {
        field: &rl,
        parent: &pair.parent,
    };
    let grad = |lp| NormSpec::new(lp, Quantity::Gradient, deg);
    let val = |lp| NormSpec::new(lp, Quantity::Value, deg);
    Ok(PressureGreenQuantities {
        ph_grad_l1: probe_norm(tr.mesh, None, g, Some(&pg_n), &grad(Lp::L1)),
        rh_l1: probe_norm(tr.mesh, None, lam, Some(&rl_n), &val(Lp::L1)),
        ph_grad_weighted_l2: probe_norm(
            tr.mesh,
            None,
            g,
            Some(&pg_n),
            &grad(Lp::L2).weighted(sigma, nu),
        ),
        rh_weighted_l2: probe_norm(
            tr.mesh,
            None,
            lam,
            Some(&rl_n),
            &val(Lp::L2).weighted(sigma, nu),
        ),
    })
}

/// Maxima and norms of a Green's solution over one set of the decomposition.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnnulusRecord {
    /// `None` for the inner ball.
    pub j: Option<i32>,
    pub d: f64,
    pub elements: usize,
    pub max_grad: f64,
    pub max_value: f64,
    pub max_pressure: f64,
    /// Broken `H²` seminorm (elementwise second derivatives); a surrogate.
    pub h2_surrogate: f64,
    pub pressure_grad_l2: f64,
}

/// Least-squares slope of `ln y` against `ln d` with its standard error.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub std_err: f64,
    pub points: usize,
}

impl SlopeFit {
    pub fn fit(d: &[f64], y: &[f64]) -> Self {
        let pts: Vec<(f64, f64)> = d
            .iter()
            .zip(y)
            .filter(|(&a, &b)| a > 0.0 && b > 0.0)
            .map(|(a, b)| (a.ln(), b.ln()))
            .collect();
        let n = pts.len();
        if n < 2 {
            return Self {
                points: n,
                ..Self::default()
            };
        }
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n as f64;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n as f64;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx == 0.0 {
            return Self {
                points: n,
                ..Self::default()
            };
        }
        let slope = sxy / sxx;
        let std_err = if n > 2 {
            let rss: f64 = pts
                .iter()
                .map(|p| (p.1 - my - slope * (p.0 - mx)).powi(2))
                .sum();
            (rss / (n - 2) as f64 / sxx).sqrt()
        } else {
            0.0
        };
        Self {
            slope,
            std_err,
            points: n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DyadicProfile {
    pub inner: AnnulusRecord,
    pub annuli: Vec<AnnulusRecord>,
    /// Annuli without elements.
    pub skipped: Vec<i32>,
    pub grad_slope: SlopeFit,
    pub value_slope: SlopeFit,
    pub pressure_slope: SlopeFit,
}

fn set_record(
    velocity: &FeField,
    pressure: &FeField,
    elements: &[usize],
    j: Option<i32>,
    d: f64,
    density: usize,
) -> AnnulusRecord {
    let mesh = velocity.space().mesh();
    let deg = velocity.space().norm_degree();
    let rule = QuadratureRule::triangle(deg);
    let h2 = integrate(mesh, Some(elements), &rule, |t, x| {
        velocity
            .hessian_in(t, x)
            .iter()
            .flat_map(|c| c.iter().flatten())
            .map(|v| v * v)
            .sum()
    })
    .sqrt();
    AnnulusRecord {
        j,
        d,
        elements: elements.len(),
        max_grad: sample_max(mesh, Some(elements), density, |t, x| velocity.eval_in(t, x).grad_norm()),
        max_value: sample_max(mesh, Some(elements), density, |t, x| velocity.eval_in(t, x).value_norm()),
        max_pressure: sample_max(mesh, Some(elements), density, |t, x| {
            pressure.eval_in(t, x).value[0].abs()
        }),
        h2_surrogate: h2,
        pressure_grad_l2: field_norm(
            pressure,
            Some(elements),
            &NormSpec::new(Lp::L2, Quantity::Gradient, deg),
        ),
    }
}

/// Per-annulus maxima of a velocity/pressure pair and fitted log-log slopes
/// against `d_j`.
pub fn dyadic_profile(
    velocity: &FeField,
    pressure: &FeField,
    decomp: &DyadicDecomposition,
    density: usize,
) -> DyadicProfile {
    let inner = set_record(
        velocity,
        pressure,
        &decomp.inner.elements,
        None,
        decomp.k * decomp.h,
        density,
    );
    let mut annuli = Vec::new();
    let mut skipped = Vec::new();
    for a in &decomp.annuli {
        if a.base.is_empty() {
            skipped.push(a.j);
            continue;
        }
        annuli.push(set_record(velocity, pressure, &a.base.elements, Some(a.j), a.d, density));
    }
    let d: Vec<f64> = annuli.iter().map(|r| r.d).collect();
    let pick = |f: fn(&AnnulusRecord) -> f64| annuli.iter().map(f).collect::<Vec<_>>();
    DyadicProfile {
        grad_slope: SlopeFit::fit(&d, &pick(|r| r.max_grad)),
        value_slope: SlopeFit::fit(&d, &pick(|r| r.max_value)),
        pressure_slope: SlopeFit::fit(&d, &pick(|r| r.max_pressure)),
        inner,
        annuli,
        skipped,
    }
}

/// One CSV row per level of a Green's experiment.
pub const CSV_HEADER: &str = "case,h,J,grad_l1,grad_weighted_l2,pressure_grad_l1,pressure_grad_weighted_l2,pressure_interp_l1,grad_slope,value_slope,pressure_slope";

pub fn csv_row(case: &str, h: f64, levels: i32, e: &GreensErrors, p: Option<&DyadicProfile>) -> String {
    let (a, b, c) = p
        .map(|p| (p.grad_slope.slope, p.value_slope.slope, p.pressure_slope.slope))
        .unwrap_or((f64::NAN, f64::NAN, f64::NAN));
    format!(
        "{case},{h:.16e},{levels},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{a:.16e},{b:.16e},{c:.16e}",
        e.grad_l1,
        e.grad_weighted_l2,
        e.pressure_grad_l1,
        e.pressure_grad_weighted_l2,
        e.pressure_interp_l1
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stokes::SaddleSystem;
    use crate::sparse::dot;

    fn setup(n: usize) -> (Domain, SaddleSystem) {
        let domain = Domain::unit_square();
        let mesh = Arc::new(Mesh::structured(&domain, n).unwrap());
        let sys = SaddleSystem::assemble(&FeSpace::taylor_hood(mesh, 2).unwrap()).unwrap();
        (domain, sys)
    }

    #[test]
    fn g0_pairing_identity() {
        let (domain, sys) = setup(6);
        let space = sys.space().clone();
        let case = GreensCase::new(&space, GreensKind::G0 { i: 1 }, [0.41, 0.57], &domain).unwrap();
        let sol = solve_greens(&sys, &case).unwrap();
        let zero = space.zero(crate::space::FieldKind::Pressure);
        for s in 0..5 {
            let v = space
                .interpolate_velocity(|x| {
                    let a = s as f64 + 1.0;
                    [(a * x[0]).sin() * x[1], (a * x[1] - x[0]).cos()]
                })
                .pin_boundary();
            let lhs = sys.a_form(&sol.velocity, &sol.pressure, &v, &zero);
            let rhs = case.delta.pair_component(&v, 1);
            assert!((lhs - rhs).abs() < 1e-10, "{lhs} {rhs}");
        }
    }

    #[test]
    fn g1_load_kills_constants() {
        let (domain, sys) = setup(4);
        let space = sys.space().clone();
        let case = GreensCase::new(&space, GreensKind::G1 { i: 0, j: 1 }, [0.4, 0.6], &domain).unwrap();
        let c = space.interpolate_velocity(|_| [1.0, 1.0]);
        assert!(case.delta.pair_derivative(&c, 0, 1).abs() < 1e-12);
        let rhs = assemble_rhs(&sys, &case.functional(), 0).unwrap();
        // the load is the derivative pairing of each free basis function
        let t = space.interpolate_velocity(|x| [x[0] * x[1], 0.0]).pin_boundary();
        let expect = case.delta.pair_derivative(&t, 0, 1);
        assert!((dot(&rhs.f, &sys.restrict(&t)) - expect).abs() < 1e-10);
    }

    #[test]
    fn identical_pair_has_zero_errors() {
        let (domain, sys) = setup(4);
        let space = sys.space().clone();
        for kind in [GreensKind::G0 { i: 0 }, GreensKind::PressureGreen] {
            let case = GreensCase::new(&space, kind, [0.45, 0.55], &domain).unwrap();
            let a = solve_greens(&sys, &case).unwrap();
            let pair = ReferencePair::from_solutions(a.clone(), a).unwrap();
            let sigma = WeightSigma::new(case.x0, 4.0, space.mesh().h());
            let e = error_norms(&pair, &sys, &sigma, 1.0);
            assert_eq!(e.grad_l1, 0.0);
            assert_eq!(e.grad_weighted_l2, 0.0);
            assert!(e.pressure_interp_l1 < 1e-13, "{}", e.pressure_interp_l1);
            assert!(e.pressure_grad_l1 > 0.0);
        }
    }

    #[test]
    fn pressure_green_is_compatible_and_solvable() {
        let (domain, sys) = setup(8);
        let space = sys.space().clone();
        let case = GreensCase::new(&space, GreensKind::PressureGreen, [0.3, 0.7], &domain).unwrap();
        let sol = solve_greens(&sys, &case).unwrap();
        assert!(sol.stats.compatibility_defect.abs() < 1e-9);
        assert!(sol.stats.residual < 1e-10);
    }

    #[test]
    fn zero_field_profile() {
        let (_, sys) = setup(8);
        let space = sys.space().clone();
        let decomp = crate::mesh::build_dyadic(space.mesh(), [0.5, 0.5], 2.0).unwrap();
        let z = space.zero(crate::space::FieldKind::Velocity);
        let p = space.zero(crate::space::FieldKind::Pressure);
        let prof = dyadic_profile(&z, &p, &decomp, 5);
        assert!(prof
            .annuli
            .iter()
            .all(|r| r.max_grad == 0.0 && r.max_value == 0.0 && r.max_pressure == 0.0));
    }

    #[test]
    fn slope_fit_recovers_power_law() {
        let d = [0.5, 0.25, 0.125, 0.0625];
        let y: Vec<f64> = d.iter().map(|x: &f64| 3.0 * x.powf(-1.5)).collect();
        let f = SlopeFit::fit(&d, &y);
        assert!((f.slope + 1.5).abs() < 1e-12 && f.std_err < 1e-10);
    }
}
