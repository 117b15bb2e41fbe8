//! Measured ratio experiments for the global and interior max-norm stability
//! estimates and for the Ritz projection.
//!
//! Every experiment reports `lhs / rhs` per level, where `lhs` is a discrete
//! max-norm quantity and `rhs` the bound with all constants set to one. The
//! continuum norms come from closed forms when available and otherwise from
//! the reference oracle (degree `k + 1` on a mesh refined `gap` times).

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{dist, Domain, Point};
use crate::greens::reference_space;
use crate::mesh::{classify_elements, Mesh, Region};
use crate::norms::{integrate, probe_norm, Lp, NormSpec, Quantity};
use crate::quadrature::{gauss_legendre, QuadratureRule};
use crate::regularization::{DeltaFunction, SmoothBump};
use crate::space::{Analytic, FeSpace, Probe, Sampled, ZeroProbe};
use crate::stokes::{body_force, delta_load, ritz_projection, Rhs, SaddleSystem, Solution};
use crate::verification::manufactured::{
    null_velocity_force, null_velocity_pressure, Manufactured, MsPressure, MsVelocity,
};
use crate::verification::series::{variation, RatioSeries};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityKind {
    GlobalW1inf,
    InteriorW1inf,
    GlobalLinf,
    InteriorLinf,
    RitzGlobal,
    RitzLocal,
}

impl StabilityKind {
    pub const ALL: [StabilityKind; 6] = [
        Self::GlobalW1inf,
        Self::InteriorW1inf,
        Self::GlobalLinf,
        Self::InteriorLinf,
        Self::RitzGlobal,
        Self::RitzLocal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::GlobalW1inf => "global_w1inf",
            Self::InteriorW1inf => "interior_w1inf",
            Self::GlobalLinf => "global_linf",
            Self::InteriorLinf => "interior_linf",
            Self::RitzGlobal => "ritz_global",
            Self::RitzLocal => "ritz_local",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown experiment kind '{s}'")))
    }

    pub fn is_interior(self) -> bool {
        matches!(self, Self::InteriorW1inf | Self::InteriorLinf | Self::RitzLocal)
    }

    pub fn is_ritz(self) -> bool {
        matches!(self, Self::RitzGlobal | Self::RitzLocal)
    }
}

/// Forcing scenarios.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Closed-form smooth solution.
    Manufactured,
    /// `f = ∇p` with linear `p`, so `u = 0`.
    NullVelocity,
    /// A unit-mass bump of radius proportional to `h` near a corner, driving
    /// the first velocity component.
    CornerBump,
    /// `z = b(x) tanh((x₁ - c) / w)` with `b` the edge bubble and `w` the cell
    /// size: a layer that steepens under refinement.
    SteepLayer,
}

impl Scenario {
    pub const ALL: [Scenario; 4] = [
        Self::Manufactured,
        Self::NullVelocity,
        Self::CornerBump,
        Self::SteepLayer,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Self::Manufactured => "manufactured",
            Self::NullVelocity => "null_velocity",
            Self::CornerBump => "corner_bump",
            Self::SteepLayer => "steep_layer",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.label() == s)
            .ok_or_else(|| Error::Config(format!("unknown scenario '{s}'")))
    }

    /// The scenario each kind runs with unless told otherwise.
    pub fn default_for(kind: StabilityKind) -> Self {
        match kind {
            StabilityKind::GlobalW1inf | StabilityKind::GlobalLinf => Self::Manufactured,
            StabilityKind::InteriorW1inf | StabilityKind::InteriorLinf => Self::CornerBump,
            StabilityKind::RitzGlobal | StabilityKind::RitzLocal => Self::SteepLayer,
        }
    }

    pub fn supports(self, kind: StabilityKind) -> bool {
        (self == Self::SteepLayer) == kind.is_ritz()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub domain: Domain,
    pub degree: usize,
    /// Subdivision counts, coarse to fine.
    pub levels: Vec<usize>,
    /// Center `x̃` of `D₁ = B_r(x̃)` and `D₂ = B_r̃(x̃)`.
    pub center: Point,
    pub r: f64,
    pub r_tilde: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub kappa_bar: f64,
    pub big_k: f64,
    pub oracle_gap: u32,
    /// Lattice density of the max-norm rule; `2k + 1` when absent.
    pub density: Option<usize>,
    pub bump_center: Point,
    /// Bump radius in units of `h`.
    pub bump_radius_factor: f64,
    /// Point where the Ritz total variation is measured.
    pub x0: Point,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain: Domain::unit_square(),
            degree: 2,
            levels: vec![16, 32, 64],
            center: [0.6, 0.6],
            r: 0.18,
            r_tilde: 0.36,
            alpha: 0.5,
            kappa: 4.0,
            kappa_bar: 2.0,
            big_k: 4.0,
            oracle_gap: 2,
            density: None,
            bump_center: [0.1, 0.1],
            bump_radius_factor: 1.0,
            x0: [5.0 / 12.0, 7.0 / 12.0],
        }
    }
}

impl ExperimentConfig {
    pub fn density(&self) -> usize {
        self.density.unwrap_or(2 * self.degree + 1)
    }

    fn d1(&self) -> Region {
        Region::Ball {
            center: self.center,
            radius: self.r,
        }
    }

    fn d2(&self) -> Region {
        Region::Ball {
            center: self.center,
            radius: self.r_tilde,
        }
    }

    /// `r̃ > r > κ̄h` and `r̃ - r ≥ κ̄h` at the mesh size of level `n`.
    pub fn check_sets(&self, h: f64) -> Result<()> {
        let kh = self.kappa_bar * h;
        if !self.domain.contains(self.center, 1e-12) {
            return Err(Error::InvalidSubdomain(format!(
                "center ({}, {}) lies outside the domain",
                self.center[0], self.center[1]
            )));
        }
        if !(self.r > kh) {
            return Err(Error::InvalidSubdomain(format!(
                "r = {} does not exceed κ̄h = {kh}",
                self.r
            )));
        }
        if !(self.r_tilde - self.r >= kh) {
            return Err(Error::InvalidSubdomain(format!(
                "r̃ - r = {} is below κ̄h = {kh}",
                self.r_tilde - self.r
            )));
        }
        Ok(())
    }

    /// Level list, oracle gap, scenario support and set geometry for one kind.
    pub fn validate(&self, kind: StabilityKind, scenario: Scenario) -> Result<()> {
        if self.levels.is_empty() {
            return Err(Error::Config("no levels".into()));
        }
        if self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("levels must increase".into()));
        }
        if self.oracle_gap < 2 {
            return Err(Error::Config(format!(
                "oracle gap {} must be at least 2",
                self.oracle_gap
            )));
        }
        if !scenario.supports(kind) {
            return Err(Error::Config(format!(
                "scenario {} does not apply to {}",
                scenario.label(),
                kind.label()
            )));
        }
        if matches!(scenario, Scenario::Manufactured) {
            Manufactured::on(&self.domain)?;
        }
        if kind.is_interior() {
            for &n in &self.levels {
                self.check_sets(Mesh::structured(&self.domain, n)?.h())?;
            }
        }
        if scenario == Scenario::CornerBump && kind.is_interior() {
            let h = Mesh::structured(&self.domain, self.levels[0])?.h();
            let reach = self.r_tilde + self.bump_radius_factor * h;
            if dist(self.bump_center, self.center) <= reach {
                return Err(Error::InvalidSubdomain(
                    "the bump support meets D₂".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The steep-layer function of [`Scenario::SteepLayer`].
#[derive(Clone, Debug)]
pub struct SteepLayer {
    pub domain: Domain,
    pub position: f64,
    pub width: f64,
}

impl SteepLayer {
    pub fn eval(&self, x: Point) -> Sampled {
        let (b, db) = self.domain.edge_bubble(x);
        let t = ((x[0] - self.position) / self.width).tanh();
        let dt = (1.0 - t * t) / self.width;
        Sampled {
            value: [b * t, 0.0],
            grad: [[db[0] * t + b * dt, db[1] * t], [0.0, 0.0]],
        }
    }
}

impl Probe for SteepLayer {
    fn probe(&self, _t: usize, x: Point) -> Sampled {
        self.eval(x)
    }
}

/// `Σ_edges ∫ |[∂_n g_h]| + Σ_T ∫ |Δg_h|` for the discrete Green's function
/// `g_h = K⁻¹ δ` of the scalar Laplacian at `x0`. This is the supremum of
/// `R_h z (x0)` over `z` with `‖z‖_∞ ≤ 1`, the operator norm that the
/// logarithmic Ritz bound controls.
pub fn green_total_variation(sys: &SaddleSystem, x0: Point) -> Result<f64> {
    let space = sys.space();
    let mesh = space.mesh();
    let delta = DeltaFunction::build(space, x0)?;
    let load = delta_load(sys, &delta, 0);
    let nf = sys.n_free();
    let mut g = sys.solve_k(&load[..nf]);
    g.extend(std::iter::repeat_n(0.0, nf));
    let field = sys.extend(&g);
    let (gx, gw) = gauss_legendre(space.velocity_degree() + 4);
    let mut jumps = 0.0;
    for e in 0..mesh.edges().len() {
        let (t1, t2) = mesh.edge_elements(e);
        let Some(t2) = t2 else { continue };
        let [a, c] = mesh.edges()[e];
        let (pa, pc) = (mesh.points()[a], mesh.points()[c]);
        let len = dist(pa, pc);
        let nrm = [(pc[1] - pa[1]) / len, -(pc[0] - pa[0]) / len];
        for (s, w) in gx.iter().zip(&gw) {
            let x = [pa[0] + s * (pc[0] - pa[0]), pa[1] + s * (pc[1] - pa[1])];
            let g1 = field.eval_in(t1, x).grad[0];
            let g2 = field.eval_in(t2, x).grad[0];
            jumps += w * len * ((g1[0] - g2[0]) * nrm[0] + (g1[1] - g2[1]) * nrm[1]).abs();
        }
    }
    let rule = QuadratureRule::triangle(2 * space.velocity_degree() + 4);
    let volume = integrate(mesh, None, &rule, |t, x| {
        let hs = field.hessian_in(t, x)[0];
        (hs[0][0] + hs[1][1]).abs()
    });
    Ok(jumps + volume)
}

/// Continuum norms on the right-hand sides.
enum Truth<'a> {
    Closed {
        u: &'a dyn Probe,
        p: &'a dyn Probe,
        mesh: &'a Mesh,
        degree: usize,
        density: usize,
    },
    Reference(&'a Solution),
}

impl Truth<'_> {
    fn sup(&self, pressure: bool, q: Quantity, region: Option<&Region>) -> f64 {
        match self {
            Truth::Closed {
                u,
                p,
                mesh,
                density,
                ..
            } => {
                let f: &dyn Probe = if pressure { *p } else { *u };
                let el = region.map(|r| classify_elements(mesh, r));
                let spec = NormSpec::new(Lp::Linf, q, 0).density(*density);
                probe_norm(mesh, el.as_deref(), f, None, &spec)
            }
            Truth::Reference(sol) => {
                let f = if pressure { &sol.pressure } else { &sol.velocity };
                let mesh = f.space().mesh();
                let el = region.map(|r| classify_elements(mesh, r));
                let k = sol.velocity.space().velocity_degree();
                let spec = NormSpec::for_degree(Lp::Linf, q, k);
                probe_norm(mesh, el.as_deref(), f, None, &spec)
            }
        }
    }

    fn l2(&self, pressure: bool, q: Quantity) -> f64 {
        match self {
            Truth::Closed {
                u, p, mesh, degree, ..
            } => {
                let f: &dyn Probe = if pressure { *p } else { *u };
                probe_norm(mesh, None, f, None, &NormSpec::new(Lp::L2, q, *degree))
            }
            Truth::Reference(sol) => {
                let f = if pressure { &sol.pressure } else { &sol.velocity };
                let k = sol.velocity.space().velocity_degree();
                probe_norm(
                    f.space().mesh(),
                    None,
                    f,
                    None,
                    &NormSpec::for_degree(Lp::L2, q, k),
                )
            }
        }
    }
}

/// One level of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelMeasurement {
    pub kind: StabilityKind,
    pub n: usize,
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// The discrete max-norm quantity of `lhs` taken over all of `Ω`.
    pub global: f64,
    /// Named auxiliary `(lhs, rhs)` pairs, each becoming its own series.
    pub extra: Vec<(String, f64, f64)>,
}

/// Solves one level of `scenario` once and measures every kind in `kinds`.
pub fn measure_level(
    cfg: &ExperimentConfig,
    kinds: &[StabilityKind],
    scenario: Scenario,
    n: usize,
) -> Result<Vec<LevelMeasurement>> {
    for &kind in kinds {
        cfg.validate(kind, scenario)?;
    }
    let k = cfg.degree;
    let m = cfg.density();
    let mesh = Arc::new(Mesh::structured(&cfg.domain, n)?);
    let h = mesh.h();
    let lh = h.ln().abs();
    let space = FeSpace::taylor_hood(mesh.clone(), k)?;
    let sys = SaddleSystem::assemble(&space)?;
    let d1 = classify_elements(&mesh, &cfg.d1());
    let coarse_max = |f: &crate::space::FeField, el: Option<&[usize]>, q| {
        crate::norms::field_norm(f, el, &NormSpec::for_degree(Lp::Linf, q, k).density(m))
    };
    let qdeg = 2 * k + 8;

    if scenario == Scenario::SteepLayer {
        let mut out = Vec::new();
        let cell = h / std::f64::consts::SQRT_2;
        for &kind in kinds {
            let position = match kind {
                StabilityKind::RitzLocal => 0.15 + 0.37 * cell,
                _ => 0.5 + 0.37 * cell,
            };
            let z = SteepLayer {
                domain: cfg.domain.clone(),
                position,
                width: cell,
            };
            let rz = ritz_projection(&sys, &z, qdeg);
            let zmax = |el: Option<&[usize]>| {
                probe_norm(&mesh, el, &z, None, &NormSpec::new(Lp::Linf, Quantity::Value, 0).density(m))
            };
            let global = coarse_max(&rz, None, Quantity::Value);
            let meas = match kind {
                StabilityKind::RitzGlobal => {
                    let tv = green_total_variation(&sys, cfg.x0)?;
                    LevelMeasurement {
                        kind,
                        n,
                        h,
                        lhs: global,
                        rhs: zmax(None),
                        global,
                        extra: vec![("green_tv".into(), tv, 1.0)],
                    }
                }
                _ => {
                    let d2 = classify_elements(&mesh, &cfg.d2());
                    let zv = probe_norm(&mesh, None, &z, None, &NormSpec::new(Lp::L2, Quantity::Value, qdeg));
                    let zg = probe_norm(&mesh, None, &z, None, &NormSpec::new(Lp::L2, Quantity::Gradient, qdeg));
                    LevelMeasurement {
                        kind,
                        n,
                        h,
                        lhs: coarse_max(&rz, Some(&d1), Quantity::Value),
                        rhs: lh * zmax(Some(&d2)) + h * zv.hypot(zg),
                        global,
                        extra: Vec::new(),
                    }
                }
            };
            out.push(meas);
        }
        return Ok(out);
    }

    let null_p = Analytic(|x: Point| Sampled::scalar(null_velocity_pressure(x), [1.0, 1.0]));
    let mut reference: Option<Solution> = None;
    let sol = match scenario {
        Scenario::Manufactured => Manufactured::on(&cfg.domain)?.solve(&sys)?,
        Scenario::NullVelocity => sys.solve(&Rhs {
            f: body_force(&sys, &null_velocity_force, 2 * k + 2),
            g: vec![0.0; sys.n_pressure()],
        })?,
        Scenario::CornerBump => {
            let bump = SmoothBump::new(&cfg.domain, cfg.bump_center, cfg.bump_radius_factor * h)?;
            let f = |x: Point| [bump.eval(x).0, 0.0];
            let sol = sys.solve(&Rhs {
                f: body_force(&sys, &f, 20),
                g: vec![0.0; sys.n_pressure()],
            })?;
            let rs = reference_space(&space, cfg.oracle_gap)?;
            let ref_sys = SaddleSystem::assemble(&rs)?;
            reference = Some(ref_sys.solve(&Rhs {
                f: body_force(&ref_sys, &f, 20),
                g: vec![0.0; ref_sys.n_pressure()],
            })?);
            sol
        }
        Scenario::SteepLayer => unreachable!(),
    };
    let truth = match (&reference, scenario) {
        (Some(r), _) => Truth::Reference(r),
        (None, Scenario::NullVelocity) => Truth::Closed {
            u: &ZeroProbe,
            p: &null_p,
            mesh: &mesh,
            degree: qdeg,
            density: m,
        },
        _ => Truth::Closed {
            u: &MsVelocity,
            p: &MsPressure,
            mesh: &mesh,
            degree: qdeg,
            density: m,
        },
    };
    let (uh, ph) = (&sol.velocity, &sol.pressure);
    let w_lhs = |el: Option<&[usize]>| {
        coarse_max(uh, el, Quantity::Gradient) + coarse_max(ph, el, Quantity::Value)
    };
    let d2 = cfg.d2();
    let mut out = Vec::new();
    for &kind in kinds {
        let meas = match kind {
            StabilityKind::GlobalW1inf => {
                let lhs = w_lhs(None);
                LevelMeasurement {
                    kind,
                    n,
                    h,
                    lhs,
                    rhs: truth.sup(false, Quantity::Gradient, None) + truth.sup(true, Quantity::Value, None),
                    global: lhs,
                    extra: Vec::new(),
                }
            }
            StabilityKind::InteriorW1inf => LevelMeasurement {
                kind,
                n,
                h,
                lhs: w_lhs(Some(&d1)),
                rhs: truth.sup(false, Quantity::Gradient, Some(&d2))
                    + truth.sup(true, Quantity::Value, Some(&d2))
                    + truth.l2(false, Quantity::Gradient)
                    + truth.l2(true, Quantity::Value),
                global: w_lhs(None),
                extra: Vec::new(),
            },
            StabilityKind::GlobalLinf => {
                let lhs = coarse_max(uh, None, Quantity::Value);
                let rhs = lh * (lh * truth.sup(false, Quantity::Value, None) + h * truth.sup(true, Quantity::Value, None));
                let mut extra = Vec::new();
                if scenario == Scenario::Manufactured {
                    extra.push(best_approximation(&space, &mesh, uh, m, lh, h));
                }
                LevelMeasurement {
                    kind,
                    n,
                    h,
                    lhs,
                    rhs,
                    global: lhs,
                    extra,
                }
            }
            StabilityKind::InteriorLinf => {
                let u2 = truth.l2(false, Quantity::Value);
                let gu2 = truth.l2(false, Quantity::Gradient);
                let p2 = truth.l2(true, Quantity::Value);
                let rhs = lh * (lh * truth.sup(false, Quantity::Value, Some(&d2)) + h * truth.sup(true, Quantity::Value, Some(&d2)))
                    + lh.sqrt() * (h * u2.hypot(gu2) + u2 + h * p2);
                LevelMeasurement {
                    kind,
                    n,
                    h,
                    lhs: coarse_max(uh, Some(&d1), Quantity::Value),
                    rhs,
                    global: coarse_max(uh, None, Quantity::Value),
                    extra: Vec::new(),
                }
            }
            StabilityKind::RitzGlobal | StabilityKind::RitzLocal => unreachable!(),
        };
        out.push(meas);
    }
    Ok(out)
}

/// `‖u - u_h‖_∞` against the global L∞ bound applied to `(u - I_h u, p - I_h p)`
/// for the manufactured solution.
fn best_approximation(
    space: &Arc<FeSpace>,
    mesh: &Mesh,
    uh: &crate::space::FeField,
    m: usize,
    lh: f64,
    h: f64,
) -> (String, f64, f64) {
    let ms = Manufactured;
    let iu = space.interpolate_velocity(|x| ms.velocity(x).value);
    let ip = space.interpolate_pressure(|x| ms.pressure(x).value[0]);
    let spec = NormSpec::new(Lp::Linf, Quantity::Value, 0).density(m);
    let err = probe_norm(mesh, None, &MsVelocity, Some(uh), &spec);
    let bu = probe_norm(mesh, None, &MsVelocity, Some(&iu), &spec);
    let bp = probe_norm(mesh, None, &MsPressure, Some(&ip), &spec);
    ("best_approximation".into(), err, lh * (lh * bu + h * bp))
}

/// The assembled result of one experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StabilityOutcome {
    pub kind: StabilityKind,
    pub scenario: Scenario,
    pub series: RatioSeries,
    /// Global counterpart of `lhs` per level.
    pub global: Vec<f64>,
    /// `global` on the finest level over `global` on the coarsest.
    pub global_growth: f64,
    pub extra: Vec<RatioSeries>,
}

/// Collects per-level measurements (any order) of one kind into an outcome.
pub fn assemble_outcome(
    kind: StabilityKind,
    scenario: Scenario,
    measurements: &[LevelMeasurement],
) -> Result<StabilityOutcome> {
    let mut rows: Vec<&LevelMeasurement> = measurements.iter().filter(|m| m.kind == kind).collect();
    rows.sort_by_key(|m| m.n);
    let id = format!("{}/{}", kind.label(), scenario.label());
    let series = RatioSeries::new(
        id.clone(),
        &rows.iter().map(|m| (m.h, m.lhs, m.rhs)).collect::<Vec<_>>(),
    )?;
    let global: Vec<f64> = rows.iter().map(|m| m.global).collect();
    let global_growth = match (global.first(), global.last()) {
        (Some(&a), Some(&b)) if a > 0.0 => b / a,
        _ => 1.0,
    };
    let mut extra = Vec::new();
    if let Some(first) = rows.first() {
        for (i, (name, _, _)) in first.extra.iter().enumerate() {
            let triples: Vec<(f64, f64, f64)> = rows
                .iter()
                .map(|m| (m.h, m.extra[i].1, m.extra[i].2))
                .collect();
            extra.push(RatioSeries::new(format!("{id}/{name}"), &triples)?);
        }
    }
    Ok(StabilityOutcome {
        kind,
        scenario,
        series,
        global,
        global_growth,
        extra,
    })
}

pub fn run_stability_experiment(
    cfg: &ExperimentConfig,
    kind: StabilityKind,
    scenario: Scenario,
) -> Result<StabilityOutcome> {
    cfg.validate(kind, scenario)?;
    let mut all = Vec::new();
    for &n in &cfg.levels {
        all.extend(measure_level(cfg, &[kind], scenario, n)?);
    }
    assemble_outcome(kind, scenario, &all)
}

/// Variation of the ratios of an outcome's main series.
pub fn ratio_variation(o: &StabilityOutcome) -> f64 {
    variation(&o.series.ratios())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            levels: vec![8, 16],
            kappa_bar: 0.5,
            ..Default::default()
        }
    }

    #[test]
    fn labels_round_trip() {
        for k in StabilityKind::ALL {
            assert_eq!(StabilityKind::parse(k.label()).unwrap(), k);
            assert!(Scenario::default_for(k).supports(k));
        }
        for s in Scenario::ALL {
            assert_eq!(Scenario::parse(s.label()).unwrap(), s);
        }
        assert!(StabilityKind::parse("nope").is_err());
    }

    #[test]
    fn set_geometry_is_validated() {
        let cfg = ExperimentConfig {
            r: 0.05,
            ..small()
        };
        let h = Mesh::structured(&cfg.domain, 8).unwrap().h();
        assert!(cfg.check_sets(h).is_err());
        let cfg = ExperimentConfig {
            r_tilde: 0.2,
            kappa_bar: 2.0,
            ..Default::default()
        };
        assert!(matches!(
            run_stability_experiment(&cfg, StabilityKind::InteriorLinf, Scenario::Manufactured),
            Err(Error::InvalidSubdomain(_))
        ));
        assert!(run_stability_experiment(&small(), StabilityKind::RitzGlobal, Scenario::Manufactured).is_err());
    }

    #[test]
    fn null_velocity_has_zero_velocity_ratios() {
        let cfg = small();
        let ms = measure_level(
            &cfg,
            &[StabilityKind::InteriorLinf, StabilityKind::GlobalW1inf],
            Scenario::NullVelocity,
            8,
        )
        .unwrap();
        assert!(ms[0].lhs < 1e-10 && ms[0].rhs > 0.0, "{:?}", ms[0]);
        // only the pressure contributes, and it is reproduced exactly
        assert!((ms[1].lhs - ms[1].rhs).abs() < 1e-8, "{:?}", ms[1]);
    }

    #[test]
    fn manufactured_global_ratios_are_order_one() {
        let o = run_stability_experiment(&small(), StabilityKind::GlobalW1inf, Scenario::Manufactured).unwrap();
        for r in &o.series.rows {
            assert!((r.ratio - 1.0).abs() < 0.2, "{r:?}");
        }
        let o = run_stability_experiment(&small(), StabilityKind::GlobalLinf, Scenario::Manufactured).unwrap();
        assert_eq!(o.extra.len(), 1);
        assert!(o.extra[0].rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0));
    }

    #[test]
    fn ritz_of_layer_stays_near_its_maximum() {
        let o = run_stability_experiment(&small(), StabilityKind::RitzGlobal, Scenario::SteepLayer).unwrap();
        for r in &o.series.rows {
            assert!(r.ratio > 0.9 && r.ratio < 1.5, "{r:?}");
        }
        assert!(o.extra[0].rows.iter().all(|r| r.lhs >= 1.0));
    }

    #[test]
    fn total_variation_bounds_pointwise_ritz_values() {
        let mesh = Arc::new(Mesh::structured(&Domain::unit_square(), 8).unwrap());
        let space = FeSpace::taylor_hood(mesh, 2).unwrap();
        let sys = SaddleSystem::assemble(&space).unwrap();
        let x0 = [0.43, 0.61];
        let tv = green_total_variation(&sys, x0).unwrap();
        let z = SteepLayer {
            domain: Domain::unit_square(),
            position: 0.45,
            width: 0.05,
        };
        let rz = ritz_projection(&sys, &z, 12);
        let v = rz.evaluate(x0).unwrap().value[0].abs();
        let spec = NormSpec::new(Lp::Linf, Quantity::Value, 0).density(40);
        let zmax = probe_norm(space.mesh(), None, &z, None, &spec);
        assert!(v <= tv * zmax * (1.0 + 1e-9), "{v} {tv} {zmax}");
    }
}
