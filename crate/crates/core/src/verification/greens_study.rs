//! Green's function error series across levels, measured against the
//! refined higher-degree oracle, plus the oracle's self-convergence gate.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::greens::{
    dyadic_profile, error_norms, pressure_green_quantities, reference_space, solve_greens,
    DyadicProfile, GreensCase, GreensErrors, GreensKind, PressureGreenQuantities, ReferencePair,
};
use crate::mesh::{build_dyadic, Mesh};
use crate::regularization::WeightSigma;
use crate::space::FeSpace;
use crate::stokes::SaddleSystem;
use crate::verification::series::{RatioSeries, GREENS_VARIATION};

/// Largest relative change of the oracle error when the gap grows by one.
pub const GATE_TOLERANCE: f64 = 0.1;

#[derive(Clone, Debug, PartialEq)]
pub struct GreensStudyConfig {
    pub domain: Domain,
    pub degree: usize,
    pub levels: Vec<usize>,
    pub x0: Point,
    pub kappa: f64,
    pub big_k: f64,
    /// Weight exponent.
    pub nu: f64,
    pub oracle_gap: u32,
    pub cases: Vec<GreensKind>,
    /// Samples per element edge for the dyadic maxima.
    pub density: usize,
}

impl Default for GreensStudyConfig {
    fn default() -> Self {
        Self {
            domain: Domain::unit_square(),
            degree: 2,
            levels: vec![16, 32, 64],
            x0: [5.0 / 12.0, 7.0 / 12.0],
            kappa: 4.0,
            big_k: 4.0,
            nu: 1.0,
            oracle_gap: 2,
            cases: vec![
                GreensKind::G0 { i: 0 },
                GreensKind::G1 { i: 0, j: 0 },
                GreensKind::G1 { i: 0, j: 1 },
                GreensKind::PressureGreen,
            ],
            density: 4,
        }
    }
}

impl GreensStudyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("levels must be nonempty and increasing".into()));
        }
        if self.cases.is_empty() {
            return Err(Error::Config("no Green's cases selected".into()));
        }
        if self.oracle_gap < 2 {
            return Err(Error::Config(format!(
                "oracle gap {} must be at least 2",
                self.oracle_gap
            )));
        }
        Ok(())
    }
}

/// Parses `g0_i1`, `g1_i2_j1`, `pressure`.
pub fn parse_case(s: &str) -> Result<GreensKind> {
    let bad = || Error::Config(format!("unknown Green's case {s:?}"));
    let comp = |t: &str, p: &str| -> Result<usize> {
        let v: usize = t.strip_prefix(p).ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if v == 1 || v == 2 {
            Ok(v - 1)
        } else {
            Err(bad())
        }
    };
    let parts: Vec<&str> = s.split('_').collect();
    match parts.as_slice() {
        ["pressure"] => Ok(GreensKind::PressureGreen),
        ["g0", i] => Ok(GreensKind::G0 { i: comp(i, "i")? }),
        ["g1", i, j] => Ok(GreensKind::G1 {
            i: comp(i, "i")?,
            j: comp(j, "j")?,
        }),
        _ => Err(bad()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreensLevelRow {
    pub case: String,
    pub n: usize,
    pub h: f64,
    /// Number of dyadic levels `J`.
    pub dyadic_levels: i32,
    pub errors: GreensErrors,
    pub pressure_green: Option<PressureGreenQuantities>,
    /// Profile of the discrete pair.
    pub profile: DyadicProfile,
    pub reference_iterations: usize,
}

/// Solves every configured case at one level, sharing the reference system.
pub fn greens_level(cfg: &GreensStudyConfig, n: usize) -> Result<Vec<GreensLevelRow>> {
    let mesh = Arc::new(Mesh::structured(&cfg.domain, n)?);
    let h = mesh.h();
    let space = FeSpace::taylor_hood(mesh.clone(), cfg.degree)?;
    let sys = SaddleSystem::assemble(&space)?;
    let ref_sys = SaddleSystem::assemble(&reference_space(&space, cfg.oracle_gap)?)?;
    let sigma = WeightSigma::new(cfg.x0, cfg.kappa, h);
    let decomp = build_dyadic(&mesh, cfg.x0, cfg.big_k)?;
    let mut rows = Vec::with_capacity(cfg.cases.len());
    for &kind in &cfg.cases {
        let case = GreensCase::new(&space, kind, cfg.x0, &cfg.domain)?;
        let pair = ReferencePair::new(solve_greens(&sys, &case)?, &ref_sys, &case)?;
        let pressure_green = match kind {
            GreensKind::PressureGreen => Some(pressure_green_quantities(&pair, &sys, &sigma, cfg.nu)?),
            _ => None,
        };
        rows.push(GreensLevelRow {
            case: kind.label(),
            n,
            h,
            dyadic_levels: decomp.levels,
            errors: error_norms(&pair, &sys, &sigma, cfg.nu),
            pressure_green,
            profile: dyadic_profile(&pair.coarse.velocity, &pair.coarse.pressure, &decomp, cfg.density),
            reference_iterations: pair.reference.stats.iterations,
        });
    }
    Ok(rows)
}

/// `‖∇(g - g_h)‖_{L¹}` against oracles of gap `m` and `m + 1`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleGate {
    pub case: String,
    pub n: usize,
    pub gap: u32,
    pub error: f64,
    pub error_next: f64,
    pub relative_change: f64,
    pub pass: bool,
}

pub fn oracle_gate(
    domain: &Domain,
    degree: usize,
    n: usize,
    kind: GreensKind,
    x0: Point,
    gap: u32,
) -> Result<OracleGate> {
    let mesh = Arc::new(Mesh::structured(domain, n)?);
    let space = FeSpace::taylor_hood(mesh, degree)?;
    let sys = SaddleSystem::assemble(&space)?;
    let case = GreensCase::new(&space, kind, x0, domain)?;
    let coarse = solve_greens(&sys, &case)?;
    let sigma = WeightSigma::new(x0, 1.0, space.mesh().h());
    let mut errs = [0.0; 2];
    for (e, m) in errs.iter_mut().zip([gap, gap + 1]) {
        let ref_sys = SaddleSystem::assemble(&reference_space(&space, m)?)?;
        let pair = ReferencePair::new(coarse.clone(), &ref_sys, &case)?;
        *e = error_norms(&pair, &sys, &sigma, 1.0).grad_l1;
    }
    let relative_change = (errs[0] - errs[1]).abs() / errs[1].abs().max(f64::MIN_POSITIVE);
    Ok(OracleGate {
        case: kind.label(),
        n,
        gap,
        error: errs[0],
        error_next: errs[1],
        relative_change,
        pass: relative_change < GATE_TOLERANCE,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GreensStudy {
    pub rows: Vec<GreensLevelRow>,
    pub series: Vec<RatioSeries>,
    pub gate: Option<OracleGate>,
}

impl GreensStudy {
    pub fn series(&self, id: &str) -> Option<&RatioSeries> {
        self.series.iter().find(|s| s.id == id)
    }

    pub fn ok(&self) -> bool {
        self.series.iter().all(|s| s.verdict.ok()) && self.gate.as_ref().is_none_or(|g| g.pass)
    }
}

/// The scaled series measured for one case: `(name, lhs, scaling)` per level.
fn case_quantities(kind: GreensKind, r: &GreensLevelRow) -> Vec<(&'static str, f64, f64)> {
    let h = r.h;
    let l = h.ln().abs();
    let e = &r.errors;
    match kind {
        GreensKind::G0 { .. } => vec![
            ("grad_l1", e.grad_l1, h * l),
            ("grad_weighted_l2", e.grad_weighted_l2, h * l.sqrt()),
            ("pressure_grad_l1", e.pressure_grad_l1, l),
            ("pressure_interp_l1", e.pressure_interp_l1, h * l),
        ],
        GreensKind::G1 { .. } => vec![("grad_l1", e.grad_l1, 1.0)],
        GreensKind::PressureGreen => {
            let q = r.pressure_green.unwrap_or_default();
            vec![("l1_sum", q.l1_sum(), 1.0), ("weighted_sum", q.weighted_sum(), 1.0)]
        }
    }
}

/// Series ids are `greens/<case>/<quantity>`.
pub fn assemble_greens_study(
    cfg: &GreensStudyConfig,
    mut rows: Vec<GreensLevelRow>,
    gate: Option<OracleGate>,
) -> Result<GreensStudy> {
    rows.sort_by(|a, b| (a.n, &a.case).cmp(&(b.n, &b.case)));
    let mut series = Vec::new();
    for &kind in &cfg.cases {
        let label = kind.label();
        let mine: Vec<&GreensLevelRow> = rows.iter().filter(|r| r.case == label).collect();
        if mine.is_empty() {
            continue;
        }
        let per_level: Vec<_> = mine.iter().map(|r| (r.h, case_quantities(kind, r))).collect();
        for (q, (name, _, _)) in per_level[0].1.iter().enumerate() {
            let triples: Vec<(f64, f64, f64)> = per_level.iter().map(|(h, v)| (*h, v[q].1, v[q].2)).collect();
            series.push(RatioSeries::strict(
                format!("greens/{label}/{name}"),
                &triples,
                GREENS_VARIATION,
            )?);
        }
    }
    Ok(GreensStudy { rows, series, gate })
}

/// Serial driver: every level, then the gate on the coarsest level for the
/// first case when `gate` is set.
pub fn run_greens_study(cfg: &GreensStudyConfig, gate: bool) -> Result<GreensStudy> {
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.levels {
        rows.extend(greens_level(cfg, n)?);
    }
    let gate = if gate {
        Some(oracle_gate(
            &cfg.domain,
            cfg.degree,
            cfg.levels[0],
            cfg.cases[0],
            cfg.x0,
            cfg.oracle_gap,
        )?)
    } else {
        None
    };
    assemble_greens_study(cfg, rows, gate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn case_labels_parse_back() {
        for kind in GreensStudyConfig::default().cases {
            assert_eq!(parse_case(&kind.label()).unwrap(), kind);
        }
        assert!(parse_case("g0_i3").is_err());
        assert!(parse_case("g1_i1").is_err());
    }

    #[test]
    fn coarse_study_produces_every_series() {
        let cfg = GreensStudyConfig {
            levels: vec![4, 8],
            big_k: 2.0,
            ..Default::default()
        };
        let study = run_greens_study(&cfg, false).unwrap();
        assert_eq!(study.rows.len(), 8);
        assert_eq!(study.series.len(), 4 + 1 + 1 + 2);
        for s in &study.series {
            assert!(s.rows.iter().all(|r| r.ratio.is_finite() && r.ratio > 0.0), "{}", s.id);
        }
        assert!(study.series("greens/g1_i1_j2/grad_l1").is_some());
    }
}
