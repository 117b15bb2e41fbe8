//! Ratio series across refinement levels and their growth-model fits.

use serde::Serialize;

use crate::error::{Error, Result};

/// Variation threshold for ratio series ("bounded" below it).
pub const RATIO_VARIATION: f64 = 2.0;
/// Variation threshold for measured constants.
pub const CONSTANT_VARIATION: f64 = 1.25;
/// Variation threshold for the Green's function error series.
pub const GREENS_VARIATION: f64 = 1.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GrowthModel {
    Constant,
    Log,
    LogSquared,
}

impl GrowthModel {
    pub const ALL: [GrowthModel; 3] = [Self::Constant, Self::Log, Self::LogSquared];

    pub fn eval(self, h: f64) -> f64 {
        let l = h.ln().abs();
        match self {
            Self::Constant => 1.0,
            Self::Log => l,
            Self::LogSquared => l * l,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Constant => "constant",
            Self::Log => "log",
            Self::LogSquared => "log_squared",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Bounded,
    Fail,
}

impl Verdict {
    pub fn ok(self) -> bool {
        self != Verdict::Fail
    }

    pub fn label(self) -> &'static str {
        match self {
            Self::Pass => "pass",
            Self::Bounded => "bounded",
            Self::Fail => "fail",
        }
    }

    pub fn from_bool(ok: bool) -> Self {
        if ok {
            Self::Pass
        } else {
            Self::Fail
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RatioRow {
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub ratio: f64,
}

/// One-parameter fit `ratio ≈ c · g(h)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ModelFit {
    pub model: GrowthModel,
    pub c: f64,
    /// Root of the summed squared residuals.
    pub residual: f64,
}

pub fn fit_model(model: GrowthModel, h: &[f64], y: &[f64]) -> ModelFit {
    let g: Vec<f64> = h.iter().map(|&h| model.eval(h)).collect();
    let gg: f64 = g.iter().map(|v| v * v).sum();
    let c = if gg > 0.0 {
        g.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / gg
    } else {
        0.0
    };
    let residual = g
        .iter()
        .zip(y)
        .map(|(a, b)| (b - c * a).powi(2))
        .sum::<f64>()
        .sqrt();
    ModelFit { model, c, residual }
}

/// `max / min`; 1 for an all-zero list, infinite when only the minimum is 0.
pub fn variation(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if values.is_empty() || max == 0.0 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Whether the values never increase by more than a relative `1e-9`.
pub fn nonincreasing(values: &[f64]) -> bool {
    values.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RatioSeries {
    pub id: String,
    pub rows: Vec<RatioRow>,
    pub fits: Vec<ModelFit>,
    pub best: GrowthModel,
    pub variation: f64,
    pub verdict: Verdict,
}

impl RatioSeries {
    /// Builds the series from `(h, lhs, rhs)` triples ordered from coarse to
    /// fine. `0 / 0` counts as a zero ratio.
    pub fn new(id: impl Into<String>, levels: &[(f64, f64, f64)]) -> Result<Self> {
        let id = id.into();
        if levels.is_empty() {
            return Err(Error::Precondition(format!("series {id} has no levels")));
        }
        if levels.windows(2).any(|w| w[1].0 >= w[0].0) {
            return Err(Error::Precondition(format!(
                "series {id}: h must strictly decrease"
            )));
        }
        let mut rows = Vec::with_capacity(levels.len());
        for &(h, lhs, rhs) in levels {
            let ratio = if lhs == 0.0 && rhs == 0.0 { 0.0 } else { lhs / rhs };
            if !ratio.is_finite() || ratio < 0.0 {
                return Err(Error::Precondition(format!(
                    "series {id}: ratio {lhs} / {rhs} at h = {h}"
                )));
            }
            rows.push(RatioRow { h, lhs, rhs, ratio });
        }
        let h: Vec<f64> = rows.iter().map(|r| r.h).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.ratio).collect();
        let fits: Vec<ModelFit> = GrowthModel::ALL
            .iter()
            .map(|&m| fit_model(m, &h, &y))
            .collect();
        // ties go to the slower model
        let best = fits
            .iter()
            .fold(fits[0], |b, f| if f.residual < b.residual { *f } else { b })
            .model;
        let variation = variation(&y);
        // the theorems are upper bounds, so a ratio that never grows is bounded too
        let verdict = if variation < RATIO_VARIATION || nonincreasing(&y) {
            Verdict::Bounded
        } else {
            Verdict::Fail
        };
        Ok(Self {
            id,
            rows,
            fits,
            best,
            variation,
            verdict,
        })
    }

    /// Like [`RatioSeries::new`] but bounded only when the variation is
    /// below `threshold`, with no allowance for a decreasing ratio.
    pub fn strict(id: impl Into<String>, levels: &[(f64, f64, f64)], threshold: f64) -> Result<Self> {
        let mut s = Self::new(id, levels)?;
        s.verdict = if s.variation < threshold {
            Verdict::Bounded
        } else {
            Verdict::Fail
        };
        Ok(s)
    }

    pub fn ratios(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.ratio).collect()
    }

    pub fn fit(&self, model: GrowthModel) -> ModelFit {
        *self.fits.iter().find(|f| f.model == model).unwrap()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn log_growth_is_recognized() {
        let hs = [0.1, 0.05, 0.025, 0.0125];
        let rows: Vec<_> = hs.iter().map(|&h: &f64| (h, 3.0 * h.ln().abs(), 1.0)).collect();
        let s = RatioSeries::new("x", &rows).unwrap();
        assert_eq!(s.best, GrowthModel::Log);
        assert!((s.fit(GrowthModel::Log).c - 3.0).abs() < 1e-12);
        assert!(s.fit(GrowthModel::Log).residual < 1e-12);
    }

    #[test]
    fn zero_series_is_bounded() {
        let s = RatioSeries::new("z", &[(0.1, 0.0, 0.0), (0.05, 0.0, 1.0)]).unwrap();
        assert_eq!(s.variation, 1.0);
        assert_eq!(s.verdict, Verdict::Bounded);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(RatioSeries::new("e", &[]).is_err());
        assert!(RatioSeries::new("o", &[(0.05, 1.0, 1.0), (0.1, 1.0, 1.0)]).is_err());
        assert!(RatioSeries::new("i", &[(0.1, 1.0, 0.0)]).is_err());
    }

    #[test]
    fn growing_ratio_fails() {
        let s = RatioSeries::new("g", &[(0.1, 1.0, 1.0), (0.05, 2.5, 1.0)]).unwrap();
        assert_eq!(s.verdict, Verdict::Fail);
    }

    proptest! {
        #[test]
        fn constant_ratio_fits_constant(c in 0.01f64..100.0, n in 2usize..6) {
            let rows: Vec<_> = (0..n).map(|i| (0.5f64.powi(i as i32 + 2), c, 1.0)).collect();
            let s = RatioSeries::new("c", &rows).unwrap();
            prop_assert_eq!(s.best, GrowthModel::Constant);
            prop_assert!((s.variation - 1.0).abs() < 1e-12);
            prop_assert_eq!(s.verdict, Verdict::Bounded);
        }

        #[test]
        fn best_fit_has_smallest_residual(ys in proptest::collection::vec(0.1f64..10.0, 3)) {
            let rows: Vec<_> = ys.iter().enumerate().map(|(i, &y)| (0.5f64.powi(i as i32 + 3), y, 1.0)).collect();
            let s = RatioSeries::new("r", &rows).unwrap();
            let b = s.fit(s.best).residual;
            prop_assert!(s.fits.iter().all(|f| b <= f.residual));
        }
    }
}
