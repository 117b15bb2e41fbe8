//! CSV and JSON text. Floats in CSV carry 17 significant digits; JSON keys
//! follow struct declaration order or sorted map order.

use serde::Serialize;

use crate::verification::assumptions::AssumptionReport;
use crate::verification::series::RatioSeries;
use crate::verification::stability::StabilityOutcome;

/// `v` with 17 significant digits.
pub fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Header plus rows, each line terminated by `\n`.
pub fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut s = String::from(header);
    s.push('\n');
    for r in rows {
        s.push_str(&r);
        s.push('\n');
    }
    s
}

pub const SERIES_HEADER: &str = "series,h,lhs,rhs,ratio,best_model,fit_c,variation,verdict";

pub fn series_rows(s: &RatioSeries) -> Vec<String> {
    let fit = s.fit(s.best);
    s.rows
        .iter()
        .map(|r| {
            format!(
                "{},{},{},{},{},{},{},{},{}",
                s.id,
                num(r.h),
                num(r.lhs),
                num(r.rhs),
                num(r.ratio),
                s.best.label(),
                num(fit.c),
                num(s.variation),
                s.verdict.label()
            )
        })
        .collect()
}

pub const EXPERIMENT_HEADER: &str = "kind,scenario,h,lhs,rhs,ratio,global";

pub fn experiment_csv(o: &StabilityOutcome) -> String {
    let rows = o.series.rows.iter().zip(&o.global).map(|(r, g)| {
        format!(
            "{},{},{},{},{},{},{}",
            o.kind.label(),
            o.scenario.label(),
            num(r.h),
            num(r.lhs),
            num(r.rhs),
            num(r.ratio),
            num(*g)
        )
    });
    csv(EXPERIMENT_HEADER, rows)
}

pub const ASSUMPTION_HEADER: &str = "id,h,value,variation,rate_measured,rate_expected,verdict";

pub fn assumption_csv(report: &AssumptionReport) -> String {
    let rows = report.checks.iter().flat_map(|c| {
        c.h.iter().zip(&c.values).map(move |(h, v)| {
            format!(
                "{},{},{},{},{},{},{}",
                c.id,
                num(*h),
                num(*v),
                num(c.variation),
                opt(c.rate.map(|r| r.measured)),
                opt(c.rate.map(|r| r.expected)),
                c.verdict.label()
            )
        })
    });
    csv(ASSUMPTION_HEADER, rows)
}

/// Pretty JSON with a trailing newline.
pub fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_carry_seventeen_digits() {
        assert_eq!(num(0.1), "1.0000000000000001e-1");
        assert_eq!(num(1.0 / 3.0).parse::<f64>().unwrap(), 1.0 / 3.0);
        let x = 0.123_456_789_012_345_68_f64;
        assert_eq!(num(x).parse::<f64>().unwrap(), x);
    }

    #[test]
    fn series_rows_match_the_header() {
        let s = RatioSeries::new("a", &[(0.2, 1.0, 2.0), (0.1, 1.0, 2.0)]).unwrap();
        let text = csv(SERIES_HEADER, series_rows(&s));
        let cols = SERIES_HEADER.split(',').count();
        for line in text.lines() {
            assert_eq!(line.split(',').count(), cols, "{line}");
        }
        assert_eq!(text.lines().count(), 3);
    }
}
