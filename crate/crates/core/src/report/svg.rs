//! Ratio-vs-h plots as plain SVG. Every coordinate is printed with a fixed
//! number of decimals, so equal series give equal bytes.

use std::fmt::Write;

use crate::error::{Error, Result};
use crate::verification::series::RatioSeries;

pub const WIDTH: f64 = 800.0;
pub const HEIGHT: f64 = 600.0;
const LEFT: f64 = 90.0;
const RIGHT: f64 = 40.0;
const TOP: f64 = 60.0;
const BOTTOM: f64 = 80.0;
const FIT_SAMPLES: usize = 64;

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Log-x plot of the ratios with the best fitted model overlaid.
pub fn emit_plot(series: &RatioSeries) -> Result<String> {
    if series.rows.len() < 2 {
        return Err(Error::Precondition(format!(
            "plot of {} needs at least 2 levels, got {}",
            series.id,
            series.rows.len()
        )));
    }
    let fit = series.fit(series.best);
    let lx: Vec<f64> = series.rows.iter().map(|r| r.h.log10()).collect();
    let (x_lo, x_hi) = (lx[lx.len() - 1], lx[0]);
    let curve: Vec<(f64, f64)> = (0..FIT_SAMPLES)
        .map(|i| {
            let x = x_lo + (x_hi - x_lo) * i as f64 / (FIT_SAMPLES - 1) as f64;
            (x, fit.c * series.best.eval(10f64.powf(x)))
        })
        .collect();
    let y_max = series
        .rows
        .iter()
        .map(|r| r.ratio)
        .chain(curve.iter().map(|p| p.1))
        .fold(0.0f64, f64::max);
    let y_max = if y_max > 0.0 { 1.1 * y_max } else { 1.0 };
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + pw * (x - x_lo) / (x_hi - x_lo);
    let sy = |y: f64| TOP + ph * (1.0 - y / y_max);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="14">"#
    );
    let _ = writeln!(s, r#"<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="30" text-anchor="middle" font-size="18">{}</text>"#,
        WIDTH / 2.0,
        escape(&series.id)
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT:.2}" y="{TOP:.2}" width="{pw:.2}" height="{ph:.2}" fill="none" stroke="black"/>"#
    );
    for (r, &x) in series.rows.iter().zip(&lx) {
        let px = sx(x);
        let _ = writeln!(
            s,
            r#"<line x1="{px:.2}" y1="{:.2}" x2="{px:.2}" y2="{:.2}" stroke="black"/>"#,
            TOP + ph,
            TOP + ph + 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{px:.2}" y="{:.2}" text-anchor="middle">{:.3e}</text>"#,
            TOP + ph + 24.0,
            r.h
        );
    }
    for i in 0..=4 {
        let y = y_max * i as f64 / 4.0;
        let py = sy(y);
        let _ = writeln!(
            s,
            r#"<line x1="{:.2}" y1="{py:.2}" x2="{LEFT:.2}" y2="{py:.2}" stroke="black"/>"#,
            LEFT - 6.0
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{y:.3e}</text>"#,
            LEFT - 10.0,
            py + 5.0
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">h (log scale)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 20.0
    );
    let _ = writeln!(
        s,
        r#"<text x="20" y="{:.2}" text-anchor="middle" transform="rotate(-90 20 {:.2})">ratio</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );
    let pts = |v: &mut dyn Iterator<Item = (f64, f64)>| {
        v.map(|(x, y)| format!("{:.2},{:.2}", sx(x), sy(y)))
            .collect::<Vec<_>>()
            .join(" ")
    };
    let _ = writeln!(
        s,
        r#"<polyline class="fit" points="{}" fill="none" stroke="firebrick" stroke-dasharray="6 4"/>"#,
        pts(&mut curve.iter().copied())
    );
    let _ = writeln!(
        s,
        r#"<polyline class="data" points="{}" fill="none" stroke="navy" stroke-width="2"/>"#,
        pts(&mut lx.iter().zip(&series.rows).map(|(&x, r)| (x, r.ratio)))
    );
    for (r, &x) in series.rows.iter().zip(&lx) {
        let _ = writeln!(
            s,
            r#"<circle cx="{:.2}" cy="{:.2}" r="4" fill="navy"/>"#,
            sx(x),
            sy(r.ratio)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="end">fit: {:.4e} * {}, variation {:.4}, {}</text>"#,
        WIDTH - RIGHT - 10.0,
        TOP + 20.0,
        fit.c,
        series.best.label(),
        series.variation,
        series.verdict.label()
    );
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series() -> RatioSeries {
        RatioSeries::new("a/b", &[(0.2, 1.0, 2.0), (0.1, 1.1, 2.0), (0.05, 1.3, 2.0)]).unwrap()
    }

    #[test]
    fn one_polyline_and_one_fit() {
        let s = emit_plot(&series()).unwrap();
        assert_eq!(s.matches(r#"class="data""#).count(), 1);
        assert_eq!(s.matches(r#"class="fit""#).count(), 1);
        assert!(s.contains(r#"viewBox="0 0 800 600""#));
        assert!(s.ends_with("</svg>\n"));
    }

    #[test]
    fn same_input_same_bytes() {
        assert_eq!(emit_plot(&series()).unwrap(), emit_plot(&series()).unwrap());
    }

    #[test]
    fn too_few_levels_is_a_precondition_error() {
        let one = RatioSeries::new("x", &[(0.1, 1.0, 1.0)]).unwrap();
        assert!(matches!(emit_plot(&one), Err(Error::Precondition(_))));
        assert!(RatioSeries::new("x", &[]).is_err());
    }

    #[test]
    fn zero_series_still_plots() {
        let z = RatioSeries::new("z", &[(0.2, 0.0, 0.0), (0.1, 0.0, 1.0)]).unwrap();
        assert!(emit_plot(&z).unwrap().contains("circle"));
    }
}
