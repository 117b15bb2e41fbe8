//! Gauss–Legendre rules on intervals and collapsed (Duffy) product rules on
//! the reference triangle.

use crate::geometry::Point;

/// Gauss–Legendre nodes and weights on `[0, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1);
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let p = if n == 1 { z } else { p1 };
            let pm = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (z * p - pm) / (z * z - 1.0);
            let dz = p / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        // map from [-1, 1] to [0, 1]
        x[i] = 0.5 * (1.0 - z);
        x[n - 1 - i] = 0.5 * (1.0 + z);
        w[i] = 0.5 * wi;
        w[n - 1 - i] = 0.5 * wi;
    }
    if n % 2 == 1 {
        x[n / 2] = 0.5;
    }
    (x, w)
}

/// Points and weights on the reference triangle (0,0), (1,0), (0,1).
#[derive(Clone, Debug)]
pub struct QuadratureRule {
    pub points: Vec<Point>,
    pub weights: Vec<f64>,
    pub degree: usize,
}

impl QuadratureRule {
    /// Collapsed Gauss rule exact for polynomials of total degree `degree`.
    pub fn triangle(degree: usize) -> Self {
        let n = (degree + 3) / 2;
        let (x, w) = gauss_legendre(n);
        let mut points = Vec::with_capacity(n * n);
        let mut weights = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let u = x[i];
                let v = x[j];
                points.push([u, (1.0 - u) * v]);
                weights.push(w[i] * w[j] * (1.0 - u));
            }
        }
        Self {
            points,
            weights,
            degree,
        }
    }

    /// The rule applied on each of the `4^levels` congruent subtriangles.
    pub fn composite(degree: usize, levels: u32) -> Self {
        let base = Self::triangle(degree);
        let m = 1usize << levels;
        let s = 1.0 / m as f64;
        let mut points = Vec::with_capacity(base.len() * m * m);
        let mut weights = Vec::with_capacity(base.len() * m * m);
        let area = s * s;
        for b in 0..m {
            for a in 0..(m - b) {
                let o = [a as f64 * s, b as f64 * s];
                for (p, w) in base.points.iter().zip(&base.weights) {
                    points.push([o[0] + s * p[0], o[1] + s * p[1]]);
                    weights.push(w * area);
                }
                if a + b + 1 < m {
                    // inverted child with vertices o+(s,0), o+(s,s), o+(0,s)
                    for (p, w) in base.points.iter().zip(&base.weights) {
                        points.push([o[0] + s - s * p[1], o[1] + s * p[0] + s * p[1]]);
                        weights.push(w * area);
                    }
                }
            }
        }
        Self {
            points,
            weights,
            degree,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // exact integral of x^a y^b over the reference triangle: a! b! / (a+b+2)!
    fn monomial(a: u32, b: u32) -> f64 {
        let f = |n: u32| (1..=n).map(|k| k as f64).product::<f64>();
        f(a) * f(b) / f(a + b + 2)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..12 {
            let (x, w) = gauss_legendre(n);
            for d in 0..(2 * n) {
                let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(d as i32)).sum();
                assert!((s - 1.0 / (d as f64 + 1.0)).abs() < 1e-14, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn triangle_rules_are_exact() {
        for deg in 0..=20 {
            for rule in [QuadratureRule::triangle(deg), QuadratureRule::composite(deg, 2)] {
                assert!(rule.weights.iter().all(|&w| w > 0.0));
                let total: f64 = rule.weights.iter().sum();
                assert!((total - 0.5).abs() < 1e-14);
                for a in 0..=deg as u32 {
                    for b in 0..=(deg as u32 - a) {
                        let s: f64 = rule
                            .points
                            .iter()
                            .zip(&rule.weights)
                            .map(|(p, w)| w * p[0].powi(a as i32) * p[1].powi(b as i32))
                            .sum();
                        let exact = monomial(a, b);
                        assert!((s - exact).abs() < 1e-13 * exact.max(1e-3), "{deg} {a} {b}");
                    }
                }
            }
        }
    }
}
