//! Smooth cutoff functions `ω` with `ω = 1` on a set `Q` and support in the
//! enlargement `Q_d`.

use crate::error::{Error, Result};
use crate::geometry::{dist, Domain, Point};
use crate::mesh::Region;

/// `ψ(t) = exp(-1/t)` for `t > 0`, with its derivative.
fn psi(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        (0.0, 0.0)
    } else {
        let e = (-1.0 / t).exp();
        (e, e / (t * t))
    }
}

/// Smooth step: 1 for `t <= 0`, 0 for `t >= 1`, `C^∞` in between.
pub fn smooth_step(t: f64) -> (f64, f64) {
    if t <= 0.0 {
        return (1.0, 0.0);
    }
    if t >= 1.0 {
        return (0.0, 0.0);
    }
    let (a, da) = psi(1.0 - t);
    let (b, db) = psi(t);
    let s = a + b;
    // d/dt [a / (a + b)] with da/dt = -da, db/dt = db
    let d = (-da * s - a * (-da + db)) / (s * s);
    (a / s, d)
}

/// `max |S'|` over `[0, 1]`, sampled finely; the scale-free gradient bound.
pub fn profile_gradient_bound() -> f64 {
    let n = 20_000;
    (0..=n)
        .map(|i| smooth_step(i as f64 / n as f64).1.abs())
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct CutoffFunction {
    pub q: Region,
    pub d: f64,
    /// `max |∇ω| · d`, measured on the profile.
    pub gradient_constant: f64,
}

impl CutoffFunction {
    /// Cutoff for a ball or annulus `Q`; `Q_d` must stay inside the domain.
    pub fn new(domain: &Domain, q: Region, d: f64) -> Result<Self> {
        q.validate()?;
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::Precondition(format!("cutoff width d = {d}")));
        }
        let (center, outer) = match q {
            Region::Full => {
                return Err(Error::CutoffSupport(
                    "Q = Ω leaves no room for a cutoff layer".into(),
                ))
            }
            Region::Ball { center, radius } => (center, radius),
            Region::Annulus { center, outer, .. } => (center, outer),
        };
        let room = domain.signed_distance(center);
        if outer + d > room + 1e-12 {
            return Err(Error::CutoffSupport(format!(
                "Q_d reaches radius {} but the boundary is {room} away",
                outer + d
            )));
        }
        Ok(Self {
            q,
            d,
            gradient_constant: profile_gradient_bound(),
        })
    }

    /// Distance to `Q` and its gradient.
    fn distance(&self, x: Point) -> (f64, Point) {
        let (center, inner, outer) = match self.q {
            Region::Ball { center, radius } => (center, 0.0, radius),
            Region::Annulus {
                center,
                inner,
                outer,
            } => (center, inner, outer),
            Region::Full => return (0.0, [0.0, 0.0]),
        };
        let r = dist(x, center);
        let e = if r > 0.0 {
            [(x[0] - center[0]) / r, (x[1] - center[1]) / r]
        } else {
            [0.0, 0.0]
        };
        if r > outer {
            (r - outer, e)
        } else if r < inner {
            (inner - r, [-e[0], -e[1]])
        } else {
            (0.0, [0.0, 0.0])
        }
    }

    /// `(ω, ∇ω)`.
    pub fn eval(&self, x: Point) -> (f64, Point) {
        let (s, g) = self.distance(x);
        let (w, dw) = smooth_step(s / self.d);
        (w, [dw * g[0] / self.d, dw * g[1] / self.d])
    }

    /// The enlarged set `Q_d` as a region.
    pub fn support(&self) -> Region {
        match self.q {
            Region::Ball { center, radius } => Region::Ball {
                center,
                radius: radius + self.d,
            },
            Region::Annulus {
                center,
                inner,
                outer,
            } => Region::Annulus {
                center,
                inner: (inner - self.d).max(0.0),
                outer: outer + self.d,
            },
            Region::Full => Region::Full,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ball(r: f64) -> Region {
        Region::Ball {
            center: [0.5, 0.5],
            radius: r,
        }
    }

    #[test]
    fn plateau_and_support() {
        let c = CutoffFunction::new(&Domain::unit_square(), ball(0.1), 0.2).unwrap();
        assert_eq!(c.eval([0.5, 0.5]).0, 1.0);
        assert_eq!(c.eval([0.55, 0.5]).0, 1.0);
        assert_eq!(c.eval([0.81, 0.5]).0, 0.0);
        let v = c.eval([0.7, 0.5]).0;
        assert!(v > 0.0 && v < 1.0);
    }

    #[test]
    fn support_must_stay_inside() {
        let sq = Domain::unit_square();
        assert!(matches!(
            CutoffFunction::new(&sq, ball(0.3), 0.3),
            Err(Error::CutoffSupport(_))
        ));
        assert!(CutoffFunction::new(&sq, Region::Full, 0.1).is_err());
    }

    #[test]
    fn gradient_scales_like_inverse_width() {
        let sq = Domain::unit_square();
        let mut consts = Vec::new();
        for d in [0.1, 0.2, 0.4] {
            let c = CutoffFunction::new(&sq, ball(0.05), d).unwrap();
            let mut best = 0.0f64;
            for i in 0..4000 {
                let x = [0.5 + 0.05 + d * i as f64 / 4000.0, 0.5];
                let g = c.eval(x).1;
                best = best.max(g[0].hypot(g[1]));
            }
            consts.push(best * d);
        }
        for v in &consts {
            assert!((v - consts[0]).abs() < 1e-3 * consts[0]);
            assert!(*v <= profile_gradient_bound() * (1.0 + 1e-6));
        }
    }

    #[test]
    fn step_derivative_matches_differences() {
        for i in 1..20 {
            let t = i as f64 / 20.0;
            let e = 1e-6;
            let fd = (smooth_step(t + e).0 - smooth_step(t - e).0) / (2.0 * e);
            assert!((fd - smooth_step(t).1).abs() < 1e-6);
        }
    }
}
