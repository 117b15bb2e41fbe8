//! Nodal Lagrange bases on the reference triangle.

use faer::linalg::solvers::DenseSolveCore;
use faer::Mat;

use crate::geometry::Point;
use crate::mesh::lattice;
use crate::quadrature::QuadratureRule;

/// Largest local basis supported by the allocation-free evaluators (degree 5).
pub const MAX_BASIS: usize = 21;

/// Degree-`p` Lagrange basis with nodes at `(a/p, b/p)` in lattice order.
#[derive(Clone, Debug)]
pub struct LagrangeBasis {
    degree: usize,
    exps: Vec<(i32, i32)>,
    /// `coeffs[l * n + m]`: coefficient of monomial `m` in basis function `l`.
    coeffs: Vec<f64>,
    nodes: Vec<Point>,
}

impl LagrangeBasis {
    pub fn new(p: usize) -> Self {
        assert!(p <= 5, "basis degree {p} exceeds 5");
        let nodes: Vec<Point> = lattice(p)
            .into_iter()
            .map(|(a, b)| {
                if p == 0 {
                    [1.0 / 3.0, 1.0 / 3.0]
                } else {
                    [a as f64 / p as f64, b as f64 / p as f64]
                }
            })
            .collect();
        let mut exps = Vec::new();
        for s in 0..=p as i32 {
            for j in 0..=s {
                exps.push((s - j, j));
            }
        }
        let n = nodes.len();
        let v = Mat::<f64>::from_fn(n, n, |r, m| {
            let (i, j) = exps[m];
            nodes[r][0].powi(i) * nodes[r][1].powi(j)
        });
        let inv = v.partial_piv_lu().inverse();
        let mut coeffs = vec![0.0; n * n];
        for l in 0..n {
            for m in 0..n {
                coeffs[l * n + m] = inv[(m, l)];
            }
        }
        Self {
            degree: p,
            exps,
            coeffs,
            nodes,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Point] {
        &self.nodes
    }

    fn monomials(&self, xi: Point) -> (Vec<f64>, Vec<Point>, Vec<[f64; 3]>) {
        let pw = |x: f64, k: i32| if k < 0 { 0.0 } else { x.powi(k) };
        let (x, y) = (xi[0], xi[1]);
        let mut v = Vec::with_capacity(self.exps.len());
        let mut g = Vec::with_capacity(self.exps.len());
        let mut h = Vec::with_capacity(self.exps.len());
        for &(i, j) in &self.exps {
            let (fi, fj) = (i as f64, j as f64);
            v.push(pw(x, i) * pw(y, j));
            g.push([fi * pw(x, i - 1) * pw(y, j), fj * pw(x, i) * pw(y, j - 1)]);
            h.push([
                fi * (fi - 1.0) * pw(x, i - 2) * pw(y, j),
                fi * fj * pw(x, i - 1) * pw(y, j - 1),
                fj * (fj - 1.0) * pw(x, i) * pw(y, j - 2),
            ]);
        }
        (v, g, h)
    }

    /// Values and reference gradients written into caller buffers of length
    /// at least [`LagrangeBasis::len`]; allocation free.
    pub fn eval_into(&self, xi: Point, vals: &mut [f64], grads: &mut [Point]) {
        let n = self.len();
        debug_assert!(n <= MAX_BASIS);
        let mut mv = [0.0; MAX_BASIS];
        let mut mg = [[0.0; 2]; MAX_BASIS];
        let p = self.degree;
        let mut px = [1.0; 8];
        let mut py = [1.0; 8];
        for k in 1..=p {
            px[k] = px[k - 1] * xi[0];
            py[k] = py[k - 1] * xi[1];
        }
        for (m, &(i, j)) in self.exps.iter().enumerate() {
            let (i, j) = (i as usize, j as usize);
            mv[m] = px[i] * py[j];
            mg[m] = [
                if i > 0 { i as f64 * px[i - 1] * py[j] } else { 0.0 },
                if j > 0 { j as f64 * px[i] * py[j - 1] } else { 0.0 },
            ];
        }
        for l in 0..n {
            let row = &self.coeffs[l * n..(l + 1) * n];
            let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
            for m in 0..n {
                v += row[m] * mv[m];
                gx += row[m] * mg[m][0];
                gy += row[m] * mg[m][1];
            }
            vals[l] = v;
            grads[l] = [gx, gy];
        }
    }

    pub fn values(&self, xi: Point) -> Vec<f64> {
        let (m, _, _) = self.monomials(xi);
        let n = self.len();
        (0..n)
            .map(|l| (0..n).map(|k| self.coeffs[l * n + k] * m[k]).sum())
            .collect()
    }

    /// Reference gradients.
    pub fn gradients(&self, xi: Point) -> Vec<Point> {
        let (_, g, _) = self.monomials(xi);
        let n = self.len();
        (0..n)
            .map(|l| {
                let mut s = [0.0, 0.0];
                for k in 0..n {
                    s[0] += self.coeffs[l * n + k] * g[k][0];
                    s[1] += self.coeffs[l * n + k] * g[k][1];
                }
                s
            })
            .collect()
    }

    /// Reference Hessians.
    pub fn hessians(&self, xi: Point) -> Vec<[[f64; 2]; 2]> {
        let (_, _, h) = self.monomials(xi);
        let n = self.len();
        (0..n)
            .map(|l| {
                let mut s = [0.0; 3];
                for k in 0..n {
                    for d in 0..3 {
                        s[d] += self.coeffs[l * n + k] * h[k][d];
                    }
                }
                [[s[0], s[1]], [s[1], s[2]]]
            })
            .collect()
    }

    pub fn tabulate(&self, rule: &QuadratureRule) -> Tabulation {
        let n = self.len();
        let mut values = Vec::with_capacity(rule.len() * n);
        let mut grads = Vec::with_capacity(rule.len() * n);
        for &p in &rule.points {
            values.extend(self.values(p));
            grads.extend(self.gradients(p));
        }
        Tabulation {
            n_basis: n,
            values,
            grads,
        }
    }
}

/// Basis values and reference gradients at the points of a rule.
#[derive(Clone, Debug)]
pub struct Tabulation {
    pub n_basis: usize,
    pub values: Vec<f64>,
    pub grads: Vec<Point>,
}

impl Tabulation {
    #[inline]
    pub fn values(&self, q: usize) -> &[f64] {
        &self.values[q * self.n_basis..(q + 1) * self.n_basis]
    }

    #[inline]
    pub fn grads(&self, q: usize) -> &[Point] {
        &self.grads[q * self.n_basis..(q + 1) * self.n_basis]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kronecker_property_and_partition_of_unity() {
        for p in 1..=4 {
            let b = LagrangeBasis::new(p);
            for (r, &x) in b.nodes().iter().enumerate() {
                for (l, v) in b.values(x).iter().enumerate() {
                    let e = if l == r { 1.0 } else { 0.0 };
                    assert!((v - e).abs() < 1e-12, "p={p}");
                }
            }
            let xi = [0.21, 0.33];
            let s: f64 = b.values(xi).iter().sum();
            assert!((s - 1.0).abs() < 1e-13);
            let mut vals = [0.0; MAX_BASIS];
            let mut grads = [[0.0; 2]; MAX_BASIS];
            b.eval_into(xi, &mut vals, &mut grads);
            for (l, (v, g)) in b.values(xi).iter().zip(b.gradients(xi)).enumerate() {
                assert!((vals[l] - v).abs() < 1e-15);
                assert!((grads[l][0] - g[0]).abs() < 1e-13 && (grads[l][1] - g[1]).abs() < 1e-13);
            }
            let g = b.gradients(xi).iter().fold([0.0, 0.0], |a, g| [a[0] + g[0], a[1] + g[1]]);
            assert!(g[0].abs() < 1e-11 && g[1].abs() < 1e-11);
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let b = LagrangeBasis::new(3);
        let xi = [0.3, 0.25];
        let e = 1e-6;
        let g = b.gradients(xi);
        let h = b.hessians(xi);
        let vp = b.values([xi[0] + e, xi[1]]);
        let vm = b.values([xi[0] - e, xi[1]]);
        let gp = b.gradients([xi[0], xi[1] + e]);
        let gm = b.gradients([xi[0], xi[1] - e]);
        for l in 0..b.len() {
            assert!(((vp[l] - vm[l]) / (2.0 * e) - g[l][0]).abs() < 1e-7);
            assert!(((gp[l][0] - gm[l][0]) / (2.0 * e) - h[l][0][1]).abs() < 1e-6);
            assert!(((gp[l][1] - gm[l][1]) / (2.0 * e) - h[l][1][1]).abs() < 1e-6);
        }
    }
}
