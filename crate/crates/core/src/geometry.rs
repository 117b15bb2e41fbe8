//! Planar points, convex polygonal domains and affine triangle maps.

use crate::error::{Error, Result};

pub type Point = [f64; 2];

#[inline]
pub fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
pub fn dist(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

#[inline]
pub fn cross(a: Point, b: Point) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Distance from `p` to the segment `[a, b]`.
pub fn segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let ab = sub(b, a);
    let ap = sub(p, a);
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return dist(p, a);
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    dist(p, [a[0] + t * ab[0], a[1] + t * ab[1]])
}

/// A convex polygon with counter-clockwise vertices.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct Domain {
    vertices: Vec<Point>,
    scale: f64,
}

impl Domain {
    /// Validates convexity; clockwise input is reversed. Coordinates are kept.
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        Self::build(vertices, false)
    }

    /// Like [`Domain::new`], then rescales uniformly about the origin so that
    /// the diameter does not exceed one.
    pub fn normalized(vertices: Vec<Point>) -> Result<Self> {
        Self::build(vertices, true)
    }

    fn build(vertices: Vec<Point>, normalize: bool) -> Result<Self> {
        let n = vertices.len();
        if n < 3 {
            return Err(Error::NonConvexDomain(format!("{n} vertices")));
        }
        let mut sign = 0.0f64;
        for i in 0..n {
            let a = vertices[i];
            let b = vertices[(i + 1) % n];
            let c = vertices[(i + 2) % n];
            let turn = cross(sub(b, a), sub(c, b));
            if turn.abs() <= 1e-14 * (dist(a, b) * dist(b, c)).max(f64::MIN_POSITIVE) {
                return Err(Error::NonConvexDomain(format!(
                    "collinear or repeated vertices at index {}",
                    (i + 1) % n
                )));
            }
            if sign == 0.0 {
                sign = turn.signum();
            } else if turn.signum() != sign {
                return Err(Error::NonConvexDomain(format!(
                    "turn direction changes at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        // a star polygon turns consistently but winds more than once
        let mut winding = 0.0;
        for i in 0..n {
            let a = sub(vertices[(i + 1) % n], vertices[i]);
            let b = sub(vertices[(i + 2) % n], vertices[(i + 1) % n]);
            winding += cross(a, b).atan2(a[0] * b[0] + a[1] * b[1]);
        }
        if (winding.abs() - 2.0 * std::f64::consts::PI).abs() > 1e-6 {
            return Err(Error::NonConvexDomain("polygon is not simple".into()));
        }
        let mut vertices = vertices;
        if sign < 0.0 {
            vertices.reverse();
        }
        let mut diam = 0.0f64;
        for a in &vertices {
            for b in &vertices {
                diam = diam.max(dist(*a, *b));
            }
        }
        let scale = if normalize && diam > 1.0 { 1.0 / diam } else { 1.0 };
        if scale != 1.0 {
            for v in &mut vertices {
                v[0] *= scale;
                v[1] *= scale;
            }
        }
        Ok(Self { vertices, scale })
    }

    pub fn unit_square() -> Self {
        Self::new(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
            .expect("unit square is convex")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    /// Factor applied to the input coordinates at construction.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn area(&self) -> f64 {
        let n = self.vertices.len();
        0.5 * (0..n)
            .map(|i| cross(self.vertices[i], self.vertices[(i + 1) % n]))
            .sum::<f64>()
    }

    pub fn diameter(&self) -> f64 {
        let mut d = 0.0f64;
        for a in &self.vertices {
            for b in &self.vertices {
                d = d.max(dist(*a, *b));
            }
        }
        d
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let w = cross(a, b);
            cx += (a[0] + b[0]) * w;
            cy += (a[1] + b[1]) * w;
        }
        let a6 = 6.0 * self.area();
        [cx / a6, cy / a6]
    }

    /// Signed distance to the boundary: positive inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        let n = self.vertices.len();
        let mut inside = true;
        let mut d = f64::INFINITY;
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            if cross(sub(b, a), sub(p, a)) < 0.0 {
                inside = false;
            }
            d = d.min(segment_distance(p, a, b));
        }
        if inside {
            d
        } else {
            -d
        }
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.signed_distance(p) >= -tol
    }

    /// Product of distances to the edge lines; vanishes on the boundary and is
    /// positive inside. Returns value and gradient.
    pub fn edge_bubble(&self, p: Point) -> (f64, Point) {
        let n = self.vertices.len();
        let mut factors = Vec::with_capacity(n);
        let mut grads = Vec::with_capacity(n);
        for i in 0..n {
            let a = self.vertices[i];
            let b = self.vertices[(i + 1) % n];
            let e = sub(b, a);
            let len = e[0].hypot(e[1]);
            let normal = [-e[1] / len, e[0] / len];
            factors.push(normal[0] * (p[0] - a[0]) + normal[1] * (p[1] - a[1]));
            grads.push(normal);
        }
        let value: f64 = factors.iter().product();
        let mut grad = [0.0, 0.0];
        for i in 0..n {
            let others: f64 = factors
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, f)| *f)
                .product();
            grad[0] += grads[i][0] * others;
            grad[1] += grads[i][1] * others;
        }
        (value, grad)
    }
}

/// Affine map from the reference triangle (0,0), (1,0), (0,1).
#[derive(Clone, Copy, Debug)]
pub struct Affine {
    pub origin: Point,
    /// Columns are the edge vectors v1 - v0 and v2 - v0.
    pub jac: [[f64; 2]; 2],
    pub inv: [[f64; 2]; 2],
    pub det: f64,
}

impl Affine {
    pub fn new(v: [Point; 3]) -> Self {
        let e1 = sub(v[1], v[0]);
        let e2 = sub(v[2], v[0]);
        let jac = [[e1[0], e2[0]], [e1[1], e2[1]]];
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        let inv = [
            [jac[1][1] / det, -jac[0][1] / det],
            [-jac[1][0] / det, jac[0][0] / det],
        ];
        Self {
            origin: v[0],
            jac,
            inv,
            det,
        }
    }

    #[inline]
    pub fn to_physical(&self, xi: Point) -> Point {
        [
            self.origin[0] + self.jac[0][0] * xi[0] + self.jac[0][1] * xi[1],
            self.origin[1] + self.jac[1][0] * xi[0] + self.jac[1][1] * xi[1],
        ]
    }

    #[inline]
    pub fn to_reference(&self, x: Point) -> Point {
        let d = sub(x, self.origin);
        [
            self.inv[0][0] * d[0] + self.inv[0][1] * d[1],
            self.inv[1][0] * d[0] + self.inv[1][1] * d[1],
        ]
    }

    /// Maps a reference gradient to a physical one (multiplication by J^{-T}).
    #[inline]
    pub fn push_gradient(&self, g: Point) -> Point {
        [
            self.inv[0][0] * g[0] + self.inv[1][0] * g[1],
            self.inv[0][1] * g[0] + self.inv[1][1] * g[1],
        ]
    }

    /// Maps a reference Hessian to a physical one: J^{-T} H J^{-1}.
    pub fn push_hessian(&self, h: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
        let mut out = [[0.0; 2]; 2];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, entry) in row.iter_mut().enumerate() {
                let mut s = 0.0;
                for i in 0..2 {
                    for j in 0..2 {
                        s += self.inv[i][a] * h[i][j] * self.inv[j][b];
                    }
                }
                *entry = s;
            }
        }
        out
    }

    pub fn area(&self) -> f64 {
        0.5 * self.det.abs()
    }
}

/// Barycentric coordinates of `x` in the triangle.
pub fn barycentric(v: [Point; 3], x: Point) -> [f64; 3] {
    let xi = Affine::new(v).to_reference(x);
    [1.0 - xi[0] - xi[1], xi[0], xi[1]]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_nonconvex_polygon() {
        let err = Domain::new(vec![[0.0, 0.0], [1.0, 0.0], [0.2, 0.2], [0.0, 1.0]]);
        assert!(matches!(err, Err(Error::NonConvexDomain(_))));
    }

    #[test]
    fn rescales_large_domain_and_fixes_orientation() {
        let d = Domain::normalized(vec![[0.0, 0.0], [0.0, 3.0], [3.0, 3.0], [3.0, 0.0]]).unwrap();
        assert!((d.diameter() - 1.0).abs() < 1e-14);
        assert!(d.area() > 0.0);
        assert!((d.scale() - 1.0 / (18.0f64).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn affine_round_trip_and_bubble() {
        let a = Affine::new([[0.1, 0.2], [0.5, 0.1], [0.3, 0.7]]);
        let x = a.to_physical([0.2, 0.3]);
        let xi = a.to_reference(x);
        assert!((xi[0] - 0.2).abs() < 1e-14 && (xi[1] - 0.3).abs() < 1e-14);
        let sq = Domain::unit_square();
        assert!(sq.edge_bubble([0.0, 0.4]).0.abs() < 1e-15);
        assert!(sq.edge_bubble([0.5, 0.5]).0 > 0.0);
        assert!((sq.centroid()[0] - 0.5).abs() < 1e-15);
    }
}
