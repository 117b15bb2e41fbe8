//! Conforming triangulations of convex polygons: construction, uniform
//! refinement, point location, subdomain classification and the dyadic
//! decomposition around a point.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::{barycentric, cross, dist, sub, Affine, Domain, Point};

const NONE: usize = usize::MAX;

/// Local lattice points of a degree-`p` triangle, ordered by `b` then `a`,
/// with reference coordinates `(a/p, b/p)`.
pub fn lattice(p: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity((p + 1) * (p + 2) / 2);
    for b in 0..=p {
        for a in 0..=(p - b) {
            out.push((a, b));
        }
    }
    out
}

/// Global numbering of the degree-`p` lattice points of every triangle:
/// vertices first, then `p - 1` points per edge (ordered from the lower to the
/// higher vertex id), then element interiors.
#[derive(Clone, Debug)]
pub struct LatticeNumbering {
    pub degree: usize,
    pub n_nodes: usize,
    /// `local_count` ids per triangle, in [`lattice`] order.
    pub element_nodes: Vec<usize>,
    pub local_count: usize,
}

impl LatticeNumbering {
    pub fn new(
        n_vertices: usize,
        triangles: &[[usize; 3]],
        edge_ids: &[[usize; 3]],
        n_edges: usize,
        p: usize,
    ) -> Self {
        assert!(p >= 1);
        let pts = lattice(p);
        let n_int = if p >= 3 { (p - 1) * (p - 2) / 2 } else { 0 };
        let n_nodes = n_vertices + n_edges * (p - 1) + triangles.len() * n_int;
        let mut element_nodes = Vec::with_capacity(triangles.len() * pts.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut interior = 0;
            for &(a, b) in &pts {
                let c = [p - a - b, a, b];
                let zeros = c.iter().filter(|&&v| v == 0).count();
                let id = if zeros == 2 {
                    tri[c.iter().position(|&v| v == p).unwrap()]
                } else if zeros == 1 {
                    let z = c.iter().position(|&v| v == 0).unwrap();
                    let (s, u) = ((z + 1) % 3, (z + 2) % 3);
                    // the edge opposite local vertex z
                    let e = edge_ids[t][z];
                    let pos = if tri[s] < tri[u] { c[u] } else { c[s] };
                    n_vertices + e * (p - 1) + pos - 1
                } else {
                    let id = n_vertices + n_edges * (p - 1) + t * n_int + interior;
                    interior += 1;
                    id
                };
                element_nodes.push(id);
            }
        }
        Self {
            degree: p,
            n_nodes,
            element_nodes,
            local_count: pts.len(),
        }
    }

    #[inline]
    pub fn nodes(&self, t: usize) -> &[usize] {
        &self.element_nodes[t * self.local_count..(t + 1) * self.local_count]
    }
}

#[derive(Clone, Debug)]
struct Locator {
    origin: Point,
    cell: [f64; 2],
    nx: usize,
    ny: usize,
    starts: Vec<usize>,
    items: Vec<u32>,
}

impl Locator {
    fn build(points: &[Point], triangles: &[[usize; 3]]) -> Self {
        let mut lo = [f64::INFINITY; 2];
        let mut hi = [f64::NEG_INFINITY; 2];
        for p in points {
            for d in 0..2 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let side = (triangles.len() as f64 / 2.0).sqrt().ceil().max(1.0) as usize;
        let (nx, ny) = (side, side);
        let cell = [
            ((hi[0] - lo[0]) / nx as f64).max(1e-300),
            ((hi[1] - lo[1]) / ny as f64).max(1e-300),
        ];
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nx * ny];
        let clamp = |v: f64, n: usize| -> usize { (v.max(0.0) as usize).min(n - 1) };
        for (t, tri) in triangles.iter().enumerate() {
            let mut blo = [f64::INFINITY; 2];
            let mut bhi = [f64::NEG_INFINITY; 2];
            for &v in tri {
                for d in 0..2 {
                    blo[d] = blo[d].min(points[v][d]);
                    bhi[d] = bhi[d].max(points[v][d]);
                }
            }
            let pad = [cell[0] * 1e-9, cell[1] * 1e-9];
            let i0 = clamp((blo[0] - pad[0] - lo[0]) / cell[0], nx);
            let i1 = clamp((bhi[0] + pad[0] - lo[0]) / cell[0], nx);
            let j0 = clamp((blo[1] - pad[1] - lo[1]) / cell[1], ny);
            let j1 = clamp((bhi[1] + pad[1] - lo[1]) / cell[1], ny);
            for j in j0..=j1 {
                for i in i0..=i1 {
                    buckets[j * nx + i].push(t as u32);
                }
            }
        }
        let mut starts = Vec::with_capacity(nx * ny + 1);
        let mut items = Vec::new();
        starts.push(0);
        for b in buckets {
            items.extend(b);
            starts.push(items.len());
        }
        Self {
            origin: lo,
            cell,
            nx,
            ny,
            starts,
            items,
        }
    }

    fn candidates(&self, x: Point) -> &[u32] {
        let fi = (x[0] - self.origin[0]) / self.cell[0];
        let fj = (x[1] - self.origin[1]) / self.cell[1];
        if !(fi > -1e-6 && fj > -1e-6 && fi < self.nx as f64 + 1e-6 && fj < self.ny as f64 + 1e-6)
        {
            return &[];
        }
        let i = (fi.max(0.0) as usize).min(self.nx - 1);
        let j = (fj.max(0.0) as usize).min(self.ny - 1);
        let b = j * self.nx + i;
        &self.items[self.starts[b]..self.starts[b + 1]]
    }
}

/// A conforming, positively oriented triangulation.
#[derive(Clone, Debug)]
pub struct Mesh {
    points: Vec<Point>,
    triangles: Vec<[usize; 3]>,
    boundary: Vec<bool>,
    edges: Vec<[usize; 2]>,
    /// Edge opposite each local vertex.
    element_edges: Vec<[usize; 3]>,
    edge_elements: Vec<[usize; 2]>,
    h: f64,
    quasi_uniformity: f64,
    area: f64,
    diameter: f64,
    locator: Locator,
}

impl Mesh {
    /// Builds a mesh from raw arrays, validating orientation and conformity.
    pub fn from_parts(
        points: Vec<Point>,
        triangles: Vec<[usize; 3]>,
        boundary: Vec<bool>,
    ) -> Result<Self> {
        if boundary.len() != points.len() {
            return Err(Error::Parse(format!(
                "{} boundary flags for {} points",
                boundary.len(),
                points.len()
            )));
        }
        if triangles.is_empty() {
            return Err(Error::Parse("mesh has no triangles".into()));
        }
        let mut h = 0.0f64;
        let mut q = 0.0f64;
        let mut area = 0.0;
        for (t, tri) in triangles.iter().enumerate() {
            if tri.iter().any(|&v| v >= points.len()) {
                return Err(Error::Parse(format!("triangle {t} references a missing point")));
            }
            let v = tri.map(|i| points[i]);
            let a = 0.5 * cross(sub(v[1], v[0]), sub(v[2], v[0]));
            if a <= 0.0 {
                return Err(Error::Parse(format!("triangle {t} is not positively oriented")));
            }
            let l = [dist(v[1], v[2]), dist(v[2], v[0]), dist(v[0], v[1])];
            let diam = l[0].max(l[1]).max(l[2]);
            let inradius = 2.0 * a / (l[0] + l[1] + l[2]);
            h = h.max(diam);
            q = q.max(diam / (2.0 * inradius));
            area += a;
        }
        let mut edge_map: HashMap<(usize, usize), usize> = HashMap::new();
        let mut edges = Vec::new();
        let mut edge_elements: Vec<[usize; 2]> = Vec::new();
        let mut element_edges = Vec::with_capacity(triangles.len());
        for (t, tri) in triangles.iter().enumerate() {
            let mut ee = [0; 3];
            for (z, slot) in ee.iter_mut().enumerate() {
                let a = tri[(z + 1) % 3];
                let b = tri[(z + 2) % 3];
                let key = (a.min(b), a.max(b));
                let id = *edge_map.entry(key).or_insert_with(|| {
                    edges.push([key.0, key.1]);
                    edge_elements.push([NONE, NONE]);
                    edges.len() - 1
                });
                let slots = &mut edge_elements[id];
                if slots[0] == NONE {
                    slots[0] = t;
                } else if slots[1] == NONE {
                    slots[1] = t;
                } else {
                    return Err(Error::Parse(format!(
                        "edge ({}, {}) shared by more than two triangles",
                        key.0, key.1
                    )));
                }
                *slot = id;
            }
            element_edges.push(ee);
        }
        let mut diameter = 0.0f64;
        let bpts: Vec<Point> = edges
            .iter()
            .zip(&edge_elements)
            .filter(|(_, s)| s[1] == NONE)
            .flat_map(|(e, _)| [points[e[0]], points[e[1]]])
            .collect();
        for a in &bpts {
            for b in &bpts {
                diameter = diameter.max(dist(*a, *b));
            }
        }
        let locator = Locator::build(&points, &triangles);
        Ok(Self {
            points,
            triangles,
            boundary,
            edges,
            element_edges,
            edge_elements,
            h,
            quasi_uniformity: q,
            area,
            diameter,
            locator,
        })
    }

    /// Regular `n`-fold subdivision of a seed triangulation of the domain: the
    /// rectangle diagonal for axis-aligned rectangles, a centroid fan otherwise.
    pub fn structured(domain: &Domain, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Precondition("subdivision count must be at least 1".into()));
        }
        let v = domain.vertices();
        let (seed_pts, seed_tris): (Vec<Point>, Vec<[usize; 3]>) = if v.len() == 3 {
            (v.to_vec(), vec![[0, 1, 2]])
        } else if is_axis_rectangle(v) {
            // start from the lower-left corner so the diagonal runs "/"
            let s = (0..4)
                .min_by(|&a, &b| {
                    (v[a][0] + v[a][1])
                        .partial_cmp(&(v[b][0] + v[b][1]))
                        .unwrap()
                })
                .unwrap();
            let r: Vec<Point> = (0..4).map(|i| v[(s + i) % 4]).collect();
            (r, vec![[0, 1, 2], [0, 2, 3]])
        } else {
            let mut pts = v.to_vec();
            pts.push(domain.centroid());
            let c = v.len();
            let tris = (0..c).map(|i| [i, (i + 1) % c, c]).collect();
            (pts, tris)
        };
        let seed_boundary = vec![true; seed_pts.len()];
        let mut boundary = seed_boundary;
        if v.len() > 4 || (v.len() == 4 && !is_axis_rectangle(v)) {
            *boundary.last_mut().unwrap() = false;
        }
        let seed = Mesh::from_parts(seed_pts, seed_tris, boundary)?;
        Ok(seed.subdivide(n))
    }

    /// Splits every triangle into `n²` similar children.
    pub fn subdivide(&self, n: usize) -> Mesh {
        let num = LatticeNumbering::new(
            self.points.len(),
            &self.triangles,
            &self.element_edges,
            self.edges.len(),
            n,
        );
        let pts = lattice(n);
        let mut points = vec![[f64::NAN; 2]; num.n_nodes];
        let mut boundary = vec![false; num.n_nodes];
        let mut written = vec![false; num.n_nodes];
        for (t, tri) in self.triangles.iter().enumerate() {
            let v = tri.map(|i| self.points[i]);
            let ids = num.nodes(t);
            for (l, &(a, b)) in pts.iter().enumerate() {
                let g = ids[l];
                if written[g] {
                    continue;
                }
                written[g] = true;
                let c = [n - a - b, a, b];
                let zeros = c.iter().filter(|&&x| x == 0).count();
                let x = if zeros == 1 {
                    // edge points from the canonical endpoint for bitwise agreement
                    let z = c.iter().position(|&x| x == 0).unwrap();
                    let (s, u) = ((z + 1) % 3, (z + 2) % 3);
                    let (lo, hi, k) = if tri[s] < tri[u] {
                        (v[s], v[u], c[u])
                    } else {
                        (v[u], v[s], c[s])
                    };
                    let f = k as f64 / n as f64;
                    [lo[0] + f * (hi[0] - lo[0]), lo[1] + f * (hi[1] - lo[1])]
                } else {
                    let (fa, fb) = (a as f64 / n as f64, b as f64 / n as f64);
                    [
                        v[0][0] + fa * (v[1][0] - v[0][0]) + fb * (v[2][0] - v[0][0]),
                        v[0][1] + fa * (v[1][1] - v[0][1]) + fb * (v[2][1] - v[0][1]),
                    ]
                };
                points[g] = x;
                boundary[g] = match zeros {
                    2 => self.boundary[tri[c.iter().position(|&x| x == n).unwrap()]],
                    1 => {
                        let z = c.iter().position(|&x| x == 0).unwrap();
                        self.is_boundary_edge(self.element_edges[t][z])
                    }
                    _ => false,
                };
            }
        }
        let mut triangles = Vec::with_capacity(self.triangles.len() * n * n);
        let row_start: Vec<usize> = {
            let mut s = Vec::with_capacity(n + 2);
            let mut acc = 0;
            for b in 0..=n {
                s.push(acc);
                acc += n + 1 - b;
            }
            s
        };
        let li = |a: usize, b: usize| row_start[b] + a;
        for t in 0..self.triangles.len() {
            let ids = num.nodes(t);
            for b in 0..n {
                for a in 0..(n - b) {
                    triangles.push([ids[li(a, b)], ids[li(a + 1, b)], ids[li(a, b + 1)]]);
                    if a + b + 2 <= n {
                        triangles.push([
                            ids[li(a + 1, b)],
                            ids[li(a + 1, b + 1)],
                            ids[li(a, b + 1)],
                        ]);
                    }
                }
            }
        }
        Mesh::from_parts(points, triangles, boundary).expect("subdivision of a valid mesh")
    }

    /// Splits each triangle into four congruent children.
    pub fn refine_uniform(&self) -> Mesh {
        self.subdivide(2)
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn boundary_flags(&self) -> &[bool] {
        &self.boundary
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    pub fn n_elements(&self) -> usize {
        self.triangles.len()
    }

    pub fn edges(&self) -> &[[usize; 2]] {
        &self.edges
    }

    pub fn element_edges(&self) -> &[[usize; 3]] {
        &self.element_edges
    }

    /// Elements adjacent to an edge; the second is `None` on the boundary.
    pub fn edge_elements(&self, e: usize) -> (usize, Option<usize>) {
        let s = self.edge_elements[e];
        (s[0], (s[1] != NONE).then_some(s[1]))
    }

    pub fn is_boundary_edge(&self, e: usize) -> bool {
        self.edge_elements[e][1] == NONE
    }

    /// Elements sharing an edge with `t`.
    pub fn neighbors(&self, t: usize) -> [Option<usize>; 3] {
        self.element_edges[t].map(|e| {
            let s = self.edge_elements[e];
            let other = if s[0] == t { s[1] } else { s[0] };
            (other != NONE).then_some(other)
        })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn quasi_uniformity(&self) -> f64 {
        self.quasi_uniformity
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    /// Diameter of the boundary vertex set.
    pub fn diameter(&self) -> f64 {
        self.diameter
    }

    pub fn vertices(&self, t: usize) -> [Point; 3] {
        self.triangles[t].map(|i| self.points[i])
    }

    pub fn affine(&self, t: usize) -> Affine {
        Affine::new(self.vertices(t))
    }

    pub fn centroid(&self, t: usize) -> Point {
        let v = self.vertices(t);
        [
            (v[0][0] + v[1][0] + v[2][0]) / 3.0,
            (v[0][1] + v[1][1] + v[2][1]) / 3.0,
        ]
    }

    pub fn element_area(&self, t: usize) -> f64 {
        let v = self.vertices(t);
        0.5 * cross(sub(v[1], v[0]), sub(v[2], v[0]))
    }

    pub fn element_diameter(&self, t: usize) -> f64 {
        let v = self.vertices(t);
        dist(v[0], v[1]).max(dist(v[1], v[2])).max(dist(v[2], v[0]))
    }

    /// Whether `x` lies in the closed triangle `t` up to a relative tolerance.
    pub fn element_contains(&self, t: usize, x: Point, tol: f64) -> bool {
        barycentric(self.vertices(t), x).iter().all(|&l| l >= -tol)
    }

    /// Lowest-id element containing `x`.
    pub fn locate_point(&self, x: Point) -> Result<usize> {
        for tol in [1e-12, 1e-10] {
            for &t in self.locator.candidates(x) {
                if self.element_contains(t as usize, x, tol) {
                    return Ok(t as usize);
                }
            }
        }
        Err(Error::PointOutsideDomain { x: x[0], y: x[1] })
    }

    /// Euler characteristic check plus edge multiplicity; true for a conforming
    /// triangulation of a simply connected polygon.
    pub fn is_conforming(&self) -> bool {
        let v = self.points.len() as i64;
        let e = self.edges.len() as i64;
        let f = self.triangles.len() as i64;
        if v - e + f != 1 {
            return false;
        }
        let boundary_ok = self
            .edges
            .iter()
            .enumerate()
            .filter(|(i, _)| self.is_boundary_edge(*i))
            .all(|(_, ed)| self.boundary[ed[0]] && self.boundary[ed[1]]);
        let covered = self.triangles.iter().flatten().count() > 0;
        boundary_ok && covered
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.points.len(), self.triangles.len());
        for (p, b) in self.points.iter().zip(&self.boundary) {
            let _ = writeln!(s, "{:?} {:?} {}", p[0], p[1], u8::from(*b));
        }
        for t in &self.triangles {
            let _ = writeln!(s, "{} {} {}", t[0], t[1], t[2]);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let bad = |m: &str| Error::Parse(m.to_string());
        let header = lines.next().ok_or_else(|| bad("empty mesh file"))?;
        let mut it = header.split_whitespace();
        let nv: usize = parse(it.next(), "NV")?;
        let nt: usize = parse(it.next(), "NT")?;
        let mut points = Vec::with_capacity(nv);
        let mut boundary = Vec::with_capacity(nv);
        for _ in 0..nv {
            let l = lines.next().ok_or_else(|| bad("missing point line"))?;
            let mut f = l.split_whitespace();
            let x: f64 = parse(f.next(), "x")?;
            let y: f64 = parse(f.next(), "y")?;
            let b: u8 = parse(f.next(), "boundary flag")?;
            points.push([x, y]);
            boundary.push(b != 0);
        }
        let mut triangles = Vec::with_capacity(nt);
        for _ in 0..nt {
            let l = lines.next().ok_or_else(|| bad("missing triangle line"))?;
            let mut f = l.split_whitespace();
            triangles.push([
                parse(f.next(), "i0")?,
                parse(f.next(), "i1")?,
                parse(f.next(), "i2")?,
            ]);
        }
        Mesh::from_parts(points, triangles, boundary)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn parse<T: std::str::FromStr>(tok: Option<&str>, what: &str) -> Result<T> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| Error::Parse(format!("bad or missing {what}")))
}

fn is_axis_rectangle(v: &[Point]) -> bool {
    v.len() == 4
        && (0..4).all(|i| {
            let e = sub(v[(i + 1) % 4], v[i]);
            e[0] == 0.0 || e[1] == 0.0
        })
}

/// Continuum set used to select elements by centroid.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum Region {
    Full,
    /// Closed ball intersected with the domain.
    Ball { center: Point, radius: f64 },
    /// `inner <= |x - center| <= outer`, intersected with the domain.
    Annulus {
        center: Point,
        inner: f64,
        outer: f64,
    },
}

impl Region {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Region::Full => Ok(()),
            Region::Ball { radius, .. } if radius >= 0.0 && radius.is_finite() => Ok(()),
            Region::Ball { radius, .. } => {
                Err(Error::InvalidSubdomain(format!("ball radius {radius}")))
            }
            Region::Annulus { inner, outer, .. } if inner >= 0.0 && inner <= outer => Ok(()),
            Region::Annulus { inner, outer, .. } => Err(Error::InvalidSubdomain(format!(
                "annulus radii {inner}..{outer}"
            ))),
        }
    }

    pub fn contains(&self, x: Point) -> bool {
        match *self {
            Region::Full => true,
            Region::Ball { center, radius } => radius > 0.0 && dist(x, center) <= radius,
            Region::Annulus {
                center,
                inner,
                outer,
            } => {
                let r = dist(x, center);
                outer > 0.0 && r >= inner && r <= outer
            }
        }
    }

    /// Outer radius, infinite for the full domain.
    pub fn outer_radius(&self) -> f64 {
        match *self {
            Region::Full => f64::INFINITY,
            Region::Ball { radius, .. } => radius,
            Region::Annulus { outer, .. } => outer,
        }
    }
}

/// A region together with the elements whose centroids it contains.
#[derive(Clone, Debug)]
pub struct Subdomain {
    pub region: Region,
    pub elements: Vec<usize>,
}

impl Subdomain {
    pub fn new(mesh: &Mesh, region: Region) -> Result<Self> {
        region.validate()?;
        let elements = classify_elements(mesh, &region);
        Ok(Self { region, elements })
    }

    pub fn full(mesh: &Mesh) -> Self {
        Self {
            region: Region::Full,
            elements: (0..mesh.n_elements()).collect(),
        }
    }

    pub fn area(&self, mesh: &Mesh) -> f64 {
        self.elements.iter().map(|&t| mesh.element_area(t)).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Membership mask over all elements.
    pub fn mask(&self, mesh: &Mesh) -> Vec<bool> {
        let mut m = vec![false; mesh.n_elements()];
        for &t in &self.elements {
            m[t] = true;
        }
        m
    }
}

/// Elements whose centroid lies in the region, in increasing id order.
pub fn classify_elements(mesh: &Mesh, region: &Region) -> Vec<usize> {
    (0..mesh.n_elements())
        .filter(|&t| region.contains(mesh.centroid(t)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct DyadicAnnulus {
    pub j: i32,
    pub d: f64,
    pub base: Subdomain,
    pub prime: Subdomain,
    pub double_prime: Subdomain,
    pub triple_prime: Subdomain,
}

/// `Ω_*` (ball of radius Kh) and the annuli `d_{j+1} <= |x - x0| <= d_j`.
#[derive(Clone, Debug)]
pub struct DyadicDecomposition {
    pub x0: Point,
    pub k: f64,
    pub h: f64,
    pub levels: i32,
    pub inner: Subdomain,
    pub annuli: Vec<DyadicAnnulus>,
}

#[inline]
pub fn dyadic(j: i32) -> f64 {
    2f64.powi(-j)
}

/// Largest `J` with `Kh <= 2^{-J}`.
pub fn dyadic_level(kh: f64) -> i32 {
    let mut j = (-kh.log2()).floor() as i32;
    while dyadic(j + 1) >= kh {
        j += 1;
    }
    while dyadic(j) < kh {
        j -= 1;
    }
    j
}

pub fn build_dyadic(mesh: &Mesh, x0: Point, k: f64) -> Result<DyadicDecomposition> {
    if k <= 1.0 {
        return Err(Error::Precondition(format!("K = {k} must exceed 1")));
    }
    let h = mesh.h();
    let kh = k * h;
    if kh > mesh.diameter() || kh > 1.0 {
        return Err(Error::DegenerateDecomposition(format!(
            "Kh = {kh} exceeds the domain diameter {}",
            mesh.diameter()
        )));
    }
    mesh.locate_point(x0)?;
    let levels = dyadic_level(kh);
    let inner = Subdomain::new(
        mesh,
        Region::Ball {
            center: x0,
            radius: kh,
        },
    )?;
    // the outermost annulus reaches the whole domain even when its diameter exceeds one
    let reach = mesh.diameter();
    let ann = |lo: i32, hi: i32| {
        let outer = if hi <= 0 { dyadic(hi).max(reach) } else { dyadic(hi) };
        Subdomain::new(
            mesh,
            Region::Annulus {
                center: x0,
                inner: dyadic(lo),
                outer,
            },
        )
    };
    let mut annuli = Vec::with_capacity(levels.max(0) as usize + 1);
    for j in 0..=levels {
        annuli.push(DyadicAnnulus {
            j,
            d: dyadic(j),
            base: ann(j + 1, j)?,
            prime: ann(j + 2, j - 1)?,
            double_prime: ann(j + 3, j - 2)?,
            triple_prime: ann(j + 4, j - 3)?,
        });
    }
    Ok(DyadicDecomposition {
        x0,
        k,
        h,
        levels,
        inner,
        annuli,
    })
}

impl DyadicDecomposition {
    /// Area of the union of `Ω_*` and all `Ω_j`.
    pub fn covered_area(&self, mesh: &Mesh) -> f64 {
        let mut seen = self.inner.mask(mesh);
        for a in &self.annuli {
            for &t in &a.base.elements {
                seen[t] = true;
            }
        }
        seen.iter()
            .enumerate()
            .filter(|(_, &s)| s)
            .map(|(t, _)| mesh.element_area(t))
            .sum()
    }

    /// Disjoint assignment: `None` for `Ω_*`, otherwise the annulus index `j`.
    /// An element in several sets goes to the innermost.
    pub fn partition(&self, mesh: &Mesh) -> Vec<Option<i32>> {
        (0..mesh.n_elements())
            .map(|t| {
                let r = dist(mesh.centroid(t), self.x0);
                if r <= self.k * self.h {
                    None
                } else {
                    let j = dyadic_level(r).min(self.levels);
                    Some(j.max(0))
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn square(n: usize) -> Mesh {
        Mesh::structured(&Domain::unit_square(), n).unwrap()
    }

    #[test]
    fn structured_counts_and_h() {
        for n in [1, 2, 4, 7] {
            let m = square(n);
            assert_eq!(m.n_elements(), 2 * n * n);
            assert!((m.h() - 2f64.sqrt() / n as f64).abs() < 1e-14);
            assert!((m.area() - 1.0).abs() < 1e-13);
            assert!(m.is_conforming());
            assert_eq!(m.n_points(), (n + 1) * (n + 1));
        }
        assert_eq!(square(4).quasi_uniformity(), square(2).quasi_uniformity());
    }

    #[test]
    fn refinement_halves_h() {
        let mut m = square(1);
        for _ in 0..4 {
            let r = m.refine_uniform();
            assert_eq!(r.n_elements(), 4 * m.n_elements());
            assert!((r.h() - m.h() / 2.0).abs() < 1e-15);
            assert!((r.quasi_uniformity() - m.quasi_uniformity()).abs() < 1e-12);
            assert!(r.is_conforming());
            m = r;
        }
    }

    #[test]
    fn boundary_flags_match_geometry() {
        let m = square(5).refine_uniform();
        for (p, &b) in m.points().iter().zip(m.boundary_flags()) {
            let on = p[0] == 0.0 || p[1] == 0.0 || p[0] == 1.0 || p[1] == 1.0;
            assert_eq!(on, b, "{p:?}");
        }
    }

    #[test]
    fn polygon_and_triangle_domains() {
        let hex: Vec<Point> = (0..6)
            .map(|i| {
                let t = i as f64 * std::f64::consts::PI / 3.0;
                [0.5 + 0.4 * t.cos(), 0.5 + 0.4 * t.sin()]
            })
            .collect();
        let d = Domain::new(hex).unwrap();
        let m = Mesh::structured(&d, 3).unwrap();
        assert!((m.area() - d.area()).abs() < 1e-13);
        assert!(m.is_conforming());
        let tri = Domain::new(vec![[0.0, 0.0], [0.8, 0.0], [0.1, 0.5]]).unwrap();
        let m = Mesh::structured(&tri, 4).unwrap();
        assert_eq!(m.n_elements(), 16);
        assert!(m.is_conforming());
    }

    #[test]
    fn locate_tie_break_and_outside() {
        let m = square(4);
        for t in 0..m.n_elements() {
            assert_eq!(m.locate_point(m.centroid(t)).unwrap(), t);
        }
        let v = m.points()[m.triangles()[9][0]];
        let containing: Vec<usize> = (0..m.n_elements())
            .filter(|&t| m.triangles()[t].contains(&m.triangles()[9][0]))
            .collect();
        assert_eq!(m.locate_point(v).unwrap(), containing[0]);
        assert!(matches!(
            m.locate_point([2.0, 2.0]),
            Err(Error::PointOutsideDomain { .. })
        ));
    }

    #[test]
    fn text_round_trip_is_exact() {
        let m = Mesh::structured(&Domain::new(vec![[0.0, 0.0], [0.7, 0.1], [0.3, 0.6]]).unwrap(), 3)
            .unwrap();
        let back = Mesh::from_text(&m.to_text()).unwrap();
        assert_eq!(back.points(), m.points());
        assert_eq!(back.triangles(), m.triangles());
        assert_eq!(back.boundary_flags(), m.boundary_flags());
    }

    #[test]
    fn dyadic_level_examples() {
        assert_eq!(dyadic_level(4.0 / 128.0), 5);
        assert_eq!(dyadic_level(0.3), 1);
        assert_eq!(dyadic_level(0.25), 2);
        assert_eq!(dyadic_level(1.0), 0);
    }

    #[test]
    fn dyadic_subdomain_rules() {
        let m = square(16);
        let d = build_dyadic(&m, [0.4, 0.55], 4.0).unwrap();
        assert!((d.inner.region.outer_radius() - 4.0 * m.h()).abs() < 1e-15);
        assert!((d.covered_area(&m) - 1.0).abs() < 1e-10);
        for a in &d.annuli {
            for (small, big) in [
                (&a.base, &a.prime),
                (&a.prime, &a.double_prime),
                (&a.double_prime, &a.triple_prime),
            ] {
                let mask = big.mask(&m);
                assert!(small.elements.iter().all(|&t| mask[t]));
            }
        }
        assert!(build_dyadic(&m, [0.5, 0.5], 1.0).is_err());
        assert!(matches!(
            build_dyadic(&square(2), [0.5, 0.5], 4.0),
            Err(Error::DegenerateDecomposition(_))
        ));
        let zero = Subdomain::new(&m, Region::Ball { center: m.centroid(0), radius: 0.0 }).unwrap();
        assert!(zero.is_empty());
        assert_eq!(Subdomain::full(&m).elements.len(), m.n_elements());
    }

    #[test]
    fn lattice_numbering_is_consistent_across_edges() {
        let m = square(3);
        for p in 1..=4 {
            let num = LatticeNumbering::new(
                m.n_points(),
                m.triangles(),
                m.element_edges(),
                m.edges().len(),
                p,
            );
            let mut coords: HashMap<usize, Point> = HashMap::new();
            for t in 0..m.n_elements() {
                let a = m.affine(t);
                for (l, &(i, j)) in lattice(p).iter().enumerate() {
                    let x = a.to_physical([i as f64 / p as f64, j as f64 / p as f64]);
                    let g = num.nodes(t)[l];
                    if let Some(y) = coords.insert(g, x) {
                        assert!(dist(x, y) < 1e-14);
                    }
                }
            }
            assert_eq!(coords.len(), num.n_nodes);
            assert_eq!(num.n_nodes, (3 * p + 1) * (3 * p + 1));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10))]
        #[test]
        fn dyadic_coverage_random_x0(x in 0.0f64..1.0, y in 0.0f64..1.0, n in 8usize..24) {
            let m = square(n);
            let d = build_dyadic(&m, [x, y], 4.0).unwrap();
            let kh = 4.0 * m.h();
            prop_assert!(dyadic(d.levels + 1) <= kh && kh <= dyadic(d.levels));
            prop_assert!((d.covered_area(&m) - 1.0).abs() < 1e-10);
        }

        #[test]
        fn locate_returns_container(x in 0.0f64..=1.0, y in 0.0f64..=1.0) {
            let m = square(6);
            let t = m.locate_point([x, y]).unwrap();
            prop_assert!(m.element_contains(t, [x, y], 1e-10));
        }
    }
}
