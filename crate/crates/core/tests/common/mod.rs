//! Helpers shared by the integration and acceptance targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use faer::{Mat, Side};
use stokes_lab::stokes::SaddleSystem;

/// `β_h` computed densely along a route independent of the library:
/// Cholesky factors `A = L_a L_aᵀ`, `M = L_m L_mᵀ`, then the singular values
/// of `L_m⁻¹ B L_a⁻ᵀ`, one per pressure unknown. The smallest belongs to
/// the constant pressure.
pub fn dense_infsup(sys: &SaddleSystem) -> f64 {
    let k = sys.k.to_dense();
    let nf = k.nrows();
    let a = Mat::from_fn(2 * nf, 2 * nf, |i, j| {
        if i / nf == j / nf {
            k[(i % nf, j % nf)]
        } else {
            0.0
        }
    });
    let b = sys.b.to_dense();
    let m = sys.mp.to_dense();
    let la = a.llt(Side::Lower).expect("stiffness is definite");
    let lm = m.llt(Side::Lower).expect("mass is definite");
    // x = L_a⁻¹ Bᵀ, so xᵀ = B L_a⁻ᵀ
    let mut x = b.transpose().to_owned();
    la.L().solve_lower_triangular_in_place(x.as_mut());
    let mut c = x.transpose().to_owned();
    lm.L().solve_lower_triangular_in_place(c.as_mut());
    let mut sv = c.singular_values().expect("svd converges");
    // only min(rows, cols) values come back; a wide pressure block has
    // further zero singular values
    sv.resize(c.nrows(), 0.0);
    sv[sv.len() - 2]
}

/// Every file under `dir` except `timings.json`, by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, d: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for e in std::fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else if p.file_name().unwrap() != "timings.json" {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// A configuration for `all` that runs in well under a minute.
pub const SMALL_RUN: &str = r#"
levels = [8, 16]

[solve]
n = 8

[greens]
cases = ["g0_i1", "pressure"]
gate = false

[assumptions]
levels = [16, 32]
weighted_levels = [16, 32]
smooth_samples = 2
discrete_samples = 3

[experiment]
levels = [16, 20]
"#;
