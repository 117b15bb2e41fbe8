use std::collections::BTreeMap;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
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

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stokes-lab"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn read_json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// Every file under `dir` except the timings, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
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

#[test]
fn missing_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin(&["experiment", "--config", "missing.toml"], tmp.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing.toml"));
}

#[test]
fn bad_flags_and_keys_are_usage_errors() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(bin(&["solve", "--levels", "a,b"], tmp.path()).status.code(), Some(2));
    assert_eq!(bin(&["frobnicate"], tmp.path()).status.code(), Some(2));
    std::fs::write(tmp.path().join("bad.toml"), "degre = 2\n").unwrap();
    assert_eq!(bin(&["solve", "--config", "bad.toml"], tmp.path()).status.code(), Some(2));
    std::fs::write(tmp.path().join("sets.toml"), "[experiment]\nr = 0.01\n").unwrap();
    assert_eq!(bin(&["experiment", "--config", "sets.toml"], tmp.path()).status.code(), Some(2));
}

#[test]
fn null_velocity_solve_reports_zero_velocity() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin(
        &["solve", "--scenario", "null_velocity", "--n", "8", "--out", "run"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report = read_json(&tmp.path().join("run/solve/solve.json"));
    assert!(report["velocity_linf"].as_f64().unwrap() <= 1e-10, "{report}");
    assert_eq!(report["scenario"], "null_velocity");
    let manifest = read_json(&tmp.path().join("run/manifest.json"));
    assert_eq!(manifest["command"], "solve");
    assert_eq!(manifest["config"]["solve"]["n"], 8);
}

#[test]
fn manifest_config_reproduces_the_run() {
    let tmp = tempfile::tempdir().unwrap();
    let o = bin(&["solve", "--n", "6", "--seed", "9", "--out", "a"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    let o = bin(&["solve", "--config", "a/config.toml", "--out", "b"], tmp.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(snapshot(&tmp.path().join("a")), snapshot(&tmp.path().join("b")));
}

#[test]
fn repeated_all_runs_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    std::fs::write(tmp.path().join("small.toml"), SMALL).unwrap();
    let mut runs = Vec::new();
    for out in ["one", "two"] {
        let o = bin(&["all", "--config", "small.toml", "--out", out, "--jobs", "2"], tmp.path());
        // the coarse weighted levels fail a super-approximation check
        assert!(matches!(o.status.code(), Some(0 | 1)), "{}", String::from_utf8_lossy(&o.stderr));
        runs.push(snapshot(&tmp.path().join(out)));
    }
    assert_eq!(runs[0], runs[1]);
    let manifest = read_json(&tmp.path().join("one/manifest.json"));
    let outputs = manifest["outputs"].as_array().unwrap();
    let experiments: Vec<_> = outputs
        .iter()
        .filter(|o| o["experiment"].as_str().unwrap().starts_with("experiment/"))
        .collect();
    assert!(experiments.len() >= 6, "{}", experiments.len());
    for o in outputs {
        let p = tmp.path().join("one").join(o["path"].as_str().unwrap());
        assert!(std::fs::metadata(&p).unwrap().len() > 0, "{}", p.display());
    }
    let csv = std::fs::read_to_string(tmp.path().join("one/experiments/ritz_global.csv")).unwrap();
    assert!(csv.starts_with("kind,scenario,h,lhs,rhs,ratio,global\n"));
}
