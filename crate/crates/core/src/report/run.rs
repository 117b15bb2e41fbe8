//! Job orchestration for the command-line subcommands. Independent jobs run
//! on up to `jobs` worker threads; reports are assembled and written on the
//! calling thread in a fixed order, so outputs do not depend on scheduling.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::norms::{probe_norm, sample_max, Lp, NormSpec, Quantity};
use crate::report::config::RunConfig;
use crate::report::emit::{self, num};
use crate::report::svg::emit_plot;
use crate::space::FeSpace;
use crate::stokes::{body_force, compute_infsup, Rhs, SaddleSystem};
use crate::verification::assumptions::{run_assumption_suite, AssumptionReport};
use crate::verification::greens_study::{
    assemble_greens_study, greens_level, oracle_gate, GreensLevelRow, GreensStudy, OracleGate,
};
use crate::verification::manufactured::{null_velocity_force, Manufactured, MsPressure, MsVelocity};
use crate::verification::series::RatioSeries;
use crate::verification::stability::{
    assemble_outcome, measure_level, LevelMeasurement, Scenario, StabilityKind, StabilityOutcome,
};

/// Largest velocity value accepted for the null-velocity solve.
pub const NULL_VELOCITY_TOLERANCE: f64 = 1e-10;
/// Largest relative algebraic residual accepted for a solve.
pub const RESIDUAL_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Solve,
    Greens,
    Assumptions,
    Experiment,
    All,
}

impl Command {
    pub fn label(self) -> &'static str {
        match self {
            Self::Solve => "solve",
            Self::Greens => "greens",
            Self::Assumptions => "assumptions",
            Self::Experiment => "experiment",
            Self::All => "all",
        }
    }

    fn includes(self, part: Command) -> bool {
        self == Command::All || self == part
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SolveReport {
    pub scenario: Scenario,
    pub n: usize,
    pub h: f64,
    pub velocity_dofs: usize,
    pub pressure_dofs: usize,
    pub iterations: usize,
    pub residual: f64,
    pub velocity_linf: f64,
    pub pressure_linf: f64,
    /// `‖u - u_h‖_{H¹}`, manufactured scenario only.
    pub velocity_h1_error: Option<f64>,
    /// `‖p - p_h‖_{L²}`, manufactured scenario only.
    pub pressure_l2_error: Option<f64>,
    pub beta: Option<f64>,
    pub pass: bool,
}

pub fn run_solve(cfg: &RunConfig) -> Result<SolveReport> {
    let scenario = cfg.solve_scenario()?;
    let domain = cfg.domain()?;
    let mesh = Arc::new(Mesh::structured(&domain, cfg.solve.n)?);
    let k = cfg.degree;
    let space = FeSpace::taylor_hood(mesh.clone(), k)?;
    let sys = SaddleSystem::assemble(&space)?;
    let sol = match scenario {
        Scenario::Manufactured => Manufactured::on(&domain)?.solve(&sys)?,
        _ => sys.solve(&Rhs {
            f: body_force(&sys, &null_velocity_force, 2 * k + 2),
            g: vec![0.0; sys.n_pressure()],
        })?,
    };
    let density = 2 * k + 1;
    let velocity_linf = sample_max(&mesh, None, density, |t, x| sol.velocity.eval_in(t, x).value_norm());
    let pressure_linf = sample_max(&mesh, None, density, |t, x| sol.pressure.eval_in(t, x).value[0].abs());
    let (velocity_h1_error, pressure_l2_error) = if scenario == Scenario::Manufactured {
        let deg = 2 * k + 8;
        let l2 = |q| NormSpec::new(Lp::L2, q, deg);
        let v = probe_norm(&mesh, None, &MsVelocity, Some(&sol.velocity), &l2(Quantity::Value));
        let g = probe_norm(&mesh, None, &MsVelocity, Some(&sol.velocity), &l2(Quantity::Gradient));
        let p = probe_norm(&mesh, None, &MsPressure, Some(&sol.pressure), &l2(Quantity::Value));
        (Some(v.hypot(g)), Some(p))
    } else {
        (None, None)
    };
    let beta = if cfg.solve.infsup {
        Some(compute_infsup(&sys)?.beta)
    } else {
        None
    };
    let mut pass = sol.stats.residual <= RESIDUAL_TOLERANCE;
    if scenario == Scenario::NullVelocity {
        pass &= velocity_linf <= NULL_VELOCITY_TOLERANCE;
    }
    Ok(SolveReport {
        scenario,
        n: cfg.solve.n,
        h: mesh.h(),
        velocity_dofs: 2 * sys.n_free(),
        pressure_dofs: sys.n_pressure(),
        iterations: sol.stats.iterations,
        residual: sol.stats.residual,
        velocity_linf,
        pressure_linf,
        velocity_h1_error,
        pressure_l2_error,
        beta,
        pass,
    })
}

#[derive(Clone, Debug, PartialEq)]
enum Job {
    Solve,
    GreensLevel(usize),
    GreensGate,
    Assumptions,
    ExperimentLevel {
        scenario: Scenario,
        kinds: Vec<StabilityKind>,
        n: usize,
    },
}

impl Job {
    fn label(&self) -> String {
        match self {
            Job::Solve => "solve".into(),
            Job::GreensLevel(n) => format!("greens n={n}"),
            Job::GreensGate => "greens oracle gate".into(),
            Job::Assumptions => "assumptions".into(),
            Job::ExperimentLevel { scenario, kinds, n } => {
                let k: Vec<&str> = kinds.iter().map(|k| k.label()).collect();
                format!("experiment {} [{}] n={n}", scenario.label(), k.join(","))
            }
        }
    }
}

enum JobOutput {
    Solve(SolveReport),
    Greens(Vec<GreensLevelRow>),
    Gate(OracleGate),
    Assumptions(Box<AssumptionReport>),
    Experiment(Vec<LevelMeasurement>),
}

fn plan(cmd: Command, cfg: &RunConfig) -> Result<Vec<Job>> {
    let mut jobs = Vec::new();
    if cmd.includes(Command::Solve) {
        jobs.push(Job::Solve);
    }
    if cmd.includes(Command::Assumptions) {
        jobs.push(Job::Assumptions);
    }
    if cmd.includes(Command::Greens) {
        if cfg.greens.gate {
            jobs.push(Job::GreensGate);
        }
        // finest first so the long jobs start early
        jobs.extend(cfg.greens_levels().iter().rev().map(|&n| Job::GreensLevel(n)));
    }
    if cmd.includes(Command::Experiment) {
        let mut groups: Vec<(Scenario, Vec<StabilityKind>)> = Vec::new();
        for (kind, scenario) in cfg.experiment_kinds()? {
            match groups.iter_mut().find(|g| g.0 == scenario) {
                Some(g) => g.1.push(kind),
                None => groups.push((scenario, vec![kind])),
            }
        }
        for &n in cfg.experiment_levels().iter().rev() {
            for (scenario, kinds) in &groups {
                jobs.push(Job::ExperimentLevel {
                    scenario: *scenario,
                    kinds: kinds.clone(),
                    n,
                });
            }
        }
    }
    Ok(jobs)
}

fn execute(cfg: &RunConfig, job: &Job) -> Result<JobOutput> {
    Ok(match job {
        Job::Solve => JobOutput::Solve(run_solve(cfg)?),
        Job::GreensLevel(n) => JobOutput::Greens(greens_level(&cfg.greens_config()?, *n)?),
        Job::GreensGate => {
            let g = cfg.greens_config()?;
            JobOutput::Gate(oracle_gate(&g.domain, g.degree, g.levels[0], g.cases[0], g.x0, g.oracle_gap)?)
        }
        Job::Assumptions => JobOutput::Assumptions(Box::new(run_assumption_suite(&cfg.assumption_config()?)?)),
        Job::ExperimentLevel { scenario, kinds, n } => {
            JobOutput::Experiment(measure_level(&cfg.experiment_config()?, kinds, *scenario, *n)?)
        }
    })
}

/// Runs `f` on every item with up to `workers` threads; results keep the
/// item order.
pub fn run_parallel<J: Sync, O: Send>(
    items: &[J],
    workers: usize,
    f: impl Fn(usize, &J) -> O + Sync,
) -> Vec<O> {
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<O>>> = items.iter().map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers.clamp(1, items.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let out = f(i, &items[i]);
                *slots[i].lock().unwrap() = Some(out);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("every job ran"))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct LevelInventory {
    pub n: usize,
    pub h: f64,
    pub elements: usize,
    pub vertices: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputEntry {
    /// Report group, such as `greens` or `experiment/ritz_global`.
    pub experiment: String,
    /// Relative to the output directory.
    pub path: String,
    pub verdict: String,
}

/// Everything needed to find and reproduce the outputs of a run. Wall-clock
/// timings go to the separate `timings_file` so that the manifest itself is
/// reproducible byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: Command,
    pub config: RunConfig,
    pub levels: Vec<LevelInventory>,
    pub outputs: Vec<OutputEntry>,
    pub failed: Vec<String>,
    pub timings_file: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct Timing {
    job: String,
    seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
struct Timings {
    total_seconds: f64,
    jobs: Vec<Timing>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CONFIG_FILE: &str = "config.toml";
pub const TIMINGS_FILE: &str = "timings.json";

struct Writer {
    root: PathBuf,
    outputs: Vec<OutputEntry>,
}

impl Writer {
    fn write(&mut self, group: &str, rel: &str, verdict: &str, text: &str) -> Result<()> {
        let path = self.root.join(rel);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(&path, text)?;
        self.outputs.push(OutputEntry {
            experiment: group.into(),
            path: rel.into(),
            verdict: verdict.into(),
        });
        Ok(())
    }

    /// Writes a plot when the series has enough levels.
    fn plot(&mut self, group: &str, rel: &str, s: &RatioSeries) -> Result<()> {
        if s.rows.len() < 2 {
            return Ok(());
        }
        let text = emit_plot(s)?;
        self.write(group, rel, s.verdict.label(), &text)
    }
}

fn file_stem(id: &str) -> String {
    id.replace('/', "-")
}

fn verdict_label(ok: bool) -> &'static str {
    if ok {
        "pass"
    } else {
        "fail"
    }
}

#[derive(Debug)]
pub struct RunSummary {
    pub manifest: RunManifest,
    pub ok: bool,
}

/// Validates `cfg`, runs the jobs of `cmd`, and writes every report under
/// `out`. Failed verdicts are reported in the summary, not as errors.
pub fn run(cmd: Command, cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    cfg.validate()?;
    let jobs = plan(cmd, cfg)?;
    let start = Instant::now();
    let total = jobs.len();
    let done = AtomicUsize::new(0);
    let results = run_parallel(&jobs, cfg.jobs, |_, job| {
        let t = Instant::now();
        let r = execute(cfg, job);
        let el = t.elapsed();
        let k = done.fetch_add(1, Ordering::SeqCst) + 1;
        eprintln!("[{k}/{total}] {} {:.1}s", job.label(), el.as_secs_f64());
        (r, el)
    });
    let mut timings = Timings {
        total_seconds: 0.0,
        jobs: Vec::new(),
    };
    let mut solve = None;
    let mut greens_rows = Vec::new();
    let mut gate = None;
    let mut assumptions = None;
    let mut measurements = Vec::new();
    for (job, (r, el)) in jobs.iter().zip(results) {
        timings.jobs.push(Timing {
            job: job.label(),
            seconds: el.as_secs_f64(),
        });
        let r = r.inspect_err(|_| eprintln!("job failed: {}", job.label()))?;
        match r {
            JobOutput::Solve(s) => solve = Some(s),
            JobOutput::Greens(rows) => greens_rows.extend(rows),
            JobOutput::Gate(g) => gate = Some(g),
            JobOutput::Assumptions(a) => assumptions = Some(*a),
            JobOutput::Experiment(m) => measurements.extend(m),
        }
    }

    std::fs::create_dir_all(out)?;
    let mut w = Writer {
        root: out.to_path_buf(),
        outputs: Vec::new(),
    };
    let mut failed = Vec::new();
    let mut all_series: Vec<RatioSeries> = Vec::new();

    if let Some(s) = &solve {
        let v = verdict_label(s.pass);
        if !s.pass {
            failed.push("solve".into());
        }
        w.write("solve", "solve/solve.json", v, &emit::json(s))?;
        let row = format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.scenario.label(),
            s.n,
            num(s.h),
            s.velocity_dofs,
            s.pressure_dofs,
            s.iterations,
            num(s.residual),
            num(s.velocity_linf),
            num(s.pressure_linf),
            s.velocity_h1_error.map(num).unwrap_or_default(),
            s.pressure_l2_error.map(num).unwrap_or_default(),
            s.beta.map(num).unwrap_or_default(),
            v
        );
        let header = "scenario,n,h,velocity_dofs,pressure_dofs,iterations,residual,velocity_linf,pressure_linf,velocity_h1_error,pressure_l2_error,beta,verdict";
        w.write("solve", "solve/solve.csv", v, &emit::csv(header, [row]))?;
    }

    if let Some(a) = &assumptions {
        for c in a.checks.iter().filter(|c| !c.verdict.ok()) {
            failed.push(format!("assumptions/{}", c.id));
        }
        let v = verdict_label(a.all_ok());
        w.write("assumptions", "assumptions/assumptions.json", v, &emit::json(a))?;
        w.write("assumptions", "assumptions/assumptions.csv", v, &emit::assumption_csv(a))?;
    }

    if cmd.includes(Command::Greens) {
        let study: GreensStudy = assemble_greens_study(&cfg.greens_config()?, greens_rows, gate)?;
        for s in study.series.iter().filter(|s| !s.verdict.ok()) {
            failed.push(s.id.clone());
        }
        if let Some(g) = study.gate.as_ref().filter(|g| !g.pass) {
            failed.push(format!("greens/{}/oracle_gate", g.case));
        }
        let v = verdict_label(study.ok());
        w.write("greens", "greens/study.json", v, &emit::json(&study))?;
        let rows = study.rows.iter().map(|r| {
            crate::greens::csv_row(&r.case, r.h, r.dyadic_levels, &r.errors, Some(&r.profile))
        });
        w.write("greens", "greens/greens.csv", v, &emit::csv(crate::greens::CSV_HEADER, rows))?;
        for s in &study.series {
            w.plot("greens", &format!("greens/plots/{}.svg", file_stem(&s.id)), s)?;
        }
        all_series.extend(study.series);
    }

    if cmd.includes(Command::Experiment) {
        for (kind, scenario) in cfg.experiment_kinds()? {
            let o: StabilityOutcome = assemble_outcome(kind, scenario, &measurements)?;
            let group = format!("experiment/{}", kind.label());
            let mut ok = o.series.verdict.ok();
            for s in std::iter::once(&o.series).chain(&o.extra) {
                if !s.verdict.ok() {
                    failed.push(s.id.clone());
                    ok = false;
                }
            }
            let v = verdict_label(ok);
            let stem = format!("experiments/{}", kind.label());
            w.write(&group, &format!("{stem}.json"), v, &emit::json(&o))?;
            w.write(&group, &format!("{stem}.csv"), v, &emit::experiment_csv(&o))?;
            w.plot(&group, &format!("{stem}.svg"), &o.series)?;
            for s in &o.extra {
                let name = s.id.rsplit('/').next().unwrap_or("extra");
                w.plot(&group, &format!("{stem}-{name}.svg"), s)?;
            }
            all_series.push(o.series);
            all_series.extend(o.extra);
        }
    }

    if !all_series.is_empty() {
        let rows = all_series.iter().flat_map(emit::series_rows);
        let ok = all_series.iter().all(|s| s.verdict.ok());
        w.write("series", "series.csv", verdict_label(ok), &emit::csv(emit::SERIES_HEADER, rows))?;
    }

    let config_text = cfg.to_toml()?;
    w.write("config", CONFIG_FILE, "pass", &config_text)?;
    let manifest = RunManifest {
        tool: env!("CARGO_PKG_NAME").into(),
        version: env!("CARGO_PKG_VERSION").into(),
        command: cmd,
        config: cfg.clone(),
        levels: inventory(cmd, cfg)?,
        outputs: w.outputs.clone(),
        failed,
        timings_file: TIMINGS_FILE.into(),
    };
    std::fs::write(out.join(MANIFEST_FILE), emit::json(&manifest))?;
    timings.total_seconds = start.elapsed().as_secs_f64();
    std::fs::write(out.join(TIMINGS_FILE), emit::json(&timings))?;
    for o in &manifest.outputs {
        let len = std::fs::metadata(out.join(&o.path))?.len();
        if len == 0 {
            return Err(Error::Precondition(format!("output {} is empty", o.path)));
        }
    }
    Ok(RunSummary {
        ok: manifest.failed.is_empty(),
        manifest,
    })
}

/// Every distinct level the command touches, ascending.
fn inventory(cmd: Command, cfg: &RunConfig) -> Result<Vec<LevelInventory>> {
    let mut ns: Vec<usize> = Vec::new();
    if cmd.includes(Command::Solve) {
        ns.push(cfg.solve.n);
    }
    if cmd.includes(Command::Greens) {
        ns.extend(cfg.greens_levels());
    }
    if cmd.includes(Command::Assumptions) {
        ns.extend(cfg.assumption_levels());
        ns.extend(&cfg.assumptions.weighted_levels);
    }
    if cmd.includes(Command::Experiment) {
        ns.extend(cfg.experiment_levels());
    }
    ns.sort_unstable();
    ns.dedup();
    let domain = cfg.domain()?;
    ns.into_iter()
        .map(|n| {
            let m = Mesh::structured(&domain, n)?;
            Ok(LevelInventory {
                n,
                h: m.h(),
                elements: m.n_elements(),
                vertices: m.n_points(),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use std::time::Duration;

    use super::*;

    #[test]
    fn parallel_results_keep_item_order() {
        let items: Vec<usize> = (0..17).collect();
        for workers in [1, 3, 8] {
            let out = run_parallel(&items, workers, |i, &v| {
                std::thread::sleep(Duration::from_millis(((17 - v) % 5) as u64));
                (i, v * v)
            });
            assert_eq!(out, items.iter().map(|&v| (v, v * v)).collect::<Vec<_>>());
        }
    }

    #[test]
    fn null_velocity_solve_has_no_velocity() {
        let mut cfg = RunConfig::default();
        cfg.solve.scenario = "null_velocity".into();
        cfg.solve.n = 8;
        let r = run_solve(&cfg).unwrap();
        assert!(r.velocity_linf <= NULL_VELOCITY_TOLERANCE, "{r:?}");
        assert!(r.pass);
        assert!(r.beta.unwrap() > 0.3);
    }

    #[test]
    fn plan_groups_kinds_by_scenario() {
        let cfg = RunConfig::from_toml("levels = [8, 16]").unwrap();
        let jobs = plan(Command::Experiment, &cfg).unwrap();
        assert_eq!(jobs.len(), 2 * 3);
        assert!(plan(Command::Solve, &cfg).unwrap() == vec![Job::Solve]);
    }
}
