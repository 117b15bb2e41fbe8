//! Run configuration read from TOML. Every key is optional; the defaults
//! are the values of [`RunConfig::default`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Domain, Point};
use crate::greens::GreensKind;
use crate::verification::assumptions::AssumptionConfig;
use crate::verification::greens_study::{parse_case, GreensStudyConfig};
use crate::verification::stability::{ExperimentConfig, Scenario, StabilityKind};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Polygon vertices; the unit square when absent.
    pub vertices: Option<Vec<Point>>,
    pub degree: usize,
    pub levels: Vec<usize>,
    pub kappa: f64,
    pub kappa_bar: f64,
    #[serde(rename = "K")]
    pub big_k: f64,
    pub alpha: f64,
    pub oracle_gap: u32,
    pub seed: u64,
    pub jobs: usize,
    pub x0: Point,
    pub solve: SolveSection,
    pub greens: GreensSection,
    pub assumptions: AssumptionsSection,
    pub experiment: ExperimentSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveSection {
    /// `manufactured` or `null_velocity`.
    pub scenario: String,
    pub n: usize,
    /// Also compute `β_h` on the solve mesh.
    pub infsup: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreensSection {
    pub levels: Option<Vec<usize>>,
    pub cases: Vec<String>,
    /// Run the oracle self-convergence gate on the coarsest level.
    pub gate: bool,
    pub density: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssumptionsSection {
    pub levels: Option<Vec<usize>>,
    pub weighted_levels: Vec<usize>,
    pub smooth_samples: usize,
    pub discrete_samples: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub levels: Option<Vec<usize>>,
    pub kinds: Vec<String>,
    /// Scenario per kind label; kinds not listed use their default.
    pub scenarios: BTreeMap<String, String>,
    pub center: Point,
    pub r: f64,
    pub r_tilde: f64,
    pub bump_center: Point,
    pub bump_radius_factor: f64,
    pub density: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            vertices: None,
            degree: 2,
            levels: vec![16, 32, 64],
            kappa: 4.0,
            kappa_bar: 2.0,
            big_k: 4.0,
            alpha: 0.5,
            oracle_gap: 2,
            seed: 0,
            jobs: 1,
            x0: e.x0,
            solve: SolveSection::default(),
            greens: GreensSection::default(),
            assumptions: AssumptionsSection::default(),
            experiment: ExperimentSection::default(),
        }
    }
}

impl Default for SolveSection {
    fn default() -> Self {
        Self {
            scenario: "manufactured".into(),
            n: 32,
            infsup: true,
        }
    }
}

impl Default for GreensSection {
    fn default() -> Self {
        Self {
            levels: None,
            cases: GreensStudyConfig::default().cases.iter().map(|c| c.label()).collect(),
            gate: true,
            density: 4,
        }
    }
}

impl Default for AssumptionsSection {
    fn default() -> Self {
        let a = AssumptionConfig::default();
        Self {
            levels: None,
            weighted_levels: a.weighted_levels,
            smooth_samples: a.smooth_samples,
            discrete_samples: a.discrete_samples,
        }
    }
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let e = ExperimentConfig::default();
        Self {
            levels: None,
            kinds: StabilityKind::ALL.iter().map(|k| k.label().to_string()).collect(),
            scenarios: BTreeMap::new(),
            center: e.center,
            r: e.r,
            r_tilde: e.r_tilde,
            bump_center: e.bump_center,
            bump_radius_factor: e.bump_radius_factor,
            density: None,
        }
    }
}

/// Command-line overrides; `None` keeps the file value.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Overrides {
    /// Replaces the top-level levels and clears every section's own list.
    pub levels: Option<Vec<usize>>,
    pub degree: Option<usize>,
    pub kappa: Option<f64>,
    pub big_k: Option<f64>,
    pub alpha: Option<f64>,
    pub oracle_gap: Option<u32>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads a config file; a missing file is a configuration error.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(l) = &o.levels {
            self.levels = l.clone();
            self.greens.levels = None;
            self.assumptions.levels = None;
            self.experiment.levels = None;
        }
        macro_rules! set {
            ($($f:ident),*) => {$(if let Some(v) = o.$f { self.$f = v; })*};
        }
        set!(degree, kappa, big_k, alpha, oracle_gap, jobs, seed);
    }

    pub fn domain(&self) -> Result<Domain> {
        match &self.vertices {
            None => Ok(Domain::unit_square()),
            Some(v) => Domain::new(v.clone()).map_err(|e| Error::Config(e.to_string())),
        }
    }

    pub fn greens_levels(&self) -> &[usize] {
        self.greens.levels.as_deref().unwrap_or(&self.levels)
    }

    pub fn assumption_levels(&self) -> &[usize] {
        self.assumptions.levels.as_deref().unwrap_or(&self.levels)
    }

    pub fn experiment_levels(&self) -> &[usize] {
        self.experiment.levels.as_deref().unwrap_or(&self.levels)
    }

    /// Checks everything that can be checked without solving.
    pub fn validate(&self) -> Result<()> {
        let levels_ok = |name: &str, l: &[usize]| -> Result<()> {
            if l.is_empty() || l.contains(&0) || l.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::Config(format!("{name} levels {l:?} must be positive and increasing")));
            }
            Ok(())
        };
        levels_ok("top-level", &self.levels)?;
        levels_ok("greens", self.greens_levels())?;
        levels_ok("assumptions", self.assumption_levels())?;
        levels_ok("experiment", self.experiment_levels())?;
        if self.degree < 2 {
            return Err(Error::Config(format!("degree {} must be at least 2", self.degree)));
        }
        if self.seed > i64::MAX as u64 {
            return Err(Error::Config(format!("seed {} does not fit a TOML integer", self.seed)));
        }
        if self.jobs == 0 {
            return Err(Error::Config("jobs must be at least 1".into()));
        }
        if self.solve.n == 0 {
            return Err(Error::Config("solve.n must be positive".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Config(format!("alpha {} must lie in (0, 1)", self.alpha)));
        }
        if self.kappa <= 0.0 || self.kappa_bar <= 0.0 || self.big_k <= 1.0 {
            return Err(Error::Config("kappa and kappa_bar must be positive and K above 1".into()));
        }
        if self.oracle_gap < 2 {
            return Err(Error::Config(format!("oracle gap {} must be at least 2", self.oracle_gap)));
        }
        self.solve_scenario()?;
        self.domain()?;
        self.greens_config()?.validate()?;
        for (kind, scenario) in self.experiment_kinds()? {
            self.experiment_config()?.validate(kind, scenario)?;
        }
        Ok(())
    }

    pub fn solve_scenario(&self) -> Result<Scenario> {
        match Scenario::parse(&self.solve.scenario)? {
            s @ (Scenario::Manufactured | Scenario::NullVelocity) => Ok(s),
            s => Err(Error::Config(format!("solve does not support scenario {}", s.label()))),
        }
    }

    pub fn greens_config(&self) -> Result<GreensStudyConfig> {
        let cases: Vec<GreensKind> = self.greens.cases.iter().map(|c| parse_case(c)).collect::<Result<_>>()?;
        Ok(GreensStudyConfig {
            domain: self.domain()?,
            degree: self.degree,
            levels: self.greens_levels().to_vec(),
            x0: self.x0,
            kappa: self.kappa,
            big_k: self.big_k,
            nu: 1.0,
            oracle_gap: self.oracle_gap,
            cases,
            density: self.greens.density,
        })
    }

    pub fn assumption_config(&self) -> Result<AssumptionConfig> {
        Ok(AssumptionConfig {
            domain: self.domain()?,
            levels: self.assumption_levels().to_vec(),
            weighted_levels: self.assumptions.weighted_levels.clone(),
            degree: self.degree,
            alpha: self.alpha,
            kappa: self.kappa,
            kappa_bar: self.kappa_bar,
            x0: self.x0,
            seed: self.seed,
            smooth_samples: self.assumptions.smooth_samples,
            discrete_samples: self.assumptions.discrete_samples,
        })
    }

    pub fn experiment_config(&self) -> Result<ExperimentConfig> {
        let e = &self.experiment;
        Ok(ExperimentConfig {
            domain: self.domain()?,
            degree: self.degree,
            levels: self.experiment_levels().to_vec(),
            center: e.center,
            r: e.r,
            r_tilde: e.r_tilde,
            alpha: self.alpha,
            kappa: self.kappa,
            kappa_bar: self.kappa_bar,
            big_k: self.big_k,
            oracle_gap: self.oracle_gap,
            density: e.density,
            bump_center: e.bump_center,
            bump_radius_factor: e.bump_radius_factor,
            x0: self.x0,
        })
    }

    /// Selected kinds with their scenarios, in configuration order.
    pub fn experiment_kinds(&self) -> Result<Vec<(StabilityKind, Scenario)>> {
        for key in self.experiment.scenarios.keys() {
            StabilityKind::parse(key)?;
        }
        let mut out: Vec<(StabilityKind, Scenario)> = Vec::new();
        for label in &self.experiment.kinds {
            let kind = StabilityKind::parse(label)?;
            if out.iter().any(|(k, _)| *k == kind) {
                return Err(Error::Config(format!("experiment kind {label} listed twice")));
            }
            let scenario = match self.experiment.scenarios.get(label) {
                Some(s) => Scenario::parse(s)?,
                None => Scenario::default_for(kind),
            };
            out.push((kind, scenario));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn snapshot_round_trips() {
        let mut c = RunConfig::default();
        c.experiment.scenarios.insert("global_linf".into(), "null_velocity".into());
        c.greens.levels = Some(vec![8, 16]);
        c.vertices = Some(vec![[0.0, 0.0], [2.0, 0.0], [0.0, 1.0]]);
        assert_eq!(RunConfig::from_toml(&c.to_toml().unwrap()).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_toml("degre = 2"), Err(Error::Config(_))));
        assert!(matches!(RunConfig::from_toml("[solve]\nm = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_replace_section_levels() {
        let mut c = RunConfig::from_toml("levels = [8, 16]\n[greens]\nlevels = [4, 8]").unwrap();
        assert_eq!(c.greens_levels(), &[4, 8]);
        c.apply(&Overrides {
            levels: Some(vec![16, 32]),
            big_k: Some(3.0),
            ..Default::default()
        });
        assert_eq!(c.greens_levels(), &[16, 32]);
        assert_eq!(c.big_k, 3.0);
    }

    #[test]
    fn validation_catches_bad_values() {
        let bad = [
            "levels = [16, 8]",
            "degree = 1",
            "jobs = 0",
            "oracle_gap = 1",
            "[solve]\nscenario = \"steep_layer\"",
            "[greens]\ncases = [\"g2\"]",
            "[experiment]\nkinds = [\"global\"]",
            "[experiment]\nr = 0.01",
            "[experiment.scenarios]\nritz_global = \"manufactured\"",
        ];
        for text in bad {
            let c = RunConfig::from_toml(text).unwrap();
            assert!(c.validate().is_err(), "{text}");
        }
        let mut big = RunConfig::default();
        big.seed = u64::MAX;
        assert!(matches!(big.validate(), Err(Error::Config(_))));
        RunConfig::default().validate().unwrap();
    }
}
