//! Experiment configuration (JSON, `schema_version` 1).
//!
//! Deserialization errors and validation failures carry the dotted field path, e.g.
//! `algorithm.gamma`.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::generators::{DesignFeatures, Generator, GeneratorKind};
use crate::instance::{gen_knr, gen_mixture, gen_tabular, ClassSpec, InstanceFile, KnrSpec, MixtureSpec, TabularSpec, SCHEMA_VERSION};
use crate::posterior::{tuned_gamma, Hyperparams};
use crate::{Error, Result};

/// Reads a JSON file, reporting the failing field path on schema errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let field = e.path().to_string();
        Error::config(field, format!("{}: {}", path.display(), e.inner()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Tabular,
    Mixture,
    Knr,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    pub family: Family,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tabular: Option<TabularSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mixture: Option<MixtureSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub knr: Option<KnrSpec>,
    /// Instance written by `mops gen`; takes precedence over generation. Relative paths are
    /// resolved against the config file's directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub file: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AutoTag {
    #[serde(rename = "auto")]
    Auto,
}

/// `γ` as a number, or `"auto"` for `min(0.5, √(ln|𝓜|/T))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Fixed(f64),
    Auto(AutoTag),
}

impl Default for GammaSpec {
    fn default() -> Self {
        GammaSpec::Auto(AutoTag::Auto)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DesignSpec {
    /// Random Gaussian features of this dimension; one-hot action features when absent.
    #[serde(default)]
    pub random_dim: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

fn sixth() -> f64 {
    1.0 / 6.0
}

fn default_budget() -> usize {
    64
}

fn default_resync() -> usize {
    1000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlgorithmSpec {
    pub generator: GeneratorKind,
    #[serde(default = "sixth")]
    pub eta: f64,
    #[serde(default = "sixth")]
    pub eta_prime: f64,
    #[serde(default)]
    pub gamma: GammaSpec,
    pub rounds: usize,
    #[serde(default)]
    pub full_horizon: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<DesignSpec>,
    /// Random-shooting sequences per KNR planning call.
    #[serde(default = "default_budget")]
    pub planner_budget: usize,
    #[serde(default)]
    pub plan_seed: u64,
    #[serde(default = "default_resync")]
    pub resync_every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Replication {
    #[serde(default = "one")]
    pub num_seeds: usize,
    #[serde(default)]
    pub base_seed: u64,
}

fn one() -> usize {
    1
}

impl Default for Replication {
    fn default() -> Self {
        Replication {
            num_seeds: 1,
            base_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default = "default_dir")]
    pub dir: PathBuf,
}

fn default_dir() -> PathBuf {
    PathBuf::from("mops-out")
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: default_dir() }
    }
}

fn default_alpha() -> f64 {
    0.5
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0]
}

fn default_sweep() -> usize {
    100
}

/// Parameters of the verification battery.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    /// `ε` used in the decoupling estimator and the regret bound.
    #[serde(default)]
    pub epsilon: f64,
    #[serde(default = "default_eps_grid")]
    pub epsilon_grid: Vec<f64>,
    /// Random posteriors added to the simulation-lemma sweep.
    #[serde(default = "default_sweep")]
    pub simulation_samples: usize,
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        AnalysisSpec {
            alpha: default_alpha(),
            epsilon: 0.0,
            epsilon_grid: default_eps_grid(),
            simulation_samples: default_sweep(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub instance: InstanceConfig,
    pub class: ClassSpec,
    pub algorithm: AlgorithmSpec,
    #[serde(default)]
    pub replication: Replication,
    #[serde(default)]
    pub output: OutputSpec,
    #[serde(default)]
    pub analysis: AnalysisSpec,
}

fn bad(field: &str, msg: impl Into<String>) -> Error {
    Error::config(field, msg)
}

impl ExperimentConfig {
    /// Reads and validates a config file; relative instance files resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: ExperimentConfig = read_json(path)?;
        if let Some(f) = &cfg.instance.file {
            if f.is_relative() {
                let base = path.parent().unwrap_or(Path::new("."));
                cfg.instance.file = Some(base.join(f));
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(bad("schema_version", format!("expected {SCHEMA_VERSION}, got {}", self.schema_version)));
        }
        self.class.validate().map_err(|e| bad("class", e.to_string()))?;
        let a = &self.algorithm;
        if a.rounds == 0 {
            return Err(bad("algorithm.rounds", "must be >= 1"));
        }
        if !(a.eta > 0.0) || !(a.eta_prime > 0.0) {
            return Err(bad("algorithm.eta", "eta and eta_prime must be positive"));
        }
        if let GammaSpec::Fixed(g) = a.gamma {
            if !(g > 0.0 && g <= 0.5) {
                return Err(bad("algorithm.gamma", format!("must lie in (0, 0.5] or be \"auto\", got {g}")));
            }
        }
        if a.full_horizon && a.generator != GeneratorKind::QType {
            return Err(bad("algorithm.full_horizon", "only valid with the q_type generator"));
        }
        if a.planner_budget == 0 {
            return Err(bad("algorithm.planner_budget", "must be >= 1"));
        }
        if self.replication.num_seeds == 0 {
            return Err(bad("replication.num_seeds", "must be >= 1"));
        }
        if !(self.analysis.alpha > 0.0 && self.analysis.alpha < 1.0) {
            return Err(bad("analysis.alpha", "must lie in (0, 1)"));
        }
        if !(self.analysis.epsilon >= 0.0) || self.analysis.epsilon_grid.iter().any(|e| !(*e >= 0.0)) {
            return Err(bad("analysis.epsilon", "epsilons must be >= 0"));
        }
        if self.instance.file.is_none() {
            let missing = match self.instance.family {
                Family::Tabular => self.instance.tabular.is_none().then_some("instance.tabular"),
                Family::Mixture => (self.instance.tabular.is_none() || self.instance.mixture.is_none())
                    .then_some("instance.mixture"),
                Family::Knr => self.instance.knr.is_none().then_some("instance.knr"),
            };
            if let Some(field) = missing {
                return Err(bad(field, "required to generate this family"));
            }
        }
        if self.instance.family == Family::Knr && a.generator == GeneratorKind::VTypeDesign {
            return Err(bad("algorithm.generator", "the design generator needs a finite state space"));
        }
        Ok(())
    }

    /// Loads or generates the instance.
    pub fn build_instance(&self) -> Result<InstanceFile> {
        if let Some(path) = &self.instance.file {
            let file = InstanceFile::load(path)?;
            if file.instance.family() != family_label(self.instance.family) {
                return Err(bad(
                    "instance.family",
                    format!("config says {:?} but {} holds a {} instance", self.instance.family, path.display(), file.instance.family()),
                ));
            }
            return Ok(file);
        }
        let seed = self.instance.seed;
        match self.instance.family {
            Family::Tabular => gen_tabular(self.instance.tabular.as_ref().expect("validated"), &self.class, seed),
            Family::Mixture => gen_mixture(
                self.instance.tabular.as_ref().expect("validated"),
                self.instance.mixture.as_ref().expect("validated"),
                seed,
            ),
            Family::Knr => gen_knr(self.instance.knr.as_ref().expect("validated"), &self.class, seed),
        }
    }

    /// Hyperparameters for a class of `class_size` models.
    pub fn hyperparams(&self, class_size: usize) -> Hyperparams {
        let a = &self.algorithm;
        let gamma = match a.gamma {
            GammaSpec::Fixed(g) => g,
            GammaSpec::Auto(_) => tuned_gamma(class_size, a.rounds, None),
        };
        Hyperparams {
            eta: a.eta,
            eta_prime: a.eta_prime,
            gamma,
        }
    }

    /// The tabular generator, solving designs when needed.
    pub fn generator(&self, dims: crate::env::Dims) -> Result<Generator> {
        match self.algorithm.generator {
            GeneratorKind::VTypeDesign => {
                let spec = self.algorithm.design.unwrap_or(DesignSpec {
                    random_dim: None,
                    seed: 0,
                });
                let features = match spec.random_dim {
                    Some(d) => DesignFeatures::random(dims, d, spec.seed)?,
                    None => DesignFeatures::one_hot(dims),
                };
                Generator::with_design(&features)
            }
            kind => Generator::new(kind),
        }
    }

    /// Seeds of the replicated runs.
    pub fn seeds(&self) -> Vec<u64> {
        (0..self.replication.num_seeds as u64)
            .map(|i| self.replication.base_seed.wrapping_add(i))
            .collect()
    }
}

fn family_label(f: Family) -> &'static str {
    match f {
        Family::Tabular => "tabular",
        Family::Mixture => "mixture",
        Family::Knr => "knr",
    }
}
