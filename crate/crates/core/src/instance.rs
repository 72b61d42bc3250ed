//! Seeded instance generation and the on-disk instance format.
//!
//! Classes are built around the true model: tabular classes mix each transition row and
//! reward with a fresh Dirichlet/uniform draw, mixture classes are simplex grids over the base
//! weights, and KNR classes perturb `W*` inside the spectral ball `‖W‖₂ ≤ R`.

use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::config::read_json;
use crate::env::knr::KnrWeight;
use crate::env::mixture::simplex_grid;
use crate::env::{Dims, FeatureMap, KnrEnv, KnrReward, LinearMixtureEnv, RewardLayout, RewardNoise, TabularEnv, TabularModel};
use crate::planner::shooting::ShootingPlanner;
use crate::posterior::{uniform_log_prior, KnrClass, TabularClass};
use crate::{seeded_rng, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// Dimensions and reward structure of a generated tabular (or mixture) instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TabularSpec {
    #[serde(default = "one")]
    pub contexts: usize,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
    #[serde(default)]
    pub reward_layout: RewardLayout,
    #[serde(default)]
    pub reward_noise: RewardNoise,
}

fn one() -> usize {
    1
}

impl TabularSpec {
    pub fn dims(&self) -> Result<Dims> {
        Dims::new(self.contexts, self.states, self.actions, self.horizon)
    }
}

/// How the class is built around the true model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub size: usize,
    /// Mixing weight in `(0, 1]` of the fresh draw in each perturbed row or weight.
    #[serde(default = "default_perturbation")]
    pub perturbation: f64,
    #[serde(default = "yes")]
    pub include_true_model: bool,
    /// Must be set to run without the true model; bounds are then outside their assumptions.
    #[serde(default)]
    pub misspecified: bool,
}

fn default_perturbation() -> f64 {
    0.7
}

fn yes() -> bool {
    true
}

impl ClassSpec {
    pub fn validate(&self) -> Result<()> {
        if self.size == 0 {
            return Err(Error::InvalidArgument("class size must be >= 1".into()));
        }
        if !(self.perturbation > 0.0 && self.perturbation <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "perturbation must lie in (0, 1], got {}",
                self.perturbation
            )));
        }
        if !self.include_true_model && !self.misspecified {
            return Err(Error::InvalidArgument(
                "include_true_model = false requires misspecified = true (no guarantees apply)".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureSpec {
    pub base_models: usize,
    /// Grid step `1 / divisions` on the weight simplex.
    pub divisions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnrSpec {
    pub state_dim: usize,
    /// One-dimensional probe actions.
    #[serde(default = "default_actions")]
    pub actions: Vec<f64>,
    pub horizon: usize,
    #[serde(default = "default_noise")]
    pub noise_std: f64,
    #[serde(default = "default_bound")]
    pub weight_bound: f64,
    /// Scale of the Gaussian perturbation applied to `W*` for each non-true model.
    #[serde(default = "default_knr_perturbation")]
    pub perturbation: f64,
}

fn default_actions() -> Vec<f64> {
    vec![-1.0, 1.0]
}

fn default_noise() -> f64 {
    0.2
}

fn default_bound() -> f64 {
    1.0
}

fn default_knr_perturbation() -> f64 {
    0.3
}

/// A generated instance: environment plus model class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Instance {
    Tabular {
        env: TabularEnv,
        models: Vec<TabularModel>,
        true_index: Option<usize>,
    },
    Mixture {
        env: LinearMixtureEnv,
        weights: Vec<Vec<f64>>,
        true_index: Option<usize>,
    },
    Knr {
        env: KnrEnv,
        weights: Vec<KnrWeight>,
        true_index: Option<usize>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub schema_version: u32,
    pub seed: u64,
    #[serde(flatten)]
    pub instance: Instance,
}

impl InstanceFile {
    pub fn load(path: &Path) -> Result<Self> {
        let file: InstanceFile = read_json(path)?;
        if file.schema_version != SCHEMA_VERSION {
            return Err(Error::config(
                "schema_version",
                format!("{}: unsupported version {}", path.display(), file.schema_version),
            ));
        }
        file.instance.validate()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

impl Instance {
    pub fn family(&self) -> &'static str {
        match self {
            Instance::Tabular { .. } => "tabular",
            Instance::Mixture { .. } => "mixture",
            Instance::Knr { .. } => "knr",
        }
    }

    pub fn true_index(&self) -> Option<usize> {
        match self {
            Instance::Tabular { true_index, .. } | Instance::Mixture { true_index, .. } | Instance::Knr { true_index, .. } => *true_index,
        }
    }

    pub fn class_size(&self) -> usize {
        match self {
            Instance::Tabular { models, .. } => models.len(),
            Instance::Mixture { weights, .. } => weights.len(),
            Instance::Knr { weights, .. } => weights.len(),
        }
    }

    /// Checks the environment, every class member and the declared true index.
    pub fn validate(&self) -> Result<()> {
        match self {
            Instance::Knr { env, weights, true_index } => {
                env.validate()?;
                if weights.is_empty() {
                    return Err(Error::InvalidInstance("empty KNR class".into()));
                }
                for w in weights {
                    env.check_weight(w)?;
                }
                if let Some(t) = *true_index {
                    if weights.get(t) != Some(&env.true_weight) {
                        return Err(Error::InvalidInstance(format!("model {t} is not W*")));
                    }
                }
                Ok(())
            }
            _ => {
                let env = self.tabular_env()?;
                let class = self.tabular_class()?;
                if let Some(t) = self.true_index() {
                    if class.model(t) != &env.model {
                        return Err(Error::InvalidInstance(format!("model {t} is not the true model")));
                    }
                }
                Ok(())
            }
        }
    }

    /// The environment as a tabular env (mixtures are materialized).
    pub fn tabular_env(&self) -> Result<TabularEnv> {
        match self {
            Instance::Tabular { env, .. } => {
                env.validate()?;
                Ok(env.clone())
            }
            Instance::Mixture { env, .. } => {
                env.validate()?;
                env.to_env()
            }
            Instance::Knr { .. } => Err(Error::Unsupported("KNR instances have no tabular environment".into())),
        }
    }

    /// The class with a uniform prior.
    pub fn tabular_class(&self) -> Result<TabularClass> {
        match self {
            Instance::Tabular { models, true_index, .. } => TabularClass::uniform(models.clone(), *true_index),
            Instance::Mixture { env, weights, true_index } => {
                let models = weights.iter().map(|w| env.mixture_model(w)).collect::<Result<Vec<_>>>()?;
                TabularClass::uniform(models, *true_index)
            }
            Instance::Knr { .. } => Err(Error::Unsupported("KNR instances have no tabular class".into())),
        }
    }

    pub fn knr_class(&self, planner: ShootingPlanner, plan_seed: u64) -> Result<KnrClass> {
        match self {
            Instance::Knr { env, weights, true_index } => KnrClass::new(
                env.clone(),
                weights.clone(),
                uniform_log_prior(weights.len()),
                *true_index,
                planner,
                plan_seed,
            ),
            _ => Err(Error::Unsupported("not a KNR instance".into())),
        }
    }
}

/// Probability vector drawn from a symmetric Dirichlet(1) via normalized Gamma draws.
pub fn dirichlet_row<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Vec<f64> {
    let gamma = Gamma::new(1.0, 1.0).expect("valid shape");
    loop {
        let row: Vec<f64> = (0..len).map(|_| gamma.sample(rng)).collect();
        let sum: f64 = row.iter().sum();
        if sum > 0.0 {
            return row.into_iter().map(|x| x / sum).collect();
        }
    }
}

fn reward_cap(layout: RewardLayout, level: usize, horizon: usize) -> f64 {
    match layout {
        RewardLayout::TerminalOnly => {
            if level + 1 == horizon {
                1.0
            } else {
                0.0
            }
        }
        RewardLayout::ScaledByHorizon => 1.0 / horizon as f64,
    }
}

/// Random model with Dirichlet(1) rows and uniform rewards under `layout`.
pub fn random_tabular_model<R: Rng + ?Sized>(dims: Dims, layout: RewardLayout, rng: &mut R) -> Result<TabularModel> {
    let mut transitions = Vec::with_capacity(dims.sa_cells() * dims.states);
    let mut rewards = Vec::with_capacity(dims.sa_cells());
    for _c in 0..dims.contexts {
        for h in 0..dims.horizon {
            let cap = reward_cap(layout, h, dims.horizon);
            for _ in 0..dims.states * dims.actions {
                transitions.extend(dirichlet_row(dims.states, rng));
                rewards.push(if cap > 0.0 { cap * rng.random::<f64>() } else { 0.0 });
            }
        }
    }
    TabularModel::new(dims, transitions, rewards)
}

/// `(1 − s) M + s M̃` row by row, with `M̃` a fresh random model. Full support is kept.
pub fn perturb_tabular<R: Rng + ?Sized>(truth: &TabularModel, layout: RewardLayout, scale: f64, rng: &mut R) -> Result<TabularModel> {
    let fresh = random_tabular_model(truth.dims, layout, rng)?;
    let mix = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (1.0 - scale) * x + scale * y).collect::<Vec<_>>();
    TabularModel::new(
        truth.dims,
        mix(&truth.transitions, &fresh.transitions),
        mix(&truth.reward_means, &fresh.reward_means),
    )
}

/// Places `truth` at a random index among `others` (or omits it for a misspecified class).
fn assemble<T, R: Rng + ?Sized>(truth: T, mut others: Vec<T>, include: bool, rng: &mut R) -> (Vec<T>, Option<usize>) {
    if !include {
        return (others, None);
    }
    let idx = rng.random_range(0..=others.len());
    others.insert(idx, truth);
    (others, Some(idx))
}

pub fn gen_tabular(spec: &TabularSpec, class: &ClassSpec, seed: u64) -> Result<InstanceFile> {
    class.validate()?;
    let dims = spec.dims()?;
    let mut rng = seeded_rng(seed);
    let truth = random_tabular_model(dims, spec.reward_layout, &mut rng)?;
    let n_others = class.size - usize::from(class.include_true_model);
    let others = (0..n_others)
        .map(|_| perturb_tabular(&truth, spec.reward_layout, class.perturbation, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let (models, true_index) = assemble(truth.clone(), others, class.include_true_model, &mut rng);
    let env = TabularEnv::new(truth, vec![1.0 / dims.contexts as f64; dims.contexts], spec.reward_noise)?;
    let file = InstanceFile {
        schema_version: SCHEMA_VERSION,
        seed,
        instance: Instance::Tabular { env, models, true_index },
    };
    file.instance.validate()?;
    Ok(file)
}

/// Mixture instance whose class is the full simplex grid; `ν*` is a random grid point.
pub fn gen_mixture(tabular: &TabularSpec, spec: &MixtureSpec, seed: u64) -> Result<InstanceFile> {
    let dims = tabular.dims()?;
    if spec.base_models == 0 || spec.divisions == 0 {
        return Err(Error::InvalidArgument("mixture needs base_models >= 1 and divisions >= 1".into()));
    }
    let mut rng = seeded_rng(seed);
    let bases = (0..spec.base_models)
        .map(|_| random_tabular_model(dims, tabular.reward_layout, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let reward_means = bases[0].reward_means.clone();
    let weights = simplex_grid(spec.base_models, spec.divisions);
    let true_index = rng.random_range(0..weights.len());
    let env = LinearMixtureEnv {
        dims,
        base_transitions: bases.into_iter().map(|b| b.transitions).collect(),
        true_weights: weights[true_index].clone(),
        reward_means,
        context_dist: vec![1.0 / dims.contexts as f64; dims.contexts],
        reward_noise: tabular.reward_noise,
    };
    let file = InstanceFile {
        schema_version: SCHEMA_VERSION,
        seed,
        instance: Instance::Mixture {
            env,
            weights,
            true_index: Some(true_index),
        },
    };
    file.instance.validate()?;
    Ok(file)
}

fn gaussian_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    (0..rows * cols).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Rescales `w` onto the ball `‖W‖₂ ≤ bound` when it lies outside.
fn clip_spectral(w: KnrWeight, bound: f64) -> Result<KnrWeight> {
    let s = w.spectral_norm();
    if s <= bound {
        return Ok(w);
    }
    let f = bound / s * (1.0 - 1e-12);
    KnrWeight::new(w.rows, w.cols, w.data.iter().map(|x| x * f).collect())
}

/// KNR instance with `tanh`-concatenated features; `W*` sits at `0.8 R`.
pub fn gen_knr(spec: &KnrSpec, class: &ClassSpec, seed: u64) -> Result<InstanceFile> {
    class.validate()?;
    if spec.state_dim == 0 || spec.horizon == 0 || spec.actions.is_empty() {
        return Err(Error::InvalidArgument("KNR needs state_dim, horizon and actions".into()));
    }
    if !(spec.weight_bound > 0.0 && spec.perturbation > 0.0) {
        return Err(Error::InvalidArgument("weight_bound and perturbation must be positive".into()));
    }
    let mut rng = seeded_rng(seed);
    let actions: Vec<Vec<f64>> = spec.actions.iter().map(|a| vec![*a]).collect();
    let feature_map = FeatureMap::TanhConcat;
    let cols = feature_map.dim(spec.state_dim, 1);
    let raw = KnrWeight::new(spec.state_dim, cols, gaussian_matrix(spec.state_dim, cols, &mut rng))?;
    let scale = 0.8 * spec.weight_bound / raw.spectral_norm();
    let truth = KnrWeight::new(spec.state_dim, cols, raw.data.iter().map(|x| x * scale).collect())?;
    let n_others = class.size - usize::from(class.include_true_model);
    let mut others = Vec::with_capacity(n_others);
    for _ in 0..n_others {
        let noise = gaussian_matrix(spec.state_dim, cols, &mut rng);
        let data = truth.data.iter().zip(&noise).map(|(t, z)| t + spec.perturbation * z).collect();
        others.push(clip_spectral(KnrWeight::new(spec.state_dim, cols, data)?, spec.weight_bound)?);
    }
    let initial_state: Vec<f64> = (0..spec.state_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (weights, true_index) = assemble(truth.clone(), others, class.include_true_model, &mut rng);
    let env = KnrEnv {
        state_dim: spec.state_dim,
        feature_bound: feature_map.norm_bound(spec.state_dim, &actions),
        feature_map,
        true_weight: truth,
        noise_std: spec.noise_std,
        actions,
        horizon: spec.horizon,
        initial_state,
        reward: KnrReward::Quadratic {
            state_weight: 0.5,
            action_weight: 0.1,
        },
        weight_bound: spec.weight_bound,
    };
    let file = InstanceFile {
        schema_version: SCHEMA_VERSION,
        seed,
        instance: Instance::Knr { env, weights, true_index },
    };
    file.instance.validate()?;
    Ok(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec() -> TabularSpec {
        TabularSpec {
            contexts: 2,
            states: 3,
            actions: 2,
            horizon: 2,
            reward_layout: RewardLayout::TerminalOnly,
            reward_noise: RewardNoise::Bernoulli,
        }
    }

    fn class(size: usize) -> ClassSpec {
        ClassSpec {
            size,
            perturbation: 0.7,
            include_true_model: true,
            misspecified: false,
        }
    }

    #[test]
    fn tabular_class_contains_truth() {
        let f = gen_tabular(&spec(), &class(8), 3).unwrap();
        assert_eq!(f.instance.class_size(), 8);
        let env = f.instance.tabular_env().unwrap();
        let c = f.instance.tabular_class().unwrap();
        assert_eq!(c.check_realizable(&env).unwrap(), f.instance.true_index().unwrap());
    }

    #[test]
    fn excluding_truth_needs_flag() {
        let mut c = class(4);
        c.include_true_model = false;
        assert!(gen_tabular(&spec(), &c, 1).is_err());
        c.misspecified = true;
        let f = gen_tabular(&spec(), &c, 1).unwrap();
        assert_eq!(f.instance.true_index(), None);
    }

    #[test]
    fn mixture_grid_contains_truth() {
        let m = MixtureSpec {
            base_models: 3,
            divisions: 2,
        };
        let f = gen_mixture(&spec(), &m, 5).unwrap();
        assert_eq!(f.instance.class_size(), 6);
        let Instance::Mixture { env, weights, true_index } = &f.instance else { unreachable!() };
        assert_eq!(&weights[true_index.unwrap()], &env.true_weights);
    }

    #[test]
    fn knr_weights_in_ball() {
        let k = KnrSpec {
            state_dim: 2,
            actions: vec![-1.0, 1.0],
            horizon: 3,
            noise_std: 0.2,
            weight_bound: 1.0,
            perturbation: 0.5,
        };
        let f = gen_knr(&k, &class(16), 2).unwrap();
        let Instance::Knr { env, weights, .. } = &f.instance else { unreachable!() };
        assert_eq!(env.feature_dim(), 3);
        assert!(weights.iter().all(|w| w.spectral_norm() <= 1.0));
    }
}
