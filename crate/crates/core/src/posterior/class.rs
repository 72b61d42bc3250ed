use rayon::prelude::*;

use super::{likelihood_term, Hyperparams, ModelClass, TransitionRecord};
use crate::divergences::log_sum_exp;
use crate::env::knr::{KnrEnv, KnrWeight};
use crate::env::{TabularEnv, TabularModel};
use crate::planner::{check_value_range, plan_unchecked, PlanResult, ShootingPlanner};
use crate::{seeded_rng, Error, Result};

fn check_prior(log_prior: &[f64], len: usize) -> Result<()> {
    if len == 0 {
        return Err(Error::InvalidInstance("empty model class".into()));
    }
    if log_prior.len() != len {
        return Err(Error::InvalidInstance(format!(
            "{} prior weights for {len} models",
            log_prior.len()
        )));
    }
    if log_prior.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::InvalidInstance("prior log-weights must not be NaN or +inf".into()));
    }
    let z = log_sum_exp(log_prior);
    if (z).abs() > 1e-10 {
        return Err(Error::InvalidInstance(format!(
            "prior log-weights normalize to {z}, expected 0"
        )));
    }
    Ok(())
}

/// Uniform log-prior over `n` models.
pub fn uniform_log_prior(n: usize) -> Vec<f64> {
    vec![-(n as f64).ln(); n]
}

/// Finite class of tabular models with cached optimal plans.
#[derive(Debug, Clone)]
pub struct TabularClass {
    models: Vec<TabularModel>,
    log_prior: Vec<f64>,
    true_index: Option<usize>,
    plans: Vec<PlanResult>,
}

impl TabularClass {
    pub fn new(models: Vec<TabularModel>, log_prior: Vec<f64>, true_index: Option<usize>) -> Result<Self> {
        check_prior(&log_prior, models.len())?;
        let dims = models[0].dims;
        for m in &models {
            if m.dims != dims {
                return Err(Error::DimensionMismatch(format!(
                    "class mixes {:?} and {:?}",
                    dims, m.dims
                )));
            }
            m.validate()?;
        }
        if let Some(t) = true_index {
            if t >= models.len() {
                return Err(Error::InvalidInstance(format!("true index {t} out of range")));
            }
        }
        let plans: Vec<PlanResult> = models.par_iter().map(plan_unchecked).collect();
        for p in &plans {
            check_value_range(p)?;
        }
        Ok(TabularClass {
            models,
            log_prior,
            true_index,
            plans,
        })
    }

    pub fn uniform(models: Vec<TabularModel>, true_index: Option<usize>) -> Result<Self> {
        let n = models.len();
        Self::new(models, uniform_log_prior(n), true_index)
    }

    pub fn models(&self) -> &[TabularModel] {
        &self.models
    }

    pub fn model(&self, m: usize) -> &TabularModel {
        &self.models[m]
    }

    pub fn plan(&self, m: usize) -> &PlanResult {
        &self.plans[m]
    }

    pub fn plans(&self) -> &[PlanResult] {
        &self.plans
    }

    /// Realizability: the declared true model equals the environment's tensors exactly.
    pub fn check_realizable(&self, env: &TabularEnv) -> Result<usize> {
        let t = self.true_index.ok_or_else(|| {
            Error::InvalidInstance("model class declares no true model (misspecified)".into())
        })?;
        if self.models[t] != env.model {
            return Err(Error::InvalidInstance(format!(
                "model {t} does not reproduce the environment's dynamics and rewards"
            )));
        }
        Ok(t)
    }

    /// Index of a class member equal to the environment model, if any.
    pub fn locate(&self, env: &TabularEnv) -> Option<usize> {
        self.models.iter().position(|m| *m == env.model)
    }
}

impl ModelClass for TabularClass {
    type State = usize;

    fn len(&self) -> usize {
        self.models.len()
    }

    fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    fn true_index(&self) -> Option<usize> {
        self.true_index
    }

    fn root_value(&self, model: usize, context: usize) -> f64 {
        self.plans[model].root_value(context)
    }

    fn likelihood_term(&self, model: usize, r: &TransitionRecord<usize>, hyper: &Hyperparams) -> f64 {
        let m = &self.models[model];
        likelihood_term(
            m.reward(r.context, r.level, r.state, r.action),
            r.reward,
            m.transition_row(r.context, r.level, r.state, r.action)[r.next_state],
            hyper,
        )
    }
}

/// Finite class of KNR weight matrices sharing the environment's features and reward.
#[derive(Debug, Clone)]
pub struct KnrClass {
    env: KnrEnv,
    weights: Vec<KnrWeight>,
    log_prior: Vec<f64>,
    true_index: Option<usize>,
    planner: ShootingPlanner,
    plan_seed: u64,
    root_values: Vec<f64>,
}

impl KnrClass {
    /// Builds the class and caches each model's planned value `V_M(x¹)` from the initial
    /// state (noiseless model dynamics, planner seeded with `plan_seed`).
    pub fn new(
        env: KnrEnv,
        weights: Vec<KnrWeight>,
        log_prior: Vec<f64>,
        true_index: Option<usize>,
        planner: ShootingPlanner,
        plan_seed: u64,
    ) -> Result<Self> {
        env.validate()?;
        check_prior(&log_prior, weights.len())?;
        for w in &weights {
            env.check_weight(w)?;
        }
        if let Some(t) = true_index {
            if weights.get(t) != Some(&env.true_weight) {
                return Err(Error::InvalidInstance(format!(
                    "KNR model {t} is not the environment's W*"
                )));
            }
        }
        let root_values = weights
            .par_iter()
            .map(|w| {
                let mut rng = seeded_rng(plan_seed);
                planner
                    .best_action(&env, w, 0, &env.initial_state, &mut rng)
                    .map(|(_, v)| v)
            })
            .collect::<Result<Vec<f64>>>()?;
        Ok(KnrClass {
            env,
            weights,
            log_prior,
            true_index,
            planner,
            plan_seed,
            root_values,
        })
    }

    pub fn env(&self) -> &KnrEnv {
        &self.env
    }

    pub fn weights(&self) -> &[KnrWeight] {
        &self.weights
    }

    pub fn planner(&self) -> ShootingPlanner {
        self.planner
    }

    pub fn plan_seed(&self) -> u64 {
        self.plan_seed
    }
}

impl ModelClass for KnrClass {
    type State = Vec<f64>;

    fn len(&self) -> usize {
        self.weights.len()
    }

    fn log_prior(&self) -> &[f64] {
        &self.log_prior
    }

    fn true_index(&self) -> Option<usize> {
        self.true_index
    }

    fn root_value(&self, model: usize, _context: usize) -> f64 {
        self.root_values[model]
    }

    fn likelihood_term(&self, model: usize, r: &TransitionRecord<Vec<f64>>, hyper: &Hyperparams) -> f64 {
        let gap = self.env.reward(&r.state, r.action) - r.reward;
        -hyper.eta * gap * gap
            + hyper.eta_prime
                * self
                    .env
                    .log_density(&self.weights[model], &r.state, r.action, &r.next_state)
    }
}
