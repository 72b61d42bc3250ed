//! Episodic contextual MDP environments.
//!
//! Tabular dynamics are stored as flat row-major tensors:
//!
//! - transitions: `[context, level, state, action, next_state]`
//! - reward means: `[context, level, state, action]`
//!
//! A context selects its own transition/reward slice and every episode starts in state 0
//! of that slice, so the level-1 observation `x¹` is identified with the context index.

pub mod knr;
pub mod mixture;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use knr::{FeatureMap, KnrEnv, KnrReward};
pub use mixture::LinearMixtureEnv;

const PROB_TOL: f64 = 1e-12;
const REWARD_SUM_TOL: f64 = 1e-12;

/// State index every episode starts in.
pub const START_STATE: usize = 0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub contexts: usize,
    pub states: usize,
    pub actions: usize,
    pub horizon: usize,
}

impl Dims {
    pub fn new(contexts: usize, states: usize, actions: usize, horizon: usize) -> Result<Self> {
        let dims = Dims {
            contexts,
            states,
            actions,
            horizon,
        };
        dims.validate()?;
        Ok(dims)
    }

    pub fn validate(&self) -> Result<()> {
        if self.contexts == 0 || self.states == 0 || self.actions == 0 || self.horizon == 0 {
            return Err(Error::InvalidInstance(format!(
                "all dimensions must be positive, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Number of `(context, level, state, action)` cells.
    pub fn sa_cells(&self) -> usize {
        self.contexts * self.horizon * self.states * self.actions
    }

    /// Number of `(context, level, state)` cells.
    pub fn state_cells(&self) -> usize {
        self.contexts * self.horizon * self.states
    }

    #[inline]
    pub fn state_index(&self, context: usize, level: usize, state: usize) -> usize {
        (context * self.horizon + level) * self.states + state
    }

    #[inline]
    pub fn sa_index(&self, context: usize, level: usize, state: usize, action: usize) -> usize {
        self.state_index(context, level, state) * self.actions + action
    }

    fn check(&self, context: usize, level: usize, state: usize, action: usize) -> Result<()> {
        if context >= self.contexts
            || level >= self.horizon
            || state >= self.states
            || action >= self.actions
        {
            return Err(Error::InvalidArgument(format!(
                "index (context {context}, level {level}, state {state}, action {action}) out of range for {self:?}"
            )));
        }
        Ok(())
    }
}

/// Transition and expected-reward tensors of one candidate model `M = (P_M, R_M)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularModel {
    pub dims: Dims,
    /// Row-major `[context, level, state, action, next_state]`.
    pub transitions: Vec<f64>,
    /// Row-major `[context, level, state, action]`, entries in `[0, 1]`.
    pub reward_means: Vec<f64>,
}

impl TabularModel {
    pub fn new(dims: Dims, transitions: Vec<f64>, reward_means: Vec<f64>) -> Result<Self> {
        let model = TabularModel {
            dims,
            transitions,
            reward_means,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.dims;
        d.validate()?;
        if self.transitions.len() != d.sa_cells() * d.states {
            return Err(Error::InvalidInstance(format!(
                "transition tensor has {} entries, expected {}",
                self.transitions.len(),
                d.sa_cells() * d.states
            )));
        }
        if self.reward_means.len() != d.sa_cells() {
            return Err(Error::InvalidInstance(format!(
                "reward tensor has {} entries, expected {}",
                self.reward_means.len(),
                d.sa_cells()
            )));
        }
        for (cell, row) in self.transitions.chunks_exact(d.states).enumerate() {
            if row.iter().any(|p| !p.is_finite() || *p < 0.0) {
                return Err(Error::InvalidInstance(format!(
                    "transition row {cell} has a negative or non-finite entry"
                )));
            }
            let total: f64 = row.iter().sum();
            if (total - 1.0).abs() > PROB_TOL {
                return Err(Error::InvalidInstance(format!(
                    "transition row {cell} sums to {total}"
                )));
            }
        }
        if let Some(bad) = self
            .reward_means
            .iter()
            .position(|r| !(0.0..=1.0).contains(r))
        {
            return Err(Error::InvalidInstance(format!(
                "reward mean {} at cell {bad} outside [0,1]",
                self.reward_means[bad]
            )));
        }
        for context in 0..d.contexts {
            let best = self.max_trajectory_reward(context);
            if best > 1.0 + REWARD_SUM_TOL {
                return Err(Error::InvalidInstance(format!(
                    "context {context}: a realizable trajectory collects mean reward {best} > 1"
                )));
            }
        }
        Ok(())
    }

    #[inline]
    pub fn transition_row(&self, context: usize, level: usize, state: usize, action: usize) -> &[f64] {
        let start = self.dims.sa_index(context, level, state, action) * self.dims.states;
        &self.transitions[start..start + self.dims.states]
    }

    #[inline]
    pub fn reward(&self, context: usize, level: usize, state: usize, action: usize) -> f64 {
        self.reward_means[self.dims.sa_index(context, level, state, action)]
    }

    /// Largest sum of mean rewards along any trajectory with positive probability.
    pub fn max_trajectory_reward(&self, context: usize) -> f64 {
        let d = &self.dims;
        let mut next = vec![0.0; d.states];
        for level in (0..d.horizon).rev() {
            let mut cur = vec![f64::NEG_INFINITY; d.states];
            for (s, slot) in cur.iter_mut().enumerate() {
                for a in 0..d.actions {
                    let row = self.transition_row(context, level, s, a);
                    let tail = row
                        .iter()
                        .zip(&next)
                        .filter(|(p, _)| **p > 0.0)
                        .map(|(_, v)| *v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    *slot = slot.max(self.reward(context, level, s, a) + tail);
                }
            }
            next = cur;
        }
        next[START_STATE]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardNoise {
    /// `r ~ Bernoulli(R(x, a))`.
    #[default]
    Bernoulli,
    /// `r = R(x, a)`.
    None,
}

/// Where an instance generator places reward mass so that every trajectory sums to at most 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardLayout {
    /// Nonzero mean reward only at the last level.
    #[default]
    TerminalOnly,
    /// Means drawn in `[0,1]` and divided by the horizon.
    ScaledByHorizon,
}

/// The true environment: one tabular model plus the context distribution and reward noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TabularEnv {
    pub model: TabularModel,
    pub context_dist: Vec<f64>,
    #[serde(default)]
    pub reward_noise: RewardNoise,
}

impl TabularEnv {
    pub fn new(model: TabularModel, context_dist: Vec<f64>, reward_noise: RewardNoise) -> Result<Self> {
        let env = TabularEnv {
            model,
            context_dist,
            reward_noise,
        };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        if self.context_dist.len() != self.model.dims.contexts {
            return Err(Error::InvalidInstance(format!(
                "context distribution has {} entries for {} contexts",
                self.context_dist.len(),
                self.model.dims.contexts
            )));
        }
        if self.context_dist.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (self.context_dist.iter().sum::<f64>() - 1.0).abs() > PROB_TOL
        {
            return Err(Error::InvalidInstance(
                "context distribution must be a probability vector".into(),
            ));
        }
        Ok(())
    }

    pub fn dims(&self) -> Dims {
        self.model.dims
    }

    pub fn sample_context<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_categorical(&self.context_dist, rng)
    }

    pub fn sample_reward<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        match self.reward_noise {
            RewardNoise::Bernoulli => {
                if rng.random::<f64>() < mean {
                    1.0
                } else {
                    0.0
                }
            }
            RewardNoise::None => mean,
        }
    }

    /// Plays `policy` for `steps` levels starting from the context's start state.
    pub fn rollout<R: Rng + ?Sized>(
        &self,
        policy: &Policy,
        context: usize,
        steps: usize,
        rng: &mut R,
    ) -> Result<Trajectory<usize>> {
        let d = self.dims();
        if steps == 0 || steps > d.horizon {
            return Err(Error::InvalidArgument(format!(
                "rollout length {steps} outside 1..={}",
                d.horizon
            )));
        }
        if context >= d.contexts {
            return Err(Error::InvalidArgument(format!("context {context} out of range")));
        }
        let mut state = START_STATE;
        let mut out = Vec::with_capacity(steps);
        for level in 0..steps {
            let rule = policy.rule(context, level, state)?;
            let action = rule.sample(d.actions, rng);
            let reward = self.sample_reward(self.model.reward(context, level, state, action), rng);
            let next_state =
                sample_categorical(self.model.transition_row(context, level, state, action), rng);
            out.push(Step {
                state,
                action,
                reward,
                next_state,
            });
            state = next_state;
        }
        Ok(Trajectory {
            context,
            steps: out,
        })
    }

    /// Exact `V^π(x¹)` by forward propagation of the state distribution.
    pub fn exact_policy_value(&self, policy: &Policy, context: usize) -> Result<f64> {
        exact_policy_value(&self.model, policy, context)
    }
}

/// Exact value of `policy` in `model` from `context`, by forward dynamic programming.
pub fn exact_policy_value(model: &TabularModel, policy: &Policy, context: usize) -> Result<f64> {
    let d = model.dims;
    let mut value = 0.0;
    let mut dist = vec![0.0; d.states];
    dist[START_STATE] = 1.0;
    for level in 0..d.horizon {
        let mut next = vec![0.0; d.states];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let rule = policy.rule(context, level, s)?;
            rule.for_each(d.actions, |a, pa| {
                let w = mass * pa;
                value += w * model.reward(context, level, s, a);
                for (n, p) in model.transition_row(context, level, s, a).iter().enumerate() {
                    next[n] += w * p;
                }
            });
        }
        dist = next;
    }
    Ok(value)
}

/// State-action occupancy `d^h(x, a)` of `policy` in `model`, one `[state * actions]` table
/// per level.
pub fn state_action_occupancy(model: &TabularModel, policy: &Policy, context: usize) -> Result<Vec<Vec<f64>>> {
    let d = model.dims;
    let mut out = Vec::with_capacity(d.horizon);
    let mut dist = vec![0.0; d.states];
    dist[START_STATE] = 1.0;
    for level in 0..d.horizon {
        let mut occ = vec![0.0; d.states * d.actions];
        let mut next = vec![0.0; d.states];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let rule = policy.rule(context, level, s)?;
            rule.for_each(d.actions, |a, pa| {
                let w = mass * pa;
                occ[s * d.actions + a] += w;
                for (n, p) in model.transition_row(context, level, s, a).iter().enumerate() {
                    next[n] += w * p;
                }
            });
        }
        out.push(occ);
        dist = next;
    }
    Ok(out)
}

/// Per-level state distribution of `policy` in `model` from `context`, for levels
/// `0..=up_to` (the distribution at `up_to` does not need the policy at that level).
pub fn state_occupancy(model: &TabularModel, policy: &Policy, context: usize, up_to: usize) -> Result<Vec<Vec<f64>>> {
    let d = model.dims;
    let mut out = Vec::with_capacity(up_to + 1);
    let mut dist = vec![0.0; d.states];
    dist[START_STATE] = 1.0;
    for level in 0..up_to {
        let mut next = vec![0.0; d.states];
        for (s, &mass) in dist.iter().enumerate() {
            if mass == 0.0 {
                continue;
            }
            let rule = policy.rule(context, level, s)?;
            rule.for_each(d.actions, |a, pa| {
                for (n, p) in model.transition_row(context, level, s, a).iter().enumerate() {
                    next[n] += mass * pa * p;
                }
            });
        }
        out.push(std::mem::replace(&mut dist, next));
    }
    out.push(dist);
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step<S> {
    pub state: S,
    pub action: usize,
    pub reward: f64,
    pub next_state: S,
}

/// An executed episode prefix. `steps[h]` holds `(xʰ, aʰ, rʰ, xʰ⁺¹)` for level `h`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub context: usize,
    pub steps: Vec<Step<S>>,
}

/// Action choice at one `(context, level, state)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ActionRule {
    Fixed(usize),
    Uniform,
    Mixed(Vec<f64>),
}

impl ActionRule {
    pub fn sample<R: Rng + ?Sized>(&self, actions: usize, rng: &mut R) -> usize {
        match self {
            ActionRule::Fixed(a) => *a,
            ActionRule::Uniform => rng.random_range(0..actions),
            ActionRule::Mixed(p) => sample_categorical(p, rng),
        }
    }

    pub fn prob(&self, action: usize, actions: usize) -> f64 {
        match self {
            ActionRule::Fixed(a) => f64::from(u8::from(*a == action)),
            ActionRule::Uniform => 1.0 / actions as f64,
            ActionRule::Mixed(p) => p[action],
        }
    }

    pub fn for_each(&self, actions: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            ActionRule::Fixed(a) => f(*a, 1.0),
            ActionRule::Uniform => {
                let p = 1.0 / actions as f64;
                (0..actions).for_each(|a| f(a, p));
            }
            ActionRule::Mixed(p) => p
                .iter()
                .enumerate()
                .filter(|(_, w)| **w > 0.0)
                .for_each(|(a, w)| f(a, *w)),
        }
    }
}

/// A non-stationary, possibly stochastic tabular policy.
///
/// `levels[h][context * states + state]` is the rule at level `h`. Levels past
/// `levels.len()` are undefined.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub dims: Dims,
    pub levels: Vec<Vec<ActionRule>>,
}

impl Policy {
    /// Deterministic policy from a `[context, level, state]` action table.
    pub fn from_table(dims: Dims, table: &[usize]) -> Self {
        let per_level = dims.contexts * dims.states;
        let levels = (0..dims.horizon)
            .map(|level| {
                (0..per_level)
                    .map(|cs| {
                        let (c, s) = (cs / dims.states, cs % dims.states);
                        ActionRule::Fixed(table[dims.state_index(c, level, s)])
                    })
                    .collect()
            })
            .collect();
        Policy { dims, levels }
    }

    pub fn defined_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn rule(&self, context: usize, level: usize, state: usize) -> Result<&ActionRule> {
        self.levels
            .get(level)
            .and_then(|l| l.get(context * self.dims.states + state))
            .ok_or(Error::PolicyUndefined {
                level,
                context,
                state,
            })
    }

    pub fn truncated(mut self, levels: usize) -> Self {
        self.levels.truncate(levels);
        self
    }
}

/// Draws an index with probability proportional to `weights` (assumed normalized).
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        acc += w;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

pub(crate) fn check_index(dims: &Dims, context: usize, level: usize, state: usize, action: usize) -> Result<()> {
    dims.check(context, level, state, action)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeded_rng;

    pub(crate) fn chain_env() -> TabularEnv {
        // 2 states, 2 actions, H = 2; action 1 moves to state 1 which pays at the last level.
        let dims = Dims::new(1, 2, 2, 2).unwrap();
        let mut p = vec![0.0; dims.sa_cells() * 2];
        let mut r = vec![0.0; dims.sa_cells()];
        for level in 0..2 {
            for s in 0..2 {
                for a in 0..2 {
                    let i = dims.sa_index(0, level, s, a);
                    p[i * 2 + a] = 1.0;
                }
            }
        }
        r[dims.sa_index(0, 1, 1, 0)] = 0.8;
        r[dims.sa_index(0, 1, 0, 1)] = 0.3;
        let model = TabularModel::new(dims, p, r).unwrap();
        TabularEnv::new(model, vec![1.0], RewardNoise::None).unwrap()
    }

    #[test]
    fn rejects_reward_sum_above_one() {
        let dims = Dims::new(1, 1, 1, 2).unwrap();
        let err = TabularModel::new(dims, vec![1.0, 1.0], vec![0.6, 0.6]).unwrap_err();
        assert!(matches!(err, Error::InvalidInstance(_)));
    }

    #[test]
    fn rejects_unnormalized_rows() {
        let dims = Dims::new(1, 2, 1, 1).unwrap();
        assert!(TabularModel::new(dims, vec![0.5, 0.4, 0.5, 0.5], vec![0.0, 0.0]).is_err());
        assert!(TabularModel::new(dims, vec![1.5, -0.5, 0.5, 0.5], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn single_context_always_zero() {
        let env = chain_env();
        let mut rng = seeded_rng(3);
        assert!((0..100).all(|_| env.sample_context(&mut rng) == 0));
    }

    #[test]
    fn degenerate_context_dist() {
        let dims = Dims::new(3, 1, 1, 1).unwrap();
        let model = TabularModel::new(dims, vec![1.0; 3], vec![0.0; 3]).unwrap();
        let env = TabularEnv::new(model, vec![1.0, 0.0, 0.0], RewardNoise::None).unwrap();
        let mut rng = seeded_rng(4);
        assert!((0..1000).all(|_| env.sample_context(&mut rng) == 0));
    }

    #[test]
    fn balanced_context_frequency() {
        let dims = Dims::new(2, 1, 1, 1).unwrap();
        let model = TabularModel::new(dims, vec![1.0; 2], vec![0.0; 2]).unwrap();
        let env = TabularEnv::new(model, vec![0.5, 0.5], RewardNoise::None).unwrap();
        let mut rng = seeded_rng(11);
        let n = 100_000;
        let zeros = (0..n).filter(|_| env.sample_context(&mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.5).abs() < 0.01);
    }

    #[test]
    fn rollout_lengths_and_determinism() {
        let env = chain_env();
        let policy = Policy::from_table(env.dims(), &[1, 1, 0, 0]);
        let mut rng = seeded_rng(5);
        let one = env.rollout(&policy, 0, 1, &mut rng).unwrap();
        assert_eq!(one.steps.len(), 1);
        let a = env.rollout(&policy, 0, 2, &mut seeded_rng(9)).unwrap();
        let b = env.rollout(&policy, 0, 2, &mut seeded_rng(9)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.steps[1].reward, 0.8);
        assert!(env.rollout(&policy, 0, 3, &mut rng).is_err());
    }

    #[test]
    fn rollout_reports_undefined_policy() {
        let env = chain_env();
        let policy = Policy::from_table(env.dims(), &[1, 1, 0, 0]).truncated(1);
        let err = env.rollout(&policy, 0, 2, &mut seeded_rng(1)).unwrap_err();
        assert!(matches!(err, Error::PolicyUndefined { level: 1, .. }));
    }

    #[test]
    fn horizon_one_argmax_value() {
        let dims = Dims::new(1, 1, 3, 1).unwrap();
        let model = TabularModel::new(dims, vec![1.0; 3], vec![0.2, 0.9, 0.4]).unwrap();
        let env = TabularEnv::new(model, vec![1.0], RewardNoise::Bernoulli).unwrap();
        let policy = Policy::from_table(dims, &[1]);
        assert_eq!(env.exact_policy_value(&policy, 0).unwrap(), 0.9);
    }

    #[test]
    fn zero_rewards_zero_value() {
        let env = chain_env();
        let mut model = env.model.clone();
        model.reward_means.iter_mut().for_each(|r| *r = 0.0);
        let policy = Policy {
            dims: model.dims,
            levels: vec![vec![ActionRule::Uniform; 2]; 2],
        };
        assert_eq!(exact_policy_value(&model, &policy, 0).unwrap(), 0.0);
    }

    #[test]
    fn chain_value() {
        let env = chain_env();
        let go = Policy::from_table(env.dims(), &[1, 1, 0, 0]);
        assert_eq!(env.exact_policy_value(&go, 0).unwrap(), 0.8);
        let stay = Policy::from_table(env.dims(), &[0, 0, 1, 1]);
        assert_eq!(env.exact_policy_value(&stay, 0).unwrap(), 0.3);
    }
}
