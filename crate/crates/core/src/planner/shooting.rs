//! Random-shooting model-predictive control for KNR models.
//!
//! At `(level, state)` the planner scores action sequences for the remaining levels under
//! the model's noiseless dynamics and returns the first action of the best one. When the
//! number of distinct sequences fits in the budget they are enumerated exhaustively.

use rand::{Rng, RngCore};

use crate::env::knr::{KnrEnv, KnrWeight};
use crate::{seeded_rng, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShootingPlanner {
    pub budget: usize,
}

impl ShootingPlanner {
    pub fn new(budget: usize) -> Result<Self> {
        if budget == 0 {
            return Err(Error::InvalidArgument("rollout budget must be >= 1".into()));
        }
        Ok(ShootingPlanner { budget })
    }

    /// Best first action and its sequence return, from `level` (0-based) onwards.
    pub fn best_action<R: Rng + ?Sized>(
        &self,
        env: &KnrEnv,
        weight: &KnrWeight,
        level: usize,
        state: &[f64],
        rng: &mut R,
    ) -> Result<(usize, f64)> {
        let k = env.actions.len();
        if k == 0 {
            return Err(Error::InvalidArgument("empty action set".into()));
        }
        if level >= env.horizon {
            return Err(Error::InvalidArgument(format!(
                "level {level} beyond horizon {}",
                env.horizon
            )));
        }
        let remaining = env.horizon - level;
        let exhaustive = (k as f64).powi(remaining as i32) <= self.budget as f64;
        let mut best = (0, f64::NEG_INFINITY);
        let mut seq = vec![0; remaining];
        let consider = |seq: &[usize], best: &mut (usize, f64)| {
            let value = env.sequence_return(weight, level, state, seq);
            if value > best.1 {
                *best = (seq[0], value);
            }
        };
        if exhaustive {
            let total = k.pow(remaining as u32);
            for code in 0..total {
                let mut c = code;
                for slot in seq.iter_mut() {
                    *slot = c % k;
                    c /= k;
                }
                consider(&seq, &mut best);
            }
        } else {
            for _ in 0..self.budget {
                for slot in seq.iter_mut() {
                    *slot = rng.random_range(0..k);
                }
                consider(&seq, &mut best);
            }
        }
        Ok(best)
    }
}

/// Closed-loop MPC policy of one KNR model. Re-plans at every step with a generator seeded
/// from `(seed, level)`, so its actions depend only on the seed and the visited states.
#[derive(Debug, Clone, PartialEq)]
pub struct ShootingPolicy {
    pub weight: KnrWeight,
    pub planner: ShootingPlanner,
    pub seed: u64,
}

impl ShootingPolicy {
    pub fn act(&self, env: &KnrEnv, level: usize, state: &[f64]) -> Result<usize> {
        self.plan_at(env, level, state).map(|(a, _)| a)
    }

    pub fn plan_at(&self, env: &KnrEnv, level: usize, state: &[f64]) -> Result<(usize, f64)> {
        let mut rng = seeded_rng(self.seed ^ (level as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        self.planner.best_action(env, &self.weight, level, state, &mut rng)
    }
}

/// Builds the MPC policy for `weight`, drawing its seed from `rng`.
pub fn knr_plan<R: RngCore + ?Sized>(weight: &KnrWeight, env: &KnrEnv, rollout_budget: usize, rng: &mut R) -> Result<ShootingPolicy> {
    if env.actions.is_empty() {
        return Err(Error::InvalidArgument("empty action set".into()));
    }
    Ok(ShootingPolicy {
        weight: weight.clone(),
        planner: ShootingPlanner::new(rollout_budget)?,
        seed: rng.next_u64(),
    })
}
