//! Kernelized non-linear regulator: `x^{h+1} = W φ(x^h, a^h) + ε`, `ε ~ N(0, σ² I)`.
//!
//! Actions come from a finite probe set of action vectors. The reward is known and shared
//! by every model; both reward shapes are scaled by `1 / H` so episode returns stay in
//! `[0, 1]`.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Step, Trajectory};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FeatureMap {
    /// `φ(x, a) = (tanh(x), a)`.
    TanhConcat,
    /// `φ_i(x, a) = sqrt(2 / d) cos(ω_i · (x, a) + b_i)`.
    RandomFourier { omega: Vec<Vec<f64>>, bias: Vec<f64> },
}

impl FeatureMap {
    pub fn dim(&self, state_dim: usize, action_dim: usize) -> usize {
        match self {
            FeatureMap::TanhConcat => state_dim + action_dim,
            FeatureMap::RandomFourier { bias, .. } => bias.len(),
        }
    }

    pub fn eval(&self, state: &[f64], action: &[f64]) -> Vec<f64> {
        match self {
            FeatureMap::TanhConcat => state
                .iter()
                .map(|x| x.tanh())
                .chain(action.iter().copied())
                .collect(),
            FeatureMap::RandomFourier { omega, bias } => {
                let scale = (2.0 / bias.len() as f64).sqrt();
                omega
                    .iter()
                    .zip(bias)
                    .map(|(w, b)| {
                        let dot: f64 = w
                            .iter()
                            .zip(state.iter().chain(action))
                            .map(|(wi, zi)| wi * zi)
                            .sum();
                        scale * (dot + b).cos()
                    })
                    .collect()
            }
        }
    }

    /// Upper bound on `‖φ(x, a)‖₂` over all states and the given actions.
    pub fn norm_bound(&self, state_dim: usize, actions: &[Vec<f64>]) -> f64 {
        match self {
            FeatureMap::TanhConcat => {
                let a2 = actions
                    .iter()
                    .map(|a| a.iter().map(|v| v * v).sum::<f64>())
                    .fold(0.0, f64::max);
                (state_dim as f64 + a2).sqrt()
            }
            FeatureMap::RandomFourier { .. } => 2f64.sqrt(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum KnrReward {
    /// `max(0, 1 − q‖x‖² − ρ‖a‖²) / H`.
    Quadratic { state_weight: f64, action_weight: f64 },
    /// `exp(−‖x − goal‖² / (2 w²)) / H`.
    Bump { goal: Vec<f64>, width: f64 },
}

impl KnrReward {
    pub fn eval(&self, state: &[f64], action: &[f64], horizon: usize) -> f64 {
        let raw = match self {
            KnrReward::Quadratic {
                state_weight,
                action_weight,
            } => {
                let x2: f64 = state.iter().map(|v| v * v).sum();
                let a2: f64 = action.iter().map(|v| v * v).sum();
                (1.0 - state_weight * x2 - action_weight * a2).max(0.0)
            }
            KnrReward::Bump { goal, width } => {
                let d2: f64 = state.iter().zip(goal).map(|(x, g)| (x - g).powi(2)).sum();
                (-d2 / (2.0 * width * width)).exp()
            }
        };
        raw.clamp(0.0, 1.0) / horizon as f64
    }
}

/// A `d_X × d_φ` weight matrix stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnrWeight {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl KnrWeight {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "weight with {} entries for {rows}x{cols}",
                data.len()
            )));
        }
        Ok(KnrWeight { rows, cols, data })
    }

    pub fn apply(&self, features: &[f64]) -> Vec<f64> {
        self.data
            .chunks_exact(self.cols)
            .map(|row| row.iter().zip(features).map(|(w, f)| w * f).sum())
            .collect()
    }

    pub fn spectral_norm(&self) -> f64 {
        let m = DMatrix::from_row_slice(self.rows, self.cols, &self.data);
        m.singular_values().max()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnrEnv {
    pub state_dim: usize,
    pub feature_map: FeatureMap,
    pub true_weight: KnrWeight,
    pub noise_std: f64,
    pub actions: Vec<Vec<f64>>,
    pub horizon: usize,
    pub initial_state: Vec<f64>,
    pub reward: KnrReward,
    /// `B` with `‖φ(x, a)‖₂ ≤ B`.
    pub feature_bound: f64,
    /// `R` with `‖W‖₂ ≤ R` for every model.
    pub weight_bound: f64,
}

impl KnrEnv {
    pub fn action_dim(&self) -> usize {
        self.actions.first().map_or(0, Vec::len)
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_map.dim(self.state_dim, self.action_dim())
    }

    pub fn validate(&self) -> Result<()> {
        if self.actions.is_empty() {
            return Err(Error::InvalidInstance("KNR action set is empty".into()));
        }
        if self.actions.iter().any(|a| a.len() != self.action_dim()) {
            return Err(Error::InvalidInstance("KNR actions have mixed dimensions".into()));
        }
        if !(self.noise_std > 0.0) {
            return Err(Error::InvalidInstance(format!(
                "noise std must be positive, got {}",
                self.noise_std
            )));
        }
        if self.horizon == 0 || self.initial_state.len() != self.state_dim {
            return Err(Error::InvalidInstance("bad KNR horizon or initial state".into()));
        }
        self.check_weight(&self.true_weight)?;
        let bound = self.feature_map.norm_bound(self.state_dim, &self.actions);
        if bound > self.feature_bound * (1.0 + 1e-12) {
            return Err(Error::InvalidInstance(format!(
                "feature norm bound {bound} exceeds declared B = {}",
                self.feature_bound
            )));
        }
        for a in &self.actions {
            let n = norm(&self.feature_map.eval(&self.initial_state, a));
            if n > self.feature_bound * (1.0 + 1e-12) {
                return Err(Error::InvalidInstance(format!(
                    "‖φ(x¹, a)‖ = {n} exceeds B = {}",
                    self.feature_bound
                )));
            }
        }
        Ok(())
    }

    pub fn check_weight(&self, w: &KnrWeight) -> Result<()> {
        if w.rows != self.state_dim || w.cols != self.feature_dim() {
            return Err(Error::DimensionMismatch(format!(
                "weight is {}x{}, expected {}x{}",
                w.rows,
                w.cols,
                self.state_dim,
                self.feature_dim()
            )));
        }
        let s = w.spectral_norm();
        if s > self.weight_bound * (1.0 + 1e-12) {
            return Err(Error::InvalidInstance(format!(
                "‖W‖₂ = {s} exceeds R = {}",
                self.weight_bound
            )));
        }
        Ok(())
    }

    pub fn features(&self, state: &[f64], action: usize) -> Vec<f64> {
        self.feature_map.eval(state, &self.actions[action])
    }

    pub fn reward(&self, state: &[f64], action: usize) -> f64 {
        self.reward.eval(state, &self.actions[action], self.horizon)
    }

    /// Noiseless successor `W φ(x, a)`.
    pub fn mean_next(&self, weight: &KnrWeight, state: &[f64], action: usize) -> Vec<f64> {
        weight.apply(&self.features(state, action))
    }

    /// `ln N(next; W φ(x, a), σ² I)`.
    pub fn log_density(&self, weight: &KnrWeight, state: &[f64], action: usize, next: &[f64]) -> f64 {
        let mean = self.mean_next(weight, state, action);
        let var = self.noise_std * self.noise_std;
        let d2: f64 = next.iter().zip(&mean).map(|(x, m)| (x - m).powi(2)).sum();
        -0.5 * self.state_dim as f64 * (2.0 * std::f64::consts::PI * var).ln() - d2 / (2.0 * var)
    }

    pub fn sample_next<R: Rng + ?Sized>(&self, state: &[f64], action: usize, rng: &mut R) -> Vec<f64> {
        self.mean_next(&self.true_weight, state, action)
            .into_iter()
            .map(|m| {
                let z: f64 = rng.sample(StandardNormal);
                m + self.noise_std * z
            })
            .collect()
    }

    pub fn rollout<R: Rng + ?Sized>(
        &self,
        policy: &mut dyn FnMut(usize, &[f64]) -> Result<usize>,
        steps: usize,
        rng: &mut R,
    ) -> Result<Trajectory<Vec<f64>>> {
        if steps == 0 || steps > self.horizon {
            return Err(Error::InvalidArgument(format!(
                "rollout length {steps} outside 1..={}",
                self.horizon
            )));
        }
        let mut state = self.initial_state.clone();
        let mut out = Vec::with_capacity(steps);
        for level in 0..steps {
            let action = policy(level, &state)?;
            if action >= self.actions.len() {
                return Err(Error::InvalidArgument(format!("action {action} out of range")));
            }
            let reward = self.reward(&state, action);
            let next_state = self.sample_next(&state, action, rng);
            out.push(Step {
                state: std::mem::replace(&mut state, next_state.clone()),
                action,
                reward,
                next_state,
            });
        }
        Ok(Trajectory { context: 0, steps: out })
    }

    /// Return of an action sequence under the noiseless dynamics of `weight`, from `level`.
    pub fn sequence_return(&self, weight: &KnrWeight, level: usize, state: &[f64], actions: &[usize]) -> f64 {
        let mut x = state.to_vec();
        let mut total = 0.0;
        for (offset, &a) in actions.iter().enumerate() {
            debug_assert!(level + offset < self.horizon);
            total += self.reward(&x, a);
            x = self.mean_next(weight, &x, a);
        }
        total
    }
}

pub(crate) fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::seeded_rng;

    pub(crate) fn small_knr() -> KnrEnv {
        KnrEnv {
            state_dim: 2,
            feature_map: FeatureMap::TanhConcat,
            true_weight: KnrWeight::new(2, 3, vec![0.5, 0.1, 0.3, -0.2, 0.4, -0.3]).unwrap(),
            noise_std: 0.2,
            actions: vec![vec![-1.0], vec![1.0]],
            horizon: 3,
            initial_state: vec![0.5, -0.5],
            reward: KnrReward::Quadratic {
                state_weight: 0.5,
                action_weight: 0.0,
            },
            feature_bound: 3f64.sqrt(),
            weight_bound: 1.0,
        }
    }

    #[test]
    fn validates_and_bounds() {
        let env = small_knr();
        env.validate().unwrap();
        let mut bad = env.clone();
        bad.noise_std = 0.0;
        assert!(bad.validate().is_err());
        let mut big = env;
        big.true_weight.data[0] = 5.0;
        assert!(big.validate().is_err());
    }

    #[test]
    fn noise_mean_is_small() {
        let env = small_knr();
        let mut rng = seeded_rng(21);
        let n = 100_000;
        let x = env.initial_state.clone();
        let mean = env.mean_next(&env.true_weight, &x, 1);
        let mut acc = [0.0; 2];
        for _ in 0..n {
            let next = env.sample_next(&x, 1, &mut rng);
            acc[0] += next[0] - mean[0];
            acc[1] += next[1] - mean[1];
        }
        let err = norm(&[acc[0] / n as f64, acc[1] / n as f64]);
        let limit = 5.0 * env.noise_std / (n as f64).sqrt() * 2f64.sqrt() * 3.0;
        assert!(err <= limit, "{err} > {limit}");
    }

    #[test]
    fn random_fourier_norm() {
        let fm = FeatureMap::RandomFourier {
            omega: vec![vec![1.0, 2.0, 0.5], vec![-0.3, 0.7, 1.1]],
            bias: vec![0.1, 2.0],
        };
        let v = fm.eval(&[0.3, -0.2], &[1.0]);
        assert!(norm(&v) <= 2f64.sqrt() + 1e-15);
    }
}
