//! Linear mixture MDPs: `P_ν = Σ_j ν_j P_j` over known base dynamics.

use serde::{Deserialize, Serialize};

use super::{Dims, RewardNoise, TabularEnv, TabularModel};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMixtureEnv {
    pub dims: Dims,
    /// Base transition tensors, each laid out like [`TabularModel::transitions`].
    pub base_transitions: Vec<Vec<f64>>,
    pub true_weights: Vec<f64>,
    pub reward_means: Vec<f64>,
    pub context_dist: Vec<f64>,
    #[serde(default)]
    pub reward_noise: RewardNoise,
}

impl LinearMixtureEnv {
    pub fn validate(&self) -> Result<()> {
        if self.base_transitions.is_empty() {
            return Err(Error::InvalidInstance("mixture needs at least one base model".into()));
        }
        if self.true_weights.len() != self.base_transitions.len() {
            return Err(Error::InvalidInstance(format!(
                "{} mixture weights for {} base models",
                self.true_weights.len(),
                self.base_transitions.len()
            )));
        }
        check_simplex(&self.true_weights)?;
        for base in &self.base_transitions {
            TabularModel::new(self.dims, base.clone(), self.reward_means.clone())?;
        }
        self.to_env()?.validate()
    }

    /// Materializes the model with mixture weights `weights`.
    pub fn mixture_model(&self, weights: &[f64]) -> Result<TabularModel> {
        if weights.len() != self.base_transitions.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} weights for {} base models",
                weights.len(),
                self.base_transitions.len()
            )));
        }
        check_simplex(weights)?;
        let mut transitions = vec![0.0; self.base_transitions[0].len()];
        for (w, base) in weights.iter().zip(&self.base_transitions) {
            if *w == 0.0 {
                continue;
            }
            for (t, b) in transitions.iter_mut().zip(base) {
                *t += w * b;
            }
        }
        TabularModel::new(self.dims, transitions, self.reward_means.clone())
    }

    pub fn to_env(&self) -> Result<TabularEnv> {
        TabularEnv::new(
            self.mixture_model(&self.true_weights)?,
            self.context_dist.clone(),
            self.reward_noise,
        )
    }
}

fn check_simplex(w: &[f64]) -> Result<()> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) || (w.iter().sum::<f64>() - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidInstance(format!(
            "mixture weights {w:?} are not a probability vector"
        )));
    }
    Ok(())
}

/// All points of the probability simplex in `dim` coordinates whose entries are multiples
/// of `1 / divisions`, in lexicographic order.
pub fn simplex_grid(dim: usize, divisions: usize) -> Vec<Vec<f64>> {
    fn rec(dim: usize, left: usize, divisions: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<f64>>) {
        if prefix.len() + 1 == dim {
            prefix.push(left);
            out.push(prefix.iter().map(|k| *k as f64 / divisions as f64).collect());
            prefix.pop();
            return;
        }
        for k in (0..=left).rev() {
            prefix.push(k);
            rec(dim, left - k, divisions, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if dim > 0 && divisions > 0 {
        rec(dim, divisions, divisions, &mut Vec::new(), &mut out);
    }
    out
}
