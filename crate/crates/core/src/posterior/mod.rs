//! The optimistic posterior `p_t(M) ∝ p₀(M) exp(Σ_s γ V_M(x_s¹) + L_s(M))`, kept in log space.
//!
//! The posterior stores the unnormalized exponent of every model as a compensated sum, and
//! derives normalized log-weights from it after each update. Normalization therefore never
//! feeds back into the accumulated evidence.

mod class;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergences::log_sum_exp;
use crate::{Error, Result};

pub use class::{uniform_log_prior, KnrClass, TabularClass};

const NORMALIZATION_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hyperparams {
    pub eta: f64,
    pub eta_prime: f64,
    pub gamma: f64,
}

impl Hyperparams {
    /// `η = η′ = 1/6` with `γ = min(0.5, √(ln|𝓜| / T))`.
    pub fn tuned(class_size: usize, rounds: usize) -> Self {
        Hyperparams {
            eta: 1.0 / 6.0,
            eta_prime: 1.0 / 6.0,
            gamma: tuned_gamma(class_size, rounds, None),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.eta >= 0.0 && self.eta_prime >= 0.0 && self.gamma >= 0.0)
            || !(self.eta.is_finite() && self.eta_prime.is_finite() && self.gamma.is_finite())
        {
            return Err(Error::InvalidArgument(format!(
                "hyperparameters must be finite and nonnegative: {self:?}"
            )));
        }
        Ok(())
    }
}

/// `min(0.5, √(ln|𝓜|/T))`, plus `(ln|𝓜|/T)^{1−α} dc^{−α} / H` when `(α, dc, H)` is given.
pub fn tuned_gamma(class_size: usize, rounds: usize, decoupling: Option<(f64, f64, usize)>) -> f64 {
    let ratio = (class_size.max(1) as f64).ln() / rounds.max(1) as f64;
    let mut gamma = 0.5f64.min(ratio.sqrt());
    if let Some((alpha, dc, horizon)) = decoupling {
        if dc > 0.0 {
            gamma = gamma.min(ratio.powf(1.0 - alpha) * dc.powf(-alpha) / horizon as f64);
        }
    }
    gamma
}

/// One collected tuple `(xʰ, aʰ, rʰ, xʰ⁺¹)` together with its round bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionRecord<S> {
    /// 1-based round index `t`.
    pub round: usize,
    /// 0-based stopping level `h_t`.
    pub stop_level: usize,
    pub context: usize,
    /// 0-based level of this tuple.
    pub level: usize,
    pub state: S,
    pub action: usize,
    pub reward: f64,
    pub next_state: S,
}

/// Everything one round contributes to the posterior exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundData<S> {
    pub context: usize,
    pub records: Vec<TransitionRecord<S>>,
}

/// A finite model class the posterior can score.
pub trait ModelClass: Sync {
    type State: Clone + Send + Sync;

    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn log_prior(&self) -> &[f64];

    /// Index of the realizable model. Analysis only; the learner never reads it.
    fn true_index(&self) -> Option<usize>;

    /// `V_M(x¹)` for `context`.
    fn root_value(&self, model: usize, context: usize) -> f64;

    /// `L(M) = −η (R_M(x, a) − r)² + η′ ln P_M(x′ | x, a)`.
    fn likelihood_term(&self, model: usize, record: &TransitionRecord<Self::State>, hyper: &Hyperparams) -> f64;

    /// Exponent increment `γ V_M(x¹) + Σ L` of one round.
    fn round_term(&self, model: usize, round: &RoundData<Self::State>, hyper: &Hyperparams) -> f64 {
        let mut total = hyper.gamma * self.root_value(model, round.context);
        for rec in &round.records {
            total += self.likelihood_term(model, rec, hyper);
        }
        total
    }
}

/// Scalar likelihood term from a model's predicted mean reward and transition probability.
/// A zero-probability transition yields `−∞`.
pub fn likelihood_term(predicted_reward: f64, observed_reward: f64, transition_prob: f64, hyper: &Hyperparams) -> f64 {
    let gap = predicted_reward - observed_reward;
    let log_p = if transition_prob > 0.0 {
        transition_prob.ln()
    } else {
        f64::NEG_INFINITY
    };
    -hyper.eta * gap * gap + hyper.eta_prime * log_p
}

/// Neumaier-compensated running sum that sticks at `−∞`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
    eliminated: bool,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        if self.eliminated {
            return;
        }
        if x == f64::NEG_INFINITY {
            self.eliminated = true;
            return;
        }
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        if self.eliminated {
            f64::NEG_INFINITY
        } else {
            self.sum + self.comp
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogPosterior {
    pub hyper: Hyperparams,
    log_prior: Vec<f64>,
    exponents: Vec<CompensatedSum>,
    log_weights: Vec<f64>,
    rounds: usize,
}

impl LogPosterior {
    pub fn new(log_prior: &[f64], hyper: Hyperparams) -> Result<Self> {
        hyper.validate()?;
        if log_prior.is_empty() {
            return Err(Error::InvalidArgument("empty model class".into()));
        }
        let z = log_sum_exp(log_prior);
        if !z.is_finite() {
            return Err(Error::InvalidArgument("prior has no finite mass".into()));
        }
        Ok(LogPosterior {
            hyper,
            log_prior: log_prior.to_vec(),
            exponents: vec![CompensatedSum::default(); log_prior.len()],
            log_weights: log_prior.iter().map(|l| l - z).collect(),
            rounds: 0,
        })
    }

    pub fn from_class<C: ModelClass>(class: &C, hyper: Hyperparams) -> Result<Self> {
        Self::new(class.log_prior(), hyper)
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// Number of rounds absorbed so far (`t − 1` while acting in round `t`).
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    pub fn weights(&self) -> Vec<f64> {
        self.log_weights.iter().map(|l| l.exp()).collect()
    }

    pub fn weight(&self, model: usize) -> f64 {
        self.log_weights[model].exp()
    }

    /// Unnormalized exponents `Σ_s γ V_M(x_s¹) + L_s(M)`.
    pub fn exponents(&self) -> Vec<f64> {
        self.exponents.iter().map(CompensatedSum::value).collect()
    }

    pub fn entropy(&self) -> f64 {
        self.log_weights
            .iter()
            .filter(|l| l.is_finite())
            .map(|l| -l.exp() * l)
            .sum()
    }

    pub fn expectation(&self, mut f: impl FnMut(usize) -> f64) -> f64 {
        self.log_weights
            .iter()
            .enumerate()
            .filter(|(_, l)| l.is_finite())
            .map(|(m, l)| l.exp() * f(m))
            .sum()
    }

    /// Adds one round to the exponent and renormalizes.
    pub fn update<C: ModelClass>(&mut self, class: &C, round: &RoundData<C::State>) -> Result<()> {
        if class.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "posterior over {} models, class of {}",
                self.len(),
                class.len()
            )));
        }
        for (m, acc) in self.exponents.iter_mut().enumerate() {
            acc.add(class.round_term(m, round, &self.hyper));
        }
        self.rounds += 1;
        self.normalize()
    }

    /// Single-record update.
    pub fn update_record<C: ModelClass>(&mut self, class: &C, record: TransitionRecord<C::State>) -> Result<()> {
        let round = RoundData {
            context: record.context,
            records: vec![record],
        };
        self.update(class, &round)
    }

    /// Replaces the running exponents with a from-scratch recomputation and returns the
    /// largest log-weight drift the replacement corrected.
    pub fn resync<C: ModelClass>(&mut self, class: &C, history: &[RoundData<C::State>]) -> Result<f64> {
        let fresh = batch_exponents(class, &self.hyper, history);
        let mut rebuilt = self.clone();
        rebuilt.exponents = fresh
            .iter()
            .map(|e| {
                let mut acc = CompensatedSum::default();
                acc.add(*e);
                acc
            })
            .collect();
        rebuilt.rounds = history.len();
        rebuilt.normalize()?;
        let drift = max_log_deviation(&self.log_weights, &rebuilt.log_weights);
        *self = rebuilt;
        Ok(drift)
    }

    fn normalize(&mut self) -> Result<()> {
        let raw: Vec<f64> = self
            .log_prior
            .iter()
            .zip(&self.exponents)
            .map(|(p, e)| p + e.value())
            .collect();
        let z = log_sum_exp(&raw);
        if !z.is_finite() {
            return Err(Error::DegeneratePosterior { round: self.rounds });
        }
        self.log_weights = raw.iter().map(|r| r - z).collect();
        let check = log_sum_exp(&self.log_weights);
        if check.abs() > NORMALIZATION_TOL {
            return Err(Error::Numerical(format!(
                "posterior log-normalizer drifted to {check}"
            )));
        }
        Ok(())
    }

    pub fn sample_model<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        crate::env::sample_categorical(&self.weights(), rng)
    }
}

/// Exponents recomputed from the full history.
pub fn batch_exponents<C: ModelClass>(class: &C, hyper: &Hyperparams, history: &[RoundData<C::State>]) -> Vec<f64> {
    (0..class.len())
        .map(|m| {
            let mut acc = CompensatedSum::default();
            for round in history {
                acc.add(class.round_term(m, round, hyper));
            }
            acc.value()
        })
        .collect()
}

/// Normalized log-weights recomputed from the prior and the full history.
pub fn batch_log_weights<C: ModelClass>(class: &C, hyper: &Hyperparams, history: &[RoundData<C::State>]) -> Vec<f64> {
    let raw: Vec<f64> = class
        .log_prior()
        .iter()
        .zip(batch_exponents(class, hyper, history))
        .map(|(p, e)| p + e)
        .collect();
    let z = log_sum_exp(&raw);
    raw.iter().map(|r| r - z).collect()
}

/// Largest `|a_i − b_i|`, treating two `−∞` entries as equal.
pub fn max_log_deviation(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            if x == y {
                0.0
            } else {
                (x - y).abs()
            }
        })
        .fold(0.0, f64::max)
}
