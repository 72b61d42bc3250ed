//! Probability distances and the per-step losses built on them.
//!
//! Squared Hellinger distance uses the unnormalized convention
//! `D_H(P, Q)² = Σ (√p − √q)²`, so it lies in `[0, 2]`. KL divergence reports
//! `f64::INFINITY` when `Q` misses part of the support of `P`.

use serde::{Deserialize, Serialize};

use crate::env::TabularModel;
use crate::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-12;

/// A probability vector over a finite support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDist(Vec<f64>);

impl DiscreteDist {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidArgument("empty distribution".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (probs.iter().sum::<f64>() - 1.0).abs() > SIMPLEX_TOL
        {
            return Err(Error::InvalidArgument(format!(
                "{probs:?} is not a probability vector"
            )));
        }
        Ok(DiscreteDist(probs))
    }

    pub fn bernoulli(p: f64) -> Result<Self> {
        Self::new(vec![1.0 - p, p])
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }
}

/// `N(mean, std² I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianDist {
    pub mean: Vec<f64>,
    pub std: f64,
}

impl GaussianDist {
    pub fn new(mean: Vec<f64>, std: f64) -> Result<Self> {
        if !(std > 0.0) || mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "invalid isotropic Gaussian (std = {std})"
            )));
        }
        Ok(GaussianDist { mean, std })
    }

    fn mean_gap_sq(&self, other: &Self) -> Result<f64> {
        if self.mean.len() != other.mean.len() {
            return Err(Error::DimensionMismatch(format!(
                "Gaussians in dimensions {} and {}",
                self.mean.len(),
                other.mean.len()
            )));
        }
        if self.std != other.std {
            return Err(Error::Unsupported(
                "closed forms require a shared isotropic std".into(),
            ));
        }
        Ok(self
            .mean
            .iter()
            .zip(&other.mean)
            .map(|(a, b)| (a - b).powi(2))
            .sum())
    }
}

pub trait Divergence {
    /// `D_H(P, Q)²` in `[0, 2]`.
    fn hellinger_sq(&self, other: &Self) -> Result<f64>;
    /// `KL(P ‖ Q)`, possibly `+∞`.
    fn kl(&self, other: &Self) -> Result<f64>;
    fn tv(&self, other: &Self) -> Result<f64>;
}

impl Divergence for DiscreteDist {
    fn hellinger_sq(&self, other: &Self) -> Result<f64> {
        same_support(&self.0, &other.0)?;
        Ok(hellinger_sq(&self.0, &other.0))
    }

    fn kl(&self, other: &Self) -> Result<f64> {
        same_support(&self.0, &other.0)?;
        Ok(kl(&self.0, &other.0))
    }

    fn tv(&self, other: &Self) -> Result<f64> {
        same_support(&self.0, &other.0)?;
        Ok(tv(&self.0, &other.0))
    }
}

impl Divergence for GaussianDist {
    fn hellinger_sq(&self, other: &Self) -> Result<f64> {
        let gap = self.mean_gap_sq(other)?;
        Ok(gaussian_hellinger_sq(gap, self.std))
    }

    fn kl(&self, other: &Self) -> Result<f64> {
        let gap = self.mean_gap_sq(other)?;
        Ok(gaussian_kl(gap, self.std))
    }

    fn tv(&self, other: &Self) -> Result<f64> {
        let gap = self.mean_gap_sq(other)?;
        Ok(statrs::function::erf::erf(gap.sqrt() / (2.0 * std::f64::consts::SQRT_2 * self.std)))
    }
}

fn same_support(p: &[f64], q: &[f64]) -> Result<()> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch(format!(
            "supports of size {} and {}",
            p.len(),
            q.len()
        )));
    }
    Ok(())
}

/// `Σ (√p − √q)²` on equal-length slices.
pub fn hellinger_sq(p: &[f64], q: &[f64]) -> f64 {
    p.iter()
        .zip(q)
        .map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2))
        .sum::<f64>()
        .clamp(0.0, 2.0)
}

/// `Σ p ln(p / q)`, `+∞` if some `q = 0 < p`.
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut total = 0.0;
    for (a, b) in p.iter().zip(q) {
        if *a == 0.0 {
            continue;
        }
        if *b == 0.0 {
            return f64::INFINITY;
        }
        total += a * (a.ln() - b.ln());
    }
    total.max(0.0)
}

pub fn tv(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// `2 (1 − exp(−‖Δμ‖² / (8σ²)))` for isotropic Gaussians with mean gap `‖Δμ‖²`.
pub fn gaussian_hellinger_sq(mean_gap_sq: f64, std: f64) -> f64 {
    -2.0 * (-mean_gap_sq / (8.0 * std * std)).exp_m1()
}

/// `‖Δμ‖² / (2σ²)`.
pub fn gaussian_kl(mean_gap_sq: f64, std: f64) -> f64 {
    mean_gap_sq / (2.0 * std * std)
}

/// `ℓʰ(M, x, a) = D_H(P_M, P⋆)² + (R_M − R⋆)²`.
pub fn step_loss(model: &TabularModel, truth: &TabularModel, context: usize, level: usize, state: usize, action: usize) -> Result<f64> {
    check_pair(model, truth, context, level, state, action)?;
    Ok(step_loss_unchecked(model, truth, context, level, state, action))
}

pub(crate) fn step_loss_unchecked(model: &TabularModel, truth: &TabularModel, context: usize, level: usize, state: usize, action: usize) -> f64 {
    let h = hellinger_sq(
        model.transition_row(context, level, state, action),
        truth.transition_row(context, level, state, action),
    );
    let gap = model.reward(context, level, state, action) - truth.reward(context, level, state, action);
    h + gap * gap
}

/// `ℓ̃ʰ(M, x, a) = KL(P⋆ ‖ P_M) + (R_M − R⋆)²`, possibly `+∞`.
pub fn kl_step_loss(model: &TabularModel, truth: &TabularModel, context: usize, level: usize, state: usize, action: usize) -> Result<f64> {
    check_pair(model, truth, context, level, state, action)?;
    let k = kl(
        truth.transition_row(context, level, state, action),
        model.transition_row(context, level, state, action),
    );
    let gap = model.reward(context, level, state, action) - truth.reward(context, level, state, action);
    Ok(k + gap * gap)
}

fn check_pair(model: &TabularModel, truth: &TabularModel, context: usize, level: usize, state: usize, action: usize) -> Result<()> {
    if model.dims != truth.dims {
        return Err(Error::DimensionMismatch(format!(
            "model {:?} vs environment {:?}",
            model.dims, truth.dims
        )));
    }
    crate::env::check_index(&truth.dims, context, level, state, action)
}

/// `sup` of `ℓ̃ʰ` over every context, level, state and action (unreachable states included).
pub fn kl_radius(model: &TabularModel, truth: &TabularModel) -> Result<f64> {
    let d = truth.dims;
    let mut worst: f64 = 0.0;
    for c in 0..d.contexts {
        for h in 0..d.horizon {
            for s in 0..d.states {
                for a in 0..d.actions {
                    worst = worst.max(kl_step_loss(model, truth, c, h, s, a)?);
                }
            }
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaValue {
    pub value: f64,
    /// Minimizing radius `ε` (0 means the `ε → 0⁺` limit).
    pub epsilon: f64,
    /// `ln p₀(𝓜(ε))` at the minimizer.
    pub log_mass: f64,
}

/// `ω(α, p₀) = inf_{ε>0} [α ε − ln p₀(𝓜(ε))]` with `𝓜(ε) = {M : radius(M) ≤ ε²}`.
///
/// `radii[m]` is the worst-case `ℓ̃` of model `m`. The objective is constant in mass between
/// consecutive radii and increasing in `ε`, so the infimum is attained at `ε² = radius` for
/// one of the finite radii, or in the `ε → 0⁺` limit when a radius is 0.
pub fn omega(radii: &[f64], log_prior: &[f64], alpha: f64) -> Result<OmegaValue> {
    if radii.is_empty() {
        return Err(Error::InvalidArgument("omega of an empty model class".into()));
    }
    if radii.len() != log_prior.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} radii for {} prior weights",
            radii.len(),
            log_prior.len()
        )));
    }
    if !(alpha >= 0.0) {
        return Err(Error::InvalidArgument(format!("alpha must be >= 0, got {alpha}")));
    }
    let mut order: Vec<usize> = (0..radii.len()).filter(|&m| radii[m].is_finite()).collect();
    if order.is_empty() {
        return Err(Error::InvalidArgument(
            "every model has an infinite KL radius; 𝓜(ε) is empty for all ε".into(),
        ));
    }
    order.sort_by(|&a, &b| radii[a].total_cmp(&radii[b]));
    let mut best: Option<OmegaValue> = None;
    let mut included: Vec<f64> = Vec::with_capacity(order.len());
    let mut i = 0;
    while i < order.len() {
        let r = radii[order[i]];
        while i < order.len() && radii[order[i]] == r {
            included.push(log_prior[order[i]]);
            i += 1;
        }
        let log_mass = log_sum_exp(&included);
        let eps = r.max(0.0).sqrt();
        let value = alpha * eps - log_mass;
        if best.is_none_or(|b| value < b.value) {
            best = Some(OmegaValue {
                value,
                epsilon: eps,
                log_mass,
            });
        }
    }
    Ok(best.expect("at least one finite radius"))
}

/// `ln Σ exp(x_i)`, `−∞` for an empty or all-`−∞` input.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if m == f64::INFINITY {
        return f64::INFINITY;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::Dims;

    #[test]
    fn identical_distributions() {
        let p = DiscreteDist::new(vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(p.hellinger_sq(&p).unwrap(), 0.0);
        assert_eq!(p.kl(&p).unwrap(), 0.0);
        assert_eq!(p.tv(&p).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_bernoullis() {
        let one = DiscreteDist::bernoulli(1.0).unwrap();
        let zero = DiscreteDist::bernoulli(0.0).unwrap();
        assert_eq!(one.hellinger_sq(&zero).unwrap(), 2.0);
        assert_eq!(one.tv(&zero).unwrap(), 1.0);
        assert_eq!(one.kl(&zero).unwrap(), f64::INFINITY);
    }

    #[test]
    fn bernoulli_kl_value() {
        let p = DiscreteDist::bernoulli(0.5).unwrap();
        let q = DiscreteDist::bernoulli(0.25).unwrap();
        let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
        assert!((p.kl(&q).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.143841).abs() < 1e-6);
        assert!(p.kl(&q).unwrap() != q.kl(&p).unwrap());
    }

    #[test]
    fn gaussian_closed_forms() {
        let a = GaussianDist::new(vec![0.0], 1.0).unwrap();
        let b = GaussianDist::new(vec![1.0], 1.0).unwrap();
        let h = a.hellinger_sq(&b).unwrap();
        assert!((h - 2.0 * (1.0 - (-0.125f64).exp())).abs() < 1e-15);
        assert!((h - 0.2350).abs() < 1e-4);
        let c = GaussianDist::new(vec![0.2, 0.0], 1.0).unwrap();
        let d = GaussianDist::new(vec![0.0, 0.0], 1.0).unwrap();
        assert!((c.kl(&d).unwrap() - 0.02).abs() < 1e-15);
    }

    #[test]
    fn mismatched_supports_fail() {
        let p = DiscreteDist::new(vec![0.5, 0.5]).unwrap();
        let q = DiscreteDist::new(vec![1.0]).unwrap();
        assert!(p.hellinger_sq(&q).is_err());
        assert!(p.kl(&q).is_err());
        assert!(p.tv(&q).is_err());
        let g = GaussianDist::new(vec![0.0], 1.0).unwrap();
        let g2 = GaussianDist::new(vec![0.0, 1.0], 1.0).unwrap();
        assert!(g.kl(&g2).is_err());
    }

    fn pair() -> (TabularModel, TabularModel) {
        let dims = Dims::new(1, 2, 1, 1).unwrap();
        let truth = TabularModel::new(dims, vec![1.0, 0.0, 0.5, 0.5], vec![0.4, 0.1]).unwrap();
        let model = TabularModel::new(dims, vec![0.0, 1.0, 0.5, 0.5], vec![0.4, 0.3]).unwrap();
        (model, truth)
    }

    #[test]
    fn step_losses() {
        let (model, truth) = pair();
        assert_eq!(step_loss(&truth, &truth, 0, 0, 0, 0).unwrap(), 0.0);
        assert_eq!(kl_step_loss(&truth, &truth, 0, 0, 0, 0).unwrap(), 0.0);
        assert_eq!(step_loss(&model, &truth, 0, 0, 0, 0).unwrap(), 2.0);
        assert_eq!(kl_step_loss(&model, &truth, 0, 0, 0, 0).unwrap(), f64::INFINITY);
        assert!((step_loss(&model, &truth, 0, 0, 1, 0).unwrap() - 0.04).abs() < 1e-15);
        assert!(step_loss(&model, &truth, 0, 1, 0, 0).is_err());
    }

    #[test]
    fn omega_singleton_and_infinite() {
        let v = omega(&[0.0], &[0.0], 7.0).unwrap();
        assert_eq!(v.value, 0.0);
        let v = omega(&[0.0, f64::INFINITY], &[-(2f64.ln()), -(2f64.ln())], 1.0).unwrap();
        assert!((v.value - 2f64.ln()).abs() < 1e-15);
        assert!(omega(&[], &[], 1.0).is_err());
    }

    #[test]
    fn omega_prefers_cheap_ball() {
        // Uniform prior over 4 models; three lie in a tiny ball.
        let lp = vec![-(4f64.ln()); 4];
        let v = omega(&[0.0, 1e-6, 1e-6, 4.0], &lp, 10.0).unwrap();
        assert!((v.value - (10.0 * 1e-3 - (0.75f64).ln())).abs() < 1e-12);
        assert!(v.value <= 4f64.ln());
    }
}
