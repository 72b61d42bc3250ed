//! Structural-quantity calculators: effective dimension, the empirical decoupling coefficient,
//! the simulation-lemma residual and the regret-bound evaluators.
//!
//! Decoupling estimates are lower bounds over a declared grid of posteriors, never the
//! supremum over all `p`. Reports carry `"estimate": "grid lower bound"` to say so.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergences::{kl_radius, omega, step_loss_unchecked, OmegaValue};
use crate::env::{state_action_occupancy, state_occupancy, Policy, TabularEnv};
use crate::generators::{Generator, GeneratorKind};
use crate::planner::{bellman_error_unchecked, plan};
use crate::posterior::{ModelClass, TabularClass};
use crate::{Error, Result};

/// Values below this are treated as exact zeros when comparing Bellman-error and loss sums.
pub const ZERO_TOL: f64 = 1e-12;
/// Relative bracket width at which the effective-dimension bisection stops.
pub const BISECTION_REL_TOL: f64 = 1e-8;
/// Eigenvalues below this (relative to the largest) count as zero.
const EIG_TOL: f64 = 1e-12;

/// Feature ensemble `χ(z₁, z₂)` for the effective dimension.
///
/// Each group is one `(p, z₁)` pair: a finite distribution over `z₂` with a feature vector
/// per atom. `Σ(p, z₁) = Σ_i w_i χ_i χ_iᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureEnsemble {
    pub dim: usize,
    pub groups: Vec<Vec<(f64, Vec<f64>)>>,
}

impl FeatureEnsemble {
    pub fn new(dim: usize, groups: Vec<Vec<(f64, Vec<f64>)>>) -> Result<Self> {
        let e = FeatureEnsemble { dim, groups };
        e.validate()?;
        Ok(e)
    }

    /// One group with uniform weights over `vectors`.
    pub fn uniform(vectors: Vec<Vec<f64>>) -> Result<Self> {
        let dim = vectors.first().map_or(0, Vec::len);
        let w = 1.0 / vectors.len().max(1) as f64;
        FeatureEnsemble::new(dim, vec![vectors.into_iter().map(|v| (w, v)).collect()])
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.groups.is_empty() {
            return Err(Error::InvalidArgument("empty feature ensemble".into()));
        }
        for g in &self.groups {
            if g.is_empty() {
                return Err(Error::InvalidArgument("empty group in feature ensemble".into()));
            }
            for (w, v) in g {
                if v.len() != self.dim {
                    return Err(Error::DimensionMismatch(format!(
                        "feature of length {} in a {}-dimensional ensemble",
                        v.len(),
                        self.dim
                    )));
                }
                if !(*w >= 0.0) || !w.is_finite() || v.iter().any(|x| !x.is_finite()) {
                    return Err(Error::InvalidArgument("non-finite or negative ensemble entry".into()));
                }
            }
        }
        Ok(())
    }

    /// Eigenvalues of every group's second-moment matrix.
    pub fn spectra(&self) -> Vec<Vec<f64>> {
        self.groups
            .iter()
            .map(|g| {
                let mut sigma = DMatrix::<f64>::zeros(self.dim, self.dim);
                for (w, v) in g {
                    let x = nalgebra::DVector::from_column_slice(v);
                    sigma += *w * &x * x.transpose();
                }
                let eig = SymmetricEigen::new(sigma).eigenvalues;
                let top = eig.iter().copied().fold(0.0, f64::max);
                eig.iter()
                    .map(|&mu| if mu <= EIG_TOL * top.max(1.0) { 0.0 } else { mu })
                    .collect()
            })
            .collect()
    }
}

fn k_of(spectra: &[Vec<f64>], lambda: f64) -> f64 {
    spectra
        .iter()
        .map(|s| s.iter().map(|&mu| if mu > 0.0 { mu / (mu + lambda) } else { 0.0 }).sum::<f64>())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveDimension {
    pub epsilon: f64,
    pub value: f64,
    /// Admissible `λ` attaining the value; `+∞` when every `λ` is admissible.
    pub lambda: f64,
}

/// `d_eff(χ, ε) = inf_{λ>0} { K(λ) : λ K(λ) ≤ ε² }`.
///
/// `λ ↦ λK(λ)` increases and `K` decreases, so the infimum sits at the largest admissible
/// `λ`, found by geometric bisection. At `ε = 0` the value is the `λ → 0⁺` limit, the largest
/// rank among the groups.
pub fn effective_dimension(ensemble: &FeatureEnsemble, epsilon: f64) -> Result<EffectiveDimension> {
    ensemble.validate()?;
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::InvalidArgument(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let spectra = ensemble.spectra();
    let target = epsilon * epsilon;
    let rank = spectra
        .iter()
        .map(|s| s.iter().filter(|&&mu| mu > 0.0).count())
        .max()
        .unwrap_or(0);
    if epsilon == 0.0 {
        return Ok(EffectiveDimension {
            epsilon,
            value: rank as f64,
            lambda: 0.0,
        });
    }
    // sup_λ λK(λ) is the largest trace; beyond it every λ is admissible and K → 0.
    let max_trace = spectra.iter().map(|s| s.iter().sum::<f64>()).fold(0.0, f64::max);
    if target >= max_trace {
        return Ok(EffectiveDimension {
            epsilon,
            value: 0.0,
            lambda: f64::INFINITY,
        });
    }
    let g = |lambda: f64| lambda * k_of(&spectra, lambda);
    let (mut lo, mut hi) = (1.0_f64, 1.0_f64);
    let mut guard = 0;
    while g(hi) <= target {
        hi *= 2.0;
        guard += 1;
        if guard > 2100 {
            return Err(Error::Numerical(format!("no upper bracket for lambda below {hi}")));
        }
    }
    while g(lo) > target {
        lo /= 2.0;
        guard += 1;
        if guard > 2100 || lo == 0.0 {
            return Err(Error::Numerical(format!("no lower bracket for lambda above {lo}")));
        }
    }
    if lo > hi {
        hi = lo * 2.0;
    }
    let mut iters = 0;
    while hi / lo - 1.0 > BISECTION_REL_TOL {
        let mid = (lo * hi).sqrt();
        if g(mid) <= target {
            lo = mid;
        } else {
            hi = mid;
        }
        iters += 1;
        if iters > 500 {
            return Err(Error::Numerical(format!(
                "effective-dimension bisection did not converge; bracket [{lo}, {hi}]"
            )));
        }
    }
    Ok(EffectiveDimension {
        epsilon,
        value: k_of(&spectra, lo),
        lambda: lo,
    })
}

/// Optimal-policy table of every class model, extended to all levels.
fn model_policies(class: &TabularClass) -> Vec<Policy> {
    class.plans().iter().map(|p| p.policy()).collect()
}

/// `Σ_{x,a} d(x,a) E_B(M, x, a)` at `level`, with `d` the occupancy of `π_M` in the true env.
fn own_policy_bellman(env: &TabularEnv, class: &TabularClass, own: &[Vec<Vec<Vec<f64>>>], m: usize, context: usize, level: usize) -> f64 {
    let k = env.dims().actions;
    let plan = class.plan(m);
    own[m][context][level]
        .iter()
        .enumerate()
        .filter(|(_, &w)| w != 0.0)
        .map(|(i, &w)| w * bellman_error_unchecked(plan, &env.model, context, level, i / k, i % k))
        .sum()
}

/// `(x^h, a^h)` occupancy under `π_gen(h, p)`, the mixture over the generator's draws.
fn generator_occupancy(env: &TabularEnv, class: &TabularClass, generator: &Generator, policies: &[Policy], p: &[f64], context: usize, level: usize) -> Result<Vec<f64>> {
    let d = env.dims();
    let mut occ = vec![0.0; d.states * d.actions];
    // Level-h action distribution of the V-type generators does not depend on the first draw.
    let level_dist = |s: usize| -> Vec<f64> {
        let mut dist = vec![0.0; d.actions];
        match generator.kind {
            GeneratorKind::QType => {}
            GeneratorKind::VTypeDouble => {
                for (m2, &w) in p.iter().enumerate() {
                    if w > 0.0 {
                        dist[class.plan(m2).action(context, level, s)] += w;
                    }
                }
            }
            _ => {
                let rule = generator.level_rule(class, None, context, level, s);
                rule.for_each(d.actions, |a, pa| dist[a] += pa);
            }
        }
        dist
    };
    let level_dists: Vec<Vec<f64>> = (0..d.states).map(level_dist).collect();
    for (m, &w) in p.iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        let states = &state_occupancy(&env.model, &policies[m], context, level)?[level];
        for (s, &ms) in states.iter().enumerate() {
            if ms == 0.0 {
                continue;
            }
            if generator.kind == GeneratorKind::QType {
                let a = class.plan(m).action(context, level, s);
                occ[s * d.actions + a] += w * ms;
            } else {
                for (a, &pa) in level_dists[s].iter().enumerate() {
                    occ[s * d.actions + a] += w * ms * pa;
                }
            }
        }
    }
    Ok(occ)
}

/// Both sides of the decoupling inequality at one `(p, x¹)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingPoint {
    pub grid_index: usize,
    pub context: usize,
    /// `E_{M∼p} E_{π_M} E_B(M, x^h, a^h)`.
    pub bellman: f64,
    /// `E_{M∼p} E_{π_gen(h,p)} ℓ^h(M, x^h, a^h)`.
    pub loss: f64,
    /// `((bellman − ε)₊)^{1/α} / loss`, `+∞` when the loss vanishes but the excess does not.
    pub coefficient: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub estimate: String,
    pub generator: GeneratorKind,
    /// 1-based level.
    pub level: usize,
    pub alpha: f64,
    pub epsilon: f64,
    pub coefficient: f64,
    /// Maximizing grid point (`None` when every point contributes 0).
    pub witness: Option<DecouplingPoint>,
    /// True when some grid point has zero loss but Bellman excess above `ε`.
    pub violated: bool,
    pub points: Vec<DecouplingPoint>,
}

/// Grid lower bound on the level-`level` (0-based) Hellinger decoupling coefficient.
pub fn empirical_decoupling(
    env: &TabularEnv,
    class: &TabularClass,
    generator: &Generator,
    level: usize,
    alpha: f64,
    epsilon: f64,
    p_grid: &[Vec<f64>],
) -> Result<DecouplingReport> {
    let d = env.dims();
    if level >= d.horizon {
        return Err(Error::InvalidArgument(format!("level {level} beyond horizon {}", d.horizon)));
    }
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1], got {alpha}")));
    }
    if !(epsilon >= 0.0) {
        return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
    }
    check_grid(p_grid, class.len())?;
    let policies = model_policies(class);
    let own = own_occupancies(env, &policies)?;
    let cells: Vec<(usize, usize)> = (0..p_grid.len())
        .flat_map(|g| (0..d.contexts).map(move |c| (g, c)))
        .collect();
    let points = cells
        .par_iter()
        .map(|&(g, c)| -> Result<DecouplingPoint> {
            let p = &p_grid[g];
            let bellman: f64 = p
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(m, &w)| w * own_policy_bellman(env, class, &own, m, c, level))
                .sum();
            let occ = generator_occupancy(env, class, generator, &policies, p, c, level)?;
            let loss: f64 = p
                .iter()
                .enumerate()
                .filter(|(_, &w)| w > 0.0)
                .map(|(m, &w)| {
                    w * occ
                        .iter()
                        .enumerate()
                        .filter(|(_, &o)| o > 0.0)
                        .map(|(i, &o)| o * step_loss_unchecked(class.model(m), &env.model, c, level, i / d.actions, i % d.actions))
                        .sum::<f64>()
                })
                .sum();
            let excess = bellman - epsilon;
            let coefficient = if excess <= ZERO_TOL {
                0.0
            } else if loss <= 0.0 {
                f64::INFINITY
            } else {
                excess.powf(1.0 / alpha) / loss
            };
            Ok(DecouplingPoint {
                grid_index: g,
                context: c,
                bellman,
                loss,
                coefficient,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let witness = points
        .iter()
        .filter(|pt| pt.coefficient > 0.0)
        .max_by(|a, b| a.coefficient.total_cmp(&b.coefficient))
        .copied();
    Ok(DecouplingReport {
        estimate: "grid lower bound".into(),
        generator: generator.kind,
        level: level + 1,
        alpha,
        epsilon,
        coefficient: witness.map_or(0.0, |w| w.coefficient),
        violated: points.iter().any(|pt| pt.coefficient.is_infinite()),
        witness,
        points,
    })
}

fn check_grid(p_grid: &[Vec<f64>], n: usize) -> Result<()> {
    if p_grid.is_empty() {
        return Err(Error::InvalidArgument("empty posterior grid".into()));
    }
    for p in p_grid {
        if p.len() != n {
            return Err(Error::DimensionMismatch(format!("grid distribution of length {} for {n} models", p.len())));
        }
        let sum: f64 = p.iter().sum();
        if p.iter().any(|w| !(*w >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidArgument("grid entries must be probability vectors".into()));
        }
    }
    Ok(())
}

/// `own[m][c][h]`: state-action occupancy of `π_M` in the true environment.
fn own_occupancies(env: &TabularEnv, policies: &[Policy]) -> Result<Vec<Vec<Vec<Vec<f64>>>>> {
    policies
        .par_iter()
        .map(|pol| {
            (0..env.dims().contexts)
                .map(|c| state_action_occupancy(&env.model, pol, c))
                .collect::<Result<Vec<_>>>()
        })
        .collect()
}

/// Point masses on every model plus the uniform distribution.
pub fn default_grid(n: usize) -> Vec<Vec<f64>> {
    let mut grid: Vec<Vec<f64>> = (0..n)
        .map(|m| {
            let mut p = vec![0.0; n];
            p[m] = 1.0;
            p
        })
        .collect();
    grid.push(vec![1.0 / n as f64; n]);
    grid
}

/// `dc(ε, α) = ((1/H) Σ_h dcʰ^{α/(1−α)})^{(1−α)/α}`.
pub fn dc_aggregate(per_level: &[f64], alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if per_level.is_empty() {
        return Err(Error::InvalidArgument("no per-level coefficients".into()));
    }
    let q = alpha / (1.0 - alpha);
    let mean = per_level.iter().map(|c| c.powf(q)).sum::<f64>() / per_level.len() as f64;
    Ok(mean.powf(1.0 / q))
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must lie in (0, 1) for the exponent α/(1−α), got {alpha}"
        )));
    }
    Ok(())
}

/// Residual of the simulation lemma for a distribution `p` over the class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationLemmaCheck {
    pub residual: f64,
    /// Context attaining the largest residual.
    pub context: usize,
    pub lhs: f64,
    pub rhs: f64,
}

/// `max_{x¹} |E_p[V⋆ − V^{π_M}] − E_p[Σ_h E_{π_M} E_B(M, ·) − ΔV_M]|`, both sides exact.
pub fn simulation_lemma_check(env: &TabularEnv, class: &TabularClass, p: &[f64]) -> Result<SimulationLemmaCheck> {
    check_grid(std::slice::from_ref(&p.to_vec()), class.len())?;
    if class.model(0).dims != env.dims() {
        return Err(Error::DimensionMismatch("class and environment dimensions differ".into()));
    }
    let star = plan(&env.model)?;
    let policies = model_policies(class);
    let own = own_occupancies(env, &policies)?;
    let d = env.dims();
    let mut worst = SimulationLemmaCheck {
        residual: 0.0,
        context: 0,
        lhs: 0.0,
        rhs: 0.0,
    };
    for c in 0..d.contexts {
        let v_star = star.root_value(c);
        let (mut lhs, mut rhs) = (0.0, 0.0);
        for (m, &w) in p.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            lhs += w * (v_star - env.exact_policy_value(&policies[m], c)?);
            let bellman: f64 = (0..d.horizon).map(|h| own_policy_bellman(env, class, &own, m, c, h)).sum();
            rhs += w * (bellman - (class.root_value(m, c) - v_star));
        }
        let r = (lhs - rhs).abs();
        if r > worst.residual || c == 0 {
            worst = SimulationLemmaCheck {
                residual: r,
                context: c,
                lhs,
                rhs,
            };
        }
    }
    Ok(worst)
}

/// `ω(3HT)/γ + 2γT`, the online-learning bound.
pub fn online_learning_rhs(omega_value: f64, gamma: f64, rounds: usize) -> Result<f64> {
    check_gamma(gamma)?;
    Ok(omega_value / gamma + 2.0 * gamma * rounds as f64)
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 0.0 && gamma <= 0.5) {
        return Err(Error::InvalidArgument(format!("gamma must lie in (0, 0.5], got {gamma}")));
    }
    Ok(())
}

/// Inputs to the main regret bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    pub omega: f64,
    pub gamma: f64,
    pub rounds: usize,
    pub horizon: usize,
    pub epsilon: f64,
    pub alpha: f64,
    pub dc: f64,
}

/// `ω/γ + 2γT + HT[ε + (1−α)(20Hγα)^{α/(1−α)} dc^{α/(1−α)}]`.
pub fn regret_bound_rhs(inp: &BoundInputs) -> Result<f64> {
    check_gamma(inp.gamma)?;
    check_alpha(inp.alpha)?;
    if !(inp.dc >= 0.0) || !(inp.epsilon >= 0.0) {
        return Err(Error::InvalidArgument("dc and epsilon must be >= 0".into()));
    }
    let q = inp.alpha / (1.0 - inp.alpha);
    let h = inp.horizon as f64;
    let t = inp.rounds as f64;
    let decoupling = (1.0 - inp.alpha) * (20.0 * h * inp.gamma * inp.alpha).powf(q) * inp.dc.powf(q);
    Ok(inp.omega / inp.gamma + 2.0 * inp.gamma * t + h * t * (inp.epsilon + decoupling))
}

/// `ω(3HT, p₀)` for a tabular class, radii from the KL-plus-reward ball.
pub fn class_omega(env: &TabularEnv, class: &TabularClass, rounds: usize) -> Result<OmegaValue> {
    let radii = class
        .models()
        .iter()
        .map(|m| kl_radius(m, &env.model))
        .collect::<Result<Vec<_>>>()?;
    omega(&radii, class.log_prior(), 3.0 * env.dims().horizon as f64 * rounds as f64)
}

/// Analytic decoupling ceiling at `α = 0.5` for a tabular instance.
///
/// Witness features: `ψʰ(M, x¹)` is the true-environment state distribution at level `h`
/// under `π_M`, and `u(M′, x) = E_B(M′, x, π_{M′}(x))`, which factor the averaged Bellman error
/// exactly (so `κ = 1`). `d_eff` is evaluated over the same posterior grid as the estimator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecouplingCeiling {
    pub level: usize,
    pub kappa: f64,
    /// `max ‖u(M, x¹)‖₂` over models and contexts.
    pub b1: f64,
    pub effective_dimension: f64,
    /// `K` for uniform exploration, `d(φ)` for the design generator.
    pub action_factor: f64,
    pub ceiling: f64,
}

pub fn witness_ensemble(env: &TabularEnv, class: &TabularClass, level: usize, p_grid: &[Vec<f64>]) -> Result<(FeatureEnsemble, f64)> {
    let d = env.dims();
    check_grid(p_grid, class.len())?;
    let policies = model_policies(class);
    // psi[m][c] over states.
    let psi: Vec<Vec<Vec<f64>>> = policies
        .iter()
        .map(|pol| {
            (0..d.contexts)
                .map(|c| state_occupancy(&env.model, pol, c, level).map(|mut o| o.swap_remove(level)))
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    let mut b1: f64 = 0.0;
    for m in 0..class.len() {
        let plan = class.plan(m);
        for c in 0..d.contexts {
            let u: f64 = (0..d.states)
                .map(|s| bellman_error_unchecked(plan, &env.model, c, level, s, plan.action(c, level, s)).powi(2))
                .sum();
            b1 = b1.max(u.sqrt());
        }
    }
    let groups = p_grid
        .iter()
        .flat_map(|p| {
            let psi = &psi;
            (0..d.contexts).map(move |c| {
                p.iter()
                    .enumerate()
                    .filter(|(_, &w)| w > 0.0)
                    .map(|(m, &w)| (w, psi[m][c].clone()))
                    .collect::<Vec<_>>()
            })
        })
        .collect();
    Ok((FeatureEnsemble::new(d.states, groups)?, b1))
}

/// `4K/κ² · d_eff(ψʰ, κε/B₁)`, with `d(φ)` in place of `K` for the design generator.
pub fn decoupling_ceiling(env: &TabularEnv, class: &TabularClass, generator: &Generator, level: usize, epsilon: f64, p_grid: &[Vec<f64>]) -> Result<DecouplingCeiling> {
    let action_factor = match generator.kind {
        GeneratorKind::VTypeUniform => env.dims().actions as f64,
        GeneratorKind::VTypeDesign => generator.design().map_or(0, |t| t.dim()) as f64,
        other => {
            return Err(Error::Unsupported(format!(
                "no finite-action witness ceiling is implemented for the {} generator",
                other.label()
            )))
        }
    };
    let kappa = 1.0;
    let (ensemble, b1) = witness_ensemble(env, class, level, p_grid)?;
    let eps_arg = if b1 > 0.0 { kappa * epsilon / b1 } else { f64::INFINITY };
    let deff = if eps_arg.is_infinite() {
        0.0
    } else {
        effective_dimension(&ensemble, eps_arg)?.value
    };
    Ok(DecouplingCeiling {
        level: level + 1,
        kappa,
        b1,
        effective_dimension: deff,
        action_factor,
        ceiling: 4.0 * action_factor * deff / (kappa * kappa),
    })
}

/// Witness-rank ceiling for a KNR instance at `κ = σ`, using the visited feature ensemble.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KnrDecouplingReport {
    pub kappa: f64,
    pub epsilon: f64,
    pub effective_dimension: f64,
    pub actions: usize,
    pub ceiling: f64,
}

pub fn knr_decoupling_report(visited: Vec<Vec<f64>>, noise_std: f64, actions: usize, epsilon: f64) -> Result<KnrDecouplingReport> {
    let kappa = noise_std;
    let deff = effective_dimension(&FeatureEnsemble::uniform(visited)?, kappa * epsilon)?.value;
    Ok(KnrDecouplingReport {
        kappa,
        epsilon,
        effective_dimension: deff,
        actions,
        ceiling: 4.0 * actions as f64 * deff / (kappa * kappa),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_basis_at_most_three() {
        let basis: Vec<Vec<f64>> = (0..3).map(|i| (0..3).map(|j| f64::from(u8::from(i == j))).collect()).collect();
        let ens = FeatureEnsemble::uniform(basis).unwrap();
        for eps in [0.0, 1e-3, 0.1, 0.5, 1.0, 10.0] {
            assert!(effective_dimension(&ens, eps).unwrap().value <= 3.0 + 1e-12);
        }
        assert_eq!(effective_dimension(&ens, 0.0).unwrap().value, 3.0);
    }

    #[test]
    fn single_vector_closed_form() {
        let v = vec![3.0, 4.0];
        let ens = FeatureEnsemble::uniform(vec![v]).unwrap();
        let eps = 1.0;
        let r = effective_dimension(&ens, eps).unwrap();
        // λ·25/(25+λ) = 1 ⇒ λ = 25/24, K = 25/(25 + 25/24) = 24/25.
        assert!((r.value - 24.0 / 25.0).abs() < 1e-7, "{r:?}");
        assert!(r.lambda * r.value <= eps * eps * (1.0 + 1e-12));
    }

    #[test]
    fn huge_epsilon_gives_zero() {
        let ens = FeatureEnsemble::uniform(vec![vec![1.0, 0.0], vec![0.0, 2.0]]).unwrap();
        assert_eq!(effective_dimension(&ens, 100.0).unwrap().value, 0.0);
    }

    #[test]
    fn dc_aggregate_half_is_mean() {
        assert!((dc_aggregate(&[1.0, 3.0], 0.5).unwrap() - 2.0).abs() < 1e-15);
        assert!(dc_aggregate(&[1.0], 1.0).is_err());
    }

    #[test]
    fn regret_bound_reduces_without_decoupling() {
        let inp = BoundInputs {
            omega: 2.0,
            gamma: 0.1,
            rounds: 100,
            horizon: 2,
            epsilon: 0.0,
            alpha: 0.5,
            dc: 0.0,
        };
        assert!((regret_bound_rhs(&inp).unwrap() - 40.0).abs() < 1e-12);
        assert!(regret_bound_rhs(&BoundInputs { gamma: 0.6, ..inp }).is_err());
    }
}
