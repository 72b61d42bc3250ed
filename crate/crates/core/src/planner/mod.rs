//! Exact planning inside a tabular model and model-based Bellman errors.

pub mod shooting;

use crate::env::{check_index, Dims, Policy, TabularModel, START_STATE};
use crate::{Error, Result};

pub use shooting::{knr_plan, ShootingPlanner};

const VALUE_TOL: f64 = 1e-9;

/// Optimal `Q`, `V` and greedy policy of one model.
///
/// Ties in the argmax go to the lowest action index.
#[derive(Debug, Clone, PartialEq)]
pub struct PlanResult {
    pub dims: Dims,
    /// `[context, level, state, action]`.
    pub q: Vec<f64>,
    /// `[context, level, state]` for levels `0..=horizon`; level `horizon` is identically 0.
    pub v: Vec<f64>,
    /// `[context, level, state]`.
    pub greedy: Vec<usize>,
}

impl PlanResult {
    #[inline]
    pub fn q(&self, context: usize, level: usize, state: usize, action: usize) -> f64 {
        self.q[self.dims.sa_index(context, level, state, action)]
    }

    /// `V^{level}_M(state)`; `level == horizon` returns 0.
    #[inline]
    pub fn v(&self, context: usize, level: usize, state: usize) -> f64 {
        self.v[(context * (self.dims.horizon + 1) + level) * self.dims.states + state]
    }

    #[inline]
    pub fn action(&self, context: usize, level: usize, state: usize) -> usize {
        self.greedy[self.dims.state_index(context, level, state)]
    }

    /// `V_M(x¹)` for a context.
    pub fn root_value(&self, context: usize) -> f64 {
        self.v(context, 0, START_STATE)
    }

    pub fn policy(&self) -> Policy {
        Policy::from_table(self.dims, &self.greedy)
    }
}

/// Finite-horizon value iteration backward from `Q^{H+1} ≡ 0`.
pub fn plan(model: &TabularModel) -> Result<PlanResult> {
    model.validate()?;
    Ok(plan_unchecked(model))
}

pub(crate) fn plan_unchecked(model: &TabularModel) -> PlanResult {
    let d = model.dims;
    let mut q = vec![0.0; d.sa_cells()];
    let mut v = vec![0.0; d.contexts * (d.horizon + 1) * d.states];
    let mut greedy = vec![0; d.state_cells()];
    let v_index = |c: usize, h: usize, s: usize| (c * (d.horizon + 1) + h) * d.states + s;
    for c in 0..d.contexts {
        for h in (0..d.horizon).rev() {
            for s in 0..d.states {
                let mut best = f64::NEG_INFINITY;
                let mut best_a = 0;
                for a in 0..d.actions {
                    let next: f64 = model
                        .transition_row(c, h, s, a)
                        .iter()
                        .enumerate()
                        .map(|(n, p)| p * v[v_index(c, h + 1, n)])
                        .sum();
                    let value = model.reward(c, h, s, a) + next;
                    q[d.sa_index(c, h, s, a)] = value;
                    if value > best {
                        best = value;
                        best_a = a;
                    }
                }
                v[v_index(c, h, s)] = best;
                greedy[d.state_index(c, h, s)] = best_a;
            }
        }
    }
    PlanResult { dims: d, q, v, greedy }
}

/// Checks `0 ≤ V_M ≤ 1` everywhere.
pub fn check_value_range(plan: &PlanResult) -> Result<()> {
    match plan
        .v
        .iter()
        .find(|v| !(-VALUE_TOL..=1.0 + VALUE_TOL).contains(*v))
    {
        Some(v) => Err(Error::Numerical(format!("model value {v} outside [0,1]"))),
        None => Ok(()),
    }
}

/// `𝓔_B(M, x, a) = Qʰ_M(x, a) − (P⋆ʰ[r + V_M^{h+1}])(x, a)`.
pub fn bellman_error(plan: &PlanResult, truth: &TabularModel, context: usize, level: usize, state: usize, action: usize) -> Result<f64> {
    if plan.dims != truth.dims {
        return Err(Error::DimensionMismatch(format!(
            "plan {:?} vs environment {:?}",
            plan.dims, truth.dims
        )));
    }
    check_index(&truth.dims, context, level, state, action)?;
    Ok(bellman_error_unchecked(plan, truth, context, level, state, action))
}

pub(crate) fn bellman_error_unchecked(plan: &PlanResult, truth: &TabularModel, context: usize, level: usize, state: usize, action: usize) -> f64 {
    let backup: f64 = truth
        .transition_row(context, level, state, action)
        .iter()
        .enumerate()
        .map(|(n, p)| p * plan.v(context, level + 1, n))
        .sum();
    plan.q(context, level, state, action) - (truth.reward(context, level, state, action) + backup)
}
