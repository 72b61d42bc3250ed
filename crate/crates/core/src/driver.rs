//! The online loop and its regret ledger.
//!
//! Each round observes a context, draws `h_t` uniformly, generates `π_t = π_gen(h_t, p_t)`
//! from the posterior built on rounds `1..t−1`, plays it for `h_t` levels and adds the
//! level-`h_t` tuple to the data set. The ledger records exact posterior expectations at the
//! realized context and tuple.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::divergences::{gaussian_hellinger_sq, step_loss_unchecked};
use crate::env::knr::KnrWeight;
use crate::env::{TabularEnv, Trajectory};
use crate::generators::{draw_models, GeneratedPolicy, Generator, GeneratorKind};
use crate::planner::shooting::ShootingPolicy;
use crate::planner::{plan, PlanResult};
use crate::posterior::{Hyperparams, KnrClass, LogPosterior, ModelClass, RoundData, TabularClass, TransitionRecord};
use crate::{seeded_rng, Error, Result};

/// Tolerance on the drift corrected by a periodic from-scratch posterior recomputation.
pub const RESYNC_DRIFT_TOL: f64 = 1e-8;
/// Exact per-round regret may dip below 0 by rounding only.
pub const REGRET_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub hyper: Hyperparams,
    pub rounds: usize,
    /// Q-type only: play full episodes and feed all `H` tuples to the likelihood.
    #[serde(default)]
    pub full_horizon: bool,
    #[serde(default = "default_resync")]
    pub resync_every: usize,
}

fn default_resync() -> usize {
    1000
}

impl RunSettings {
    pub fn new(hyper: Hyperparams, rounds: usize) -> Self {
        RunSettings {
            hyper,
            rounds,
            full_horizon: false,
            resync_every: default_resync(),
        }
    }

    fn validate(&self, kind: GeneratorKind) -> Result<()> {
        self.hyper.validate()?;
        if self.rounds == 0 {
            return Err(Error::InvalidArgument("T must be >= 1".into()));
        }
        if self.full_horizon && kind != GeneratorKind::QType {
            return Err(Error::InvalidArgument(
                "full-horizon data collection is only valid for the Q-type generator".into(),
            ));
        }
        Ok(())
    }
}

/// One ledger row. `stop_level` is 1-based here, matching the CSV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundEntry {
    pub t: usize,
    pub h_t: usize,
    pub context: usize,
    /// `V⋆(x_t¹) − V^{π_{M_t}}(x_t¹)` for the model `M_t` drawn this round.
    pub realized_regret: f64,
    /// `E_{x¹∼𝒟}[V⋆(x¹) − V^{π_{M_t}}(x¹)]`.
    pub expected_context_regret: f64,
    /// `V⋆(x_t¹) − V^{π_t}(x_t¹)` for the played policy, exploratory level included.
    pub exploration_regret: f64,
    /// `E_{M∼p_t} V_M(x_t¹)`.
    pub expected_model_value: f64,
    /// `E_{M∼p_t} ΔV_M(x_t¹)`.
    pub optimism_term: f64,
    /// `E_{M∼p_t} ℓ^{h_t}(M, x_t^{h_t}, a_t^{h_t})`.
    pub step_loss: f64,
    pub posterior_entropy: f64,
    /// `p_t(M⋆)`; NaN when the class declares no true model.
    pub posterior_mass_true: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RegretLedger {
    pub entries: Vec<RoundEntry>,
}

impl RegretLedger {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn cumulative_realized_regret(&self) -> f64 {
        self.entries.iter().map(|e| e.realized_regret).sum()
    }

    pub fn cumulative_expected_context_regret(&self) -> f64 {
        self.entries.iter().map(|e| e.expected_context_regret).sum()
    }

    /// `Σ_t [V⋆(x_t¹) − E_{M∼p_t} V_M(x_t¹)]`.
    pub fn model_regret(&self) -> f64 {
        -self.entries.iter().map(|e| e.optimism_term).sum::<f64>()
    }

    /// `Σ_t E_{M∼p_t}[0.3 η γ⁻¹ ℓ^{h_t} − ΔV_M(x_t¹)]`.
    pub fn online_learning_lhs(&self, hyper: &Hyperparams) -> f64 {
        let scale = 0.3 * hyper.eta / hyper.gamma;
        self.entries
            .iter()
            .map(|e| scale * e.step_loss - e.optimism_term)
            .sum()
    }

    /// Mean realized regret over 1-based rounds `first..=last`.
    pub fn mean_regret(&self, first: usize, last: usize) -> f64 {
        let slice = &self.entries[first - 1..last];
        slice.iter().map(|e| e.realized_regret).sum::<f64>() / slice.len() as f64
    }

    pub fn cumulative_series(&self) -> Vec<f64> {
        self.entries
            .iter()
            .scan(0.0, |acc, e| {
                *acc += e.realized_regret;
                Some(*acc)
            })
            .collect()
    }
}

/// Posterior weights `p_t` and model values `V_M(x_t¹)` used in round `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorTraceRow {
    pub t: usize,
    pub h_t: usize,
    pub weights: Vec<f64>,
    pub root_values: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub policies: Vec<GeneratedPolicy>,
    pub ledger: RegretLedger,
    pub trace: Vec<PosteriorTraceRow>,
    pub history: Vec<RoundData<usize>>,
    pub final_posterior: LogPosterior,
    /// Largest log-weight drift corrected by periodic recomputation.
    pub max_resync_drift: f64,
}

impl RunOutput {
    pub fn final_mass_true(&self, class: &impl ModelClass) -> f64 {
        class
            .true_index()
            .map_or(f64::NAN, |t| self.final_posterior.weight(t))
    }
}

/// Runs the online loop on a tabular or linear-mixture (materialized) environment.
pub fn run_mops<R: Rng + ?Sized>(
    env: &TabularEnv,
    class: &TabularClass,
    generator: &Generator,
    settings: &RunSettings,
    rng: &mut R,
) -> Result<RunOutput> {
    settings.validate(generator.kind)?;
    env.validate()?;
    if class.model(0).dims != env.dims() {
        return Err(Error::DimensionMismatch("class and environment dimensions differ".into()));
    }
    let dims = env.dims();
    let star: PlanResult = plan(&env.model)?;
    // model_regret[m][c] = V⋆(c) − V^{π_M}(c), exact.
    let model_regret = class
        .plans()
        .iter()
        .map(|p| {
            let pol = p.policy();
            (0..dims.contexts)
                .map(|c| Ok(star.root_value(c) - env.exact_policy_value(&pol, c)?))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let mut posterior = LogPosterior::from_class(class, settings.hyper)?;
    let mut ledger = RegretLedger::default();
    let mut trace = Vec::with_capacity(settings.rounds);
    let mut policies = Vec::with_capacity(settings.rounds);
    let mut history: Vec<RoundData<usize>> = Vec::with_capacity(settings.rounds);
    let mut max_drift: f64 = 0.0;

    for t in 1..=settings.rounds {
        let context = env.sample_context(rng);
        let h_t = rng.random_range(0..dims.horizon);
        let generated = generator.generate(class, h_t, &posterior, rng)?;
        let steps = if settings.full_horizon { dims.horizon } else { h_t + 1 };
        let traj = env.rollout(&generated.policy, context, steps, rng)?;

        let v_star = star.root_value(context);
        let regret = model_regret[generated.model][context];
        let exploration_regret = v_star - env.exact_policy_value(&generated.policy, context)?;
        for r in [regret, exploration_regret] {
            if !(-REGRET_SLACK..=1.0 + REGRET_SLACK).contains(&r) {
                return Err(Error::Numerical(format!("round {t}: regret {r} outside [0, 1]")));
            }
        }
        let expected_context_regret = env
            .context_dist
            .iter()
            .zip(&model_regret[generated.model])
            .map(|(w, r)| w * r)
            .sum();
        let expected_model_value = posterior.expectation(|m| class.root_value(m, context));
        let probe = &traj.steps[h_t];
        let step_loss = posterior.expectation(|m| {
            step_loss_unchecked(class.model(m), &env.model, context, h_t, probe.state, probe.action)
        });
        ledger.entries.push(RoundEntry {
            t,
            h_t: h_t + 1,
            context,
            realized_regret: regret,
            expected_context_regret,
            exploration_regret,
            expected_model_value,
            optimism_term: expected_model_value - v_star,
            step_loss,
            posterior_entropy: posterior.entropy(),
            posterior_mass_true: class.true_index().map_or(f64::NAN, |i| posterior.weight(i)),
        });
        trace.push(PosteriorTraceRow {
            t,
            h_t: h_t + 1,
            weights: posterior.weights(),
            root_values: (0..class.len()).map(|m| class.root_value(m, context)).collect(),
        });

        let round = RoundData {
            context,
            records: collect_records(&traj, t, h_t, settings.full_horizon),
        };
        posterior.update(class, &round)?;
        history.push(round);
        if settings.resync_every > 0 && t % settings.resync_every == 0 {
            let drift = posterior.resync(class, &history)?;
            if drift > RESYNC_DRIFT_TOL {
                return Err(Error::Numerical(format!(
                    "posterior drifted by {drift} before recomputation at round {t}"
                )));
            }
            max_drift = max_drift.max(drift);
        }
        policies.push(generated);
    }

    Ok(RunOutput {
        policies,
        ledger,
        trace,
        history,
        final_posterior: posterior,
        max_resync_drift: max_drift,
    })
}

fn collect_records<S: Clone>(traj: &Trajectory<S>, round: usize, h_t: usize, full: bool) -> Vec<TransitionRecord<S>> {
    let levels: Vec<usize> = if full {
        (0..traj.steps.len()).collect()
    } else {
        vec![h_t]
    };
    levels
        .into_iter()
        .map(|level| {
            let step = &traj.steps[level];
            TransitionRecord {
                round,
                stop_level: h_t,
                context: traj.context,
                level,
                state: step.state.clone(),
                action: step.action,
                reward: step.reward,
                next_state: step.next_state.clone(),
            }
        })
        .collect()
}

/// Exact value of the uniform mixture over `policies`, averaged over the context distribution.
pub fn online_to_batch(policies: &[GeneratedPolicy], env: &TabularEnv) -> Result<f64> {
    if policies.is_empty() {
        return Err(Error::InvalidArgument("online-to-batch over no policies".into()));
    }
    let mut total = 0.0;
    for p in policies {
        for (c, w) in env.context_dist.iter().enumerate() {
            if *w > 0.0 {
                total += w * env.exact_policy_value(&p.policy, c)?;
            }
        }
    }
    Ok(total / policies.len() as f64)
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            std_error: (var / n).sqrt(),
            samples: xs.len(),
        }
    }
}

/// Sampled online-to-batch value: pick a policy uniformly, play a full episode.
pub fn online_to_batch_sampled<R: Rng + ?Sized>(policies: &[GeneratedPolicy], env: &TabularEnv, episodes: usize, rng: &mut R) -> Result<Estimate> {
    if policies.is_empty() || episodes == 0 {
        return Err(Error::InvalidArgument("need policies and at least one episode".into()));
    }
    let horizon = env.dims().horizon;
    let mut returns = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let p = &policies[rng.random_range(0..policies.len())];
        let c = env.sample_context(rng);
        let traj = env.rollout(&p.policy, c, horizon, rng)?;
        returns.push(traj.steps.iter().map(|s| s.reward).sum());
    }
    Ok(Estimate::from_samples(&returns))
}

/// A KNR round's policy: the MPC planner of the drawn model(s).
#[derive(Debug, Clone)]
pub struct KnrGeneratedPolicy {
    pub kind: GeneratorKind,
    pub level: usize,
    pub model: usize,
    pub second_model: Option<usize>,
    primary: ShootingPolicy,
    secondary: Option<ShootingPolicy>,
    uniform_seed: u64,
}

impl KnrGeneratedPolicy {
    pub fn act(&self, class: &KnrClass, level: usize, state: &[f64]) -> Result<usize> {
        let env = class.env();
        if level == self.level {
            match self.kind {
                GeneratorKind::QType => {}
                GeneratorKind::VTypeUniform => {
                    let mut rng = seeded_rng(self.uniform_seed);
                    return Ok(rng.random_range(0..env.actions.len()));
                }
                GeneratorKind::VTypeDouble => {
                    return self
                        .secondary
                        .as_ref()
                        .expect("second draw present")
                        .act(env, level, state);
                }
                GeneratorKind::VTypeDesign => unreachable!("rejected at generation"),
            }
        }
        self.primary.act(env, level, state)
    }
}

pub fn generate_knr<R: Rng + ?Sized>(
    kind: GeneratorKind,
    class: &KnrClass,
    level: usize,
    posterior: &LogPosterior,
    rng: &mut R,
) -> Result<KnrGeneratedPolicy> {
    if kind == GeneratorKind::VTypeDesign {
        return Err(Error::Unsupported(
            "the design generator needs a finite state space; KNR states are continuous".into(),
        ));
    }
    if level >= class.env().horizon {
        return Err(Error::InvalidArgument(format!("level {level} beyond horizon")));
    }
    let (model, second) = draw_models(kind, posterior, rng);
    let policy_for = |m: usize, seed: u64| ShootingPolicy {
        weight: class.weights()[m].clone(),
        planner: class.planner(),
        seed,
    };
    // Planning reuses the class seed so a model's in-loop plans match its cached V_M.
    let primary = policy_for(model, class.plan_seed());
    let secondary = second.map(|m| policy_for(m, class.plan_seed()));
    Ok(KnrGeneratedPolicy {
        kind,
        level,
        model,
        second_model: second,
        primary,
        secondary,
        uniform_seed: rng.random(),
    })
}

/// Noiseless closed-loop return of a KNR policy under `weight`'s mean dynamics.
pub fn knr_noiseless_value(class: &KnrClass, policy: &KnrGeneratedPolicy, weight: &KnrWeight) -> Result<f64> {
    let env = class.env();
    let mut x = env.initial_state.clone();
    let mut total = 0.0;
    for level in 0..env.horizon {
        let a = policy.act(class, level, &x)?;
        total += env.reward(&x, a);
        x = env.mean_next(weight, &x, a);
    }
    Ok(total)
}

/// Noiseless return of an MPC policy in the true mean dynamics.
fn closed_loop_value(env: &crate::env::KnrEnv, policy: &ShootingPolicy) -> Result<f64> {
    let mut x = env.initial_state.clone();
    let mut total = 0.0;
    for level in 0..env.horizon {
        let a = policy.act(env, level, &x)?;
        total += env.reward(&x, a);
        x = env.mean_next(&env.true_weight, &x, a);
    }
    Ok(total)
}

#[derive(Debug, Clone)]
pub struct KnrRunOutput {
    pub ledger: RegretLedger,
    pub trace: Vec<PosteriorTraceRow>,
    pub final_posterior: LogPosterior,
    pub max_resync_drift: f64,
    /// Features `φ(x, a)` of the collected tuples, for effective-dimension reporting.
    pub visited_features: Vec<Vec<f64>>,
}

/// Online loop on a KNR class. Regret columns are approximate: they compare noiseless
/// closed-loop returns of the random-shooting planners in the true mean dynamics.
pub fn run_mops_knr<R: Rng + ?Sized>(class: &KnrClass, kind: GeneratorKind, settings: &RunSettings, rng: &mut R) -> Result<KnrRunOutput> {
    settings.validate(kind)?;
    let env = class.env();
    let planner_of = |weight: &KnrWeight| ShootingPolicy {
        weight: weight.clone(),
        planner: class.planner(),
        seed: class.plan_seed(),
    };
    let v_star = closed_loop_value(env, &planner_of(&env.true_weight))?;
    let model_values = class
        .weights()
        .iter()
        .map(|w| closed_loop_value(env, &planner_of(w)))
        .collect::<Result<Vec<f64>>>()?;
    let mut posterior = LogPosterior::from_class(class, settings.hyper)?;
    let mut ledger = RegretLedger::default();
    let mut trace = Vec::with_capacity(settings.rounds);
    let mut history: Vec<RoundData<Vec<f64>>> = Vec::with_capacity(settings.rounds);
    let mut visited = Vec::with_capacity(settings.rounds);
    let mut max_drift: f64 = 0.0;
    let sigma = env.noise_std;

    for t in 1..=settings.rounds {
        let h_t = rng.random_range(0..env.horizon);
        let generated = generate_knr(kind, class, h_t, &posterior, rng)?;
        let steps = if settings.full_horizon { env.horizon } else { h_t + 1 };
        let traj = env.rollout(&mut |level, x| generated.act(class, level, x), steps, rng)?;
        let exploration_value = knr_noiseless_value(class, &generated, &env.true_weight)?;
        let expected_model_value = posterior.expectation(|m| class.root_value(m, 0));
        let probe = &traj.steps[h_t];
        let phi = env.features(&probe.state, probe.action);
        let truth_mean = env.true_weight.apply(&phi);
        let step_loss = posterior.expectation(|m| {
            let mean = class.weights()[m].apply(&phi);
            let gap: f64 = mean.iter().zip(&truth_mean).map(|(a, b)| (a - b).powi(2)).sum();
            gaussian_hellinger_sq(gap, sigma)
        });
        ledger.entries.push(RoundEntry {
            t,
            h_t: h_t + 1,
            context: 0,
            realized_regret: v_star - model_values[generated.model],
            expected_context_regret: v_star - model_values[generated.model],
            exploration_regret: v_star - exploration_value,
            expected_model_value,
            optimism_term: expected_model_value - v_star,
            step_loss,
            posterior_entropy: posterior.entropy(),
            posterior_mass_true: class.true_index().map_or(f64::NAN, |i| posterior.weight(i)),
        });
        trace.push(PosteriorTraceRow {
            t,
            h_t: h_t + 1,
            weights: posterior.weights(),
            root_values: (0..class.len()).map(|m| class.root_value(m, 0)).collect(),
        });
        let records = collect_records(&traj, t, h_t, settings.full_horizon);
        visited.extend(records.iter().map(|r| env.features(&r.state, r.action)));
        let round = RoundData { context: 0, records };
        posterior.update(class, &round)?;
        history.push(round);
        if settings.resync_every > 0 && t % settings.resync_every == 0 {
            let drift = posterior.resync(class, &history)?;
            if drift > RESYNC_DRIFT_TOL {
                return Err(Error::Numerical(format!(
                    "posterior drifted by {drift} before recomputation at round {t}"
                )));
            }
            max_drift = max_drift.max(drift);
        }
    }
    Ok(KnrRunOutput {
        ledger,
        trace,
        final_posterior: posterior,
        max_resync_drift: max_drift,
        visited_features: visited,
    })
}
