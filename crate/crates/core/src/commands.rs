//! The `run`, `check` and `gen` subcommands.
//!
//! Seeds fan out over rayon; every file is written by the calling thread after all runs
//! finish, so outputs are byte-identical across reruns of the same build.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    class_omega, dc_aggregate, decoupling_ceiling, default_grid, effective_dimension, empirical_decoupling,
    knr_decoupling_report, online_learning_rhs, simulation_lemma_check, regret_bound_rhs, witness_ensemble, BoundInputs,
    DecouplingCeiling, DecouplingReport, KnrDecouplingReport,
};
use crate::config::{ExperimentConfig, Family};
use crate::divergences::{gaussian_kl, omega, OmegaValue};
use crate::driver::{online_to_batch, run_mops, run_mops_knr, KnrRunOutput, PosteriorTraceRow, RegretLedger, RunOutput, RunSettings};
use crate::env::TabularEnv;
use crate::generators::{Generator, GeneratorKind};
use crate::instance::{
    dirichlet_row, gen_knr, gen_mixture, gen_tabular, ClassSpec, Instance, InstanceFile, KnrSpec, MixtureSpec, TabularSpec,
    SCHEMA_VERSION,
};
use crate::planner::shooting::ShootingPlanner;
use crate::planner::{bellman_error, plan};
use crate::posterior::{batch_log_weights, max_log_deviation, Hyperparams, KnrClass, LogPosterior, ModelClass, TabularClass};
use crate::report::{mean_series, write_json, write_ledger_csv, write_plot, write_trace_csv};
use crate::{seeded_rng, Error, Result};

/// Tolerances of the verification battery.
pub const BELLMAN_ZERO_TOL: f64 = 1e-12;
pub const SIMULATION_TOL: f64 = 1e-9;
pub const POSTERIOR_TOL: f64 = 1e-10;

/// One replicate's output.
#[derive(Debug, Clone)]
pub enum SeedRun {
    Tabular(RunOutput),
    Knr(KnrRunOutput),
}

impl SeedRun {
    pub fn ledger(&self) -> &RegretLedger {
        match self {
            SeedRun::Tabular(o) => &o.ledger,
            SeedRun::Knr(o) => &o.ledger,
        }
    }

    pub fn trace(&self) -> &[PosteriorTraceRow] {
        match self {
            SeedRun::Tabular(o) => &o.trace,
            SeedRun::Knr(o) => &o.trace,
        }
    }

    pub fn final_posterior(&self) -> &LogPosterior {
        match self {
            SeedRun::Tabular(o) => &o.final_posterior,
            SeedRun::Knr(o) => &o.final_posterior,
        }
    }
}

/// A loaded instance with its class materialized.
pub enum Prepared {
    Tabular {
        env: TabularEnv,
        class: TabularClass,
        generator: Generator,
    },
    Knr {
        class: KnrClass,
    },
}

impl Prepared {
    pub fn new(cfg: &ExperimentConfig, file: &InstanceFile) -> Result<Self> {
        match &file.instance {
            Instance::Knr { .. } => {
                let planner = ShootingPlanner::new(cfg.algorithm.planner_budget)?;
                Ok(Prepared::Knr {
                    class: file.instance.knr_class(planner, cfg.algorithm.plan_seed)?,
                })
            }
            inst => {
                let env = inst.tabular_env()?;
                let class = inst.tabular_class()?;
                let generator = cfg.generator(env.dims())?;
                Ok(Prepared::Tabular { env, class, generator })
            }
        }
    }

    pub fn class_size(&self) -> usize {
        match self {
            Prepared::Tabular { class, .. } => class.len(),
            Prepared::Knr { class } => class.len(),
        }
    }

    pub fn horizon(&self) -> usize {
        match self {
            Prepared::Tabular { env, .. } => env.dims().horizon,
            Prepared::Knr { class } => class.env().horizon,
        }
    }

    pub fn true_index(&self) -> Option<usize> {
        match self {
            Prepared::Tabular { class, .. } => class.true_index(),
            Prepared::Knr { class } => class.true_index(),
        }
    }

    /// `ω(3HT, p₀)`; `approximate` when the KNR radii are upper bounds.
    pub fn omega(&self, rounds: usize) -> Result<(OmegaValue, bool)> {
        match self {
            Prepared::Tabular { env, class, .. } => Ok((class_omega(env, class, rounds)?, false)),
            Prepared::Knr { class } => {
                // sup_x KL = ‖(W − W*)φ‖² / (2σ²) ≤ ‖W − W*‖₂² B² / (2σ²).
                let env = class.env();
                let radii = class
                    .weights()
                    .iter()
                    .map(|w| {
                        let diff = crate::env::knr::KnrWeight::new(
                            w.rows,
                            w.cols,
                            w.data.iter().zip(&env.true_weight.data).map(|(a, b)| a - b).collect(),
                        )?;
                        let gap = diff.spectral_norm() * env.feature_bound;
                        Ok(gaussian_kl(gap * gap, env.noise_std))
                    })
                    .collect::<Result<Vec<f64>>>()?;
                let alpha = 3.0 * env.horizon as f64 * rounds as f64;
                Ok((omega(&radii, class.log_prior(), alpha)?, true))
            }
        }
    }
}

/// Runs every configured seed.
pub fn execute_runs(cfg: &ExperimentConfig, prepared: &Prepared, hyper: Hyperparams) -> Result<Vec<(u64, SeedRun)>> {
    let mut settings = RunSettings::new(hyper, cfg.algorithm.rounds);
    settings.full_horizon = cfg.algorithm.full_horizon;
    settings.resync_every = cfg.algorithm.resync_every;
    cfg.seeds()
        .into_par_iter()
        .map(|seed| {
            let mut rng = seeded_rng(seed);
            let out = match prepared {
                Prepared::Tabular { env, class, generator } => SeedRun::Tabular(run_mops(env, class, generator, &settings, &mut rng)?),
                Prepared::Knr { class } => SeedRun::Knr(run_mops_knr(class, cfg.algorithm.generator, &settings, &mut rng)?),
            };
            Ok((seed, out))
        })
        .collect()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeedSummary {
    pub seed: u64,
    pub cumulative_realized_regret: f64,
    pub cumulative_expected_context_regret: f64,
    pub cumulative_exploration_regret: f64,
    /// `Σ_t [V⋆(x_t¹) − E_{M∼p_t} V_M(x_t¹)]`.
    pub model_regret: f64,
    pub online_learning_lhs: f64,
    pub final_mass_true: Option<f64>,
    /// Exact value of the uniform mixture of the returned policies (tabular only).
    pub online_to_batch_value: Option<f64>,
    pub max_resync_drift: f64,
}

/// A bound comparison. `margin = rhs − lhs`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub pass: bool,
    pub note: String,
}

impl BoundCheck {
    fn new(lhs: f64, rhs: f64, note: impl Into<String>) -> Self {
        BoundCheck {
            lhs,
            rhs,
            margin: rhs - lhs,
            pass: lhs <= rhs,
            note: note.into(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub family: String,
    pub seed: u64,
    pub class_size: usize,
    pub true_index: Option<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Averages {
    pub cumulative_realized_regret: f64,
    pub cumulative_expected_context_regret: f64,
    pub model_regret: f64,
    pub online_learning_lhs: f64,
    pub final_mass_true: Option<f64>,
    pub mean_regret_first_window: f64,
    pub mean_regret_last_window: f64,
    /// Rounds averaged in each window.
    pub window: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DecouplingLevel {
    pub report: DecouplingReport,
    pub ceiling: Option<DecouplingCeiling>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub schema_version: u32,
    pub config: ExperimentConfig,
    pub instance: InstanceInfo,
    pub hyperparams: Hyperparams,
    pub omega: OmegaValue,
    pub omega_approximate: bool,
    pub seeds: Vec<SeedSummary>,
    pub averages: Averages,
    /// Seed-averaged online-learning inequality (surrogate for the expectation).
    pub online_learning_check: BoundCheck,
    /// Seed-averaged main regret bound with `dc` from the grid estimator (tabular only).
    pub regret_bound_check: Option<BoundCheck>,
    pub decoupling: Vec<DecouplingLevel>,
    pub knr_decoupling: Option<KnrDecouplingReport>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    v.iter().sum::<f64>() / v.len() as f64
}

/// Grid for the decoupling estimator: point masses, uniform, and posterior snapshots of
/// the first seed.
pub fn decoupling_grid(class_size: usize, runs: &[(u64, SeedRun)]) -> Vec<Vec<f64>> {
    let mut grid = default_grid(class_size);
    if let Some((_, run)) = runs.first() {
        let trace = run.trace();
        let mut rounds: Vec<usize> = [1, 10, 100, trace.len() / 4, trace.len() / 2, trace.len()]
            .into_iter()
            .filter(|&t| t >= 1 && t <= trace.len())
            .collect();
        rounds.dedup();
        grid.extend(rounds.into_iter().map(|t| trace[t - 1].weights.clone()));
    }
    grid
}

/// Per-level decoupling estimates and (where available) the analytic ceiling.
pub fn decoupling_levels(env: &TabularEnv, class: &TabularClass, generator: &Generator, alpha: f64, epsilon: f64, grid: &[Vec<f64>]) -> Result<Vec<DecouplingLevel>> {
    (0..env.dims().horizon)
        .map(|h| {
            let report = empirical_decoupling(env, class, generator, h, alpha, epsilon, grid)?;
            let ceiling = match generator.kind {
                GeneratorKind::VTypeUniform | GeneratorKind::VTypeDesign if alpha == 0.5 => {
                    Some(decoupling_ceiling(env, class, generator, h, epsilon, grid)?)
                }
                _ => None,
            };
            Ok(DecouplingLevel { report, ceiling })
        })
        .collect()
}

/// Builds the summary (bound verdicts included) for completed runs.
pub fn summarize(cfg: &ExperimentConfig, file: &InstanceFile, prepared: &Prepared, hyper: Hyperparams, runs: &[(u64, SeedRun)]) -> Result<RunSummary> {
    let rounds = cfg.algorithm.rounds;
    let window = (rounds / 10).max(1);
    let seeds = runs
        .iter()
        .map(|(seed, run)| {
            let ledger = run.ledger();
            let (otb, drift) = match (run, prepared) {
                (SeedRun::Tabular(o), Prepared::Tabular { env, .. }) => (Some(online_to_batch(&o.policies, env)?), o.max_resync_drift),
                (SeedRun::Knr(o), _) => (None, o.max_resync_drift),
                _ => unreachable!("run kind follows the prepared instance"),
            };
            Ok(SeedSummary {
                seed: *seed,
                cumulative_realized_regret: ledger.cumulative_realized_regret(),
                cumulative_expected_context_regret: ledger.cumulative_expected_context_regret(),
                cumulative_exploration_regret: ledger.entries.iter().map(|e| e.exploration_regret).sum(),
                model_regret: ledger.model_regret(),
                online_learning_lhs: ledger.online_learning_lhs(&hyper),
                final_mass_true: prepared.true_index().map(|t| run.final_posterior().weight(t)),
                online_to_batch_value: otb,
                max_resync_drift: drift,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let averages = Averages {
        cumulative_realized_regret: mean(seeds.iter().map(|s| s.cumulative_realized_regret)),
        cumulative_expected_context_regret: mean(seeds.iter().map(|s| s.cumulative_expected_context_regret)),
        model_regret: mean(seeds.iter().map(|s| s.model_regret)),
        online_learning_lhs: mean(seeds.iter().map(|s| s.online_learning_lhs)),
        final_mass_true: prepared
            .true_index()
            .map(|_| mean(seeds.iter().map(|s| s.final_mass_true.unwrap_or(f64::NAN)))),
        mean_regret_first_window: mean(runs.iter().map(|(_, r)| r.ledger().mean_regret(1, window))),
        mean_regret_last_window: mean(runs.iter().map(|(_, r)| r.ledger().mean_regret(rounds - window + 1, rounds))),
        window,
    };
    let (om, approx) = prepared.omega(rounds)?;
    let note = if approx {
        "seed-averaged surrogate for the expectation; omega from upper-bounded KNR radii"
    } else {
        "seed-averaged surrogate for the expectation"
    };
    let online_learning_check = BoundCheck::new(averages.online_learning_lhs, online_learning_rhs(om.value, hyper.gamma, rounds)?, note);

    let mut decoupling = Vec::new();
    let mut regret_bound_check = None;
    let mut knr_decoupling = None;
    match prepared {
        Prepared::Tabular { env, class, generator } => {
            let grid = decoupling_grid(class.len(), runs);
            decoupling = decoupling_levels(env, class, generator, cfg.analysis.alpha, cfg.analysis.epsilon, &grid)?;
            let per: Vec<f64> = decoupling.iter().map(|d| d.report.coefficient).collect();
            let dc = dc_aggregate(&per, cfg.analysis.alpha)?;
            let rhs = regret_bound_rhs(&BoundInputs {
                omega: om.value,
                gamma: hyper.gamma,
                rounds,
                horizon: env.dims().horizon,
                epsilon: cfg.analysis.epsilon,
                alpha: cfg.analysis.alpha,
                dc,
            })?;
            regret_bound_check = Some(BoundCheck::new(
                averages.model_regret,
                rhs,
                format!("seed-averaged; dc = {dc} from the grid lower-bound estimator"),
            ));
        }
        Prepared::Knr { class } => {
            if let Some((_, SeedRun::Knr(o))) = runs.first() {
                knr_decoupling = Some(knr_decoupling_report(
                    o.visited_features.clone(),
                    class.env().noise_std,
                    class.env().actions.len(),
                    cfg.analysis.epsilon,
                )?);
            }
        }
    }
    Ok(RunSummary {
        schema_version: SCHEMA_VERSION,
        config: cfg.clone(),
        instance: InstanceInfo {
            family: file.instance.family().into(),
            seed: file.seed,
            class_size: file.instance.class_size(),
            true_index: file.instance.true_index(),
        },
        hyperparams: hyper,
        omega: om,
        omega_approximate: approx,
        seeds,
        averages,
        online_learning_check,
        regret_bound_check,
        decoupling,
        knr_decoupling,
    })
}

/// Writes per-seed CSVs, plot data and `summary.json` under `out_dir`.
pub fn write_run_outputs(out_dir: &Path, summary: &RunSummary, runs: &[(u64, SeedRun)]) -> Result<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    for (seed, run) in runs {
        let dir = out_dir.join(format!("seed_{seed}"));
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_ledger_csv(&dir.join("ledger.csv"), run.ledger())?;
        write_trace_csv(&dir.join("posterior.csv"), run.trace())?;
    }
    let regret = mean_series(&runs.iter().map(|(_, r)| r.ledger().cumulative_series()).collect::<Vec<_>>());
    write_plot(
        &out_dir.join("regret_vs_t.dat"),
        "seed-averaged cumulative realized regret",
        ["t", "cumulative_regret"],
        regret.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)),
    )?;
    if summary.instance.true_index.is_some() {
        let mass = mean_series(
            &runs
                .iter()
                .map(|(_, r)| r.ledger().entries.iter().map(|e| e.posterior_mass_true).collect())
                .collect::<Vec<_>>(),
        );
        write_plot(
            &out_dir.join("posterior_mass_vs_t.dat"),
            "seed-averaged posterior mass on the true model",
            ["t", "posterior_mass_true"],
            mass.iter().enumerate().map(|(i, v)| ((i + 1) as f64, *v)),
        )?;
    }
    write_json(&out_dir.join("summary.json"), summary)
}

/// `mops run`: returns the summary after writing all outputs.
pub fn cmd_run(cfg: &ExperimentConfig, out_override: Option<&Path>) -> Result<RunSummary> {
    let file = cfg.build_instance()?;
    let prepared = Prepared::new(cfg, &file)?;
    let hyper = cfg.hyperparams(prepared.class_size());
    let runs = execute_runs(cfg, &prepared, hyper)?;
    let summary = summarize(cfg, &file, &prepared, hyper, &runs)?;
    let dir: PathBuf = out_override.map_or_else(|| cfg.output.dir.clone(), Path::to_path_buf);
    write_run_outputs(&dir, &summary, &runs)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckItem {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub bound: f64,
    /// `bound − value` for upper-bound checks.
    pub margin: f64,
    pub detail: serde_json::Value,
}

impl CheckItem {
    fn upper(name: impl Into<String>, value: f64, bound: f64, detail: serde_json::Value) -> Self {
        CheckItem {
            name: name.into(),
            pass: value <= bound,
            value,
            bound,
            margin: bound - value,
            detail,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub schema_version: u32,
    pub pass: bool,
    pub checks: Vec<CheckItem>,
}

/// `mops check`: the verification battery. The report lists every check with its margin;
/// `pass` is false when any check fails.
pub fn cmd_check(cfg: &ExperimentConfig) -> Result<CheckReport> {
    let file = cfg.build_instance()?;
    let mut checks = Vec::new();
    let realizable = match &file.instance {
        Instance::Knr { env, weights, true_index } => true_index.is_some_and(|t| weights[t] == env.true_weight),
        inst => inst.tabular_class()?.check_realizable(&inst.tabular_env()?).is_ok(),
    };
    checks.push(CheckItem {
        name: "realizability".into(),
        pass: realizable,
        value: f64::from(u8::from(!realizable)),
        bound: 0.0,
        margin: if realizable { 0.0 } else { -1.0 },
        detail: serde_json::json!({"true_index": file.instance.true_index()}),
    });
    let prepared = Prepared::new(cfg, &file)?;
    let hyper = cfg.hyperparams(prepared.class_size());

    if let Prepared::Tabular { env, class, .. } = &prepared {
        checks.extend(structural_checks(cfg, env, class, file.seed)?);
    }

    let runs = execute_runs(cfg, &prepared, hyper)?;
    let mut worst_dev: f64 = 0.0;
    for (_, run) in &runs {
        let dev = match (run, &prepared) {
            // Drift is measured before each periodic recomputation corrects it.
            (SeedRun::Tabular(o), Prepared::Tabular { class, .. }) => o
                .max_resync_drift
                .max(max_log_deviation(o.final_posterior.log_weights(), &batch_log_weights(class, &hyper, &o.history))),
            (SeedRun::Knr(o), _) => o.max_resync_drift,
            _ => unreachable!("run kind follows the prepared instance"),
        };
        worst_dev = worst_dev.max(dev);
    }
    checks.push(CheckItem::upper("posterior_exactness", worst_dev, POSTERIOR_TOL, serde_json::json!({"seeds": runs.len()})));

    let summary = summarize(cfg, &file, &prepared, hyper, &runs)?;
    let ol = &summary.online_learning_check;
    checks.push(CheckItem::upper("online_learning_bound", ol.lhs, ol.rhs, serde_json::json!({"note": ol.note, "omega": summary.omega})));
    if let Some(t1) = &summary.regret_bound_check {
        checks.push(CheckItem::upper("regret_bound", t1.lhs, t1.rhs, serde_json::json!({"note": t1.note})));
    }
    for level in &summary.decoupling {
        let r = &level.report;
        match &level.ceiling {
            Some(c) => checks.push(CheckItem::upper(
                format!("decoupling_sandwich_h{}", r.level),
                r.coefficient,
                c.ceiling,
                serde_json::json!({"estimate": r.estimate, "epsilon": r.epsilon, "kappa": c.kappa, "b1": c.b1,
                                   "effective_dimension": c.effective_dimension, "witness": r.witness}),
            )),
            None => checks.push(CheckItem {
                name: format!("decoupling_finite_h{}", r.level),
                pass: !r.violated,
                value: r.coefficient,
                bound: f64::INFINITY,
                margin: f64::INFINITY,
                detail: serde_json::json!({"estimate": r.estimate, "note": "no analytic ceiling for this generator"}),
            }),
        }
    }
    if let Some(k) = &summary.knr_decoupling {
        checks.push(CheckItem {
            name: "knr_decoupling_ceiling".into(),
            pass: k.ceiling.is_finite(),
            value: k.ceiling,
            bound: f64::INFINITY,
            margin: f64::INFINITY,
            detail: serde_json::to_value(k)?,
        });
    }
    Ok(CheckReport {
        schema_version: SCHEMA_VERSION,
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

/// Instance-level checks that need no runs.
fn structural_checks(cfg: &ExperimentConfig, env: &TabularEnv, class: &TabularClass, seed: u64) -> Result<Vec<CheckItem>> {
    let d = env.dims();
    let mut out = Vec::new();
    let star = plan(&env.model)?;
    let mut worst: f64 = 0.0;
    for c in 0..d.contexts {
        for h in 0..d.horizon {
            for s in 0..d.states {
                for a in 0..d.actions {
                    worst = worst.max(bellman_error(&star, &env.model, c, h, s, a)?.abs());
                }
            }
        }
    }
    out.push(CheckItem::upper("bellman_zero_at_truth", worst, BELLMAN_ZERO_TOL, serde_json::Value::Null));

    let mut grid = default_grid(class.len());
    let mut rng = seeded_rng(seed ^ 0x5EED);
    grid.extend((0..cfg.analysis.simulation_samples).map(|_| dirichlet_row(class.len(), &mut rng)));
    let residuals = grid
        .par_iter()
        .map(|p| simulation_lemma_check(env, class, p).map(|r| r.residual))
        .collect::<Result<Vec<f64>>>()?;
    let max_res = residuals.iter().copied().fold(0.0, f64::max);
    out.push(CheckItem::upper("simulation_lemma", max_res, SIMULATION_TOL, serde_json::json!({"distributions": grid.len()})));

    let om = class_omega(env, class, cfg.algorithm.rounds)?;
    let uniform = class.log_prior().windows(2).all(|w| w[0] == w[1]);
    if uniform && class.true_index().is_some() {
        out.push(CheckItem::upper("omega_at_most_log_class_size", om.value, (class.len() as f64).ln(), serde_json::to_value(om)?));
    }

    let mut grid_eps = cfg.analysis.epsilon_grid.clone();
    grid_eps.sort_by(f64::total_cmp);
    for h in 0..d.horizon {
        let (ens, _) = witness_ensemble(env, class, h, &default_grid(class.len()))?;
        let table = grid_eps
            .iter()
            .map(|&e| effective_dimension(&ens, e).map(|r| r.value))
            .collect::<Result<Vec<f64>>>()?;
        let monotone = table.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
        let top = table.iter().copied().fold(0.0, f64::max);
        let mut item = CheckItem::upper(
            format!("effective_dimension_h{}", h + 1),
            top,
            d.states as f64,
            serde_json::json!({"epsilon": grid_eps, "d_eff": table, "monotone": monotone}),
        );
        item.pass &= monotone;
        out.push(item);
    }
    Ok(out)
}

/// Arguments of `mops gen`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GenRequest {
    pub family: Family,
    pub seed: u64,
    pub tabular: Option<TabularSpec>,
    pub mixture: Option<MixtureSpec>,
    pub knr: Option<KnrSpec>,
    pub class: ClassSpec,
}

/// `mops gen`: builds and validates an instance, writes it, and reloads it to confirm the
/// round trip.
pub fn cmd_gen(req: &GenRequest, out: &Path) -> Result<InstanceFile> {
    let missing = |what: &str| Error::InvalidArgument(format!("{what} dimensions are required"));
    let file = match req.family {
        Family::Tabular => gen_tabular(req.tabular.as_ref().ok_or_else(|| missing("tabular"))?, &req.class, req.seed)?,
        Family::Mixture => gen_mixture(
            req.tabular.as_ref().ok_or_else(|| missing("tabular"))?,
            req.mixture.as_ref().ok_or_else(|| missing("mixture"))?,
            req.seed,
        )?,
        Family::Knr => gen_knr(req.knr.as_ref().ok_or_else(|| missing("knr"))?, &req.class, req.seed)?,
    };
    file.save(out)?;
    let back = InstanceFile::load(out)?;
    if back != file {
        return Err(Error::Numerical(format!("{} does not round-trip", out.display())));
    }
    Ok(file)
}
