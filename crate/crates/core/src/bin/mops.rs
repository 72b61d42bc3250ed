//! `mops`: run experiments, verify bounds, generate instances.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mops_core::commands::{cmd_check, cmd_gen, cmd_run, GenRequest};
use mops_core::config::{ExperimentConfig, Family};
use mops_core::env::{RewardLayout, RewardNoise};
use mops_core::instance::{ClassSpec, KnrSpec, MixtureSpec, TabularSpec};
use mops_core::report::write_json;

#[derive(Parser)]
#[command(name = "mops", version, about = "Posterior sampling for episodic contextual MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured experiment and write traces, summary and plot data.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir` from the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification battery; exits nonzero if any check fails.
    Check {
        #[arg(long)]
        config: PathBuf,
        /// Where to write the verdict JSON (stdout when omitted).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate an instance file.
    Gen(GenArgs),
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_parser = snake::<Family>)]
    family: Family,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    contexts: usize,
    #[arg(long, default_value_t = 3)]
    states: usize,
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 2)]
    horizon: usize,
    #[arg(long, default_value = "terminal_only", value_parser = snake::<RewardLayout>)]
    reward_layout: RewardLayout,
    #[arg(long, default_value = "bernoulli", value_parser = snake::<RewardNoise>)]
    reward_noise: RewardNoise,
    #[arg(long, default_value_t = 8)]
    class_size: usize,
    #[arg(long, default_value_t = 0.7)]
    perturbation: f64,
    /// Build the class without the true model (no guarantees apply).
    #[arg(long)]
    exclude_true_model: bool,
    /// Mixture: number of base models.
    #[arg(long, default_value_t = 3)]
    base_models: usize,
    /// Mixture: simplex grid step is 1/divisions.
    #[arg(long, default_value_t = 2)]
    divisions: usize,
    /// KNR: state dimension.
    #[arg(long, default_value_t = 2)]
    state_dim: usize,
    #[arg(long, default_value_t = 0.2)]
    noise_std: f64,
    #[arg(long, default_value_t = 1.0)]
    weight_bound: f64,
}

fn snake<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|e| e.to_string())
}

impl GenArgs {
    fn request(&self) -> GenRequest {
        let tabular = TabularSpec {
            contexts: self.contexts,
            states: self.states,
            actions: self.actions,
            horizon: self.horizon,
            reward_layout: self.reward_layout,
            reward_noise: self.reward_noise,
        };
        let class = ClassSpec {
            size: self.class_size,
            perturbation: self.perturbation,
            include_true_model: !self.exclude_true_model,
            misspecified: self.exclude_true_model,
        };
        let knr = KnrSpec {
            state_dim: self.state_dim,
            actions: vec![-1.0, 1.0],
            horizon: self.horizon,
            noise_std: self.noise_std,
            weight_bound: self.weight_bound,
            perturbation: 0.3,
        };
        GenRequest {
            family: self.family,
            seed: self.seed,
            tabular: Some(tabular),
            mixture: Some(MixtureSpec {
                base_models: self.base_models,
                divisions: self.divisions,
            }),
            knr: Some(knr),
            class,
        }
    }
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn real_main() -> mops_core::Result<ExitCode> {
    match Cli::parse().command {
        Command::Run { config, out } => {
            let cfg = ExperimentConfig::load(&config)?;
            let s = cmd_run(&cfg, out.as_deref())?;
            let ol = &s.online_learning_check;
            println!(
                "seeds={} mean_cumulative_regret={} online_learning: lhs={} rhs={} pass={}",
                s.seeds.len(),
                s.averages.cumulative_realized_regret,
                ol.lhs,
                ol.rhs,
                ol.pass
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { config, report } => {
            let cfg = ExperimentConfig::load(&config)?;
            let r = cmd_check(&cfg)?;
            match report {
                Some(path) => {
                    write_json(&path, &r)?;
                    for c in &r.checks {
                        println!("{} {} value={} bound={} margin={}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.value, c.bound, c.margin);
                    }
                }
                None => println!("{}", serde_json::to_string_pretty(&r)?),
            }
            Ok(if r.pass { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Gen(args) => {
            let file = cmd_gen(&args.request(), &args.out)?;
            println!("wrote {} ({} models)", args.out.display(), file.instance.class_size());
            Ok(ExitCode::SUCCESS)
        }
    }
}
