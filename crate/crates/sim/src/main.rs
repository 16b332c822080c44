use std::path::PathBuf;
use std::process::ExitCode;

use amod_core::{choice, ControlMode};
use amod_sim::experiment::{desk_train_config, ExperimentConfig, PolicyKind, ScenarioSource, WageProfile};
use amod_sim::sweep::{parse_split, run_sweep, SweepAxis};
use amod_sim::{run_experiment, scenario_file};
use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

/// Competitive autonomous mobility-on-demand market simulator.
#[derive(Parser)]
#[command(name = "amod", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train learned operators, then evaluate them.
    Train(Common),
    /// Evaluate baseline or checkpointed policies.
    Eval {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
    },
    /// Repeat an experiment over the values of one axis.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        policy: PolicyArgs,
        /// fleet-size, fleet-split, wage-profile or info-sharing.
        #[arg(long)]
        axis: SweepAxis,
        /// Comma-separated values, e.g. `5:5,3:7,1:9`.
        #[arg(long, value_delimiter = ',', required = true)]
        values: Vec<String>,
    },
    /// Fit the choice-model intercept to a 50% rejection rate.
    Calibrate {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, default_value_t = 1)]
        operators: usize,
        /// Store the intercept in the scenario file.
        #[arg(long, requires = "scenario")]
        write: bool,
    },
    /// Write a synthetic scenario file.
    GenScenario {
        #[arg(long, default_value_t = 6)]
        regions: usize,
        #[arg(long, default_value_t = 20)]
        horizon: usize,
        /// Coefficient of variation of regional demand.
        #[arg(long, default_value_t = 1.3)]
        cv: f64,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// Scenario JSON file; a synthetic scenario is generated when absent.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long, default_value_t = 6)]
    regions: usize,
    #[arg(long, default_value_t = 20)]
    horizon: usize,
    #[arg(long, default_value_t = 1.3)]
    cv: f64,
    #[arg(long, default_value_t = 7)]
    scenario_seed: u64,
}

impl ScenarioArgs {
    fn source(&self) -> ScenarioSource {
        match &self.scenario {
            Some(p) => ScenarioSource::File(p.clone()),
            None => ScenarioSource::Synthetic {
                n_regions: self.regions,
                horizon: self.horizon,
                demand_cv: self.cv,
                seed: self.scenario_seed,
            },
        }
    }
}

#[derive(Args)]
struct Common {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long, default_value = "joint")]
    mode: ControlMode,
    #[arg(long, default_value_t = 1)]
    operators: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Split of the fleet between two operators, `a:b`.
    #[arg(long, value_parser = parse_split)]
    fleet_split: Option<(u32, u32)>,
    /// Total fleet, overriding the scenario.
    #[arg(long)]
    fleet_size: Option<u32>,
    /// scenario, uniform, or spread:S.
    #[arg(long, default_value = "scenario")]
    wage_profile: WageProfile,
    /// Hide last-step competitor prices from learned operators.
    #[arg(long)]
    no_competitor_prices: bool,
    /// Sample learned actions during evaluation instead of using means.
    #[arg(long)]
    stochastic_eval: bool,
    #[arg(long, default_value_t = 10)]
    eval_runs: usize,
    #[arg(long)]
    episodes: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    actor_lr: Option<f64>,
    #[arg(long)]
    critic_lr: Option<f64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct PolicyArgs {
    /// nc, ud or learned; one value for all operators or one per operator.
    #[arg(long, value_delimiter = ',', default_value = "ud")]
    policy: Vec<PolicyKind>,
    /// Checkpoint per learned operator.
    #[arg(long)]
    checkpoint: Vec<PathBuf>,
}

impl Common {
    fn config(&self, policies: Vec<PolicyKind>, checkpoints: Vec<PathBuf>) -> ExperimentConfig {
        let mut train = desk_train_config();
        if let Some(e) = self.episodes {
            train.episodes = e;
        }
        if let Some(h) = self.hidden {
            train.hidden = h;
        }
        if let Some(lr) = self.actor_lr {
            train.actor_lr = lr;
        }
        if let Some(lr) = self.critic_lr {
            train.critic_lr = lr;
        }
        let policies = if policies.len() == 1 {
            vec![policies[0]; self.operators]
        } else {
            policies
        };
        ExperimentConfig {
            scenario: self.scenario.source(),
            mode: self.mode,
            operators: self.operators,
            policies,
            checkpoints,
            eval_runs: self.eval_runs,
            seed: self.seed,
            fleet_size: self.fleet_size,
            fleet_split: self.fleet_split,
            wage_profile: self.wage_profile.clone(),
            observe_competitor_prices: !self.no_competitor_prices,
            stochastic_eval: self.stochastic_eval,
            train,
            out_dir: self.out.clone(),
        }
    }
}

fn print_summary(report: &amod_sim::experiment::Report) {
    for (op, stats) in &report.summary.metrics {
        let r = stats["reward"];
        let rho = stats["mean_price_scalar"];
        println!(
            "operator {op}: reward {:.2} (sd {:.2}), price scalar {:.3}, served {:.1}",
            r.mean, r.sd, rho.mean, stats["served_demand"].mean
        );
    }
}

fn run(cli: Cli) -> Result<()> {
    let log = |m: &str| eprintln!("{m}");
    match cli.command {
        Command::Train(common) => {
            let cfg = common.config(vec![PolicyKind::Learned], Vec::new());
            let report = run_experiment(&cfg, log)?;
            print_summary(&report);
        }
        Command::Eval { common, policy } => {
            let cfg = common.config(policy.policy, policy.checkpoint);
            let report = run_experiment(&cfg, log)?;
            print_summary(&report);
        }
        Command::Sweep {
            common,
            policy,
            axis,
            values,
        } => {
            let cfg = common.config(policy.policy, policy.checkpoint);
            run_sweep(&cfg, axis, &values, log)?;
            println!("wrote {}", cfg.out_dir.join("sweep.csv").display());
        }
        Command::Calibrate {
            scenario,
            operators,
            write,
        } => {
            let cfg = ExperimentConfig {
                scenario: scenario.source(),
                ..ExperimentConfig::default()
            };
            let mut s = amod_sim::experiment::build_scenario(&cfg)?;
            let beta_0 = choice::calibrate_beta0(&s, operators)?;
            println!("beta_0 = {beta_0}");
            if write {
                let path = scenario.scenario.context("--write needs --scenario")?;
                s.beta_0 = Some(beta_0);
                scenario_file::write_scenario(&path, &s)?;
                println!("wrote {}", path.display());
            }
        }
        Command::GenScenario {
            regions,
            horizon,
            cv,
            seed,
            out,
        } => {
            let s = amod_core::scenario::generate_synthetic_scenario(regions, horizon, cv, seed)?;
            scenario_file::write_scenario(&out, &s)?;
            println!("wrote {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
