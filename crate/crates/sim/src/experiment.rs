//! Experiment configuration, training, and seeded evaluation.

use std::fs;
use std::path::{Path, PathBuf};

use amod_core::choice;
use amod_core::learner::{Agent, CurvePoint, FeatureConfig, LearnedPolicy, PolicyParams, TrainConfig, Trainer};
use amod_core::policies::{NoControl, UniformDistribution};
use amod_core::scenario::generate_synthetic_scenario;
use amod_core::{ControlMode, Market, Policy, Scenario};
use anyhow::{bail, ensure, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::metrics::{self, CurveRow, EpisodeTally, MetricsRow, Stat};
use crate::scenario_file;

#[derive(Clone, Debug, PartialEq)]
pub enum ScenarioSource {
    File(PathBuf),
    Synthetic {
        n_regions: usize,
        horizon: usize,
        demand_cv: f64,
        seed: u64,
    },
}

impl Default for ScenarioSource {
    fn default() -> Self {
        Self::Synthetic {
            n_regions: 6,
            horizon: 20,
            demand_cv: 1.3,
            seed: 7,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyKind {
    Nc,
    Ud,
    Learned,
}

impl std::str::FromStr for PolicyKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nc" => Ok(Self::Nc),
            "ud" => Ok(Self::Ud),
            "learned" => Ok(Self::Learned),
            other => bail!("unknown policy {other:?} (expected nc, ud or learned)"),
        }
    }
}

/// Regional wage means used in place of the scenario's own.
#[derive(Clone, Debug, PartialEq)]
pub enum WageProfile {
    /// As given by the scenario.
    Scenario,
    /// Every region at the scenario's demand-weighted mean wage.
    Uniform,
    /// Region means spread linearly over `mean * (1 - s) ..= mean * (1 + s)`
    /// in region order.
    Spread(f64),
}

impl std::str::FromStr for WageProfile {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "scenario" => Ok(Self::Scenario),
            "uniform" => Ok(Self::Uniform),
            other => {
                let Some(v) = other.strip_prefix("spread:") else {
                    bail!("unknown wage profile {other:?} (expected scenario, uniform or spread:S)");
                };
                let s: f64 = v.parse().with_context(|| format!("wage spread {v:?}"))?;
                ensure!((0.0..1.0).contains(&s), "wage spread {s} must lie in [0, 1)");
                Ok(Self::Spread(s))
            }
        }
    }
}

impl std::fmt::Display for WageProfile {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Scenario => write!(f, "scenario"),
            Self::Uniform => write!(f, "uniform"),
            Self::Spread(s) => write!(f, "spread:{s}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub scenario: ScenarioSource,
    pub mode: ControlMode,
    pub operators: usize,
    /// One policy per operator.
    pub policies: Vec<PolicyKind>,
    /// Checkpoints for learned operators, in operator order. Learned
    /// operators without one are trained first.
    pub checkpoints: Vec<PathBuf>,
    pub eval_runs: usize,
    pub seed: u64,
    /// Overrides the scenario's total fleet.
    pub fleet_size: Option<u32>,
    /// `a:b` split of the total fleet between two operators.
    pub fleet_split: Option<(u32, u32)>,
    pub wage_profile: WageProfile,
    pub observe_competitor_prices: bool,
    pub stochastic_eval: bool,
    pub train: TrainConfig,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            scenario: ScenarioSource::default(),
            mode: ControlMode::Joint,
            operators: 1,
            policies: vec![PolicyKind::Ud],
            checkpoints: Vec::new(),
            eval_runs: 10,
            seed: 0,
            fleet_size: None,
            fleet_split: None,
            wage_profile: WageProfile::Scenario,
            observe_competitor_prices: true,
            stochastic_eval: false,
            train: desk_train_config(),
            out_dir: PathBuf::from("out"),
        }
    }
}

/// Training settings used by default: the reference optimiser settings with a
/// narrower network, fewer episodes, and larger learning rates.
pub fn desk_train_config() -> TrainConfig {
    TrainConfig {
        actor_lr: 1e-3,
        critic_lr: 2e-3,
        hidden: 64,
        episodes: 10_000,
        ..TrainConfig::default()
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.operators == 1 || self.operators == 2,
            "operators must be 1 or 2, got {}",
            self.operators
        );
        ensure!(
            self.policies.len() == self.operators,
            "{} policies for {} operators",
            self.policies.len(),
            self.operators
        );
        ensure!(self.eval_runs > 0, "eval_runs must be positive");
        if let Some((a, b)) = self.fleet_split {
            ensure!(a > 0 && b > 0, "fleet split {a}:{b} must have positive parts");
            ensure!(self.operators == 2, "a fleet split needs two operators");
        }
        let learned = self.policies.iter().filter(|p| **p == PolicyKind::Learned).count();
        ensure!(
            self.checkpoints.is_empty() || self.checkpoints.len() == learned,
            "{} checkpoints for {learned} learned operators",
            self.checkpoints.len()
        );
        if self.checkpoints.is_empty() && learned > 0 {
            ensure!(
                learned == self.operators,
                "training is only supported when every operator is learned; pass checkpoints instead"
            );
        }
        self.train.validate()?;
        Ok(())
    }

    fn learner_config(&self) -> TrainConfig {
        TrainConfig {
            mode: self.mode,
            features: FeatureConfig {
                observe_competitor_prices: self.observe_competitor_prices,
                ..self.train.features
            },
            ..self.train.clone()
        }
    }
}

pub fn apply_wage_profile(s: &mut Scenario, profile: &WageProfile) {
    let mean = s.mean_wage();
    let n = s.n_regions;
    match profile {
        WageProfile::Scenario => {}
        WageProfile::Uniform => s.region_wage_mean = vec![mean; n],
        WageProfile::Spread(spread) => {
            s.region_wage_mean = (0..n)
                .map(|i| {
                    let z = if n > 1 { 2.0 * i as f64 / (n - 1) as f64 - 1.0 } else { 0.0 };
                    mean * (1.0 + spread * z)
                })
                .collect();
        }
    }
}

pub fn build_scenario(cfg: &ExperimentConfig) -> Result<Scenario> {
    let mut s = match &cfg.scenario {
        ScenarioSource::File(p) => scenario_file::load_scenario(p)?,
        ScenarioSource::Synthetic {
            n_regions,
            horizon,
            demand_cv,
            seed,
        } => generate_synthetic_scenario(*n_regions, *horizon, *demand_cv, *seed)?,
    };
    apply_wage_profile(&mut s, &cfg.wage_profile);
    Ok(s)
}

/// Fleet per operator: the whole fleet for a monopoly; otherwise split
/// `a:b` (smaller share rounded half up), or the scenario's own split.
pub fn operator_fleets(cfg: &ExperimentConfig, s: &Scenario) -> Result<Vec<u32>> {
    let total = cfg.fleet_size.unwrap_or_else(|| s.total_fleet());
    ensure!(total > 0, "fleet must be positive");
    if cfg.operators == 1 {
        return Ok(vec![total]);
    }
    let (a, b) = match cfg.fleet_split {
        Some(split) => split,
        None if cfg.fleet_size.is_none() && s.fleet_sizes.len() == 2 => {
            return Ok(s.fleet_sizes.clone());
        }
        None => (1, 1),
    };
    let first = ((total as u64 * a as u64 * 2 + (a + b) as u64) / (2 * (a + b) as u64)) as u32;
    Ok(vec![first, total - first])
}

/// Everything an experiment needs once the config is resolved.
pub struct Setup {
    pub scenario: Scenario,
    pub fleets: Vec<u32>,
    pub beta_0: f64,
}

pub fn setup(cfg: &ExperimentConfig) -> Result<Setup> {
    cfg.validate()?;
    let scenario = build_scenario(cfg)?;
    let fleets = operator_fleets(cfg, &scenario)?;
    let beta_0 = choice::calibrate_beta0(&scenario, cfg.operators)?;
    Ok(Setup {
        scenario,
        fleets,
        beta_0,
    })
}

/// Result of training every operator together.
pub struct Trained {
    pub agents: Vec<Agent>,
    pub curve: Vec<CurvePoint>,
}

pub fn train(cfg: &ExperimentConfig, setup: &Setup, mut progress: impl FnMut(&[CurvePoint])) -> Result<Trained> {
    let configs = vec![cfg.learner_config(); cfg.operators];
    let mut trainer = Trainer::new(&setup.scenario, &setup.fleets, setup.beta_0, configs, cfg.seed)?;
    let mut curve = Vec::with_capacity(cfg.train.episodes * cfg.operators);
    trainer.train(cfg.train.episodes, |p| {
        curve.extend_from_slice(p);
        progress(p);
    })?;
    Ok(Trained {
        agents: trainer.into_agents(),
        curve,
    })
}

/// Builds one policy per operator from the config and trained or
/// checkpointed parameters.
pub fn build_policies(cfg: &ExperimentConfig, learned: &[(PolicyParams, FeatureConfig, ControlMode)]) -> Result<Vec<Box<dyn Policy>>> {
    let mut next = learned.iter();
    cfg.policies
        .iter()
        .map(|kind| -> Result<Box<dyn Policy>> {
            Ok(match kind {
                PolicyKind::Nc => Box::new(NoControl),
                PolicyKind::Ud => Box::new(UniformDistribution),
                PolicyKind::Learned => {
                    let (params, features, mode) = next.next().context("missing learned parameters")?;
                    Box::new(LearnedPolicy {
                        actor: params.actor.clone(),
                        features: *features,
                        mode: *mode,
                        stochastic: cfg.stochastic_eval,
                    })
                }
            })
        })
        .collect()
}

fn run_rngs(seed: u64, run: usize) -> (ChaCha8Rng, ChaCha8Rng) {
    let mut env = ChaCha8Rng::seed_from_u64(seed);
    env.set_stream(2 * run as u64 + 16);
    let mut pol = ChaCha8Rng::seed_from_u64(seed);
    pol.set_stream(2 * run as u64 + 17);
    (env, pol)
}

/// Plays `runs` seeded episodes. Run `r` uses the same demand stream for any
/// policies that quote the same fares, so runs are paired across policies.
pub fn evaluate(setup: &Setup, policies: &[Box<dyn Policy>], runs: usize, seed: u64, competitor_prices: bool) -> Result<Vec<MetricsRow>> {
    ensure!(policies.len() == setup.fleets.len(), "one policy per operator");
    let lookahead = FeatureConfig::default().lookahead;
    let mut rows = Vec::with_capacity(runs * (policies.len() + 1));
    for run in 0..runs {
        let (mut env, mut pol) = run_rngs(seed, run);
        let mut market = Market::new(&setup.scenario, &setup.fleets, setup.beta_0);
        let mut tallies = vec![EpisodeTally::default(); policies.len()];
        while !market.is_done() {
            let actions: Vec<_> = policies
                .iter()
                .enumerate()
                .map(|(o, p)| p.act(&market.observe(o, lookahead, competitor_prices), &mut pol))
                .collect();
            let outcomes = market.advance(&actions, &mut env)?;
            for (t, out) in tallies.iter_mut().zip(&outcomes) {
                t.record(out);
            }
        }
        for (o, t) in tallies.iter().enumerate() {
            rows.push(t.row(run, o));
        }
        rows.push(EpisodeTally::total_row(run, &tallies));
    }
    Ok(rows)
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub scenario: String,
    pub mode: &'static str,
    pub operators: usize,
    pub policies: Vec<PolicyKind>,
    pub fleets: Vec<u32>,
    pub beta_0: f64,
    pub eval_runs: usize,
    pub seed: u64,
    pub wage_profile: String,
    pub observe_competitor_prices: bool,
    pub stochastic_eval: bool,
    pub train_episodes: Option<usize>,
    pub metrics: std::collections::BTreeMap<String, std::collections::BTreeMap<String, Stat>>,
}

pub struct Report {
    pub rows: Vec<MetricsRow>,
    pub summary: Summary,
}

/// Trains (when needed), evaluates, and writes `metrics.csv`,
/// `summary.json`, and for training runs `curves.csv` plus one checkpoint
/// per operator into `cfg.out_dir`.
pub fn run_experiment(cfg: &ExperimentConfig, mut log: impl FnMut(&str)) -> Result<Report> {
    let setup = setup(cfg)?;
    fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let learned_count = cfg.policies.iter().filter(|p| **p == PolicyKind::Learned).count();
    let mut learned = Vec::new();
    let mut train_episodes = None;
    if learned_count > 0 && cfg.checkpoints.is_empty() {
        log(&format!(
            "training {} operator(s) for {} episodes",
            cfg.operators, cfg.train.episodes
        ));
        let every = (cfg.train.episodes / 10).max(1);
        let trained = train(cfg, &setup, |p| {
            if (p[0].episode + 1) % every == 0 {
                let r: Vec<String> = p.iter().map(|c| format!("{:.1}", c.train_reward)).collect();
                log(&format!("episode {}: train reward {}", p[0].episode + 1, r.join(" / ")));
            }
        })?;
        write_curves(&cfg.out_dir.join("curves.csv"), &trained.curve)?;
        for (o, agent) in trained.agents.iter().enumerate() {
            let ck = Checkpoint::new(
                o,
                setup.scenario.n_regions,
                agent.config.mode,
                agent.updates(),
                &agent.config.features,
                &agent.params,
            );
            ck.save(&cfg.out_dir.join(format!("checkpoint_op{o}.json")))?;
        }
        train_episodes = Some(cfg.train.episodes);
        learned = trained
            .agents
            .into_iter()
            .map(|a| (a.params, a.config.features, a.config.mode))
            .collect();
    } else {
        for path in &cfg.checkpoints {
            let ck = Checkpoint::load(path)?;
            ensure!(
                ck.n_regions == setup.scenario.n_regions,
                "{}: trained on {} regions, scenario has {}",
                path.display(),
                ck.n_regions,
                setup.scenario.n_regions
            );
            learned.push((ck.params()?, ck.features(), ck.mode()?));
        }
    }
    let policies = build_policies(cfg, &learned)?;
    let rows = evaluate(&setup, &policies, cfg.eval_runs, cfg.seed, cfg.observe_competitor_prices)?;
    metrics::write_metrics_csv(&cfg.out_dir.join("metrics.csv"), &rows)?;
    let summary = Summary {
        scenario: setup.scenario.name.clone(),
        mode: cfg.mode.as_str(),
        operators: cfg.operators,
        policies: cfg.policies.clone(),
        fleets: setup.fleets.clone(),
        beta_0: setup.beta_0,
        eval_runs: cfg.eval_runs,
        seed: cfg.seed,
        wage_profile: cfg.wage_profile.to_string(),
        observe_competitor_prices: cfg.observe_competitor_prices,
        stochastic_eval: cfg.stochastic_eval,
        train_episodes,
        metrics: metrics::aggregate(&rows),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    fs::write(cfg.out_dir.join("summary.json"), text + "\n")?;
    Ok(Report { rows, summary })
}

pub fn write_curves(path: &Path, curve: &[CurvePoint]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for c in curve {
        w.serialize(CurveRow {
            episode: c.episode,
            op: c.operator,
            train_reward: c.train_reward,
            actor_loss: c.actor_loss,
            critic_loss: c.critic_loss,
        })?;
    }
    w.flush()?;
    Ok(())
}
