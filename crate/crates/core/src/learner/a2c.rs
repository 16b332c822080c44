use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::dist;
use super::features::{encode_observation, FeatureConfig};
use super::net::{normalized_adjacency, GcnNet};
use crate::market::{Action, Market, MarketError, Rebalance, REFERENCE_RHO};
use crate::math;
use crate::policies::{ControlMode, Observation, Policy};
use crate::scenario::Scenario;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum LearnError {
    #[error("invalid training config: {0}")]
    Config(String),
    #[error("non-finite {what} for operator {operator} in episode {episode}")]
    NonFinite {
        what: &'static str,
        operator: usize,
        episode: usize,
    },
    #[error("parameters of operator {operator} diverged in episode {episode}")]
    Diverged { operator: usize, episode: usize },
    #[error(transparent)]
    Market(#[from] MarketError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub discount: f64,
    pub reward_scale: f64,
    pub grad_clip: f64,
    pub critic_warmup_episodes: usize,
    pub episodes: usize,
    pub hidden: usize,
    pub mode: ControlMode,
    pub features: FeatureConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            actor_lr: 2e-4,
            critic_lr: 4e-4,
            discount: 0.97,
            reward_scale: 4000.0,
            grad_clip: 1000.0,
            critic_warmup_episodes: 50,
            episodes: 150_000,
            hidden: 256,
            mode: ControlMode::Joint,
            features: FeatureConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), LearnError> {
        let positive = [
            ("actor_lr", self.actor_lr),
            ("critic_lr", self.critic_lr),
            ("reward_scale", self.reward_scale),
            ("grad_clip", self.grad_clip),
            ("feature_scale", self.features.scale),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LearnError::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.discount > 0.0 && self.discount < 1.0) {
            return Err(LearnError::Config(format!("discount {} not in (0, 1)", self.discount)));
        }
        if self.hidden == 0 || self.features.lookahead == 0 {
            return Err(LearnError::Config("hidden width and lookahead must be positive".into()));
        }
        Ok(())
    }
}

/// Actor and critic weights for one operator.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyParams {
    pub actor: GcnNet,
    pub critic: GcnNet,
}

impl PolicyParams {
    pub fn init<R: Rng + ?Sized>(n_features: usize, hidden: usize, rng: &mut R) -> Self {
        Self {
            actor: GcnNet::init(n_features, hidden, 3, rng),
            critic: GcnNet::init(n_features, hidden, 1, rng),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.actor.is_finite() && self.critic.is_finite()
    }
}

/// Per-region concentrations from the actor.
#[derive(Clone, Debug, PartialEq)]
pub struct Heads {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    /// Pre-softplus outputs, `n x 3`.
    pub raw: Vec<f64>,
}

impl Heads {
    fn from_raw(raw: Vec<f64>) -> Self {
        let n = raw.len() / 3;
        let pos = |k: usize| -> Vec<f64> {
            (0..n)
                .map(|i| math::softplus(raw[i * 3 + k]) + dist::CONCENTRATION_FLOOR)
                .collect()
        };
        Self {
            alpha: pos(0),
            beta: pos(1),
            gamma: pos(2),
            raw,
        }
    }

    fn is_finite(&self) -> bool {
        self.raw.iter().all(|v| v.is_finite())
    }
}

pub fn actor_heads(actor: &GcnNet, a_hat: &[f64], x: &[f64]) -> Heads {
    Heads::from_raw(actor.forward(a_hat, x).out)
}

pub fn critic_value(critic: &GcnNet, a_hat: &[f64], x: &[f64]) -> f64 {
    critic.forward(a_hat, x).out.iter().sum()
}

/// One sampled decision and its reward.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub a_hat: Vec<f64>,
    pub features: Vec<f64>,
    pub rho: Vec<f64>,
    pub weights: Vec<f64>,
    pub reward: f64,
}

/// Joint log-density of the controlled components of an action.
pub fn log_prob(heads: &Heads, rho: &[f64], weights: &[f64], mode: ControlMode) -> f64 {
    let mut lp = 0.0;
    if mode.controls_price() {
        for i in 0..rho.len() {
            lp += dist::beta_log_pdf(rho[i], heads.alpha[i], heads.beta[i]);
        }
    }
    if mode.controls_rebalancing() {
        lp += dist::dirichlet_log_pdf(weights, &heads.gamma);
    }
    lp
}

/// `d log_prob / d raw` for the `n x 3` pre-softplus outputs.
fn log_prob_grad_raw(heads: &Heads, rho: &[f64], weights: &[f64], mode: ControlMode) -> Vec<f64> {
    let n = rho.len();
    let mut g = vec![0.0; n * 3];
    if mode.controls_price() {
        for i in 0..n {
            let (ga, gb) = dist::beta_log_pdf_grad(rho[i], heads.alpha[i], heads.beta[i]);
            g[i * 3] = ga * math::sigmoid(heads.raw[i * 3]);
            g[i * 3 + 1] = gb * math::sigmoid(heads.raw[i * 3 + 1]);
        }
    }
    if mode.controls_rebalancing() {
        let gg = dist::dirichlet_log_pdf_grad(weights, &heads.gamma);
        for i in 0..n {
            g[i * 3 + 2] = gg[i] * math::sigmoid(heads.raw[i * 3 + 2]);
        }
    }
    g
}

/// `G_t = r_t / scale + discount * G_{t+1}` with a zero terminal value.
pub fn compute_returns(rewards: &[f64], discount: f64, scale: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut g = 0.0;
    for t in (0..rewards.len()).rev() {
        g = rewards[t] / scale + discount * g;
        out[t] = g;
    }
    out
}

/// Mean squared error between returns and summed critic outputs, with its
/// gradient. Also returns the per-step values.
pub fn critic_loss_grad(critic: &GcnNet, traj: &[Transition], returns: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let t_len = traj.len() as f64;
    let mut grad = vec![0.0; critic.params.len()];
    let mut loss = 0.0;
    let mut values = Vec::with_capacity(traj.len());
    for (tr, &g) in traj.iter().zip(returns) {
        let fwd = critic.forward(&tr.a_hat, &tr.features);
        let v: f64 = fwd.out.iter().sum();
        values.push(v);
        let err = g - v;
        loss += err * err / t_len;
        let d = vec![-2.0 * err / t_len; fwd.out.len()];
        critic.backward(&fwd, &d, &mut grad);
    }
    (loss, grad, values)
}

/// `-mean(log_prob * advantage)` with its gradient.
pub fn actor_loss_grad(actor: &GcnNet, traj: &[Transition], advantages: &[f64], mode: ControlMode) -> (f64, Vec<f64>) {
    let t_len = traj.len() as f64;
    let mut grad = vec![0.0; actor.params.len()];
    let mut loss = 0.0;
    for (tr, &adv) in traj.iter().zip(advantages) {
        let fwd = actor.forward(&tr.a_hat, &tr.features);
        let heads = Heads::from_raw(fwd.out.clone());
        loss -= log_prob(&heads, &tr.rho, &tr.weights, mode) * adv / t_len;
        if adv != 0.0 {
            let mut d = log_prob_grad_raw(&heads, &tr.rho, &tr.weights, mode);
            d.iter_mut().for_each(|v| *v *= -adv / t_len);
            actor.backward(&fwd, &d, &mut grad);
        }
    }
    (loss, grad)
}

/// Scales `grad` to at most `max_norm` in Euclidean norm; returns the norm
/// before clipping.
pub fn clip_grad_norm(grad: &mut [f64], max_norm: f64) -> f64 {
    let norm = math::sqrt(grad.iter().map(|g| g * g).sum());
    if norm > max_norm {
        let k = max_norm / norm;
        grad.iter_mut().for_each(|g| *g *= k);
    }
    norm
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: u32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(len: usize, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - math::powf(self.beta1, self.t as f64);
        let c2 = 1.0 - math::powf(self.beta2, self.t as f64);
        for k in 0..params.len() {
            let g = grad[k];
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g;
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g;
            let m_hat = self.m[k] / c1;
            let v_hat = self.v[k] / c2;
            params[k] -= self.lr * m_hat / (math::sqrt(v_hat) + self.eps);
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateStats {
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub actor_updated: bool,
}

/// One operator's learner: parameters, optimisers, and config.
#[derive(Clone, Debug)]
pub struct Agent {
    pub params: PolicyParams,
    pub config: TrainConfig,
    actor_opt: Adam,
    critic_opt: Adam,
    updates: usize,
}

impl Agent {
    pub fn new<R: Rng + ?Sized>(n_regions: usize, config: TrainConfig, rng: &mut R) -> Result<Self, LearnError> {
        config.validate()?;
        let params = PolicyParams::init(config.features.n_features(n_regions), config.hidden, rng);
        Ok(Self::from_params(params, config))
    }

    pub fn from_params(params: PolicyParams, config: TrainConfig) -> Self {
        let actor_opt = Adam::new(params.actor.params.len(), config.actor_lr);
        let critic_opt = Adam::new(params.critic.params.len(), config.critic_lr);
        Self {
            params,
            config,
            actor_opt,
            critic_opt,
            updates: 0,
        }
    }

    pub fn updates(&self) -> usize {
        self.updates
    }

    /// Samples an action; the returned transition has a zero reward.
    pub fn sample<R: Rng + ?Sized>(&self, obs: &Observation, rng: &mut R) -> Result<(Action, Transition), LearnError> {
        let a_hat = normalized_adjacency(obs.n_regions, &obs.adjacency);
        let features = encode_observation(obs, &self.config.features);
        let heads = actor_heads(&self.params.actor, &a_hat, &features);
        if !heads.is_finite() {
            return Err(LearnError::NonFinite {
                what: "actor output",
                operator: 0,
                episode: self.updates,
            });
        }
        let (rho, weights) = sample_heads(&heads, self.config.mode, rng);
        let action = build_action(self.config.mode, &rho, &weights)?;
        Ok((
            action,
            Transition {
                a_hat,
                features,
                rho,
                weights,
                reward: 0.0,
            },
        ))
    }

    /// One A2C update from a complete episode. The actor is left untouched
    /// during the critic warmup.
    pub fn update(&mut self, traj: &[Transition]) -> Result<UpdateStats, LearnError> {
        let cfg = &self.config;
        let episode = self.updates;
        let rewards: Vec<f64> = traj.iter().map(|t| t.reward).collect();
        let returns = compute_returns(&rewards, cfg.discount, cfg.reward_scale);
        let (critic_loss, mut critic_grad, values) = critic_loss_grad(&self.params.critic, traj, &returns);
        let advantages: Vec<f64> = returns.iter().zip(&values).map(|(g, v)| g - v).collect();
        let (actor_loss, mut actor_grad) = actor_loss_grad(&self.params.actor, traj, &advantages, cfg.mode);
        if !critic_loss.is_finite() {
            return Err(LearnError::NonFinite {
                what: "critic loss",
                operator: 0,
                episode,
            });
        }
        if !actor_loss.is_finite() {
            return Err(LearnError::NonFinite {
                what: "actor loss",
                operator: 0,
                episode,
            });
        }
        clip_grad_norm(&mut critic_grad, cfg.grad_clip);
        self.critic_opt.step(&mut self.params.critic.params, &critic_grad);
        let actor_updated = episode >= cfg.critic_warmup_episodes;
        if actor_updated {
            clip_grad_norm(&mut actor_grad, cfg.grad_clip);
            self.actor_opt.step(&mut self.params.actor.params, &actor_grad);
        }
        if !self.params.is_finite() {
            return Err(LearnError::Diverged { operator: 0, episode });
        }
        self.updates += 1;
        Ok(UpdateStats {
            actor_loss,
            critic_loss,
            actor_updated,
        })
    }

    pub fn policy(&self, stochastic: bool) -> LearnedPolicy {
        LearnedPolicy {
            actor: self.params.actor.clone(),
            features: self.config.features,
            mode: self.config.mode,
            stochastic,
        }
    }
}

fn sample_heads<R: Rng + ?Sized>(heads: &Heads, mode: ControlMode, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let n = heads.alpha.len();
    let rho = if mode.controls_price() {
        (0..n)
            .map(|i| dist::sample_beta(heads.alpha[i], heads.beta[i], rng))
            .collect()
    } else {
        vec![REFERENCE_RHO; n]
    };
    let weights = if mode.controls_rebalancing() {
        dist::sample_dirichlet(&heads.gamma, rng)
    } else {
        vec![1.0 / n as f64; n]
    };
    (rho, weights)
}

fn build_action(mode: ControlMode, rho: &[f64], weights: &[f64]) -> Result<Action, MarketError> {
    mode.action(rho.to_vec(), Rebalance::Target(weights.to_vec()))
}

/// Frozen actor used for evaluation. Acts with distribution means unless
/// `stochastic` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnedPolicy {
    pub actor: GcnNet,
    pub features: FeatureConfig,
    pub mode: ControlMode,
    pub stochastic: bool,
}

impl LearnedPolicy {
    pub fn heads(&self, obs: &Observation) -> Heads {
        let a_hat = normalized_adjacency(obs.n_regions, &obs.adjacency);
        let x = encode_observation(obs, &self.features);
        actor_heads(&self.actor, &a_hat, &x)
    }
}

impl Policy for LearnedPolicy {
    fn act(&self, obs: &Observation, rng: &mut dyn RngCore) -> Action {
        let heads = self.heads(obs);
        assert!(heads.is_finite(), "non-finite actor output at step {}", obs.step);
        let (rho, weights) = if self.stochastic {
            sample_heads(&heads, self.mode, rng)
        } else {
            let n = obs.n_regions;
            (
                (0..n).map(|i| dist::beta_mean(heads.alpha[i], heads.beta[i])).collect(),
                dist::dirichlet_mean(&heads.gamma),
            )
        };
        build_action(self.mode, &rho, &weights).expect("actor heads yield valid actions")
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub episode: usize,
    pub operator: usize,
    pub train_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
    pub mean_rho: f64,
}

/// Simultaneous independent training of every operator in a shared market.
pub struct Trainer<'s> {
    scenario: &'s Scenario,
    fleets: Vec<u32>,
    beta_0: f64,
    agents: Vec<Agent>,
    env_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
    episode: usize,
}

impl<'s> Trainer<'s> {
    pub fn new(
        scenario: &'s Scenario,
        fleets: &[u32],
        beta_0: f64,
        configs: Vec<TrainConfig>,
        seed: u64,
    ) -> Result<Self, LearnError> {
        if configs.len() != fleets.len() {
            return Err(LearnError::Config(format!(
                "{} configs for {} operators",
                configs.len(),
                fleets.len()
            )));
        }
        let mut init_rng = ChaCha8Rng::seed_from_u64(seed);
        init_rng.set_stream(1);
        let agents = configs
            .into_iter()
            .map(|c| Agent::new(scenario.n_regions, c, &mut init_rng))
            .collect::<Result<Vec<_>, _>>()?;
        let mut env_rng = ChaCha8Rng::seed_from_u64(seed);
        env_rng.set_stream(2);
        let mut policy_rng = ChaCha8Rng::seed_from_u64(seed);
        policy_rng.set_stream(3);
        Ok(Self {
            scenario,
            fleets: fleets.to_vec(),
            beta_0,
            agents,
            env_rng,
            policy_rng,
            episode: 0,
        })
    }

    pub fn agents(&self) -> &[Agent] {
        &self.agents
    }

    pub fn into_agents(self) -> Vec<Agent> {
        self.agents
    }

    pub fn episode(&self) -> usize {
        self.episode
    }

    /// Plays one episode and updates every operator from its own trajectory.
    pub fn run_episode(&mut self) -> Result<Vec<CurvePoint>, LearnError> {
        let episode = self.episode;
        let n_ops = self.agents.len();
        let mut market = Market::new(self.scenario, &self.fleets, self.beta_0);
        let mut trajectories: Vec<Vec<Transition>> = vec![Vec::with_capacity(self.scenario.horizon); n_ops];
        let mut rho_sum = vec![0.0; n_ops];
        while !market.is_done() {
            let mut actions = Vec::with_capacity(n_ops);
            for (o, agent) in self.agents.iter().enumerate() {
                let f = &agent.config.features;
                let obs = market.observe(o, f.lookahead, f.observe_competitor_prices);
                let (action, tr) = agent.sample(&obs, &mut self.policy_rng).map_err(|e| tag(e, o, episode))?;
                rho_sum[o] += action.mean_rho();
                actions.push(action);
                trajectories[o].push(tr);
            }
            let outcomes = market.advance(&actions, &mut self.env_rng)?;
            for (o, out) in outcomes.iter().enumerate() {
                trajectories[o].last_mut().expect("pushed above").reward = out.reward;
            }
        }
        let mut points = Vec::with_capacity(n_ops);
        for (o, agent) in self.agents.iter_mut().enumerate() {
            let traj = &trajectories[o];
            let stats = agent.update(traj).map_err(|e| tag(e, o, episode))?;
            points.push(CurvePoint {
                episode,
                operator: o,
                train_reward: traj.iter().map(|t| t.reward).sum(),
                actor_loss: stats.actor_loss,
                critic_loss: stats.critic_loss,
                mean_rho: rho_sum[o] / traj.len() as f64,
            });
        }
        self.episode += 1;
        Ok(points)
    }

    pub fn train(&mut self, episodes: usize, mut on_episode: impl FnMut(&[CurvePoint])) -> Result<(), LearnError> {
        for _ in 0..episodes {
            let points = self.run_episode()?;
            on_episode(&points);
        }
        Ok(())
    }
}

fn tag(e: LearnError, operator: usize, episode: usize) -> LearnError {
    match e {
        LearnError::NonFinite { what, .. } => LearnError::NonFinite {
            what,
            operator,
            episode,
        },
        LearnError::Diverged { .. } => LearnError::Diverged { operator, episode },
        other => other,
    }
}

/// Trains one learner per fleet for `configs[0].episodes` episodes; returns
/// the final parameters and the per-episode curve.
pub fn train_dual(
    scenario: &Scenario,
    fleets: &[u32],
    beta_0: f64,
    configs: Vec<TrainConfig>,
    seed: u64,
) -> Result<(Vec<PolicyParams>, Vec<CurvePoint>), LearnError> {
    let episodes = configs.first().map_or(0, |c| c.episodes);
    let mut trainer = Trainer::new(scenario, fleets, beta_0, configs, seed)?;
    let mut curve = Vec::new();
    trainer.train(episodes, |p| curve.extend_from_slice(p))?;
    Ok((trainer.into_agents().into_iter().map(|a| a.params).collect(), curve))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn returns_examples() {
        assert_eq!(compute_returns(&[0.0; 20], 0.97, 4000.0), vec![0.0; 20]);
        let mut r = vec![0.0; 20];
        r[19] = 4000.0;
        let g = compute_returns(&r, 0.97, 4000.0);
        for t in 0..20 {
            assert!((g[t] - math::powf(0.97, (19 - t) as f64)).abs() < 1e-15);
        }
    }

    #[test]
    fn clipping_caps_the_norm() {
        let mut g = vec![3.0, 4.0];
        assert_eq!(clip_grad_norm(&mut g, 1.0), 5.0);
        assert!((g[0] - 0.6).abs() < 1e-15 && (g[1] - 0.8).abs() < 1e-15);
        let mut g = vec![0.3, 0.4];
        clip_grad_norm(&mut g, 1.0);
        assert_eq!(g, vec![0.3, 0.4]);
    }

    #[test]
    fn zero_weights_give_constant_heads() {
        let net = GcnNet::zeros(12, 8, 3);
        let a = normalized_adjacency(3, &[false, true, false, true, false, true, false, true, false]);
        let h = actor_heads(&net, &a, &[0.3; 36]);
        let c = math::softplus(0.0) + dist::CONCENTRATION_FLOOR;
        assert!(h.alpha.iter().chain(&h.beta).chain(&h.gamma).all(|&v| v == c));
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        let bad = TrainConfig {
            discount: 1.0,
            ..TrainConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
