use amod_core::learner::dist::{self, beta_log_pdf, dirichlet_log_pdf};
use amod_core::learner::{
    actor_heads, actor_loss_grad, compute_returns, critic_loss_grad, encode_observation, log_prob,
    normalized_adjacency, Agent, FeatureConfig, GcnNet, TrainConfig, Transition,
};
use amod_core::ControlMode;
use amod_core::Observation;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const TRIANGLE_LINE: [bool; 9] = [false, true, false, true, false, true, false, true, false];

fn random_features(rng: &mut ChaCha8Rng, n: usize, f: usize) -> Vec<f64> {
    (0..n * f).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn random_trajectory(rng: &mut ChaCha8Rng, n: usize, f: usize, len: usize) -> Vec<Transition> {
    let a_hat = normalized_adjacency(n, &TRIANGLE_LINE);
    (0..len)
        .map(|_| {
            let gamma: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..3.0)).collect();
            Transition {
                a_hat: a_hat.clone(),
                features: random_features(rng, n, f),
                rho: (0..n).map(|_| rng.random_range(0.05..0.95)).collect(),
                weights: dist::sample_dirichlet(&gamma, rng),
                reward: rng.random_range(-500.0..3000.0),
            }
        })
        .collect()
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

fn max_fd_error(net: &GcnNet, grad: &[f64], loss: impl Fn(&GcnNet) -> f64) -> f64 {
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for k in 0..net.params.len() {
        let mut plus = net.clone();
        plus.params[k] += h;
        let mut minus = net.clone();
        minus.params[k] -= h;
        let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
        worst = worst.max(relative_error(grad[k], fd));
    }
    worst
}

#[test]
fn actor_and_critic_gradients_match_finite_differences() {
    let (n, f, hidden) = (3, 12, 8);
    let mut worst: f64 = 0.0;
    for draw in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(draw);
        let actor = GcnNet::init(f, hidden, 3, &mut rng);
        let critic = GcnNet::init(f, hidden, 1, &mut rng);
        let traj = random_trajectory(&mut rng, n, f, 5);
        let returns: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
        let adv: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();

        let (_, grad) = actor_loss_grad(&actor, &traj, &adv, ControlMode::Joint);
        worst = worst.max(max_fd_error(&actor, &grad, |net| {
            actor_loss_grad(net, &traj, &adv, ControlMode::Joint).0
        }));
        let (_, grad, _) = critic_loss_grad(&critic, &traj, &returns);
        worst = worst.max(max_fd_error(&critic, &grad, |net| {
            critic_loss_grad(net, &traj, &returns).0
        }));
    }
    assert!(worst < 1e-3, "max relative error {worst}");
}

#[test]
fn restricted_modes_leave_the_unused_head_without_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let actor = GcnNet::init(12, 8, 3, &mut rng);
    let traj = random_trajectory(&mut rng, 3, 12, 4);
    let adv = [0.3, -0.2, 0.5, 1.0];
    let fc2_w = actor.tensors()[..4].iter().map(|t| t.2.len()).sum::<usize>();
    for (mode, unused) in [(ControlMode::Pricing, 2usize), (ControlMode::Rebalancing, 0)] {
        let (_, grad) = actor_loss_grad(&actor, &traj, &adv, mode);
        for row in 0..8 {
            assert_eq!(grad[fc2_w + row * 3 + unused], 0.0, "{mode:?}");
        }
    }
}

#[test]
fn log_prob_matches_density_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let n = 4;
    let a_hat = normalized_adjacency(n, &[false; 16]);
    let actor = GcnNet::init(12, 8, 3, &mut rng);
    for _ in 0..100 {
        let x = random_features(&mut rng, n, 12);
        let heads = actor_heads(&actor, &a_hat, &x);
        let rho: Vec<f64> = (0..n).map(|i| dist::sample_beta(heads.alpha[i], heads.beta[i], &mut rng)).collect();
        let w = dist::sample_dirichlet(&heads.gamma, &mut rng);
        let got = log_prob(&heads, &rho, &w, ControlMode::Joint);

        // Independent evaluation from the raw outputs via the gamma function.
        let sp = |v: f64| (1.0 + v.exp()).ln() + 1e-3;
        let mut want = 0.0;
        let mut gsum = 0.0;
        for i in 0..n {
            let (a, b, g) = (sp(heads.raw[i * 3]), sp(heads.raw[i * 3 + 1]), sp(heads.raw[i * 3 + 2]));
            let norm = libm::tgamma(a + b) / (libm::tgamma(a) * libm::tgamma(b));
            want += (norm * rho[i].powf(a - 1.0) * (1.0 - rho[i]).powf(b - 1.0)).ln();
            want += (g - 1.0) * w[i].ln() - libm::lgamma(g);
            gsum += g;
        }
        want += libm::lgamma(gsum);
        assert!((got - want).abs() < 1e-9 * want.abs().max(1.0), "{got} vs {want}");
        let parts: f64 = (0..n).map(|i| beta_log_pdf(rho[i], heads.alpha[i], heads.beta[i])).sum::<f64>()
            + dirichlet_log_pdf(&w, &heads.gamma);
        assert_eq!(got, parts);
    }
}

#[test]
fn returns_match_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let r: Vec<f64> = (0..20).map(|_| rng.random_range(-3000.0..6000.0)).collect();
        let g = compute_returns(&r, 0.97, 4000.0);
        for t in 0..20 {
            let mut want = 0.0;
            for k in t..20 {
                want += 0.97f64.powi((k - t) as i32) * r[k] / 4000.0;
            }
            assert!((g[t] - want).abs() < 1e-12);
        }
    }
}

fn micro_obs(n: usize, adjacency: Vec<bool>, rng: &mut ChaCha8Rng) -> Observation {
    Observation {
        step: 4,
        horizon: 20,
        n_regions: n,
        adjacency,
        idle: (0..n).map(|_| rng.random_range(0..10)).collect(),
        lookahead: 6,
        arrivals: (0..n * 6).map(|_| rng.random_range(0..4)).collect(),
        queue_len: (0..n).map(|_| rng.random_range(0..6)).collect(),
        last_demand: (0..n).map(|_| rng.random_range(0..6)).collect(),
        own_origin_fare: (0..n).map(|_| rng.random_range(5.0..15.0)).collect(),
        competitor_origin_fare: Some((0..n).map(|_| rng.random_range(5.0..15.0)).collect()),
        own_last_prices: vec![0.0; n * n],
        competitor_last_prices: None,
    }
}

#[test]
fn encoder_is_permutation_equivariant() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let n = 5;
    let mut adj = vec![false; n * n];
    for (i, j) in [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)] {
        adj[i * n + j] = true;
        adj[j * n + i] = true;
    }
    let cfg = FeatureConfig::default();
    let actor = GcnNet::init(cfg.n_features(n), 16, 3, &mut rng);
    let obs = micro_obs(n, adj.clone(), &mut rng);
    let perm = [3, 0, 4, 1, 2];
    let mut pobs = obs.clone();
    for (new, &old) in perm.iter().enumerate() {
        pobs.idle[new] = obs.idle[old];
        pobs.queue_len[new] = obs.queue_len[old];
        pobs.last_demand[new] = obs.last_demand[old];
        pobs.own_origin_fare[new] = obs.own_origin_fare[old];
        pobs.competitor_origin_fare.as_mut().unwrap()[new] = obs.competitor_origin_fare.as_ref().unwrap()[old];
        for k in 0..6 {
            pobs.arrivals[new * 6 + k] = obs.arrivals[old * 6 + k];
        }
        for (new2, &old2) in perm.iter().enumerate() {
            pobs.adjacency[new * n + new2] = adj[old * n + old2];
        }
    }
    let run = |o: &Observation| {
        let x = encode_observation(o, &cfg);
        actor_heads(&actor, &normalized_adjacency(n, &o.adjacency), &x)
    };
    let h = run(&obs);
    let ph = run(&pobs);
    for (new, &old) in perm.iter().enumerate() {
        assert!((ph.alpha[new] - h.alpha[old]).abs() < 1e-12);
        assert!((ph.beta[new] - h.beta[old]).abs() < 1e-12);
        assert!((ph.gamma[new] - h.gamma[old]).abs() < 1e-12);
    }
}

#[test]
fn non_neighbours_do_not_influence_a_node() {
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let n = 4;
    // path 0 - 1 - 2 - 3
    let mut adj = vec![false; n * n];
    for i in 0..3 {
        adj[i * n + i + 1] = true;
        adj[(i + 1) * n + i] = true;
    }
    let cfg = FeatureConfig::default();
    let actor = GcnNet::init(cfg.n_features(n), 16, 3, &mut rng);
    let a_hat = normalized_adjacency(n, &adj);
    let obs = micro_obs(n, adj, &mut rng);
    let x = encode_observation(&obs, &cfg);
    let base = actor_heads(&actor, &a_hat, &x);
    let mut probe = obs.clone();
    probe.idle[3] += 50;
    probe.queue_len[3] += 9;
    let px = encode_observation(&probe, &cfg);
    let moved = actor_heads(&actor, &a_hat, &px);
    assert_eq!(base.raw[0..3], moved.raw[0..3]);
    assert_ne!(base.raw[6..9], moved.raw[6..9]);
}

fn agent(cfg: TrainConfig, seed: u64) -> Agent {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Agent::new(3, cfg, &mut rng).unwrap()
}

fn small_config() -> TrainConfig {
    TrainConfig {
        hidden: 16,
        ..TrainConfig::default()
    }
}

#[test]
fn actor_is_frozen_during_critic_warmup() {
    let mut a = agent(small_config(), 1);
    let before = a.params.actor.clone();
    let critic_before = a.params.critic.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let traj = random_trajectory(&mut rng, 3, 12, 20);
        assert!(!a.update(&traj).unwrap().actor_updated);
    }
    assert_eq!(a.params.actor, before);
    assert_ne!(a.params.critic, critic_before);
    let traj = random_trajectory(&mut rng, 3, 12, 20);
    assert!(a.update(&traj).unwrap().actor_updated);
    assert_ne!(a.params.actor, before);
}

#[test]
fn zero_advantage_leaves_actor_unchanged() {
    let cfg = TrainConfig {
        critic_warmup_episodes: 0,
        ..small_config()
    };
    let mut a = agent(cfg, 3);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut traj = random_trajectory(&mut rng, 3, 12, 20);
    // Rewards equal to what the critic predicts make every advantage zero.
    let values = critic_loss_grad(&a.params.critic, &traj, &vec![0.0; 20]).2;
    let scale = a.config.reward_scale;
    for t in 0..20 {
        let next = if t + 1 < 20 { values[t + 1] } else { 0.0 };
        traj[t].reward = (values[t] - a.config.discount * next) * scale;
    }
    let returns = compute_returns(&traj.iter().map(|t| t.reward).collect::<Vec<_>>(), a.config.discount, scale);
    for (g, v) in returns.iter().zip(&values) {
        assert!((g - v).abs() < 1e-12);
    }
    let adv: Vec<f64> = vec![0.0; 20];
    let (_, grad) = actor_loss_grad(&a.params.actor, &traj, &adv, ControlMode::Joint);
    assert!(grad.iter().all(|&g| g == 0.0));
    let before = a.params.actor.clone();
    a.update(&traj).unwrap();
    let drift = a
        .params
        .actor
        .params
        .iter()
        .zip(&before.params)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    assert!(drift < 1e-9, "actor moved by {drift}");
}

#[test]
fn updates_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let traj = random_trajectory(&mut rng, 3, 12, 20);
    let mut a = agent(small_config(), 6);
    let mut b = a.clone();
    a.update(&traj).unwrap();
    b.update(&traj).unwrap();
    assert_eq!(a.params, b.params);
}

#[test]
fn critic_fits_a_constant_return() {
    let cfg = TrainConfig {
        critic_lr: 2e-3,
        ..small_config()
    };
    let mut a = agent(cfg, 7);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let traj_len = 20;
    let target = 0.8;
    // Rewards chosen so that every discounted return equals `target`.
    let scale = a.config.reward_scale;
    let disc = a.config.discount;
    let mut traj = random_trajectory(&mut rng, 3, 12, traj_len);
    for t in 0..traj_len {
        let next = if t + 1 < traj_len { target } else { 0.0 };
        traj[t].reward = (target - disc * next) * scale;
    }
    for _ in 0..500 {
        a.update(&traj).unwrap();
    }
    let values = critic_loss_grad(&a.params.critic, &traj, &vec![0.0; traj_len]).2;
    for v in values {
        assert!((v - target).abs() < 0.01 * target, "{v}");
    }
}

#[test]
fn sampled_actions_are_valid_for_extreme_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for scale in [1e-3, 1.0, 50.0] {
        let mut a = agent(small_config(), 11);
        a.params.actor.params.iter_mut().for_each(|p| *p *= scale);
        for _ in 0..50 {
            let obs = micro_obs(3, TRIANGLE_LINE.to_vec(), &mut rng);
            let (action, tr) = a.sample(&obs, &mut rng).unwrap();
            assert!(action.rho().iter().all(|&r| r > 0.0 && r <= 1.0));
            assert!((tr.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}
