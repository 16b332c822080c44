//! Per-operator advantage actor-critic.
//!
//! Each operator owns an actor (graph convolution, two dense layers, and
//! softplus heads giving per-region Beta and Dirichlet concentrations) and a
//! critic of the same shape whose per-node outputs are summed into a state
//! value. Updates are Monte-Carlo over full episodes.

mod a2c;
pub mod dist;
pub mod features;
pub mod net;

pub use a2c::{
    actor_heads, actor_loss_grad, clip_grad_norm, compute_returns, critic_loss_grad, critic_value, log_prob,
    train_dual, Adam, Agent, CurvePoint, Heads, LearnError, LearnedPolicy, PolicyParams, TrainConfig, Trainer,
    Transition, UpdateStats,
};
pub use features::{encode_observation, FeatureConfig};
pub use net::{normalized_adjacency, GcnNet};
