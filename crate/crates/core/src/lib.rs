//! Discrete-time simulator of a competitive autonomous mobility-on-demand
//! (AMoD) market, plus a per-operator advantage actor-critic learner.
//!
//! Operators set origin-based price scalars and a desired idle-vehicle
//! distribution every step. Passengers choose between the live operators and
//! an outside option through a multinomial logit model, queue first-come
//! first-served at their origin, and leave after the waiting cap. Idle
//! vehicles are repositioned by an integral minimum-cost flow.
//!
//! The crate is `no_std` (with `alloc`) unless the `std` feature is enabled.
//! All file formats, CLI and experiment orchestration live in `amod-sim`.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod choice;
pub mod flow;
pub mod learner;
pub mod market;
pub mod math;
pub mod policies;
pub mod scenario;

pub use choice::{ChoiceContext, ChoiceError, Passenger, RequestBatch};
pub use flow::{FlowError, RebalanceProblem};
pub use learner::{PolicyParams, TrainConfig, Trainer};
pub use market::{Action, Market, MarketError, OperatorState, Rebalance, StepOutcome};
pub use policies::{ControlMode, Observation, Policy};
pub use scenario::{Scenario, ScenarioError};
