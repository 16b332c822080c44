//! Policy interface, fixed baselines, and control-mode restrictions.

use alloc::vec;
use alloc::vec::Vec;

use rand::RngCore;

use crate::market::{Action, MarketError, Rebalance, REFERENCE_RHO};

/// Which levers an operator controls.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ControlMode {
    /// Rebalancing only; prices stay at the reference scalar.
    Rebalancing,
    /// Pricing only; no rebalancing moves.
    Pricing,
    Joint,
}

impl ControlMode {
    pub fn controls_price(self) -> bool {
        matches!(self, Self::Pricing | Self::Joint)
    }

    pub fn controls_rebalancing(self) -> bool {
        matches!(self, Self::Rebalancing | Self::Joint)
    }

    /// Builds an action, substituting the fixed component for any lever the
    /// mode does not control.
    pub fn action(self, rho: Vec<f64>, rebalance: Rebalance) -> Result<Action, MarketError> {
        let n = rho.len();
        let rho = if self.controls_price() {
            rho
        } else {
            vec![REFERENCE_RHO; n]
        };
        let rebalance = if self.controls_rebalancing() {
            rebalance
        } else {
            Rebalance::Hold
        };
        Action::new(rho, rebalance)
    }

    /// Whether `action` respects the fixed components of this mode.
    pub fn admits(self, action: &Action) -> bool {
        (self.controls_price() || action.rho().iter().all(|&r| r == REFERENCE_RHO))
            && (self.controls_rebalancing() || *action.rebalance() == Rebalance::Hold)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Rebalancing => "reb",
            Self::Pricing => "price",
            Self::Joint => "joint",
        }
    }
}

impl core::str::FromStr for ControlMode {
    type Err = MarketError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "reb" => Ok(Self::Rebalancing),
            "price" => Ok(Self::Pricing),
            "joint" => Ok(Self::Joint),
            other => Err(MarketError::InvalidAction(alloc::format!("unknown control mode {other:?}"))),
        }
    }
}

/// What one operator sees at the start of a step. Competitor information is
/// limited to last-step prices, and only when sharing is enabled.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub step: usize,
    pub horizon: usize,
    pub n_regions: usize,
    /// Row-major adjacency, no self-loops.
    pub adjacency: Vec<bool>,
    pub idle: Vec<u32>,
    pub lookahead: usize,
    /// `arrivals[i * lookahead + k - 1]`: own vehicles reaching `i` in `k` steps.
    pub arrivals: Vec<u32>,
    pub queue_len: Vec<u32>,
    pub last_demand: Vec<u32>,
    /// Reference-demand-weighted mean of last fares per origin.
    pub own_origin_fare: Vec<f64>,
    pub competitor_origin_fare: Option<Vec<f64>>,
    pub own_last_prices: Vec<f64>,
    pub competitor_last_prices: Option<Vec<f64>>,
}

pub trait Policy {
    fn act(&self, obs: &Observation, rng: &mut dyn RngCore) -> Action;
}

/// No control: reference prices and no rebalancing.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoControl;

impl Policy for NoControl {
    fn act(&self, obs: &Observation, _rng: &mut dyn RngCore) -> Action {
        Action::reference(obs.n_regions)
    }
}

/// Reference prices and an even spread of idle vehicles.
#[derive(Clone, Copy, Debug, Default)]
pub struct UniformDistribution;

impl Policy for UniformDistribution {
    fn act(&self, obs: &Observation, _rng: &mut dyn RngCore) -> Action {
        let n = obs.n_regions;
        Action::new(vec![REFERENCE_RHO; n], Rebalance::Target(vec![1.0 / n as f64; n]))
            .expect("uniform action is valid")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn obs(n: usize) -> Observation {
        Observation {
            step: 3,
            horizon: 20,
            n_regions: n,
            adjacency: vec![false; n * n],
            idle: vec![1; n],
            lookahead: 6,
            arrivals: vec![0; n * 6],
            queue_len: vec![0; n],
            last_demand: vec![0; n],
            own_origin_fare: vec![0.0; n],
            competitor_origin_fare: None,
            own_last_prices: vec![0.0; n * n],
            competitor_last_prices: None,
        }
    }

    #[test]
    fn baselines() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = NoControl.act(&obs(4), &mut rng);
        assert_eq!(a.rho(), &[0.5; 4]);
        assert_eq!(*a.rebalance(), Rebalance::Hold);
        let a = UniformDistribution.act(&obs(4), &mut rng);
        assert_eq!(a.rho(), &[0.5; 4]);
        assert_eq!(*a.rebalance(), Rebalance::Target(vec![0.25; 4]));
    }

    #[test]
    fn modes_fix_uncontrolled_levers() {
        let w = Rebalance::Target(vec![0.5, 0.5]);
        let a = ControlMode::Rebalancing.action(vec![0.9, 0.1], w.clone()).unwrap();
        assert_eq!(a.rho(), &[0.5, 0.5]);
        assert_eq!(*a.rebalance(), w);
        let a = ControlMode::Pricing.action(vec![0.9, 0.1], w.clone()).unwrap();
        assert_eq!(a.rho(), &[0.9, 0.1]);
        assert_eq!(*a.rebalance(), Rebalance::Hold);
        let joint = ControlMode::Joint.action(vec![0.9, 0.1], w).unwrap();
        assert!(ControlMode::Joint.admits(&joint));
        assert!(!ControlMode::Pricing.admits(&joint));
        assert!(!ControlMode::Rebalancing.admits(&joint));
    }

    #[test]
    fn mode_names_round_trip() {
        for m in [ControlMode::Rebalancing, ControlMode::Pricing, ControlMode::Joint] {
            assert_eq!(m.as_str().parse::<ControlMode>().unwrap(), m);
        }
        assert!("both".parse::<ControlMode>().is_err());
    }
}
