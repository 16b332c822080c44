//! Discrete-time market engine.
//!
//! One call to [`Market::advance`] runs a full tick for every operator:
//! fares from the price scalars, passenger generation and FCFS matching,
//! expiry of passengers past the waiting cap, min-cost-flow rebalancing, and
//! the transition to the next step.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::choice::{self, Passenger};
use crate::flow::{self, FlowError, RebalanceProblem};
use crate::policies::Observation;
use crate::scenario::Scenario;

/// Price scalar used by the fixed-price baselines; maps fares to the
/// reference price when the price cap is 2.
pub const REFERENCE_RHO: f64 = 0.5;
const WEIGHT_SUM_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum MarketError {
    #[error("invalid action: {0}")]
    InvalidAction(String),
    #[error("dispatch of {requested} vehicles from region {region} exceeds {idle} idle")]
    Infeasible {
        region: usize,
        requested: u64,
        idle: u32,
    },
    #[error("expected {expected} actions, got {found}")]
    OperatorCount { expected: usize, found: usize },
    #[error("episode already finished at step {0}")]
    Finished(usize),
    #[error("rebalancing solver: {0}")]
    Flow(#[from] FlowError),
}

/// How an operator wants its idle vehicles distributed after matching.
#[derive(Clone, Debug, PartialEq)]
pub enum Rebalance {
    /// Keep the current idle distribution; the flow problem has a zero-cost
    /// optimum with no moves.
    Hold,
    /// Desired shares per region, non-negative and summing to one.
    Target(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    rho: Vec<f64>,
    rebalance: Rebalance,
}

impl Action {
    pub fn new(rho: Vec<f64>, rebalance: Rebalance) -> Result<Self, MarketError> {
        for (i, &r) in rho.iter().enumerate() {
            if !(r > 0.0 && r <= 1.0) {
                return Err(MarketError::InvalidAction(format!("rho[{i}] = {r} not in (0, 1]")));
            }
        }
        if let Rebalance::Target(w) = &rebalance {
            if w.len() != rho.len() {
                return Err(MarketError::InvalidAction(format!(
                    "{} weights for {} regions",
                    w.len(),
                    rho.len()
                )));
            }
            if w.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) {
                return Err(MarketError::InvalidAction("negative weight".into()));
            }
            let sum: f64 = w.iter().sum();
            if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                return Err(MarketError::InvalidAction(format!("weights sum to {sum}")));
            }
        }
        Ok(Self { rho, rebalance })
    }

    /// Reference prices everywhere, no rebalancing.
    pub fn reference(n: usize) -> Self {
        Self {
            rho: vec![REFERENCE_RHO; n],
            rebalance: Rebalance::Hold,
        }
    }

    pub fn rho(&self) -> &[f64] {
        &self.rho
    }

    pub fn rebalance(&self) -> &Rebalance {
        &self.rebalance
    }

    pub fn mean_rho(&self) -> f64 {
        self.rho.iter().sum::<f64>() / self.rho.len() as f64
    }
}

/// Fares `p_ij = beta * rho_i * pbar_ij` for step `t`.
pub fn compute_fares(s: &Scenario, rho: &[f64], t: usize) -> Result<Vec<f64>, MarketError> {
    let n = s.n_regions;
    if rho.len() != n {
        return Err(MarketError::InvalidAction(format!("{} price scalars for {n} regions", rho.len())));
    }
    let mut fares = vec![0.0; n * n];
    for i in 0..n {
        let r = rho[i];
        if !(r > 0.0 && r <= 1.0) {
            return Err(MarketError::InvalidAction(format!("rho[{i}] = {r} not in (0, 1]")));
        }
        for j in 0..n {
            fares[i * n + j] = s.price_cap_beta * r * s.price(t, i, j);
        }
    }
    Ok(fares)
}

/// Operator profit for one step: trip revenue net of trip cost, minus the
/// cost of rebalancing moves.
pub fn compute_reward(s: &Scenario, served: &[u32], rebalanced: &[u32], fares: &[f64], t: usize) -> f64 {
    let n = s.n_regions;
    let mut r = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            let c = s.cost(t, i, j);
            if served[k] > 0 {
                r += served[k] as f64 * (fares[k] - c);
            }
            if rebalanced[k] > 0 {
                r -= rebalanced[k] as f64 * c;
            }
        }
    }
    r
}

/// Queue length after new arrivals `d` and `x` matches.
pub fn queue_update(previous: u32, arrivals: u32, served: u32) -> u32 {
    previous + arrivals - served
}

#[derive(Clone, Debug, PartialEq)]
pub struct Matching {
    pub served: Vec<u32>,
    pub wait_minutes: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OperatorState {
    pub fleet: u32,
    pub idle: Vec<u32>,
    /// `arrivals[(k - 1) * n + i]`: vehicles landing at `i` in `k` steps.
    arrivals: Vec<u32>,
    transit_horizon: usize,
    pub queues: Vec<VecDeque<Passenger>>,
    pub last_prices: Vec<f64>,
    pub last_demand: Vec<u32>,
    pub profit: f64,
}

impl OperatorState {
    /// Fleet spread as evenly as possible; remainders go to the lowest indices.
    pub fn new(s: &Scenario, fleet: u32) -> Self {
        let n = s.n_regions as u32;
        let idle = (0..n)
            .map(|i| fleet / n + u32::from(i < fleet % n))
            .collect();
        Self::with_idle(s, idle)
    }

    pub fn with_idle(s: &Scenario, idle: Vec<u32>) -> Self {
        let n = s.n_regions;
        let horizon = s.max_travel_time() as usize;
        let last_prices = (0..n * n)
            .map(|k| s.price_cap_beta * REFERENCE_RHO * s.ref_price[k])
            .collect();
        Self {
            fleet: idle.iter().sum(),
            idle,
            arrivals: vec![0; horizon * n],
            transit_horizon: horizon,
            queues: (0..n).map(|_| VecDeque::new()).collect(),
            last_prices,
            last_demand: vec![0; n],
            profit: 0.0,
        }
    }

    pub fn n_regions(&self) -> usize {
        self.idle.len()
    }

    /// Vehicles landing at `region` in `offset >= 1` steps.
    pub fn arriving(&self, offset: usize, region: usize) -> u32 {
        if offset == 0 || offset > self.transit_horizon {
            0
        } else {
            self.arrivals[(offset - 1) * self.n_regions() + region]
        }
    }

    pub fn in_transit(&self) -> u32 {
        self.arrivals.iter().sum()
    }

    /// Idle plus in-transit vehicles; equals `fleet` at all times.
    pub fn vehicles(&self) -> u32 {
        self.idle.iter().sum::<u32>() + self.in_transit()
    }

    pub fn queue_len(&self, region: usize) -> u32 {
        self.queues[region].len() as u32
    }

    pub fn total_queued(&self) -> u32 {
        self.queues.iter().map(|q| q.len() as u32).sum()
    }

    pub fn enqueue(&mut self, p: Passenger) {
        self.queues[p.origin].push_back(p);
    }

    fn schedule(&mut self, s: &Scenario, from: usize, to: usize, count: u32) {
        let n = self.n_regions();
        let tau = s.tau(from, to) as usize;
        debug_assert!(tau >= 1 && tau <= self.transit_horizon);
        self.arrivals[(tau - 1) * n + to] += count;
    }

    /// Serves queued passengers in arrival order (ties by creation order)
    /// while idle vehicles remain in their region.
    pub fn match_passengers(&mut self, s: &Scenario, t: usize) -> Matching {
        let n = self.n_regions();
        let mut served = vec![0u32; n * n];
        let mut wait_minutes = Vec::new();
        for i in 0..n {
            let mut queue = core::mem::take(&mut self.queues[i]);
            queue
                .make_contiguous()
                .sort_by_key(|p| (p.arrival_step, p.id));
            while self.idle[i] > 0 {
                let Some(p) = queue.pop_front() else { break };
                self.idle[i] -= 1;
                served[i * n + p.destination] += 1;
                self.schedule(s, i, p.destination, 1);
                wait_minutes.push(((t - p.arrival_step) as u32 * s.step_minutes) as f64);
            }
            self.queues[i] = queue;
        }
        Matching {
            served,
            wait_minutes,
        }
    }

    /// Drops every passenger whose deadline has passed once step `t` is over.
    pub fn expire_waiting(&mut self, t: usize) -> u32 {
        let mut expired = 0;
        for q in &mut self.queues {
            let before = q.len();
            q.retain(|p| p.deadline_step >= t + 1);
            expired += (before - q.len()) as u32;
        }
        expired
    }

    /// Sends `moves[i * n + j]` idle vehicles from `i` to `j`.
    pub fn dispatch(&mut self, s: &Scenario, moves: &[u32]) -> Result<(), MarketError> {
        let n = self.n_regions();
        for i in 0..n {
            let out: u64 = (0..n).filter(|&j| j != i).map(|j| moves[i * n + j] as u64).sum();
            if out > self.idle[i] as u64 {
                return Err(MarketError::Infeasible {
                    region: i,
                    requested: out,
                    idle: self.idle[i],
                });
            }
        }
        for i in 0..n {
            for j in 0..n {
                let m = moves[i * n + j];
                if i != j && m > 0 {
                    self.idle[i] -= m;
                    self.schedule(s, i, j, m);
                }
            }
        }
        Ok(())
    }

    /// Advances the clock by one step: vehicles one step out become idle.
    pub fn tick(&mut self) {
        let n = self.n_regions();
        for i in 0..n {
            self.idle[i] += self.arrivals[i];
        }
        self.arrivals.copy_within(n.., 0);
        let len = self.arrivals.len();
        self.arrivals[len - n..].fill(0);
    }

    /// Vehicle transition without passengers: dispatch trips `x` and moves
    /// `y`, then advance the clock.
    pub fn step_vehicles(&mut self, s: &Scenario, x: &[u32], y: &[u32]) -> Result<(), MarketError> {
        let combined: Vec<u32> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        self.dispatch(s, &combined)?;
        self.tick();
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub step: usize,
    /// Served trips `x_ij`.
    pub served: Vec<u32>,
    /// Rebalancing moves `y_ij`.
    pub rebalanced: Vec<u32>,
    pub fares: Vec<f64>,
    pub reward: f64,
    pub revenue: f64,
    pub trip_cost: f64,
    pub rebalance_cost: f64,
    /// Passengers who chose this operator this step.
    pub assigned: u32,
    /// Potential pool size this step (shared by all operators).
    pub pool_size: u64,
    pub expired: u32,
    pub wait_minutes: Vec<f64>,
    /// Queue lengths per region at the end of the step.
    pub queue_lengths: Vec<u32>,
    pub mean_rho: f64,
}

impl StepOutcome {
    pub fn served_total(&self) -> u64 {
        self.served.iter().map(|&x| x as u64).sum()
    }

    pub fn rebalance_trips(&self) -> u64 {
        self.rebalanced.iter().map(|&x| x as u64).sum()
    }
}

/// One episode of the shared market.
#[derive(Clone, Debug)]
pub struct Market<'s> {
    scenario: &'s Scenario,
    beta_0: f64,
    operators: Vec<OperatorState>,
    t: usize,
    next_passenger: u64,
}

impl<'s> Market<'s> {
    /// Fresh episode with each operator's fleet spread evenly.
    pub fn new(scenario: &'s Scenario, fleets: &[u32], beta_0: f64) -> Self {
        let operators = fleets
            .iter()
            .map(|&m| OperatorState::new(scenario, m))
            .collect();
        Self::with_states(scenario, operators, beta_0)
    }

    pub fn with_states(scenario: &'s Scenario, operators: Vec<OperatorState>, beta_0: f64) -> Self {
        Self {
            scenario,
            beta_0,
            operators,
            t: 0,
            next_passenger: 0,
        }
    }

    pub fn scenario(&self) -> &'s Scenario {
        self.scenario
    }

    pub fn step(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.scenario.horizon
    }

    pub fn operators(&self) -> &[OperatorState] {
        &self.operators
    }

    pub fn operator(&self, o: usize) -> &OperatorState {
        &self.operators[o]
    }

    pub fn n_operators(&self) -> usize {
        self.operators.len()
    }

    /// Operator `o`'s view of the market. Competitor prices are included only
    /// when `competitor_prices` is set and a competitor exists.
    pub fn observe(&self, o: usize, lookahead: usize, competitor_prices: bool) -> Observation {
        let s = self.scenario;
        let n = s.n_regions;
        let op = &self.operators[o];
        let mut arrivals = vec![0u32; n * lookahead];
        for i in 0..n {
            for k in 1..=lookahead {
                arrivals[i * lookahead + k - 1] = op.arriving(k, i);
            }
        }
        let t_prev = self.t.saturating_sub(1).min(s.horizon - 1);
        let demand_weights = s.step_slice(&s.ref_demand, t_prev);
        let competitor = if competitor_prices {
            self.operators
                .iter()
                .enumerate()
                .find(|(k, _)| *k != o)
                .map(|(_, c)| c.last_prices.clone())
        } else {
            None
        };
        Observation {
            step: self.t,
            horizon: s.horizon,
            n_regions: n,
            adjacency: s.adjacency.clone(),
            idle: op.idle.clone(),
            lookahead,
            arrivals,
            queue_len: (0..n).map(|i| op.queue_len(i)).collect(),
            last_demand: op.last_demand.clone(),
            own_origin_fare: origin_mean_fares(n, &op.last_prices, demand_weights),
            competitor_origin_fare: competitor
                .as_ref()
                .map(|p| origin_mean_fares(n, p, demand_weights)),
            own_last_prices: op.last_prices.clone(),
            competitor_last_prices: competitor,
        }
    }

    /// Runs one tick with one action per operator.
    pub fn advance<R: Rng + ?Sized>(
        &mut self,
        actions: &[Action],
        rng: &mut R,
    ) -> Result<Vec<StepOutcome>, MarketError> {
        let s = self.scenario;
        let n = s.n_regions;
        let t = self.t;
        if self.is_done() {
            return Err(MarketError::Finished(t));
        }
        if actions.len() != self.operators.len() {
            return Err(MarketError::OperatorCount {
                expected: self.operators.len(),
                found: actions.len(),
            });
        }

        // Pricing.
        let fares = actions
            .iter()
            .map(|a| compute_fares(s, a.rho(), t))
            .collect::<Result<Vec<_>, _>>()?;
        for a in actions {
            if let Rebalance::Target(w) = a.rebalance() {
                if w.len() != n {
                    return Err(MarketError::InvalidAction(format!("{} weights for {n} regions", w.len())));
                }
            }
        }

        // Demand assignment.
        let fare_refs: Vec<&[f64]> = fares.iter().map(|f| f.as_slice()).collect();
        let batch = choice::generate_requests(s, t, &fare_refs, self.beta_0, &mut self.next_passenger, rng);
        let mut assigned = vec![0u32; self.operators.len()];
        for op in &mut self.operators {
            op.last_demand.iter_mut().for_each(|d| *d = 0);
        }
        for p in batch.passengers {
            let op = &mut self.operators[p.operator];
            assigned[p.operator] += 1;
            op.last_demand[p.origin] += 1;
            op.enqueue(p);
        }

        let mut outcomes = Vec::with_capacity(self.operators.len());
        for (o, op) in self.operators.iter_mut().enumerate() {
            let matching = op.match_passengers(s, t);
            let expired = op.expire_waiting(t);

            // Rebalancing execution.
            let total_idle: u32 = op.idle.iter().sum();
            let desired = match actions[o].rebalance() {
                Rebalance::Hold => op.idle.clone(),
                Rebalance::Target(w) => flow::desired_counts(w, total_idle),
            };
            let problem = RebalanceProblem {
                idle: op.idle.clone(),
                desired,
                cost: s.step_slice(&s.op_cost, t).to_vec(),
            };
            let solution = flow::solve_min_cost_flow(&problem)?;
            op.dispatch(s, &solution.flows)?;

            let reward = compute_reward(s, &matching.served, &solution.flows, &fares[o], t);
            let mut revenue = 0.0;
            let mut trip_cost = 0.0;
            for k in 0..n * n {
                let x = matching.served[k] as f64;
                revenue += x * fares[o][k];
                trip_cost += x * s.op_cost[t * n * n + k];
            }
            op.profit += reward;
            op.last_prices.clone_from(&fares[o]);
            outcomes.push(StepOutcome {
                step: t,
                served: matching.served,
                rebalanced: solution.flows,
                fares: fares[o].clone(),
                reward,
                revenue,
                trip_cost,
                rebalance_cost: solution.cost,
                assigned: assigned[o],
                pool_size: batch.pool_size,
                expired,
                wait_minutes: matching.wait_minutes,
                queue_lengths: (0..n).map(|i| op.queue_len(i)).collect(),
                mean_rho: actions[o].mean_rho(),
            });
            op.tick();
        }
        self.t += 1;
        Ok(outcomes)
    }
}

/// Demand-weighted mean fare per origin; plain mean over destinations when
/// the origin has no reference demand.
pub fn origin_mean_fares(n: usize, prices: &[f64], weights: &[f64]) -> Vec<f64> {
    (0..n)
        .map(|i| {
            let mut num = 0.0;
            let mut den = 0.0;
            for j in 0..n {
                if i != j {
                    num += weights[i * n + j] * prices[i * n + j];
                    den += weights[i * n + j];
                }
            }
            if den > 0.0 {
                num / den
            } else if n > 1 {
                (0..n).filter(|&j| j != i).map(|j| prices[i * n + j]).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            }
        })
        .collect()
}
