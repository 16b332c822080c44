//! Integral rebalancing flows from a desired idle-vehicle distribution.
//!
//! The rebalancing LP (minimise `sum c_ij y_ij` subject to reaching at least
//! the desired count at every region and never sending more vehicles out of a
//! region than it has idle) is a transportation problem: every idle vehicle
//! at `i` either stays (cost 0) or moves once to `j` (cost `c_ij`), and every
//! region `j` must receive `desired_j` vehicles in total. The solver runs
//! successive shortest paths on that bipartite network, so flows are integral
//! by construction.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use crate::market::{MarketError, OperatorState};
use crate::math;
use crate::scenario::Scenario;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum FlowError {
    #[error("desired vehicles {desired} exceed idle vehicles {idle}")]
    Infeasible { desired: u64, idle: u64 },
    #[error("problem dimensions disagree: {0}")]
    Shape(&'static str),
    #[error("edge cost {0} is negative or not finite")]
    BadCost(f64),
}

#[derive(Clone, Debug, PartialEq)]
pub struct RebalanceProblem {
    pub idle: Vec<u32>,
    pub desired: Vec<u32>,
    /// `n x n` row-major per-vehicle cost; the diagonal is ignored.
    pub cost: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RebalanceFlow {
    /// `n x n` row-major vehicle moves, zero diagonal.
    pub flows: Vec<u32>,
    pub cost: f64,
}

impl RebalanceFlow {
    pub fn trips(&self) -> u64 {
        self.flows.iter().map(|&f| f as u64).sum()
    }
}

/// `floor(w_i * total_idle)` per region.
pub fn desired_counts(weights: &[f64], total_idle: u32) -> Vec<u32> {
    weights
        .iter()
        .map(|&w| {
            let d = math::floor(w.max(0.0) * total_idle as f64);
            (d as u32).min(total_idle)
        })
        .collect()
}

/// `sum_ij c_ij y_ij`, accumulated in row-major order.
pub fn flow_cost(cost: &[f64], flows: &[u32]) -> f64 {
    let mut total = 0.0;
    for (&c, &y) in cost.iter().zip(flows) {
        if y > 0 {
            total += c * y as f64;
        }
    }
    total
}

struct Edge {
    to: usize,
    cap: u64,
    cost: f64,
}

struct Network {
    edges: Vec<Edge>,
    adj: Vec<Vec<usize>>,
}

impl Network {
    fn new(nodes: usize) -> Self {
        Self {
            edges: Vec::new(),
            adj: (0..nodes).map(|_| Vec::new()).collect(),
        }
    }

    fn link(&mut self, from: usize, to: usize, cap: u64, cost: f64) -> usize {
        let id = self.edges.len();
        self.edges.push(Edge { to, cap, cost });
        self.edges.push(Edge {
            to: from,
            cap: 0,
            cost: -cost,
        });
        self.adj[from].push(id);
        self.adj[to].push(id + 1);
        id
    }

    /// Queue-based Bellman-Ford from `src`; returns the parent edge of every
    /// node on the shortest-path tree. Improvements smaller than `eps` are
    /// ignored so float noise cannot cycle.
    fn shortest_paths(&self, src: usize, eps: f64) -> Vec<Option<usize>> {
        let n = self.adj.len();
        let mut dist = vec![f64::INFINITY; n];
        let mut parent = vec![None; n];
        let mut queued = vec![false; n];
        let mut relaxations = vec![0usize; n];
        let mut queue = VecDeque::new();
        dist[src] = 0.0;
        queue.push_back(src);
        queued[src] = true;
        while let Some(u) = queue.pop_front() {
            queued[u] = false;
            for &e in &self.adj[u] {
                let edge = &self.edges[e];
                if edge.cap == 0 {
                    continue;
                }
                let nd = dist[u] + edge.cost;
                if nd < dist[edge.to] - eps {
                    dist[edge.to] = nd;
                    parent[edge.to] = Some(e);
                    relaxations[edge.to] += 1;
                    if !queued[edge.to] && relaxations[edge.to] <= n {
                        queued[edge.to] = true;
                        queue.push_back(edge.to);
                    }
                }
            }
        }
        parent
    }
}

/// Minimum-cost integral rebalancing flow.
pub fn solve_min_cost_flow(p: &RebalanceProblem) -> Result<RebalanceFlow, FlowError> {
    let n = p.idle.len();
    if p.desired.len() != n {
        return Err(FlowError::Shape("desired"));
    }
    if p.cost.len() != n * n {
        return Err(FlowError::Shape("cost"));
    }
    let mut max_cost: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            let c = p.cost[i * n + j];
            if i != j {
                if !(c.is_finite() && c >= 0.0) {
                    return Err(FlowError::BadCost(c));
                }
                max_cost = max_cost.max(c);
            }
        }
    }
    let idle: u64 = p.idle.iter().map(|&m| m as u64).sum();
    let desired: u64 = p.desired.iter().map(|&m| m as u64).sum();
    if desired > idle {
        return Err(FlowError::Infeasible { desired, idle });
    }

    // Every region can cover its own demand for free; only the shortfall
    // needs routing. Staying is modelled by the zero-cost L_i -> R_i edge.
    let source = 0;
    let sink = 2 * n + 1;
    let left = |i: usize| 1 + i;
    let right = |j: usize| 1 + n + j;
    let mut net = Network::new(2 * n + 2);
    for i in 0..n {
        net.link(source, left(i), p.idle[i] as u64, 0.0);
    }
    let mut move_edges = vec![usize::MAX; n * n];
    for i in 0..n {
        for j in 0..n {
            let c = if i == j { 0.0 } else { p.cost[i * n + j] };
            move_edges[i * n + j] = net.link(left(i), right(j), u64::MAX / 4, c);
        }
    }
    for j in 0..n {
        net.link(right(j), sink, p.desired[j] as u64, 0.0);
    }

    let eps = 1e-12 * max_cost.max(f64::MIN_POSITIVE);
    let mut sent = 0u64;
    while sent < desired {
        let parent = net.shortest_paths(source, eps);
        let Some(_) = parent[sink] else {
            // unreachable when desired <= idle: the network always has a path
            return Err(FlowError::Infeasible { desired, idle });
        };
        let mut bottleneck = desired - sent;
        let mut v = sink;
        while let Some(e) = parent[v] {
            bottleneck = bottleneck.min(net.edges[e].cap);
            v = net.edges[e ^ 1].to;
        }
        let mut v = sink;
        while let Some(e) = parent[v] {
            net.edges[e].cap -= bottleneck;
            net.edges[e ^ 1].cap += bottleneck;
            v = net.edges[e ^ 1].to;
        }
        sent += bottleneck;
    }

    let mut flows = vec![0u32; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                let e = move_edges[i * n + j];
                flows[i * n + j] = net.edges[e ^ 1].cap as u32;
            }
        }
    }
    let cost = flow_cost(&p.cost, &flows);
    Ok(RebalanceFlow { flows, cost })
}

/// Dispatches rebalancing moves: vehicles leave the idle pool now and land
/// after the travel time. Cost is charged by the reward computation.
pub fn execute_flows(
    s: &Scenario,
    op: &mut OperatorState,
    flows: &[u32],
) -> Result<(), MarketError> {
    op.dispatch(s, flows)
}
