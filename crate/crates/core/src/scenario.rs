//! Immutable world description shared by every episode.
//!
//! Matrices are stored row-major (`i * n + j`); time-indexed tensors are
//! stored time-major (`(t * n + i) * n + j`) so one step's slice is
//! contiguous.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::math;

/// Waiting cap in minutes; `max_wait_steps * step_minutes` must equal this.
pub const WAIT_CAP_MINUTES: u32 = 6;

/// Marker for unreachable pairs before the shortest-path closure is checked.
pub const UNREACHABLE: u32 = u32::MAX;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ScenarioError {
    #[error("{field}: expected {expected} entries, found {found}")]
    Shape {
        field: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("invalid scenario: {}", .0.join("; "))]
    Invalid(Vec<String>),
    #[error("demand CV {cv} is unreachable with {n_regions} regions")]
    UnreachableCv { cv: f64, n_regions: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub currency: String,
    pub n_regions: usize,
    pub horizon: usize,
    pub step_minutes: u32,
    pub max_wait_steps: u32,
    pub adjacency: Vec<bool>,
    /// Shortest-path travel times in steps.
    pub travel_time: Vec<u32>,
    pub op_cost: Vec<f64>,
    pub ref_demand: Vec<f64>,
    pub ref_price: Vec<f64>,
    pub region_wage_mean: Vec<f64>,
    pub wage_sigma: f64,
    pub fleet_sizes: Vec<u32>,
    pub price_cap_beta: f64,
    pub beta_t: f64,
    pub beta_0: Option<f64>,
}

/// Reference prices as found in a scenario source: one matrix for all steps
/// or one per step.
#[derive(Clone, Debug, PartialEq)]
pub enum PriceTable {
    Static(Vec<f64>),
    PerStep(Vec<f64>),
}

/// Unchecked scenario ingredients. `edge_travel_time` only needs to be set on
/// adjacent pairs; [`Scenario::assemble`] computes the all-pairs closure.
#[derive(Clone, Debug)]
pub struct ScenarioParts {
    pub name: String,
    pub currency: String,
    pub n_regions: usize,
    pub horizon: usize,
    pub step_minutes: u32,
    pub max_wait_steps: u32,
    pub adjacency: Vec<bool>,
    pub edge_travel_time: Vec<u32>,
    pub op_cost: Option<Vec<f64>>,
    pub cost_per_step: f64,
    pub ref_demand: Vec<f64>,
    pub ref_price: PriceTable,
    pub region_wage_mean: Vec<f64>,
    pub wage_sigma: f64,
    pub fleet_sizes: Vec<u32>,
    pub price_cap_beta: f64,
    pub beta_t: f64,
    pub beta_0: Option<f64>,
}

impl Default for ScenarioParts {
    fn default() -> Self {
        Self {
            name: String::new(),
            currency: "USD".to_string(),
            n_regions: 0,
            horizon: 20,
            step_minutes: 3,
            max_wait_steps: 2,
            adjacency: Vec::new(),
            edge_travel_time: Vec::new(),
            op_cost: None,
            cost_per_step: 0.0,
            ref_demand: Vec::new(),
            ref_price: PriceTable::Static(Vec::new()),
            region_wage_mean: Vec::new(),
            wage_sigma: 0.25,
            fleet_sizes: Vec::new(),
            price_cap_beta: 2.0,
            beta_t: 0.71,
            beta_0: None,
        }
    }
}

fn check_len(field: &'static str, v: usize, expected: usize) -> Result<(), ScenarioError> {
    if v == expected {
        Ok(())
    } else {
        Err(ScenarioError::Shape {
            field,
            expected,
            found: v,
        })
    }
}

/// All-pairs shortest paths over the adjacency edges (Floyd-Warshall).
/// Diagonal entries are copied from the input so bad self times stay visible.
pub fn shortest_path_closure(n: usize, adjacency: &[bool], edge_time: &[u32]) -> Vec<u32> {
    let mut dist = vec![u64::MAX; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j || adjacency[i * n + j] {
                dist[i * n + j] = edge_time[i * n + j] as u64;
            }
        }
    }
    for k in 0..n {
        for i in 0..n {
            let dik = dist[i * n + k];
            if dik == u64::MAX || i == k {
                continue;
            }
            for j in 0..n {
                let dkj = dist[k * n + j];
                if dkj == u64::MAX || j == k || i == j {
                    continue;
                }
                if dik + dkj < dist[i * n + j] {
                    dist[i * n + j] = dik + dkj;
                }
            }
        }
    }
    dist.into_iter()
        .map(|d| if d >= UNREACHABLE as u64 { UNREACHABLE } else { d as u32 })
        .collect()
}

fn reaches_all(n: usize, adjacency: &[bool], reverse: bool) -> bool {
    let mut seen = vec![false; n];
    let mut stack = vec![0usize];
    seen[0] = true;
    while let Some(u) = stack.pop() {
        for v in 0..n {
            let edge = if reverse {
                adjacency[v * n + u]
            } else {
                adjacency[u * n + v]
            };
            if edge && !seen[v] {
                seen[v] = true;
                stack.push(v);
            }
        }
    }
    seen.into_iter().all(|s| s)
}

impl Scenario {
    /// Builds a scenario from raw parts: shape checks, shortest-path closure,
    /// reference-price broadcast and the default operating cost
    /// `cost_per_step * travel_time`, then full validation.
    pub fn assemble(parts: ScenarioParts) -> Result<Self, ScenarioError> {
        let n = parts.n_regions;
        let t = parts.horizon;
        check_len("adjacency", parts.adjacency.len(), n * n)?;
        check_len("travel_time", parts.edge_travel_time.len(), n * n)?;
        check_len("ref_demand", parts.ref_demand.len(), t * n * n)?;
        check_len("region_wage_mean", parts.region_wage_mean.len(), n)?;
        let travel_time = shortest_path_closure(n, &parts.adjacency, &parts.edge_travel_time);
        let ref_price = match parts.ref_price {
            PriceTable::Static(m) => {
                check_len("ref_price", m.len(), n * n)?;
                let mut full = Vec::with_capacity(t * n * n);
                for _ in 0..t {
                    full.extend_from_slice(&m);
                }
                full
            }
            PriceTable::PerStep(full) => {
                check_len("ref_price", full.len(), t * n * n)?;
                full
            }
        };
        let op_cost = match parts.op_cost {
            Some(c) => {
                check_len("op_cost", c.len(), t * n * n)?;
                c
            }
            None => {
                let mut c = Vec::with_capacity(t * n * n);
                for _ in 0..t {
                    c.extend(travel_time.iter().map(|&tau| {
                        if tau == UNREACHABLE {
                            0.0
                        } else {
                            parts.cost_per_step * tau as f64
                        }
                    }));
                }
                c
            }
        };
        let s = Scenario {
            name: parts.name,
            currency: parts.currency,
            n_regions: n,
            horizon: t,
            step_minutes: parts.step_minutes,
            max_wait_steps: parts.max_wait_steps,
            adjacency: parts.adjacency,
            travel_time,
            op_cost,
            ref_demand: parts.ref_demand,
            ref_price,
            region_wage_mean: parts.region_wage_mean,
            wage_sigma: parts.wage_sigma,
            fleet_sizes: parts.fleet_sizes,
            price_cap_beta: parts.price_cap_beta,
            beta_t: parts.beta_t,
            beta_0: parts.beta_0,
        };
        let violations = s.validate();
        if violations.is_empty() {
            Ok(s)
        } else {
            Err(ScenarioError::Invalid(violations))
        }
    }

    #[inline]
    pub fn tau(&self, i: usize, j: usize) -> u32 {
        self.travel_time[i * self.n_regions + j]
    }

    #[inline]
    fn tensor_index(&self, t: usize, i: usize, j: usize) -> usize {
        (t * self.n_regions + i) * self.n_regions + j
    }

    #[inline]
    pub fn demand(&self, t: usize, i: usize, j: usize) -> f64 {
        self.ref_demand[self.tensor_index(t, i, j)]
    }

    #[inline]
    pub fn price(&self, t: usize, i: usize, j: usize) -> f64 {
        self.ref_price[self.tensor_index(t, i, j)]
    }

    #[inline]
    pub fn cost(&self, t: usize, i: usize, j: usize) -> f64 {
        self.op_cost[self.tensor_index(t, i, j)]
    }

    /// Step `t` slice of a time-major tensor.
    pub fn step_slice<'a>(&self, tensor: &'a [f64], t: usize) -> &'a [f64] {
        let nn = self.n_regions * self.n_regions;
        &tensor[t * nn..(t + 1) * nn]
    }

    /// Travel time in hours between two regions.
    pub fn travel_hours(&self, i: usize, j: usize) -> f64 {
        self.tau(i, j) as f64 * self.step_minutes as f64 / 60.0
    }

    pub fn total_fleet(&self) -> u32 {
        self.fleet_sizes.iter().sum()
    }

    /// Longest shortest-path travel time, i.e. the in-transit horizon.
    pub fn max_travel_time(&self) -> u32 {
        self.travel_time
            .iter()
            .copied()
            .filter(|&t| t != UNREACHABLE)
            .max()
            .unwrap_or(1)
            .max(1)
    }

    /// Reference demand leaving each region, summed over destinations and steps.
    pub fn origin_demand_totals(&self) -> Vec<f64> {
        let n = self.n_regions;
        let mut totals = vec![0.0; n];
        for t in 0..self.horizon {
            for (i, total) in totals.iter_mut().enumerate() {
                for j in 0..n {
                    *total += self.demand(t, i, j);
                }
            }
        }
        totals
    }

    /// Scenario-wide average wage: region means weighted by outbound demand.
    pub fn mean_wage(&self) -> f64 {
        let totals = self.origin_demand_totals();
        let w: f64 = totals.iter().sum();
        if w > 0.0 {
            totals
                .iter()
                .zip(&self.region_wage_mean)
                .map(|(d, v)| d * v)
                .sum::<f64>()
                / w
        } else {
            self.region_wage_mean.iter().sum::<f64>() / self.n_regions as f64
        }
    }

    /// Lists every violated invariant; empty iff the scenario is valid.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let n = self.n_regions;
        let t = self.horizon;
        if n == 0 {
            out.push("n_regions must be positive".to_string());
            return out;
        }
        if t == 0 {
            out.push("horizon must be positive".to_string());
        }
        let shapes = [
            ("adjacency", self.adjacency.len(), n * n),
            ("travel_time", self.travel_time.len(), n * n),
            ("op_cost", self.op_cost.len(), t * n * n),
            ("ref_demand", self.ref_demand.len(), t * n * n),
            ("ref_price", self.ref_price.len(), t * n * n),
            ("region_wage_mean", self.region_wage_mean.len(), n),
        ];
        let mut shape_ok = true;
        for (field, found, expected) in shapes {
            if found != expected {
                out.push(format!("{field} has {found} entries, expected {expected}"));
                shape_ok = false;
            }
        }
        if !shape_ok {
            return out;
        }

        for i in 0..n {
            if self.adjacency[i * n + i] {
                out.push(format!("adjacency[{i}][{i}] is a self-loop"));
            }
        }
        let connected = n == 1
            || (reaches_all(n, &self.adjacency, false) && reaches_all(n, &self.adjacency, true));
        if !connected {
            out.push("graph not strongly connected".to_string());
        }
        for i in 0..n {
            let tii = self.tau(i, i);
            if tii != 0 {
                out.push(format!("self travel time: travel_time[{i}][{i}] = {tii}"));
            }
            for j in 0..n {
                if i != j && self.tau(i, j) < 1 {
                    out.push(format!("travel_time[{i}][{j}] < 1"));
                }
            }
        }
        if connected {
            'tri: for i in 0..n {
                for j in 0..n {
                    for k in 0..n {
                        let (ij, ik, kj) = (self.tau(i, j), self.tau(i, k), self.tau(k, j));
                        if ik != UNREACHABLE
                            && kj != UNREACHABLE
                            && ij as u64 > ik as u64 + kj as u64
                        {
                            out.push(format!(
                                "travel_time[{i}][{j}] violates the triangle inequality via {k}"
                            ));
                            break 'tri;
                        }
                    }
                }
            }
        }

        for (field, tensor) in [
            ("op_cost", &self.op_cost),
            ("ref_demand", &self.ref_demand),
            ("ref_price", &self.ref_price),
        ] {
            for (idx, &v) in tensor.iter().enumerate() {
                let (tt, rem) = (idx / (n * n), idx % (n * n));
                let (i, j) = (rem / n, rem % n);
                if !v.is_finite() {
                    out.push(format!("{field}[{i}][{j}][{tt}] is not finite"));
                } else if v < 0.0 {
                    out.push(format!("{field}[{i}][{j}][{tt}] < 0"));
                }
            }
        }
        for (i, &w) in self.region_wage_mean.iter().enumerate() {
            if !(w.is_finite() && w > 0.0) {
                out.push(format!("region_wage_mean[{i}] must be positive"));
            }
        }
        if !(self.wage_sigma.is_finite() && self.wage_sigma >= 0.0) {
            out.push("wage_sigma must be >= 0".to_string());
        }
        if self.fleet_sizes.is_empty() {
            out.push("fleet_sizes is empty".to_string());
        }
        if self.max_wait_steps * self.step_minutes != WAIT_CAP_MINUTES {
            out.push(format!(
                "max_wait_steps x step_minutes = {} minutes, expected {WAIT_CAP_MINUTES}",
                self.max_wait_steps * self.step_minutes
            ));
        }
        if !(self.price_cap_beta.is_finite() && self.price_cap_beta > 0.0) {
            out.push("price_cap_beta must be positive".to_string());
        }
        if !self.beta_t.is_finite() {
            out.push("beta_t is not finite".to_string());
        }
        if let Some(b) = self.beta_0 {
            if !b.is_finite() {
                out.push("beta_0 is not finite".to_string());
            }
        }
        out
    }
}

/// Parameters of the synthetic world that are not part of the public
/// generator signature.
pub mod synthetic {
    /// Mean reference requests per step leaving a region.
    pub const MEAN_ORIGIN_DEMAND: f64 = 4.0;
    /// Vehicles per unit of system-wide per-step demand.
    pub const FLEET_PER_DEMAND: f64 = 2.0;
    pub const BASE_FARE: f64 = 4.0;
    pub const FARE_PER_STEP: f64 = 3.0;
    pub const COST_PER_STEP: f64 = 1.0;
    pub const WAGE: f64 = 20.0;
    pub const WAGE_SIGMA: f64 = 0.25;
}

fn powered_cv(base: &[f64], k: f64) -> f64 {
    let v: Vec<f64> = base.iter().map(|&u| math::powf(u, k)).collect();
    math::coefficient_of_variation(&v)
}

/// Region weights whose population CV equals `cv`: random bases raised to a
/// power found by bisection (the CV of `u^k` grows monotonically in `k`).
fn weights_with_cv(rng: &mut ChaCha8Rng, n: usize, cv: f64) -> Result<Vec<f64>, ScenarioError> {
    let mut base: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..1.0)).collect();
    if cv == 0.0 {
        return Ok(vec![1.0; n]);
    }
    let max = base.iter().cloned().fold(f64::MIN, f64::max);
    for b in &mut base {
        *b /= max;
    }
    let unreachable = ScenarioError::UnreachableCv { cv, n_regions: n };
    if !(cv > 0.0) || !cv.is_finite() {
        return Err(unreachable);
    }
    let mut hi = 1.0;
    while powered_cv(&base, hi) < cv {
        hi *= 2.0;
        if hi > 1e4 {
            return Err(unreachable);
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if powered_cv(&base, mid) < cv {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let k = 0.5 * (lo + hi);
    let w: Vec<f64> = base.iter().map(|&u| math::powf(u, k)).collect();
    // Deep powers can underflow the smallest regions to zero.
    if w.iter().any(|&x| !(x > 0.0)) {
        return Err(unreachable);
    }
    Ok(w)
}

/// Ring-plus-chords world whose regional demand totals have coefficient of
/// variation `demand_cv`. Deterministic in all arguments.
pub fn generate_synthetic_scenario(
    n_regions: usize,
    horizon: usize,
    demand_cv: f64,
    seed: u64,
) -> Result<Scenario, ScenarioError> {
    use synthetic::*;
    let n = n_regions;
    if n < 2 {
        return Err(ScenarioError::Invalid(vec!["n_regions must be >= 2".to_string()]));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut adjacency = vec![false; n * n];
    let mut edge_time = vec![0u32; n * n];
    let mut link = |a: usize, b: usize, tau: u32| {
        for (u, v) in [(a, b), (b, a)] {
            if !adjacency[u * n + v] || edge_time[u * n + v] > tau {
                adjacency[u * n + v] = true;
                edge_time[u * n + v] = tau;
            }
        }
    };
    for i in 0..n {
        let j = (i + 1) % n;
        if i != j {
            link(i, j, 1);
        }
    }
    if n >= 5 {
        for i in 0..n / 2 {
            link(i, i + n / 2, 2);
        }
    }
    let travel_time = shortest_path_closure(n, &adjacency, &edge_time);

    let weights = weights_with_cv(&mut rng, n, demand_cv)?;
    let wsum: f64 = weights.iter().sum();
    let origin_rate: Vec<f64> = weights
        .iter()
        .map(|w| MEAN_ORIGIN_DEMAND * n as f64 * w / wsum)
        .collect();

    let mut od = vec![0.0; n * n];
    for i in 0..n {
        let shares: Vec<f64> = (0..n)
            .map(|j| if i == j { 0.0 } else { rng.random_range(0.5..1.5) })
            .collect();
        let total: f64 = shares.iter().sum();
        for j in 0..n {
            od[i * n + j] = origin_rate[i] * shares[j] / total;
        }
    }
    let mut ref_demand = Vec::with_capacity(horizon * n * n);
    for _ in 0..horizon {
        ref_demand.extend_from_slice(&od);
    }
    let ref_price: Vec<f64> = (0..n * n)
        .map(|k| {
            if k / n == k % n {
                0.0
            } else {
                BASE_FARE + FARE_PER_STEP * travel_time[k] as f64
            }
        })
        .collect();

    let fleet = math::floor(MEAN_ORIGIN_DEMAND * n as f64 * FLEET_PER_DEMAND + 0.5) as u32;
    let parts = ScenarioParts {
        name: format!("synthetic-n{n}-cv{demand_cv:.2}-seed{seed}"),
        n_regions: n,
        horizon,
        adjacency,
        edge_travel_time: edge_time,
        cost_per_step: COST_PER_STEP,
        ref_demand,
        ref_price: PriceTable::Static(ref_price),
        region_wage_mean: vec![WAGE; n],
        wage_sigma: WAGE_SIGMA,
        fleet_sizes: vec![fleet / 2, fleet - fleet / 2],
        ..ScenarioParts::default()
    };
    Scenario::assemble(parts)
}

/// Random valid world for property tests: a ring plus random chords with
/// travel times in `1..=3`, random demand, fares, costs and wages, and two
/// operators with random fleets.
pub fn random_scenario(n_regions: usize, horizon: usize, seed: u64) -> Scenario {
    let n = n_regions.max(2);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut adjacency = vec![false; n * n];
    let mut edge_time = vec![0u32; n * n];
    for i in 0..n {
        for j in 0..n {
            let ring = j == (i + 1) % n || i == (j + 1) % n;
            if i != j && (ring || rng.random_bool(0.3)) {
                adjacency[i * n + j] = true;
                edge_time[i * n + j] = rng.random_range(1..=3);
            }
        }
    }
    let ref_demand = (0..horizon * n * n)
        .map(|k| {
            if (k / n) % n == k % n {
                0.0
            } else {
                rng.random_range(0.0..2.0)
            }
        })
        .collect();
    let ref_price = (0..n * n)
        .map(|k| if k / n == k % n { 0.0 } else { rng.random_range(3.0..15.0) })
        .collect();
    let parts = ScenarioParts {
        name: format!("random-n{n}-seed{seed}"),
        n_regions: n,
        horizon,
        adjacency,
        edge_travel_time: edge_time,
        cost_per_step: rng.random_range(0.5..2.0),
        ref_demand,
        ref_price: PriceTable::Static(ref_price),
        region_wage_mean: (0..n).map(|_| rng.random_range(10.0..40.0)).collect(),
        fleet_sizes: vec![rng.random_range(1..20), rng.random_range(1..20)],
        ..ScenarioParts::default()
    };
    Scenario::assemble(parts).expect("random scenario is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn two_region_parts() -> ScenarioParts {
        ScenarioParts {
            name: "two".into(),
            n_regions: 2,
            horizon: 2,
            adjacency: vec![false, true, true, false],
            edge_travel_time: vec![0, 1, 1, 0],
            cost_per_step: 1.0,
            ref_demand: vec![0.0, 1.0, 1.0, 0.0, 0.0, 1.0, 1.0, 0.0],
            ref_price: PriceTable::Static(vec![0.0, 8.4, 8.4, 0.0]),
            region_wage_mean: vec![20.0, 20.0],
            fleet_sizes: vec![2, 2],
            ..ScenarioParts::default()
        }
    }

    #[test]
    fn minimal_two_region_world() {
        let s = Scenario::assemble(two_region_parts()).unwrap();
        assert_eq!(s.n_regions, 2);
        assert!(s.validate().is_empty());
        assert_eq!(s.cost(1, 0, 1), 1.0);
        assert_eq!(s.price(1, 1, 0), 8.4);
    }

    #[test]
    fn self_travel_time_is_rejected() {
        let mut p = two_region_parts();
        p.edge_travel_time[3] = 1;
        let err = Scenario::assemble(p).unwrap_err();
        match err {
            ScenarioError::Invalid(v) => assert!(v.iter().any(|m| m.contains("self travel time"))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn negative_demand_is_reported_with_index() {
        let mut s = Scenario::assemble(two_region_parts()).unwrap();
        let idx = (1 * 2 + 0) * 2 + 1;
        s.ref_demand[idx] = -1.0;
        assert_eq!(s.validate(), vec!["ref_demand[0][1][1] < 0".to_string()]);
    }

    #[test]
    fn disconnected_graph_is_reported() {
        let mut s = Scenario::assemble(two_region_parts()).unwrap();
        s.adjacency[1 * 2 + 0] = false;
        assert!(s.validate().contains(&"graph not strongly connected".to_string()));
    }

    #[test]
    fn wait_cap_must_be_six_minutes() {
        let mut s = Scenario::assemble(two_region_parts()).unwrap();
        s.max_wait_steps = 3;
        assert_eq!(s.validate().len(), 1);
    }

    #[test]
    fn closure_fills_non_adjacent_pairs() {
        // path 0 -> 1 -> 2 -> 0 with unit edges
        let adj = vec![false, true, false, false, false, true, true, false, false];
        let edge = vec![0, 1, 0, 0, 0, 1, 1, 0, 0];
        let tau = shortest_path_closure(3, &adj, &edge);
        assert_eq!(tau, vec![0, 1, 2, 2, 0, 1, 1, 2, 0]);
        // closing twice is a no-op
        assert_eq!(shortest_path_closure(3, &adj, &tau), tau);
    }

    #[test]
    fn synthetic_zero_cv_is_uniform() {
        let s = generate_synthetic_scenario(4, 20, 0.0, 1).unwrap();
        let totals = s.origin_demand_totals();
        for t in &totals {
            assert!((t - totals[0]).abs() < 1e-9);
        }
    }

    #[test]
    fn synthetic_hits_target_cv() {
        let s = generate_synthetic_scenario(6, 20, 1.3, 7).unwrap();
        let cv = math::coefficient_of_variation(&s.origin_demand_totals());
        assert!((1.25..=1.35).contains(&cv), "cv = {cv}");
        assert!(s.validate().is_empty());
    }

    #[test]
    fn synthetic_is_deterministic() {
        let a = generate_synthetic_scenario(6, 20, 0.8, 3).unwrap();
        let b = generate_synthetic_scenario(6, 20, 0.8, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn synthetic_rejects_impossible_cv() {
        // max population CV with 3 regions is sqrt(2)
        assert!(matches!(
            generate_synthetic_scenario(3, 20, 1.6, 1),
            Err(ScenarioError::UnreachableCv { .. })
        ));
    }

    #[test]
    fn mean_wage_is_demand_weighted() {
        let mut p = two_region_parts();
        p.region_wage_mean = vec![10.0, 30.0];
        p.ref_demand = vec![0.0, 3.0, 1.0, 0.0, 0.0, 3.0, 1.0, 0.0];
        let s = Scenario::assemble(p).unwrap();
        assert!((s.mean_wage() - 15.0).abs() < 1e-12);
    }
}
