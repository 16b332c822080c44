//! Per-run evaluation metrics, their aggregation, and the CSV and JSON
//! files they are written to.

use std::collections::BTreeMap;
use std::path::Path;

use amod_core::StepOutcome;
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

/// One row of `metrics.csv`. Column order is the field order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub run: usize,
    /// Operator index, or `total` for the market-wide row.
    pub operator: String,
    pub reward: f64,
    pub rebalancing_cost: f64,
    pub rebalance_trips: u64,
    pub served_demand: u64,
    pub assigned_demand: u64,
    pub pool_size: u64,
    pub expired: u64,
    pub mean_price_scalar: f64,
    pub mean_wait_minutes: f64,
    pub mean_queue_length: f64,
}

pub const METRIC_FIELDS: [&str; 10] = [
    "reward",
    "rebalancing_cost",
    "rebalance_trips",
    "served_demand",
    "assigned_demand",
    "pool_size",
    "expired",
    "mean_price_scalar",
    "mean_wait_minutes",
    "mean_queue_length",
];

impl MetricsRow {
    pub fn values(&self) -> [f64; 10] {
        [
            self.reward,
            self.rebalancing_cost,
            self.rebalance_trips as f64,
            self.served_demand as f64,
            self.assigned_demand as f64,
            self.pool_size as f64,
            self.expired as f64,
            self.mean_price_scalar,
            self.mean_wait_minutes,
            self.mean_queue_length,
        ]
    }
}

/// Running totals for one operator over one episode.
#[derive(Clone, Debug, Default)]
pub struct EpisodeTally {
    reward: f64,
    rebalancing_cost: f64,
    rebalance_trips: u64,
    served: u64,
    assigned: u64,
    pool: u64,
    expired: u64,
    rho_sum: f64,
    wait_sum: f64,
    waits: u64,
    queue_sum: f64,
    steps: usize,
}

impl EpisodeTally {
    pub fn record(&mut self, out: &StepOutcome) {
        self.reward += out.reward;
        self.rebalancing_cost += out.rebalance_cost;
        self.rebalance_trips += out.rebalance_trips();
        self.served += out.served_total();
        self.assigned += out.assigned as u64;
        self.pool += out.pool_size;
        self.expired += out.expired as u64;
        self.rho_sum += out.mean_rho;
        self.wait_sum += out.wait_minutes.iter().sum::<f64>();
        self.waits += out.wait_minutes.len() as u64;
        self.queue_sum += out.queue_lengths.iter().map(|&q| q as f64).sum::<f64>();
        self.steps += 1;
    }

    pub fn reward(&self) -> f64 {
        self.reward
    }

    fn mean_wait(&self) -> f64 {
        if self.waits == 0 {
            0.0
        } else {
            self.wait_sum / self.waits as f64
        }
    }

    pub fn row(&self, run: usize, operator: usize) -> MetricsRow {
        let steps = self.steps.max(1) as f64;
        MetricsRow {
            run,
            operator: operator.to_string(),
            reward: self.reward,
            rebalancing_cost: self.rebalancing_cost,
            rebalance_trips: self.rebalance_trips,
            served_demand: self.served,
            assigned_demand: self.assigned,
            pool_size: self.pool,
            expired: self.expired,
            mean_price_scalar: self.rho_sum / steps,
            mean_wait_minutes: self.mean_wait(),
            mean_queue_length: self.queue_sum / steps,
        }
    }

    /// Market-wide row: additive fields summed, the shared pool counted once,
    /// price scalars averaged over operators, waits averaged over all served
    /// passengers.
    pub fn total_row(run: usize, tallies: &[EpisodeTally]) -> MetricsRow {
        let steps = tallies.first().map_or(1, |t| t.steps.max(1)) as f64;
        let waits: u64 = tallies.iter().map(|t| t.waits).sum();
        let wait_sum: f64 = tallies.iter().map(|t| t.wait_sum).sum();
        MetricsRow {
            run,
            operator: "total".into(),
            reward: tallies.iter().map(|t| t.reward).sum(),
            rebalancing_cost: tallies.iter().map(|t| t.rebalancing_cost).sum(),
            rebalance_trips: tallies.iter().map(|t| t.rebalance_trips).sum(),
            served_demand: tallies.iter().map(|t| t.served).sum(),
            assigned_demand: tallies.iter().map(|t| t.assigned).sum(),
            pool_size: tallies.first().map_or(0, |t| t.pool),
            expired: tallies.iter().map(|t| t.expired).sum(),
            mean_price_scalar: tallies.iter().map(|t| t.rho_sum / steps).sum::<f64>() / tallies.len().max(1) as f64,
            mean_wait_minutes: if waits == 0 { 0.0 } else { wait_sum / waits as f64 },
            mean_queue_length: tallies.iter().map(|t| t.queue_sum).sum::<f64>() / steps,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single run.
    pub sd: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, sd: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

/// Mean and standard deviation of every metric, keyed by operator label.
pub fn aggregate(rows: &[MetricsRow]) -> BTreeMap<String, BTreeMap<String, Stat>> {
    let mut groups: BTreeMap<String, Vec<[f64; 10]>> = BTreeMap::new();
    for r in rows {
        groups.entry(r.operator.clone()).or_default().push(r.values());
    }
    groups
        .into_iter()
        .map(|(op, vals)| {
            let stats = METRIC_FIELDS
                .iter()
                .enumerate()
                .map(|(k, name)| {
                    let column: Vec<f64> = vals.iter().map(|v| v[k]).collect();
                    (name.to_string(), Stat::of(&column))
                })
                .collect();
            (op, stats)
        })
        .collect()
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("opening {}", path.display()))?;
    Ok(r.deserialize().collect::<Result<Vec<MetricsRow>, _>>()?)
}

/// One row of `curves.csv`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub episode: usize,
    pub op: usize,
    pub train_reward: f64,
    pub actor_loss: f64,
    pub critic_loss: f64,
}
