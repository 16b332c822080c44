//! Node features built from an operator's observation.

use alloc::vec;
use alloc::vec::Vec;

use crate::policies::Observation;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureConfig {
    pub lookahead: usize,
    pub scale: f64,
    pub observe_competitor_prices: bool,
    /// Appends the full own and competitor fare rows of every origin.
    pub full_od_prices: bool,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            lookahead: 6,
            scale: 0.01,
            observe_competitor_prices: true,
            full_od_prices: false,
        }
    }
}

impl FeatureConfig {
    pub fn n_features(&self, n_regions: usize) -> usize {
        let base = self.lookahead + 6;
        if self.full_od_prices {
            base + 2 * n_regions
        } else {
            base
        }
    }
}

/// Row-major `n x n_features` matrix. Per region: idle, arrivals at offsets
/// `1..=lookahead`, queue length, last own demand, own mean origin fare,
/// competitor mean origin fare, step/horizon, then the optional fare rows.
/// Everything except step/horizon is multiplied by `scale`.
pub fn encode_observation(obs: &Observation, cfg: &FeatureConfig) -> Vec<f64> {
    let n = obs.n_regions;
    let f = cfg.n_features(n);
    let s = cfg.scale;
    let share = cfg.observe_competitor_prices;
    let mut x = vec![0.0; n * f];
    for i in 0..n {
        let row = &mut x[i * f..(i + 1) * f];
        row[0] = s * obs.idle[i] as f64;
        for k in 1..=cfg.lookahead {
            if k <= obs.lookahead {
                row[k] = s * obs.arrivals[i * obs.lookahead + k - 1] as f64;
            }
        }
        let c = cfg.lookahead + 1;
        row[c] = s * obs.queue_len[i] as f64;
        row[c + 1] = s * obs.last_demand[i] as f64;
        row[c + 2] = s * obs.own_origin_fare[i];
        if share {
            if let Some(fares) = &obs.competitor_origin_fare {
                row[c + 3] = s * fares[i];
            }
        }
        row[c + 4] = obs.step as f64 / obs.horizon as f64;
        if cfg.full_od_prices {
            let base = c + 5;
            for j in 0..n {
                row[base + j] = s * obs.own_last_prices[i * n + j];
            }
            if share {
                if let Some(p) = &obs.competitor_last_prices {
                    for j in 0..n {
                        row[base + n + j] = s * p[i * n + j];
                    }
                }
            }
        }
    }
    x
}
