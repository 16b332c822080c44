//! JSON scenario files.
//!
//! Tensors are nested `[i][j][t]`. Reference prices may be a single `[i][j]`
//! matrix or a per-step `[i][j][t]` tensor. Travel times are per edge and only
//! read on adjacent pairs; the loader computes the all-pairs closure.

use std::fs;
use std::path::Path;

use amod_core::scenario::{PriceTable, Scenario, ScenarioParts};
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioFileError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("parsing {path}: {source}")]
    Json {
        path: String,
        source: serde_json::Error,
    },
    #[error("{0}: ragged or mis-sized nested array")]
    Ragged(&'static str),
    #[error(transparent)]
    Scenario(#[from] amod_core::ScenarioError),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Units {
    pub currency: String,
    pub step_minutes: u32,
    #[serde(default = "default_travel_time_unit")]
    pub travel_time: String,
    #[serde(default = "default_wage_unit")]
    pub wage: String,
}

fn default_travel_time_unit() -> String {
    "steps".into()
}

fn default_wage_unit() -> String {
    "currency per hour".into()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PriceField {
    Static(Vec<Vec<f64>>),
    PerStep(Vec<Vec<Vec<f64>>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub units: Units,
    pub n_regions: usize,
    pub horizon: usize,
    pub max_wait_steps: u32,
    pub adjacency: Vec<Vec<bool>>,
    pub travel_time: Vec<Vec<u32>>,
    pub ref_demand: Vec<Vec<Vec<f64>>>,
    pub ref_price: PriceField,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub op_cost: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost_per_step: Option<f64>,
    pub region_wage_mean: Vec<f64>,
    pub wage_sigma: f64,
    pub fleet_sizes: Vec<u32>,
    pub price_cap_beta: f64,
    pub beta_t: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta_0: Option<f64>,
}

fn flatten_matrix<T: Copy>(field: &'static str, m: &[Vec<T>], n: usize) -> Result<Vec<T>, ScenarioFileError> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(ScenarioFileError::Ragged(field));
    }
    Ok(m.iter().flatten().copied().collect())
}

/// `[i][j][t]` to time-major `(t * n + i) * n + j`.
fn flatten_tensor(field: &'static str, m: &[Vec<Vec<f64>>], n: usize, horizon: usize) -> Result<Vec<f64>, ScenarioFileError> {
    if m.len() != n || m.iter().any(|r| r.len() != n || r.iter().any(|c| c.len() != horizon)) {
        return Err(ScenarioFileError::Ragged(field));
    }
    let mut out = vec![0.0; horizon * n * n];
    for (i, row) in m.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            for (t, &v) in cell.iter().enumerate() {
                out[(t * n + i) * n + j] = v;
            }
        }
    }
    Ok(out)
}

fn nest_matrix<T: Copy>(v: &[T], n: usize) -> Vec<Vec<T>> {
    v.chunks(n).map(|r| r.to_vec()).collect()
}

fn nest_tensor(v: &[f64], n: usize, horizon: usize) -> Vec<Vec<Vec<f64>>> {
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (0..horizon).map(|t| v[(t * n + i) * n + j]).collect())
                .collect()
        })
        .collect()
}

impl ScenarioFile {
    pub fn into_scenario(self) -> Result<Scenario, ScenarioFileError> {
        let n = self.n_regions;
        let t = self.horizon;
        let ref_price = match &self.ref_price {
            PriceField::Static(m) => PriceTable::Static(flatten_matrix("ref_price", m, n)?),
            PriceField::PerStep(m) => PriceTable::PerStep(flatten_tensor("ref_price", m, n, t)?),
        };
        let op_cost = self
            .op_cost
            .as_ref()
            .map(|c| flatten_tensor("op_cost", c, n, t))
            .transpose()?;
        let parts = ScenarioParts {
            name: self.name,
            currency: self.units.currency,
            n_regions: n,
            horizon: t,
            step_minutes: self.units.step_minutes,
            max_wait_steps: self.max_wait_steps,
            adjacency: flatten_matrix("adjacency", &self.adjacency, n)?,
            edge_travel_time: flatten_matrix("travel_time", &self.travel_time, n)?,
            op_cost,
            cost_per_step: self.cost_per_step.unwrap_or(0.0),
            ref_demand: flatten_tensor("ref_demand", &self.ref_demand, n, t)?,
            ref_price,
            region_wage_mean: self.region_wage_mean,
            wage_sigma: self.wage_sigma,
            fleet_sizes: self.fleet_sizes,
            price_cap_beta: self.price_cap_beta,
            beta_t: self.beta_t,
            beta_0: self.beta_0,
        };
        Ok(Scenario::assemble(parts)?)
    }

    pub fn from_scenario(s: &Scenario) -> Self {
        let n = s.n_regions;
        let t = s.horizon;
        let nn = n * n;
        let static_price = (1..t).all(|k| s.ref_price[k * nn..(k + 1) * nn] == s.ref_price[..nn]);
        let ref_price = if static_price {
            PriceField::Static(nest_matrix(&s.ref_price[..nn], n))
        } else {
            PriceField::PerStep(nest_tensor(&s.ref_price, n, t))
        };
        let travel_time = (0..nn)
            .map(|k| if s.adjacency[k] { s.travel_time[k] } else { 0 })
            .collect::<Vec<_>>();
        Self {
            name: s.name.clone(),
            units: Units {
                currency: s.currency.clone(),
                step_minutes: s.step_minutes,
                travel_time: default_travel_time_unit(),
                wage: default_wage_unit(),
            },
            n_regions: n,
            horizon: t,
            max_wait_steps: s.max_wait_steps,
            adjacency: nest_matrix(&s.adjacency, n),
            travel_time: nest_matrix(&travel_time, n),
            ref_demand: nest_tensor(&s.ref_demand, n, t),
            ref_price,
            op_cost: Some(nest_tensor(&s.op_cost, n, t)),
            cost_per_step: None,
            region_wage_mean: s.region_wage_mean.clone(),
            wage_sigma: s.wage_sigma,
            fleet_sizes: s.fleet_sizes.clone(),
            price_cap_beta: s.price_cap_beta,
            beta_t: s.beta_t,
            beta_0: s.beta_0,
        }
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioFileError> {
    let display = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| ScenarioFileError::Io {
        path: display.clone(),
        source,
    })?;
    let file: ScenarioFile = serde_json::from_str(&text).map_err(|source| ScenarioFileError::Json { path: display, source })?;
    file.into_scenario()
}

pub fn write_scenario(path: &Path, s: &Scenario) -> Result<(), ScenarioFileError> {
    let text = serde_json::to_string_pretty(&ScenarioFile::from_scenario(s)).expect("scenario serialises");
    fs::write(path, text + "\n").map_err(|source| ScenarioFileError::Io {
        path: path.display().to_string(),
        source,
    })
}
