//! Versioned JSON checkpoints of one operator's actor and critic.

use std::fs;
use std::path::Path;

use amod_core::learner::{FeatureConfig, GcnNet, PolicyParams};
use amod_core::ControlMode;
use anyhow::{bail, ensure, Context, Result};
use serde::{Deserialize, Serialize};

pub const CHECKPOINT_FORMAT: &str = "amod-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub name: String,
    pub shape: [usize; 2],
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkDump {
    pub n_in: usize,
    pub hidden: usize,
    pub n_out: usize,
    pub tensors: Vec<Tensor>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureDump {
    pub lookahead: usize,
    pub scale: f64,
    pub observe_competitor_prices: bool,
    pub full_od_prices: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub operator: usize,
    pub n_regions: usize,
    pub mode: String,
    pub episodes: usize,
    pub features: FeatureDump,
    pub actor: NetworkDump,
    pub critic: NetworkDump,
}

fn dump(net: &GcnNet) -> NetworkDump {
    NetworkDump {
        n_in: net.n_in,
        hidden: net.hidden,
        n_out: net.n_out,
        tensors: net
            .tensors()
            .into_iter()
            .map(|(name, shape, data)| Tensor {
                name: name.to_string(),
                shape,
                data: data.to_vec(),
            })
            .collect(),
    }
}

fn restore(d: &NetworkDump, what: &str) -> Result<GcnNet> {
    let mut net = GcnNet::zeros(d.n_in, d.hidden, d.n_out);
    let expected = GcnNet::shapes(d.n_in, d.hidden, d.n_out);
    let names = amod_core::learner::net::TENSOR_NAMES;
    ensure!(d.tensors.len() == names.len(), "{what}: expected {} tensors, found {}", names.len(), d.tensors.len());
    let mut offset = 0;
    for ((t, name), shape) in d.tensors.iter().zip(names).zip(expected) {
        ensure!(t.name == name, "{what}: expected tensor {name}, found {}", t.name);
        ensure!(t.shape == shape, "{what}.{name}: shape {:?}, expected {:?}", t.shape, shape);
        ensure!(t.data.len() == shape[0] * shape[1], "{what}.{name}: {} values for shape {:?}", t.data.len(), shape);
        ensure!(t.data.iter().all(|v| v.is_finite()), "{what}.{name}: non-finite value");
        net.params[offset..offset + t.data.len()].copy_from_slice(&t.data);
        offset += t.data.len();
    }
    Ok(net)
}

impl Checkpoint {
    pub fn new(
        operator: usize,
        n_regions: usize,
        mode: ControlMode,
        episodes: usize,
        features: &FeatureConfig,
        params: &PolicyParams,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            operator,
            n_regions,
            mode: mode.as_str().into(),
            episodes,
            features: FeatureDump {
                lookahead: features.lookahead,
                scale: features.scale,
                observe_competitor_prices: features.observe_competitor_prices,
                full_od_prices: features.full_od_prices,
            },
            actor: dump(&params.actor),
            critic: dump(&params.critic),
        }
    }

    pub fn params(&self) -> Result<PolicyParams> {
        Ok(PolicyParams {
            actor: restore(&self.actor, "actor")?,
            critic: restore(&self.critic, "critic")?,
        })
    }

    pub fn features(&self) -> FeatureConfig {
        FeatureConfig {
            lookahead: self.features.lookahead,
            scale: self.features.scale,
            observe_competitor_prices: self.features.observe_competitor_prices,
            full_od_prices: self.features.full_od_prices,
        }
    }

    pub fn mode(&self) -> Result<ControlMode> {
        Ok(self.mode.parse()?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let c: Self = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        if c.format != CHECKPOINT_FORMAT {
            bail!("{}: not a checkpoint (format {:?})", path.display(), c.format);
        }
        if c.version != CHECKPOINT_VERSION {
            bail!("{}: unsupported checkpoint version {}", path.display(), c.version);
        }
        Ok(c)
    }
}
