//! One-axis parameter sweeps over full experiments.

use std::path::Path;

use anyhow::{bail, Context, Result};

use crate::experiment::{run_experiment, ExperimentConfig};
use crate::metrics::METRIC_FIELDS;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    FleetSize,
    FleetSplit,
    WageProfile,
    InfoSharing,
}

impl std::str::FromStr for SweepAxis {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fleet-size" | "fleet_size" => Ok(Self::FleetSize),
            "fleet-split" | "fleet_split" => Ok(Self::FleetSplit),
            "wage-profile" | "wage_profile" => Ok(Self::WageProfile),
            "info-sharing" | "info_sharing" => Ok(Self::InfoSharing),
            other => bail!("unknown sweep axis {other:?}"),
        }
    }
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FleetSize => "fleet_size",
            Self::FleetSplit => "fleet_split",
            Self::WageProfile => "wage_profile",
            Self::InfoSharing => "info_sharing",
        }
    }
}

pub fn parse_split(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s.split_once(':').with_context(|| format!("fleet split {s:?} is not a:b"))?;
    Ok((a.trim().parse()?, b.trim().parse()?))
}

fn parse_bool(s: &str) -> Result<bool> {
    match s {
        "on" | "true" | "yes" | "1" => Ok(true),
        "off" | "false" | "no" | "0" => Ok(false),
        other => bail!("expected on or off, got {other:?}"),
    }
}

/// Copy of `base` with one axis set to `value`.
pub fn apply(base: &ExperimentConfig, axis: SweepAxis, value: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    match axis {
        SweepAxis::FleetSize => cfg.fleet_size = Some(value.parse().with_context(|| format!("fleet size {value:?}"))?),
        SweepAxis::FleetSplit => cfg.fleet_split = Some(parse_split(value)?),
        SweepAxis::WageProfile => cfg.wage_profile = value.parse()?,
        SweepAxis::InfoSharing => cfg.observe_competitor_prices = parse_bool(value)?,
    }
    Ok(cfg)
}

fn safe_dir_name(axis: SweepAxis, value: &str) -> String {
    let v: String = value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("{}={v}", axis.as_str())
}

/// Runs one experiment per value under `out_dir/<axis>=<value>/` and writes
/// the per-point means and standard deviations to `out_dir/sweep.csv`.
pub fn run_sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String], mut log: impl FnMut(&str)) -> Result<()> {
    let out_dir = base.out_dir.clone();
    std::fs::create_dir_all(&out_dir)?;
    let mut rows = Vec::new();
    for value in values {
        let mut cfg = apply(base, axis, value)?;
        cfg.out_dir = out_dir.join(safe_dir_name(axis, value));
        log(&format!("{} = {value}", axis.as_str()));
        let report = run_experiment(&cfg, &mut log)?;
        for (op, stats) in &report.summary.metrics {
            let mut flat = std::collections::BTreeMap::new();
            for field in METRIC_FIELDS {
                let s = stats[field];
                flat.insert(format!("{field}_mean"), s.mean);
                flat.insert(format!("{field}_sd"), s.sd);
            }
            rows.push((value.clone(), op.clone(), flat));
        }
    }
    write_sweep_csv(&out_dir.join("sweep.csv"), axis, &rows)
}

fn write_sweep_csv(
    path: &Path,
    axis: SweepAxis,
    rows: &[(String, String, std::collections::BTreeMap<String, f64>)],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["axis".to_string(), "value".into(), "operator".into()];
    for field in METRIC_FIELDS {
        header.push(format!("{field}_mean"));
        header.push(format!("{field}_sd"));
    }
    w.write_record(&header)?;
    for (value, op, stats) in rows {
        let mut rec = vec![axis.as_str().to_string(), value.clone(), op.clone()];
        for h in &header[3..] {
            rec.push(stats[h].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
