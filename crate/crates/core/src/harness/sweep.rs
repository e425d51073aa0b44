//! Parameter sweeps: one run per (axis value, repeat), executed in parallel.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::run::{build_problem, run_on_problem};
use super::write_atomic;
use crate::algorithm::Variant;
use crate::channel::ChannelKind;
use crate::graph::TopologyKind;
use crate::rng::{derive_seed, StreamTag};
use crate::{Error, Result};

pub const SWEEP_CSV_HEADER: &str = "axis_value,repeat,final_opt_err,final_consensus,status";
pub const SUMMARY_CSV_HEADER: &str = "axis_value,repeats,mean_final_opt_err,mean_final_consensus,diverged";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SweepAxis {
    N,
    Topology,
    SigmaC,
    Algorithm,
}

impl SweepAxis {
    pub fn name(&self) -> &'static str {
        match self {
            SweepAxis::N => "n",
            SweepAxis::Topology => "topology",
            SweepAxis::SigmaC => "sigma_c",
            SweepAxis::Algorithm => "algorithm",
        }
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "n" | "n_list" => Ok(SweepAxis::N),
            "topology" | "topology_list" => Ok(SweepAxis::Topology),
            "sigma_c" | "sigma_c_list" => Ok(SweepAxis::SigmaC),
            "algorithm" | "algorithm_list" => Ok(SweepAxis::Algorithm),
            other => Err(Error::InvalidInput(format!("unknown sweep axis `{other}`"))),
        }
    }
}

/// Seed used by repeat `r` of a sweep; every axis value shares it.
pub fn repeat_seed(base_seed: u64, repeat: usize) -> u64 {
    derive_seed(base_seed, StreamTag::Sweep, &[repeat as u64])
}

/// `base` with the axis set to `value`. A zero `sigma_c` selects the exact
/// channel; a positive one selects AWGN, keeping the base fading gain.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: &str) -> Result<ExperimentConfig> {
    let mut cfg = base.clone();
    let bad = |message: String| Error::ConfigValue {
        key: axis.name().to_string(),
        message,
    };
    match axis {
        SweepAxis::N => cfg.n = value.trim().parse().map_err(|_| bad(format!("`{value}` is not a node count")))?,
        SweepAxis::Topology => cfg.topology = value.parse::<TopologyKind>()?,
        SweepAxis::SigmaC => {
            let s: f64 = value.trim().parse().map_err(|_| bad(format!("`{value}` is not a number")))?;
            if !(s.is_finite() && s >= 0.0) {
                return Err(bad(format!("sigma_c must be >= 0, got {s}")));
            }
            let h = match base.channel {
                ChannelKind::Awgn { h, .. } => h,
                _ => 1.0,
            };
            cfg.channel = if s == 0.0 {
                ChannelKind::Exact
            } else {
                ChannelKind::Awgn { sigma_c: s, h }
            };
        }
        SweepAxis::Algorithm => {
            let v = value.parse::<Variant>()?;
            cfg.algorithm = match (v, base.algorithm) {
                (Variant::NearDgd { .. }, Variant::NearDgd { rounds }) => Variant::NearDgd { rounds },
                _ => v,
            };
            if !cfg.algorithm.tracks_gradient() {
                cfg.shared_noise = false;
                cfg.log_noise = false;
            }
        }
    }
    cfg.output = None;
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub axis_value: String,
    pub repeat: usize,
    pub final_opt_err: f64,
    pub final_consensus: f64,
    /// Terminal run status, or `error: ...` when the run failed to start.
    pub status: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSummary {
    pub axis_value: String,
    pub repeats: usize,
    pub mean_final_opt_err: f64,
    pub mean_final_consensus: f64,
    pub diverged: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub axis: SweepAxis,
    pub rows: Vec<SweepRow>,
    pub summary: Vec<SweepSummary>,
}

impl SweepTable {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(SWEEP_CSV_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.axis_value, r.repeat, r.final_opt_err, r.final_consensus, r.status
            );
        }
        out
    }

    pub fn summary_csv(&self) -> String {
        let mut out = String::from(SUMMARY_CSV_HEADER);
        out.push('\n');
        for s in &self.summary {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                s.axis_value, s.repeats, s.mean_final_opt_err, s.mean_final_consensus, s.diverged
            );
        }
        out
    }

    /// Writes `<stem>.csv` and `<stem>_summary.csv` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write_atomic(&dir.join(format!("{stem}.csv")), self.to_csv().as_bytes())?;
        write_atomic(&dir.join(format!("{stem}_summary.csv")), self.summary_csv().as_bytes())
    }

    pub fn summary_for(&self, axis_value: &str) -> Option<&SweepSummary> {
        self.summary.iter().find(|s| s.axis_value == axis_value)
    }
}

/// Runs the sweep. Configuration errors abort before any run starts; a run
/// that fails afterwards is recorded in its row and the sweep continues.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[String], repeats: usize) -> Result<SweepTable> {
    if values.is_empty() {
        return Err(Error::EmptyInput("sweep needs at least one axis value".into()));
    }
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be >= 1".into()));
    }
    let mut jobs = Vec::with_capacity(values.len() * repeats);
    for value in values {
        let cfg = apply_axis(base, axis, value)?;
        for r in 0..repeats {
            let mut c = cfg.clone();
            c.seed = repeat_seed(base.seed, r);
            jobs.push((value.trim().to_string(), r, c));
        }
    }
    let rows: Vec<SweepRow> = jobs
        .into_par_iter()
        .map(|(axis_value, repeat, cfg)| {
            match build_problem(&cfg).and_then(|p| run_on_problem(&p, &cfg)) {
                Ok(rec) => SweepRow {
                    axis_value,
                    repeat,
                    final_opt_err: rec.final_opt_err(),
                    final_consensus: rec.final_consensus(),
                    status: rec.status.to_string(),
                },
                Err(e) => SweepRow {
                    axis_value,
                    repeat,
                    final_opt_err: f64::INFINITY,
                    final_consensus: f64::INFINITY,
                    status: format!("error: {}", e.to_string().replace(',', ";")),
                },
            }
        })
        .collect();
    let summary = values
        .iter()
        .map(|v| {
            let v = v.trim();
            let group: Vec<&SweepRow> = rows.iter().filter(|r| r.axis_value == v).collect();
            let k = group.len() as f64;
            SweepSummary {
                axis_value: v.to_string(),
                repeats: group.len(),
                mean_final_opt_err: group.iter().map(|r| r.final_opt_err).sum::<f64>() / k,
                mean_final_consensus: group.iter().map(|r| r.final_consensus).sum::<f64>() / k,
                diverged: group.iter().filter(|r| r.status.starts_with("diverged")).count(),
            }
        })
        .collect();
    Ok(SweepTable { axis, rows, summary })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::AlphaMode;

    fn base() -> ExperimentConfig {
        ExperimentConfig {
            n: 4,
            alpha: 0.05,
            alpha_mode: AlphaMode::Fixed,
            iterations: 30,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn axis_parsing() {
        assert_eq!("n_list".parse::<SweepAxis>().unwrap(), SweepAxis::N);
        assert_eq!("sigma_c".parse::<SweepAxis>().unwrap(), SweepAxis::SigmaC);
        assert!("gamma".parse::<SweepAxis>().is_err());
    }

    #[test]
    fn zero_sigma_is_exact() {
        let c = apply_axis(&base(), SweepAxis::SigmaC, "0").unwrap();
        assert_eq!(c.channel, ChannelKind::Exact);
        let c = apply_axis(&base(), SweepAxis::SigmaC, "0.1").unwrap();
        assert_eq!(c.channel, ChannelKind::Awgn { sigma_c: 0.1, h: 1.0 });
    }

    #[test]
    fn bad_value_aborts() {
        assert!(sweep(&base(), SweepAxis::N, &["x".into()], 1).is_err());
        assert!(sweep(&base(), SweepAxis::N, &[], 1).is_err());
    }

    #[test]
    fn repeats_are_reproducible() {
        let vals = vec!["4".to_string(), "6".to_string()];
        let a = sweep(&base(), SweepAxis::N, &vals, 2).unwrap();
        let b = sweep(&base(), SweepAxis::N, &vals, 2).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.rows.len(), 4);
        assert_eq!(a.summary.len(), 2);
    }
}
