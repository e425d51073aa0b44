//! Flat `key = value` experiment configuration.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! # comment
//! key = value        # trailing comments are allowed
//! section.key = value
//! ```
//!
//! Keys are case-sensitive, duplicates and unknown keys are rejected, and
//! every missing key takes the default documented on [`ExperimentConfig`].

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::algorithm::{AlgParams, Variant};
use crate::channel::{ChannelKind, ChannelType};
use crate::graph::TopologyKind;
use crate::objective::{OracleMode, OracleModeName};
use crate::{Error, Result};

/// Every key the parser accepts.
pub const KNOWN_KEYS: &[&str] = &[
    "topology",
    "topology.er_prob",
    "n",
    "seed",
    "channel.type",
    "channel.sigma_c",
    "channel.h",
    "channel.delta_p",
    "objective.type",
    "objective.dim",
    "objective.kappa",
    "objective.spread",
    "objective.lambda",
    "dataset.source",
    "dataset.per_node",
    "dataset.separation",
    "dataset.class_pair",
    "dataset.images",
    "dataset.labels",
    "oracle.mode",
    "oracle.batch_size",
    "oracle.sigma_g",
    "algorithm",
    "alpha",
    "alpha.mode",
    "gamma",
    "gamma.mode",
    "gamma.override",
    "near_dgd.t",
    "shared_noise",
    "log_noise",
    "T",
    "metric.cadence",
    "init.spread",
    "tol",
    "output",
];

#[derive(Clone, Debug, PartialEq)]
pub enum DatasetSpec {
    Synthetic { per_node: usize, separation: f64, dim: usize },
    Mnist {
        images: PathBuf,
        labels: PathBuf,
        class_pair: (u8, u8),
        per_node: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum ObjectiveSpec {
    /// Random strongly convex quadratics with eigenvalues in `[1, kappa]`.
    Quadratic { dim: usize, kappa: f64, spread: f64 },
    /// Regularized logistic regression on sharded data.
    Logistic { lambda: f64, dataset: DatasetSpec },
}

impl ObjectiveSpec {
    /// Problem dimension when known before loading data.
    pub fn dim(&self) -> Option<usize> {
        match self {
            ObjectiveSpec::Quadratic { dim, .. }
            | ObjectiveSpec::Logistic {
                dataset: DatasetSpec::Synthetic { dim, .. },
                ..
            } => Some(*dim),
            ObjectiveSpec::Logistic { .. } => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AlphaMode {
    Fixed,
    /// The largest step size admitted by the convergence bound.
    Theoretical,
    /// Logarithmic grid search on final optimality error.
    Grid,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GammaMode {
    Fixed,
    /// `γ = min(α ln T, 0.2499)`.
    Schedule,
}

/// A validated experiment.
///
/// Defaults: `topology = ring`, `n = 10`, `seed = 0`, exact channel, quadratic
/// objective (`dim = 5`, `kappa = 10`, `spread = 1`), exact oracle,
/// `algorithm = icgt`, `gamma.mode = schedule`, `T = 5000`,
/// `metric.cadence = 10`, `init.spread = 0`, `tol = 0` (no early stop).
/// `alpha.mode` is `fixed` when `alpha` is given and `grid` otherwise.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub topology: TopologyKind,
    pub er_prob: Option<f64>,
    pub n: usize,
    pub seed: u64,
    pub channel: ChannelKind,
    pub objective: ObjectiveSpec,
    pub oracle: OracleMode,
    pub algorithm: Variant,
    pub alpha: f64,
    pub alpha_mode: AlphaMode,
    pub gamma: f64,
    pub gamma_mode: GammaMode,
    pub gamma_override: bool,
    pub shared_noise: bool,
    pub log_noise: bool,
    pub iterations: usize,
    pub cadence: usize,
    pub init_spread: f64,
    pub tol: f64,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            topology: TopologyKind::Ring,
            er_prob: None,
            n: 10,
            seed: 0,
            channel: ChannelKind::Exact,
            objective: ObjectiveSpec::Quadratic {
                dim: 5,
                kappa: 10.0,
                spread: 1.0,
            },
            oracle: OracleMode::Exact,
            algorithm: Variant::Icgt,
            alpha: 0.05,
            alpha_mode: AlphaMode::Grid,
            gamma: 0.1,
            gamma_mode: GammaMode::Schedule,
            gamma_override: false,
            shared_noise: false,
            log_noise: false,
            iterations: 5000,
            cadence: 10,
            init_spread: 0.0,
            tol: 0.0,
            output: None,
        }
    }
}

impl ExperimentConfig {
    /// γ used for a run with step size `alpha`.
    pub fn gamma_for(&self, alpha: f64) -> f64 {
        match self.gamma_mode {
            GammaMode::Fixed => self.gamma,
            GammaMode::Schedule => crate::algorithm::gamma_schedule(alpha, self.iterations),
        }
    }

    pub fn params(&self, alpha: f64) -> AlgParams {
        AlgParams {
            variant: self.algorithm,
            alpha,
            gamma: self.gamma_for(alpha),
            allow_gamma_override: self.gamma_override,
            shared_noise: self.shared_noise,
        }
    }

    /// Semantic checks shared by the parser and programmatic construction.
    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, message: String| {
            Err(Error::ConfigValue {
                key: key.to_string(),
                message,
            })
        };
        if self.n == 0 {
            return bad("n", "must be >= 1".into());
        }
        if self.n < 2 && self.topology != TopologyKind::Complete {
            return bad("n", format!("{} needs at least 2 nodes", self.topology));
        }
        if self.iterations == 0 {
            return bad("T", "must be >= 1".into());
        }
        if self.cadence == 0 {
            return bad("metric.cadence", "must be >= 1".into());
        }
        if self.objective.dim() == Some(0) {
            return bad("objective.dim", "must be >= 1".into());
        }
        if self.alpha_mode == AlphaMode::Fixed && !(self.alpha.is_finite() && self.alpha > 0.0) {
            return bad("alpha", format!("must be > 0, got {}", self.alpha));
        }
        if self.algorithm == Variant::Icgt
            && !self.gamma_override
            && self.gamma_mode == GammaMode::Fixed
            && !(self.gamma > 0.0 && self.gamma < 0.25)
        {
            return bad(
                "gamma",
                format!(
                    "{} is outside the convergence domain 0 < gamma < 1/4; set gamma.override = true to run anyway",
                    self.gamma
                ),
            );
        }
        if self.gamma_mode == GammaMode::Fixed && !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma", format!("must lie in (0, 1], got {}", self.gamma));
        }
        if self.alpha_mode == AlphaMode::Theoretical && self.gamma_mode != GammaMode::Fixed {
            return bad(
                "alpha.mode",
                "theoretical step size depends on gamma; set gamma.mode = fixed".into(),
            );
        }
        if self.shared_noise && !self.algorithm.tracks_gradient() {
            return bad("shared_noise", format!("only meaningful for icgt and gt, not {}", self.algorithm));
        }
        if let ObjectiveSpec::Logistic { lambda, dataset } = &self.objective {
            if lambda.is_nan() || *lambda <= 0.0 {
                return bad("objective.lambda", format!("must be > 0, got {lambda}"));
            }
            let per_node = match dataset {
                DatasetSpec::Synthetic { per_node, .. } | DatasetSpec::Mnist { per_node, .. } => *per_node,
            };
            if per_node == 0 {
                return bad("dataset.per_node", "must be >= 1".into());
            }
            if let OracleMode::Minibatch { batch_size } = self.oracle {
                if batch_size == 0 {
                    return bad("oracle.batch_size", "must be >= 1".into());
                }
            }
        } else if matches!(self.oracle, OracleMode::Minibatch { .. }) {
            return bad("oracle.mode", "minibatch sampling needs a logistic objective".into());
        }
        if !(self.init_spread.is_finite() && self.init_spread >= 0.0) {
            return bad("init.spread", format!("must be >= 0, got {}", self.init_spread));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return bad("tol", format!("must be >= 0, got {}", self.tol));
        }
        crate::channel::ChannelModel::new(self.channel).map_err(|e| Error::ConfigValue {
            key: "channel.type".into(),
            message: e.to_string(),
        })?;
        Ok(())
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::ConfigParse {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: "empty key".into(),
                });
            }
            if !KNOWN_KEYS.contains(&key) {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: format!("unknown key `{key}`"),
                });
            }
            if let Some((first, _)) = map.get(key) {
                return Err(Error::ConfigParse {
                    line: line_no,
                    message: format!("duplicate key `{key}` (first set on line {first})"),
                });
            }
            map.insert(key.to_string(), (line_no, value.to_string()));
        }
        Ok(Entries { map })
    }

    fn raw(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|(_, v)| v.as_str())
    }

    fn get<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| Error::ConfigValue {
                key: key.to_string(),
                message: format!("cannot parse `{v}`: {e}"),
            }),
        }
    }

    fn flag(&self, key: &str) -> Result<Option<bool>> {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(Some(true)),
                "false" | "no" | "off" | "0" => Ok(Some(false)),
                _ => Err(Error::ConfigValue {
                    key: key.to_string(),
                    message: format!("expected a boolean, got `{v}`"),
                }),
            },
        }
    }
}

fn value_err(key: &str, message: impl Into<String>) -> Error {
    Error::ConfigValue {
        key: key.to_string(),
        message: message.into(),
    }
}

fn parse_class_pair(v: &str) -> Result<(u8, u8)> {
    let parts: Vec<&str> = v.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(value_err("dataset.class_pair", format!("expected `a,b`, got `{v}`")));
    }
    let p = |s: &str| {
        s.parse::<u8>()
            .ok()
            .filter(|d| *d <= 9)
            .ok_or_else(|| value_err("dataset.class_pair", format!("`{s}` is not a digit 0-9")))
    };
    let pair = (p(parts[0])?, p(parts[1])?);
    if pair.0 == pair.1 {
        return Err(value_err("dataset.class_pair", "classes must differ"));
    }
    Ok(pair)
}

/// Parses and validates configuration text.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let e = Entries::parse(text)?;
    let mut cfg = ExperimentConfig::default();

    if let Some(t) = e.get::<TopologyKind>("topology")? {
        cfg.topology = t;
    }
    cfg.er_prob = e.get("topology.er_prob")?;
    if let Some(n) = e.get("n")? {
        cfg.n = n;
    }
    if let Some(s) = e.get("seed")? {
        cfg.seed = s;
    }

    let channel_type = e.get::<ChannelType>("channel.type")?.unwrap_or(ChannelType::Exact);
    cfg.channel = match channel_type {
        ChannelType::Exact => ChannelKind::Exact,
        ChannelType::Awgn => ChannelKind::Awgn {
            sigma_c: e.get("channel.sigma_c")?.unwrap_or(0.1),
            h: e.get("channel.h")?.unwrap_or(1.0),
        },
        ChannelType::Quant => ChannelKind::ProbQuant {
            delta_p: e.get("channel.delta_p")?.unwrap_or(10),
        },
    };

    let objective_type = e.raw("objective.type").unwrap_or("quadratic").to_ascii_lowercase();
    cfg.objective = match objective_type.as_str() {
        "quadratic" => ObjectiveSpec::Quadratic {
            dim: e.get("objective.dim")?.unwrap_or(5),
            kappa: e.get("objective.kappa")?.unwrap_or(10.0),
            spread: e.get("objective.spread")?.unwrap_or(1.0),
        },
        "logistic" => {
            let source = e.raw("dataset.source").unwrap_or("synthetic").to_ascii_lowercase();
            let per_node = e.get("dataset.per_node")?.unwrap_or(200);
            let dataset = match source.as_str() {
                "synthetic" | "synth" => DatasetSpec::Synthetic {
                    per_node,
                    separation: e.get("dataset.separation")?.unwrap_or(1.5),
                    dim: e.get("objective.dim")?.unwrap_or(10),
                },
                "mnist" => DatasetSpec::Mnist {
                    images: e
                        .raw("dataset.images")
                        .map(PathBuf::from)
                        .ok_or_else(|| value_err("dataset.images", "required for mnist"))?,
                    labels: e
                        .raw("dataset.labels")
                        .map(PathBuf::from)
                        .ok_or_else(|| value_err("dataset.labels", "required for mnist"))?,
                    class_pair: e.raw("dataset.class_pair").map(parse_class_pair).transpose()?.unwrap_or((0, 1)),
                    per_node,
                },
                other => return Err(value_err("dataset.source", format!("unknown source `{other}`"))),
            };
            if matches!(dataset, DatasetSpec::Mnist { .. }) && e.raw("objective.dim").is_some() {
                return Err(value_err("objective.dim", "mnist takes its dimension from the image size"));
            }
            ObjectiveSpec::Logistic {
                lambda: e.get("objective.lambda")?.unwrap_or(0.05),
                dataset,
            }
        }
        other => return Err(value_err("objective.type", format!("unknown objective `{other}`"))),
    };
    cfg.oracle = match e.get::<OracleModeName>("oracle.mode")?.unwrap_or(OracleModeName::Exact) {
        OracleModeName::Exact => OracleMode::Exact,
        OracleModeName::Minibatch => OracleMode::Minibatch {
            batch_size: e.get("oracle.batch_size")?.unwrap_or(32),
        },
        OracleModeName::Gaussian => OracleMode::AdditiveGaussian {
            sigma_g: e.get("oracle.sigma_g")?.unwrap_or(0.1),
        },
    };

    if let Some(a) = e.get::<Variant>("algorithm")? {
        cfg.algorithm = a;
    }
    if let Some(t) = e.get::<usize>("near_dgd.t")? {
        match cfg.algorithm {
            Variant::NearDgd { .. } => cfg.algorithm = Variant::NearDgd { rounds: t },
            _ => return Err(value_err("near_dgd.t", "only valid with algorithm = near_dgd")),
        }
    }

    let alpha: Option<f64> = e.get("alpha")?;
    cfg.alpha_mode = match e.raw("alpha.mode").map(str::to_ascii_lowercase).as_deref() {
        None => {
            if alpha.is_some() {
                AlphaMode::Fixed
            } else {
                AlphaMode::Grid
            }
        }
        Some("fixed") => AlphaMode::Fixed,
        Some("theoretical") => AlphaMode::Theoretical,
        Some("grid") | Some("tuned") => AlphaMode::Grid,
        Some(other) => return Err(value_err("alpha.mode", format!("unknown mode `{other}`"))),
    };
    if cfg.alpha_mode == AlphaMode::Fixed {
        cfg.alpha = alpha.ok_or_else(|| value_err("alpha", "required when alpha.mode = fixed"))?;
    } else if let Some(a) = alpha {
        cfg.alpha = a;
    }

    let gamma: Option<f64> = e.get("gamma")?;
    cfg.gamma_mode = match e.raw("gamma.mode").map(str::to_ascii_lowercase).as_deref() {
        None => {
            if gamma.is_some() {
                GammaMode::Fixed
            } else {
                GammaMode::Schedule
            }
        }
        Some("fixed") => GammaMode::Fixed,
        Some("schedule") => GammaMode::Schedule,
        Some(other) => return Err(value_err("gamma.mode", format!("unknown mode `{other}`"))),
    };
    if let Some(g) = gamma {
        cfg.gamma = g;
    } else if cfg.gamma_mode == GammaMode::Fixed {
        return Err(value_err("gamma", "required when gamma.mode = fixed"));
    }
    cfg.gamma_override = e.flag("gamma.override")?.unwrap_or(false);
    cfg.shared_noise = e.flag("shared_noise")?.unwrap_or(false);
    cfg.log_noise = e.flag("log_noise")?.unwrap_or(false);

    if let Some(t) = e.get("T")? {
        cfg.iterations = t;
    }
    if let Some(c) = e.get("metric.cadence")? {
        cfg.cadence = c;
    }
    if let Some(s) = e.get("init.spread")? {
        cfg.init_spread = s;
    }
    if let Some(t) = e.get("tol")? {
        cfg.tol = t;
    }
    cfg.output = e.raw("output").map(PathBuf::from);

    cfg.validate()?;
    Ok(cfg)
}

/// Reads, parses and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// Applies `SIM_SEED` when it is set.
pub fn apply_env_overrides(cfg: &mut ExperimentConfig) -> Result<()> {
    if let Ok(v) = std::env::var("SIM_SEED") {
        cfg.seed = v
            .trim()
            .parse()
            .map_err(|_| value_err("SIM_SEED", format!("expected an unsigned integer, got `{v}`")))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = parse_config("topology = ring\nn = 4\nalgorithm = icgt\nalpha = 0.05\nT = 100\nseed = 7\n").unwrap();
        assert_eq!(cfg.topology, TopologyKind::Ring);
        assert_eq!(cfg.n, 4);
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.iterations, 100);
        assert_eq!(cfg.channel, ChannelKind::Exact);
        assert!(matches!(cfg.objective, ObjectiveSpec::Quadratic { .. }));
        assert_eq!(cfg.alpha_mode, AlphaMode::Fixed);
        assert_eq!(cfg.gamma_mode, GammaMode::Schedule);
    }

    #[test]
    fn gamma_outside_domain_names_key() {
        let err = parse_config("alpha = 0.1\ngamma = 0.5\n").unwrap_err();
        match err {
            Error::ConfigValue { key, message } => {
                assert_eq!(key, "gamma");
                assert!(message.contains("1/4"));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_config("alpha = 0.1\ngamma = 0.5\ngamma.override = true\n").is_ok());
    }

    #[test]
    fn duplicate_and_unknown_keys() {
        assert!(matches!(
            parse_config("n = 4\nalpha = 0.1\nn = 5\n"),
            Err(Error::ConfigParse { line: 3, .. })
        ));
        assert!(matches!(
            parse_config("alpha = 0.1\nbogus = 1\n"),
            Err(Error::ConfigParse { line: 2, .. })
        ));
        assert!(matches!(parse_config("just words\n"), Err(Error::ConfigParse { line: 1, .. })));
    }

    #[test]
    fn comments_and_blank_lines() {
        let cfg = parse_config("# header\n\nalpha = 0.2   # trailing\nchannel.type = quant\nchannel.delta_p = 4\n").unwrap();
        assert_eq!(cfg.alpha, 0.2);
        assert_eq!(cfg.channel, ChannelKind::ProbQuant { delta_p: 4 });
    }

    #[test]
    fn theoretical_needs_fixed_gamma() {
        assert!(parse_config("alpha.mode = theoretical\n").is_err());
        assert!(parse_config("alpha.mode = theoretical\ngamma = 0.1\n").is_ok());
    }

    #[test]
    fn near_dgd_rounds() {
        let cfg = parse_config("algorithm = near_dgd\nnear_dgd.t = 3\nalpha = 0.1\n").unwrap();
        assert_eq!(cfg.algorithm, Variant::NearDgd { rounds: 3 });
        assert!(parse_config("algorithm = dgd\nnear_dgd.t = 3\nalpha = 0.1\n").is_err());
    }

    #[test]
    fn logistic_with_minibatch() {
        let cfg = parse_config(
            "objective.type = logistic\nobjective.lambda = 0.1\noracle.mode = minibatch\noracle.batch_size = 16\nalpha = 0.1\n",
        )
        .unwrap();
        assert_eq!(cfg.oracle, OracleMode::Minibatch { batch_size: 16 });
        assert!(parse_config("oracle.mode = minibatch\nalpha = 0.1\n").is_err());
    }

    #[test]
    fn bad_values_name_key() {
        match parse_config("n = four\n").unwrap_err() {
            Error::ConfigValue { key, .. } => assert_eq!(key, "n"),
            other => panic!("unexpected {other:?}"),
        }
        match parse_config("alpha = 0.1\nshared_noise = maybe\n").unwrap_err() {
            Error::ConfigValue { key, .. } => assert_eq!(key, "shared_noise"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
