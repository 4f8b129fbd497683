//! Experiment configuration: flat `key = value` text, list values
//! comma-separated, `#` starts a comment.
//!
//! ```text
//! mode = intra                 # intra | cross
//! seed = 7
//! strategies = uniform, influence, inverse_distance
//! n_way = 2
//! k_shot = 3, 5
//! q_query = 5
//! train_shot = 10
//! train_steps = 200
//! test_episodes = 2000
//! embedder = feed_forward      # identity | feed_forward
//! layer_dims = 8, 16, 8
//! learning_rate = 0.01
//! momentum = 0.9
//! kernel = linear              # linear | rbf
//! bandwidth = auto             # auto | <positive number>, rbf only
//! normalization = max          # max | sum
//! epsilon = 1e-8
//!
//! dataset.derm.source = synthetic          # or a CSV path
//! dataset.derm.n_classes = 8                # also per_class, dim, separation,
//!                                          # within_std, outlier_fraction,
//!                                          # outlier_scale, domain_shift, seed
//! dataset.derm.train_classes = 0, 1, 2, 3
//! dataset.derm.test_classes = 4, 5, 6, 7
//! ```
//!
//! Datasets keep the order in which their names first appear. Command-line
//! flags are applied as further `key = value` pairs after the file, so they
//! win over file values.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use protonet::{
    mix_seed, Bandwidth, ClassId, EmbedderSpec, KernelConfig, Normalization, OptimizerConfig, PrototypeStrategy,
    SyntheticSpec,
};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const DEFAULT_TEST_EPISODES: usize = 2000;
pub const DEFAULT_TRAIN_SHOT: usize = 10;
pub const DEFAULT_Q_QUERY: usize = 5;
pub const DEFAULT_TRAIN_STEPS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    IntraDomain,
    CrossDomain,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::IntraDomain => "intra",
            Mode::CrossDomain => "cross",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    pub source: DatasetSource,
    /// `None` falls back to [`protonet::Dataset::default_split`].
    pub train_classes: Option<Vec<ClassId>>,
    pub test_classes: Option<Vec<ClassId>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub datasets: Vec<DatasetConfig>,
    pub strategies: Vec<PrototypeStrategy<f64>>,
    pub n_way: Vec<usize>,
    pub k_shot: Vec<usize>,
    pub q_query: usize,
    pub train_shot: usize,
    pub train_steps: usize,
    pub test_episodes: usize,
    pub embedder: EmbedderSpec,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
    pub mode: Mode,
}

/// One `key = value` assignment and the directory relative paths in it
/// resolve against.
#[derive(Debug, Clone)]
struct Entry {
    key: String,
    value: String,
    base: Option<PathBuf>,
}

/// Ordered assignments; a repeated key replaces the earlier value but keeps
/// its position.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: Vec<Entry>,
}

impl RawConfig {
    pub fn set(&mut self, key: impl Into<String>, value: impl Into<String>) {
        self.set_with_base(key.into(), value.into(), None);
    }

    fn set_with_base(&mut self, key: String, value: String, base: Option<PathBuf>) {
        match self.entries.iter_mut().find(|e| e.key == key) {
            Some(e) => {
                e.value = value;
                e.base = base;
            }
            None => self.entries.push(Entry { key, value, base }),
        }
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.iter().find(|e| e.key == key).map(|e| e.value.as_str())
    }

    /// Parses config text. `origin` names the source in error messages and,
    /// when it is a file, anchors relative dataset paths.
    pub fn parse(text: &str, origin: Option<&Path>) -> Result<Self> {
        let mut raw = RawConfig::default();
        raw.merge_text(text, origin)?;
        Ok(raw)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, Some(path))
    }

    fn merge_text(&mut self, text: &str, origin: Option<&Path>) -> Result<()> {
        let base = origin.and_then(|p| p.parent()).map(Path::to_path_buf);
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Syntax {
                    origin: origin.map_or_else(|| "<config>".into(), |p| p.display().to_string()),
                    line: i + 1,
                    reason: format!("expected `key = value`, got `{line}`"),
                });
            };
            self.set_with_base(key.trim().to_string(), value.trim().to_string(), base.clone());
        }
        Ok(())
    }

    /// Applies a `key=value` override as given on the command line.
    pub fn apply_override(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment.split_once('=').ok_or_else(|| CliError::Config {
            key: assignment.to_string(),
            reason: "expected `key=value`".into(),
        })?;
        self.set(key.trim(), value.trim());
        Ok(())
    }

    pub fn into_config(self) -> Result<ExperimentConfig> {
        build(&self)
    }
}

fn bad(key: &str, value: &str, expected: &str) -> CliError {
    CliError::Config {
        key: key.to_string(),
        reason: format!("invalid value `{value}`, expected {expected}"),
    }
}

fn parse_as<V: FromStr>(key: &str, value: &str, expected: &str) -> Result<V> {
    value.parse().map_err(|_| bad(key, value, expected))
}

fn positive(key: &str, value: &str) -> Result<usize> {
    match value.parse::<usize>() {
        Ok(v) if v > 0 => Ok(v),
        _ => Err(bad(key, value, "a positive integer")),
    }
}

fn list<V>(key: &str, value: &str, item: impl Fn(&str) -> Result<V>) -> Result<Vec<V>> {
    let items: Vec<V> = value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(item)
        .collect::<Result<_>>()?;
    if items.is_empty() {
        return Err(bad(key, value, "a nonempty comma-separated list"));
    }
    Ok(items)
}

fn finite(key: &str, value: &str) -> Result<f64> {
    match value.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(bad(key, value, "a finite number")),
    }
}

pub fn parse_mode(key: &str, value: &str) -> Result<Mode> {
    match value.to_ascii_lowercase().as_str() {
        "intra" | "intra_domain" | "intradomain" => Ok(Mode::IntraDomain),
        "cross" | "cross_domain" | "crossdomain" => Ok(Mode::CrossDomain),
        _ => Err(bad(key, value, "`intra` or `cross`")),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum StrategyKind {
    Uniform,
    Influence,
    InverseDistance,
}

fn strategy_kind(key: &str, value: &str) -> Result<StrategyKind> {
    match value.to_ascii_lowercase().as_str() {
        "uniform" | "uniform_mean" => Ok(StrategyKind::Uniform),
        "influence" | "influence_weighted" => Ok(StrategyKind::Influence),
        "inverse_distance" => Ok(StrategyKind::InverseDistance),
        _ => Err(bad(key, value, "one of `uniform`, `influence`, `inverse_distance`")),
    }
}

fn class_ids(key: &str, value: &str) -> Result<Vec<ClassId>> {
    list(key, value, |s| {
        parse_as::<u32>(key, s, "a list of class ids").map(ClassId)
    })
}

const TOP_LEVEL_KEYS: &[&str] = &[
    "mode",
    "seed",
    "strategies",
    "n_way",
    "k_shot",
    "q_query",
    "train_shot",
    "train_steps",
    "test_episodes",
    "embedder",
    "layer_dims",
    "learning_rate",
    "momentum",
    "kernel",
    "bandwidth",
    "normalization",
    "epsilon",
];

const DATASET_KEYS: &[&str] = &[
    "source",
    "train_classes",
    "test_classes",
    "n_classes",
    "per_class",
    "dim",
    "separation",
    "within_std",
    "outlier_fraction",
    "outlier_scale",
    "domain_shift",
    "seed",
];

/// Synthetic defaults used when a dataset only names `source = synthetic`.
pub fn default_synthetic(seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        n_classes: 8,
        per_class: 30,
        dim: 8,
        class_separation: 3.0,
        within_std: 1.0,
        outlier_fraction: 0.1,
        outlier_scale: 6.0,
        domain_shift: 0.0,
        seed,
    }
}

fn build(raw: &RawConfig) -> Result<ExperimentConfig> {
    let mut dataset_names: Vec<String> = Vec::new();
    for e in &raw.entries {
        if let Some(rest) = e.key.strip_prefix("dataset.") {
            let (name, field) = rest.rsplit_once('.').ok_or_else(|| CliError::Config {
                key: e.key.clone(),
                reason: "expected `dataset.<name>.<field>`".into(),
            })?;
            if name.is_empty() || !DATASET_KEYS.contains(&field) {
                return Err(CliError::Config {
                    key: e.key.clone(),
                    reason: format!("unknown dataset field, expected one of {}", DATASET_KEYS.join(", ")),
                });
            }
            if !dataset_names.iter().any(|n| n == name) {
                dataset_names.push(name.to_string());
            }
        } else if !TOP_LEVEL_KEYS.contains(&e.key.as_str()) {
            return Err(CliError::Config {
                key: e.key.clone(),
                reason: "unknown key".into(),
            });
        }
    }

    let get = |k: &str| raw.get(k);
    let seed = get("seed").map_or(Ok(0), |v| parse_as("seed", v, "an unsigned integer"))?;
    let mode = get("mode").map_or(Ok(Mode::IntraDomain), |v| parse_mode("mode", v))?;
    let n_way = get("n_way").map_or(Ok(vec![2]), |v| list("n_way", v, |s| positive("n_way", s)))?;
    let k_shot = get("k_shot").map_or(Ok(vec![3, 5]), |v| list("k_shot", v, |s| positive("k_shot", s)))?;
    let q_query = get("q_query").map_or(Ok(DEFAULT_Q_QUERY), |v| positive("q_query", v))?;
    let train_shot = get("train_shot").map_or(Ok(DEFAULT_TRAIN_SHOT), |v| positive("train_shot", v))?;
    let train_steps = get("train_steps").map_or(Ok(DEFAULT_TRAIN_STEPS), |v| {
        parse_as("train_steps", v, "a nonnegative integer")
    })?;
    let test_episodes = get("test_episodes").map_or(Ok(DEFAULT_TEST_EPISODES), |v| positive("test_episodes", v))?;

    let embedder = match get("embedder").map(str::to_ascii_lowercase).as_deref() {
        None | Some("identity") => {
            if get("layer_dims").is_some() {
                return Err(CliError::Config {
                    key: "layer_dims".into(),
                    reason: "only valid with `embedder = feed_forward`".into(),
                });
            }
            EmbedderSpec::identity()
        }
        Some("feed_forward") | Some("feedforward") => {
            let dims = get("layer_dims").ok_or_else(|| CliError::Config {
                key: "layer_dims".into(),
                reason: "required with `embedder = feed_forward`, e.g. `8, 16, 8`".into(),
            })?;
            let spec = EmbedderSpec::feed_forward(list("layer_dims", dims, |s| positive("layer_dims", s))?);
            spec.validate().map_err(|e| CliError::Config {
                key: "layer_dims".into(),
                reason: e.to_string(),
            })?;
            spec
        }
        Some(other) => return Err(bad("embedder", other, "`identity` or `feed_forward`")),
    };

    let optimizer = OptimizerConfig {
        learning_rate: get("learning_rate").map_or(Ok(0.01), |v| finite("learning_rate", v))?,
        momentum: get("momentum").map_or(Ok(0.9), |v| finite("momentum", v))?,
    };
    optimizer.validate().map_err(|e| CliError::Config {
        key: "learning_rate/momentum".into(),
        reason: e.to_string(),
    })?;

    let bandwidth = match get("bandwidth") {
        None => None,
        Some(v) if v.eq_ignore_ascii_case("auto") => Some(Bandwidth::Auto),
        Some(v) => match v.parse::<f64>() {
            Ok(b) if b.is_finite() && b > 0.0 => Some(Bandwidth::Fixed(b)),
            _ => return Err(bad("bandwidth", v, "`auto` or a positive number")),
        },
    };
    let kernel = match get("kernel").map(str::to_ascii_lowercase).as_deref() {
        None | Some("linear") => {
            if bandwidth.is_some() {
                return Err(CliError::Config {
                    key: "bandwidth".into(),
                    reason: "only valid with `kernel = rbf`".into(),
                });
            }
            KernelConfig::Linear
        }
        Some("rbf") => KernelConfig::Rbf(bandwidth.unwrap_or(Bandwidth::Auto)),
        Some(other) => return Err(bad("kernel", other, "`linear` or `rbf`")),
    };
    let normalization = match get("normalization").map(str::to_ascii_lowercase).as_deref() {
        None | Some("max") => Normalization::Max,
        Some("sum") => Normalization::Sum,
        Some(other) => return Err(bad("normalization", other, "`max` or `sum`")),
    };
    let epsilon = match get("epsilon") {
        None => protonet::prototypes::DEFAULT_EPSILON,
        Some(v) => match v.parse::<f64>() {
            Ok(e) if e.is_finite() && e > 0.0 => e,
            _ => return Err(bad("epsilon", v, "a positive number")),
        },
    };
    let kinds = get("strategies").map_or(
        Ok(vec![
            StrategyKind::Uniform,
            StrategyKind::Influence,
            StrategyKind::InverseDistance,
        ]),
        |v| list("strategies", v, |s| strategy_kind("strategies", s)),
    )?;
    let mut strategies = Vec::with_capacity(kinds.len());
    for kind in kinds {
        let s = match kind {
            StrategyKind::Uniform => PrototypeStrategy::UniformMean,
            StrategyKind::Influence => PrototypeStrategy::InfluenceWeighted { kernel, normalization },
            StrategyKind::InverseDistance => PrototypeStrategy::InverseDistance { epsilon },
        };
        if strategies.contains(&s) {
            return Err(CliError::Config {
                key: "strategies".into(),
                reason: format!("`{}` listed twice", s.name()),
            });
        }
        strategies.push(s);
    }

    let mut datasets = Vec::with_capacity(dataset_names.len());
    for (index, name) in dataset_names.iter().enumerate() {
        datasets.push(build_dataset(raw, name, mix_seed(seed, &[0xda7a, index as u64]))?);
    }
    if datasets.is_empty() {
        return Err(CliError::Config {
            key: "dataset".into(),
            reason: "at least one dataset is required, e.g. `dataset.a.source = synthetic` or `--dataset a=synthetic`"
                .into(),
        });
    }
    if mode == Mode::CrossDomain && datasets.len() < 2 {
        return Err(CliError::Config {
            key: "mode".into(),
            reason: "cross-domain runs need at least two datasets".into(),
        });
    }

    Ok(ExperimentConfig {
        datasets,
        strategies,
        n_way,
        k_shot,
        q_query,
        train_shot,
        train_steps,
        test_episodes,
        embedder,
        optimizer,
        seed,
        mode,
    })
}

fn build_dataset(raw: &RawConfig, name: &str, default_seed: u64) -> Result<DatasetConfig> {
    let key = |field: &str| format!("dataset.{name}.{field}");
    let source_key = key("source");
    let entry = raw
        .entries
        .iter()
        .find(|e| e.key == source_key)
        .ok_or_else(|| CliError::Config {
            key: source_key.clone(),
            reason: "missing, expected `synthetic` or a CSV path".into(),
        })?;
    let synthetic_fields = &DATASET_KEYS[3..];
    let source = if entry.value.eq_ignore_ascii_case("synthetic") {
        let mut spec = default_synthetic(default_seed);
        for field in synthetic_fields {
            let k = key(field);
            let Some(v) = raw.get(&k) else { continue };
            match *field {
                "n_classes" => spec.n_classes = positive(&k, v)?,
                "per_class" => spec.per_class = positive(&k, v)?,
                "dim" => spec.dim = positive(&k, v)?,
                "separation" => spec.class_separation = finite(&k, v)?,
                "within_std" => spec.within_std = finite(&k, v)?,
                "outlier_fraction" => spec.outlier_fraction = finite(&k, v)?,
                "outlier_scale" => spec.outlier_scale = finite(&k, v)?,
                "domain_shift" => spec.domain_shift = finite(&k, v)?,
                "seed" => spec.seed = parse_as(&k, v, "an unsigned integer")?,
                _ => unreachable!("field list is fixed"),
            }
        }
        spec.validate().map_err(|e| CliError::Config {
            key: format!("dataset.{name}"),
            reason: e.to_string(),
        })?;
        DatasetSource::Synthetic(spec)
    } else {
        if let Some(field) = synthetic_fields.iter().find(|f| raw.get(&key(f)).is_some()) {
            return Err(CliError::Config {
                key: key(field),
                reason: "only valid with `source = synthetic`".into(),
            });
        }
        let path = PathBuf::from(&entry.value);
        let path = match &entry.base {
            Some(base) if path.is_relative() => base.join(path),
            _ => path,
        };
        DatasetSource::Csv(path)
    };
    let train_classes = raw
        .get(&key("train_classes"))
        .map(|v| class_ids(&key("train_classes"), v))
        .transpose()?;
    let test_classes = raw
        .get(&key("test_classes"))
        .map(|v| class_ids(&key("test_classes"), v))
        .transpose()?;
    if train_classes.is_some() != test_classes.is_some() {
        return Err(CliError::Config {
            key: key(if train_classes.is_some() {
                "test_classes"
            } else {
                "train_classes"
            }),
            reason: "train_classes and test_classes must be given together".into(),
        });
    }
    Ok(DatasetConfig {
        name: name.to_string(),
        source,
        train_classes,
        test_classes,
    })
}
