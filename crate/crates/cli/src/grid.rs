//! Experiment grids: every (train domain, test domain, strategy, n_way,
//! k_shot) cell gets one result row.
//!
//! An embedder is trained once per (train domain, strategy, n_way) and shared
//! by all k_shot cells and test domains that use it. Seeds are derived from
//! the master seed and the cell coordinates only, never from the strategy,
//! so all strategies see the same training and test episodes.

use std::fmt;

use protonet::{
    evaluate, generate_synthetic, load_csv, mix_seed, seeded_rng, split_classes, train, Dataset64, Embedder64,
    EmbedderKind, EpisodeShape, PrototypeStrategy64,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{DatasetConfig, DatasetSource, ExperimentConfig, Mode};
use crate::error::{CliError, Result};

const TRAIN_STREAM: u64 = 1;
const TEST_STREAM: u64 = 2;

/// A named dataset split into training and test classes.
#[derive(Debug, Clone)]
pub struct Domain {
    pub name: String,
    pub train: Dataset64,
    pub test: Dataset64,
}

pub fn load_dataset(cfg: &DatasetConfig) -> Result<Dataset64> {
    let loaded = match &cfg.source {
        DatasetSource::Synthetic(spec) => generate_synthetic(spec, &cfg.name),
        DatasetSource::Csv(path) => load_csv(path, &cfg.name),
    };
    loaded.map_err(|source| CliError::Dataset {
        dataset: cfg.name.clone(),
        source,
    })
}

pub fn load_domain(cfg: &DatasetConfig) -> Result<Domain> {
    let full = load_dataset(cfg)?;
    let (train_ids, test_ids) = match (&cfg.train_classes, &cfg.test_classes) {
        (Some(a), Some(b)) => (a.clone(), b.clone()),
        _ => full.default_split(),
    };
    let (train, test) = split_classes(&full, &train_ids, &test_ids).map_err(|source| CliError::Dataset {
        dataset: cfg.name.clone(),
        source,
    })?;
    Ok(Domain {
        name: cfg.name.clone(),
        train,
        test,
    })
}

pub fn load_domains(config: &ExperimentConfig) -> Result<Vec<Domain>> {
    config.datasets.par_iter().map(load_domain).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub train_domain: String,
    pub test_domain: String,
    pub strategy: String,
    pub n_way: usize,
    pub k_shot: usize,
    pub mean_acc: f64,
    pub std_acc: f64,
    pub mean_auc: f64,
    pub seed: u64,
    pub episodes: usize,
}

/// Rows in grid order: train domain, test domain, strategy, n_way, k_shot,
/// each in the order the config lists them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

/// Indices into the config lists.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
struct CellKey {
    train: usize,
    test: usize,
    strategy: usize,
    n_way: usize,
    k_shot: usize,
}

struct CellName<'a> {
    key: CellKey,
    config: &'a ExperimentConfig,
    domains: &'a [Domain],
}

impl fmt::Display for CellName<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let k = self.key;
        write!(
            f,
            "[train={} test={} strategy={} n_way={} k_shot={}]",
            self.domains[k.train].name,
            self.domains[k.test].name,
            self.config.strategies[k.strategy].name(),
            self.config.n_way[k.n_way],
            self.config.k_shot[k.k_shot],
        )
    }
}

/// An embedder trained for one (domain, strategy, n_way) combination.
#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub domain: String,
    pub strategy: String,
    pub n_way: usize,
    pub embedder: Embedder64,
    pub losses: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct GridOutput {
    pub table: ResultTable,
    /// Empty for an identity embedder, which has nothing to train.
    pub models: Vec<TrainedModel>,
}

fn domain_pairs(mode: Mode, n: usize) -> Vec<(usize, usize)> {
    match mode {
        Mode::IntraDomain => (0..n).map(|i| (i, i)).collect(),
        Mode::CrossDomain => (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .collect(),
    }
}

fn check_dimensions(config: &ExperimentConfig, domains: &[Domain]) -> Result<()> {
    if config.embedder.kind == EmbedderKind::FeedForward {
        let want = config.embedder.layer_dims[0];
        if let Some(d) = domains.iter().find(|d| d.train.dim() != want) {
            return Err(CliError::Config {
                key: "layer_dims".into(),
                reason: format!(
                    "embedder input width {want} does not match dataset `{}` of dimension {}",
                    d.name,
                    d.train.dim()
                ),
            });
        }
    }
    if config.mode == Mode::CrossDomain {
        for (i, j) in domain_pairs(Mode::CrossDomain, domains.len()) {
            let (a, b) = (&domains[i], &domains[j]);
            if a.train.dim() != b.test.dim() {
                return Err(CliError::Config {
                    key: "mode".into(),
                    reason: format!(
                        "domains `{}` (dimension {}) and `{}` (dimension {}) cannot share an embedder",
                        a.name,
                        a.train.dim(),
                        b.name,
                        b.test.dim()
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Runs the grid the config's mode describes.
pub fn run_grid(config: &ExperimentConfig) -> Result<GridOutput> {
    let domains = load_domains(config)?;
    run_grid_on(config, &domains)
}

pub fn run_intra_domain(config: &ExperimentConfig) -> Result<ResultTable> {
    expect_mode(config, Mode::IntraDomain)?;
    Ok(run_grid(config)?.table)
}

pub fn run_cross_domain(config: &ExperimentConfig) -> Result<ResultTable> {
    expect_mode(config, Mode::CrossDomain)?;
    Ok(run_grid(config)?.table)
}

fn expect_mode(config: &ExperimentConfig, mode: Mode) -> Result<()> {
    if config.mode != mode {
        return Err(CliError::Config {
            key: "mode".into(),
            reason: format!("expected `{mode}`, config says `{}`", config.mode),
        });
    }
    Ok(())
}

/// Same as [`run_grid`] with the domains already loaded.
pub fn run_grid_on(config: &ExperimentConfig, domains: &[Domain]) -> Result<GridOutput> {
    if domains.len() != config.datasets.len() {
        return Err(CliError::Config {
            key: "dataset".into(),
            reason: format!(
                "{} datasets configured, {} loaded",
                config.datasets.len(),
                domains.len()
            ),
        });
    }
    check_dimensions(config, domains)?;
    let pairs = domain_pairs(config.mode, domains.len());
    let mut cells = Vec::new();
    for &(train, test) in &pairs {
        for strategy in 0..config.strategies.len() {
            for n_way in 0..config.n_way.len() {
                for k_shot in 0..config.k_shot.len() {
                    cells.push(CellKey {
                        train,
                        test,
                        strategy,
                        n_way,
                        k_shot,
                    });
                }
            }
        }
    }
    let name = |key| CellName { key, config, domains }.to_string();

    for &key in &cells {
        let n = config.n_way[key.n_way];
        let available = domains[key.test].test.n_classes();
        if n > available {
            return Err(CliError::Cell {
                cell: name(key),
                source: protonet::Error::NotEnoughClasses {
                    dataset: domains[key.test].test.name().to_string(),
                    needed: n,
                    available,
                },
            });
        }
    }

    // Train once per (train domain, strategy, n_way).
    let mut train_keys: Vec<CellKey> = cells
        .iter()
        .map(|c| CellKey {
            test: c.train,
            k_shot: 0,
            ..*c
        })
        .collect();
    train_keys.sort();
    train_keys.dedup();
    let trainable = config.embedder.kind == EmbedderKind::FeedForward;
    let models: Vec<(CellKey, TrainedModel)> = if trainable {
        train_keys
            .par_iter()
            .map(|&key| {
                let domain = &domains[key.train];
                let strategy = &config.strategies[key.strategy];
                let n_way = config.n_way[key.n_way];
                let shape = EpisodeShape::new(n_way, config.train_shot).with_queries(config.q_query);
                let mut rng = seeded_rng(mix_seed(config.seed, &[TRAIN_STREAM, key.train as u64, n_way as u64]));
                let out = train(
                    &domain.train,
                    &config.embedder,
                    strategy,
                    shape,
                    config.train_steps,
                    config.optimizer,
                    &mut rng,
                )
                .map_err(|source| CliError::Cell {
                    cell: format!("{} (training)", name(key)),
                    source,
                })?;
                Ok((
                    key,
                    TrainedModel {
                        domain: domain.name.clone(),
                        strategy: strategy.name().to_string(),
                        n_way,
                        embedder: out.embedder,
                        losses: out.losses,
                    },
                ))
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };

    let identity = Embedder64::Identity;
    let rows = cells
        .par_iter()
        .map(|&key| {
            let embedder = if trainable {
                let tk = CellKey {
                    test: key.train,
                    k_shot: 0,
                    ..key
                };
                &models.iter().find(|(k, _)| *k == tk).expect("trained above").1.embedder
            } else {
                &identity
            };
            evaluate_cell(config, domains, key, embedder).map_err(|source| CliError::Cell {
                cell: name(key),
                source,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(GridOutput {
        table: ResultTable { rows },
        models: models.into_iter().map(|(_, m)| m).collect(),
    })
}

fn evaluate_cell(
    config: &ExperimentConfig,
    domains: &[Domain],
    key: CellKey,
    embedder: &Embedder64,
) -> protonet::Result<ResultRow> {
    let strategy: &PrototypeStrategy64 = &config.strategies[key.strategy];
    let n_way = config.n_way[key.n_way];
    let k_shot = config.k_shot[key.k_shot];
    let shape = EpisodeShape::new(n_way, k_shot).with_queries(config.q_query);
    let seed = mix_seed(
        config.seed,
        &[TEST_STREAM, key.test as u64, n_way as u64, k_shot as u64],
    );
    let report = evaluate(
        &domains[key.test].test,
        embedder,
        strategy,
        shape,
        config.test_episodes,
        seed,
    )?;
    Ok(ResultRow {
        train_domain: domains[key.train].name.clone(),
        test_domain: domains[key.test].name.clone(),
        strategy: strategy.name().to_string(),
        n_way,
        k_shot,
        mean_acc: report.mean_accuracy,
        std_acc: report.accuracy_std,
        mean_auc: report.mean_auc,
        seed: config.seed,
        episodes: report.episode_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pair_counts() {
        assert_eq!(domain_pairs(Mode::IntraDomain, 3), vec![(0, 0), (1, 1), (2, 2)]);
        assert_eq!(domain_pairs(Mode::CrossDomain, 3).len(), 6);
        assert!(domain_pairs(Mode::CrossDomain, 3).iter().all(|(a, b)| a != b));
    }
}
