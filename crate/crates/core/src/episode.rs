//! N-way K-shot episodes: sampling, classification, training and evaluation.

use ndarray::{Array2, Axis};
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::embedder::{backward, episode_loss, sgd_step, Embedder, EmbedderSpec, OptimizerConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::math::{argmin, softmax_neg_distances, stream_rng, ProbabilityVector};
use crate::metrics::auc_one_vs_rest;
use crate::prototypes::{compute_all_prototypes, PrototypeSet, PrototypeStrategy};
use crate::scalar::Scalar;
use crate::ClassId;

/// Size of an episode: classes, support samples per class, query samples per class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeShape {
    pub n_way: usize,
    pub k_shot: usize,
    pub q_query: usize,
}

impl EpisodeShape {
    /// Query count defaults to the shot count.
    pub fn new(n_way: usize, k_shot: usize) -> Self {
        EpisodeShape {
            n_way,
            k_shot,
            q_query: k_shot,
        }
    }

    pub fn with_queries(mut self, q_query: usize) -> Self {
        self.q_query = q_query;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.n_way == 0 || self.k_shot == 0 || self.q_query == 0 {
            return Err(Error::config(
                "episode shape",
                format!(
                    "n_way, k_shot and q_query must be positive, got {}/{}/{}",
                    self.n_way, self.k_shot, self.q_query
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode<T> {
    pub support: Array2<T>,
    pub support_labels: Vec<ClassId>,
    pub query: Array2<T>,
    pub query_labels: Vec<ClassId>,
    /// The sampled classes, ascending.
    pub class_ids: Vec<ClassId>,
}

/// Draws `n_way` classes, then `k_shot + q_query` distinct samples of each;
/// the first `k_shot` go to the support set.
pub fn sample_episode<T: Scalar, R: Rng + ?Sized>(
    dataset: &Dataset<T>,
    shape: EpisodeShape,
    rng: &mut R,
) -> Result<Episode<T>> {
    shape.validate()?;
    let classes = dataset.classes();
    if classes.len() < shape.n_way {
        return Err(Error::NotEnoughClasses {
            dataset: dataset.name().to_string(),
            needed: shape.n_way,
            available: classes.len(),
        });
    }
    let per_class = shape.k_shot + shape.q_query;
    if let Some((&class, rows)) = dataset.class_index().iter().find(|(_, r)| r.len() < per_class) {
        return Err(Error::NotEnoughSamples {
            dataset: dataset.name().to_string(),
            class,
            needed: per_class,
            available: rows.len(),
        });
    }
    let mut class_ids: Vec<ClassId> = sample(rng, classes.len(), shape.n_way)
        .into_iter()
        .map(|i| classes[i])
        .collect();
    class_ids.sort();
    let mut support_rows = Vec::with_capacity(shape.n_way * shape.k_shot);
    let mut query_rows = Vec::with_capacity(shape.n_way * shape.q_query);
    for class in &class_ids {
        let rows = &dataset.class_index()[class];
        let picked = sample(rng, rows.len(), per_class);
        for (i, p) in picked.into_iter().enumerate() {
            if i < shape.k_shot {
                support_rows.push(rows[p]);
            } else {
                query_rows.push(rows[p]);
            }
        }
    }
    let features = dataset.features();
    let labels = dataset.labels();
    Ok(Episode {
        support: features.select(Axis(0), &support_rows),
        support_labels: support_rows.iter().map(|&r| labels[r]).collect(),
        query: features.select(Axis(0), &query_rows),
        query_labels: query_rows.iter().map(|&r| labels[r]).collect(),
        class_ids,
    })
}

#[derive(Debug, Clone)]
pub struct Classification<T> {
    /// One distribution per query over `prototypes.class_ids`.
    pub probabilities: Vec<ProbabilityVector<T>>,
    /// Nearest prototype's class; ties go to the lower class id.
    pub predictions: Vec<ClassId>,
    pub prototypes: PrototypeSet<T>,
}

pub fn classify_episode<T: Scalar>(
    episode: &Episode<T>,
    embedder: &Embedder<T>,
    strategy: &PrototypeStrategy<T>,
) -> Result<Classification<T>> {
    let support = embedder.embed(episode.support.view())?;
    let query = embedder.embed(episode.query.view())?;
    let prototypes = compute_all_prototypes(support.view(), &episode.support_labels, strategy)?;
    let mut probabilities = Vec::with_capacity(query.nrows());
    let mut predictions = Vec::with_capacity(query.nrows());
    for q in query.outer_iter() {
        let dists = prototypes.distances(q);
        predictions.push(prototypes.class_ids[argmin(&dists)]);
        probabilities.push(softmax_neg_distances(&dists)?);
    }
    Ok(Classification {
        probabilities,
        predictions,
        prototypes,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub accuracy: f64,
    pub auc: f64,
}

fn score_episode<T: Scalar>(
    episode: &Episode<T>,
    embedder: &Embedder<T>,
    strategy: &PrototypeStrategy<T>,
) -> Result<EpisodeRecord> {
    let out = classify_episode(episode, embedder, strategy)?;
    let correct = out
        .predictions
        .iter()
        .zip(&episode.query_labels)
        .filter(|(p, y)| p == y)
        .count();
    let columns: Vec<usize> = episode
        .query_labels
        .iter()
        .map(|&y| out.prototypes.position(y).ok_or(Error::MissingSupportClass(y)))
        .collect::<Result<_>>()?;
    Ok(EpisodeRecord {
        accuracy: correct as f64 / episode.query_labels.len() as f64,
        auc: auc_one_vs_rest(&out.probabilities, &columns),
    })
}

/// Accuracy and AUC aggregated over test episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mean_accuracy: f64,
    /// Population standard deviation of per-episode accuracy.
    pub accuracy_std: f64,
    pub mean_auc: f64,
    pub episode_count: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_episode_records: Option<Vec<EpisodeRecord>>,
}

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "dataset,strategy,n_way,k_shot,episodes,mean_acc,std_acc,mean_auc,seed";

    pub fn from_records(records: Vec<EpisodeRecord>, keep: bool) -> Self {
        let n = records.len() as f64;
        let mean_accuracy = records.iter().map(|r| r.accuracy).sum::<f64>() / n;
        let var = records
            .iter()
            .map(|r| (r.accuracy - mean_accuracy).powi(2))
            .sum::<f64>()
            / n;
        MetricsReport {
            mean_accuracy,
            accuracy_std: var.sqrt(),
            mean_auc: records.iter().map(|r| r.auc).sum::<f64>() / n,
            episode_count: records.len(),
            per_episode_records: keep.then_some(records),
        }
    }

    /// One row under [`MetricsReport::CSV_HEADER`].
    pub fn csv_row(&self, dataset: &str, strategy: &str, n_way: usize, k_shot: usize, seed: u64) -> String {
        format!(
            "{dataset},{strategy},{n_way},{k_shot},{},{},{},{},{seed}",
            self.episode_count, self.mean_accuracy, self.accuracy_std, self.mean_auc
        )
    }
}

/// Scores `episodes` independently sampled test episodes. Episode `i` draws
/// from [`stream_rng`]`(seed, i)`, so the report does not depend on how the
/// episodes are scheduled across threads.
pub fn evaluate<T: Scalar>(
    dataset: &Dataset<T>,
    embedder: &Embedder<T>,
    strategy: &PrototypeStrategy<T>,
    shape: EpisodeShape,
    episodes: usize,
    seed: u64,
) -> Result<MetricsReport> {
    evaluate_detailed(dataset, embedder, strategy, shape, episodes, seed, false)
}

pub fn evaluate_detailed<T: Scalar>(
    dataset: &Dataset<T>,
    embedder: &Embedder<T>,
    strategy: &PrototypeStrategy<T>,
    shape: EpisodeShape,
    episodes: usize,
    seed: u64,
    keep_records: bool,
) -> Result<MetricsReport> {
    if episodes == 0 {
        return Err(Error::config("episodes", "must be at least 1"));
    }
    if let Some(d) = embedder.input_dim() {
        if d != dataset.dim() {
            return Err(Error::DimensionMismatch {
                left: dataset.dim(),
                right: d,
            });
        }
    }
    strategy.validate()?;
    let records = (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            let episode = sample_episode(dataset, shape, &mut rng)?;
            score_episode(&episode, embedder, strategy)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_records(records, keep_records))
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<T> {
    pub embedder: Embedder<T>,
    /// Loss of every training episode, before its update.
    pub losses: Vec<T>,
}

/// Episodic training: one sampled episode per SGD step.
///
/// Parameters are initialized from `rng`, which then drives episode sampling.
/// An identity embedder has nothing to train; its losses are still recorded.
pub fn train<T: Scalar, R: Rng + ?Sized>(
    dataset: &Dataset<T>,
    spec: &EmbedderSpec,
    strategy: &PrototypeStrategy<T>,
    shape: EpisodeShape,
    steps: usize,
    optimizer: OptimizerConfig,
    rng: &mut R,
) -> Result<TrainOutcome<T>> {
    let embedder = spec.init(rng)?;
    train_from(dataset, embedder, strategy, shape, steps, optimizer, rng)
}

/// Like [`train`] but starting from existing parameters.
pub fn train_from<T: Scalar, R: Rng + ?Sized>(
    dataset: &Dataset<T>,
    mut embedder: Embedder<T>,
    strategy: &PrototypeStrategy<T>,
    shape: EpisodeShape,
    steps: usize,
    optimizer: OptimizerConfig,
    rng: &mut R,
) -> Result<TrainOutcome<T>> {
    optimizer.validate()?;
    strategy.validate()?;
    let mut losses = Vec::with_capacity(steps);
    let mut state = match &embedder {
        Embedder::FeedForward(net) => Some(OptimizerState::new(optimizer, net)?),
        Embedder::Identity => None,
    };
    for step in 0..steps {
        let episode = sample_episode(dataset, shape, rng)?;
        let loss = match (&mut embedder, &mut state) {
            (Embedder::FeedForward(net), Some(state)) => {
                let out = backward(net, &episode, strategy)?;
                if out.loss.is_finite() {
                    sgd_step(net, &out.grads, state)?;
                }
                out.loss
            }
            _ => episode_loss(&embedder, &episode, strategy)?,
        };
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { step });
        }
        losses.push(loss);
    }
    Ok(TrainOutcome { embedder, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_synthetic, SyntheticSpec};
    use crate::math::seeded_rng;
    use ndarray::array;
    use std::collections::HashSet;

    fn two_by_eight() -> Dataset<f64> {
        generate_synthetic(
            &SyntheticSpec {
                n_classes: 2,
                per_class: 8,
                dim: 3,
                seed: 1,
                ..SyntheticSpec::default()
            },
            "d",
        )
        .unwrap()
    }

    fn manual(support: Array2<f64>, sl: &[u32], query: Array2<f64>, ql: &[u32]) -> Episode<f64> {
        let ids = |v: &[u32]| v.iter().map(|&c| ClassId(c)).collect::<Vec<_>>();
        let mut class_ids = ids(sl);
        class_ids.sort();
        class_ids.dedup();
        Episode {
            support,
            support_labels: ids(sl),
            query,
            query_labels: ids(ql),
            class_ids,
        }
    }

    #[test]
    fn sample_counts_and_disjointness() {
        let ds = two_by_eight();
        let ep = sample_episode(&ds, EpisodeShape::new(2, 3).with_queries(5), &mut seeded_rng(0)).unwrap();
        assert_eq!(ep.support.nrows(), 6);
        assert_eq!(ep.query.nrows(), 10);
        assert_eq!(ep.class_ids, vec![ClassId(0), ClassId(1)]);
        let rows = |m: &Array2<f64>| -> HashSet<Vec<u64>> {
            m.outer_iter()
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect()
        };
        assert!(rows(&ep.support).is_disjoint(&rows(&ep.query)));
        for c in &ep.class_ids {
            assert_eq!(ep.support_labels.iter().filter(|&l| l == c).count(), 3);
            assert_eq!(ep.query_labels.iter().filter(|&l| l == c).count(), 5);
        }
    }

    #[test]
    fn sampling_is_seeded() {
        let ds = two_by_eight();
        let shape = EpisodeShape::new(2, 3);
        let a = sample_episode(&ds, shape, &mut seeded_rng(5)).unwrap();
        let b = sample_episode(&ds, shape, &mut seeded_rng(5)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampling_preconditions() {
        let ds = two_by_eight();
        assert!(matches!(
            sample_episode(&ds, EpisodeShape::new(3, 1), &mut seeded_rng(0)),
            Err(Error::NotEnoughClasses {
                needed: 3,
                available: 2,
                ..
            })
        ));
        match sample_episode(&ds, EpisodeShape::new(2, 5), &mut seeded_rng(0)) {
            Err(e @ Error::NotEnoughSamples { .. }) => {
                assert!(e.to_string().contains("class 0"), "{e}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn saturated_classification() {
        let ep = manual(array![[0.0], [0.0], [10.0], [10.0]], &[0, 0, 1, 1], array![[1.0]], &[0]);
        let out = classify_episode(&ep, &Embedder::Identity, &PrototypeStrategy::UniformMean).unwrap();
        assert_eq!(out.predictions, vec![ClassId(0)]);
        assert!(out.probabilities[0].probs()[0] > 0.99);
    }

    #[test]
    fn equidistant_query_goes_to_lower_class() {
        let ep = manual(array![[0.0], [4.0]], &[5, 2], array![[2.0]], &[5]);
        let out = classify_episode(&ep, &Embedder::Identity, &PrototypeStrategy::UniformMean).unwrap();
        assert_eq!(out.probabilities[0].probs(), &[0.5, 0.5]);
        assert_eq!(out.predictions, vec![ClassId(2)]);
    }

    #[test]
    fn planted_outlier_margin() {
        let ep = manual(
            array![
                [0.0],
                [0.0],
                [0.0],
                [0.0],
                [9.0],
                [10.0],
                [10.0],
                [10.0],
                [10.0],
                [10.0]
            ],
            &[0, 0, 0, 0, 0, 1, 1, 1, 1, 1],
            array![[2.5]],
            &[0],
        );
        let inf = classify_episode(&ep, &Embedder::Identity, &PrototypeStrategy::influence()).unwrap();
        let uni = classify_episode(&ep, &Embedder::Identity, &PrototypeStrategy::UniformMean).unwrap();
        assert!(inf.prototypes.vectors[[0, 0]].abs() < 1e-12);
        assert!((uni.prototypes.vectors[[0, 0]] - 1.8).abs() < 1e-12);
        assert_eq!(inf.predictions, vec![ClassId(0)]);
        assert_eq!(uni.predictions, vec![ClassId(0)]);
        // distances 2.5 vs 7.5 and 0.7 vs 7.5
        let p_inf = 1.0 / (1.0 + (-5.0f64).exp());
        let p_uni = 1.0 / (1.0 + (-6.8f64).exp());
        assert!((inf.probabilities[0].probs()[0] - p_inf).abs() < 1e-12);
        assert!((uni.probabilities[0].probs()[0] - p_uni).abs() < 1e-12);
        // the query sits past the contaminated prototype, so uniform is more confident here
        assert!(uni.probabilities[0].probs()[0] > inf.probabilities[0].probs()[0]);
    }

    #[test]
    fn perfect_separation_scores_one() {
        let ds: Dataset<f64> = generate_synthetic(
            &SyntheticSpec {
                n_classes: 4,
                per_class: 12,
                dim: 4,
                class_separation: 40.0,
                seed: 2,
                ..SyntheticSpec::default()
            },
            "far",
        )
        .unwrap();
        let r = evaluate(
            &ds,
            &Embedder::Identity,
            &PrototypeStrategy::UniformMean,
            EpisodeShape::new(3, 3),
            50,
            1,
        )
        .unwrap();
        assert_eq!(r.mean_accuracy, 1.0);
        assert_eq!(r.mean_auc, 1.0);
        assert_eq!(r.accuracy_std, 0.0);
        assert_eq!(r.episode_count, 50);
    }

    #[test]
    fn evaluation_is_schedule_independent() {
        let ds = two_by_eight();
        let run = || {
            evaluate_detailed(
                &ds,
                &Embedder::Identity,
                &PrototypeStrategy::influence(),
                EpisodeShape::new(2, 3),
                64,
                9,
                true,
            )
            .unwrap()
        };
        let a = run();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(run);
        assert_eq!(a, b);
        assert_eq!(a.per_episode_records.as_ref().unwrap().len(), 64);
    }

    #[test]
    fn evaluate_rejects_zero_episodes() {
        let ds = two_by_eight();
        assert!(evaluate(
            &ds,
            &Embedder::Identity,
            &PrototypeStrategy::UniformMean,
            EpisodeShape::new(2, 3),
            0,
            0
        )
        .is_err());
    }

    #[test]
    fn report_std_is_population() {
        let recs = vec![
            EpisodeRecord {
                accuracy: 1.0,
                auc: 1.0,
            },
            EpisodeRecord {
                accuracy: 0.0,
                auc: 0.5,
            },
        ];
        let r = MetricsReport::from_records(recs, false);
        assert_eq!(r.mean_accuracy, 0.5);
        assert_eq!(r.accuracy_std, 0.5);
        assert_eq!(r.mean_auc, 0.75);
        assert_eq!(r.csv_row("d", "uniform", 2, 5, 7), "d,uniform,2,5,2,0.5,0.5,0.75,7");
    }

    #[test]
    fn zero_steps_leave_parameters() {
        let ds = two_by_eight();
        let spec = EmbedderSpec::feed_forward(vec![3, 4, 2]);
        let init: Embedder<f64> = spec.init(&mut seeded_rng(3)).unwrap();
        let out = train(
            &ds,
            &spec,
            &PrototypeStrategy::UniformMean,
            EpisodeShape::new(2, 3),
            0,
            OptimizerConfig::default(),
            &mut seeded_rng(3),
        )
        .unwrap();
        assert!(out.losses.is_empty());
        assert_eq!(out.embedder, init);
    }

    #[test]
    fn training_is_deterministic() {
        let ds = two_by_eight();
        let spec = EmbedderSpec::feed_forward(vec![3, 6, 3]);
        let run = || {
            train(
                &ds,
                &spec,
                &PrototypeStrategy::influence(),
                EpisodeShape::new(2, 3),
                20,
                OptimizerConfig::default(),
                &mut seeded_rng(8),
            )
            .unwrap()
        };
        let (a, b) = (run(), run());
        let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a.losses), bits(&b.losses));
        assert_eq!(a.embedder, b.embedder);
    }
}
