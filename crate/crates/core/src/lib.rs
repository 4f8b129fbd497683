//! Few-shot classification by distance to class prototypes.
//!
//! Three ways of turning a class's support embeddings into a prototype are
//! provided (see [`PrototypeStrategy`]):
//!
//! * `UniformMean` — the arithmetic mean of the support embeddings.
//! * `InfluenceWeighted` — a weighted mean whose weights come from how far the
//!   class's mean embedding moves when each sample is left out
//!   ([`mmd::leave_one_out_mmd`]); samples that move it most count least.
//! * `InverseDistance` — weights inversely proportional to each sample's
//!   distance from the mean of the remaining samples.
//!
//! Queries are classified by a softmax over negated Euclidean distances to
//! the prototypes. The [`episode`] module samples N-way K-shot episodes,
//! trains a small feed-forward [`embedder`] with SGD and momentum, and
//! aggregates accuracy and one-vs-rest AUC over many test episodes.
//!
//! All numeric code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64`/`*32` aliases below fix the scalar type.

pub mod dataset;
pub mod embedder;
pub mod episode;
pub mod error;
pub mod math;
pub mod metrics;
pub mod mmd;
pub mod prototypes;
pub mod scalar;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use dataset::{generate_synthetic, load_csv, split_classes, write_csv, Dataset, SyntheticSpec};
pub use embedder::{Embedder, EmbedderKind, EmbedderSpec, Network, OptimizerConfig, OptimizerState};
pub use episode::{
    classify_episode, evaluate, evaluate_detailed, sample_episode, train, train_from, Classification, Episode,
    EpisodeRecord, EpisodeShape, MetricsReport, TrainOutcome,
};
pub use error::{Error, Result};
pub use math::{
    euclidean_distance, mean_vector, mix_seed, seeded_rng, softmax_neg_distances, stream_rng, ProbabilityVector,
    SeededRng,
};
pub use metrics::auc_one_vs_rest;
pub use mmd::{
    influence_weights, influence_weights_with, leave_one_out_mmd, mmd, Bandwidth, InfluenceScores, KernelConfig,
    Normalization,
};
pub use prototypes::{compute_all_prototypes, compute_prototype, PrototypeSet, PrototypeStrategy};
pub use scalar::Scalar;

/// Integer class label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ClassId(pub u32);

impl fmt::Display for ClassId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// A single sample or embedding.
pub type FeatureVector<T> = ndarray::Array1<T>;
/// Samples or embeddings stacked as rows.
pub type EmbeddingMatrix<T> = ndarray::Array2<T>;

pub type Dataset64 = Dataset<f64>;
pub type Dataset32 = Dataset<f32>;
pub type Episode64 = Episode<f64>;
pub type Episode32 = Episode<f32>;
pub type Embedder64 = Embedder<f64>;
pub type Embedder32 = Embedder<f32>;
pub type Network64 = Network<f64>;
pub type Network32 = Network<f32>;
pub type PrototypeSet64 = PrototypeSet<f64>;
pub type PrototypeStrategy64 = PrototypeStrategy<f64>;
pub type KernelConfig64 = KernelConfig<f64>;
