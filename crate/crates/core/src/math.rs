//! Distance, softmax and averaging primitives, plus the seeded randomness
//! every stochastic routine in the crate draws from.
//!
//! Randomness: all sampling uses [`ChaCha8Rng`]. A run is identified by a
//! `u64` seed; independent work items (evaluation episodes, grid cells) get
//! their own ChaCha stream through [`stream_rng`], so results do not depend on
//! the order or thread in which items execute.

use ndarray::{Array1, ArrayView1, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The generator behind every random draw in the crate.
pub type SeededRng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> SeededRng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Generator for work item `stream` of the run identified by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> SeededRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives a child seed from a parent seed and a path of integer keys
/// (splitmix64 finalizer applied per key).
pub fn mix_seed(seed: u64, keys: &[u64]) -> u64 {
    keys.iter().fold(seed, |acc, &k| {
        let mut z = acc ^ k.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    })
}

pub(crate) fn ensure_finite<'a, T: Scalar>(values: impl IntoIterator<Item = &'a T>, what: &'static str) -> Result<()> {
    if values.into_iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { what })
    }
}

/// Squared Euclidean distance without dimension checks.
pub(crate) fn squared_distance_unchecked<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .fold(T::zero(), |acc, v| acc + v)
}

pub fn euclidean_distance<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    Ok(squared_distance_unchecked(a, b).sqrt())
}

/// Class-membership probabilities; entries are nonnegative and sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbabilityVector<T>(Vec<T>);

impl<T: Scalar> ProbabilityVector<T> {
    pub fn probs(&self) -> &[T] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &p) in self.0.iter().enumerate().skip(1) {
            if p > self.0[best] {
                best = i;
            }
        }
        best
    }

    pub fn into_inner(self) -> Vec<T> {
        self.0
    }
}

impl<T> AsRef<[T]> for ProbabilityVector<T> {
    fn as_ref(&self) -> &[T] {
        &self.0
    }
}

/// Softmax over negated distances, shifted by the minimum distance so the
/// largest exponent is exactly zero.
pub fn softmax_neg_distances<T: Scalar>(distances: &[T]) -> Result<ProbabilityVector<T>> {
    if distances.is_empty() {
        return Err(Error::Empty("distance list"));
    }
    ensure_finite(distances, "distance list")?;
    let min = distances.iter().copied().fold(T::infinity(), T::min);
    let exps: Vec<T> = distances.iter().map(|&d| (min - d).exp()).collect();
    let total: T = exps.iter().copied().sum();
    Ok(ProbabilityVector(exps.into_iter().map(|e| e / total).collect()))
}

/// `log softmax` of negated distances, computed with the same shift.
pub(crate) fn log_softmax_neg_distances<T: Scalar>(distances: &[T]) -> Vec<T> {
    let min = distances.iter().copied().fold(T::infinity(), T::min);
    let log_total = distances
        .iter()
        .map(|&d| (min - d).exp())
        .fold(T::zero(), |a, b| a + b)
        .ln();
    distances.iter().map(|&d| (min - d) - log_total).collect()
}

/// Index of the smallest entry; ties go to the lowest index.
pub fn argmin<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v < values[best] {
            best = i;
        }
    }
    best
}

pub fn mean_vector<T: Scalar>(rows: ArrayView2<'_, T>) -> Result<Array1<T>> {
    if rows.nrows() == 0 {
        return Err(Error::Empty("embedding matrix"));
    }
    Ok(rows.sum_axis(Axis(0)) / T::of_usize(rows.nrows()))
}

/// Weighted row average; `weights` must already sum to one.
pub(crate) fn weighted_mean<T: Scalar>(rows: ArrayView2<'_, T>, weights: &[T]) -> Array1<T> {
    let mut out = Array1::zeros(rows.ncols());
    for (row, &w) in rows.outer_iter().zip(weights) {
        out.scaled_add(w, &row);
    }
    out
}
