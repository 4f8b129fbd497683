//! Kernel mean-embedding discrepancy and the leave-one-out influence weights
//! built on top of it.
//!
//! The discrepancy between two sample sets is the distance between their mean
//! embeddings in the kernel's feature space. For the linear kernel this is the
//! Euclidean distance between arithmetic means; for the Gaussian (RBF) kernel
//! the biased V-statistic
//!
//! ```text
//! MMD²(A, B) = mean k(a, a') + mean k(b, b') − 2 mean k(a, b)
//! ```
//!
//! is clamped at zero before taking the root.
//!
//! A sample's influence score is the discrepancy between its support set and
//! the same set with that sample removed. Scores are normalized across the
//! set and inverted, so samples that barely move the mean embedding get
//! weights near one and the most deviant sample gets weight zero.

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ensure_finite, mean_vector, squared_distance_unchecked};
use crate::scalar::Scalar;

/// Scores below this are treated as zero when normalizing.
pub const DEGENERATE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Bandwidth<T> {
    /// Median pairwise distance of the pooled samples, or 1 when that median is 0.
    Auto,
    Fixed(T),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub enum KernelConfig<T> {
    #[default]
    Linear,
    Rbf(Bandwidth<T>),
}

impl<T: Scalar> KernelConfig<T> {
    pub fn validate(&self) -> Result<()> {
        if let KernelConfig::Rbf(Bandwidth::Fixed(s)) = self {
            if !(s.is_finite() && *s > T::zero()) {
                return Err(Error::config("bandwidth", format!("must be positive, got {s}")));
            }
        }
        Ok(())
    }

    /// Replaces `Auto` with the median-heuristic bandwidth of `samples`.
    pub fn resolve(self, samples: ArrayView2<'_, T>) -> Self {
        match self {
            KernelConfig::Rbf(Bandwidth::Auto) => KernelConfig::Rbf(Bandwidth::Fixed(median_heuristic(samples))),
            other => other,
        }
    }
}

/// How raw leave-one-out scores are scaled into `[0, 1]` before inversion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Normalization {
    /// Divide by the largest score.
    #[default]
    Max,
    /// Divide by the sum of scores.
    Sum,
}

/// Median of all pairwise Euclidean distances between rows; 1 if that is 0
/// or there are fewer than two rows.
pub fn median_heuristic<T: Scalar>(samples: ArrayView2<'_, T>) -> T {
    let n = samples.nrows();
    let mut dists = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            dists.push(squared_distance_unchecked(samples.row(i), samples.row(j)).sqrt());
        }
    }
    if dists.is_empty() {
        return T::one();
    }
    dists.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
    let mid = dists.len() / 2;
    let median = if dists.len() % 2 == 0 {
        (dists[mid - 1] + dists[mid]) / T::of(2.0)
    } else {
        dists[mid]
    };
    if median > T::zero() {
        median
    } else {
        T::one()
    }
}

fn rbf<T: Scalar>(sq_dist: T, sigma: T) -> T {
    (-sq_dist / (T::of(2.0) * sigma * sigma)).exp()
}

fn mean_cross_kernel<T: Scalar>(a: ArrayView2<'_, T>, b: ArrayView2<'_, T>, sigma: T) -> T {
    let mut total = T::zero();
    for x in a.outer_iter() {
        for y in b.outer_iter() {
            total = total + rbf(squared_distance_unchecked(x, y), sigma);
        }
    }
    total / T::of_usize(a.nrows() * b.nrows())
}

fn check_set<T: Scalar>(set: ArrayView2<'_, T>, what: &'static str) -> Result<()> {
    if set.nrows() == 0 || set.ncols() == 0 {
        return Err(Error::Empty(what));
    }
    ensure_finite(set.iter(), what)
}

/// Discrepancy between the mean embeddings of two sample sets.
pub fn mmd<T: Scalar>(set_a: ArrayView2<'_, T>, set_b: ArrayView2<'_, T>, kernel: KernelConfig<T>) -> Result<T> {
    check_set(set_a, "first sample set")?;
    check_set(set_b, "second sample set")?;
    if set_a.ncols() != set_b.ncols() {
        return Err(Error::DimensionMismatch {
            left: set_a.ncols(),
            right: set_b.ncols(),
        });
    }
    kernel.validate()?;
    match kernel {
        KernelConfig::Linear => {
            let mu_a = mean_vector(set_a)?;
            let mu_b = mean_vector(set_b)?;
            Ok(squared_distance_unchecked(mu_a.view(), mu_b.view()).sqrt())
        }
        KernelConfig::Rbf(bw) => {
            let sigma = match bw {
                Bandwidth::Fixed(s) => s,
                Bandwidth::Auto => {
                    let pooled = ndarray::concatenate(Axis(0), &[set_a, set_b]).expect("column counts checked");
                    median_heuristic(pooled.view())
                }
            };
            let sq = mean_cross_kernel(set_a, set_a, sigma) + mean_cross_kernel(set_b, set_b, sigma)
                - T::of(2.0) * mean_cross_kernel(set_a, set_b, sigma);
            Ok(sq.max(T::zero()).sqrt())
        }
    }
}

fn without_row<T: Scalar>(rows: ArrayView2<'_, T>, skip: usize) -> Array2<T> {
    let kept: Vec<usize> = (0..rows.nrows()).filter(|&r| r != skip).collect();
    rows.select(Axis(0), &kept)
}

/// Entry `i` is the discrepancy between `support` and `support` without row `i`.
///
/// An `Auto` bandwidth is resolved once on the full support set and shared by
/// every leave-one-out comparison.
pub fn leave_one_out_mmd<T: Scalar>(support: ArrayView2<'_, T>, kernel: KernelConfig<T>) -> Result<Vec<T>> {
    check_set(support, "support set")?;
    let k = support.nrows();
    if k < 2 {
        return Err(Error::TooFewSamples(k));
    }
    kernel.validate()?;
    match kernel.resolve(support) {
        KernelConfig::Linear => {
            let mu = mean_vector(support)?;
            (0..k)
                .map(|i| {
                    let rest = without_row(support, i);
                    let mu_rest = mean_vector(rest.view())?;
                    Ok(squared_distance_unchecked(mu.view(), mu_rest.view()).sqrt())
                })
                .collect()
        }
        KernelConfig::Rbf(Bandwidth::Fixed(sigma)) => {
            // Gram-matrix row sums give every leave-one-out statistic in O(K).
            let mut row_sums = vec![T::zero(); k];
            let mut diag = vec![T::zero(); k];
            for i in 0..k {
                for j in 0..k {
                    let v = rbf(squared_distance_unchecked(support.row(i), support.row(j)), sigma);
                    row_sums[i] = row_sums[i] + v;
                    if i == j {
                        diag[i] = v;
                    }
                }
            }
            let total: T = row_sums.iter().copied().sum();
            let kf = T::of_usize(k);
            let km1 = T::of_usize(k - 1);
            let two = T::of(2.0);
            Ok((0..k)
                .map(|i| {
                    let full = total / (kf * kf);
                    let rest = (total - two * row_sums[i] + diag[i]) / (km1 * km1);
                    let cross = (total - row_sums[i]) / (kf * km1);
                    (full + rest - two * cross).max(T::zero()).sqrt()
                })
                .collect())
        }
        KernelConfig::Rbf(Bandwidth::Auto) => unreachable!("resolved above"),
    }
}

/// Per-sample leave-one-out scores and the influence weights derived from them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceScores<T> {
    pub mmd: Vec<T>,
    pub if_weights: Vec<T>,
}

impl<T: Scalar> InfluenceScores<T> {
    /// True when the degenerate fallback produced all-one weights.
    pub fn is_uniform(&self) -> bool {
        self.if_weights.iter().all(|&w| w == T::one())
    }
}

/// Max-normalized influence weights, `1 − mmd_i / max_j mmd_j`.
pub fn influence_weights<T: Scalar>(mmd_scores: &[T]) -> Result<InfluenceScores<T>> {
    influence_weights_with(mmd_scores, Normalization::Max)
}

/// Influence weights under an explicit normalization. Falls back to all-one
/// weights when every score is ~0 or the weights would sum to ~0.
pub fn influence_weights_with<T: Scalar>(mmd_scores: &[T], normalization: Normalization) -> Result<InfluenceScores<T>> {
    if mmd_scores.is_empty() {
        return Err(Error::Empty("score list"));
    }
    ensure_finite(mmd_scores, "score list")?;
    if let Some((index, &value)) = mmd_scores.iter().enumerate().find(|(_, &v)| v < T::zero()) {
        return Err(Error::NegativeScore {
            index,
            value: value.as_f64(),
        });
    }
    let tol = T::of(DEGENERATE_TOLERANCE);
    let max = mmd_scores.iter().copied().fold(T::zero(), T::max);
    let uniform = || vec![T::one(); mmd_scores.len()];
    let if_weights = if max < tol {
        uniform()
    } else {
        let scale = match normalization {
            Normalization::Max => max,
            Normalization::Sum => mmd_scores.iter().copied().sum(),
        };
        let w: Vec<T> = mmd_scores.iter().map(|&m| T::one() - m / scale).collect();
        if w.iter().copied().sum::<T>() < tol {
            uniform()
        } else {
            w
        }
    };
    Ok(InfluenceScores {
        mmd: mmd_scores.to_vec(),
        if_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    fn closed_form_linear(rows: &Array2<f64>) -> Vec<f64> {
        let k = rows.nrows() as f64;
        let mu = rows.mean_axis(Axis(0)).unwrap();
        rows.outer_iter()
            .map(|r| (&r - &mu).mapv(|v| v * v).sum().sqrt() / (k - 1.0))
            .collect()
    }

    #[test]
    fn mmd_examples() {
        let a = array![[1.0, 2.0], [3.0, 4.0]];
        assert_eq!(mmd(a.view(), a.view(), KernelConfig::Linear).unwrap(), 0.0);
        assert_eq!(
            mmd(array![[1.0]].view(), array![[3.0]].view(), KernelConfig::Linear).unwrap(),
            2.0
        );
        // sqrt(2 − 2e^{−1/2}) evaluated at 40 digits
        let v = mmd(
            array![[0.0f64]].view(),
            array![[1.0]].view(),
            KernelConfig::Rbf(Bandwidth::Fixed(1.0)),
        )
        .unwrap();
        assert!((v - 0.887_095_643_419_994).abs() < 1e-14);
    }

    #[test]
    fn mmd_errors() {
        let empty = Array2::<f64>::zeros((0, 2));
        let a = array![[1.0, 2.0]];
        assert!(matches!(
            mmd(empty.view(), a.view(), KernelConfig::Linear),
            Err(Error::Empty(_))
        ));
        let nan = array![[f64::NAN, 0.0]];
        assert!(matches!(
            mmd(nan.view(), a.view(), KernelConfig::Linear),
            Err(Error::NonFinite { .. })
        ));
        let b = array![[1.0]];
        assert!(matches!(
            mmd(a.view(), b.view(), KernelConfig::Linear),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(mmd(a.view(), a.view(), KernelConfig::Rbf(Bandwidth::Fixed(-1.0))).is_err());
    }

    #[test]
    fn loo_examples() {
        let v = leave_one_out_mmd(array![[0.0f64], [0.0], [3.0]].view(), KernelConfig::Linear).unwrap();
        for (got, want) in v.iter().zip([0.5, 0.5, 1.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        let v = leave_one_out_mmd(array![[1.0], [3.0]].view(), KernelConfig::Linear).unwrap();
        assert_eq!(v, vec![1.0, 1.0]);

        let same = array![[2.0f64, -1.0], [2.0, -1.0], [2.0, -1.0], [2.0, -1.0]];
        for kernel in [KernelConfig::Linear, KernelConfig::Rbf(Bandwidth::Auto)] {
            let v = leave_one_out_mmd(same.view(), kernel).unwrap();
            assert!(v.iter().all(|&x| x.abs() < 1e-9), "{kernel:?}: {v:?}");
        }
    }

    #[test]
    fn loo_needs_two_samples() {
        assert!(matches!(
            leave_one_out_mmd(array![[1.0, 2.0]].view(), KernelConfig::<f64>::Linear),
            Err(Error::TooFewSamples(1))
        ));
    }

    #[test]
    fn rbf_loo_matches_set_mmd() {
        let support = array![[0.0f64, 1.0], [2.0, 0.5], [-1.0, 0.0], [0.3, 3.0], [1.0, 1.0]];
        let sigma = median_heuristic(support.view());
        let kernel = KernelConfig::Rbf(Bandwidth::Fixed(sigma));
        let fast = leave_one_out_mmd(support.view(), KernelConfig::Rbf(Bandwidth::Auto)).unwrap();
        for (i, &f) in fast.iter().enumerate() {
            let direct = mmd(support.view(), without_row(support.view(), i).view(), kernel).unwrap();
            assert!((f - direct).abs() < 1e-12, "row {i}: {f} vs {direct}");
        }
    }

    #[test]
    fn median_heuristic_fallback() {
        assert_eq!(median_heuristic(array![[1.0], [1.0]].view()), 1.0);
        assert_eq!(median_heuristic(array![[0.0], [1.0], [3.0]].view()), 2.0);
        assert_eq!(median_heuristic(array![[0.0], [1.0], [3.0], [7.0]].view()), 3.5);
    }

    #[test]
    fn influence_examples() {
        let s = influence_weights(&[0.5, 0.5, 1.0]).unwrap();
        assert_eq!(s.if_weights, vec![0.5, 0.5, 0.0]);
        assert!(!s.is_uniform());
        let s = influence_weights(&[1.0, 1.0]).unwrap();
        assert_eq!(s.if_weights, vec![1.0, 1.0]);
        let s = influence_weights(&[0.0, 0.0, 0.0]).unwrap();
        assert_eq!(s.if_weights, vec![1.0, 1.0, 1.0]);
        assert!(s.is_uniform());
    }

    #[test]
    fn sum_normalization() {
        let s = influence_weights_with(&[0.5, 0.5, 1.0], Normalization::Sum).unwrap();
        assert_eq!(s.if_weights, vec![0.75, 0.75, 0.5]);
    }

    #[test]
    fn influence_errors() {
        assert!(matches!(influence_weights::<f64>(&[]), Err(Error::Empty(_))));
        assert!(matches!(
            influence_weights(&[0.1, -0.2]),
            Err(Error::NegativeScore { index: 1, .. })
        ));
    }

    fn sized_support(d: usize) -> impl Strategy<Value = Array2<f64>> {
        (2usize..10).prop_flat_map(move |k| {
            prop::collection::vec(-10.0..10.0f64, k * d).prop_map(move |v| Array2::from_shape_vec((k, d), v).unwrap())
        })
    }

    fn support_strategy() -> impl Strategy<Value = Array2<f64>> {
        (1usize..6).prop_flat_map(sized_support)
    }

    proptest! {
        #[test]
        fn linear_loo_matches_closed_form(x in support_strategy()) {
            let got = leave_one_out_mmd(x.view(), KernelConfig::Linear).unwrap();
            let want = closed_form_linear(&x);
            for (g, w) in got.iter().zip(&want) {
                prop_assert!((g - w).abs() <= 1e-9 * w.abs().max(1e-12), "{g} vs {w}");
            }
        }

        #[test]
        fn mmd_symmetric_and_zero_on_self(
            (a, b) in (1usize..6).prop_flat_map(|d| (sized_support(d), sized_support(d))),
            auto in any::<bool>(),
        ) {
            let kernels = if auto {
                [KernelConfig::Rbf(Bandwidth::Auto), KernelConfig::Linear]
            } else {
                [KernelConfig::Rbf(Bandwidth::Fixed(1.5)), KernelConfig::Linear]
            };
            for kernel in kernels {
                let ab = mmd(a.view(), b.view(), kernel).unwrap();
                let ba = mmd(b.view(), a.view(), kernel).unwrap();
                prop_assert!((ab - ba).abs() < 1e-12);
                prop_assert!(mmd(a.view(), a.view(), kernel).unwrap() < 1e-9);
            }
        }

        #[test]
        fn weights_scale_invariant(x in support_strategy(), c in 0.01..100.0f64) {
            let base = leave_one_out_mmd(x.view(), KernelConfig::Linear).unwrap();
            let scaled_x = &x * c;
            let scaled = leave_one_out_mmd(scaled_x.view(), KernelConfig::Linear).unwrap();
            for (b, s) in base.iter().zip(&scaled) {
                prop_assert!((b * c - s).abs() <= 1e-9 * s.abs().max(1e-9));
            }
            let wb = influence_weights(&base).unwrap();
            let ws = influence_weights(&scaled).unwrap();
            for (a, b) in wb.if_weights.iter().zip(&ws.if_weights) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn farthest_sample_gets_min_weight(x in support_strategy()) {
            let mu: Array1<f64> = x.mean_axis(Axis(0)).unwrap();
            let far = x.outer_iter()
                .map(|r| (&r - &mu).mapv(|v| v * v).sum())
                .enumerate()
                .fold((0, f64::MIN), |best, (i, d)| if d > best.1 { (i, d) } else { best }).0;
            let w = influence_weights(&leave_one_out_mmd(x.view(), KernelConfig::Linear).unwrap()).unwrap();
            let min = w.if_weights.iter().copied().fold(f64::INFINITY, f64::min);
            prop_assert!((w.if_weights[far] - min).abs() < 1e-12);
        }

        #[test]
        fn weights_bounded_with_positive_sum(scores in prop::collection::vec(0.0..10.0f64, 1..12), sum_norm in any::<bool>()) {
            let norm = if sum_norm { Normalization::Sum } else { Normalization::Max };
            let w = influence_weights_with(&scores, norm).unwrap();
            prop_assert_eq!(w.if_weights.len(), scores.len());
            prop_assert!(w.if_weights.iter().all(|&v| (0.0..=1.0).contains(&v)));
            prop_assert!(w.if_weights.iter().sum::<f64>() > 0.0);
        }
    }
}
