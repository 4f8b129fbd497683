//! Class prototype formation: uniform mean, influence-weighted mean and
//! inverse-distance re-weighting.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::{Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{ensure_finite, mean_vector, squared_distance_unchecked, weighted_mean};
use crate::mmd::{influence_weights_with, leave_one_out_mmd, KernelConfig, Normalization};
use crate::scalar::Scalar;
use crate::{ClassId, FeatureVector};

pub const DEFAULT_EPSILON: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PrototypeStrategy<T> {
    UniformMean,
    InfluenceWeighted {
        kernel: KernelConfig<T>,
        normalization: Normalization,
    },
    InverseDistance {
        epsilon: T,
    },
}

impl<T: Scalar> PrototypeStrategy<T> {
    /// Linear kernel, max normalization.
    pub fn influence() -> Self {
        PrototypeStrategy::InfluenceWeighted {
            kernel: KernelConfig::Linear,
            normalization: Normalization::Max,
        }
    }

    pub fn inverse_distance() -> Self {
        PrototypeStrategy::InverseDistance {
            epsilon: T::of(DEFAULT_EPSILON),
        }
    }

    /// Short name used in configs and result tables.
    pub fn name(&self) -> &'static str {
        match self {
            PrototypeStrategy::UniformMean => "uniform",
            PrototypeStrategy::InfluenceWeighted { .. } => "influence",
            PrototypeStrategy::InverseDistance { .. } => "inverse_distance",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            PrototypeStrategy::UniformMean => Ok(()),
            PrototypeStrategy::InfluenceWeighted { kernel, .. } => kernel.validate(),
            PrototypeStrategy::InverseDistance { epsilon } => {
                if epsilon.is_finite() && *epsilon > T::zero() {
                    Ok(())
                } else {
                    Err(Error::config("epsilon", format!("must be positive, got {epsilon}")))
                }
            }
        }
    }
}

impl<T: Scalar> fmt::Display for PrototypeStrategy<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Per-sample weights of one class's support rows. They sum to one.
pub fn prototype_weights<T: Scalar>(
    class_support: ArrayView2<'_, T>,
    strategy: &PrototypeStrategy<T>,
) -> Result<Vec<T>> {
    let k = class_support.nrows();
    if k == 0 {
        return Err(Error::Empty("class support"));
    }
    ensure_finite(class_support.iter(), "class support")?;
    strategy.validate()?;
    let uniform = || vec![T::one() / T::of_usize(k); k];
    if k == 1 {
        return Ok(uniform());
    }
    let raw = match strategy {
        PrototypeStrategy::UniformMean => return Ok(uniform()),
        PrototypeStrategy::InfluenceWeighted { kernel, normalization } => {
            let scores = influence_weights_with(&leave_one_out_mmd(class_support, *kernel)?, *normalization)?;
            if scores.is_uniform() {
                return Ok(uniform());
            }
            scores.if_weights
        }
        PrototypeStrategy::InverseDistance { epsilon } => {
            let total = class_support.sum_axis(Axis(0));
            let km1 = T::of_usize(k - 1);
            class_support
                .outer_iter()
                .map(|row| {
                    let rest_mean = (&total - &row) / km1;
                    T::one() / (squared_distance_unchecked(row, rest_mean.view()).sqrt() + *epsilon)
                })
                .collect()
        }
    };
    let sum: T = raw.iter().copied().sum();
    Ok(raw.into_iter().map(|w| w / sum).collect())
}

/// Prototype of a single class and the normalized weights that produced it.
pub fn compute_prototype<T: Scalar>(
    class_support: ArrayView2<'_, T>,
    strategy: &PrototypeStrategy<T>,
) -> Result<(FeatureVector<T>, Vec<T>)> {
    let weights = prototype_weights(class_support, strategy)?;
    let proto = if matches!(strategy, PrototypeStrategy::UniformMean) || class_support.nrows() == 1 {
        mean_vector(class_support)?
    } else {
        weighted_mean(class_support, &weights)
    };
    Ok((proto, weights))
}

/// One prototype per class, classes sorted by id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrototypeSet<T> {
    pub class_ids: Vec<ClassId>,
    /// Row `c` is the prototype of `class_ids[c]`.
    pub vectors: Array2<T>,
    /// Weights of that class's support rows, in support order.
    pub weights_used: Vec<Vec<T>>,
    /// Support row indices belonging to each class, in support order.
    pub members: Vec<Vec<usize>>,
}

impl<T: Scalar> PrototypeSet<T> {
    pub fn len(&self) -> usize {
        self.class_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_ids.is_empty()
    }

    pub fn position(&self, class: ClassId) -> Option<usize> {
        self.class_ids.binary_search(&class).ok()
    }

    /// Euclidean distance from `point` to every prototype.
    pub fn distances(&self, point: ndarray::ArrayView1<'_, T>) -> Vec<T> {
        self.vectors
            .outer_iter()
            .map(|p| squared_distance_unchecked(point, p).sqrt())
            .collect()
    }
}

/// Row indices per class, classes in ascending id order.
pub(crate) fn group_by_class(labels: &[ClassId]) -> BTreeMap<ClassId, Vec<usize>> {
    let mut groups: BTreeMap<ClassId, Vec<usize>> = BTreeMap::new();
    for (i, &c) in labels.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    groups
}

pub fn compute_all_prototypes<T: Scalar>(
    support: ArrayView2<'_, T>,
    labels: &[ClassId],
    strategy: &PrototypeStrategy<T>,
) -> Result<PrototypeSet<T>> {
    if support.nrows() != labels.len() {
        return Err(Error::LabelCountMismatch {
            rows: support.nrows(),
            labels: labels.len(),
        });
    }
    if labels.is_empty() {
        return Err(Error::Empty("support set"));
    }
    let groups = group_by_class(labels);
    let mut vectors = Array2::zeros((groups.len(), support.ncols()));
    let mut class_ids = Vec::with_capacity(groups.len());
    let mut weights_used = Vec::with_capacity(groups.len());
    let mut members = Vec::with_capacity(groups.len());
    for (slot, (class, rows)) in groups.into_iter().enumerate() {
        let class_rows = support.select(Axis(0), &rows);
        let (proto, weights) = compute_prototype(class_rows.view(), strategy)?;
        vectors.row_mut(slot).assign(&proto);
        class_ids.push(class);
        weights_used.push(weights);
        members.push(rows);
    }
    Ok(PrototypeSet {
        class_ids,
        vectors,
        weights_used,
        members,
    })
}
