//! Episode objective: mean negative log-likelihood of the query labels under
//! the softmax over negated prototype distances, and its exact gradient.
//!
//! Prototype weights (influence or inverse-distance) are computed from the
//! current embeddings and then held constant: the gradient flows through the
//! weighted sum that forms each prototype but not through the weights.

use ndarray::{Array2, ArrayView2};

use crate::episode::Episode;
use crate::error::{Error, Result};
use crate::math::{log_softmax_neg_distances, softmax_neg_distances};
use crate::prototypes::{compute_all_prototypes, PrototypeSet, PrototypeStrategy};
use crate::scalar::Scalar;
use crate::ClassId;

use super::{Embedder, Network};

#[derive(Debug, Clone)]
pub struct LossAndGrad<T> {
    pub loss: T,
    pub grads: Network<T>,
    /// Weights the prototypes were built with, per class in id order.
    pub weights: Vec<Vec<T>>,
}

fn query_slots<T: Scalar>(protos: &PrototypeSet<T>, labels: &[ClassId]) -> Result<Vec<usize>> {
    labels
        .iter()
        .map(|&c| protos.position(c).ok_or(Error::MissingSupportClass(c)))
        .collect()
}

/// Replaces the prototype vectors with weighted means of `support_emb` under
/// the given per-class weights.
fn rebuild_prototypes<T: Scalar>(
    support_emb: ArrayView2<'_, T>,
    template: &PrototypeSet<T>,
    weights: &[Vec<T>],
) -> Result<Array2<T>> {
    if weights.len() != template.len() {
        return Err(Error::LabelCountMismatch {
            rows: template.len(),
            labels: weights.len(),
        });
    }
    let mut protos = Array2::zeros((template.len(), support_emb.ncols()));
    for (c, (rows, w)) in template.members.iter().zip(weights).enumerate() {
        if rows.len() != w.len() {
            return Err(Error::LabelCountMismatch {
                rows: rows.len(),
                labels: w.len(),
            });
        }
        let mut p = protos.row_mut(c);
        for (&r, &wi) in rows.iter().zip(w) {
            p.scaled_add(wi, &support_emb.row(r));
        }
    }
    Ok(protos)
}

/// Embeddings the objective is evaluated on; see [`Network::forward_unshifted`].
fn objective_embed<T: Scalar>(embedder: &Embedder<T>, batch: ArrayView2<'_, T>) -> Result<Array2<T>> {
    match embedder {
        Embedder::Identity => Ok(batch.to_owned()),
        Embedder::FeedForward(net) => net.forward_unshifted(batch),
    }
}

struct Objective<T> {
    loss: T,
    grad_support: Array2<T>,
    grad_query: Array2<T>,
}

fn objective<T: Scalar>(
    support_emb: ArrayView2<'_, T>,
    query_emb: ArrayView2<'_, T>,
    slots: &[usize],
    template: &PrototypeSet<T>,
    protos: &Array2<T>,
    weights: &[Vec<T>],
    want_grad: bool,
) -> Result<Objective<T>> {
    let nq = query_emb.nrows();
    if nq == 0 {
        return Err(Error::Empty("query set"));
    }
    let inv_nq = T::one() / T::of_usize(nq);
    let mut loss = T::zero();
    let mut grad_query = Array2::zeros(query_emb.raw_dim());
    let mut grad_protos = Array2::<T>::zeros(protos.raw_dim());
    for (q, &y) in slots.iter().enumerate() {
        let e = query_emb.row(q);
        let diffs: Vec<_> = protos.outer_iter().map(|p| &e - &p).collect();
        let dists: Vec<T> = diffs.iter().map(|d| d.dot(d).sqrt()).collect();
        loss = loss - log_softmax_neg_distances(&dists)[y];
        if !want_grad {
            continue;
        }
        let probs = softmax_neg_distances(&dists)?;
        for (c, diff) in diffs.iter().enumerate() {
            let indicator = if c == y { T::one() } else { T::zero() };
            let g = (indicator - probs.probs()[c]) * inv_nq;
            // d‖e − p‖ is undefined at e == p; the subgradient 0 is used there.
            if dists[c] > T::zero() && g != T::zero() {
                let dir = diff / dists[c];
                grad_query.row_mut(q).scaled_add(g, &dir);
                grad_protos.row_mut(c).scaled_add(-g, &dir);
            }
        }
    }
    let mut grad_support = Array2::zeros(support_emb.raw_dim());
    if want_grad {
        for (c, (rows, w)) in template.members.iter().zip(weights).enumerate() {
            for (&r, &wi) in rows.iter().zip(w) {
                grad_support.row_mut(r).scaled_add(wi, &grad_protos.row(c));
            }
        }
    }
    let loss = loss * inv_nq;
    if !loss.is_finite() {
        return Err(Error::NonFinite { what: "episode loss" });
    }
    Ok(Objective {
        loss,
        grad_support,
        grad_query,
    })
}

/// Mean negative log-likelihood of the query labels.
pub fn episode_loss<T: Scalar>(
    embedder: &Embedder<T>,
    episode: &Episode<T>,
    strategy: &PrototypeStrategy<T>,
) -> Result<T> {
    let support = objective_embed(embedder, episode.support.view())?;
    let query = objective_embed(embedder, episode.query.view())?;
    let protos = compute_all_prototypes(support.view(), &episode.support_labels, strategy)?;
    let slots = query_slots(&protos, &episode.query_labels)?;
    Ok(objective(
        support.view(),
        query.view(),
        &slots,
        &protos,
        &protos.vectors,
        &protos.weights_used,
        false,
    )?
    .loss)
}

/// Loss with externally supplied prototype weights (per class in id order),
/// the function whose derivative [`backward`] returns.
pub fn episode_loss_with_weights<T: Scalar>(
    embedder: &Embedder<T>,
    episode: &Episode<T>,
    weights: &[Vec<T>],
) -> Result<T> {
    let support = objective_embed(embedder, episode.support.view())?;
    let query = objective_embed(embedder, episode.query.view())?;
    let template = compute_all_prototypes(support.view(), &episode.support_labels, &PrototypeStrategy::UniformMean)?;
    let protos = rebuild_prototypes(support.view(), &template, weights)?;
    let slots = query_slots(&template, &episode.query_labels)?;
    Ok(objective(support.view(), query.view(), &slots, &template, &protos, weights, false)?.loss)
}

/// Loss and parameter gradients, prototype weights held constant.
pub fn backward<T: Scalar>(
    network: &Network<T>,
    episode: &Episode<T>,
    strategy: &PrototypeStrategy<T>,
) -> Result<LossAndGrad<T>> {
    let ns = episode.support.nrows();
    let batch =
        ndarray::concatenate(ndarray::Axis(0), &[episode.support.view(), episode.query.view()]).map_err(|_| {
            Error::DimensionMismatch {
                left: episode.support.ncols(),
                right: episode.query.ncols(),
            }
        })?;
    let (emb, cache) = network.forward_cached(batch.view())?;
    let support = emb.slice(ndarray::s![..ns, ..]);
    let query = emb.slice(ndarray::s![ns.., ..]);
    let protos = compute_all_prototypes(support, &episode.support_labels, strategy)?;
    let slots = query_slots(&protos, &episode.query_labels)?;
    let obj = objective(
        support,
        query,
        &slots,
        &protos,
        &protos.vectors,
        &protos.weights_used,
        true,
    )?;
    let grad_out = ndarray::concatenate(ndarray::Axis(0), &[obj.grad_support.view(), obj.grad_query.view()])
        .expect("matching embedding widths");
    Ok(LossAndGrad {
        loss: obj.loss,
        grads: network.backprop(&cache, grad_out),
        weights: protos.weights_used,
    })
}
