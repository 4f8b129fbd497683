//! The embedding function applied to raw features before prototypes are
//! formed: either the identity, or a fully connected ReLU network trained
//! episodically with hand-written backpropagation.

mod checkpoint;
mod loss;
mod optim;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use loss::{backward, episode_loss, episode_loss_with_weights, LossAndGrad};
pub use optim::{sgd_step, OptimizerConfig, OptimizerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EmbedderKind {
    Identity,
    FeedForward,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EmbedderSpec {
    pub kind: EmbedderKind,
    /// `[input, hidden.., output]`; unused for `Identity`.
    pub layer_dims: Vec<usize>,
}

impl EmbedderSpec {
    pub fn identity() -> Self {
        EmbedderSpec {
            kind: EmbedderKind::Identity,
            layer_dims: Vec::new(),
        }
    }

    pub fn feed_forward(layer_dims: Vec<usize>) -> Self {
        EmbedderSpec {
            kind: EmbedderKind::FeedForward,
            layer_dims,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kind == EmbedderKind::FeedForward {
            if self.layer_dims.len() < 2 {
                return Err(Error::config(
                    "layer_dims",
                    "feed-forward embedder needs at least input and output sizes",
                ));
            }
            if self.layer_dims.contains(&0) {
                return Err(Error::config("layer_dims", "layer sizes must be positive"));
            }
        }
        Ok(())
    }

    /// Fresh parameters: weights uniform in ±sqrt(6 / (fan_in + fan_out)), zero biases.
    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Embedder<T>> {
        self.validate()?;
        Ok(match self.kind {
            EmbedderKind::Identity => Embedder::Identity,
            EmbedderKind::FeedForward => {
                let layers = self
                    .layer_dims
                    .windows(2)
                    .map(|w| {
                        let (fan_in, fan_out) = (w[0], w[1]);
                        let s = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        let weight =
                            Array2::from_shape_simple_fn((fan_out, fan_in), || T::of(rng.random_range(-s..=s)));
                        Layer {
                            weight,
                            bias: Array1::zeros(fan_out),
                        }
                    })
                    .collect();
                Embedder::FeedForward(Network { layers })
            }
        })
    }
}

/// Affine map `x ↦ W x + b`, `W` stored as `(out, in)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<T> {
    pub weight: Array2<T>,
    pub bias: Array1<T>,
}

/// Fully connected network with ReLU after every layer but the last.
///
/// The same type holds gradients and optimizer velocities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
}

/// Activations kept from a forward pass for backpropagation.
pub(crate) struct ForwardCache<T> {
    /// Input to each layer; `inputs[0]` is the raw batch.
    inputs: Vec<Array2<T>>,
    /// Pre-activation output of each layer.
    pre: Vec<Array2<T>>,
}

impl<T: Scalar> Network<T> {
    pub fn new(layers: Vec<Layer<T>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Empty("layer list"));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weight.nrows() {
                return Err(Error::ShapeMismatch { layer: i });
            }
            if i > 0 && layers[i - 1].weight.nrows() != l.weight.ncols() {
                return Err(Error::ShapeMismatch { layer: i });
            }
        }
        Ok(Network { layers })
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.nrows()
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.nrows()))
            .collect()
    }

    pub fn zeros_like(&self) -> Self {
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: Array2::zeros(l.weight.raw_dim()),
                    bias: Array1::zeros(l.bias.len()),
                })
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(Error::ShapeMismatch {
                layer: self.layers.len().min(other.layers.len()),
            });
        }
        for (i, (a, b)) in self.layers.iter().zip(&other.layers).enumerate() {
            if a.weight.dim() != b.weight.dim() || a.bias.len() != b.bias.len() {
                return Err(Error::ShapeMismatch { layer: i });
            }
        }
        Ok(())
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// All parameters, layer by layer, weights (row-major) before biases.
    pub fn flatten(&self) -> Vec<T> {
        self.layers
            .iter()
            .flat_map(|l| l.weight.iter().chain(l.bias.iter()).copied())
            .collect()
    }

    /// Inverse of [`Network::flatten`].
    pub fn set_flat(&mut self, values: &[T]) {
        assert_eq!(values.len(), self.parameter_count());
        let mut it = values.iter();
        for l in &mut self.layers {
            for v in l.weight.iter_mut().chain(l.bias.iter_mut()) {
                *v = *it.next().expect("length checked");
            }
        }
    }

    fn check_input(&self, batch: ArrayView2<'_, T>) -> Result<()> {
        if batch.ncols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                left: batch.ncols(),
                right: self.input_dim(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, batch: ArrayView2<'_, T>) -> Result<Array2<T>> {
        self.check_input(batch)?;
        let last = self.layers.len() - 1;
        let mut x = batch.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            x = x.dot(&l.weight.t()) + &l.bias;
            if i < last {
                x.mapv_inplace(|v| v.max(T::zero()));
            }
        }
        Ok(x)
    }

    /// Output without the final bias. That bias moves every embedding by the
    /// same vector, so it drops out of all distances and of every prototype
    /// strategy; the training objective is evaluated on this form, where the
    /// cancellation is exact rather than up to rounding.
    pub(crate) fn forward_unshifted(&self, batch: ArrayView2<'_, T>) -> Result<Array2<T>> {
        Ok(self.forward_cached(batch)?.0)
    }

    /// Same output as [`Network::forward_unshifted`], plus what backprop needs.
    pub(crate) fn forward_cached(&self, batch: ArrayView2<'_, T>) -> Result<(Array2<T>, ForwardCache<T>)> {
        self.check_input(batch)?;
        let last = self.layers.len() - 1;
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut x = batch.to_owned();
        for (i, l) in self.layers.iter().enumerate() {
            let z = if i < last {
                x.dot(&l.weight.t()) + &l.bias
            } else {
                x.dot(&l.weight.t())
            };
            inputs.push(x);
            x = if i < last {
                z.mapv(|v| v.max(T::zero()))
            } else {
                z.clone()
            };
            pre.push(z);
        }
        Ok((x, ForwardCache { inputs, pre }))
    }

    /// Parameter gradients given the gradient of a scalar with respect to
    /// the network output.
    pub(crate) fn backprop(&self, cache: &ForwardCache<T>, grad_out: Array2<T>) -> Network<T> {
        let last = self.layers.len() - 1;
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut g = grad_out;
        for i in (0..self.layers.len()).rev() {
            if i < last {
                // ReLU passes gradient only where the pre-activation was positive.
                ndarray::Zip::from(&mut g).and(&cache.pre[i]).for_each(|gv, &z| {
                    if z <= T::zero() {
                        *gv = T::zero();
                    }
                });
            }
            let weight = g.t().dot(&cache.inputs[i]);
            let bias = if i < last {
                g.sum_axis(ndarray::Axis(0))
            } else {
                Array1::zeros(g.ncols())
            };
            if i > 0 {
                g = g.dot(&self.layers[i].weight);
            }
            grads.push(Layer { weight, bias });
        }
        grads.reverse();
        Network { layers: grads }
    }
}

/// An embedding function with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Embedder<T> {
    Identity,
    FeedForward(Network<T>),
}

impl<T: Scalar> Embedder<T> {
    pub fn spec(&self) -> EmbedderSpec {
        match self {
            Embedder::Identity => EmbedderSpec::identity(),
            Embedder::FeedForward(net) => EmbedderSpec::feed_forward(net.layer_dims()),
        }
    }

    /// Row-wise embedding of a batch of raw features.
    pub fn embed(&self, batch: ArrayView2<'_, T>) -> Result<Array2<T>> {
        match self {
            Embedder::Identity => Ok(batch.to_owned()),
            Embedder::FeedForward(net) => net.forward(batch),
        }
    }

    /// `None` when any input dimension is accepted.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Embedder::Identity => None,
            Embedder::FeedForward(net) => Some(net.input_dim()),
        }
    }

    pub fn network(&self) -> Option<&Network<T>> {
        match self {
            Embedder::Identity => None,
            Embedder::FeedForward(net) => Some(net),
        }
    }
}
