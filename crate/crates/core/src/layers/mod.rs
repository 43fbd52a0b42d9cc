//! Differentiable building blocks with cached-state backward passes.
//!
//! Every layer maps a `[N × C_in]` batch to `[N × C_out]`. `forward` returns
//! the output together with a [`Cache`] that `backward` must receive
//! unchanged; `backward` returns the input gradient and one gradient vector
//! per learnable parameter, in the order reported by [`Layer::params`].

mod activation;
mod linear;
mod norm;
mod zscore;

pub use activation::Dropout;
pub use linear::Linear;
pub use norm::{GroupNorm, LayerNorm};
pub use zscore::{
    zscore_align, zscore_align_backward, zscore_align_batch, zscore_align_batch_backward,
    zscore_align_forward,
    ZScoreBatchCache, ZScoreCache,
};

use crate::error::{Error, Result};
use crate::numeric::{kernels, Matrix, Real, RngStream};
use crate::par;
use serde::{Deserialize, Serialize};

pub const DEFAULT_EPS: f64 = 1e-5;
pub const DEFAULT_GROUPS: usize = 2;
pub const DEFAULT_DROPOUT: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Train,
    Eval,
}

/// A parameter gradient as produced inside the trainer. Linear weights keep
/// their outer-product factors `gW = gᵀ·x` so an optimizer can materialize
/// one row at a time.
#[derive(Clone, Debug)]
pub(crate) enum Grad<T: Real> {
    Dense(Vec<T>),
    Outer { g: Matrix<T>, x: Matrix<T> },
}

impl<T: Real> Grad<T> {
    pub(crate) fn len(&self) -> usize {
        match self {
            Grad::Dense(v) => v.len(),
            Grad::Outer { g, x } => g.cols() * x.cols(),
        }
    }

    /// Writes row `o` of `gᵀ·x` into `out`, first term written directly.
    pub(crate) fn outer_row(g: &Matrix<T>, x: &Matrix<T>, o: usize, out: &mut [T]) {
        if x.rows() == 0 {
            out.fill(T::zero());
            return;
        }
        out.copy_from_slice(x.row(0));
        kernels::scale(g.get(0, o), out);
        for s in 1..x.rows() {
            let gs = g.get(s, o);
            if gs != T::zero() {
                kernels::axpy(gs, x.row(s), out);
            }
        }
    }

    pub(crate) fn into_dense(self) -> Vec<T> {
        match self {
            Grad::Dense(v) => v,
            Grad::Outer { g, x } => {
                let (rows, cols) = (g.cols(), x.cols());
                par::build_rows(rows, cols, x.rows() * cols, |o, out| {
                    let start = out.len();
                    out.resize(start + cols, T::zero());
                    Self::outer_row(&g, &x, o, &mut out[start..]);
                })
            }
        }
    }
}

/// Structural description of a layer, used for serialization and audits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Linear { inputs: usize, outputs: usize },
    Relu,
    Dropout { p: f64 },
    LayerNorm { channels: usize, eps: f64 },
    GroupNorm { channels: usize, groups: usize, eps: f64 },
}

#[derive(Clone, Debug)]
pub enum Layer<T: Real> {
    Linear(Linear<T>),
    Relu,
    Dropout(Dropout),
    LayerNorm(LayerNorm<T>),
    GroupNorm(GroupNorm<T>),
}

/// Saved forward state for one layer call.
#[derive(Clone, Debug)]
pub struct Cache<T: Real> {
    kind: &'static str,
    out_shape: (usize, usize),
    state: CacheState<T>,
}

#[derive(Clone, Debug)]
enum CacheState<T: Real> {
    Input(Matrix<T>),
    Mask(Vec<T>),
    Identity,
    Normalized { xhat: Matrix<T>, inv_std: Vec<T> },
}

impl<T: Real> Cache<T> {
    /// Smallest `|x|` over a ReLU's inputs; `None` for other layers.
    pub(crate) fn relu_margin(&self) -> Option<f64> {
        match (&self.state, self.kind) {
            (CacheState::Input(x), "relu") => Some(x.data().iter().map(|v| v.abs().as_f64()).fold(f64::INFINITY, f64::min)),
            _ => None,
        }
    }

    fn check(&self, kind: &'static str, grad: &Matrix<T>) -> Result<()> {
        if self.kind != kind {
            return Err(Error::Contract(format!(
                "{kind} backward received a cache from {}",
                self.kind
            )));
        }
        if grad.shape() != self.out_shape {
            return Err(Error::Contract(format!(
                "{kind} backward: upstream gradient {} does not match forward output {}x{}",
                grad.shape_str(),
                self.out_shape.0,
                self.out_shape.1
            )));
        }
        Ok(())
    }
}

impl<T: Real> Layer<T> {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Linear(_) => "linear",
            Layer::Relu => "relu",
            Layer::Dropout(_) => "dropout",
            Layer::LayerNorm(_) => "layer_norm",
            Layer::GroupNorm(_) => "group_norm",
        }
    }

    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Linear(l) => LayerSpec::Linear {
                inputs: l.inputs(),
                outputs: l.outputs(),
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::Dropout(d) => LayerSpec::Dropout { p: d.p() },
            Layer::LayerNorm(n) => LayerSpec::LayerNorm {
                channels: n.channels(),
                eps: n.eps.as_f64(),
            },
            Layer::GroupNorm(n) => LayerSpec::GroupNorm {
                channels: n.channels(),
                groups: n.groups(),
                eps: n.eps.as_f64(),
            },
        }
    }

    pub fn forward(&self, x: &Matrix<T>, mode: Mode, rng: &mut RngStream) -> Result<(Matrix<T>, Cache<T>)> {
        match self {
            Layer::Linear(l) => l.forward(x),
            Layer::Relu => activation::relu_forward(x),
            Layer::Dropout(d) => d.forward(x, mode, rng),
            Layer::LayerNorm(n) => n.forward(x),
            Layer::GroupNorm(n) => n.forward(x),
        }
    }

    /// Returns `(grad_input, param_grads)`. Set `need_input` to false to
    /// skip the input gradient (it is then returned as an empty matrix).
    pub fn backward(
        &self,
        grad_out: &Matrix<T>,
        cache: &Cache<T>,
        need_input: bool,
    ) -> Result<(Matrix<T>, Vec<Vec<T>>)> {
        let (gx, grads) = self.backward_factored(grad_out, cache, need_input)?;
        Ok((gx, grads.into_iter().map(Grad::into_dense).collect()))
    }

    pub(crate) fn backward_factored(
        &self,
        grad_out: &Matrix<T>,
        cache: &Cache<T>,
        need_input: bool,
    ) -> Result<(Matrix<T>, Vec<Grad<T>>)> {
        let dense = |(g, p): (Matrix<T>, Vec<Vec<T>>)| (g, p.into_iter().map(Grad::Dense).collect());
        match self {
            Layer::Linear(l) => l.backward_factored(grad_out, cache, need_input),
            Layer::Relu => activation::relu_backward(grad_out, cache).map(|g| (g, vec![])),
            Layer::Dropout(d) => d.backward(grad_out, cache).map(|g| (g, vec![])),
            Layer::LayerNorm(n) => n.backward(grad_out, cache).map(dense),
            Layer::GroupNorm(n) => n.backward(grad_out, cache).map(dense),
        }
    }

    /// Learnable parameters with their names, in gradient order.
    pub fn params(&self) -> Vec<(&'static str, &[T])> {
        match self {
            Layer::Linear(l) => vec![("weight", l.weight.data()), ("bias", &l.bias)],
            Layer::LayerNorm(n) => vec![("gamma", &n.gamma), ("beta", &n.beta)],
            Layer::GroupNorm(n) => vec![("gamma", &n.gamma), ("beta", &n.beta)],
            Layer::Relu | Layer::Dropout(_) => vec![],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Layer::Linear(l) => vec![l.weight.data_mut(), &mut l.bias],
            Layer::LayerNorm(n) => vec![&mut n.gamma, &mut n.beta],
            Layer::GroupNorm(n) => vec![&mut n.gamma, &mut n.beta],
            Layer::Relu | Layer::Dropout(_) => vec![],
        }
    }
}
