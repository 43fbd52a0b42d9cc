//! Layer and group normalization over the channel axis of each row.
//!
//! For a set of `m` positions the statistics are
//! `μ = Σx/m`, `σ = √(Σ(x-μ)²/m + ε)`, and the output is `γ·(x-μ)/σ + β`
//! with per-channel `γ`, `β`. Layer norm uses one set per row (all
//! channels); group norm splits each row into `G` contiguous blocks of
//! `C/G` channels. Rows never interact, so both are batch-independent.

use super::{Cache, CacheState};
use crate::error::{Error, Result};
use crate::numeric::{moments_range, Matrix, Real};

#[derive(Clone, Debug, PartialEq)]
pub struct LayerNorm<T: Real> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub eps: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GroupNorm<T: Real> {
    pub gamma: Vec<T>,
    pub beta: Vec<T>,
    pub eps: T,
    groups: usize,
}

impl<T: Real> LayerNorm<T> {
    /// `γ = 1`, `β = 0`.
    pub fn new(channels: usize, eps: f64) -> Result<Self> {
        Self::with_params(vec![T::one(); channels], vec![T::zero(); channels], eps)
    }

    pub fn with_params(gamma: Vec<T>, beta: Vec<T>, eps: f64) -> Result<Self> {
        check_affine(&gamma, &beta, eps)?;
        Ok(Self {
            gamma,
            beta,
            eps: T::of(eps),
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Cache<T>)> {
        normalize_forward(x, &self.gamma, &self.beta, self.eps, 1, "layer_norm")
    }

    pub fn backward(&self, grad_out: &Matrix<T>, cache: &Cache<T>) -> Result<(Matrix<T>, Vec<Vec<T>>)> {
        normalize_backward(grad_out, cache, &self.gamma, 1, "layer_norm")
    }
}

impl<T: Real> GroupNorm<T> {
    pub fn new(channels: usize, groups: usize, eps: f64) -> Result<Self> {
        Self::with_params(vec![T::one(); channels], vec![T::zero(); channels], groups, eps)
    }

    pub fn with_params(gamma: Vec<T>, beta: Vec<T>, groups: usize, eps: f64) -> Result<Self> {
        check_affine(&gamma, &beta, eps)?;
        if groups == 0 || gamma.len() % groups != 0 {
            return Err(Error::Config(format!(
                "{} channels cannot be split into {groups} equal groups",
                gamma.len()
            )));
        }
        Ok(Self {
            gamma,
            beta,
            eps: T::of(eps),
            groups,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Cache<T>)> {
        normalize_forward(x, &self.gamma, &self.beta, self.eps, self.groups, "group_norm")
    }

    pub fn backward(&self, grad_out: &Matrix<T>, cache: &Cache<T>) -> Result<(Matrix<T>, Vec<Vec<T>>)> {
        normalize_backward(grad_out, cache, &self.gamma, self.groups, "group_norm")
    }
}

fn check_affine<T: Real>(gamma: &[T], beta: &[T], eps: f64) -> Result<()> {
    if gamma.is_empty() || gamma.len() != beta.len() {
        return Err(Error::Config(format!(
            "gamma ({}) and beta ({}) must be non-empty and equal length",
            gamma.len(),
            beta.len()
        )));
    }
    if !(eps >= 0.0) {
        return Err(Error::Config(format!("eps must be >= 0, got {eps}")));
    }
    Ok(())
}

fn normalize_forward<T: Real>(
    x: &Matrix<T>,
    gamma: &[T],
    beta: &[T],
    eps: T,
    groups: usize,
    kind: &'static str,
) -> Result<(Matrix<T>, Cache<T>)> {
    let c = gamma.len();
    if x.cols() != c {
        return Err(Error::Shape(format!("{kind} over {c} channels got input {}", x.shape_str())));
    }
    let gs = c / groups;
    let mut xhat = Matrix::zeros(x.rows(), c);
    let mut y = Matrix::zeros(x.rows(), c);
    let mut inv_std = Vec::with_capacity(x.rows() * groups);
    for i in 0..x.rows() {
        let xr = x.row(i);
        let hr = xhat.row_mut(i);
        for g in 0..groups {
            let span = g * gs..(g + 1) * gs;
            let (mean, var) = moments_range(&xr[span.clone()]);
            let denom = (var + eps).sqrt();
            if denom == T::zero() {
                return Err(Error::Degenerate(format!(
                    "{kind}: row {i} group {g} is constant and eps is 0"
                )));
            }
            let inv = T::one() / denom;
            inv_std.push(inv);
            for k in span {
                hr[k] = (xr[k] - mean) * inv;
            }
        }
        let yr = y.row_mut(i);
        for k in 0..c {
            yr[k] = gamma[k] * xhat.get(i, k) + beta[k];
        }
    }
    let cache = Cache {
        kind,
        out_shape: y.shape(),
        state: CacheState::Normalized { xhat, inv_std },
    };
    Ok((y, cache))
}

fn normalize_backward<T: Real>(
    grad_out: &Matrix<T>,
    cache: &Cache<T>,
    gamma: &[T],
    groups: usize,
    kind: &'static str,
) -> Result<(Matrix<T>, Vec<Vec<T>>)> {
    cache.check(kind, grad_out)?;
    let CacheState::Normalized { xhat, inv_std } = &cache.state else {
        return Err(Error::Contract(format!("{kind} cache without statistics")));
    };
    let c = gamma.len();
    let gs = c / groups;
    let m = T::of(gs as f64);
    let mut g_gamma = vec![T::zero(); c];
    let mut g_beta = vec![T::zero(); c];
    let mut gx = Matrix::zeros(grad_out.rows(), c);
    let mut gxhat = vec![T::zero(); c];
    for i in 0..grad_out.rows() {
        let gr = grad_out.row(i);
        let hr = xhat.row(i);
        for k in 0..c {
            g_gamma[k] += gr[k] * hr[k];
            g_beta[k] += gr[k];
            gxhat[k] = gr[k] * gamma[k];
        }
        let out = gx.row_mut(i);
        for g in 0..groups {
            let span = g * gs..(g + 1) * gs;
            let mut sum_g = T::zero();
            let mut sum_gh = T::zero();
            for k in span.clone() {
                sum_g += gxhat[k];
                sum_gh += gxhat[k] * hr[k];
            }
            let mean_g = sum_g / m;
            let mean_gh = sum_gh / m;
            let inv = inv_std[i * groups + g];
            for k in span {
                out[k] = inv * (gxhat[k] - mean_g - hr[k] * mean_gh);
            }
        }
    }
    Ok((gx, vec![g_gamma, g_beta]))
}
