//! Non-learnable z-score alignment of one feature vector onto target
//! statistics: `x̄ = σ_t · (x - μ_x)/σ_x + μ_t`, where `μ_x`, `σ_x` are the
//! mean and population standard deviation of `x` over its own channels.
//!
//! In a head the targets are the per-sample moments of the other domain's
//! vector, so the batch form below also carries gradients into that vector.

use crate::error::{Error, Result};
use crate::numeric::{moments_range, Matrix, Real};

#[derive(Clone, Debug)]
pub struct ZScoreCache<T: Real> {
    xhat: Vec<T>,
    inv_std: T,
    target_std: T,
}

/// Aligns `x` to `(target_mean, target_std)`.
pub fn zscore_align<T: Real>(x: &[T], target_mean: T, target_std: T) -> Result<Vec<T>> {
    zscore_align_forward(x, target_mean, target_std).map(|(y, _)| y)
}

/// [`zscore_align`] that also returns the state needed for the backward pass.
pub fn zscore_align_forward<T: Real>(
    x: &[T],
    target_mean: T,
    target_std: T,
) -> Result<(Vec<T>, ZScoreCache<T>)> {
    if x.is_empty() {
        return Err(Error::Domain("cannot align an empty vector".into()));
    }
    if !(target_std >= T::zero()) {
        return Err(Error::Domain(format!("target std must be >= 0, got {target_std}")));
    }
    let (mean, var) = moments_range(x);
    let std = var.sqrt();
    if !(std > T::zero()) {
        return Err(Error::Degenerate(
            "constant feature vector has zero standard deviation and cannot be aligned".into(),
        ));
    }
    let inv_std = T::one() / std;
    let xhat: Vec<T> = x.iter().map(|&v| (v - mean) * inv_std).collect();
    let y = xhat.iter().map(|&h| target_std * h + target_mean).collect();
    Ok((
        y,
        ZScoreCache {
            xhat,
            inv_std,
            target_std,
        },
    ))
}

/// Returns `(grad_x, grad_target_mean, grad_target_std)`.
pub fn zscore_align_backward<T: Real>(grad_out: &[T], cache: &ZScoreCache<T>) -> Result<(Vec<T>, T, T)> {
    if grad_out.len() != cache.xhat.len() {
        return Err(Error::Contract(format!(
            "z-score backward: gradient of length {} for a vector of length {}",
            grad_out.len(),
            cache.xhat.len()
        )));
    }
    let m = T::of(grad_out.len() as f64);
    let mut sum_g = T::zero();
    let mut sum_gh = T::zero();
    for (&g, &h) in grad_out.iter().zip(&cache.xhat) {
        sum_g += g;
        sum_gh += g * h;
    }
    let (mean_g, mean_gh) = (sum_g / m, sum_gh / m);
    let scale = cache.target_std * cache.inv_std;
    let gx = grad_out
        .iter()
        .zip(&cache.xhat)
        .map(|(&g, &h)| scale * (g - mean_g - h * mean_gh))
        .collect();
    Ok((gx, sum_g, sum_gh))
}

#[derive(Clone, Debug)]
pub struct ZScoreBatchCache<T: Real> {
    rows: Vec<ZScoreCache<T>>,
    ref_centered: Matrix<T>,
    ref_std: Vec<T>,
}

/// Aligns each row of `x` onto the mean and population std of the matching
/// row of `reference`.
pub fn zscore_align_batch<T: Real>(
    reference: &Matrix<T>,
    x: &Matrix<T>,
) -> Result<(Matrix<T>, ZScoreBatchCache<T>)> {
    if reference.rows() != x.rows() {
        return Err(Error::Shape(format!(
            "z-score alignment of {} onto {}",
            x.shape_str(),
            reference.shape_str()
        )));
    }
    let mut out = Matrix::zeros(x.rows(), x.cols());
    let mut rows = Vec::with_capacity(x.rows());
    let mut ref_centered = Matrix::zeros(reference.rows(), reference.cols());
    let mut ref_std = Vec::with_capacity(x.rows());
    for i in 0..x.rows() {
        let (rm, rv) = moments_range(reference.row(i));
        let rs = rv.sqrt();
        let (y, cache) = zscore_align_forward(x.row(i), rm, rs)
            .map_err(|e| match e {
                Error::Degenerate(msg) => Error::Degenerate(format!("sample {i}: {msg}")),
                other => other,
            })?;
        out.row_mut(i).copy_from_slice(&y);
        for (c, &v) in ref_centered.row_mut(i).iter_mut().zip(reference.row(i)) {
            *c = v - rm;
        }
        rows.push(cache);
        ref_std.push(rs);
    }
    Ok((
        out,
        ZScoreBatchCache {
            rows,
            ref_centered,
            ref_std,
        },
    ))
}

/// Returns `(grad_reference, grad_x)`.
pub fn zscore_align_batch_backward<T: Real>(
    grad_out: &Matrix<T>,
    cache: &ZScoreBatchCache<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if grad_out.rows() != cache.rows.len() {
        return Err(Error::Contract("z-score batch backward: row count mismatch".into()));
    }
    let cm = cache.ref_centered.cols();
    let m = T::of(cm as f64);
    let mut g_ref = Matrix::zeros(grad_out.rows(), cm);
    let mut g_x = Matrix::zeros(grad_out.rows(), grad_out.cols());
    for i in 0..grad_out.rows() {
        let (gx, g_mean, g_std) = zscore_align_backward(grad_out.row(i), &cache.rows[i])?;
        g_x.row_mut(i).copy_from_slice(&gx);
        let rs = cache.ref_std[i];
        // d std / d r_k = (r_k - mean) / (m·std); zero when the reference row is constant.
        let std_coef = if rs > T::zero() { g_std / (m * rs) } else { T::zero() };
        for (g, &c) in g_ref.row_mut(i).iter_mut().zip(cache.ref_centered.row(i)) {
            *g = g_mean / m + std_coef * c;
        }
    }
    Ok((g_ref, g_x))
}
