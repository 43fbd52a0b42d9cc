use super::Real;
use crate::error::{Error, Result};

/// Mean and population variance of `v` over the positions in `index_set`.
///
/// The variance divisor is `m = |index_set|`, not `m - 1`. Normalization
/// layers depend on this.
pub fn moments<T: Real>(v: &[T], index_set: &[usize]) -> Result<(T, T)> {
    if index_set.is_empty() {
        return Err(Error::Domain("moments over an empty index set".into()));
    }
    if let Some(&bad) = index_set.iter().find(|&&i| i >= v.len()) {
        return Err(Error::Domain(format!(
            "index {bad} out of range for vector of length {}",
            v.len()
        )));
    }
    let m = T::of(index_set.len() as f64);
    let mut sum = T::zero();
    for &i in index_set {
        sum += v[i];
    }
    let mean = sum / m;
    let mut ss = T::zero();
    for &i in index_set {
        let d = v[i] - mean;
        ss += d * d;
    }
    Ok((mean, ss / m))
}

/// Moments over a contiguous slice. Same arithmetic as [`moments`] with the
/// index set `0..v.len()`.
#[inline]
pub fn moments_range<T: Real>(v: &[T]) -> (T, T) {
    debug_assert!(!v.is_empty());
    let m = T::of(v.len() as f64);
    let mut sum = T::zero();
    for &x in v {
        sum += x;
    }
    let mean = sum / m;
    let mut ss = T::zero();
    for &x in v {
        let d = x - mean;
        ss += d * d;
    }
    (mean, ss / m)
}
