//! Inner loops shared by the layers and the optimizer.
//!
//! Each public kernel is compiled twice on x86-64: once for the baseline
//! target and once with AVX2 enabled, picked at runtime. The loops only use
//! IEEE add, multiply, divide and square root in a fixed order, so both
//! builds produce identical bits.

use super::Real;

/// Width of the partial-sum block used by [`dot`].
pub const DOT_LANES: usize = 16;

macro_rules! multiversion {
    ($(#[$m:meta])* $vis:vis fn $name:ident<$T:ident: Real>($($arg:ident : $ty:ty),* $(,)?) $(-> $ret:ty)? => $imp:ident) => {
        $(#[$m])*
        $vis fn $name<$T: Real>($($arg: $ty),*) $(-> $ret)? {
            #[cfg(target_arch = "x86_64")]
            {
                #[target_feature(enable = "avx2")]
                unsafe fn avx2<$T: Real>($($arg: $ty),*) $(-> $ret)? {
                    $imp($($arg),*)
                }
                if std::arch::is_x86_feature_detected!("avx2") {
                    // SAFETY: the CPU supports AVX2, checked just above.
                    return unsafe { avx2($($arg),*) };
                }
            }
            $imp($($arg),*)
        }
    };
}

multiversion! {
    /// `Σ x[i]·y[i]` over the common length. Products go into
    /// `DOT_LANES` running sums by index modulo the block width, with the
    /// last block zero-padded; the sums are then folded pairwise (lane `l`
    /// with lane `l + w/2`).
    pub fn dot<T: Real>(x: &[T], y: &[T]) -> T => dot_impl
}

multiversion! {
    /// `out[j] = dot(x, w[j·k .. (j+1)·k])` for every `j`.
    pub fn dot_rows<T: Real>(x: &[T], w: &[T], k: usize, out: &mut [T]) => dot_rows_impl
}

multiversion! {
    /// `y += alpha · x`.
    pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) => axpy_impl
}

multiversion! {
    /// `y *= alpha`.
    pub fn scale<T: Real>(alpha: T, y: &mut [T]) => scale_impl
}

multiversion! {
    /// `out += Σ_k a[k] · b[k·m .. (k+1)·m]`, accumulated in increasing `k`.
    pub fn axpy_rows<T: Real>(a: &[T], b: &[T], out: &mut [T]) => axpy_rows_impl
}

/// Per-step Adam constants. `c1`, `c2` are the inverse bias corrections.
#[derive(Clone, Copy, Debug)]
pub struct AdamCoeffs<T> {
    pub lr: T,
    pub beta1: T,
    pub beta2: T,
    pub one_minus_beta1: T,
    pub one_minus_beta2: T,
    pub c1: T,
    pub c2: T,
    pub eps: T,
}

multiversion! {
    /// One Adam update. Moments that fall below the smallest normal value
    /// are stored as zero; a parameter whose gradient stays at zero would
    /// otherwise decay its moments into subnormals, which are slow on x86.
    pub fn adam<T: Real>(p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], k: &AdamCoeffs<T>) => adam_impl
}

#[inline(always)]
fn block<T: Real>(s: &[T], c: usize) -> &[T; DOT_LANES] {
    s[c..c + DOT_LANES].try_into().expect("full block")
}

#[inline(always)]
fn padded<T: Real>(s: &[T], from: usize) -> [T; DOT_LANES] {
    let mut b = [T::zero(); DOT_LANES];
    b[..s.len() - from].copy_from_slice(&s[from..]);
    b
}

#[inline(always)]
fn lanes_add<T: Real>(acc: &mut [T; DOT_LANES], x: &[T; DOT_LANES], y: &[T; DOT_LANES]) {
    for l in 0..DOT_LANES {
        acc[l] += x[l] * y[l];
    }
}

#[inline(always)]
fn dot_impl<T: Real>(x: &[T], y: &[T]) -> T {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &y[..n]);
    let full = n - n % DOT_LANES;
    let mut acc = [T::zero(); DOT_LANES];
    for c in (0..full).step_by(DOT_LANES) {
        lanes_add(&mut acc, block(x, c), block(y, c));
    }
    // zero-padded final block, so every lane sees the same operation count
    if full < n {
        lanes_add(&mut acc, &padded(x, full), &padded(y, full));
    }
    fold(acc)
}

#[inline(always)]
fn fold<T: Real>(mut acc: [T; DOT_LANES]) -> T {
    let mut w = DOT_LANES;
    while w > 1 {
        w /= 2;
        for l in 0..w {
            acc[l] = acc[l] + acc[l + w];
        }
    }
    acc[0]
}

/// Four rows per pass so their accumulator chains overlap. Each row gets
/// exactly the lane arithmetic of `dot_impl`.
#[inline(always)]
fn dot_rows_impl<T: Real>(x: &[T], w: &[T], k: usize, out: &mut [T]) {
    if k == 0 {
        out.fill(T::zero());
        return;
    }
    let x = &x[..k];
    let full = k - k % DOT_LANES;
    let xt = padded(x, full);
    let mut rows = w.chunks_exact(k);
    let mut quads = out.chunks_exact_mut(4);
    for o in &mut quads {
        let r: [&[T]; 4] = std::array::from_fn(|_| rows.next().expect("row per output"));
        let mut acc = [[T::zero(); DOT_LANES]; 4];
        for c in (0..full).step_by(DOT_LANES) {
            let xs = block(x, c);
            for q in 0..4 {
                lanes_add(&mut acc[q], xs, block(r[q], c));
            }
        }
        if full < k {
            for q in 0..4 {
                lanes_add(&mut acc[q], &xt, &padded(r[q], full));
            }
        }
        for q in 0..4 {
            o[q] = fold(acc[q]);
        }
    }
    for (o, row) in quads.into_remainder().iter_mut().zip(rows) {
        *o = dot_impl(x, row);
    }
}

#[inline(always)]
fn axpy_impl<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    let n = x.len().min(y.len());
    let (x, y) = (&x[..n], &mut y[..n]);
    for i in 0..n {
        y[i] += alpha * x[i];
    }
}

#[inline(always)]
fn scale_impl<T: Real>(alpha: T, y: &mut [T]) {
    for v in y.iter_mut() {
        *v = alpha * *v;
    }
}

#[inline(always)]
fn axpy_rows_impl<T: Real>(a: &[T], b: &[T], out: &mut [T]) {
    let m = out.len();
    for (kk, &ak) in a.iter().enumerate() {
        axpy_impl(ak, &b[kk * m..(kk + 1) * m], out);
    }
}

#[inline(always)]
fn adam_impl<T: Real>(p: &mut [T], g: &[T], m: &mut [T], v: &mut [T], k: &AdamCoeffs<T>) {
    let n = p.len();
    let (g, m, v) = (&g[..n], &mut m[..n], &mut v[..n]);
    let tiny = T::min_positive_value();
    let flush = |x: T| if x.abs() < tiny { T::zero() } else { x };
    for i in 0..n {
        let gv = g[i];
        let mv = flush(k.beta1 * m[i] + k.one_minus_beta1 * gv);
        let vv = flush(k.beta2 * v[i] + k.one_minus_beta2 * gv * gv);
        m[i] = mv;
        v[i] = vv;
        p[i] -= k.lr * (mv * k.c1) / ((vv * k.c2).sqrt() + k.eps);
    }
}
