//! Central finite-difference checks of every analytic backward pass.
//!
//! Each check contracts the layer output with a fixed random weighting
//! `r` into a scalar `L = Σ r ⊙ f(x)`, then compares the analytic gradient
//! of `L` against `(L(θ+h) - L(θ-h)) / 2h` for every input and parameter
//! entry. Dropout is evaluated with a frozen mask by replaying the same
//! stream for every forward call.
//!
//! Whole-head checks evaluate `L` in double-double arithmetic at the `f64`
//! step points. In plain `f64` the difference quotient carries about
//! `1e-11` of round-off, which exceeds the tolerance on entries near `1e-6`.

use crate::error::{Error, Result};
use crate::heads::{HeadConfig, HeadModel, HeadVariant};
use crate::layers::{
    zscore_align_batch, zscore_align_batch_backward, zscore_align_backward, zscore_align_forward, Dropout,
    GroupNorm, Layer, LayerNorm, Linear, Mode,
};
use crate::numeric::{rng_draw, Dd, Distribution, Matrix, Real, RngStream};

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-5;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Worst relative error found for one component.
#[derive(Clone, Debug, PartialEq)]
pub struct GradReport {
    pub name: String,
    pub max_rel_error: f64,
    pub checked: usize,
}

impl GradReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < TOLERANCE
    }
}

/// `(f(x+h) - f(x-h)) / (x+h - (x-h))`, dividing by the step actually
/// taken after rounding `x ± h` to `f64`.
fn central_difference<R: Real>(values: &mut [f64], idx: usize, mut f: impl FnMut(&[f64]) -> Result<R>) -> Result<f64> {
    let orig = values[idx];
    let (hi, lo) = (orig + STEP, orig - STEP);
    values[idx] = hi;
    let plus = f(values)?;
    values[idx] = lo;
    let minus = f(values)?;
    values[idx] = orig;
    Ok(((plus - minus) / (R::of(hi) - R::of(lo))).as_f64())
}

fn weighted<R: Real>(r: &[R], y: &[R]) -> R {
    r.iter().zip(y).fold(R::zero(), |acc, (&a, &b)| acc + a * b)
}

fn normal(rng: &mut RngStream, rows: usize, cols: usize) -> Matrix {
    rng_draw(rng, rows, cols, Distribution::Normal { mean: 0.0, std: 1.0 }).expect("valid distribution")
}

/// Checks one layer's input and parameter gradients at `x`.
pub fn check_layer(name: &str, layer: &Layer<f64>, x: &Matrix, seed: u64) -> Result<GradReport> {
    let mode = Mode::Train;
    let mask_stream = RngStream::new(seed).substream(1);
    let (y, cache) = layer.forward(x, mode, &mut mask_stream.clone())?;
    let r = normal(&mut RngStream::new(seed).substream(2), y.rows(), y.cols());
    let (gx, pgrads) = layer.backward(&r, &cache, true)?;

    let mut worst = 0.0f64;
    let mut checked = 0;
    let mut xv = x.data().to_vec();
    for i in 0..xv.len() {
        let num = central_difference(&mut xv, i, |v| {
            let xm = Matrix::new(x.rows(), x.cols(), v.to_vec())?;
            let (y, _) = layer.forward(&xm, mode, &mut mask_stream.clone())?;
            Ok(weighted(r.data(), y.data()))
        })?;
        worst = worst.max(relative_error(gx.data()[i], num));
        checked += 1;
    }
    for (p_idx, grad) in pgrads.iter().enumerate() {
        let mut probe = layer.clone();
        let mut values = probe.params_mut()[p_idx].to_vec();
        for i in 0..values.len() {
            let num = central_difference(&mut values, i, |v| {
                probe.params_mut()[p_idx].copy_from_slice(v);
                let (y, _) = probe.forward(x, mode, &mut mask_stream.clone())?;
                Ok(weighted(r.data(), y.data()))
            })?;
            worst = worst.max(relative_error(grad[i], num));
            checked += 1;
        }
    }
    Ok(GradReport {
        name: name.to_string(),
        max_rel_error: worst,
        checked,
    })
}

/// Checks the single-vector z-score alignment against `x`, target mean and
/// target std, and the batch form against both domain inputs.
pub fn check_zscore(c_m: usize, c_f: usize, n: usize, seed: u64) -> Result<Vec<GradReport>> {
    let root = RngStream::new(seed);
    let mut worst = 0.0f64;
    let mut checked = 0;

    let x = normal(&mut root.substream(10), 1, c_f).into_data();
    let (tm, ts) = (0.7, 1.9);
    let r = normal(&mut root.substream(11), 1, c_f).into_data();
    let (_, cache) = zscore_align_forward(&x, tm, ts)?;
    let (gx, gm, gs) = zscore_align_backward(&r, &cache)?;
    let eval = |x: &[f64], tm: f64, ts: f64| -> Result<f64> {
        let (y, _) = zscore_align_forward(x, tm, ts)?;
        Ok(weighted(&r, &y))
    };
    let mut xv = x.clone();
    for i in 0..xv.len() {
        let num = central_difference(&mut xv, i, |v| eval(v, tm, ts))?;
        worst = worst.max(relative_error(gx[i], num));
        checked += 1;
    }
    let mut targets = vec![tm, ts];
    let num_m = central_difference(&mut targets, 0, |t| eval(&x, t[0], t[1]))?;
    let num_s = central_difference(&mut targets, 1, |t| eval(&x, t[0], t[1]))?;
    worst = worst.max(relative_error(gm, num_m)).max(relative_error(gs, num_s));
    checked += 2;
    let single = GradReport {
        name: "zscore_align".into(),
        max_rel_error: worst,
        checked,
    };

    let xm = normal(&mut root.substream(12), n, c_m);
    let xf = normal(&mut root.substream(13), n, c_f);
    let rb = normal(&mut root.substream(14), n, c_f);
    let (_, bcache) = zscore_align_batch(&xm, &xf)?;
    let (g_ref, g_x) = zscore_align_batch_backward(&rb, &bcache)?;
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (src, analytic, is_ref) in [(&xm, &g_ref, true), (&xf, &g_x, false)] {
        let mut v = src.data().to_vec();
        for i in 0..v.len() {
            let num = central_difference(&mut v, i, |vals| {
                let m = Matrix::new(src.rows(), src.cols(), vals.to_vec())?;
                let (y, _) = if is_ref { zscore_align_batch(&m, &xf)? } else { zscore_align_batch(&xm, &m)? };
                Ok(weighted(rb.data(), y.data()))
            })?;
            worst = worst.max(relative_error(analytic.data()[i], num));
            checked += 1;
        }
    }
    Ok(vec![
        single,
        GradReport {
            name: "zscore_align_batch".into(),
            max_rel_error: worst,
            checked,
        },
    ])
}

/// Result of a whole-head check, with the largest absolute discrepancy
/// alongside the relative one.
#[derive(Clone, Debug, PartialEq)]
pub struct HeadGradReport {
    pub report: GradReport,
    pub max_abs_error: f64,
}

/// Minimum distance of every ReLU input from the kink at a head check point.
/// Closer points are re-drawn: a central difference straddling the kink is
/// not a derivative, and gradients proportional to a near-zero activation
/// fall under the finite-difference round-off floor.
pub const KINK_MARGIN: f64 = 1e-3;

/// Check points tried before giving up on finding one clear of the kinks.
const MAX_DRAWS: u64 = 64;

/// Whole-head check of every parameter gradient in train mode with frozen
/// dropout masks of probability `dropout`.
pub fn check_head(
    variant: HeadVariant,
    c_m: usize,
    c_f: usize,
    hidden: usize,
    n: usize,
    dropout: f64,
    seed: u64,
) -> Result<HeadGradReport> {
    let cfg = HeadConfig::new(variant, c_m, c_f).with_hidden(hidden).with_dropout(dropout);
    let mut draw = 0;
    let (model, xm, xf, mask_stream, r, grads) = loop {
        let root = match draw {
            0 => RngStream::new(seed),
            k => RngStream::new(seed).substream(1000 + k),
        };
        let mut model = HeadModel::<f64>::build(cfg.clone(), &mut root.substream(20))?;
        perturb_affine(&mut model, &mut root.substream(21));
        model.set_mode(Mode::Train);
        let xm = normal(&mut root.substream(22), n, c_m);
        let xf = normal(&mut root.substream(23), n, c_f).map(|v| 3.0 * v + 2.0);
        let mask_stream = root.substream(24);
        let r = normal(&mut root.substream(25), 1, n).into_data();
        let (_, cache) = model.forward(&xm, &xf, &mut mask_stream.clone())?;
        if cache.relu_margin() >= KINK_MARGIN {
            let grads = model.backward(&r, &cache)?;
            break (model, xm, xf, mask_stream, r, grads);
        }
        draw += 1;
        if draw == MAX_DRAWS {
            return Err(Error::Degenerate(format!(
                "no check point with every ReLU input at least {KINK_MARGIN} from zero in {MAX_DRAWS} draws"
            )));
        }
    };
    let mut flat = model.flat_params();
    let analytic: Vec<f64> = grads.into_iter().flatten().collect();
    let mut probe = HeadModel::<Dd>::build(cfg, &mut RngStream::new(0))?;
    probe.set_mode(Mode::Train);
    let (xm, xf) = (xm.cast::<Dd>(), xf.cast::<Dd>());
    let r: Vec<Dd> = r.iter().map(|&v| Dd::of(v)).collect();
    let mut worst = 0.0f64;
    let mut max_abs = 0.0f64;
    for i in 0..flat.len() {
        let num = central_difference(&mut flat, i, |v| {
            probe.load_flat_params(v)?;
            let (p, _) = probe.forward(&xm, &xf, &mut mask_stream.clone())?;
            Ok(weighted(&r, &p))
        })?;
        worst = worst.max(relative_error(analytic[i], num));
        max_abs = max_abs.max((analytic[i] - num).abs());
    }
    let name = if dropout > 0.0 {
        format!("head:{}", variant.name())
    } else {
        format!("head:{}:no-dropout", variant.name())
    };
    Ok(HeadGradReport {
        report: GradReport {
            name,
            max_rel_error: worst,
            checked: flat.len(),
        },
        max_abs_error: max_abs,
    })
}

/// Moves normalization scales and shifts off their `1`/`0` init so their
/// gradients are exercised in general position.
fn perturb_affine(model: &mut HeadModel<f64>, rng: &mut RngStream) {
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    for (name, p) in names.iter().zip(model.params_mut()) {
        if name.ends_with("gamma") {
            p.iter_mut().for_each(|v| *v = rng.uniform(0.5, 1.5));
        } else if name.ends_with("beta") || name.ends_with("bias") {
            p.iter_mut().for_each(|v| *v = rng.uniform(-0.5, 0.5));
        }
    }
}

/// Hidden width used for whole-head checks.
pub const HEAD_CHECK_HIDDEN: usize = 16;

/// Every layer kind, then every requested head variant at `N = 2`, once
/// with the default dropout (masks frozen) and once with dropout off so
/// that every path carries gradient.
pub fn run_suite(variants: &[HeadVariant], c_m: usize, c_f: usize, seed: u64) -> Result<Vec<GradReport>> {
    let root = RngStream::new(seed);
    let n = 2;
    let c = 8;
    let mut reports = Vec::new();
    let x = normal(&mut root.substream(1), n, c);

    let mut lin_rng = root.substream(2);
    let mut linear = Linear::init(c, 5, &mut lin_rng);
    linear.bias.iter_mut().for_each(|b| *b = lin_rng.uniform(-1.0, 1.0));
    reports.push(check_layer("linear", &Layer::Linear(linear), &x, seed)?);
    reports.push(check_layer("relu", &Layer::Relu, &x, seed)?);
    reports.push(check_layer("dropout", &Layer::Dropout(Dropout::new(0.5)?), &x, seed)?);

    let mut aff = root.substream(3);
    let gamma: Vec<f64> = (0..c).map(|_| aff.uniform(0.5, 1.5)).collect();
    let beta: Vec<f64> = (0..c).map(|_| aff.uniform(-0.5, 0.5)).collect();
    let ln = LayerNorm::with_params(gamma.clone(), beta.clone(), 1e-5)?;
    reports.push(check_layer("layer_norm", &Layer::LayerNorm(ln), &x, seed)?);
    let gn = GroupNorm::with_params(gamma, beta, 2, 1e-5)?;
    reports.push(check_layer("group_norm", &Layer::GroupNorm(gn), &x, seed)?);
    reports.extend(check_zscore(c_m, c_f, n, seed)?);

    for &v in variants {
        for p in [crate::layers::DEFAULT_DROPOUT, 0.0] {
            reports.push(check_head(v, c_m, c_f, HEAD_CHECK_HIDDEN, n, p, seed)?.report);
        }
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert_eq!(relative_error(1.0, 1.0), 0.0);
        assert!((relative_error(2.0, 1.0) - 0.5).abs() < 1e-15);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }

    #[test]
    fn layer_norm_on_eight_channels() {
        let x = normal(&mut RngStream::new(4), 3, 8);
        let ln = LayerNorm::new(8, 1e-5).unwrap();
        let r = check_layer("ln", &Layer::LayerNorm(ln), &x, 4).unwrap();
        assert!(r.passed(), "{r:?}");
    }

    #[test]
    fn detects_a_wrong_gradient() {
        // A head whose final bias gradient is corrupted must fail.
        let x = normal(&mut RngStream::new(4), 2, 3);
        let lin = Linear::init(3, 2, &mut RngStream::new(5));
        let layer = Layer::Linear(lin);
        let (y, cache) = layer.forward(&x, Mode::Eval, &mut RngStream::new(0)).unwrap();
        let (_, mut pg) = layer.backward(&y, &cache, true).unwrap();
        pg[1][0] += 1.0;
        let num = {
            let mut lin2 = layer.clone();
            let mut b = lin2.params_mut()[1].to_vec();
            central_difference(&mut b, 0, |v| {
                lin2.params_mut()[1].copy_from_slice(v);
                let (y2, _) = lin2.forward(&x, Mode::Eval, &mut RngStream::new(0))?;
                Ok(weighted(y.data(), y2.data()))
            })
            .unwrap()
        };
        assert!(relative_error(pg[1][0], num) > TOLERANCE);
    }
}

