//! Synthetic dual-domain benchmark with a controlled domain mismatch.
//!
//! A sample's energy `w` is drawn uniformly from `target_range` and its
//! logarithm mapped linearly onto `t ∈ [-1, 1]`, so a fixed error in `t`
//! is a fixed relative error in kCal. Each `x_m` channel is a population-code
//! response `±tanh(s(t − τ))` standardized to zero mean and unit variance
//! over the target distribution. A fraction of the `x_f` channels
//! use the same kind of response mapped to `[0, 1]`; the rest respond to
//! nuisance latents independent of `w`. `x_f` is then scaled and shifted.

use crate::data::{Dataset, Domain, FeatureVector, Sample};
use crate::error::{Error, Result};
use crate::evaluation::{MetricsReport, Summary, WindowReport};
use crate::heads::HeadVariant;
use crate::numeric::{Real, RngStream};
use crate::par::{self, Exec};
use crate::training::{init_model, train_with, Precision, TrainConfig};
use serde::{Deserialize, Serialize};

/// Number of independent nuisance latents driving the non-signal `x_f` channels.
pub const NUISANCE_LATENTS: usize = 4;
pub const CATEGORIES: [&str; 3] = ["breakfast", "lunch", "dinner"];
/// Seeds of the ordering sweep.
pub const SWEEP_SEEDS: [u64; 5] = [7, 11, 13, 17, 19];

const STREAM_DESIGN: u64 = 1;
const STREAM_TRAIN: u64 = 2;
const STREAM_TEST: u64 = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub c_m: usize,
    pub c_f: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub target_range: [f64; 2],
    pub xm_noise_std: f64,
    pub xf_noise_std: f64,
    pub xf_scale: f64,
    pub xf_offset: f64,
    pub xf_signal_fraction: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            c_m: 64,
            c_f: 64,
            n_train: 864,
            n_test: 96,
            target_range: [19.83, 2204.35],
            xm_noise_std: 0.6,
            xf_noise_std: 0.5,
            xf_scale: 50.0,
            xf_offset: 10.0,
            xf_signal_fraction: 0.25,
            seed: 7,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.c_m < 2 || self.c_f < 2 {
            return bad(format!("widths must be at least 2, got ({}, {})", self.c_m, self.c_f));
        }
        if self.n_train == 0 || self.n_test == 0 {
            return bad("n_train and n_test must be at least 1".into());
        }
        let [lo, hi] = self.target_range;
        if !(lo > 0.0 && hi > lo && hi.is_finite()) {
            return bad(format!("target_range [{lo}, {hi}] must be positive and ordered"));
        }
        for (name, v) in [("xm_noise_std", self.xm_noise_std), ("xf_noise_std", self.xf_noise_std)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and non-negative, got {v}"));
            }
        }
        if !(self.xf_scale > 0.0 && self.xf_scale.is_finite()) || !self.xf_offset.is_finite() {
            return bad("xf_scale must be positive and xf_offset finite".into());
        }
        if !(0.0..=1.0).contains(&self.xf_signal_fraction) {
            return bad(format!("xf_signal_fraction {} outside [0, 1]", self.xf_signal_fraction));
        }
        Ok(())
    }

    pub fn xf_signal_channels(&self) -> usize {
        ((self.xf_signal_fraction * self.c_f as f64).round() as usize).min(self.c_f)
    }
}

/// One `tanh(slope·(u − threshold))` response, optionally mirrored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Response {
    pub threshold: f64,
    pub slope: f64,
    pub flipped: bool,
}

impl Response {
    pub fn raw(&self, u: f64) -> f64 {
        let r = (self.slope * (u - self.threshold)).tanh();
        if self.flipped {
            -r
        } else {
            r
        }
    }

    /// Mean and variance of `raw(u)` for `u ~ U[-1, 1]`.
    pub fn moments(&self) -> (f64, f64) {
        let (s, tau) = (self.slope, self.threshold);
        let (a, b) = (s * (-1.0 - tau), s * (1.0 - tau));
        let mean = (ln_cosh(b) - ln_cosh(a)) / (2.0 * s);
        let second = 1.0 - (b.tanh() - a.tanh()) / (2.0 * s);
        let mean = if self.flipped { -mean } else { mean };
        (mean, (second - mean * mean).max(0.0))
    }
}

fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Source of an `x_f` channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum XfSource {
    Target,
    Nuisance(usize),
}

/// Generator parameters drawn from the seed.
#[derive(Clone, Debug, PartialEq)]
pub struct SynthDesign {
    pub xm: Vec<Response>,
    /// Closed-form (mean, std) used to standardize each `x_m` channel.
    pub xm_moments: Vec<(f64, f64)>,
    pub xf: Vec<(XfSource, Response)>,
}

impl SynthDesign {
    pub fn draw(config: &SynthConfig) -> Result<Self> {
        config.validate()?;
        let mut rng = RngStream::new(config.seed).substream(STREAM_DESIGN);
        let response = |rng: &mut RngStream, lo: f64, hi: f64| Response {
            threshold: rng.uniform(-0.9, 0.9),
            slope: rng.uniform(lo, hi),
            flipped: rng.next_u64() >> 63 == 1,
        };
        let xm: Vec<Response> = (0..config.c_m).map(|_| response(&mut rng, 2.0, 6.0)).collect();
        let xm_moments = xm
            .iter()
            .map(|r| {
                let (m, v) = target_moments(config, |t| r.raw(t));
                (m, v.sqrt())
            })
            .collect();
        let n_sig = config.xf_signal_channels();
        let mut xf: Vec<(XfSource, Response)> = (0..config.c_f)
            .map(|k| {
                let src = if k < n_sig {
                    XfSource::Target
                } else {
                    XfSource::Nuisance((k - n_sig) % NUISANCE_LATENTS)
                };
                (src, response(&mut rng, 1.0, 4.0))
            })
            .collect();
        rng.shuffle(&mut xf);
        Ok(Self { xm, xm_moments, xf })
    }

    /// Noise-free `x_f` channel value in `[0, 1]` before scaling.
    pub fn xf_code(&self, k: usize, t: f64, latents: &[f64; NUISANCE_LATENTS]) -> f64 {
        let (src, r) = &self.xf[k];
        let u = match src {
            XfSource::Target => t,
            XfSource::Nuisance(j) => latents[*j],
        };
        0.5 * (r.raw(u) + 1.0)
    }
}

/// Code coordinate of energy `w`: `ln w` mapped linearly from
/// `[ln lo, ln hi]` onto `[-1, 1]`.
pub fn code_coordinate(config: &SynthConfig, w: f64) -> f64 {
    let [lo, hi] = config.target_range;
    2.0 * (w / lo).ln() / (hi / lo).ln() - 1.0
}

/// Simpson intervals used for the standardization integrals.
const MOMENT_INTERVALS: usize = 4096;

/// Mean and variance of `f(t(w))` for `w ~ U[lo, hi]`, by composite Simpson.
pub fn target_moments(config: &SynthConfig, f: impl Fn(f64) -> f64) -> (f64, f64) {
    let [lo, hi] = config.target_range;
    let n = MOMENT_INTERVALS;
    let h = (hi - lo) / n as f64;
    let (mut m1, mut m2) = (0.0, 0.0);
    for i in 0..=n {
        let wgt = match i {
            0 => 1.0,
            _ if i == n => 1.0,
            _ if i % 2 == 1 => 4.0,
            _ => 2.0,
        };
        let v = f(code_coordinate(config, lo + h * i as f64));
        m1 += wgt * v;
        m2 += wgt * v * v;
    }
    let (m1, m2) = (m1 * h / 3.0 / (hi - lo), m2 * h / 3.0 / (hi - lo));
    (m1, (m2 - m1 * m1).max(0.0))
}

fn sample(config: &SynthConfig, design: &SynthDesign, mut rng: RngStream, id: String, index: usize) -> Sample {
    let [lo, hi] = config.target_range;
    let w = rng.uniform(lo, hi).clamp(lo, hi);
    let t = code_coordinate(config, w).clamp(-1.0, 1.0);
    let mut latents = [0.0; NUISANCE_LATENTS];
    for z in &mut latents {
        *z = rng.uniform(-1.0, 1.0);
    }
    let x_m = design
        .xm
        .iter()
        .zip(&design.xm_moments)
        .map(|(r, &(m, s))| (r.raw(t) - m) / s + config.xm_noise_std * rng.normal(0.0, 1.0))
        .collect();
    let x_f = (0..design.xf.len())
        .map(|k| {
            let u = design.xf_code(k, t, &latents) + config.xf_noise_std * rng.normal(0.0, 1.0);
            config.xf_scale * u + config.xf_offset
        })
        .collect();
    Sample {
        id,
        x_m: FeatureVector { domain: Domain::EnergyDistribution, values: x_m },
        x_f: FeatureVector { domain: Domain::Rgb, values: x_f },
        target: w,
        category: Some(CATEGORIES[index % CATEGORIES.len()].to_string()),
    }
}

fn split(exec: Exec, config: &SynthConfig, design: &SynthDesign, stream: u64, n: usize, prefix: &str) -> Vec<Sample> {
    let root = RngStream::new(config.seed).substream(stream);
    par::map_range(exec, n, |i| {
        sample(config, design, root.substream(i as u64), format!("{prefix}_{i:05}"), i)
    })
}

/// Train and test splits. Each sample has its own substream, so the output
/// does not depend on `exec`.
pub fn generate(config: &SynthConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    generate_with(Exec::default(), config)
}

pub fn generate_with(exec: Exec, config: &SynthConfig) -> Result<(Vec<Sample>, Vec<Sample>)> {
    let design = SynthDesign::draw(config)?;
    Ok((
        split(exec, config, &design, STREAM_TRAIN, config.n_train, "train"),
        split(exec, config, &design, STREAM_TEST, config.n_test, "test"),
    ))
}

/// Trains `variant` and evaluates the test set after each of the last
/// `eval_window` epochs.
pub fn train_and_window<T: Real>(
    variant: HeadVariant,
    train_set: &Dataset<T>,
    test_set: &Dataset<T>,
    config: &TrainConfig,
) -> Result<WindowReport> {
    let wrap = |e: Error| Error::Variant { variant: variant.name().into(), source: Box::new(e) };
    let (cm, cf) = train_set.widths();
    let mut model = init_model::<T>(variant, cm, cf, config).map_err(wrap)?;
    let first = config.epochs - config.eval_window.min(config.epochs) + 1;
    let mut epochs = Vec::new();
    let mut reports: Vec<MetricsReport> = Vec::new();
    train_with(&mut model, train_set, config, |r| {
        if r.epoch >= first {
            epochs.push(r.epoch);
            reports.push(crate::evaluation::evaluate(&r.regressor(), test_set)?);
        }
        Ok(())
    })
    .map_err(wrap)?;
    WindowReport::from_reports(epochs, reports).map_err(wrap)
}

/// Outcome of one ordering assertion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderingReport {
    pub seed: u64,
    pub rows: Vec<Summary>,
    pub checks: Vec<Check>,
}

impl OrderingReport {
    pub fn mape(&self, v: HeadVariant) -> f64 {
        self.rows
            .iter()
            .find(|r| r.variant == v)
            .map(|r| r.mape_pct)
            .expect("every variant is present")
    }

    fn from_rows(seed: u64, rows: Vec<Summary>) -> Self {
        let mut out = Self { seed, rows, checks: Vec::new() };
        use HeadVariant::*;
        let (concat, xm, ln, xf) = (out.mape(RawConcat), out.mape(XmOnly), out.mape(LN), out.mape(XfOnly));
        let others = out
            .rows
            .iter()
            .filter(|r| r.variant != XfOnly)
            .map(|r| r.mape_pct)
            .fold(f64::NEG_INFINITY, f64::max);
        out.checks = vec![
            Check {
                name: "concat_worse_than_xm".into(),
                passed: concat > xm,
                detail: format!("concat {concat:.3} > xm {xm:.3}"),
            },
            Check {
                name: "ln_better_than_concat".into(),
                passed: ln < concat,
                detail: format!("ln {ln:.3} < concat {concat:.3}"),
            },
            Check {
                name: "ln_within_1pt_of_xm".into(),
                passed: ln <= xm + 1.0,
                detail: format!("ln {ln:.3} <= xm {xm:.3} + 1"),
            },
            Check {
                name: "xf_worst".into(),
                passed: xf > others,
                detail: format!("xf {xf:.3} > max(others) {others:.3}"),
            },
        ];
        out
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

/// Trains all six variants on one generated dataset and checks the
/// expected MAPE ordering. Variants run through `exec`.
pub fn ordering_experiment(synth: &SynthConfig, train: &TrainConfig) -> Result<OrderingReport> {
    ordering_experiment_with(Exec::default(), synth, train)
}

pub fn ordering_experiment_with(exec: Exec, synth: &SynthConfig, train: &TrainConfig) -> Result<OrderingReport> {
    train.validate()?;
    let (tr, te) = generate_with(exec, synth)?;
    let rows = match train.precision {
        Precision::F64 => rows::<f64>(exec, &tr, &te, train)?,
        Precision::F32 => rows::<f32>(exec, &tr, &te, train)?,
    };
    Ok(OrderingReport::from_rows(synth.seed, rows))
}

fn rows<T: Real>(exec: Exec, tr: &[Sample], te: &[Sample], train: &TrainConfig) -> Result<Vec<Summary>> {
    let tr = Dataset::<T>::from_samples(tr)?;
    let te = Dataset::<T>::from_samples(te)?;
    par::map(exec, &HeadVariant::ALL, |&v| {
        train_and_window(v, &tr, &te, train).map(|w| w.summary(v))
    })
    .into_iter()
    .collect()
}

/// Per-assertion pass counts across seeds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub runs: Vec<OrderingReport>,
    /// (check name, seeds passed, seeds required).
    pub tally: Vec<(String, usize, usize)>,
}

impl SweepReport {
    pub fn from_runs(runs: Vec<OrderingReport>) -> Self {
        let required = runs.len().saturating_sub(1).max(1).min(runs.len());
        let tally = runs
            .first()
            .map(|r| {
                r.checks
                    .iter()
                    .enumerate()
                    .map(|(i, c)| (c.name.clone(), runs.iter().filter(|r| r.checks[i].passed).count(), required))
                    .collect()
            })
            .unwrap_or_default();
        Self { runs, tally }
    }

    pub fn passed(&self) -> bool {
        !self.runs.is_empty() && self.tally.iter().all(|(_, k, need)| k >= need)
    }
}

/// Runs the ordering experiment once per seed. The seed drives both the
/// generator and the trainer.
pub fn ordering_sweep(exec: Exec, synth: &SynthConfig, train: &TrainConfig, seeds: &[u64]) -> Result<SweepReport> {
    let runs = seeds
        .iter()
        .map(|&s| {
            let synth = SynthConfig { seed: s, ..synth.clone() };
            let train = TrainConfig { seed: s, ..train.clone() };
            ordering_experiment_with(exec, &synth, &train)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SweepReport::from_runs(runs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::moments_range;

    #[test]
    fn default_counts_and_range() {
        let c = SynthConfig::default();
        let (tr, te) = generate(&c).unwrap();
        assert_eq!((tr.len(), te.len()), (864, 96));
        for s in tr.iter().chain(&te) {
            assert!(s.target >= 19.83 && s.target <= 2204.35);
            assert_eq!((s.x_m.values.len(), s.x_f.values.len()), (64, 64));
        }
        assert_eq!(c.xf_signal_channels(), 16);
    }

    #[test]
    fn deterministic_and_exec_independent() {
        let c = SynthConfig { n_train: 40, n_test: 8, ..Default::default() };
        let a = generate_with(Exec::Sequential, &c).unwrap();
        let b = generate(&c).unwrap();
        assert_eq!(a, b);
        let other = generate(&SynthConfig { seed: 8, ..c }).unwrap();
        assert_ne!(a.0[0].x_m, other.0[0].x_m);
    }

    #[test]
    fn train_and_test_differ() {
        let c = SynthConfig { n_train: 10, n_test: 10, ..Default::default() };
        let (tr, te) = generate(&c).unwrap();
        for (a, b) in tr.iter().zip(&te) {
            assert_ne!(a.target, b.target);
        }
    }

    /// Mean and variance by composite Simpson quadrature over U[-1, 1].
    fn quad(f: impl Fn(f64) -> f64) -> (f64, f64) {
        let n = 4000;
        let h = 2.0 / n as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for i in 0..=n {
            let u = -1.0 + h * i as f64;
            let w = if i == 0 || i == n { 1.0 } else if i % 2 == 1 { 4.0 } else { 2.0 };
            let v = f(u);
            m1 += w * v;
            m2 += w * v * v;
        }
        let (m1, m2) = (m1 * h / 6.0, m2 * h / 6.0);
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn closed_form_moments_match_quadrature() {
        for (tau, s, flipped) in [(0.0, 3.0, false), (0.7, 5.5, true), (-0.85, 1.2, false)] {
            let r = Response { threshold: tau, slope: s, flipped };
            let (m, v) = r.moments();
            let (qm, qv) = quad(|u| r.raw(u));
            assert!((m - qm).abs() < 1e-9 && (v - qv).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn channel_moments_match_oracle() {
        let c = SynthConfig {
            n_train: 10_000,
            n_test: 1,
            xm_noise_std: 0.0,
            xf_noise_std: 0.0,
            xf_scale: 1.0,
            xf_offset: 0.0,
            ..Default::default()
        };
        let design = SynthDesign::draw(&c).unwrap();
        let (tr, _) = generate(&c).unwrap();
        let col = |k: usize, xm: bool| -> Vec<f64> {
            tr.iter().map(|s| if xm { s.x_m.values[k] } else { s.x_f.values[k] }).collect()
        };
        // 5-sigma sampling bounds on the sample mean and variance
        let n = tr.len() as f64;
        let bounds = |xs: &[f64], mean: f64, var: f64| -> (f64, f64) {
            let m4 = xs.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
            (5.0 * (var / n).sqrt() + 1e-6, 5.0 * ((m4 - var * var).max(0.0) / n).sqrt() + 1e-6)
        };
        for k in 0..c.c_m {
            let xs = col(k, true);
            let (m, v) = moments_range(&xs);
            let (bm, bv) = bounds(&xs, 0.0, 1.0);
            assert!(m.abs() < bm && (v - 1.0).abs() < bv, "x_m[{k}] mean {m} var {v}");
        }
        for k in 0..c.c_f {
            // oracle: Gauss-Legendre over the source variable's distribution
            let (qm, qv) = match design.xf[k].0 {
                XfSource::Target => gauss_moments(c.target_range, |w| {
                    let t = code_coordinate(&c, w);
                    design.xf_code(k, t, &[t; NUISANCE_LATENTS])
                }),
                XfSource::Nuisance(_) => gauss_moments([-1.0, 1.0], |u| design.xf_code(k, u, &[u; NUISANCE_LATENTS])),
            };
            let xs = col(k, false);
            let (m, v) = moments_range(&xs);
            let (bm, bv) = bounds(&xs, qm, qv);
            assert!((m - qm).abs() < bm && (v - qv).abs() < bv, "x_f[{k}] mean {m} vs {qm} var {v} vs {qv}");
        }
    }

    /// Mean and variance of `f(u)` for `u ~ U[a, b]` with 5-point
    /// Gauss-Legendre on 400 panels.
    fn gauss_moments([a, b]: [f64; 2], f: impl Fn(f64) -> f64) -> (f64, f64) {
        let nodes = [0.0, -0.538_469_310_105_683_1, 0.538_469_310_105_683_1, -0.906_179_845_938_664, 0.906_179_845_938_664];
        let weights = [0.568_888_888_888_888_9, 0.478_628_670_499_366_5, 0.478_628_670_499_366_5, 0.236_926_885_056_189_1, 0.236_926_885_056_189_1];
        let panels = 400;
        let h = (b - a) / panels as f64;
        let (mut m1, mut m2) = (0.0, 0.0);
        for p in 0..panels {
            let mid = a + h * (p as f64 + 0.5);
            for (x, w) in nodes.iter().zip(weights) {
                let v = f(mid + 0.5 * h * x);
                m1 += 0.5 * h * w * v;
                m2 += 0.5 * h * w * v * v;
            }
        }
        let (m1, m2) = (m1 / (b - a), m2 / (b - a));
        (m1, m2 - m1 * m1)
    }

    #[test]
    fn standardization_integrals_match_gauss_legendre() {
        let c = SynthConfig::default();
        let design = SynthDesign::draw(&c).unwrap();
        for (r, &(m, s)) in design.xm.iter().zip(&design.xm_moments).take(8) {
            let (gm, gv) = gauss_moments(c.target_range, |w| r.raw(code_coordinate(&c, w)));
            assert!((m - gm).abs() < 1e-9 && (s * s - gv).abs() < 1e-9, "{r:?}");
        }
    }

    #[test]
    fn xf_mean_scales_linearly() {
        let base = SynthConfig { n_train: 10_000, n_test: 1, xf_offset: 0.0, ..Default::default() };
        let mean_of = |scale: f64| -> Vec<f64> {
            let (tr, _) = generate(&SynthConfig { xf_scale: scale, ..base.clone() }).unwrap();
            (0..base.c_f)
                .map(|k| tr.iter().map(|s| s.x_f.values[k]).sum::<f64>() / tr.len() as f64)
                .collect()
        };
        let (a, b) = (mean_of(5.0), mean_of(50.0));
        for (x, y) in a.iter().zip(&b) {
            assert!((y / x - 10.0).abs() < 0.1, "{x} {y}");
        }
    }

    #[test]
    fn invalid_configs() {
        for c in [
            SynthConfig { c_m: 1, ..Default::default() },
            SynthConfig { n_test: 0, ..Default::default() },
            SynthConfig { target_range: [0.0, 5.0], ..Default::default() },
            SynthConfig { target_range: [5.0, 4.0], ..Default::default() },
            SynthConfig { xf_noise_std: -1.0, ..Default::default() },
        ] {
            assert!(matches!(generate(&c), Err(Error::Config(_))));
        }
    }

    #[test]
    fn small_ordering_report_has_six_rows() {
        let synth = SynthConfig { n_train: 12, n_test: 6, c_m: 4, c_f: 4, ..Default::default() };
        let train = TrainConfig { epochs: 2, eval_window: 2, hidden: 8, ..Default::default() };
        let r = ordering_experiment(&synth, &train).unwrap();
        assert_eq!(r.rows.len(), 6);
        assert_eq!(r.checks.len(), 4);
        let sweep = SweepReport::from_runs(vec![r.clone(), r]);
        assert_eq!(sweep.tally.len(), 4);
        assert!(sweep.tally.iter().all(|t| t.2 == 1));
    }
}
