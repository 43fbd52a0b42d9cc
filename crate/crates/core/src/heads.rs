//! Regression heads over a pair of feature vectors `(x_m, x_f)`.
//!
//! | variant  | input to the trunk                   | trunk                                             |
//! |----------|--------------------------------------|---------------------------------------------------|
//! | `xf`     | `x_f`                                | FC-H, ReLU, Dropout, FC-1                         |
//! | `xm`     | `x_m`                                | FC-H, ReLU, Dropout, FC-1                         |
//! | `concat` | `[x_m, x_f]`                         | FC-H, ReLU, Dropout, FC-1                         |
//! | `zscore` | `[x_m, align(x_f → moments of x_m)]` | FC-H, ReLU, Dropout, FC-1                         |
//! | `ln`     | `[B1(x_m), B2(x_f)]`                 | LN, ReLU, Dropout, FC-H, LN, ReLU, Dropout, FC-1  |
//! | `lngn`   | `[B1(x_m), B2(x_f)]`                 | GN, ReLU, Dropout, FC-H, GN, ReLU, Dropout, FC-1  |
//!
//! `B1` and `B2` are independent LN + ReLU + Dropout branches. H defaults to
//! 1000; group norm uses two groups so that, with `C_m == C_f`, each group
//! covers exactly one domain.

use crate::error::{Error, Result};
use crate::layers::{
    zscore_align_batch, Cache, Dropout, Grad, GroupNorm, Layer, LayerNorm, LayerSpec, Linear, Mode,
    DEFAULT_DROPOUT, DEFAULT_EPS, DEFAULT_GROUPS,
};
use crate::numeric::{Matrix, Real, RngStream};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_HIDDEN: usize = 1000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HeadVariant {
    #[serde(rename = "xf")]
    XfOnly,
    #[serde(rename = "xm")]
    XmOnly,
    #[serde(rename = "concat")]
    RawConcat,
    #[serde(rename = "zscore")]
    ZScore,
    #[serde(rename = "ln")]
    LN,
    #[serde(rename = "lngn")]
    LNGN,
}

impl HeadVariant {
    pub const ALL: [HeadVariant; 6] = [
        HeadVariant::XfOnly,
        HeadVariant::XmOnly,
        HeadVariant::RawConcat,
        HeadVariant::ZScore,
        HeadVariant::LNGN,
        HeadVariant::LN,
    ];

    /// Flag name used on the command line and in files.
    pub fn name(self) -> &'static str {
        match self {
            HeadVariant::XfOnly => "xf",
            HeadVariant::XmOnly => "xm",
            HeadVariant::RawConcat => "concat",
            HeadVariant::ZScore => "zscore",
            HeadVariant::LN => "ln",
            HeadVariant::LNGN => "lngn",
        }
    }

    /// Row label in the results table.
    pub fn label(self) -> &'static str {
        match self {
            HeadVariant::XfOnly => "x_f",
            HeadVariant::XmOnly => "x_m",
            HeadVariant::RawConcat => "(x_m, x_f)",
            HeadVariant::ZScore => "(x_m, x̄_f): z-score",
            HeadVariant::LNGN => "(x̄_m, x̄_f): LN+GN",
            HeadVariant::LN => "(x̄_m, x̄_f): LN",
        }
    }
}

impl fmt::Display for HeadVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for HeadVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        HeadVariant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown head variant {s:?} (expected xf|xm|concat|zscore|ln|lngn)")))
    }
}

/// Everything needed to rebuild a head's structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeadConfig {
    pub variant: HeadVariant,
    pub c_m: usize,
    pub c_f: usize,
    #[serde(default = "default_hidden")]
    pub hidden: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_groups")]
    pub groups: usize,
    #[serde(default = "default_dropout")]
    pub dropout: f64,
    /// Permit group norm when the two domains have different widths.
    #[serde(default)]
    pub allow_unaligned_groups: bool,
}

fn default_hidden() -> usize {
    DEFAULT_HIDDEN
}
fn default_eps() -> f64 {
    DEFAULT_EPS
}
fn default_groups() -> usize {
    DEFAULT_GROUPS
}
fn default_dropout() -> f64 {
    DEFAULT_DROPOUT
}

impl HeadConfig {
    pub fn new(variant: HeadVariant, c_m: usize, c_f: usize) -> Self {
        Self {
            variant,
            c_m,
            c_f,
            hidden: DEFAULT_HIDDEN,
            eps: DEFAULT_EPS,
            groups: DEFAULT_GROUPS,
            dropout: DEFAULT_DROPOUT,
            allow_unaligned_groups: false,
        }
    }

    pub fn with_hidden(mut self, hidden: usize) -> Self {
        self.hidden = hidden;
        self
    }

    pub fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self
    }

    pub fn with_dropout(mut self, p: f64) -> Self {
        self.dropout = p;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.c_m == 0 || self.c_f == 0 || self.hidden == 0 {
            return Err(Error::Config(format!(
                "feature widths and hidden size must be positive (c_m={}, c_f={}, hidden={})",
                self.c_m, self.c_f, self.hidden
            )));
        }
        if self.variant == HeadVariant::LNGN {
            let c = self.c_m + self.c_f;
            if c % self.groups != 0 || self.hidden % self.groups != 0 {
                return Err(Error::Config(format!(
                    "group norm with {} groups needs widths divisible by {0} (concat {c}, hidden {})",
                    self.groups, self.hidden
                )));
            }
            if self.c_m != self.c_f && !self.allow_unaligned_groups {
                return Err(Error::Config(format!(
                    "group norm groups do not align with the domains when c_m ({}) != c_f ({})",
                    self.c_m, self.c_f
                )));
            }
        }
        Ok(())
    }
}

/// An ordered list of layers applied in sequence.
#[derive(Clone, Debug)]
pub struct Block<T: Real> {
    pub layers: Vec<Layer<T>>,
}

impl<T: Real> Block<T> {
    fn forward(&self, x: &Matrix<T>, mode: Mode, rng: &mut RngStream) -> Result<(Matrix<T>, Vec<Cache<T>>)> {
        let mut caches = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for layer in &self.layers {
            let (y, c) = layer.forward(&h, mode, rng)?;
            caches.push(c);
            h = y;
        }
        Ok((h, caches))
    }

    /// Backpropagates, appending per-parameter gradients to `grads` in
    /// forward order.
    fn backward(
        &self,
        grad: Matrix<T>,
        caches: &[Cache<T>],
        need_input: bool,
        grads: &mut Vec<Grad<T>>,
    ) -> Result<Matrix<T>> {
        if caches.len() != self.layers.len() {
            return Err(Error::Contract("block cache does not match layer count".into()));
        }
        let mut g = grad;
        let mut collected: Vec<Vec<Grad<T>>> = Vec::with_capacity(self.layers.len());
        for (idx, (layer, cache)) in self.layers.iter().zip(caches).enumerate().rev() {
            let need = idx > 0 || need_input;
            let (gi, pg) = layer.backward_factored(&g, cache, need)?;
            collected.push(pg);
            g = gi;
        }
        for pg in collected.into_iter().rev() {
            grads.extend(pg);
        }
        Ok(g)
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }
}

/// Saved state from [`HeadModel::forward`].
#[derive(Debug)]
pub struct HeadCache<T: Real> {
    batch: usize,
    branch_m: Vec<Cache<T>>,
    branch_f: Vec<Cache<T>>,
    trunk: Vec<Cache<T>>,
}

impl<T: Real> HeadCache<T> {
    /// Distance of the closest ReLU input to the kink.
    pub(crate) fn relu_margin(&self) -> f64 {
        self.branch_m
            .iter()
            .chain(&self.branch_f)
            .chain(&self.trunk)
            .filter_map(Cache::relu_margin)
            .fold(f64::INFINITY, f64::min)
    }
}

#[derive(Clone, Debug)]
pub struct HeadModel<T: Real = f64> {
    config: HeadConfig,
    branch_m: Option<Block<T>>,
    branch_f: Option<Block<T>>,
    trunk: Block<T>,
    mode: Mode,
}

fn norm_block<T: Real>(channels: usize, cfg: &HeadConfig) -> Result<Vec<Layer<T>>> {
    Ok(vec![
        Layer::LayerNorm(LayerNorm::new(channels, cfg.eps)?),
        Layer::Relu,
        Layer::Dropout(Dropout::new(cfg.dropout)?),
    ])
}

impl<T: Real> HeadModel<T> {
    /// Builds a freshly initialized head. FC weights use fan-in scaled
    /// uniform init; normalization scales start at 1 and shifts at 0.
    pub fn build(config: HeadConfig, rng: &mut RngStream) -> Result<Self> {
        config.validate()?;
        let cfg = &config;
        let h = cfg.hidden;
        let drop = || Dropout::new(cfg.dropout).map(Layer::Dropout);
        let (branch_m, branch_f, trunk) = match cfg.variant {
            HeadVariant::XfOnly | HeadVariant::XmOnly | HeadVariant::RawConcat | HeadVariant::ZScore => {
                let input = match cfg.variant {
                    HeadVariant::XfOnly => cfg.c_f,
                    HeadVariant::XmOnly => cfg.c_m,
                    _ => cfg.c_m + cfg.c_f,
                };
                let trunk = vec![
                    Layer::Linear(Linear::init(input, h, rng)),
                    Layer::Relu,
                    drop()?,
                    Layer::Linear(Linear::init(h, 1, rng)),
                ];
                (None, None, trunk)
            }
            HeadVariant::LN | HeadVariant::LNGN => {
                let c = cfg.c_m + cfg.c_f;
                let bm = norm_block(cfg.c_m, cfg)?;
                let bf = norm_block(cfg.c_f, cfg)?;
                let norm = |ch: usize| -> Result<Layer<T>> {
                    Ok(if cfg.variant == HeadVariant::LN {
                        Layer::LayerNorm(LayerNorm::new(ch, cfg.eps)?)
                    } else {
                        Layer::GroupNorm(GroupNorm::new(ch, cfg.groups, cfg.eps)?)
                    })
                };
                let trunk = vec![
                    norm(c)?,
                    Layer::Relu,
                    drop()?,
                    Layer::Linear(Linear::init(c, h, rng)),
                    norm(h)?,
                    Layer::Relu,
                    drop()?,
                    Layer::Linear(Linear::init(h, 1, rng)),
                ];
                (Some(Block { layers: bm }), Some(Block { layers: bf }), trunk)
            }
        };
        Ok(Self {
            config,
            branch_m,
            branch_f,
            trunk: Block { layers: trunk },
            mode: Mode::Train,
        })
    }

    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn variant(&self) -> HeadVariant {
        self.config.variant
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn set_mode(&mut self, mode: Mode) {
        self.mode = mode;
    }

    pub fn branch_m(&self) -> Option<&Block<T>> {
        self.branch_m.as_ref()
    }

    pub fn branch_f(&self) -> Option<&Block<T>> {
        self.branch_f.as_ref()
    }

    pub fn trunk(&self) -> &Block<T> {
        &self.trunk
    }

    pub fn trunk_mut(&mut self) -> &mut Block<T> {
        &mut self.trunk
    }

    /// Layer structure of every block, in evaluation order.
    pub fn structure(&self) -> Vec<(&'static str, Vec<LayerSpec>)> {
        let mut out = Vec::new();
        if let Some(b) = &self.branch_m {
            out.push(("branch_m", b.specs()));
        }
        if let Some(b) = &self.branch_f {
            out.push(("branch_f", b.specs()));
        }
        out.push(("trunk", self.trunk.specs()));
        out
    }

    fn blocks(&self) -> impl Iterator<Item = (&'static str, &Block<T>)> {
        self.branch_m
            .iter()
            .map(|b| ("branch_m", b))
            .chain(self.branch_f.iter().map(|b| ("branch_f", b)))
            .chain(std::iter::once(("trunk", &self.trunk)))
    }

    /// Named parameter tensors in gradient order.
    pub fn params(&self) -> Vec<(String, &[T])> {
        let mut out = Vec::new();
        for (bname, block) in self.blocks() {
            for (li, layer) in block.layers.iter().enumerate() {
                for (pname, p) in layer.params() {
                    out.push((format!("{bname}.{li}.{pname}"), p));
                }
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [T]> {
        let mut out = Vec::new();
        for block in [self.branch_m.as_mut(), self.branch_f.as_mut(), Some(&mut self.trunk)]
            .into_iter()
            .flatten()
        {
            for layer in &mut block.layers {
                out.extend(layer.params_mut());
            }
        }
        out
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|(_, p)| p.len()).sum()
    }

    /// All parameters widened to `f64`, concatenated in gradient order.
    pub fn flat_params(&self) -> Vec<f64> {
        self.params()
            .iter()
            .flat_map(|(_, p)| p.iter().map(|v| v.as_f64()))
            .collect()
    }

    pub fn load_flat_params(&mut self, flat: &[f64]) -> Result<()> {
        let total = self.param_count();
        if flat.len() != total {
            return Err(Error::Contract(format!(
                "parameter snapshot has {} values, model needs {total}",
                flat.len()
            )));
        }
        let mut offset = 0;
        for p in self.params_mut() {
            let len = p.len();
            for (dst, &src) in p.iter_mut().zip(&flat[offset..offset + len]) {
                *dst = T::of(src);
            }
            offset += len;
        }
        Ok(())
    }

    fn check_inputs(&self, x_m: &Matrix<T>, x_f: &Matrix<T>) -> Result<()> {
        if x_m.cols() != self.config.c_m || x_f.cols() != self.config.c_f {
            return Err(Error::Shape(format!(
                "head expects x_m width {} and x_f width {}, got {} and {}",
                self.config.c_m,
                self.config.c_f,
                x_m.shape_str(),
                x_f.shape_str()
            )));
        }
        if x_m.rows() != x_f.rows() {
            return Err(Error::Shape(format!(
                "x_m has {} rows but x_f has {}",
                x_m.rows(),
                x_f.rows()
            )));
        }
        Ok(())
    }

    /// One prediction per row. Dropout masks are drawn from `rng` in block
    /// order (branch_m, branch_f, trunk) when the model is in train mode.
    pub fn forward(&self, x_m: &Matrix<T>, x_f: &Matrix<T>, rng: &mut RngStream) -> Result<(Vec<T>, HeadCache<T>)> {
        self.forward_in(self.mode, x_m, x_f, rng)
    }

    fn forward_in(
        &self,
        mode: Mode,
        x_m: &Matrix<T>,
        x_f: &Matrix<T>,
        rng: &mut RngStream,
    ) -> Result<(Vec<T>, HeadCache<T>)> {
        self.check_inputs(x_m, x_f)?;
        let mut cache = HeadCache {
            batch: x_m.rows(),
            branch_m: vec![],
            branch_f: vec![],
            trunk: vec![],
        };
        let input = match self.config.variant {
            HeadVariant::XfOnly => x_f.clone(),
            HeadVariant::XmOnly => x_m.clone(),
            HeadVariant::RawConcat => x_m.hcat(x_f)?,
            HeadVariant::ZScore => {
                let (aligned, _) = zscore_align_batch(x_m, x_f)?;
                x_m.hcat(&aligned)?
            }
            HeadVariant::LN | HeadVariant::LNGN => {
                let bm = self.branch_m.as_ref().expect("normalized heads have branches");
                let bf = self.branch_f.as_ref().expect("normalized heads have branches");
                let (hm, cm) = bm.forward(x_m, mode, rng)?;
                let (hf, cf) = bf.forward(x_f, mode, rng)?;
                cache.branch_m = cm;
                cache.branch_f = cf;
                hm.hcat(&hf)?
            }
        };
        let (out, ct) = self.trunk.forward(&input, mode, rng)?;
        cache.trunk = ct;
        Ok((out.into_data(), cache))
    }

    /// Evaluation-mode predictions regardless of the stored mode.
    pub fn predict(&self, x_m: &Matrix<T>, x_f: &Matrix<T>) -> Result<Vec<T>> {
        // Eval mode never draws from the stream.
        let mut rng = RngStream::new(0);
        self.forward_in(Mode::Eval, x_m, x_f, &mut rng).map(|(p, _)| p)
    }

    /// Gradients of every parameter, aligned with [`HeadModel::params`].
    pub fn backward(&self, grad_predictions: &[T], cache: &HeadCache<T>) -> Result<Vec<Vec<T>>> {
        Ok(self.backward_factored(grad_predictions, cache)?.into_iter().map(Grad::into_dense).collect())
    }

    pub(crate) fn backward_factored(&self, grad_predictions: &[T], cache: &HeadCache<T>) -> Result<Vec<Grad<T>>> {
        if grad_predictions.len() != cache.batch || cache.trunk.len() != self.trunk.layers.len() {
            return Err(Error::Contract(format!(
                "head backward: {} upstream gradients for a cached batch of {}",
                grad_predictions.len(),
                cache.batch
            )));
        }
        let g = Matrix::new(cache.batch, 1, grad_predictions.to_vec())?;
        let mut trunk_grads = Vec::new();
        let has_branches = self.branch_m.is_some();
        let g_in = self.trunk.backward(g, &cache.trunk, has_branches, &mut trunk_grads)?;
        let mut grads = Vec::new();
        if let (Some(bm), Some(bf)) = (&self.branch_m, &self.branch_f) {
            let (gm, gf) = g_in.hsplit(self.config.c_m)?;
            bm.backward(gm, &cache.branch_m, false, &mut grads)?;
            bf.backward(gf, &cache.branch_f, false, &mut grads)?;
        }
        grads.extend(trunk_grads);
        Ok(grads)
    }
}
