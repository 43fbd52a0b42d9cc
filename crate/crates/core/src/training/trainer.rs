use super::loss::{loss_and_grad, LossKind};
use super::optim::{apply_step, Optimizer, OptimizerState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::heads::{HeadConfig, HeadModel, HeadVariant, DEFAULT_HIDDEN};
use crate::layers::{Mode, DEFAULT_DROPOUT};
use crate::numeric::{moments_range, Matrix, Real, RngStream};
use serde::{Deserialize, Serialize};

const STREAM_INIT: u64 = 1;
const STREAM_SHUFFLE: u64 = 2;
const STREAM_DROPOUT: u64 = 3;

/// Arithmetic width used for a training run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    #[default]
    F64,
    F32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub loss: LossKind,
    pub optimizer: Optimizer,
    pub dropout_p: f64,
    pub seed: u64,
    pub eval_window: usize,
    pub target_standardize: bool,
    pub hidden: usize,
    pub precision: Precision,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 2,
            epochs: 300,
            learning_rate: 1e-4,
            loss: LossKind::L1,
            optimizer: Optimizer::default(),
            dropout_p: DEFAULT_DROPOUT,
            seed: 0,
            eval_window: 50,
            target_standardize: true,
            hidden: DEFAULT_HIDDEN,
            precision: Precision::F64,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 || self.eval_window == 0 {
            return Err(Error::Config(
                "batch_size, epochs and eval_window must be positive".into(),
            ));
        }
        if self.eval_window > self.epochs {
            return Err(Error::Config(format!(
                "eval_window {} exceeds epochs {}",
                self.eval_window, self.epochs
            )));
        }
        if !(self.learning_rate >= 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config(format!("invalid learning rate {}", self.learning_rate)));
        }
        Ok(())
    }

    pub fn head_config(&self, variant: HeadVariant, c_m: usize, c_f: usize) -> HeadConfig {
        HeadConfig::new(variant, c_m, c_f)
            .with_hidden(self.hidden)
            .with_dropout(self.dropout_p)
    }
}

/// Train-set target statistics used to standardize regression targets.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetStats {
    pub mean: f64,
    pub std: f64,
}

impl TargetStats {
    /// Mean and population std; a zero spread falls back to 1.
    pub fn from_targets(targets: &[f64]) -> Self {
        let (mean, var) = moments_range(targets);
        let std = var.sqrt();
        Self {
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        }
    }

    pub fn standardize(&self, kcal: f64) -> f64 {
        (kcal - self.mean) / self.std
    }

    pub fn to_kcal(&self, standardized: f64) -> f64 {
        standardized * self.std + self.mean
    }
}

/// A head plus the target transform it was trained under.
#[derive(Clone, Debug)]
pub struct Regressor<T: Real = f64> {
    pub head: HeadModel<T>,
    pub target_stats: Option<TargetStats>,
}

impl<T: Real> Regressor<T> {
    /// Eval-mode predictions in kCal.
    pub fn predict_kcal(&self, x_m: &Matrix<T>, x_f: &Matrix<T>) -> Result<Vec<f64>> {
        let raw = self.head.predict(x_m, x_f)?;
        Ok(raw
            .into_iter()
            .map(|p| match &self.target_stats {
                Some(s) => s.to_kcal(p.as_f64()),
                None => p.as_f64(),
            })
            .collect())
    }
}

/// Full training state after one epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// 1-based epoch index.
    pub epoch: usize,
    pub head: HeadConfig,
    pub config: TrainConfig,
    pub target_stats: Option<TargetStats>,
    pub params: Vec<f64>,
    pub optimizer_step: u64,
    pub optimizer_m: Vec<f64>,
    pub optimizer_v: Vec<f64>,
}

impl Checkpoint {
    pub fn regressor<T: Real>(&self) -> Result<Regressor<T>> {
        let mut head = HeadModel::<T>::build(self.head.clone(), &mut RngStream::new(0))?;
        head.load_flat_params(&self.params)?;
        head.set_mode(Mode::Eval);
        Ok(Regressor {
            head,
            target_stats: self.target_stats,
        })
    }
}

/// Passed to the epoch callback of [`train_with`].
pub struct EpochReport<'a, T: Real> {
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch (standardized units when
    /// standardization is on).
    pub loss: f64,
    pub model: &'a HeadModel<T>,
    pub optimizer: &'a OptimizerState<T>,
    pub target_stats: Option<TargetStats>,
    pub config: &'a TrainConfig,
}

impl<T: Real> EpochReport<'_, T> {
    pub fn checkpoint(&self) -> Checkpoint {
        let flat = |bufs: &[Vec<T>]| bufs.iter().flatten().map(|v| v.as_f64()).collect();
        Checkpoint {
            epoch: self.epoch,
            head: self.model.config().clone(),
            config: self.config.clone(),
            target_stats: self.target_stats,
            params: self.model.flat_params(),
            optimizer_step: self.optimizer.step,
            optimizer_m: flat(&self.optimizer.m),
            optimizer_v: flat(&self.optimizer.v),
        }
    }

    /// Eval-mode copy of the current model.
    pub fn regressor(&self) -> Regressor<T> {
        let mut head = self.model.clone();
        head.set_mode(Mode::Eval);
        Regressor {
            head,
            target_stats: self.target_stats,
        }
    }
}

/// Freshly initialized head for `config.seed`.
pub fn init_model<T: Real>(variant: HeadVariant, c_m: usize, c_f: usize, config: &TrainConfig) -> Result<HeadModel<T>> {
    let mut rng = RngStream::new(config.seed).substream(STREAM_INIT);
    HeadModel::build(config.head_config(variant, c_m, c_f), &mut rng)
}

/// Trains and returns one checkpoint per epoch.
pub fn train<T: Real>(model: &mut HeadModel<T>, train_set: &Dataset<T>, config: &TrainConfig) -> Result<Vec<Checkpoint>> {
    let mut out = Vec::with_capacity(config.epochs);
    train_with(model, train_set, config, |r| {
        out.push(r.checkpoint());
        Ok(())
    })?;
    Ok(out)
}

/// Trains `model` in place, calling `on_epoch` after every epoch.
///
/// Each epoch shuffles the sample order with a stream keyed by the epoch,
/// then steps through consecutive mini-batches of `batch_size` (the last
/// one may be smaller). Dropout masks come from a separate per-epoch stream.
pub fn train_with<T: Real>(
    model: &mut HeadModel<T>,
    train_set: &Dataset<T>,
    config: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochReport<'_, T>) -> Result<()>,
) -> Result<()> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    let (cm, cf) = train_set.widths();
    if (cm, cf) != (model.config().c_m, model.config().c_f) {
        return Err(Error::Shape(format!(
            "training data widths ({cm}, {cf}) do not match model ({}, {})",
            model.config().c_m,
            model.config().c_f
        )));
    }
    let stats = config
        .target_standardize
        .then(|| TargetStats::from_targets(&train_set.targets));
    let targets: Vec<T> = train_set
        .targets
        .iter()
        .map(|&w| T::of(stats.map_or(w, |s| s.standardize(w))))
        .collect();
    let shapes: Vec<usize> = model.params().iter().map(|(_, p)| p.len()).collect();
    let mut opt_state = OptimizerState::<T>::new(&config.optimizer, &shapes);
    let root = RngStream::new(config.seed);
    let n = train_set.len();
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 1..=config.epochs {
        model.set_mode(Mode::Train);
        order.sort_unstable();
        root.substream(STREAM_SHUFFLE).substream(epoch as u64).shuffle(&mut order);
        let mut drop_rng = root.substream(STREAM_DROPOUT).substream(epoch as u64);
        let mut loss_sum = 0.0;
        for (batch, idx) in order.chunks(config.batch_size).enumerate() {
            let xm = train_set.x_m.select_rows(idx);
            let xf = train_set.x_f.select_rows(idx);
            let tb: Vec<T> = idx.iter().map(|&i| targets[i]).collect();
            let (pred, cache) = model.forward(&xm, &xf, &mut drop_rng)?;
            let (loss, grad) = loss_and_grad(&pred, &tb, config.loss)?;
            let loss = loss.as_f64();
            if !loss.is_finite() {
                return Err(diverged(model, epoch, batch, loss));
            }
            loss_sum += loss * idx.len() as f64;
            let grads = model.backward_factored(&grad, &cache)?;
            apply_step(model.params_mut(), grads, &mut opt_state, &config.optimizer, config.learning_rate)?;
        }
        model.set_mode(Mode::Eval);
        let report = EpochReport {
            epoch,
            loss: loss_sum / n as f64,
            model,
            optimizer: &opt_state,
            target_stats: stats,
            config,
        };
        on_epoch(&report)?;
    }
    Ok(())
}

fn diverged<T: Real>(model: &HeadModel<T>, epoch: usize, batch: usize, loss: f64) -> Error {
    let norms = model
        .params()
        .iter()
        .map(|(_, p)| p.iter().map(|v| v.as_f64() * v.as_f64()).sum::<f64>().sqrt())
        .collect();
    Error::Diverged {
        epoch,
        batch,
        loss,
        norms,
    }
}
