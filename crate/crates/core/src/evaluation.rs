//! Regression metrics, last-K window averaging and per-sample error export.

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::heads::HeadVariant;
use crate::numeric::Real;
use crate::par::{self, Exec};
use crate::training::{Checkpoint, Regressor};
use serde::{Deserialize, Serialize};
use std::io::Write;
use std::path::Path;

fn check_pair(preds: &[f64], gts: &[f64]) -> Result<()> {
    if preds.len() != gts.len() {
        return Err(Error::Domain(format!(
            "{} predictions for {} groundtruth values",
            preds.len(),
            gts.len()
        )));
    }
    if preds.is_empty() {
        return Err(Error::Domain("metric over zero samples".into()));
    }
    Ok(())
}

/// Mean absolute error, in target units.
pub fn mae(preds: &[f64], gts: &[f64]) -> Result<f64> {
    check_pair(preds, gts)?;
    let sum: f64 = preds.iter().zip(gts).map(|(p, g)| (p - g).abs()).sum();
    Ok(sum / preds.len() as f64)
}

/// Mean absolute percentage error, in percent. Every groundtruth value must
/// be strictly positive.
pub fn mape(preds: &[f64], gts: &[f64]) -> Result<f64> {
    check_pair(preds, gts)?;
    if let Some((i, g)) = gts.iter().enumerate().find(|(_, &g)| !(g > 0.0)) {
        return Err(Error::Domain(format!("groundtruth {g} at index {i} is not positive")));
    }
    let sum: f64 = preds.iter().zip(gts).map(|(p, g)| (p - g).abs() / g).sum();
    Ok(100.0 * sum / preds.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleError {
    pub id: String,
    pub prediction: f64,
    pub groundtruth: f64,
    pub abs_error: f64,
    /// Signed, in percent: `100 · (prediction - groundtruth) / groundtruth`.
    pub pct_error: f64,
    pub category: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub mae: f64,
    pub mape: f64,
    pub n: usize,
    pub per_sample: Vec<SampleError>,
}

impl MetricsReport {
    pub fn from_predictions(
        ids: &[String],
        preds: &[f64],
        gts: &[f64],
        categories: &[Option<String>],
    ) -> Result<Self> {
        let mae_v = mae(preds, gts)?;
        let mape_v = mape(preds, gts)?;
        let per_sample = (0..preds.len())
            .map(|i| SampleError {
                id: ids[i].clone(),
                prediction: preds[i],
                groundtruth: gts[i],
                abs_error: (preds[i] - gts[i]).abs(),
                pct_error: 100.0 * (preds[i] - gts[i]) / gts[i],
                category: categories.get(i).cloned().flatten(),
            })
            .collect();
        Ok(Self {
            mae: mae_v,
            mape: mape_v,
            n: preds.len(),
            per_sample,
        })
    }

    /// Recomputes `(mae, mape)` from the per-sample rows.
    pub fn recompute(&self) -> (f64, f64) {
        let n = self.per_sample.len() as f64;
        let mae = self.per_sample.iter().map(|s| s.abs_error).sum::<f64>() / n;
        let mape = self.per_sample.iter().map(|s| s.pct_error.abs()).sum::<f64>() / n;
        (mae, mape)
    }
}

/// Eval-mode metrics of one model on a dataset.
pub fn evaluate<T: Real>(model: &Regressor<T>, data: &Dataset<T>) -> Result<MetricsReport> {
    if data.is_empty() {
        return Err(Error::Domain("cannot evaluate on an empty dataset".into()));
    }
    let preds = model.predict_kcal(&data.x_m, &data.x_f)?;
    MetricsReport::from_predictions(&data.ids, &preds, &data.targets, &data.categories)
}

/// Metrics averaged over the checkpoints of a training window.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowReport {
    pub mae: f64,
    pub mape: f64,
    pub n: usize,
    pub window: usize,
    pub epochs: Vec<usize>,
    pub per_checkpoint: Vec<MetricsReport>,
}

impl WindowReport {
    /// Arithmetic mean of the per-checkpoint MAE and MAPE values.
    pub fn from_reports(epochs: Vec<usize>, reports: Vec<MetricsReport>) -> Result<Self> {
        let first = reports
            .first()
            .ok_or_else(|| Error::Domain("window evaluation needs at least one checkpoint".into()))?;
        let k = reports.len() as f64;
        Ok(Self {
            mae: reports.iter().map(|r| r.mae).sum::<f64>() / k,
            mape: reports.iter().map(|r| r.mape).sum::<f64>() / k,
            n: first.n,
            window: reports.len(),
            epochs,
            per_checkpoint: reports,
        })
    }

    /// Report of the last checkpoint in the window, for per-sample export.
    pub fn last(&self) -> &MetricsReport {
        self.per_checkpoint.last().expect("window is never empty")
    }

    pub fn summary(&self, variant: HeadVariant) -> Summary {
        Summary {
            variant,
            mae_kcal: self.mae,
            mape_pct: self.mape,
            n: self.n,
            window: self.window,
        }
    }
}

/// Evaluates each checkpoint and averages the metrics.
pub fn evaluate_window<T: Real>(checkpoints: &[Checkpoint], data: &Dataset<T>) -> Result<WindowReport> {
    evaluate_window_with(Exec::default(), checkpoints, data)
}

pub fn evaluate_window_with<T: Real>(
    exec: Exec,
    checkpoints: &[Checkpoint],
    data: &Dataset<T>,
) -> Result<WindowReport> {
    if checkpoints.is_empty() {
        return Err(Error::Domain("window evaluation needs at least one checkpoint".into()));
    }
    let reports = par::map(exec, checkpoints, |c| evaluate(&c.regressor::<T>()?, data))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    WindowReport::from_reports(checkpoints.iter().map(|c| c.epoch).collect(), reports)
}

/// Machine-readable run summary.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub variant: HeadVariant,
    pub mae_kcal: f64,
    pub mape_pct: f64,
    pub n: usize,
    pub window: usize,
}

pub const ERROR_CSV_HEADER: &str = "id,prediction,groundtruth,abs_error,pct_error,category";

/// Writes `id,prediction,groundtruth,abs_error,pct_error,category` rows
/// (LF line endings, blank category when absent). Floats use the shortest
/// representation that parses back to the same value.
pub fn export_errors(report: &MetricsReport, path: &Path) -> Result<()> {
    if report.per_sample.is_empty() {
        return Err(Error::Domain("nothing to export".into()));
    }
    let mut buf = Vec::new();
    writeln!(buf, "{ERROR_CSV_HEADER}").expect("write to Vec");
    for s in &report.per_sample {
        writeln!(
            buf,
            "{},{},{},{},{},{}",
            s.id,
            s.prediction,
            s.groundtruth,
            s.abs_error,
            s.pct_error,
            s.category.as_deref().unwrap_or("")
        )
        .expect("write to Vec");
    }
    crate::dataio::write_atomic(path, &buf)
}

/// Parses a file written by [`export_errors`].
pub fn read_errors(path: &Path) -> Result<Vec<SampleError>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h == ERROR_CSV_HEADER => {}
        _ => {
            return Err(Error::Parse {
                path: path.into(),
                line: 1,
                msg: "missing error-table header".into(),
            })
        }
    }
    lines
        .map(|(i, line)| {
            let bad = |msg: &str| Error::Parse {
                path: path.into(),
                line: i + 1,
                msg: msg.into(),
            };
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad("expected 6 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
            Ok(SampleError {
                id: f[0].to_string(),
                prediction: num(f[1])?,
                groundtruth: num(f[2])?,
                abs_error: num(f[3])?,
                pct_error: num(f[4])?,
                category: (!f[5].is_empty()).then(|| f[5].to_string()),
            })
        })
        .collect()
}

/// Published reference figures (MAE kCal, MAPE %) for report annotation.
pub mod baseline {
    use crate::heads::HeadVariant;

    pub const TABLE: [(HeadVariant, f64, f64); 6] = [
        (HeadVariant::XfOnly, 292.35, 151.33),
        (HeadVariant::XmOnly, 77.76, 17.63),
        (HeadVariant::RawConcat, 110.84, 99.36),
        (HeadVariant::ZScore, 75.15, 22.24),
        (HeadVariant::LNGN, 57.75, 16.90),
        (HeadVariant::LN, 56.22, 11.47),
    ];

    pub const HUMAN_MAE: f64 = 286.37;
    pub const HUMAN_MAPE: f64 = 39.03;

    pub fn reference(variant: HeadVariant) -> (f64, f64) {
        TABLE
            .iter()
            .find(|(v, _, _)| *v == variant)
            .map(|&(_, a, b)| (a, b))
            .expect("every variant has a reference row")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mae_examples() {
        assert_eq!(mae(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(mae(&[100.0, 200.0], &[110.0, 190.0]).unwrap(), 10.0);
        assert_eq!(mae(&[7.5], &[2.0]).unwrap(), 5.5);
    }

    #[test]
    fn mape_examples() {
        assert_eq!(mape(&[5.0], &[5.0]).unwrap(), 0.0);
        let m = mape(&[100.0, 200.0], &[110.0, 190.0]).unwrap();
        assert!((m - 7.177).abs() < 1e-3, "{m}");
        let scaled = mape(&[200.0, 400.0], &[220.0, 380.0]).unwrap();
        assert_eq!(scaled, m);
    }

    #[test]
    fn metric_errors() {
        assert!(mae(&[], &[]).is_err());
        assert!(mae(&[1.0], &[1.0, 2.0]).is_err());
        assert!(matches!(mape(&[1.0], &[0.0]), Err(Error::Domain(_))));
        assert!(mape(&[1.0], &[-3.0]).is_err());
    }

    #[test]
    fn report_is_self_consistent() {
        let ids: Vec<String> = (0..3).map(|i| i.to_string()).collect();
        let r = MetricsReport::from_predictions(&ids, &[90.0, 260.0, 33.0], &[100.0, 250.0, 30.0], &[None, None, None])
            .unwrap();
        let (a, b) = r.recompute();
        assert!((a - r.mae).abs() < 1e-12);
        assert!((b - r.mape).abs() < 1e-12);
        assert_eq!(r.per_sample[0].pct_error, -10.0);
    }

    #[test]
    fn window_mean() {
        let mk = |m: f64| MetricsReport { mae: m, mape: m / 10.0, n: 1, per_sample: vec![] };
        let w = WindowReport::from_reports(vec![1, 2], vec![mk(10.0), mk(20.0)]).unwrap();
        assert_eq!(w.mae, 15.0);
        assert_eq!(w.window, 2);
        assert!(WindowReport::from_reports(vec![], vec![]).is_err());
    }

    #[test]
    fn baseline_constants() {
        assert_eq!(baseline::reference(HeadVariant::LN), (56.22, 11.47));
        assert_eq!(baseline::reference(HeadVariant::XfOnly), (292.35, 151.33));
        assert_eq!(baseline::reference(HeadVariant::RawConcat), (110.84, 99.36));
        assert_eq!(baseline::reference(HeadVariant::ZScore), (75.15, 22.24));
        assert_eq!(baseline::reference(HeadVariant::LNGN), (57.75, 16.90));
        assert_eq!(baseline::reference(HeadVariant::XmOnly), (77.76, 17.63));
        assert_eq!((baseline::HUMAN_MAE, baseline::HUMAN_MAPE), (286.37, 39.03));
    }

    #[test]
    fn summary_json_keys() {
        let s = Summary { variant: HeadVariant::LN, mae_kcal: 1.0, mape_pct: 2.0, n: 3, window: 4 };
        let v: serde_json::Value = serde_json::to_value(&s).unwrap();
        assert_eq!(v["variant"], "ln");
        for k in ["mae_kcal", "mape_pct", "n", "window"] {
            assert!(v.get(k).is_some());
        }
    }
}
