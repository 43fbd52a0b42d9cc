use crate::error::{Error, Result};
use crate::numeric::Real;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    L1,
    L2,
}

/// Mean loss over the batch and its gradient with respect to each
/// prediction. The L1 subgradient is 0 where prediction equals target.
pub fn loss_and_grad<T: Real>(predictions: &[T], targets: &[T], kind: LossKind) -> Result<(T, Vec<T>)> {
    if predictions.len() != targets.len() {
        return Err(Error::Domain(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Domain("loss over an empty batch".into()));
    }
    let n = T::of(predictions.len() as f64);
    let mut total = T::zero();
    let grad = predictions
        .iter()
        .zip(targets)
        .map(|(&p, &t)| {
            let d = p - t;
            match kind {
                LossKind::L1 => {
                    total += d.abs();
                    let s = if d > T::zero() {
                        T::one()
                    } else if d < T::zero() {
                        -T::one()
                    } else {
                        T::zero()
                    };
                    s / n
                }
                LossKind::L2 => {
                    total += d * d;
                    T::of(2.0) * d / n
                }
            }
        })
        .collect();
    Ok((total / n, grad))
}
