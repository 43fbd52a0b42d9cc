use super::{Cache, CacheState, Mode};
use crate::error::{Error, Result};
use crate::numeric::{Matrix, Real, RngStream};

pub(super) fn relu_forward<T: Real>(x: &Matrix<T>) -> Result<(Matrix<T>, Cache<T>)> {
    let y = x.map(|v| if v > T::zero() { v } else { T::zero() });
    let cache = Cache {
        kind: "relu",
        out_shape: y.shape(),
        state: CacheState::Input(x.clone()),
    };
    Ok((y, cache))
}

/// Gradient passes where the input was strictly positive; zero at the kink.
pub(super) fn relu_backward<T: Real>(grad_out: &Matrix<T>, cache: &Cache<T>) -> Result<Matrix<T>> {
    cache.check("relu", grad_out)?;
    let CacheState::Input(x) = &cache.state else {
        return Err(Error::Contract("relu cache without input".into()));
    };
    let data = grad_out
        .data()
        .iter()
        .zip(x.data())
        .map(|(&g, &xv)| if xv > T::zero() { g } else { T::zero() })
        .collect();
    Matrix::new(x.rows(), x.cols(), data)
}

/// Inverted dropout: in training each element is zeroed with probability
/// `p` and survivors are scaled by `1/(1-p)`; evaluation is the identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dropout {
    p: f64,
}

impl Dropout {
    pub fn new(p: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Domain(format!("dropout probability must be in [0, 1), got {p}")));
        }
        Ok(Self { p })
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn forward<T: Real>(
        &self,
        x: &Matrix<T>,
        mode: Mode,
        rng: &mut RngStream,
    ) -> Result<(Matrix<T>, Cache<T>)> {
        if mode == Mode::Eval || self.p == 0.0 {
            let cache = Cache {
                kind: "dropout",
                out_shape: x.shape(),
                state: CacheState::Identity,
            };
            return Ok((x.clone(), cache));
        }
        let scale = T::of(1.0 / (1.0 - self.p));
        // indexed select; a branch here mispredicts on half the draws
        let pick = [scale, T::zero()];
        let mask: Vec<T> = (0..x.data().len())
            .map(|_| pick[usize::from(rng.next_f64() < self.p)])
            .collect();
        let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
        let y = Matrix::new(x.rows(), x.cols(), data)?;
        let cache = Cache {
            kind: "dropout",
            out_shape: y.shape(),
            state: CacheState::Mask(mask),
        };
        Ok((y, cache))
    }

    pub fn backward<T: Real>(&self, grad_out: &Matrix<T>, cache: &Cache<T>) -> Result<Matrix<T>> {
        cache.check("dropout", grad_out)?;
        match &cache.state {
            CacheState::Identity => Ok(grad_out.clone()),
            CacheState::Mask(mask) => {
                let data = grad_out.data().iter().zip(mask).map(|(&g, &m)| g * m).collect();
                Matrix::new(grad_out.rows(), grad_out.cols(), data)
            }
            _ => Err(Error::Contract("dropout cache without mask".into())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(v: &[f64]) -> Matrix {
        Matrix::row_vector(v.to_vec())
    }

    #[test]
    fn relu_clamps() {
        assert_eq!(relu_forward(&rv(&[-1.0, 2.0, 0.0])).unwrap().0.data(), &[0.0, 2.0, 0.0]);
        assert_eq!(relu_forward(&rv(&[-1.0, -2.0])).unwrap().0.data(), &[0.0, 0.0]);
        assert_eq!(relu_forward(&rv(&[1.0, 2.0])).unwrap().0.data(), &[1.0, 2.0]);
    }

    #[test]
    fn relu_gradient() {
        let (_, cache) = relu_forward(&rv(&[-1.0, 2.0, 0.0])).unwrap();
        let g = relu_backward(&rv(&[5.0, 5.0, 5.0]), &cache).unwrap();
        assert_eq!(g.data(), &[0.0, 5.0, 0.0]);
    }

    #[test]
    fn dropout_eval_and_zero_p_are_identity() {
        let x = rv(&[1.0, -2.0, 3.5]);
        let mut rng = RngStream::new(0);
        let d = Dropout::new(0.5).unwrap();
        assert_eq!(d.forward(&x, Mode::Eval, &mut rng).unwrap().0, x);
        let d0 = Dropout::new(0.0).unwrap();
        assert_eq!(d0.forward(&x, Mode::Train, &mut rng).unwrap().0, x);
    }

    #[test]
    fn dropout_rejects_p_one() {
        assert!(matches!(Dropout::new(1.0), Err(Error::Domain(_))));
        assert!(Dropout::new(-0.1).is_err());
    }

    #[test]
    fn dropout_mean_preserved() {
        let x = Matrix::row_vector(vec![1.0; 10_000]);
        let d = Dropout::new(0.5).unwrap();
        let (y, _) = d.forward(&x, Mode::Train, &mut RngStream::new(17)).unwrap();
        let mean = y.data().iter().sum::<f64>() / 1e4;
        assert!((mean - 1.0).abs() < 0.02, "{mean}");
        assert!(y.data().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn dropout_backward_reuses_mask() {
        let x = rv(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let d = Dropout::new(0.5).unwrap();
        let (y, cache) = d.forward(&x, Mode::Train, &mut RngStream::new(3)).unwrap();
        let g = d.backward(&rv(&[1.0; 6]), &cache).unwrap();
        for ((&yv, &xv), &gv) in y.data().iter().zip(x.data()).zip(g.data()) {
            assert_eq!(yv, xv * gv);
        }
    }

    #[test]
    fn dropout_unbiased_over_seeds() {
        let x = rv(&[0.5, -1.5, 3.0]);
        let d = Dropout::new(0.5).unwrap();
        let mut acc = [0.0f64; 3];
        let root = RngStream::new(99);
        let trials = 10_000;
        for s in 0..trials {
            let (y, _) = d.forward(&x, Mode::Train, &mut root.substream(s)).unwrap();
            for (a, v) in acc.iter_mut().zip(y.data()) {
                *a += v;
            }
        }
        for (a, &xv) in acc.iter().zip(x.data()) {
            let mean = a / trials as f64;
            assert!((mean - xv).abs() <= 0.02 * xv.abs(), "{mean} vs {xv}");
        }
    }
}
