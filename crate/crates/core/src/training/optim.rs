use crate::error::{Error, Result};
use crate::numeric::kernels::{self, AdamCoeffs};
use crate::layers::Grad;
use crate::numeric::Real;
use crate::par;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Optimizer {
    Adam {
        #[serde(default = "beta1")]
        beta1: f64,
        #[serde(default = "beta2")]
        beta2: f64,
        #[serde(default = "adam_eps")]
        eps: f64,
    },
    Sgd,
}

fn beta1() -> f64 {
    0.9
}
fn beta2() -> f64 {
    0.999
}
fn adam_eps() -> f64 {
    1e-8
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam {
            beta1: beta1(),
            beta2: beta2(),
            eps: adam_eps(),
        }
    }
}

/// Per-parameter moment buffers. SGD keeps them empty.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T: Real> {
    pub step: u64,
    pub m: Vec<Vec<T>>,
    pub v: Vec<Vec<T>>,
}

impl<T: Real> OptimizerState<T> {
    pub fn new(optimizer: &Optimizer, shapes: &[usize]) -> Self {
        let bufs = || shapes.iter().map(|&n| vec![T::zero(); n]).collect();
        match optimizer {
            Optimizer::Adam { .. } => Self {
                step: 0,
                m: bufs(),
                v: bufs(),
            },
            Optimizer::Sgd => Self {
                step: 0,
                m: vec![],
                v: vec![],
            },
        }
    }
}

/// Applies one update in place.
///
/// Adam uses bias-corrected moments:
/// `p -= lr · m̂ / (√v̂ + ε)` with `m̂ = m/(1-β₁ᵗ)`, `v̂ = v/(1-β₂ᵗ)`.
pub fn optimizer_step<T: Real>(
    params: Vec<&mut [T]>,
    grads: &[Vec<T>],
    state: &mut OptimizerState<T>,
    optimizer: &Optimizer,
    learning_rate: f64,
) -> Result<()> {
    let grads: Vec<Grad<T>> = grads.iter().cloned().map(Grad::Dense).collect();
    apply_step(params, grads, state, optimizer, learning_rate)
}

/// [`optimizer_step`] on factored gradients. Outer-product gradients are
/// materialized one row at a time right before that row is updated, which
/// gives the same bits as updating from the dense gradient.
pub(crate) fn apply_step<T: Real>(
    params: Vec<&mut [T]>,
    grads: Vec<Grad<T>>,
    state: &mut OptimizerState<T>,
    optimizer: &Optimizer,
    learning_rate: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(&grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::Contract(format!(
            "optimizer step with {} parameter tensors and {} gradients of mismatched shape",
            params.len(),
            grads.len()
        )));
    }
    let lr = T::of(learning_rate);
    match *optimizer {
        Optimizer::Sgd => {
            state.step += 1;
            for (p, g) in params.into_iter().zip(grads) {
                for (pv, gv) in p.iter_mut().zip(g.into_dense()) {
                    *pv -= lr * gv;
                }
            }
        }
        Optimizer::Adam { beta1, beta2, eps } => {
            if state.m.len() != grads.len() || state.m.iter().zip(&grads).any(|(m, g)| m.len() != g.len()) {
                return Err(Error::Contract("Adam state does not match parameter shapes".into()));
            }
            state.step += 1;
            let t = state.step as i32;
            let k = AdamCoeffs {
                lr,
                beta1: T::of(beta1),
                beta2: T::of(beta2),
                one_minus_beta1: T::one() - T::of(beta1),
                one_minus_beta2: T::one() - T::of(beta2),
                c1: T::of(1.0 / (1.0 - beta1.powi(t))),
                c2: T::of(1.0 / (1.0 - beta2.powi(t))),
                eps: T::of(eps),
            };
            for (((p, g), m), v) in params.into_iter().zip(grads).zip(&mut state.m).zip(&mut state.v) {
                match g {
                    Grad::Dense(g) => kernels::adam(p, &g, m, v, &k),
                    Grad::Outer { g, x } => {
                        let cols = x.cols();
                        par::for_each_row3(p, m, v, cols, x.rows() * cols, |o, p, m, v, row| {
                            Grad::outer_row(&g, &x, o, row);
                            kernels::adam(p, row, m, v, &k);
                        });
                    }
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sgd_step() {
        let mut p = vec![1.0];
        let mut st = OptimizerState::new(&Optimizer::Sgd, &[1]);
        optimizer_step(vec![&mut p[..]], &[vec![1.0]], &mut st, &Optimizer::Sgd, 0.1).unwrap();
        assert!((p[0] - 0.9f64).abs() < 1e-15);
    }

    #[test]
    fn sgd_zero_grad_fixed_point() {
        let mut p = vec![1.25, -3.5];
        let mut st = OptimizerState::new(&Optimizer::Sgd, &[2]);
        optimizer_step(vec![&mut p[..]], &[vec![0.0, 0.0]], &mut st, &Optimizer::Sgd, 0.1).unwrap();
        assert_eq!(p, vec![1.25, -3.5]);
    }

    #[test]
    fn adam_first_step_is_learning_rate() {
        let opt = Optimizer::default();
        for g in [0.3, -2.0, 1e3] {
            let mut p = vec![0.0f64];
            let mut st = OptimizerState::new(&opt, &[1]);
            optimizer_step(vec![&mut p[..]], &[vec![g]], &mut st, &opt, 1e-3).unwrap();
            // |g| / (|g| + 1e-8) · lr
            let expected = 1e-3 * g.abs() / (g.abs() + 1e-8);
            assert!((p[0].abs() - expected).abs() < 1e-12);
            assert!((p[0].abs() - 1e-3).abs() < 1e-6);
            assert_eq!(p[0].signum(), -g.signum());
        }
    }

    #[test]
    fn shape_mismatch_is_contract_error() {
        let mut p = vec![1.0, 2.0];
        let opt = Optimizer::default();
        let mut st = OptimizerState::new(&opt, &[2]);
        let r = optimizer_step(vec![&mut p[..]], &[vec![1.0]], &mut st, &opt, 0.1);
        assert!(matches!(r, Err(Error::Contract(_))));
    }

    #[test]
    fn factored_step_matches_dense_step_bitwise() {
        use crate::heads::{HeadConfig, HeadModel, HeadVariant};
        use crate::numeric::{Matrix, RngStream};
        for variant in HeadVariant::ALL {
            let cfg = HeadConfig::new(variant, 5, 5).with_hidden(40);
            let mut a = HeadModel::<f32>::build(cfg.clone(), &mut RngStream::new(2)).unwrap();
            let mut b = a.clone();
            let shapes: Vec<usize> = a.params().iter().map(|p| p.1.len()).collect();
            let opt = Optimizer::default();
            let (mut sa, mut sb) = (OptimizerState::new(&opt, &shapes), OptimizerState::new(&opt, &shapes));
            let mut rng = RngStream::new(3);
            for step in 0..6 {
                let mut draw = |c| Matrix::new(7, c, (0..7 * c).map(|_| rng.normal(0.0, 2.0) as f32).collect()).unwrap();
                let (xm, xf) = (draw(5), draw(5));
                let r: Vec<f32> = (0..7).map(|i| if i == step { 0.0 } else { rng.normal(0.0, 1.0) as f32 }).collect();
                let (_, ca) = a.forward(&xm, &xf, &mut RngStream::new(step as u64)).unwrap();
                let (_, cb) = b.forward(&xm, &xf, &mut RngStream::new(step as u64)).unwrap();
                let dense = a.backward(&r, &ca).unwrap();
                optimizer_step(a.params_mut(), &dense, &mut sa, &opt, 1e-2).unwrap();
                let factored = b.backward_factored(&r, &cb).unwrap();
                apply_step(b.params_mut(), factored, &mut sb, &opt, 1e-2).unwrap();
            }
            let bits = |m: &HeadModel<f32>| m.params().iter().flat_map(|p| p.1.iter().map(|v| v.to_bits())).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b), "{variant:?}");
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn optimizer_json() {
        let o: Optimizer = serde_json::from_str(r#"{"kind":"adam"}"#).unwrap();
        assert_eq!(o, Optimizer::default());
        let s: Optimizer = serde_json::from_str(r#"{"kind":"sgd"}"#).unwrap();
        assert_eq!(s, Optimizer::Sgd);
    }
}
