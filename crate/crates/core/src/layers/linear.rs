use super::{Cache, CacheState, Grad};
use crate::error::{Error, Result};
use crate::numeric::{matmul, matmul_bt, Matrix, Real, RngStream};

/// Fully-connected layer `y = x·Wᵀ + b`, weights stored `[out × in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Linear<T: Real> {
    pub weight: Matrix<T>,
    pub bias: Vec<T>,
}

impl<T: Real> Linear<T> {
    pub fn new(weight: Matrix<T>, bias: Vec<T>) -> Result<Self> {
        if weight.rows() != bias.len() {
            return Err(Error::Shape(format!(
                "bias of length {} for weight {}",
                bias.len(),
                weight.shape_str()
            )));
        }
        if !weight.is_finite() || bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::Domain("linear parameters must be finite".into()));
        }
        Ok(Self { weight, bias })
    }

    /// He-style uniform init `U(-√(6/in), √(6/in))`, zero bias.
    pub fn init(inputs: usize, outputs: usize, rng: &mut RngStream) -> Self {
        let bound = (6.0 / inputs as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| T::of(rng.uniform(-bound, bound)))
            .collect();
        Self {
            weight: Matrix::new(outputs, inputs, data).expect("sized by construction"),
            bias: vec![T::zero(); outputs],
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Cache<T>)> {
        if x.cols() != self.inputs() {
            return Err(Error::Shape(format!(
                "linear layer expects {} inputs, got {}",
                self.inputs(),
                x.shape_str()
            )));
        }
        let mut y = matmul_bt(x, &self.weight)?;
        for i in 0..y.rows() {
            for (v, &b) in y.row_mut(i).iter_mut().zip(&self.bias) {
                *v += b;
            }
        }
        let cache = Cache {
            kind: "linear",
            out_shape: y.shape(),
            state: CacheState::Input(x.clone()),
        };
        Ok((y, cache))
    }

    pub fn backward(
        &self,
        grad_out: &Matrix<T>,
        cache: &Cache<T>,
        need_input: bool,
    ) -> Result<(Matrix<T>, Vec<Vec<T>>)> {
        let (gx, grads) = self.backward_factored(grad_out, cache, need_input)?;
        Ok((gx, grads.into_iter().map(Grad::into_dense).collect()))
    }

    /// Like [`Linear::backward`] with the weight gradient left as its factors.
    pub(crate) fn backward_factored(
        &self,
        grad_out: &Matrix<T>,
        cache: &Cache<T>,
        need_input: bool,
    ) -> Result<(Matrix<T>, Vec<Grad<T>>)> {
        cache.check("linear", grad_out)?;
        let CacheState::Input(x) = &cache.state else {
            return Err(Error::Contract("linear cache without input".into()));
        };
        let mut gb = vec![T::zero(); self.outputs()];
        for s in 0..x.rows() {
            for (b, &g) in gb.iter_mut().zip(grad_out.row(s)) {
                *b += g;
            }
        }
        let gx = if need_input {
            matmul(grad_out, &self.weight)?
        } else {
            Matrix::zeros(0, 0)
        };
        let gw = Grad::Outer { g: grad_out.clone(), x: x.clone() };
        Ok((gx, vec![gw, Grad::Dense(gb)]))
    }
}
