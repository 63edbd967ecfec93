use rand::Rng;

use super::{NnError, Parameters, Tensor};
use crate::real::{gemm, Op};
use crate::Real;

/// Fully connected layer, `y = W x + b` with `W` stored as `[out, in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense<T> {
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

impl<T: Real> Dense<T> {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Dense {
            weight: Tensor::zeros(&[outputs, inputs]),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, zero bias.
    pub fn init<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        Dense {
            weight: Tensor::uniform(&[outputs, inputs], 1.0 / (inputs as f64).sqrt(), rng),
            bias: Tensor::zeros(&[outputs]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn outputs(&self) -> usize {
        self.weight.shape()[0]
    }

    /// `x` holds `rows` input vectors back to back.
    pub fn forward(&self, x: &[T], rows: usize) -> Result<Vec<T>, NnError> {
        let (i, o) = (self.inputs(), self.outputs());
        if x.len() != rows * i {
            return Err(NnError::Shape {
                context: "dense input".into(),
                expected: vec![rows, i],
                got: vec![x.len()],
            });
        }
        let mut y = Vec::with_capacity(rows * o);
        for _ in 0..rows {
            y.extend_from_slice(self.bias.data());
        }
        gemm(Op::N, Op::T, rows, o, i, x, self.weight.data(), T::one(), &mut y);
        Ok(y)
    }

    /// Accumulates parameter gradients into `grad` and returns `dL/dx`.
    pub fn backward(&self, x: &[T], dy: &[T], rows: usize, grad: &mut Dense<T>) -> Vec<T> {
        let (i, o) = (self.inputs(), self.outputs());
        gemm(Op::T, Op::N, o, i, rows, dy, x, T::one(), grad.weight.data_mut());
        let db = grad.bias.data_mut();
        for row in dy.chunks_exact(o) {
            for (b, g) in db.iter_mut().zip(row) {
                *b += *g;
            }
        }
        let mut dx = vec![T::zero(); rows * i];
        gemm(Op::N, Op::N, rows, i, o, dy, self.weight.data(), T::zero(), &mut dx);
        dx
    }
}

pub fn relu_in_place<T: Real>(x: &mut [T]) {
    for v in x {
        if *v < T::zero() {
            *v = T::zero();
        }
    }
}

/// Zero the gradient wherever the ReLU output was not positive.
pub fn relu_backward_in_place<T: Real>(activated: &[T], grad: &mut [T]) {
    for (g, a) in grad.iter_mut().zip(activated) {
        if *a <= T::zero() {
            *g = T::zero();
        }
    }
}

impl<T: Real> Parameters<T> for Dense<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![("weight".into(), &self.weight), ("bias".into(), &self.bias)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.weight, &mut self.bias]
    }
}
