//! Gated recurrent layer with backpropagation through time.
//!
//! Per step, with gates stacked in the order update (z), reset (r),
//! candidate (n):
//!
//! ```text
//! z = sigmoid(Wz x + Uz h + bz)
//! r = sigmoid(Wr x + Ur h + br)
//! n = tanh(Wn x + Un (r * h) + bn)
//! h' = (1 - z) * h + z * n
//! ```

use rand::Rng;

use super::{check_finite, NnError, Parameters, Tensor};
use crate::real::{gemm, Op};
use crate::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct GruLayer<T> {
    /// `[3H, I]`, row blocks z, r, n.
    pub w_input: Tensor<T>,
    /// `[3H, H]`, row blocks z, r, n.
    pub w_hidden: Tensor<T>,
    /// `[3H]`.
    pub bias: Tensor<T>,
}

/// Activations kept for the backward pass. All per-step buffers are
/// time-major `[L, B, H]`.
#[derive(Debug, Clone)]
pub struct GruCache<T> {
    pub steps: usize,
    pub batch: usize,
    input: Vec<T>,
    z: Vec<T>,
    r: Vec<T>,
    n: Vec<T>,
    rh: Vec<T>,
    /// Hidden state after every step.
    pub hidden: Vec<T>,
}

#[inline]
fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

impl<T: Real> GruLayer<T> {
    pub fn zeros(inputs: usize, hidden: usize) -> Self {
        GruLayer {
            w_input: Tensor::zeros(&[3 * hidden, inputs]),
            w_hidden: Tensor::zeros(&[3 * hidden, hidden]),
            bias: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn init<R: Rng + ?Sized>(inputs: usize, hidden: usize, rng: &mut R) -> Self {
        GruLayer {
            w_input: Tensor::uniform(&[3 * hidden, inputs], 1.0 / (inputs as f64).sqrt(), rng),
            w_hidden: Tensor::uniform(&[3 * hidden, hidden], 1.0 / (hidden as f64).sqrt(), rng),
            bias: Tensor::zeros(&[3 * hidden]),
        }
    }

    pub fn inputs(&self) -> usize {
        self.w_input.shape()[1]
    }

    pub fn hidden(&self) -> usize {
        self.w_hidden.shape()[1]
    }

    /// Run over a time-major input `[steps, batch, I]` from a zero state.
    pub fn forward(
        &self,
        input: &[T],
        steps: usize,
        batch: usize,
        name: &str,
    ) -> Result<GruCache<T>, NnError> {
        let (i_dim, h) = (self.inputs(), self.hidden());
        let rows = steps * batch;
        if input.len() != rows * i_dim {
            return Err(NnError::Shape {
                context: format!("{name} input"),
                expected: vec![steps, batch, i_dim],
                got: vec![input.len()],
            });
        }
        // Input projections for every step at once.
        let mut xp = Vec::with_capacity(rows * 3 * h);
        for _ in 0..rows {
            xp.extend_from_slice(self.bias.data());
        }
        gemm(Op::N, Op::T, rows, 3 * h, i_dim, input, self.w_input.data(), T::one(), &mut xp);

        let u = self.w_hidden.data();
        let (u_zr, u_n) = u.split_at(2 * h * h);
        let mut z = vec![T::zero(); rows * h];
        let mut r = vec![T::zero(); rows * h];
        let mut n = vec![T::zero(); rows * h];
        let mut rh = vec![T::zero(); rows * h];
        let mut hidden = vec![T::zero(); rows * h];
        let zeros = vec![T::zero(); batch * h];
        let mut hp = vec![T::zero(); batch * 2 * h];
        let mut hn = vec![T::zero(); batch * h];

        for t in 0..steps {
            let span = t * batch * h..(t + 1) * batch * h;
            let h_prev: &[T] = if t == 0 {
                &zeros
            } else {
                &hidden[(t - 1) * batch * h..t * batch * h]
            };
            gemm(Op::N, Op::T, batch, 2 * h, h, h_prev, u_zr, T::zero(), &mut hp);
            let (zt, rt, rht) = (&mut z[span.clone()], &mut r[span.clone()], &mut rh[span.clone()]);
            for b in 0..batch {
                let xrow = &xp[(t * batch + b) * 3 * h..(t * batch + b + 1) * 3 * h];
                let hrow = &hp[b * 2 * h..(b + 1) * 2 * h];
                for k in 0..h {
                    let idx = b * h + k;
                    zt[idx] = sigmoid(xrow[k] + hrow[k]);
                    rt[idx] = sigmoid(xrow[h + k] + hrow[h + k]);
                    rht[idx] = rt[idx] * h_prev[idx];
                }
            }
            gemm(Op::N, Op::T, batch, h, h, rht, u_n, T::zero(), &mut hn);
            let nt = &mut n[span.clone()];
            for b in 0..batch {
                let xrow = &xp[(t * batch + b) * 3 * h..(t * batch + b + 1) * 3 * h];
                for k in 0..h {
                    let idx = b * h + k;
                    nt[idx] = (xrow[2 * h + k] + hn[idx]).tanh();
                }
            }
            let (before, current) = hidden.split_at_mut(t * batch * h);
            let h_prev: &[T] = if t == 0 {
                &zeros
            } else {
                &before[(t - 1) * batch * h..]
            };
            let ht = &mut current[..batch * h];
            for idx in 0..batch * h {
                let zv = z[span.start + idx];
                ht[idx] = (T::one() - zv) * h_prev[idx] + zv * n[span.start + idx];
            }
        }
        check_finite(&hidden, name)?;
        Ok(GruCache {
            steps,
            batch,
            input: input.to_vec(),
            z,
            r,
            n,
            rh,
            hidden,
        })
    }

    /// `d_hidden` is `dL/dh_t` for every step (time-major). Accumulates
    /// parameter gradients into `grad` and returns `dL/dinput`.
    pub fn backward(&self, cache: &GruCache<T>, d_hidden: &[T], grad: &mut GruLayer<T>) -> Vec<T> {
        let (i_dim, h) = (self.inputs(), self.hidden());
        let (steps, batch) = (cache.steps, cache.batch);
        let rows = steps * batch;
        assert_eq!(d_hidden.len(), rows * h, "gru backward: gradient shape");
        let u = self.w_hidden.data();
        let (u_zr, u_n) = u.split_at(2 * h * h);

        let mut d_xp = vec![T::zero(); rows * 3 * h];
        let mut dh_next = vec![T::zero(); batch * h];
        let mut dzr = vec![T::zero(); batch * 2 * h];
        let mut dan = vec![T::zero(); batch * h];
        let mut d_rh = vec![T::zero(); batch * h];
        let zeros = vec![T::zero(); batch * h];
        {
            let (gu_zr, gu_n) = grad.w_hidden.data_mut().split_at_mut(2 * h * h);
            for t in (0..steps).rev() {
                let base = t * batch * h;
                let h_prev: &[T] = if t == 0 {
                    &zeros
                } else {
                    &cache.hidden[(t - 1) * batch * h..base]
                };
                let mut dhp = vec![T::zero(); batch * h];
                for b in 0..batch {
                    for k in 0..h {
                        let idx = b * h + k;
                        let g = base + idx;
                        let dh = d_hidden[g] + dh_next[idx];
                        let (z, n) = (cache.z[g], cache.n[g]);
                        let dn = dh * z;
                        let dz = dh * (n - h_prev[idx]);
                        dhp[idx] = dh * (T::one() - z);
                        dan[idx] = dn * (T::one() - n * n);
                        dzr[b * 2 * h + k] = dz * z * (T::one() - z);
                    }
                }
                gemm(Op::N, Op::N, batch, h, h, &dan, u_n, T::zero(), &mut d_rh);
                for b in 0..batch {
                    for k in 0..h {
                        let idx = b * h + k;
                        let r = cache.r[base + idx];
                        let dr = d_rh[idx] * h_prev[idx];
                        dhp[idx] += d_rh[idx] * r;
                        dzr[b * 2 * h + h + k] = dr * r * (T::one() - r);
                    }
                }
                gemm(Op::N, Op::N, batch, h, 2 * h, &dzr, u_zr, T::one(), &mut dhp);
                gemm(Op::T, Op::N, h, h, batch, &dan, &cache.rh[base..base + batch * h], T::one(), gu_n);
                if t > 0 {
                    gemm(Op::T, Op::N, 2 * h, h, batch, &dzr, h_prev, T::one(), gu_zr);
                }
                for b in 0..batch {
                    let row = &mut d_xp[(t * batch + b) * 3 * h..(t * batch + b + 1) * 3 * h];
                    row[..2 * h].copy_from_slice(&dzr[b * 2 * h..(b + 1) * 2 * h]);
                    row[2 * h..].copy_from_slice(&dan[b * h..(b + 1) * h]);
                }
                dh_next = dhp;
            }
        }
        gemm(Op::T, Op::N, 3 * h, i_dim, rows, &d_xp, &cache.input, T::one(), grad.w_input.data_mut());
        let db = grad.bias.data_mut();
        for row in d_xp.chunks_exact(3 * h) {
            for (b, g) in db.iter_mut().zip(row) {
                *b += *g;
            }
        }
        let mut d_input = vec![T::zero(); rows * i_dim];
        gemm(Op::N, Op::N, rows, i_dim, 3 * h, &d_xp, self.w_input.data(), T::zero(), &mut d_input);
        d_input
    }
}

impl<T: Real> GruCache<T> {
    /// Hidden state after the final step, `[B, H]`.
    pub fn last_hidden(&self) -> &[T] {
        let per_step = self.hidden.len() / self.steps;
        &self.hidden[(self.steps - 1) * per_step..]
    }
}

impl<T: Real> Parameters<T> for GruLayer<T> {
    fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        vec![
            ("w_input".into(), &self.w_input),
            ("w_hidden".into(), &self.w_hidden),
            ("bias".into(), &self.bias),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        vec![&mut self.w_input, &mut self.w_hidden, &mut self.bias]
    }
}
