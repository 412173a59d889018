//! Minimal dense network machinery: a two-hidden-layer tanh MLP with manual
//! backprop and an Adam optimizer over flattened parameter vectors. Batches
//! are row-major `DMatrix` (one sample per row), which keeps the heavy work
//! in dgemm.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Two hidden tanh layers plus a linear (optionally tanh) output layer.
#[derive(Debug, Clone)]
pub struct Mlp {
    pub w1: DMatrix<f64>,
    pub b1: DVector<f64>,
    pub w2: DMatrix<f64>,
    pub b2: DVector<f64>,
    pub w3: DMatrix<f64>,
    pub b3: DVector<f64>,
    pub out_tanh: bool,
}

/// Activations kept for the backward pass.
pub struct ForwardCache {
    pub x: DMatrix<f64>,
    pub h1: DMatrix<f64>,
    pub h2: DMatrix<f64>,
    pub out: DMatrix<f64>,
}

fn init_layer<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> DMatrix<f64> {
    let bound = 1.0 / (cols as f64).sqrt();
    DMatrix::from_fn(rows, cols, |_, _| rng.random_range(-bound..bound))
}

fn add_row_broadcast(m: &mut DMatrix<f64>, b: &DVector<f64>) {
    for mut row in m.row_iter_mut() {
        row += b.transpose();
    }
}

impl Mlp {
    pub fn new<R: Rng>(
        in_dim: usize,
        hidden: usize,
        out_dim: usize,
        out_tanh: bool,
        rng: &mut R,
    ) -> Self {
        Mlp {
            w1: init_layer(hidden, in_dim, rng),
            b1: DVector::zeros(hidden),
            w2: init_layer(hidden, hidden, rng),
            b2: DVector::zeros(hidden),
            w3: init_layer(out_dim, hidden, rng),
            b3: DVector::zeros(out_dim),
            out_tanh,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Mlp {
            w1: DMatrix::zeros(self.w1.nrows(), self.w1.ncols()),
            b1: DVector::zeros(self.b1.len()),
            w2: DMatrix::zeros(self.w2.nrows(), self.w2.ncols()),
            b2: DVector::zeros(self.b2.len()),
            w3: DMatrix::zeros(self.w3.nrows(), self.w3.ncols()),
            b3: DVector::zeros(self.b3.len()),
            out_tanh: self.out_tanh,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w1.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.w3.nrows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.nrows()
    }

    /// Forward pass over a batch (rows are samples).
    pub fn forward(&self, x: &DMatrix<f64>) -> ForwardCache {
        let mut z1 = x * self.w1.transpose();
        add_row_broadcast(&mut z1, &self.b1);
        let h1 = z1.map(f64::tanh);

        let mut z2 = &h1 * self.w2.transpose();
        add_row_broadcast(&mut z2, &self.b2);
        let h2 = z2.map(f64::tanh);

        let mut z3 = &h2 * self.w3.transpose();
        add_row_broadcast(&mut z3, &self.b3);
        let out = if self.out_tanh { z3.map(f64::tanh) } else { z3 };

        ForwardCache {
            x: x.clone(),
            h1,
            h2,
            out,
        }
    }

    /// Accumulates parameter gradients for `dL/d_out` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, d_out: &DMatrix<f64>, grads: &mut Mlp) {
        let dz3 = if self.out_tanh {
            let mut dz = d_out.clone();
            dz.zip_apply(&cache.out, |d, o| *d *= 1.0 - o * o);
            dz
        } else {
            d_out.clone()
        };
        grads.w3 += dz3.transpose() * &cache.h2;
        for row in dz3.row_iter() {
            grads.b3 += row.transpose();
        }

        let dh2 = &dz3 * &self.w3;
        let mut dz2 = dh2;
        dz2.zip_apply(&cache.h2, |d, h| *d *= 1.0 - h * h);
        grads.w2 += dz2.transpose() * &cache.h1;
        for row in dz2.row_iter() {
            grads.b2 += row.transpose();
        }

        let dh1 = &dz2 * &self.w2;
        let mut dz1 = dh1;
        dz1.zip_apply(&cache.h1, |d, h| *d *= 1.0 - h * h);
        grads.w1 += dz1.transpose() * &cache.x;
        for row in dz1.row_iter() {
            grads.b1 += row.transpose();
        }
    }

    pub fn param_count(&self) -> usize {
        self.w1.len() + self.b1.len() + self.w2.len() + self.b2.len() + self.w3.len() + self.b3.len()
    }

    pub fn flatten_into(&self, out: &mut Vec<f64>) {
        out.extend_from_slice(self.w1.as_slice());
        out.extend_from_slice(self.b1.as_slice());
        out.extend_from_slice(self.w2.as_slice());
        out.extend_from_slice(self.b2.as_slice());
        out.extend_from_slice(self.w3.as_slice());
        out.extend_from_slice(self.b3.as_slice());
    }

    pub fn unflatten_from(&mut self, src: &[f64]) {
        let mut at = 0usize;
        for part in [
            self.w1.as_mut_slice(),
            self.b1.as_mut_slice(),
            self.w2.as_mut_slice(),
            self.b2.as_mut_slice(),
            self.w3.as_mut_slice(),
            self.b3.as_mut_slice(),
        ] {
            part.copy_from_slice(&src[at..at + part.len()]);
            at += part.len();
        }
        debug_assert_eq!(at, src.len());
    }
}

/// Adam over a flat parameter vector.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(lr: f64, n: usize) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    /// One update step; `params` and `grads` must have the optimizer's size.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let b1t = 1.0 - self.beta1.powi(self.t as i32);
        let b2t = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * grads[i];
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * grads[i] * grads[i];
            let m_hat = self.m[i] / b1t;
            let v_hat = self.v[i] / b2t;
            params[i] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
        }
    }
}

/// Scales `grads` in place so the global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for g in grads.iter_mut() {
            *g *= scale;
        }
    }
    norm
}
