//! Graph-convolution network with hand-written backward pass.
//!
//! `H0 = relu(A_hat X Wg + bg)`, `H1 = relu(H0 W1 + b1)`, `O = H1 W2 + b2`,
//! where `A_hat = D^-1/2 (A + I) D^-1/2` over the symmetrised adjacency.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::math;

/// Symmetric-normalised adjacency with self-loops, row-major `n x n`.
pub fn normalized_adjacency(n: usize, adjacency: &[bool]) -> Vec<f64> {
    let mut a = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i == j || adjacency[i * n + j] || adjacency[j * n + i] {
                a[i * n + j] = 1.0;
            }
        }
    }
    let d: Vec<f64> = (0..n)
        .map(|i| 1.0 / math::sqrt(a[i * n..(i + 1) * n].iter().sum::<f64>()))
        .collect();
    for i in 0..n {
        for j in 0..n {
            a[i * n + j] *= d[i] * d[j];
        }
    }
    a
}

/// Tensor names, in storage order.
pub const TENSOR_NAMES: [&str; 6] = ["gcn.weight", "gcn.bias", "fc1.weight", "fc1.bias", "fc2.weight", "fc2.bias"];

#[derive(Clone, Debug, PartialEq)]
pub struct GcnNet {
    pub n_in: usize,
    pub hidden: usize,
    pub n_out: usize,
    pub params: Vec<f64>,
}

/// Activations kept for the backward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    n: usize,
    ax: Vec<f64>,
    h0: Vec<f64>,
    h1: Vec<f64>,
    /// `n x n_out` pre-activation outputs.
    pub out: Vec<f64>,
}

impl GcnNet {
    pub fn shapes(n_in: usize, hidden: usize, n_out: usize) -> [[usize; 2]; 6] {
        [[n_in, hidden], [1, hidden], [hidden, hidden], [1, hidden], [hidden, n_out], [1, n_out]]
    }

    pub fn param_count(n_in: usize, hidden: usize, n_out: usize) -> usize {
        Self::shapes(n_in, hidden, n_out).iter().map(|[r, c]| r * c).sum()
    }

    pub fn zeros(n_in: usize, hidden: usize, n_out: usize) -> Self {
        Self {
            n_in,
            hidden,
            n_out,
            params: vec![0.0; Self::param_count(n_in, hidden, n_out)],
        }
    }

    /// Uniform `+-1/sqrt(fan_in)` initialisation for weights and biases.
    pub fn init<R: Rng + ?Sized>(n_in: usize, hidden: usize, n_out: usize, rng: &mut R) -> Self {
        let mut net = Self::zeros(n_in, hidden, n_out);
        let mut offset = 0;
        let fans = [n_in, n_in, hidden, hidden, hidden, hidden];
        for (shape, fan) in Self::shapes(n_in, hidden, n_out).iter().zip(fans) {
            let len = shape[0] * shape[1];
            let bound = 1.0 / math::sqrt(fan as f64);
            for p in &mut net.params[offset..offset + len] {
                *p = rng.random_range(-bound..bound);
            }
            offset += len;
        }
        net
    }

    /// `(name, shape, values)` for every tensor.
    pub fn tensors(&self) -> Vec<(&'static str, [usize; 2], &[f64])> {
        let mut out = Vec::with_capacity(6);
        let mut offset = 0;
        for (name, shape) in TENSOR_NAMES.iter().zip(Self::shapes(self.n_in, self.hidden, self.n_out)) {
            let len = shape[0] * shape[1];
            out.push((*name, shape, &self.params[offset..offset + len]));
            offset += len;
        }
        out
    }

    fn offsets(&self) -> [usize; 7] {
        let mut o = [0; 7];
        for (k, [r, c]) in Self::shapes(self.n_in, self.hidden, self.n_out).iter().enumerate() {
            o[k + 1] = o[k] + r * c;
        }
        o
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    /// Runs the network on `x` (`n x n_in`) with normalised adjacency `a_hat`.
    pub fn forward(&self, a_hat: &[f64], x: &[f64]) -> Forward {
        let n = a_hat.len().isqrt();
        let (f, h, k) = (self.n_in, self.hidden, self.n_out);
        debug_assert_eq!(x.len(), n * f);
        let o = self.offsets();
        let p = &self.params;

        let mut ax = vec![0.0; n * f];
        for i in 0..n {
            for j in 0..n {
                let a = a_hat[i * n + j];
                if a != 0.0 {
                    for c in 0..f {
                        ax[i * f + c] += a * x[j * f + c];
                    }
                }
            }
        }
        let h0 = dense(&ax, n, f, &p[o[0]..o[1]], &p[o[1]..o[2]], h, true);
        let h1 = dense(&h0, n, h, &p[o[2]..o[3]], &p[o[3]..o[4]], h, true);
        let out = dense(&h1, n, h, &p[o[4]..o[5]], &p[o[5]..o[6]], k, false);
        Forward { n, ax, h0, h1, out }
    }

    /// Accumulates parameter gradients into `grad` given `d_out = dL/dO`.
    pub fn backward(&self, fwd: &Forward, d_out: &[f64], grad: &mut [f64]) {
        let n = fwd.n;
        let (f, h, k) = (self.n_in, self.hidden, self.n_out);
        let o = self.offsets();
        let p = &self.params;

        let mut d_h1 = vec![0.0; n * h];
        dense_backward(&fwd.h1, d_out, n, h, k, &p[o[4]..o[5]], grad, o[4], o[5], Some(&mut d_h1));
        relu_mask(&mut d_h1, &fwd.h1);
        let mut d_h0 = vec![0.0; n * h];
        dense_backward(&fwd.h0, &d_h1, n, h, h, &p[o[2]..o[3]], grad, o[2], o[3], Some(&mut d_h0));
        relu_mask(&mut d_h0, &fwd.h0);
        dense_backward(&fwd.ax, &d_h0, n, f, h, &p[o[0]..o[1]], grad, o[0], o[1], None);
    }
}

fn dense(x: &[f64], n: usize, f: usize, w: &[f64], b: &[f64], k: usize, relu: bool) -> Vec<f64> {
    let mut y = vec![0.0; n * k];
    for i in 0..n {
        let row = &mut y[i * k..(i + 1) * k];
        row.copy_from_slice(b);
        for c in 0..f {
            let xc = x[i * f + c];
            if xc != 0.0 {
                for (yk, wk) in row.iter_mut().zip(&w[c * k..(c + 1) * k]) {
                    *yk += xc * wk;
                }
            }
        }
        if relu {
            row.iter_mut().for_each(|v| *v = v.max(0.0));
        }
    }
    y
}

#[allow(clippy::too_many_arguments)]
fn dense_backward(
    x: &[f64],
    dy: &[f64],
    n: usize,
    f: usize,
    k: usize,
    w: &[f64],
    grad: &mut [f64],
    w_off: usize,
    b_off: usize,
    dx: Option<&mut [f64]>,
) {
    for i in 0..n {
        let dyi = &dy[i * k..(i + 1) * k];
        for c in 0..f {
            let xc = x[i * f + c];
            if xc != 0.0 {
                let gw = &mut grad[w_off + c * k..w_off + (c + 1) * k];
                for (g, d) in gw.iter_mut().zip(dyi) {
                    *g += xc * d;
                }
            }
        }
        for (g, d) in grad[b_off..b_off + k].iter_mut().zip(dyi) {
            *g += d;
        }
    }
    if let Some(dx) = dx {
        for i in 0..n {
            let dyi = &dy[i * k..(i + 1) * k];
            for c in 0..f {
                dx[i * f + c] = w[c * k..(c + 1) * k].iter().zip(dyi).map(|(a, b)| a * b).sum();
            }
        }
    }
}

fn relu_mask(d: &mut [f64], activated: &[f64]) {
    for (g, &a) in d.iter_mut().zip(activated) {
        if a <= 0.0 {
            *g = 0.0;
        }
    }
}
