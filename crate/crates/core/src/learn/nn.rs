//! Dense row-major matrices, a ReLU multilayer perceptron with hand-written
//! backpropagation, and the Adam optimizer.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float as _;
use rand::Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix shape mismatch");
        Self { rows, cols, data }
    }

    /// Stacks equally long rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self { rows: rows.len(), cols, data }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    /// Concatenates columns of two matrices with equal row counts.
    pub fn hcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "row count mismatch");
        let mut out = Matrix::zeros(self.rows, self.cols + other.cols);
        for i in 0..self.rows {
            let r = out.row_mut(i);
            r[..self.cols].copy_from_slice(self.row(i));
            r[self.cols..].copy_from_slice(other.row(i));
        }
        out
    }

    /// Columns `start..end`.
    pub fn columns(&self, start: usize, end: usize) -> Matrix {
        let mut out = Matrix::zeros(self.rows, end - start);
        for i in 0..self.rows {
            out.row_mut(i).copy_from_slice(&self.row(i)[start..end]);
        }
        out
    }

    /// Stacks the rows of `other` below these.
    pub fn vcat(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "column count mismatch");
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix { rows: self.rows + other.rows, cols: self.cols, data }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// `c = beta c + a b` with explicit strides, `a` is `m x k`, `b` is `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], rsa: usize, csa: usize, b: &[f64], rsb: usize, csb: usize, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    assert!(a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() >= m * n);
    // SAFETY: the asserts above keep every strided access inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// `x w^T` for `x: n x k` and row-major `w: m x k`.
pub fn mul_transposed(x: &Matrix, w: &[f64], m: usize) -> Matrix {
    let k = x.cols;
    assert_eq!(w.len(), m * k);
    let mut out = Matrix::zeros(x.rows, m);
    gemm(x.rows, k, m, &x.data, k, 1, w, 1, k, 0.0, &mut out.data);
    out
}

/// `x w` for `x: n x m` and row-major `w: m x k`.
pub fn mul(x: &Matrix, w: &[f64], k: usize) -> Matrix {
    let m = x.cols;
    assert_eq!(w.len(), m * k);
    let mut out = Matrix::zeros(x.rows, k);
    gemm(x.rows, m, k, &x.data, m, 1, w, k, 1, 0.0, &mut out.data);
    out
}

/// `acc += d^T x` for `d: n x m`, `x: n x k`, `acc: m x k`.
pub fn add_transposed_product(acc: &mut [f64], d: &Matrix, x: &Matrix) {
    assert_eq!(d.rows, x.rows);
    assert_eq!(acc.len(), d.cols * x.cols);
    gemm(d.cols, d.rows, x.cols, &d.data, 1, d.cols, &x.data, x.cols, 1, 1.0, acc);
}

/// Fully connected network with ReLU hidden layers and a linear output.
/// Parameters are one flat vector: per layer the `out x in` weights
/// row-major, then the biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    params: Vec<f64>,
}

/// Layer activations kept for backpropagation; the first entry is the input
/// and the last the output.
#[derive(Debug, Clone)]
pub struct Forward {
    pub acts: Vec<Matrix>,
}

impl Forward {
    pub fn output(&self) -> &Matrix {
        self.acts.last().expect("non-empty")
    }
}

fn n_params(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[1] * (w[0] + 1)).sum()
}

impl Mlp {
    /// Weights and biases uniform in `+-1/sqrt(fan_in)`.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        assert!(sizes.len() >= 2 && sizes.iter().all(|&s| s > 0), "invalid layer sizes");
        let mut params = Vec::with_capacity(n_params(sizes));
        for w in sizes.windows(2) {
            let bound = 1.0 / (w[0] as f64).sqrt();
            for _ in 0..w[1] * (w[0] + 1) {
                params.push(rng.random_range(-bound..bound));
            }
        }
        Self { sizes: sizes.to_vec(), params }
    }

    pub fn from_params(sizes: Vec<usize>, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && sizes.iter().all(|&s| s > 0) && params.len() == n_params(&sizes))
            .then_some(Self { sizes, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().expect("non-empty")
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|p| p.is_finite())
    }

    fn layers(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut offset = 0;
        self.sizes.windows(2).map(move |w| {
            let at = offset;
            offset += w[1] * (w[0] + 1);
            (at, w[0], w[1])
        })
    }

    /// Multiplies the output layer's weights and biases by `s`.
    pub fn scale_output_layer(&mut self, s: f64) {
        let (at, _, _) = self.layers().last().expect("non-empty");
        for p in &mut self.params[at..] {
            *p *= s;
        }
    }

    pub fn forward(&self, x: &Matrix) -> Forward {
        assert_eq!(x.cols, self.input_dim(), "input width");
        let n_layers = self.sizes.len() - 1;
        let mut acts = Vec::with_capacity(n_layers + 1);
        acts.push(x.clone());
        for (l, (at, i, o)) in self.layers().enumerate() {
            let w = &self.params[at..at + o * i];
            let b = &self.params[at + o * i..at + o * (i + 1)];
            let mut y = mul_transposed(acts.last().expect("non-empty"), w, o);
            let hidden = l + 1 < n_layers;
            for r in 0..y.rows {
                for (v, bias) in y.row_mut(r).iter_mut().zip(b) {
                    *v += bias;
                    if hidden && *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            acts.push(y);
        }
        Forward { acts }
    }

    pub fn predict(&self, x: &Matrix) -> Matrix {
        self.forward(x).acts.pop().expect("non-empty")
    }

    /// Accumulates `d loss / d params` into `grad` given `d loss / d output`,
    /// and returns `d loss / d input`.
    pub fn backward(&self, fwd: &Forward, d_out: &Matrix, grad: &mut [f64]) -> Matrix {
        assert_eq!(grad.len(), self.params.len());
        let layers: Vec<_> = self.layers().collect();
        let mut d = d_out.clone();
        for (l, &(at, i, o)) in layers.iter().enumerate().rev() {
            let x = &fwd.acts[l];
            let (gw, rest) = grad[at..at + o * (i + 1)].split_at_mut(o * i);
            add_transposed_product(gw, &d, x);
            for r in 0..d.rows {
                for (g, v) in rest.iter_mut().zip(d.row(r)) {
                    *g += v;
                }
            }
            let mut dx = mul(&d, &self.params[at..at + o * i], i);
            if l > 0 {
                // ReLU gate of the layer below.
                for (g, a) in dx.data.iter_mut().zip(&x.data) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            d = dx;
        }
        d
    }

    /// `self = (1 - tau) self + tau src`.
    pub fn soft_update(&mut self, src: &Mlp, tau: f64) {
        assert_eq!(self.sizes, src.sizes, "architecture mismatch");
        for (p, s) in self.params.iter_mut().zip(&src.params) {
            *p += tau * (s - *p);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    t: u64,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub fn new(n: usize, lr: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, t: 0, m: vec![0.0; n], v: vec![0.0; n] }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grad.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t.min(i32::MAX as u64) as i32);
        let c2 = 1.0 - self.beta2.powi(self.t.min(i32::MAX as u64) as i32);
        for ((p, g), (m, v)) in params.iter_mut().zip(grad).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            *p -= self.lr * (*m / c1) / ((*v / c2).sqrt() + self.eps);
        }
    }
}
