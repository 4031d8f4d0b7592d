//! Fully connected ReLU network with a linear output layer.
//!
//! All parameters live in one flat vector: for each layer the weights as a
//! row-major `in × out` matrix followed by the `out` biases. A batch is a
//! row-major `n × in` matrix, so a layer computes `X·W + b`.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{check_len, NnError, Result};

/// Inputs with at most this fraction of nonzeros take the sparse path in the
/// first layer.
const SPARSE_DENSITY: f64 = 0.35;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Linear,
    Softmax,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    head: Head,
    params: Vec<f64>,
    /// Offset of each layer's weights; biases follow at `+ in * out`.
    offsets: Vec<usize>,
}

/// Post-activation outputs of every layer for one batch; the last entry is
/// the linear output.
#[derive(Debug, Clone)]
pub struct Activations {
    pub n: usize,
    layers: Vec<Vec<f64>>,
}

impl Activations {
    pub fn output(&self) -> &[f64] {
        self.layers.last().expect("at least one layer")
    }
}

fn layout(sizes: &[usize]) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(sizes.len() - 1);
    let mut off = 0;
    for w in sizes.windows(2) {
        offsets.push(off);
        off += w[0] * w[1] + w[1];
    }
    (offsets, off)
}

impl Mlp {
    /// All-zero parameters.
    pub fn zeros(sizes: &[usize], head: Head) -> Result<Mlp> {
        if sizes.len() < 2 || sizes.contains(&0) {
            return Err(NnError::Shape { what: "layer sizes", expected: 2, got: sizes.len() });
        }
        let (offsets, total) = layout(sizes);
        Ok(Mlp { sizes: sizes.to_vec(), head, params: vec![0.0; total], offsets })
    }

    /// Orthogonal weights scaled by `hidden_gain` for hidden layers and
    /// `output_gain` for the output layer; zero biases.
    pub fn orthogonal<R: Rng + ?Sized>(
        sizes: &[usize],
        head: Head,
        hidden_gain: f64,
        output_gain: f64,
        rng: &mut R,
    ) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes, head)?;
        let last = net.num_layers() - 1;
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let gain = if l == last { output_gain } else { hidden_gain };
            let w = orthogonal_matrix(fan_in, fan_out, rng);
            let off = net.offsets[l];
            for (dst, src) in net.params[off..off + fan_in * fan_out].iter_mut().zip(&w) {
                *dst = gain * src;
            }
        }
        Ok(net)
    }

    /// Weights and biases drawn from `U(−1/√fan_in, 1/√fan_in)`.
    pub fn uniform_fan_in<R: Rng + ?Sized>(sizes: &[usize], head: Head, rng: &mut R) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes, head)?;
        for l in 0..net.num_layers() {
            let (fan_in, fan_out) = (net.sizes[l], net.sizes[l + 1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            let off = net.offsets[l];
            for p in &mut net.params[off..off + fan_in * fan_out + fan_out] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        Ok(net)
    }

    /// Rebuilds a network from sizes and a flat parameter vector.
    pub fn from_params(sizes: &[usize], head: Head, params: Vec<f64>) -> Result<Mlp> {
        let mut net = Mlp::zeros(sizes, head)?;
        check_len("parameter vector", net.params.len(), params.len())?;
        net.params = params;
        Ok(net)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn head(&self) -> Head {
        self.head
    }

    pub fn input_size(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.sizes.last().expect("nonempty")
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Copies parameters from a network of the same shape.
    pub fn copy_from(&mut self, other: &Mlp) -> Result<()> {
        check_len("parameter vector", self.params.len(), other.params.len())?;
        self.params.copy_from_slice(&other.params);
        Ok(())
    }

    /// Multiplies the output-layer weights and biases feeding outputs
    /// `cols` by `factor`.
    pub fn scale_output_columns(&mut self, cols: std::ops::Range<usize>, factor: f64) {
        let l = self.num_layers() - 1;
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        for i in 0..fan_in {
            for c in cols.clone() {
                self.params[off + i * fan_out + c] *= factor;
            }
        }
        for c in cols {
            self.params[off + fan_in * fan_out + c] *= factor;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.params.iter().all(|x| x.is_finite())
    }

    fn weights(&self, l: usize) -> (&[f64], &[f64]) {
        let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
        let off = self.offsets[l];
        let w = &self.params[off..off + fan_in * fan_out];
        let b = &self.params[off + fan_in * fan_out..off + fan_in * fan_out + fan_out];
        (w, b)
    }

    /// Forward pass over `n` rows of `x`.
    pub fn forward(&self, x: &[f64], n: usize) -> Result<Activations> {
        check_len("input batch", n * self.input_size(), x.len())?;
        let mut layers: Vec<Vec<f64>> = Vec::with_capacity(self.num_layers());
        for l in 0..self.num_layers() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.weights(l);
            let mut z = Vec::with_capacity(n * fan_out);
            for _ in 0..n {
                z.extend_from_slice(b);
            }
            let input = if l == 0 { x } else { &layers[l - 1] };
            if l == 0 && is_sparse(x) {
                for i in 0..n {
                    let row = &x[i * fan_in..(i + 1) * fan_in];
                    let out = &mut z[i * fan_out..(i + 1) * fan_out];
                    for (j, &v) in row.iter().enumerate() {
                        if v != 0.0 {
                            axpy(v, &w[j * fan_out..(j + 1) * fan_out], out);
                        }
                    }
                }
            } else {
                gemm(n, fan_in, fan_out, input, false, w, false, &mut z, 1.0);
            }
            if l + 1 < self.num_layers() {
                for v in &mut z {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
            layers.push(z);
        }
        Ok(Activations { n, layers })
    }

    /// Output for a single input row.
    pub fn predict(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward(x, 1)?.layers.pop().expect("nonempty"))
    }

    /// Softmax of the output for one input row.
    pub fn predict_probs(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(crate::loss::softmax(&self.predict(x)?))
    }

    /// Accumulates into `grads` the parameter gradient of a loss whose
    /// gradient with respect to the linear outputs is `d_out` (`n × out`).
    pub fn backward(&self, x: &[f64], acts: &Activations, d_out: &[f64], grads: &mut [f64]) -> Result<()> {
        let n = acts.n;
        check_len("input batch", n * self.input_size(), x.len())?;
        check_len("output gradient", n * self.output_size(), d_out.len())?;
        check_len("gradient vector", self.params.len(), grads.len())?;
        let mut dz = d_out.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (fan_in, fan_out) = (self.sizes[l], self.sizes[l + 1]);
            let off = self.offsets[l];
            let input = if l == 0 { x } else { &acts.layers[l - 1] };
            {
                let (gw, gb) = grads[off..off + fan_in * fan_out + fan_out].split_at_mut(fan_in * fan_out);
                for i in 0..n {
                    axpy(1.0, &dz[i * fan_out..(i + 1) * fan_out], gb);
                }
                if l == 0 && is_sparse(x) {
                    for i in 0..n {
                        let row = &x[i * fan_in..(i + 1) * fan_in];
                        let d = &dz[i * fan_out..(i + 1) * fan_out];
                        for (j, &v) in row.iter().enumerate() {
                            if v != 0.0 {
                                axpy(v, d, &mut gw[j * fan_out..(j + 1) * fan_out]);
                            }
                        }
                    }
                } else {
                    // gW += Xᵀ · dZ
                    gemm(fan_in, n, fan_out, input, true, &dz, false, gw, 1.0);
                }
            }
            if l > 0 {
                let (w, _) = self.weights(l);
                let mut da = vec![0.0; n * fan_in];
                // dA = dZ · Wᵀ
                gemm(n, fan_out, fan_in, &dz, false, w, true, &mut da, 0.0);
                for (d, a) in da.iter_mut().zip(&acts.layers[l - 1]) {
                    if *a <= 0.0 {
                        *d = 0.0;
                    }
                }
                dz = da;
            }
        }
        Ok(())
    }
}

fn is_sparse(x: &[f64]) -> bool {
    let nnz = x.iter().filter(|v| **v != 0.0).count();
    (nnz as f64) <= SPARSE_DENSITY * x.len() as f64
}

#[inline]
fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// `C = op(A)·op(B) + beta·C` with `op(A)` of shape `m × k`, `op(B)` of
/// shape `k × n`, all row-major. `ta`/`tb` read the stored matrix
/// transposed (stored `k × m` / `n × k`).
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, c: &mut [f64], beta: f64) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: strides describe exactly the row-major buffers checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Row-major `rows × cols` matrix whose shorter dimension is orthonormal,
/// from modified Gram-Schmidt on Gaussian vectors.
pub fn orthogonal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Vec<f64> {
    let (k, len) = if rows >= cols { (cols, rows) } else { (rows, cols) };
    let mut vecs: Vec<Vec<f64>> = Vec::with_capacity(k);
    while vecs.len() < k {
        let mut v: Vec<f64> = (0..len).map(|_| rng.sample(StandardNormal)).collect();
        for u in &vecs {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            axpy(-d, u, &mut v);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            vecs.push(v);
        }
    }
    let mut out = vec![0.0; rows * cols];
    for (i, v) in vecs.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            if rows >= cols {
                out[j * cols + i] = x;
            } else {
                out[i * cols + j] = x;
            }
        }
    }
    out
}
