//! Minimal differentiable numeric core: dense f32 tensors, the layer kernels
//! both models are built from, Adam, and finite-difference gradient checks.
//!
//! Everything here is deterministic: parallel code paths only split work over
//! disjoint output regions, so the floating-point reduction order per element
//! is fixed regardless of thread count.

mod adam;
pub mod gradcheck;
mod ops;

pub use adam::{AdamConfig, AdamState};
pub use ops::{
    cross_entropy_logits, maxpool2_backward, maxpool2_forward, pool_adaptive_avg_backward,
    pool_adaptive_avg_forward, relu, relu_backward, sigmoid, sigmoid_backward, softmax,
    softmax_backward, tanh, tanh_backward, Conv2d, ConvCtx, Dense, MaxPoolCtx,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
}

/// Dense n-dimensional array of 32-bit reals, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f32>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f32>) -> Self {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "tensor data length must match shape"
        );
        Tensor {
            shape: shape.to_vec(),
            data,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    /// Reinterpret with a new shape of the same total length.
    pub fn reshaped(mut self, shape: &[usize]) -> Self {
        assert_eq!(self.data.len(), shape.iter().product::<usize>());
        self.shape = shape.to_vec();
        self
    }
}

/// A learnable tensor paired with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub value: Tensor,
    pub grad: Vec<f32>,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = vec![0.0; value.len()];
        Param { value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Kaiming-uniform init for layers feeding relu.
pub fn kaiming_uniform(shape: &[usize], fan_in: usize, rng: &mut impl rand::Rng) -> Tensor {
    let limit = (6.0 / fan_in as f64).sqrt() as f32;
    uniform_tensor(shape, limit, rng)
}

/// Xavier-uniform init for layers feeding tanh/sigmoid/softmax.
pub fn xavier_uniform(
    shape: &[usize],
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl rand::Rng,
) -> Tensor {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    uniform_tensor(shape, limit, rng)
}

fn uniform_tensor(shape: &[usize], limit: f32, rng: &mut impl rand::Rng) -> Tensor {
    let len: usize = shape.iter().product();
    let data = (0..len).map(|_| rng.gen_range(-limit..limit)).collect();
    Tensor::from_vec(shape, data)
}

/// Minimum per-row work (in multiply-adds) before matmul rows are split
/// across threads.
const PAR_GRAIN: usize = 1 << 21;

/// C += A @ B with A: [m,k], B: [k,n], C: [m,n], all row-major.
///
/// Each output row is produced by exactly one task with a fixed inner
/// summation order, so results are bit-identical for any thread count.
pub fn matmul_acc(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let work = m * k * n;
    if work >= PAR_GRAIN && rayon::current_num_threads() > 1 && m > 1 {
        let rows_per_chunk = (m / (rayon::current_num_threads() * 4)).max(8);
        use rayon::prelude::*;
        c.par_chunks_mut(rows_per_chunk * n)
            .enumerate()
            .for_each(|(chunk, c_chunk)| {
                let row0 = chunk * rows_per_chunk;
                let rows = c_chunk.len() / n;
                matmul_rows(c_chunk, &a[row0 * k..(row0 + rows) * k], b, rows, k, n);
            });
    } else {
        matmul_rows(c, a, b, m, k, n);
    }
}

/// Sequential kernel: ikj order with a 4-way unroll over k so each pass over
/// the C row carries four fused multiply-adds.
fn matmul_rows(c: &mut [f32], a: &[f32], b: &[f32], m: usize, k: usize, n: usize) {
    let k4 = k / 4 * 4;
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        let arow = &a[i * k..(i + 1) * k];
        let mut kk = 0;
        while kk < k4 {
            let a0 = arow[kk];
            let a1 = arow[kk + 1];
            let a2 = arow[kk + 2];
            let a3 = arow[kk + 3];
            let b0 = &b[kk * n..kk * n + n];
            let b1 = &b[(kk + 1) * n..(kk + 1) * n + n];
            let b2 = &b[(kk + 2) * n..(kk + 2) * n + n];
            let b3 = &b[(kk + 3) * n..(kk + 3) * n + n];
            for j in 0..n {
                crow[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
            kk += 4;
        }
        while kk < k {
            let av = arow[kk];
            let brow = &b[kk * n..kk * n + n];
            for (cv, bv) in crow.iter_mut().zip(brow) {
                *cv += av * *bv;
            }
            kk += 1;
        }
    }
}

/// out[j][i] = a[i][j] for a: [rows, cols].
pub fn transpose(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    assert_eq!(a.len(), rows * cols);
    let mut out = vec![0.0f32; rows * cols];
    const BLOCK: usize = 32;
    for ib in (0..rows).step_by(BLOCK) {
        for jb in (0..cols).step_by(BLOCK) {
            for i in ib..(ib + BLOCK).min(rows) {
                for j in jb..(jb + BLOCK).min(cols) {
                    out[j * rows + i] = a[i * cols + j];
                }
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_matmul(a: &[f32], b: &[f32], m: usize, k: usize, n: usize) -> Vec<f32> {
        let mut c = vec![0.0f64; m * n];
        for i in 0..m {
            for j in 0..n {
                for kk in 0..k {
                    c[i * n + j] += a[i * k + kk] as f64 * b[kk * n + j] as f64;
                }
            }
        }
        c.into_iter().map(|v| v as f32).collect()
    }

    #[test]
    fn matmul_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for &(m, k, n) in &[(1usize, 1usize, 1usize), (2, 3, 4), (7, 13, 5), (33, 9, 17)] {
            let a: Vec<f32> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f32> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let mut c = vec![0.0f32; m * n];
            matmul_acc(&mut c, &a, &b, m, k, n);
            let want = naive_matmul(&a, &b, m, k, n);
            for (got, want) in c.iter().zip(&want) {
                assert!((got - want).abs() < 1e-4, "got {got}, want {want}");
            }
        }
    }

    #[test]
    fn matmul_parallel_is_bit_identical_to_sequential() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let (m, k, n) = (257, 64, 96);
        let a: Vec<f32> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b: Vec<f32> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut c_par = vec![0.0f32; m * n];
        matmul_acc(&mut c_par, &a, &b, m, k, n);
        let mut c_seq = vec![0.0f32; m * n];
        matmul_rows(&mut c_seq, &a, &b, m, k, n);
        assert_eq!(
            c_par.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            c_seq.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn transpose_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let (rows, cols) = (37, 53);
        let a: Vec<f32> = (0..rows * cols).map(|_| rng.gen::<f32>()).collect();
        let t = transpose(&a, rows, cols);
        let back = transpose(&t, cols, rows);
        assert_eq!(a, back);
    }

    #[test]
    fn tensor_shape_and_reshape() {
        let t = Tensor::zeros(&[2, 3, 4]);
        assert_eq!(t.len(), 24);
        let r = t.reshaped(&[6, 4]);
        assert_eq!(r.shape(), &[6, 4]);
    }
}
