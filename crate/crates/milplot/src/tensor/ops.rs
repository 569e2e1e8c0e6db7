//! Layer kernels with explicit forward/backward pairs.
//!
//! Convolutions are im2col + matmul. Inputs are single instances laid out
//! [h, w, c]; batching happens above this layer (bags process instances
//! independently).

use super::{matmul_acc, transpose, Param, Tensor, TensorError};

/// 2-D cross-correlation plus bias. Weight layout [kh, kw, c_in, c_out].
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
}

/// Saved forward state needed by `Conv2d::backward`. The im2col matrix is
/// recomputed there to keep live memory per instance small.
pub struct ConvCtx {
    input: Tensor,
}

impl Conv2d {
    pub fn new(weight: Tensor, bias: Tensor, stride: usize, padding: usize) -> Self {
        assert_eq!(weight.shape().len(), 4);
        assert_eq!(bias.shape(), &[weight.shape()[3]]);
        Conv2d {
            weight: Param::new(weight),
            bias: Param::new(bias),
            stride,
            padding,
        }
    }

    pub fn out_dims(&self, h: usize, w: usize) -> (usize, usize) {
        let (kh, kw) = (self.weight.value.shape()[0], self.weight.value.shape()[1]);
        let oh = (h + 2 * self.padding - kh) / self.stride + 1;
        let ow = (w + 2 * self.padding - kw) / self.stride + 1;
        (oh, ow)
    }

    pub fn forward(&self, input: &Tensor) -> Result<(Tensor, ConvCtx), TensorError> {
        let wshape = self.weight.value.shape().to_vec();
        let (kh, kw, c_in, c_out) = (wshape[0], wshape[1], wshape[2], wshape[3]);
        let ishape = input.shape();
        if ishape.len() != 3
            || ishape[2] != c_in
            || ishape[0] + 2 * self.padding < kh
            || ishape[1] + 2 * self.padding < kw
        {
            return Err(TensorError::ShapeMismatch {
                expected: vec![kh, kw, c_in],
                got: ishape.to_vec(),
            });
        }
        let (h, w) = (ishape[0], ishape[1]);
        let (oh, ow) = self.out_dims(h, w);
        let cols = im2col(input.data(), h, w, c_in, kh, kw, self.stride, self.padding);
        let mut out = vec![0.0f32; oh * ow * c_out];
        for row in out.chunks_mut(c_out) {
            row.copy_from_slice(self.bias.value.data());
        }
        matmul_acc(
            &mut out,
            &cols,
            self.weight.value.data(),
            oh * ow,
            kh * kw * c_in,
            c_out,
        );
        Ok((
            Tensor::from_vec(&[oh, ow, c_out], out),
            ConvCtx {
                input: input.clone(),
            },
        ))
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, ctx: &ConvCtx, grad_out: &Tensor) -> Tensor {
        let wshape = self.weight.value.shape().to_vec();
        let (kh, kw, c_in, c_out) = (wshape[0], wshape[1], wshape[2], wshape[3]);
        let (h, w) = (ctx.input.shape()[0], ctx.input.shape()[1]);
        let (oh, ow) = self.out_dims(h, w);
        assert_eq!(grad_out.shape(), &[oh, ow, c_out]);

        let rows = oh * ow;
        let kdim = kh * kw * c_in;
        let cols = im2col(ctx.input.data(), h, w, c_in, kh, kw, self.stride, self.padding);

        for row in grad_out.data().chunks(c_out) {
            for (gb, g) in self.bias.grad.iter_mut().zip(row) {
                *gb += *g;
            }
        }
        let cols_t = transpose(&cols, rows, kdim);
        matmul_acc(
            &mut self.weight.grad,
            &cols_t,
            grad_out.data(),
            kdim,
            rows,
            c_out,
        );

        let w_t = transpose(self.weight.value.data(), kdim, c_out);
        let mut grad_cols = vec![0.0f32; rows * kdim];
        matmul_acc(&mut grad_cols, grad_out.data(), &w_t, rows, c_out, kdim);

        let grad_in = col2im(
            &grad_cols,
            h,
            w,
            c_in,
            kh,
            kw,
            self.stride,
            self.padding,
            oh,
            ow,
        );
        Tensor::from_vec(&[h, w, c_in], grad_in)
    }
}

#[allow(clippy::too_many_arguments)]
fn im2col(
    input: &[f32],
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
) -> Vec<f32> {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let kdim = kh * kw * c;
    let mut cols = vec![0.0f32; oh * ow * kdim];
    for oy in 0..oh {
        for ox in 0..ow {
            let dst = &mut cols[(oy * ow + ox) * kdim..(oy * ow + ox + 1) * kdim];
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let src = (iy as usize * w + ix as usize) * c;
                    let d = (ky * kw + kx) * c;
                    dst[d..d + c].copy_from_slice(&input[src..src + c]);
                }
            }
        }
    }
    cols
}

#[allow(clippy::too_many_arguments)]
fn col2im(
    grad_cols: &[f32],
    h: usize,
    w: usize,
    c: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    oh: usize,
    ow: usize,
) -> Vec<f32> {
    let kdim = kh * kw * c;
    let mut grad_in = vec![0.0f32; h * w * c];
    for oy in 0..oh {
        for ox in 0..ow {
            let src = &grad_cols[(oy * ow + ox) * kdim..(oy * ow + ox + 1) * kdim];
            for ky in 0..kh {
                let iy = (oy * stride + ky) as isize - pad as isize;
                if iy < 0 || iy >= h as isize {
                    continue;
                }
                for kx in 0..kw {
                    let ix = (ox * stride + kx) as isize - pad as isize;
                    if ix < 0 || ix >= w as isize {
                        continue;
                    }
                    let dst = (iy as usize * w + ix as usize) * c;
                    let s = (ky * kw + kx) * c;
                    for ci in 0..c {
                        grad_in[dst + ci] += src[s + ci];
                    }
                }
            }
        }
    }
    grad_in
}

/// Affine layer. Weight layout [d_in, d_out].
#[derive(Debug, Clone)]
pub struct Dense {
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(weight: Tensor, bias: Tensor) -> Self {
        assert_eq!(weight.shape().len(), 2);
        assert_eq!(bias.shape(), &[weight.shape()[1]]);
        Dense {
            weight: Param::new(weight),
            bias: Param::new(bias),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor, TensorError> {
        let (d_in, d_out) = (self.weight.value.shape()[0], self.weight.value.shape()[1]);
        if input.shape().len() != 2 || input.shape()[1] != d_in {
            return Err(TensorError::ShapeMismatch {
                expected: vec![input.shape().first().copied().unwrap_or(0), d_in],
                got: input.shape().to_vec(),
            });
        }
        let n = input.shape()[0];
        let mut out = vec![0.0f32; n * d_out];
        for row in out.chunks_mut(d_out) {
            row.copy_from_slice(self.bias.value.data());
        }
        matmul_acc(&mut out, input.data(), self.weight.value.data(), n, d_in, d_out);
        Ok(Tensor::from_vec(&[n, d_out], out))
    }

    /// Accumulates weight/bias gradients and returns the input gradient.
    pub fn backward(&mut self, input: &Tensor, grad_out: &Tensor) -> Tensor {
        let (d_in, d_out) = (self.weight.value.shape()[0], self.weight.value.shape()[1]);
        let n = input.shape()[0];
        assert_eq!(grad_out.shape(), &[n, d_out]);

        for row in grad_out.data().chunks(d_out) {
            for (gb, g) in self.bias.grad.iter_mut().zip(row) {
                *gb += *g;
            }
        }
        let x_t = transpose(input.data(), n, d_in);
        matmul_acc(&mut self.weight.grad, &x_t, grad_out.data(), d_in, n, d_out);

        let w_t = transpose(self.weight.value.data(), d_in, d_out);
        let mut grad_in = vec![0.0f32; n * d_in];
        matmul_acc(&mut grad_in, grad_out.data(), &w_t, n, d_out, d_in);
        Tensor::from_vec(&[n, d_in], grad_in)
    }
}

/// 2x2 max pool, stride 2. Odd trailing rows/columns pool over the cells that
/// exist (implicit -inf padding). Ties route the gradient to the first
/// maximal element in window scan order.
pub struct MaxPoolCtx {
    in_shape: [usize; 3],
    argmax: Vec<u32>,
}

pub fn maxpool2_forward(input: &Tensor) -> (Tensor, MaxPoolCtx) {
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let x = input.data();
    let mut out = vec![0.0f32; oh * ow * c];
    let mut argmax = vec![0u32; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ci in 0..c {
                let mut best = f32::NEG_INFINITY;
                let mut best_idx = 0u32;
                for dy in 0..2 {
                    let iy = oy * 2 + dy;
                    if iy >= h {
                        continue;
                    }
                    for dx in 0..2 {
                        let ix = ox * 2 + dx;
                        if ix >= w {
                            continue;
                        }
                        let idx = (iy * w + ix) * c + ci;
                        if x[idx] > best {
                            best = x[idx];
                            best_idx = idx as u32;
                        }
                    }
                }
                out[(oy * ow + ox) * c + ci] = best;
                argmax[(oy * ow + ox) * c + ci] = best_idx;
            }
        }
    }
    (
        Tensor::from_vec(&[oh, ow, c], out),
        MaxPoolCtx {
            in_shape: [h, w, c],
            argmax,
        },
    )
}

pub fn maxpool2_backward(ctx: &MaxPoolCtx, grad_out: &Tensor) -> Tensor {
    let [h, w, c] = ctx.in_shape;
    let mut grad_in = vec![0.0f32; h * w * c];
    for (i, g) in grad_out.data().iter().enumerate() {
        grad_in[ctx.argmax[i] as usize] += *g;
    }
    Tensor::from_vec(&[h, w, c], grad_in)
}

fn adaptive_window(i: usize, size: usize, target: usize) -> (usize, usize) {
    let start = i * size / target;
    let end = ((i + 1) * size).div_ceil(target);
    (start, end)
}

/// Average pool to a fixed [target, target, c] grid regardless of input
/// size. Inputs smaller than the target repeat cells across windows.
pub fn pool_adaptive_avg_forward(input: &Tensor, target: usize) -> Tensor {
    let (h, w, c) = (input.shape()[0], input.shape()[1], input.shape()[2]);
    assert!(h >= 1 && w >= 1);
    let x = input.data();
    let mut out = vec![0.0f32; target * target * c];
    for oy in 0..target {
        let (y0, y1) = adaptive_window(oy, h, target);
        for ox in 0..target {
            let (x0, x1) = adaptive_window(ox, w, target);
            let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f32;
            for ci in 0..c {
                let mut acc = 0.0f32;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        acc += x[(iy * w + ix) * c + ci];
                    }
                }
                out[(oy * target + ox) * c + ci] = acc * inv;
            }
        }
    }
    Tensor::from_vec(&[target, target, c], out)
}

pub fn pool_adaptive_avg_backward(
    in_shape: &[usize],
    target: usize,
    grad_out: &Tensor,
) -> Tensor {
    let (h, w, c) = (in_shape[0], in_shape[1], in_shape[2]);
    let g = grad_out.data();
    let mut grad_in = vec![0.0f32; h * w * c];
    for oy in 0..target {
        let (y0, y1) = adaptive_window(oy, h, target);
        for ox in 0..target {
            let (x0, x1) = adaptive_window(ox, w, target);
            let inv = 1.0 / ((y1 - y0) * (x1 - x0)) as f32;
            for ci in 0..c {
                let gv = g[(oy * target + ox) * c + ci] * inv;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        grad_in[(iy * w + ix) * c + ci] += gv;
                    }
                }
            }
        }
    }
    Tensor::from_vec(&[h, w, c], grad_in)
}

pub fn relu(xs: &mut [f32]) {
    for x in xs {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
}

/// Backward through relu given the forward *output*.
pub fn relu_backward(out: &[f32], grad_out: &mut [f32]) {
    for (g, o) in grad_out.iter_mut().zip(out) {
        if *o <= 0.0 {
            *g = 0.0;
        }
    }
}

pub fn tanh(xs: &mut [f32]) {
    for x in xs {
        *x = x.tanh();
    }
}

pub fn tanh_backward(out: &[f32], grad_out: &mut [f32]) {
    for (g, o) in grad_out.iter_mut().zip(out) {
        *g *= 1.0 - o * o;
    }
}

pub fn sigmoid(xs: &mut [f32]) {
    for x in xs {
        *x = 1.0 / (1.0 + (-*x).exp());
    }
}

pub fn sigmoid_backward(out: &[f32], grad_out: &mut [f32]) {
    for (g, o) in grad_out.iter_mut().zip(out) {
        *g *= *o * (1.0 - *o);
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(xs: &[f32]) -> Vec<f32> {
    let max = xs.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let mut out: Vec<f32> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f32 = out.iter().sum();
    let inv = 1.0 / sum;
    for v in &mut out {
        *v *= inv;
    }
    out
}

pub fn softmax_backward(out: &[f32], grad_out: &[f32]) -> Vec<f32> {
    let dot: f32 = out.iter().zip(grad_out).map(|(o, g)| o * g).sum();
    out.iter()
        .zip(grad_out)
        .map(|(o, g)| o * (g - dot))
        .collect()
}

/// Fused softmax + negative log likelihood for one logit vector.
/// Returns (loss, probabilities, gradient w.r.t. logits).
pub fn cross_entropy_logits(logits: &[f32], target: usize) -> (f32, Vec<f32>, Vec<f32>) {
    assert!(target < logits.len());
    let probs = softmax(logits);
    let loss = -(probs[target].max(f32::MIN_POSITIVE)).ln();
    let mut grad = probs.clone();
    grad[target] -= 1.0;
    (loss, probs, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_tensor(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
        let len = shape.iter().product();
        Tensor::from_vec(
            shape,
            (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(),
        )
    }

    /// Independent 6-loop convolution used to pin the im2col path.
    fn naive_conv(
        input: &Tensor,
        weight: &Tensor,
        bias: &[f32],
        stride: usize,
        pad: usize,
    ) -> Vec<f64> {
        let (h, w, c_in) = (input.shape()[0], input.shape()[1], input.shape()[2]);
        let (kh, kw, _, c_out) = (
            weight.shape()[0],
            weight.shape()[1],
            weight.shape()[2],
            weight.shape()[3],
        );
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0f64; oh * ow * c_out];
        for oy in 0..oh {
            for ox in 0..ow {
                for co in 0..c_out {
                    let mut acc = bias[co] as f64;
                    for ky in 0..kh {
                        for kx in 0..kw {
                            for ci in 0..c_in {
                                let iy = (oy * stride + ky) as isize - pad as isize;
                                let ix = (ox * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xv =
                                    input.data()[(iy as usize * w + ix as usize) * c_in + ci];
                                let wv =
                                    weight.data()[((ky * kw + kx) * c_in + ci) * c_out + co];
                                acc += xv as f64 * wv as f64;
                            }
                        }
                    }
                    out[(oy * ow + ox) * c_out + co] = acc;
                }
            }
        }
        out
    }

    #[test]
    fn conv_all_ones_sums_kernel() {
        let input = Tensor::from_vec(&[3, 3, 1], vec![1.0; 9]);
        let conv = Conv2d::new(
            Tensor::from_vec(&[3, 3, 1, 1], vec![1.0; 9]),
            Tensor::zeros(&[1]),
            1,
            0,
        );
        let (out, _) = conv.forward(&input).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1]);
        assert!((out.data()[0] - 9.0).abs() < 1e-6);
    }

    #[test]
    fn conv_identity_kernel_passes_input_through() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let input = rand_tensor(&[5, 4, 1], &mut rng);
        let conv = Conv2d::new(
            Tensor::from_vec(&[1, 1, 1, 1], vec![1.0]),
            Tensor::zeros(&[1]),
            1,
            0,
        );
        let (out, _) = conv.forward(&input).unwrap();
        assert_eq!(out.data(), input.data());
    }

    #[test]
    fn conv_matches_naive_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(stride, pad) in &[(1usize, 0usize), (1, 1), (2, 1)] {
            let input = rand_tensor(&[5, 5, 2], &mut rng);
            let weight = rand_tensor(&[3, 3, 2, 3], &mut rng);
            let bias = rand_tensor(&[3], &mut rng);
            let conv = Conv2d::new(weight.clone(), bias.clone(), stride, pad);
            let (out, _) = conv.forward(&input).unwrap();
            let want = naive_conv(&input, &weight, bias.data(), stride, pad);
            assert_eq!(out.len(), want.len());
            for (got, want) in out.data().iter().zip(&want) {
                assert!((*got as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn conv_rejects_wrong_channel_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let input = rand_tensor(&[5, 5, 3], &mut rng);
        let conv = Conv2d::new(rand_tensor(&[3, 3, 2, 4], &mut rng), Tensor::zeros(&[4]), 1, 1);
        assert!(matches!(
            conv.forward(&input),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn maxpool_basic_and_tie_rule() {
        let input = Tensor::from_vec(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let (out, ctx) = maxpool2_forward(&input);
        assert_eq!(out.data(), &[4.0]);
        let grad = maxpool2_backward(&ctx, &Tensor::from_vec(&[1, 1, 1], vec![1.0]));
        assert_eq!(grad.data(), &[0.0, 0.0, 0.0, 1.0]);

        // Tie: constant window routes gradient to the first cell scanned.
        let input = Tensor::from_vec(&[2, 2, 1], vec![5.0; 4]);
        let (out, ctx) = maxpool2_forward(&input);
        assert_eq!(out.data(), &[5.0]);
        let grad = maxpool2_backward(&ctx, &Tensor::from_vec(&[1, 1, 1], vec![1.0]));
        assert_eq!(grad.data(), &[1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn maxpool_matches_window_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let input = rand_tensor(&[4, 4, 2], &mut rng);
        let (out, _) = maxpool2_forward(&input);
        for oy in 0..2 {
            for ox in 0..2 {
                for c in 0..2 {
                    let mut want = f32::NEG_INFINITY;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            want = want
                                .max(input.data()[((oy * 2 + dy) * 4 + ox * 2 + dx) * 2 + c]);
                        }
                    }
                    assert_eq!(out.data()[(oy * 2 + ox) * 2 + c], want);
                }
            }
        }
    }

    #[test]
    fn maxpool_odd_dims_pools_existing_cells() {
        let input = Tensor::from_vec(&[3, 3, 1], (1..=9).map(|v| v as f32).collect());
        let (out, _) = maxpool2_forward(&input);
        assert_eq!(out.shape(), &[2, 2, 1]);
        assert_eq!(out.data(), &[5.0, 6.0, 8.0, 9.0]);
    }

    #[test]
    fn dense_identity_and_bias_broadcast() {
        let ident = Tensor::from_vec(&[3, 3], vec![1., 0., 0., 0., 1., 0., 0., 0., 1.]);
        let layer = Dense::new(ident, Tensor::zeros(&[3]));
        let x = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]);
        assert_eq!(layer.forward(&x).unwrap().data(), x.data());

        let layer = Dense::new(Tensor::zeros(&[3, 2]), Tensor::from_vec(&[2], vec![0.5, -1.0]));
        let out = layer.forward(&x).unwrap();
        assert_eq!(out.data(), &[0.5, -1.0, 0.5, -1.0]);
    }

    #[test]
    fn dense_matches_naive_matmul_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_tensor(&[2, 3], &mut rng);
        let w = rand_tensor(&[3, 4], &mut rng);
        let b = rand_tensor(&[4], &mut rng);
        let layer = Dense::new(w.clone(), b.clone());
        let out = layer.forward(&x).unwrap();
        for i in 0..2 {
            for j in 0..4 {
                let mut want = b.data()[j] as f64;
                for k in 0..3 {
                    want += x.data()[i * 3 + k] as f64 * w.data()[k * 4 + j] as f64;
                }
                assert!((out.data()[i * 4 + j] as f64 - want).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn dense_rejects_wrong_input_width() {
        let layer = Dense::new(Tensor::zeros(&[3, 2]), Tensor::zeros(&[2]));
        let x = Tensor::zeros(&[1, 4]);
        assert!(matches!(
            layer.forward(&x),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn activation_fixed_points() {
        let mut xs = vec![-1.0f32, 0.0, 2.0];
        relu(&mut xs);
        assert_eq!(xs, vec![0.0, 0.0, 2.0]);
        let mut xs = vec![0.0f32];
        tanh(&mut xs);
        assert_eq!(xs[0], 0.0);
        let mut xs = vec![0.0f32];
        sigmoid(&mut xs);
        assert_eq!(xs[0], 0.5);
    }

    #[test]
    fn softmax_symmetry_and_stability() {
        let out = softmax(&[0.0, 0.0]);
        assert_eq!(out, vec![0.5, 0.5]);

        let out = softmax(&[1000.0, 0.0]);
        assert!(out[0] > 0.999 && out[0].is_finite());
        assert!(out[1] >= 0.0);

        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let xs: Vec<f32> = (0..7).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let out = softmax(&xs);
        // Direct exp/sum oracle in double precision.
        let sum: f64 = xs.iter().map(|x| (*x as f64).exp()).sum();
        for (o, x) in out.iter().zip(&xs) {
            let want = (*x as f64).exp() / sum;
            assert!((*o as f64 - want).abs() < 1e-6);
        }
        let total: f32 = out.iter().sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn softmax_is_permutation_equivariant() {
        let xs = [0.3f32, -1.2, 2.0, 0.0, 0.9];
        let out = softmax(&xs);
        let perm = [4usize, 0, 3, 1, 2];
        let xs_p: Vec<f32> = perm.iter().map(|&i| xs[i]).collect();
        let out_p = softmax(&xs_p);
        for (j, &i) in perm.iter().enumerate() {
            assert!((out_p[j] - out[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn cross_entropy_uniform_and_confident() {
        let (loss, _, _) = cross_entropy_logits(&[0.0; 9], 3);
        assert!((loss as f64 - (9.0f64).ln()).abs() < 1e-6);

        let mut logits = [0.0f32; 4];
        logits[2] = 50.0;
        let (loss, _, _) = cross_entropy_logits(&logits, 2);
        assert!(loss < 1e-6);
    }

    #[test]
    fn cross_entropy_matches_double_precision_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let logits: Vec<f32> = (0..6).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let target = 4;
        let (loss, probs, grad) = cross_entropy_logits(&logits, target);
        let sum: f64 = logits.iter().map(|x| (*x as f64).exp()).sum();
        let want_loss = -((logits[target] as f64).exp() / sum).ln();
        assert!((loss as f64 - want_loss).abs() < 1e-6);
        for (i, g) in grad.iter().enumerate() {
            let p = (logits[i] as f64).exp() / sum;
            let want = p - if i == target { 1.0 } else { 0.0 };
            assert!((*g as f64 - want).abs() < 1e-6);
            assert!((probs[i] as f64 - p).abs() < 1e-6);
        }
    }

    #[test]
    fn conv_and_dense_are_linear_in_input() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let conv = Conv2d::new(
            rand_tensor(&[3, 3, 2, 3], &mut rng),
            Tensor::zeros(&[3]),
            1,
            1,
        );
        let x = rand_tensor(&[6, 6, 2], &mut rng);
        let y = rand_tensor(&[6, 6, 2], &mut rng);
        let (a, b) = (0.7f32, -1.3f32);
        let combo = Tensor::from_vec(
            &[6, 6, 2],
            x.data()
                .iter()
                .zip(y.data())
                .map(|(xv, yv)| a * xv + b * yv)
                .collect(),
        );
        let (fx, _) = conv.forward(&x).unwrap();
        let (fy, _) = conv.forward(&y).unwrap();
        let (fc, _) = conv.forward(&combo).unwrap();
        for ((fxv, fyv), fcv) in fx.data().iter().zip(fy.data()).zip(fc.data()) {
            assert!((a * fxv + b * fyv - fcv).abs() < 1e-5);
        }
    }

    #[test]
    fn adaptive_avg_pool_averages_windows() {
        // 4x4 -> 2x2: each output is the mean of a 2x2 block.
        let input = Tensor::from_vec(&[4, 4, 1], (0..16).map(|v| v as f32).collect());
        let out = pool_adaptive_avg_forward(&input, 2);
        assert_eq!(out.data(), &[2.5, 4.5, 10.5, 12.5]);

        // Identity when input already matches the target.
        let input = Tensor::from_vec(&[2, 2, 1], vec![1.0, 2.0, 3.0, 4.0]);
        let out = pool_adaptive_avg_forward(&input, 2);
        assert_eq!(out.data(), &[1.0, 2.0, 3.0, 4.0]);
    }
}
