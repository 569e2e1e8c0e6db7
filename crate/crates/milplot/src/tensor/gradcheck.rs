//! Central finite-difference verification of every analytic backward pass.
//!
//! The difference quotients are evaluated on 64-bit re-implementations of the
//! forward ops, so the check also pins the f32 kernels against an independent
//! double-precision path. Inputs near relu/maxpool kinks are nudged off the
//! non-differentiable set before checking.

use super::ops::{cross_entropy_logits, maxpool2_backward, maxpool2_forward, softmax,
    softmax_backward, Conv2d, Dense};
use super::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Central finite differences of a scalar-valued function, in f64.
pub fn central_diff(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], step: f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    let mut probe = x.to_vec();
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Largest elementwise relative error between an analytic gradient and a
/// finite-difference estimate. Magnitudes below 1e-4 are compared on that
/// absolute scale instead.
pub fn max_rel_error(analytic: &[f32], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| {
            let a = *a as f64;
            (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
        })
        .fold(0.0, f64::max)
}

pub const FD_STEP: f64 = 1e-3;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn rand_vec(n: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

fn to64(xs: &[f32]) -> Vec<f64> {
    xs.iter().map(|v| *v as f64).collect()
}

// ---- f64 reference forwards ------------------------------------------------

#[allow(clippy::too_many_arguments)]
pub(crate) fn conv2d_f64(
    input: &[f64],
    h: usize,
    w: usize,
    c_in: usize,
    weight: &[f64],
    kh: usize,
    kw: usize,
    c_out: usize,
    bias: &[f64],
    stride: usize,
    pad: usize,
) -> Vec<f64> {
    let oh = (h + 2 * pad - kh) / stride + 1;
    let ow = (w + 2 * pad - kw) / stride + 1;
    let mut out = vec![0.0f64; oh * ow * c_out];
    for oy in 0..oh {
        for ox in 0..ow {
            for co in 0..c_out {
                let mut acc = bias[co];
                for ky in 0..kh {
                    for kx in 0..kw {
                        let iy = (oy * stride + ky) as isize - pad as isize;
                        let ix = (ox * stride + kx) as isize - pad as isize;
                        if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                            continue;
                        }
                        for ci in 0..c_in {
                            acc += input[(iy as usize * w + ix as usize) * c_in + ci]
                                * weight[((ky * kw + kx) * c_in + ci) * c_out + co];
                        }
                    }
                }
                out[(oy * ow + ox) * c_out + co] = acc;
            }
        }
    }
    out
}

pub(crate) fn dense_f64(
    x: &[f64],
    w: &[f64],
    b: &[f64],
    n: usize,
    d_in: usize,
    d_out: usize,
) -> Vec<f64> {
    let mut out = vec![0.0f64; n * d_out];
    for i in 0..n {
        for j in 0..d_out {
            let mut acc = b[j];
            for k in 0..d_in {
                acc += x[i * d_in + k] * w[k * d_out + j];
            }
            out[i * d_out + j] = acc;
        }
    }
    out
}

fn maxpool2_f64(x: &[f64], h: usize, w: usize, c: usize) -> Vec<f64> {
    let (oh, ow) = (h.div_ceil(2), w.div_ceil(2));
    let mut out = vec![0.0f64; oh * ow * c];
    for oy in 0..oh {
        for ox in 0..ow {
            for ci in 0..c {
                let mut best = f64::NEG_INFINITY;
                for dy in 0..2 {
                    for dx in 0..2 {
                        let (iy, ix) = (oy * 2 + dy, ox * 2 + dx);
                        if iy < h && ix < w {
                            best = best.max(x[(iy * w + ix) * c + ci]);
                        }
                    }
                }
                out[(oy * ow + ox) * c + ci] = best;
            }
        }
    }
    out
}

pub(crate) fn softmax_f64(xs: &[f64]) -> Vec<f64> {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = xs.iter().map(|x| (x - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

// ---- per-op checks -----------------------------------------------------------

/// Checks conv2d gradients w.r.t. input, weight, and bias at once.
/// Returns the max relative error against central differences.
pub fn check_conv2d(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (h, w, c_in, kh, kw, c_out) = (5, 5, 2, 3, 3, 3);
    let (stride, pad) = if seed % 2 == 0 { (1, 1) } else { (2, 1) };
    let input = rand_vec(h * w * c_in, &mut r);
    let weight = rand_vec(kh * kw * c_in * c_out, &mut r);
    let bias = rand_vec(c_out, &mut r);
    let mut conv = Conv2d::new(
        Tensor::from_vec(&[kh, kw, c_in, c_out], weight.clone()),
        Tensor::from_vec(&[c_out], bias.clone()),
        stride,
        pad,
    );
    let x = Tensor::from_vec(&[h, w, c_in], input.clone());
    let (out, ctx) = conv.forward(&x).unwrap();
    let coeff = rand_vec(out.len(), &mut r);

    let grad_out = Tensor::from_vec(out.shape(), coeff.clone());
    let grad_in = conv.backward(&ctx, &grad_out);
    let mut analytic = grad_in.data().to_vec();
    analytic.extend_from_slice(&conv.weight.grad);
    analytic.extend_from_slice(&conv.bias.grad);

    let mut packed = to64(&input);
    packed.extend(to64(&weight));
    packed.extend(to64(&bias));
    let coeff64 = to64(&coeff);
    let mut f = |p: &[f64]| {
        let (inp, rest) = p.split_at(h * w * c_in);
        let (wt, bs) = rest.split_at(kh * kw * c_in * c_out);
        let out = conv2d_f64(inp, h, w, c_in, wt, kh, kw, c_out, bs, stride, pad);
        out.iter().zip(&coeff64).map(|(o, c)| o * c).sum()
    };
    let numeric = central_diff(&mut f, &packed, FD_STEP);
    max_rel_error(&analytic, &numeric)
}

pub fn check_dense(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (n, d_in, d_out) = (2, 5, 4);
    let input = rand_vec(n * d_in, &mut r);
    let weight = rand_vec(d_in * d_out, &mut r);
    let bias = rand_vec(d_out, &mut r);
    let mut layer = Dense::new(
        Tensor::from_vec(&[d_in, d_out], weight.clone()),
        Tensor::from_vec(&[d_out], bias.clone()),
    );
    let x = Tensor::from_vec(&[n, d_in], input.clone());
    let out = layer.forward(&x).unwrap();
    let coeff = rand_vec(out.len(), &mut r);

    let grad_in = layer.backward(&x, &Tensor::from_vec(out.shape(), coeff.clone()));
    let mut analytic = grad_in.data().to_vec();
    analytic.extend_from_slice(&layer.weight.grad);
    analytic.extend_from_slice(&layer.bias.grad);

    let mut packed = to64(&input);
    packed.extend(to64(&weight));
    packed.extend(to64(&bias));
    let coeff64 = to64(&coeff);
    let mut f = |p: &[f64]| {
        let (inp, rest) = p.split_at(n * d_in);
        let (wt, bs) = rest.split_at(d_in * d_out);
        let out = dense_f64(inp, wt, bs, n, d_in, d_out);
        out.iter().zip(&coeff64).map(|(o, c)| o * c).sum()
    };
    let numeric = central_diff(&mut f, &packed, FD_STEP);
    max_rel_error(&analytic, &numeric)
}

pub fn check_maxpool2(seed: u64) -> f64 {
    let mut r = rng(seed);
    let (h, w, c) = (4, 5, 2);
    // Values spaced well apart so no FD probe crosses an argmax boundary.
    let mut order: Vec<usize> = (0..h * w * c).collect();
    for i in (1..order.len()).rev() {
        order.swap(i, r.gen_range(0..=i));
    }
    let input: Vec<f32> = order
        .iter()
        .map(|&o| o as f32 * 0.1 + r.gen_range(-0.01..0.01))
        .collect();
    let x = Tensor::from_vec(&[h, w, c], input.clone());
    let (out, ctx) = maxpool2_forward(&x);
    let coeff = rand_vec(out.len(), &mut r);
    let grad_in = maxpool2_backward(&ctx, &Tensor::from_vec(out.shape(), coeff.clone()));

    let coeff64 = to64(&coeff);
    let mut f = |p: &[f64]| {
        let out = maxpool2_f64(p, h, w, c);
        out.iter().zip(&coeff64).map(|(o, c)| o * c).sum()
    };
    let numeric = central_diff(&mut f, &to64(&input), FD_STEP);
    max_rel_error(grad_in.data(), &numeric)
}

pub fn check_relu(seed: u64) -> f64 {
    let mut r = rng(seed);
    // Nudge values away from the kink at zero.
    let input: Vec<f32> = (0..12)
        .map(|_| {
            let v: f32 = r.gen_range(-1.0..1.0);
            v + 0.05 * v.signum()
        })
        .collect();
    let mut out = input.clone();
    super::ops::relu(&mut out);
    let coeff = rand_vec(out.len(), &mut r);
    let mut grad = coeff.clone();
    super::ops::relu_backward(&out, &mut grad);

    let coeff64 = to64(&coeff);
    let mut f = |p: &[f64]| {
        p.iter()
            .zip(&coeff64)
            .map(|(x, c)| x.max(0.0) * c)
            .sum()
    };
    let numeric = central_diff(&mut f, &to64(&input), FD_STEP);
    max_rel_error(&grad, &numeric)
}

pub fn check_tanh(seed: u64) -> f64 {
    let mut r = rng(seed);
    let input = rand_vec(12, &mut r);
    let mut out = input.clone();
    super::ops::tanh(&mut out);
    let coeff = rand_vec(out.len(), &mut r);
    let mut grad = coeff.clone();
    super::ops::tanh_backward(&out, &mut grad);

    let coeff64 = to64(&coeff);
    let mut f = |p: &[f64]| p.iter().zip(&coeff64).map(|(x, c)| x.tanh() * c).sum();
    let numeric = central_diff(&mut f, &to64(&input), FD_STEP);
    max_rel_error(&grad, &numeric)
}

pub fn check_sigmoid(seed: u64) -> f64 {
    let mut r = rng(seed);
    let input = rand_vec(12, &mut r);
    let mut out = input.clone();
    super::ops::sigmoid(&mut out);
    let coeff = rand_vec(out.len(), &mut r);
    let mut grad = coeff.clone();
    super::ops::sigmoid_backward(&out, &mut grad);

    let coeff64 = to64(&coeff);
    let mut f = |p: &[f64]| {
        p.iter()
            .zip(&coeff64)
            .map(|(x, c)| 1.0 / (1.0 + (-x).exp()) * c)
            .sum()
    };
    let numeric = central_diff(&mut f, &to64(&input), FD_STEP);
    max_rel_error(&grad, &numeric)
}

pub fn check_softmax(seed: u64) -> f64 {
    let mut r = rng(seed);
    let input = rand_vec(7, &mut r);
    let out = softmax(&input);
    let coeff = rand_vec(out.len(), &mut r);
    let grad = softmax_backward(&out, &coeff);

    let coeff64 = to64(&coeff);
    let mut f = |p: &[f64]| {
        softmax_f64(p)
            .iter()
            .zip(&coeff64)
            .map(|(o, c)| o * c)
            .sum()
    };
    let numeric = central_diff(&mut f, &to64(&input), FD_STEP);
    max_rel_error(&grad, &numeric)
}

pub fn check_cross_entropy(seed: u64) -> f64 {
    let mut r = rng(seed);
    let logits = rand_vec(6, &mut r);
    let target = r.gen_range(0..6);
    let (_, _, grad) = cross_entropy_logits(&logits, target);

    let mut f = |p: &[f64]| -softmax_f64(p)[target].ln();
    let numeric = central_diff(&mut f, &to64(&logits), FD_STEP);
    max_rel_error(&grad, &numeric)
}
