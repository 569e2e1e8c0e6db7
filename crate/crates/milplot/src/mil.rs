//! Embedding-based MIL classifier: per-instance CNN embedder, (gated)
//! attention scoring, top-k selection, weighted-average aggregation, and a
//! bag-level classifier head.

use crate::byteplot::Bag;
use crate::tensor::{
    kaiming_uniform, maxpool2_backward, maxpool2_forward, pool_adaptive_avg_backward,
    pool_adaptive_avg_forward, relu, relu_backward, sigmoid, sigmoid_backward, softmax,
    softmax_backward, tanh, tanh_backward, xavier_uniform, Conv2d, ConvCtx, Dense, MaxPoolCtx,
    Param, Tensor,
};
use rand::Rng;
use rayon::prelude::*;
use std::fmt::Write as _;

/// Instance feature dimension.
pub const EMBED_DIM: usize = 512;
/// Hidden dimension of the attention scorer.
pub const ATTENTION_DIM: usize = 128;
/// Spatial grid the embedder average-pools to before its dense layer.
const POOL_GRID: usize = 4;
/// Bags at most this large keep their forward activations for the backward
/// pass; larger bags re-run the embedder on the selected instances instead.
const CTX_CACHE_MAX: usize = 16;

/// Per-instance CNN: three 3x3 conv blocks (the first two at stride 2)
/// pooled to a fixed grid, then a dense projection to [`EMBED_DIM`]
/// features.
#[derive(Debug, Clone)]
pub struct Embedder {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub conv3: Conv2d,
    pub fc: Dense,
}

pub struct EmbedCtx {
    conv1: ConvCtx,
    relu1: Tensor,
    pool1: MaxPoolCtx,
    conv2: ConvCtx,
    relu2: Tensor,
    pool2: MaxPoolCtx,
    conv3: ConvCtx,
    relu3: Tensor,
    fc_in: Tensor,
}

impl Embedder {
    pub fn init(rng: &mut impl Rng) -> Self {
        let (c1, c2, c3) = (32, 64, 64);
        let fc_in = POOL_GRID * POOL_GRID * c3;
        Embedder {
            conv1: Conv2d::new(
                kaiming_uniform(&[3, 3, 1, c1], 9, rng),
                Tensor::zeros(&[c1]),
                2,
                1,
            ),
            conv2: Conv2d::new(
                kaiming_uniform(&[3, 3, c1, c2], 9 * c1, rng),
                Tensor::zeros(&[c2]),
                2,
                1,
            ),
            conv3: Conv2d::new(
                kaiming_uniform(&[3, 3, c2, c3], 9 * c2, rng),
                Tensor::zeros(&[c3]),
                1,
                1,
            ),
            fc: Dense::new(
                kaiming_uniform(&[fc_in, EMBED_DIM], fc_in, rng),
                Tensor::zeros(&[EMBED_DIM]),
            ),
        }
    }

    /// Embed one [p, p] unit-interval patch.
    pub fn forward_instance(&self, patch: &Tensor) -> (Vec<f32>, EmbedCtx) {
        let p = patch.shape()[0];
        let input = patch.clone().reshaped(&[p, patch.shape()[1], 1]);

        let (mut out1, conv1) = self.conv1.forward(&input).expect("embedder conv1 shapes");
        relu(out1.data_mut());
        let relu1 = out1;
        let (pooled1, pool1) = maxpool2_forward(&relu1);

        let (mut out2, conv2) = self.conv2.forward(&pooled1).expect("embedder conv2 shapes");
        relu(out2.data_mut());
        let relu2 = out2;
        let (pooled2, pool2) = maxpool2_forward(&relu2);

        let (mut out3, conv3) = self.conv3.forward(&pooled2).expect("embedder conv3 shapes");
        relu(out3.data_mut());
        let relu3 = out3;

        let avg = pool_adaptive_avg_forward(&relu3, POOL_GRID);
        let fc_in = avg.reshaped(&[1, POOL_GRID * POOL_GRID * self.conv3.weight.value.shape()[3]]);
        let emb = self.fc.forward(&fc_in).expect("embedder fc shapes");

        (
            emb.data().to_vec(),
            EmbedCtx {
                conv1,
                relu1,
                pool1,
                conv2,
                relu2,
                pool2,
                conv3,
                relu3,
                fc_in,
            },
        )
    }

    /// Accumulate parameter gradients for one instance given the gradient of
    /// its embedding.
    pub fn backward_instance(&mut self, ctx: &EmbedCtx, d_emb: &[f32]) {
        let d_emb = Tensor::from_vec(&[1, EMBED_DIM], d_emb.to_vec());
        let d_fc_in = self.fc.backward(&ctx.fc_in, &d_emb);
        let c3 = self.conv3.weight.value.shape()[3];
        let d_avg = d_fc_in.reshaped(&[POOL_GRID, POOL_GRID, c3]);

        let mut d_relu3 = pool_adaptive_avg_backward(ctx.relu3.shape(), POOL_GRID, &d_avg);
        relu_backward(ctx.relu3.data(), d_relu3.data_mut());
        let d_pool2 = self.conv3.backward(&ctx.conv3, &d_relu3);

        let mut d_relu2 = maxpool2_backward(&ctx.pool2, &d_pool2);
        relu_backward(ctx.relu2.data(), d_relu2.data_mut());
        let d_pool1 = self.conv2.backward(&ctx.conv2, &d_relu2);

        let mut d_relu1 = maxpool2_backward(&ctx.pool1, &d_pool1);
        relu_backward(ctx.relu1.data(), d_relu1.data_mut());
        let _ = self.conv1.backward(&ctx.conv1, &d_relu1);
    }
}

/// Embed every instance of a bag in consecutive groups of at most
/// `sub_batch`, bounding peak activation memory to one group. The result is
/// identical to a single pass over all instances.
pub fn embed_instances(
    bag: &Bag,
    embedder: &Embedder,
    sub_batch: usize,
    parallel: bool,
) -> Tensor {
    assert!(sub_batch >= 1);
    let k = bag.len();
    let mut features = vec![0.0f32; k * EMBED_DIM];
    for (g, group) in bag.instances.chunks(sub_batch).enumerate() {
        let dst = &mut features[g * sub_batch * EMBED_DIM..][..group.len() * EMBED_DIM];
        if parallel {
            group
                .par_iter()
                .zip(dst.par_chunks_mut(EMBED_DIM))
                .for_each(|(patch, out)| {
                    out.copy_from_slice(&embedder.forward_instance(patch).0);
                });
        } else {
            for (patch, out) in group.iter().zip(dst.chunks_mut(EMBED_DIM)) {
                out.copy_from_slice(&embedder.forward_instance(patch).0);
            }
        }
    }
    Tensor::from_vec(&[k, EMBED_DIM], features)
}

/// Attention scorer over instance features. Non-gated heads score
/// w . tanh(V f); gated heads score w . (tanh(V f) * sigmoid(U f)).
/// V and U are stored [feat_dim, attn_dim], w is [attn_dim].
#[derive(Debug, Clone)]
pub struct AttentionHead {
    pub v: Param,
    pub w: Param,
    pub gate: Option<Param>,
}

pub struct AttnCtx {
    /// tanh(F V), [k, attn_dim]
    t: Vec<f32>,
    /// sigmoid(F U) for gated heads, [k, attn_dim]
    g: Option<Vec<f32>>,
}

impl AttentionHead {
    pub fn init(feat_dim: usize, attn_dim: usize, gated: bool, rng: &mut impl Rng) -> Self {
        AttentionHead {
            v: Param::new(xavier_uniform(&[feat_dim, attn_dim], feat_dim, attn_dim, rng)),
            w: Param::new(xavier_uniform(&[attn_dim], attn_dim, 1, rng)),
            gate: gated
                .then(|| Param::new(xavier_uniform(&[feat_dim, attn_dim], feat_dim, attn_dim, rng))),
        }
    }

    pub fn feat_dim(&self) -> usize {
        self.v.value.shape()[0]
    }

    pub fn attn_dim(&self) -> usize {
        self.v.value.shape()[1]
    }

    pub fn is_gated(&self) -> bool {
        self.gate.is_some()
    }

    /// Raw (pre-softmax) attention scores for [k, feat_dim] features.
    pub fn scores(&self, features: &Tensor) -> (Vec<f32>, AttnCtx) {
        let k = features.shape()[0];
        let (fd, ad) = (self.feat_dim(), self.attn_dim());
        assert_eq!(features.shape()[1], fd);

        let mut t = vec![0.0f32; k * ad];
        crate::tensor::matmul_acc(&mut t, features.data(), self.v.value.data(), k, fd, ad);
        tanh(&mut t);

        let g = self.gate.as_ref().map(|u| {
            let mut g = vec![0.0f32; k * ad];
            crate::tensor::matmul_acc(&mut g, features.data(), u.value.data(), k, fd, ad);
            sigmoid(&mut g);
            g
        });

        let w = self.w.value.data();
        let scores = (0..k)
            .map(|i| {
                let trow = &t[i * ad..(i + 1) * ad];
                match &g {
                    Some(g) => {
                        let grow = &g[i * ad..(i + 1) * ad];
                        trow.iter()
                            .zip(grow)
                            .zip(w)
                            .map(|((tv, gv), wv)| tv * gv * wv)
                            .sum()
                    }
                    None => trow.iter().zip(w).map(|(tv, wv)| tv * wv).sum(),
                }
            })
            .collect();
        (scores, AttnCtx { t, g })
    }

    /// Accumulate V/w/U gradients and return the feature gradient. Rows with
    /// zero score gradient contribute nothing.
    pub fn scores_backward(
        &mut self,
        features: &Tensor,
        ctx: &AttnCtx,
        d_scores: &[f32],
    ) -> Tensor {
        let k = features.shape()[0];
        let (fd, ad) = (self.feat_dim(), self.attn_dim());
        assert_eq!(d_scores.len(), k);
        let w = self.w.value.data().to_vec();

        let mut d_zv = vec![0.0f32; k * ad];
        let mut d_zu = self.gate.as_ref().map(|_| vec![0.0f32; k * ad]);
        for i in 0..k {
            let ds = d_scores[i];
            if ds == 0.0 {
                continue;
            }
            let trow = &ctx.t[i * ad..(i + 1) * ad];
            match (&ctx.g, &mut d_zu) {
                (Some(g), Some(d_zu)) => {
                    let grow = &g[i * ad..(i + 1) * ad];
                    for j in 0..ad {
                        // w gradient through the gated product t*g.
                        self.w.grad[j] += ds * trow[j] * grow[j];
                        d_zv[i * ad + j] = ds * w[j] * grow[j];
                        d_zu[i * ad + j] = ds * w[j] * trow[j];
                    }
                }
                _ => {
                    for j in 0..ad {
                        self.w.grad[j] += ds * trow[j];
                        d_zv[i * ad + j] = ds * w[j];
                    }
                }
            }
        }
        tanh_backward(&ctx.t, &mut d_zv);
        if let (Some(g), Some(d_zu)) = (&ctx.g, &mut d_zu) {
            sigmoid_backward(g, d_zu);
        }

        // dV += F^T dZv, dF = dZv V^T (plus the gate path).
        let f_t = crate::tensor::transpose(features.data(), k, fd);
        crate::tensor::matmul_acc(&mut self.v.grad, &f_t, &d_zv, fd, k, ad);
        let v_t = crate::tensor::transpose(self.v.value.data(), fd, ad);
        let mut d_feat = vec![0.0f32; k * fd];
        crate::tensor::matmul_acc(&mut d_feat, &d_zv, &v_t, k, ad, fd);
        if let (Some(u), Some(d_zu)) = (&mut self.gate, &d_zu) {
            crate::tensor::matmul_acc(&mut u.grad, &f_t, d_zu, fd, k, ad);
            let u_t = crate::tensor::transpose(u.value.data(), fd, ad);
            crate::tensor::matmul_acc(&mut d_feat, d_zu, &u_t, k, ad, fd);
        }
        Tensor::from_vec(&[k, fd], d_feat)
    }
}

/// Softmax attention weights over a bag's instance features: in [0,1],
/// summing to one regardless of bag size.
pub fn attention_weights(features: &Tensor, head: &AttentionHead) -> Vec<f32> {
    let (scores, _) = head.scores(features);
    softmax(&scores)
}

/// Indices of the `k_top` largest weights (all indices when the bag is
/// smaller). Ties break toward rows earlier in the bag. Sorted ascending.
pub fn topk_select(weights: &[f32], k_top: usize) -> Vec<usize> {
    let take = k_top.min(weights.len());
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        weights[b]
            .partial_cmp(&weights[a])
            .unwrap()
            .then(a.cmp(&b))
    });
    let mut selected = order[..take].to_vec();
    selected.sort_unstable();
    selected
}

/// Weighted average of the selected instance features. Weights are the
/// softmax of the selected raw scores, which equals renormalizing the full
/// softmax weights over the selection; instances outside `selected` cannot
/// influence the result.
pub fn aggregate(features: &Tensor, scores: &[f32], selected: &[usize]) -> Vec<f32> {
    assert!(!selected.is_empty());
    let dim = features.shape()[1];
    let sel_scores: Vec<f32> = selected.iter().map(|&i| scores[i]).collect();
    let weights = softmax(&sel_scores);
    let mut out = vec![0.0f32; dim];
    for (&idx, &a) in selected.iter().zip(&weights) {
        let row = &features.data()[idx * dim..(idx + 1) * dim];
        for (o, f) in out.iter_mut().zip(row) {
            *o += a * f;
        }
    }
    out
}

/// Gradients of `aggregate` w.r.t. features and scores. Feature gradients
/// are dense [k, dim] with zero rows outside the selection.
pub fn aggregate_backward(
    features: &Tensor,
    scores: &[f32],
    selected: &[usize],
    d_out: &[f32],
) -> (Tensor, Vec<f32>) {
    let k = features.shape()[0];
    let dim = features.shape()[1];
    let sel_scores: Vec<f32> = selected.iter().map(|&i| scores[i]).collect();
    let weights = softmax(&sel_scores);

    let mut d_features = vec![0.0f32; k * dim];
    let mut d_weights = vec![0.0f32; selected.len()];
    for (si, (&idx, &a)) in selected.iter().zip(&weights).enumerate() {
        let row = &features.data()[idx * dim..(idx + 1) * dim];
        let dst = &mut d_features[idx * dim..(idx + 1) * dim];
        let mut dot = 0.0f32;
        for ((d, f), g) in dst.iter_mut().zip(row).zip(d_out) {
            *d += a * g;
            dot += f * g;
        }
        d_weights[si] = dot;
    }
    let d_sel_scores = softmax_backward(&weights, &d_weights);
    let mut d_scores = vec![0.0f32; k];
    for (si, &idx) in selected.iter().enumerate() {
        d_scores[idx] = d_sel_scores[si];
    }
    (Tensor::from_vec(&[k, dim], d_features), d_scores)
}

/// All learnable state of a MIL model.
#[derive(Debug, Clone)]
pub struct MilParams {
    pub embedder: Embedder,
    pub attention: AttentionHead,
    pub head: Dense,
    pub num_classes: usize,
}

impl MilParams {
    pub fn init(num_classes: usize, gated: bool, rng: &mut impl Rng) -> Self {
        assert!(num_classes >= 2);
        MilParams {
            embedder: Embedder::init(rng),
            attention: AttentionHead::init(EMBED_DIM, ATTENTION_DIM, gated, rng),
            head: Dense::new(
                xavier_uniform(&[EMBED_DIM, num_classes], EMBED_DIM, num_classes, rng),
                Tensor::zeros(&[num_classes]),
            ),
            num_classes,
        }
    }

    /// Fixed parameter order shared by the optimizer and checkpoints.
    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        let mut out = vec![
            ("embed.conv1.weight", &mut self.embedder.conv1.weight),
            ("embed.conv1.bias", &mut self.embedder.conv1.bias),
            ("embed.conv2.weight", &mut self.embedder.conv2.weight),
            ("embed.conv2.bias", &mut self.embedder.conv2.bias),
            ("embed.conv3.weight", &mut self.embedder.conv3.weight),
            ("embed.conv3.bias", &mut self.embedder.conv3.bias),
            ("embed.fc.weight", &mut self.embedder.fc.weight),
            ("embed.fc.bias", &mut self.embedder.fc.bias),
            ("attention.v", &mut self.attention.v),
            ("attention.w", &mut self.attention.w),
        ];
        if let Some(u) = &mut self.attention.gate {
            out.push(("attention.gate", u));
        }
        out.push(("head.weight", &mut self.head.weight));
        out.push(("head.bias", &mut self.head.bias));
        out
    }
}

/// Inference knobs.
#[derive(Debug, Clone, Copy)]
pub struct MilOptions {
    /// None disables top-k selection (every instance aggregates).
    pub k_top: Option<usize>,
    pub sub_batch: usize,
    pub parallel: bool,
}

impl Default for MilOptions {
    fn default() -> Self {
        MilOptions {
            k_top: Some(12),
            sub_batch: 60,
            parallel: true,
        }
    }
}

#[derive(Debug, Clone)]
pub struct MilOutput {
    pub probs: Vec<f32>,
    /// Softmax attention weights over all instances, for interpretability.
    pub attention_weights: Vec<f32>,
    /// Instances used in the bag representation, ascending.
    pub selected: Vec<usize>,
}

pub fn mil_forward(bag: &Bag, params: &MilParams, opts: &MilOptions) -> MilOutput {
    assert!(!bag.is_empty());
    let features = embed_instances(bag, &params.embedder, opts.sub_batch, opts.parallel);
    let (scores, _) = params.attention.scores(&features);
    let weights = softmax(&scores);
    let selected = match opts.k_top {
        Some(k_top) => topk_select(&weights, k_top),
        None => (0..bag.len()).collect(),
    };
    let agg = aggregate(&features, &scores, &selected);
    let logits = params
        .head
        .forward(&Tensor::from_vec(&[1, EMBED_DIM], agg))
        .expect("head shapes");
    MilOutput {
        probs: softmax(logits.data()),
        attention_weights: weights,
        selected,
    }
}

/// One training example: forward, cross-entropy, and full backward with
/// gradients accumulated into `params`. Gradient flows only through the
/// selected instances.
pub fn mil_loss_backward(
    bag: &Bag,
    label: usize,
    params: &mut MilParams,
    opts: &MilOptions,
) -> (f32, Vec<f32>) {
    assert!(!bag.is_empty());
    let k = bag.len();

    // Forward over all instances, keeping activations only for small bags.
    let mut ctxs: Vec<EmbedCtx> = Vec::new();
    let features = if k <= CTX_CACHE_MAX {
        let mut features = vec![0.0f32; k * EMBED_DIM];
        let pairs: Vec<(Vec<f32>, EmbedCtx)> = if opts.parallel {
            bag.instances
                .par_iter()
                .map(|p| params.embedder.forward_instance(p))
                .collect()
        } else {
            bag.instances
                .iter()
                .map(|p| params.embedder.forward_instance(p))
                .collect()
        };
        for (i, (emb, ctx)) in pairs.into_iter().enumerate() {
            features[i * EMBED_DIM..(i + 1) * EMBED_DIM].copy_from_slice(&emb);
            ctxs.push(ctx);
        }
        Tensor::from_vec(&[k, EMBED_DIM], features)
    } else {
        embed_instances(bag, &params.embedder, opts.sub_batch, opts.parallel)
    };

    let (scores, attn_ctx) = params.attention.scores(&features);
    let weights = softmax(&scores);
    let selected = match opts.k_top {
        Some(k_top) => topk_select(&weights, k_top),
        None => (0..k).collect(),
    };
    let agg = aggregate(&features, &scores, &selected);
    let agg_t = Tensor::from_vec(&[1, EMBED_DIM], agg);
    let logits = params.head.forward(&agg_t).expect("head shapes");
    let (loss, probs, d_logits) =
        crate::tensor::cross_entropy_logits(logits.data(), label);

    // Backward: head -> aggregate -> attention -> selected embedders.
    let d_agg = params
        .head
        .backward(&agg_t, &Tensor::from_vec(&[1, params.num_classes], d_logits));
    let (mut d_features, d_scores) =
        aggregate_backward(&features, &scores, &selected, d_agg.data());
    let d_feat_attn = params
        .attention
        .scores_backward(&features, &attn_ctx, &d_scores);
    for (df, da) in d_features.data_mut().iter_mut().zip(d_feat_attn.data()) {
        *df += *da;
    }

    if ctxs.is_empty() {
        // Large bag: re-run the forward pass for the selected instances only.
        for &idx in &selected {
            let (_, ctx) = params.embedder.forward_instance(&bag.instances[idx]);
            let d_emb = &d_features.data()[idx * EMBED_DIM..(idx + 1) * EMBED_DIM];
            params.embedder.backward_instance(&ctx, d_emb);
        }
    } else {
        for &idx in &selected {
            let d_emb = &d_features.data()[idx * EMBED_DIM..(idx + 1) * EMBED_DIM];
            params.embedder.backward_instance(&ctxs[idx], d_emb);
        }
    }
    (loss, probs)
}

/// Attention-weight dump rows: `bag_id,instance_index,weight,selected`.
pub fn attention_csv_header() -> &'static str {
    "bag_id,instance_index,weight,selected"
}

pub fn attention_csv_rows(bag_id: &str, weights: &[f32], selected: &[usize]) -> String {
    let mut out = String::new();
    for (i, w) in weights.iter().enumerate() {
        let sel = selected.binary_search(&i).is_ok();
        let _ = writeln!(out, "{bag_id},{i},{w},{}", sel as u8);
    }
    out
}

// ---- gradient checks for the attention paths --------------------------------

/// Finite-difference check of the (gated) attention scorer, covering V, w,
/// U, and the input features. Returns the max relative error.
pub fn check_attention_head(seed: u64, gated: bool) -> f64 {
    use crate::tensor::gradcheck::{central_diff, max_rel_error, FD_STEP};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (k, fd, ad) = (4usize, 6usize, 5usize);
    let mut head = AttentionHead::init(fd, ad, gated, &mut rng);
    let feats: Vec<f32> = (0..k * fd).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let features = Tensor::from_vec(&[k, fd], feats.clone());
    let (scores, ctx) = head.scores(&features);
    let coeff: Vec<f32> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let _ = scores;

    let d_feat = head.scores_backward(&features, &ctx, &coeff);
    let mut analytic = d_feat.data().to_vec();
    analytic.extend_from_slice(&head.v.grad);
    analytic.extend_from_slice(&head.w.grad);
    if let Some(u) = &head.gate {
        analytic.extend_from_slice(&u.grad);
    }

    let v64: Vec<f64> = head.v.value.data().iter().map(|&v| v as f64).collect();
    let w64: Vec<f64> = head.w.value.data().iter().map(|&v| v as f64).collect();
    let u64v: Vec<f64> = head
        .gate
        .as_ref()
        .map(|u| u.value.data().iter().map(|&v| v as f64).collect())
        .unwrap_or_default();
    let mut packed: Vec<f64> = feats.iter().map(|&v| v as f64).collect();
    packed.extend(&v64);
    packed.extend(&w64);
    packed.extend(&u64v);
    let coeff64: Vec<f64> = coeff.iter().map(|&v| v as f64).collect();

    let mut f = |p: &[f64]| {
        let (feat, rest) = p.split_at(k * fd);
        let (v, rest) = rest.split_at(fd * ad);
        let (w, u) = rest.split_at(ad);
        let mut total = 0.0f64;
        for i in 0..k {
            let mut score = 0.0f64;
            for j in 0..ad {
                let mut zv = 0.0f64;
                let mut zu = 0.0f64;
                for d in 0..fd {
                    zv += feat[i * fd + d] * v[d * ad + j];
                    if gated {
                        zu += feat[i * fd + d] * u[d * ad + j];
                    }
                }
                let t = zv.tanh();
                let gate = if gated { 1.0 / (1.0 + (-zu).exp()) } else { 1.0 };
                score += w[j] * t * gate;
            }
            total += coeff64[i] * score;
        }
        total
    };
    let numeric = central_diff(&mut f, &packed, FD_STEP);
    max_rel_error(&analytic, &numeric)
}

/// Finite-difference check of `aggregate` w.r.t. features and scores.
pub fn check_aggregate(seed: u64) -> f64 {
    use crate::tensor::gradcheck::{central_diff, max_rel_error, FD_STEP};
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (k, dim) = (6usize, 5usize);
    let feats: Vec<f32> = (0..k * dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let scores: Vec<f32> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let selected = vec![0usize, 2, 5];
    let features = Tensor::from_vec(&[k, dim], feats.clone());
    let coeff: Vec<f32> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();

    let (d_features, d_scores) = aggregate_backward(&features, &scores, &selected, &coeff);
    let mut analytic = d_features.data().to_vec();
    analytic.extend_from_slice(&d_scores);

    let mut packed: Vec<f64> = feats.iter().map(|&v| v as f64).collect();
    packed.extend(scores.iter().map(|&v| v as f64));
    let coeff64: Vec<f64> = coeff.iter().map(|&v| v as f64).collect();
    let sel = selected.clone();
    let mut f = |p: &[f64]| {
        let (feat, sc) = p.split_at(k * dim);
        let exps: Vec<f64> = sel.iter().map(|&i| sc[i]).collect();
        let max = exps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let es: Vec<f64> = exps.iter().map(|e| (e - max).exp()).collect();
        let sum: f64 = es.iter().sum();
        let mut out = vec![0.0f64; dim];
        for (si, &idx) in sel.iter().enumerate() {
            let a = es[si] / sum;
            for d in 0..dim {
                out[d] += a * feat[idx * dim + d];
            }
        }
        out.iter().zip(&coeff64).map(|(o, c)| o * c).sum()
    };
    let numeric = central_diff(&mut f, &packed, FD_STEP);
    max_rel_error(&analytic, &numeric)
}
