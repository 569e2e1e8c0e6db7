//! The resize-based CNN classifier the enlargement attack breaks: square
//! byteplot, bilinear resize to 224x224, then a small conv stack.

use crate::byteplot::{resize_bilinear, to_square_image, to_unit, ByteplotError, PATCH_SIZE};
use crate::tensor::{
    cross_entropy_logits, kaiming_uniform, maxpool2_backward, maxpool2_forward,
    pool_adaptive_avg_backward, pool_adaptive_avg_forward, relu, relu_backward, softmax,
    xavier_uniform, Conv2d, Dense, Param, Tensor,
};
use rand::Rng;

const POOL_GRID: usize = 4;

/// All learnable state of the baseline model.
#[derive(Debug, Clone)]
pub struct BaselineParams {
    pub conv1: Conv2d,
    pub conv2: Conv2d,
    pub fc1: Dense,
    pub fc2: Dense,
    pub num_classes: usize,
}

impl BaselineParams {
    pub fn init(num_classes: usize, rng: &mut impl Rng) -> Self {
        assert!(num_classes >= 2);
        let (c1, c2) = (64, 128);
        let fc_in = POOL_GRID * POOL_GRID * c2;
        BaselineParams {
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
            fc1: Dense::new(
                kaiming_uniform(&[fc_in, 512], fc_in, rng),
                Tensor::zeros(&[512]),
            ),
            fc2: Dense::new(
                xavier_uniform(&[512, num_classes], 512, num_classes, rng),
                Tensor::zeros(&[num_classes]),
            ),
            num_classes,
        }
    }

    pub fn named_params_mut(&mut self) -> Vec<(&'static str, &mut Param)> {
        vec![
            ("base.conv1.weight", &mut self.conv1.weight),
            ("base.conv1.bias", &mut self.conv1.bias),
            ("base.conv2.weight", &mut self.conv2.weight),
            ("base.conv2.bias", &mut self.conv2.bias),
            ("base.fc1.weight", &mut self.fc1.weight),
            ("base.fc1.bias", &mut self.fc1.bias),
            ("base.fc2.weight", &mut self.fc2.weight),
            ("base.fc2.bias", &mut self.fc2.bias),
        ]
    }
}

/// Square byteplot, bilinear resize to 224x224, scale to [0,1].
pub fn baseline_preprocess(bytes: &[u8]) -> Result<Tensor, ByteplotError> {
    let square = to_square_image(bytes)?;
    let resized = resize_bilinear(&square, PATCH_SIZE, PATCH_SIZE);
    Ok(to_unit(&resized))
}

struct BaselineActs {
    conv1: crate::tensor::ConvCtx,
    relu1: Tensor,
    pool1: crate::tensor::MaxPoolCtx,
    conv2: crate::tensor::ConvCtx,
    relu2: Tensor,
    pool2: crate::tensor::MaxPoolCtx,
    avg_in_shape: Vec<usize>,
    fc1_in: Tensor,
    relu_fc1: Tensor,
}

fn forward_impl(patch: &Tensor, params: &BaselineParams) -> (Vec<f32>, BaselineActs) {
    let (h, w) = (patch.shape()[0], patch.shape()[1]);
    let input = patch.clone().reshaped(&[h, w, 1]);

    let (mut out1, conv1) = params.conv1.forward(&input).expect("baseline conv1 shapes");
    relu(out1.data_mut());
    let relu1 = out1;
    let (pooled1, pool1) = maxpool2_forward(&relu1);

    let (mut out2, conv2) = params.conv2.forward(&pooled1).expect("baseline conv2 shapes");
    relu(out2.data_mut());
    let relu2 = out2;
    let (pooled2, pool2) = maxpool2_forward(&relu2);

    let avg_in_shape = pooled2.shape().to_vec();
    let avg = pool_adaptive_avg_forward(&pooled2, POOL_GRID);
    let c2 = params.conv2.weight.value.shape()[3];
    let fc1_in = avg.reshaped(&[1, POOL_GRID * POOL_GRID * c2]);
    let mut hidden = params.fc1.forward(&fc1_in).expect("baseline fc1 shapes");
    relu(hidden.data_mut());
    let relu_fc1 = hidden;
    let logits = params.fc2.forward(&relu_fc1).expect("baseline fc2 shapes");

    (
        logits.data().to_vec(),
        BaselineActs {
            conv1,
            relu1,
            pool1,
            conv2,
            relu2,
            pool2,
            avg_in_shape,
            fc1_in,
            relu_fc1,
        },
    )
}

/// Class probabilities for one preprocessed patch.
pub fn baseline_forward(patch: &Tensor, params: &BaselineParams) -> Vec<f32> {
    let (logits, _) = forward_impl(patch, params);
    softmax(&logits)
}

/// One training example: forward, cross-entropy, backward with gradients
/// accumulated into `params`.
pub fn baseline_loss_backward(
    patch: &Tensor,
    label: usize,
    params: &mut BaselineParams,
) -> (f32, Vec<f32>) {
    let (logits, acts) = forward_impl(patch, params);
    let (loss, probs, d_logits) = cross_entropy_logits(&logits, label);

    let d_logits = Tensor::from_vec(&[1, params.num_classes], d_logits);
    let mut d_hidden = params.fc2.backward(&acts.relu_fc1, &d_logits);
    relu_backward(acts.relu_fc1.data(), d_hidden.data_mut());
    let d_fc1_in = params.fc1.backward(&acts.fc1_in, &d_hidden);

    let c2 = params.conv2.weight.value.shape()[3];
    let d_avg = d_fc1_in.reshaped(&[POOL_GRID, POOL_GRID, c2]);
    let d_pool2 = pool_adaptive_avg_backward(&acts.avg_in_shape, POOL_GRID, &d_avg);
    let mut d_relu2 = maxpool2_backward(&acts.pool2, &d_pool2);
    relu_backward(acts.relu2.data(), d_relu2.data_mut());
    let d_pool1 = params.conv2.backward(&acts.conv2, &d_relu2);
    let mut d_relu1 = maxpool2_backward(&acts.pool1, &d_pool1);
    relu_backward(acts.relu1.data(), d_relu1.data_mut());
    let _ = params.conv1.backward(&acts.conv1, &d_relu1);

    (loss, probs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{AdamConfig, AdamState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn preprocess_produces_224_square_unit_patch() {
        let bytes: Vec<u8> = (0..50_176u32).map(|i| (i % 256) as u8).collect();
        let patch = baseline_preprocess(&bytes).unwrap();
        assert_eq!(patch.shape(), &[224, 224]);
        assert!(patch.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        // 224x224-sized input: the resize is an identity, so pixels match.
        for (i, &v) in patch.data().iter().enumerate() {
            assert_eq!((v * 255.0).round() as u8, bytes[i]);
        }
    }

    #[test]
    fn preprocess_rejects_empty_input() {
        assert!(baseline_preprocess(&[]).is_err());
    }

    #[test]
    fn untrained_forward_is_a_distribution() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = BaselineParams::init(5, &mut rng);
        let patch = Tensor::from_vec(
            &[28, 28],
            (0..28 * 28).map(|_| rng.gen_range(0.0..1.0)).collect(),
        );
        let probs = baseline_forward(&patch, &params);
        assert_eq!(probs.len(), 5);
        let sum: f32 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
        assert!(probs.iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn overfits_a_tiny_two_class_problem() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut params = BaselineParams::init(2, &mut rng);
        // Class 0: dark patches, class 1: bright patches.
        let patches: Vec<(Tensor, usize)> = (0..8)
            .map(|i| {
                let label = i % 2;
                let base = if label == 0 { 0.1 } else { 0.8 };
                let data = (0..28 * 28)
                    .map(|_| base + rng.gen_range(0.0..0.1))
                    .collect();
                (Tensor::from_vec(&[28, 28], data), label)
            })
            .collect();

        let lens: Vec<usize> = params
            .named_params_mut()
            .iter()
            .map(|(_, p)| p.value.len())
            .collect();
        let mut adam = AdamState::new(
            AdamConfig {
                learning_rate: 3e-3,
                ..AdamConfig::default()
            },
            &lens,
        );
        let mut last = f32::INFINITY;
        for _ in 0..30 {
            let mut total = 0.0;
            for (patch, label) in &patches {
                let (loss, _) = baseline_loss_backward(patch, *label, &mut params);
                total += loss;
            }
            let scale = 1.0 / patches.len() as f32;
            let mut refs: Vec<&mut Param> = params
                .named_params_mut()
                .into_iter()
                .map(|(_, p)| p)
                .collect();
            adam.apply(&mut refs, scale);
            for p in refs {
                p.zero_grad();
            }
            last = total / patches.len() as f32;
        }
        assert!(last < 0.1, "loss after overfitting = {last}");
        for (patch, label) in &patches {
            let probs = baseline_forward(patch, &params);
            let pred = probs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
                .unwrap()
                .0;
            assert_eq!(pred, *label);
        }
    }
}
