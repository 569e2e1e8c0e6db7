//! Information-loss metrics for image pairs and the classification metric
//! suite for model evaluation.

use crate::byteplot::ByteImage;
use std::fmt::Write as _;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("image shapes differ: {a:?} vs {b:?}")]
    ShapeMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("image {0}x{1} is smaller than the 11x11 SSIM window")]
    TooSmall(usize, usize),
    #[error("length mismatch: {truths} truths vs {probs} probability rows")]
    LengthMismatch { truths: usize, probs: usize },
    #[error("probability row {row} sums to {sum}, expected 1")]
    BadProbability { row: usize, sum: f64 },
}

fn check_shapes(a: &ByteImage, b: &ByteImage) -> Result<(), MetricsError> {
    if a.width != b.width || a.height != b.height {
        return Err(MetricsError::ShapeMismatch {
            a: (a.width, a.height),
            b: (b.width, b.height),
        });
    }
    Ok(())
}

/// Mean squared pixel difference.
pub fn mse(a: &ByteImage, b: &ByteImage) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let sum: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(&x, &y)| {
            let d = x as f64 - y as f64;
            d * d
        })
        .sum();
    Ok(sum / a.pixels.len() as f64)
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const SSIM_C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

fn gaussian_kernel() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let d2 = (y as f64 - c).powi(2) + (x as f64 - c).powi(2);
            let v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            k[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Mean local SSIM over 11x11 Gaussian-weighted windows (sigma 1.5, L=255),
/// evaluated at every position where the full window fits.
pub fn ssim(a: &ByteImage, b: &ByteImage) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    if a.width < SSIM_WINDOW || a.height < SSIM_WINDOW {
        return Err(MetricsError::TooSmall(a.width, a.height));
    }
    let kernel = gaussian_kernel();
    let (w, h) = (a.width, a.height);
    let mut total = 0.0f64;
    let mut count = 0usize;
    for wy in 0..=(h - SSIM_WINDOW) {
        for wx in 0..=(w - SSIM_WINDOW) {
            let (mut mx, mut my, mut mxx, mut myy, mut mxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
            for ky in 0..SSIM_WINDOW {
                let row = (wy + ky) * w + wx;
                for kx in 0..SSIM_WINDOW {
                    let g = kernel[ky * SSIM_WINDOW + kx];
                    let x = a.pixels[row + kx] as f64;
                    let y = b.pixels[row + kx] as f64;
                    mx += g * x;
                    my += g * y;
                    mxx += g * x * x;
                    myy += g * y * y;
                    mxy += g * x * y;
                }
            }
            let vx = mxx - mx * mx;
            let vy = myy - my * my;
            let cxy = mxy - mx * my;
            let s = ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
            total += s;
            count += 1;
        }
    }
    Ok(total / count as f64)
}

/// Signal-to-noise ratio in decibels: 10*log10(sum orig^2 / sum (orig-dist)^2).
/// Identical inputs return +infinity.
pub fn snr_db(orig: &ByteImage, distorted: &ByteImage) -> Result<f64, MetricsError> {
    check_shapes(orig, distorted)?;
    let signal: f64 = orig.pixels.iter().map(|&p| (p as f64).powi(2)).sum();
    let noise: f64 = orig
        .pixels
        .iter()
        .zip(&distorted.pixels)
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum();
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Exact 256-bin pixel intensity counts.
pub fn pixel_histogram(image: &ByteImage) -> [u64; 256] {
    let mut h = [0u64; 256];
    for &p in &image.pixels {
        h[p as usize] += 1;
    }
    h
}

fn entropy_from_counts(counts: impl Iterator<Item = u64>, total: u64) -> f64 {
    let n = total as f64;
    let mut h = 0.0;
    for c in counts {
        if c > 0 {
            let p = c as f64 / n;
            h -= p * p.log2();
        }
    }
    h
}

/// Shannon entropy (base 2) of the normalized pixel histogram.
pub fn entropy_bits(image: &ByteImage) -> f64 {
    let hist = pixel_histogram(image);
    entropy_from_counts(hist.into_iter(), image.pixels.len() as u64)
}

/// Mutual information (base 2) from the 256x256 joint pixel histogram,
/// computed as H(a) + H(b) - H(a,b) so that MI(x,x) equals H(x) exactly.
pub fn mutual_information_bits(a: &ByteImage, b: &ByteImage) -> Result<f64, MetricsError> {
    check_shapes(a, b)?;
    let mut joint = vec![0u64; 256 * 256];
    for (&x, &y) in a.pixels.iter().zip(&b.pixels) {
        joint[x as usize * 256 + y as usize] += 1;
    }
    let n = a.pixels.len() as u64;
    let h_joint = entropy_from_counts(joint.into_iter(), n);
    let mi = entropy_bits(a) + entropy_bits(b) - h_joint;
    Ok(mi.max(0.0))
}

/// MI as a percentage of the original image's entropy. NaN when the original
/// has zero entropy (undefined, never silently 0).
pub fn mi_percent(mi_bits: f64, entropy_original_bits: f64) -> f64 {
    if entropy_original_bits == 0.0 {
        f64::NAN
    } else {
        mi_bits / entropy_original_bits * 100.0
    }
}

/// The information-loss panel comparing an original image against its
/// resized-and-restored version.
#[derive(Debug, Clone)]
pub struct LossPanel {
    pub mse: f64,
    pub ssim: f64,
    pub snr_db: f64,
    pub entropy_original_bits: f64,
    pub entropy_resized_bits: f64,
    pub mutual_information_bits: f64,
    pub mi_percent: f64,
}

impl LossPanel {
    pub fn compute(original: &ByteImage, restored: &ByteImage) -> Result<Self, MetricsError> {
        let h_orig = entropy_bits(original);
        let mi = mutual_information_bits(original, restored)?;
        Ok(LossPanel {
            mse: mse(original, restored)?,
            ssim: ssim(original, restored)?,
            snr_db: snr_db(original, restored)?,
            entropy_original_bits: h_orig,
            entropy_resized_bits: entropy_bits(restored),
            mutual_information_bits: mi,
            mi_percent: mi_percent(mi, h_orig),
        })
    }

    pub const CSV_HEADER: &'static str =
        "mse,ssim,snr_db,entropy_original_bits,entropy_resized_bits,mutual_information_bits,mi_percent";

    pub fn to_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.mse,
            self.ssim,
            self.snr_db,
            self.entropy_original_bits,
            self.entropy_resized_bits,
            self.mutual_information_bits,
            self.mi_percent
        )
    }
}

/// Wall-clock timings for one evaluated bag.
#[derive(Debug, Clone, Copy)]
pub struct LatencySample {
    pub network_ms: f64,
    pub end_to_end_ms: f64,
}

/// Per-class confusion counts plus the aggregate metrics of one evaluation.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub num_classes: usize,
    /// Row-major counts; rows are true classes, columns predicted.
    pub confusion: Vec<u64>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub mean_loss: f64,
    pub auroc_macro: f64,
    pub latencies: Vec<LatencySample>,
}

impl EvalReport {
    pub fn samples(&self) -> u64 {
        self.confusion.iter().sum()
    }

    pub const CSV_HEADER: &'static str = "samples,accuracy,macro_f1,mean_loss,auroc_macro";

    pub fn metrics_csv(&self) -> String {
        format!(
            "{}\n{},{},{},{},{}\n",
            Self::CSV_HEADER,
            self.samples(),
            self.accuracy,
            self.macro_f1,
            self.mean_loss,
            self.auroc_macro
        )
    }

    /// Confusion counts with a `true_class,pred_<j>...` header.
    pub fn confusion_csv(&self) -> String {
        let c = self.num_classes;
        let mut out = String::from("true_class");
        for j in 0..c {
            let _ = write!(out, ",pred_{j}");
        }
        out.push('\n');
        for i in 0..c {
            let _ = write!(out, "{i}");
            for j in 0..c {
                let _ = write!(out, ",{}", self.confusion[i * c + j]);
            }
            out.push('\n');
        }
        out
    }

    /// Percentages by column (precision per predicted class), for rendering.
    pub fn confusion_column_percent(&self) -> Vec<f64> {
        let c = self.num_classes;
        let mut out = vec![0.0; c * c];
        for j in 0..c {
            let col_total: u64 = (0..c).map(|i| self.confusion[i * c + j]).sum();
            for i in 0..c {
                out[i * c + j] = if col_total == 0 {
                    0.0
                } else {
                    self.confusion[i * c + j] as f64 / col_total as f64 * 100.0
                };
            }
        }
        out
    }
}

/// Argmax predictions, confusion matrix, accuracy, macro-F1, mean
/// cross-entropy loss, and macro one-vs-rest AUROC from probability rows.
pub fn classification_report(
    truths: &[usize],
    probs: &[Vec<f32>],
    num_classes: usize,
) -> Result<EvalReport, MetricsError> {
    if truths.len() != probs.len() {
        return Err(MetricsError::LengthMismatch {
            truths: truths.len(),
            probs: probs.len(),
        });
    }
    for (row, p) in probs.iter().enumerate() {
        let sum: f64 = p.iter().map(|&v| v as f64).sum();
        if p.len() != num_classes || (sum - 1.0).abs() > 1e-5 {
            return Err(MetricsError::BadProbability { row, sum });
        }
    }

    let mut confusion = vec![0u64; num_classes * num_classes];
    let mut loss_sum = 0.0f64;
    for (&t, p) in truths.iter().zip(probs) {
        let pred = argmax(p);
        confusion[t * num_classes + pred] += 1;
        loss_sum -= (p[t] as f64).max(f64::MIN_POSITIVE).ln();
    }
    let total = truths.len() as f64;
    let trace: u64 = (0..num_classes)
        .map(|i| confusion[i * num_classes + i])
        .sum();
    let accuracy = trace as f64 / total;

    let mut f1_sum = 0.0f64;
    for c in 0..num_classes {
        let tp = confusion[c * num_classes + c] as f64;
        let fp: f64 = (0..num_classes)
            .filter(|&i| i != c)
            .map(|i| confusion[i * num_classes + c] as f64)
            .sum();
        let fn_: f64 = (0..num_classes)
            .filter(|&j| j != c)
            .map(|j| confusion[c * num_classes + j] as f64)
            .sum();
        let denom = 2.0 * tp + fp + fn_;
        if denom > 0.0 {
            f1_sum += 2.0 * tp / denom;
        }
    }
    let macro_f1 = f1_sum / num_classes as f64;

    Ok(EvalReport {
        num_classes,
        confusion,
        accuracy,
        macro_f1,
        mean_loss: loss_sum / total,
        auroc_macro: auroc_macro_ovr(truths, probs, num_classes),
        latencies: Vec::new(),
    })
}

fn argmax(xs: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in xs.iter().enumerate() {
        if v > xs[best] {
            best = i;
        }
    }
    best
}

/// Macro one-vs-rest AUROC via the midrank Mann-Whitney statistic. Classes
/// without both positives and negatives are skipped; NaN when none qualify.
pub fn auroc_macro_ovr(truths: &[usize], probs: &[Vec<f32>], num_classes: usize) -> f64 {
    let mut sum = 0.0f64;
    let mut used = 0usize;
    for c in 0..num_classes {
        let scores: Vec<f64> = probs.iter().map(|p| p[c] as f64).collect();
        let labels: Vec<bool> = truths.iter().map(|&t| t == c).collect();
        if let Some(auc) = auroc_binary(&scores, &labels) {
            sum += auc;
            used += 1;
        }
    }
    if used == 0 {
        f64::NAN
    } else {
        sum / used as f64
    }
}

fn auroc_binary(scores: &[f64], positive: &[bool]) -> Option<f64> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // Midrank for the tie group spanning positions i..=j (1-based ranks).
        let midrank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positive[idx] {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Some(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rand_image(w: usize, h: usize, rng: &mut ChaCha8Rng) -> ByteImage {
        ByteImage::new(w, h, (0..w * h).map(|_| rng.gen()).collect())
    }

    #[test]
    fn mse_trivials_and_oracle() {
        let a = ByteImage::new(4, 4, vec![0; 16]);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);

        let b = ByteImage::new(4, 4, vec![255; 16]);
        assert_eq!(mse(&a, &b).unwrap(), 65025.0);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (x, y) = (rand_image(7, 5, &mut rng), rand_image(7, 5, &mut rng));
        let got = mse(&x, &y).unwrap();
        let mut want = 0.0f64;
        for i in 0..35 {
            let d = x.pixels[i] as f64 - y.pixels[i] as f64;
            want += d * d;
        }
        want /= 35.0;
        assert!((got - want).abs() < 1e-9);

        let c = ByteImage::new(3, 3, vec![0; 9]);
        assert!(matches!(
            mse(&a, &c),
            Err(MetricsError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn ssim_identical_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let a = rand_image(16, 16, &mut rng);
        assert!((ssim(&a, &a).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ssim_inverted_textured_is_negative() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = rand_image(24, 24, &mut rng);
        let b = ByteImage::new(24, 24, a.pixels.iter().map(|&p| 255 - p).collect());
        assert!(ssim(&a, &b).unwrap() < 0.0);
    }

    #[test]
    fn ssim_constant_pair_matches_luminance_term() {
        let a = ByteImage::new(12, 12, vec![100; 144]);
        let b = ByteImage::new(12, 12, vec![110; 144]);
        // Variances vanish, so only the luminance term remains.
        let want = (2.0 * 100.0 * 110.0 + SSIM_C1) / (100.0f64 * 100.0 + 110.0 * 110.0 + SSIM_C1);
        assert!((ssim(&a, &b).unwrap() - want).abs() < 1e-12);
    }

    #[test]
    fn ssim_matches_direct_formula_oracle() {
        // Independent re-evaluation with explicit loops over every window.
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = rand_image(13, 12, &mut rng);
        let b = rand_image(13, 12, &mut rng);
        let got = ssim(&a, &b).unwrap();

        let c = (SSIM_WINDOW / 2) as f64;
        let mut weights = Vec::new();
        let mut wsum = 0.0;
        for y in 0..11 {
            for x in 0..11 {
                let v = (-(((y as f64 - c).powi(2) + (x as f64 - c).powi(2))
                    / (2.0 * 1.5 * 1.5)))
                    .exp();
                weights.push(v);
                wsum += v;
            }
        }
        let mut total = 0.0;
        let mut count = 0;
        for wy in 0..=(12 - 11) {
            for wx in 0..=(13 - 11) {
                let (mut mx, mut my) = (0.0, 0.0);
                for ky in 0..11 {
                    for kx in 0..11 {
                        let g = weights[ky * 11 + kx] / wsum;
                        mx += g * a.pixels[(wy + ky) * 13 + wx + kx] as f64;
                        my += g * b.pixels[(wy + ky) * 13 + wx + kx] as f64;
                    }
                }
                let (mut vx, mut vy, mut cxy) = (0.0, 0.0, 0.0);
                for ky in 0..11 {
                    for kx in 0..11 {
                        let g = weights[ky * 11 + kx] / wsum;
                        let x = a.pixels[(wy + ky) * 13 + wx + kx] as f64;
                        let y = b.pixels[(wy + ky) * 13 + wx + kx] as f64;
                        vx += g * x * x;
                        vy += g * y * y;
                        cxy += g * x * y;
                    }
                }
                vx -= mx * mx;
                vy -= my * my;
                cxy -= mx * my;
                total += ((2.0 * mx * my + SSIM_C1) * (2.0 * cxy + SSIM_C2))
                    / ((mx * mx + my * my + SSIM_C1) * (vx + vy + SSIM_C2));
                count += 1;
            }
        }
        assert!((got - total / count as f64).abs() < 1e-9);
    }

    #[test]
    fn ssim_rejects_small_images_and_is_symmetric() {
        let a = ByteImage::new(8, 8, vec![0; 64]);
        assert!(matches!(ssim(&a, &a), Err(MetricsError::TooSmall(8, 8))));

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_image(15, 14, &mut rng);
        let y = rand_image(15, 14, &mut rng);
        assert!((ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn snr_trivials_and_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let orig = rand_image(9, 9, &mut rng);

        // Zeroed distortion: noise power equals signal power, so 0 dB.
        let zeros = ByteImage::new(9, 9, vec![0; 81]);
        assert!((snr_db(&orig, &zeros).unwrap()).abs() < 1e-12);

        assert_eq!(snr_db(&orig, &orig).unwrap(), f64::INFINITY);

        let dist = rand_image(9, 9, &mut rng);
        let got = snr_db(&orig, &dist).unwrap();
        let sig: f64 = orig.pixels.iter().map(|&p| (p as f64) * (p as f64)).sum();
        let noise: f64 = orig
            .pixels
            .iter()
            .zip(&dist.pixels)
            .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
            .sum();
        assert!((got - 10.0 * (sig / noise).log10()).abs() < 1e-12);
    }

    #[test]
    fn entropy_reference_values() {
        let constant = ByteImage::new(10, 10, vec![42; 100]);
        assert_eq!(entropy_bits(&constant), 0.0);

        let uniform = ByteImage::new(16, 16, (0..256).map(|v| v as u8).collect());
        assert!((entropy_bits(&uniform) - 8.0).abs() < 1e-12);

        let mut px = vec![0u8; 50];
        px.extend(vec![255u8; 50]);
        let two = ByteImage::new(10, 10, px);
        assert!((entropy_bits(&two) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mi_of_image_with_itself_is_entropy_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let a = rand_image(32, 32, &mut rng);
        assert_eq!(mutual_information_bits(&a, &a).unwrap(), entropy_bits(&a));
    }

    #[test]
    fn mi_of_independent_images_is_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let a = rand_image(1000, 1000, &mut rng);
        let b = rand_image(1000, 1000, &mut rng);
        let mi = mutual_information_bits(&a, &b).unwrap();
        assert!(mi < 0.05, "MI of independent noise = {mi}");
    }

    #[test]
    fn mi_is_bounded_and_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..5 {
            let a = rand_image(20, 20, &mut rng);
            let mut b = a.clone();
            // Correlated pair: half the pixels shared.
            for p in b.pixels.iter_mut().take(200) {
                *p = rng.gen();
            }
            let mi_ab = mutual_information_bits(&a, &b).unwrap();
            let mi_ba = mutual_information_bits(&b, &a).unwrap();
            assert!((mi_ab - mi_ba).abs() < 1e-9);
            assert!(mi_ab >= 0.0);
            assert!(mi_ab <= entropy_bits(&a).min(entropy_bits(&b)) + 1e-9);
        }
    }

    #[test]
    fn mi_percent_formula_matches_reported_ratio() {
        // 0.913 bits of MI against 6.26 bits of entropy is 14.58%,
        // consistent with the quoted 14.6%.
        let v = mi_percent(0.913, 6.26);
        assert!((v - 14.6).abs() < 0.02, "mi_percent = {v}");
    }

    #[test]
    fn mi_percent_zero_entropy_is_nan() {
        assert!(mi_percent(0.0, 0.0).is_nan());
        let constant = ByteImage::new(12, 12, vec![9; 144]);
        let panel = LossPanel::compute(&constant, &constant).unwrap();
        assert!(panel.mi_percent.is_nan());
    }

    #[test]
    fn histogram_counts_exactly() {
        let img = ByteImage::new(5, 2, vec![7; 10]);
        let h = pixel_histogram(&img);
        assert_eq!(h[7], 10);
        assert_eq!(h.iter().sum::<u64>(), 10);
        assert!(h.iter().enumerate().all(|(i, &c)| i == 7 || c == 0));

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = rand_image(30, 30, &mut rng);
        let h = pixel_histogram(&img);
        for v in 0..256usize {
            let want = img.pixels.iter().filter(|&&p| p as usize == v).count() as u64;
            assert_eq!(h[v], want);
        }
    }

    #[test]
    fn loss_panel_csv_has_fixed_columns() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let a = rand_image(16, 16, &mut rng);
        let b = rand_image(16, 16, &mut rng);
        let panel = LossPanel::compute(&a, &b).unwrap();
        let csv = panel.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), LossPanel::CSV_HEADER);
        assert_eq!(lines.next().unwrap().split(',').count(), 7);
    }

    #[test]
    fn report_perfect_predictions() {
        let truths = vec![0, 1, 2, 0, 1, 2];
        let probs: Vec<Vec<f32>> = truths
            .iter()
            .map(|&t| {
                let mut p = vec![0.0f32; 3];
                p[t] = 1.0;
                p
            })
            .collect();
        let r = classification_report(&truths, &probs, 3).unwrap();
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.macro_f1, 1.0);
        assert_eq!(r.auroc_macro, 1.0);
        assert_eq!(r.samples(), 6);
    }

    #[test]
    fn report_single_class_collapse() {
        // Everything predicted as class 0 on balanced 9-class data:
        // accuracy 1/9 and macro-F1 = (2/10)/9.
        let mut truths = Vec::new();
        for c in 0..9 {
            truths.extend(std::iter::repeat(c).take(4));
        }
        let mut p0 = vec![0.02f32; 9];
        p0[0] = 1.0 - 0.02 * 8.0;
        let probs = vec![p0; truths.len()];
        let r = classification_report(&truths, &probs, 9).unwrap();
        assert!((r.accuracy - 1.0 / 9.0).abs() < 1e-12);
        let want_f1 = (2.0 * (1.0 / 9.0) / (1.0 + 1.0 / 9.0)) / 9.0;
        assert!((r.macro_f1 - want_f1).abs() < 1e-12);
    }

    #[test]
    fn report_random_scores_auroc_near_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let n = 2000;
        let truths: Vec<usize> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let probs: Vec<Vec<f32>> = (0..n)
            .map(|_| {
                let raw: Vec<f32> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f32 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        let r = classification_report(&truths, &probs, 4).unwrap();
        assert!((r.auroc_macro - 0.5).abs() < 0.05, "auroc {}", r.auroc_macro);
    }

    #[test]
    fn report_validates_inputs() {
        assert!(matches!(
            classification_report(&[0, 1], &[vec![1.0, 0.0]], 2),
            Err(MetricsError::LengthMismatch { .. })
        ));
        assert!(matches!(
            classification_report(&[0], &[vec![0.9, 0.3]], 2),
            Err(MetricsError::BadProbability { .. })
        ));
    }

    #[test]
    fn metrics_invariant_under_class_relabeling() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let n = 200;
        let truths: Vec<usize> = (0..n).map(|_| rng.gen_range(0..3)).collect();
        let probs: Vec<Vec<f32>> = (0..n)
            .map(|_| {
                let raw: Vec<f32> = (0..3).map(|_| rng.gen_range(0.01..1.0)).collect();
                let sum: f32 = raw.iter().sum();
                raw.into_iter().map(|v| v / sum).collect()
            })
            .collect();
        let r1 = classification_report(&truths, &probs, 3).unwrap();

        // Relabel classes with the cycle 0->1->2->0, consistently.
        let perm = [1usize, 2, 0];
        let truths2: Vec<usize> = truths.iter().map(|&t| perm[t]).collect();
        let probs2: Vec<Vec<f32>> = probs
            .iter()
            .map(|p| {
                let mut q = vec![0.0f32; 3];
                for (i, &v) in p.iter().enumerate() {
                    q[perm[i]] = v;
                }
                q
            })
            .collect();
        let r2 = classification_report(&truths2, &probs2, 3).unwrap();
        assert!((r1.accuracy - r2.accuracy).abs() < 1e-12);
        assert!((r1.macro_f1 - r2.macro_f1).abs() < 1e-12);
        assert!((r1.auroc_macro - r2.auroc_macro).abs() < 1e-12);
    }

    #[test]
    fn auroc_invariant_under_monotone_transform() {
        let scores = vec![0.1, 0.4, 0.35, 0.8, 0.65];
        let labels = vec![false, false, true, true, false];
        let base = auroc_binary(&scores, &labels).unwrap();
        let squashed: Vec<f64> = scores.iter().map(|s| (5.0 * s).tanh()).collect();
        assert!((auroc_binary(&squashed, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn confusion_column_percentages() {
        let r = EvalReport {
            num_classes: 2,
            confusion: vec![8, 2, 4, 6],
            accuracy: 0.7,
            macro_f1: 0.7,
            mean_loss: 0.5,
            auroc_macro: 0.8,
            latencies: Vec::new(),
        };
        let pct = r.confusion_column_percent();
        // Column 0 totals 12: 8/12 and 4/12.
        assert!((pct[0] - 100.0 * 8.0 / 12.0).abs() < 1e-9);
        assert!((pct[2] - 100.0 * 4.0 / 12.0).abs() < 1e-9);
        let csv = r.confusion_csv();
        assert!(csv.starts_with("true_class,pred_0,pred_1\n0,8,2\n1,4,6\n"));
    }
}
