//! Adversarial enlargement: append redundant bytes so resize-based
//! preprocessing destroys the discriminative signal, plus the padding sweep
//! that audits how much mutual information survives.

use crate::byteplot::{resize_bilinear, to_square_image, ByteImage};
use crate::metrics::{entropy_bits, mi_percent, mutual_information_bits};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AdversaryError {
    #[error("target of {target} pixels is smaller than the {len}-byte sample")]
    TargetTooSmall { target: usize, len: usize },
    #[error("sweep side {side} is smaller than the original side {original}")]
    SideTooSmall { side: usize, original: usize },
    #[error("input byte sequence is empty")]
    EmptyInput,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnlargeMode {
    Zeros,
    UniformNoise,
}

impl EnlargeMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            EnlargeMode::Zeros => "zeros",
            EnlargeMode::UniformNoise => "noise",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct EnlargeSpec {
    pub mode: EnlargeMode,
    /// Total output length in bytes (side^2 for a square target).
    pub target_pixels: usize,
    /// Noise stream seed; unused in zeros mode.
    pub seed: u64,
}

impl EnlargeSpec {
    /// Target sized as a multiple of the original byte count.
    pub fn by_factor(mode: EnlargeMode, len: usize, factor: usize, seed: u64) -> Self {
        EnlargeSpec {
            mode,
            target_pixels: len * factor,
            seed,
        }
    }

    /// Target sized side x side, the paper-scale square form.
    pub fn by_side(mode: EnlargeMode, side: usize, seed: u64) -> Self {
        EnlargeSpec {
            mode,
            target_pixels: side * side,
            seed,
        }
    }
}

/// Append redundant bytes until the sample is `target_pixels` long. The
/// original bytes are an exact prefix; appended bytes are 0x00 or seeded
/// uniform noise.
pub fn enlarge(bytes: &[u8], spec: &EnlargeSpec) -> Result<Vec<u8>, AdversaryError> {
    if spec.target_pixels < bytes.len() {
        return Err(AdversaryError::TargetTooSmall {
            target: spec.target_pixels,
            len: bytes.len(),
        });
    }
    let mut out = Vec::with_capacity(spec.target_pixels);
    out.extend_from_slice(bytes);
    let pad = spec.target_pixels - bytes.len();
    match spec.mode {
        EnlargeMode::Zeros => out.resize(spec.target_pixels, 0),
        EnlargeMode::UniformNoise => {
            let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
            out.extend((0..pad).map(|_| rng.gen::<u8>()));
        }
    }
    Ok(out)
}

/// For each square side: zero-pad the sample to side x side, resize down to
/// `resize_to` and back up, crop the row-major prefix covering the original
/// bytes, and report MI between original and reconstruction as a percentage
/// of the original's entropy (NaN for zero-entropy inputs).
pub fn mi_padding_sweep(
    bytes: &[u8],
    sides: &[usize],
    resize_to: usize,
) -> Result<Vec<(usize, f64)>, AdversaryError> {
    if bytes.is_empty() {
        return Err(AdversaryError::EmptyInput);
    }
    let original_side = (bytes.len() as f64).sqrt().ceil() as usize;
    let original = ByteImage::new(bytes.len(), 1, bytes.to_vec());
    let h_orig = entropy_bits(&original);

    let mut out = Vec::with_capacity(sides.len());
    for &side in sides {
        if side < original_side {
            return Err(AdversaryError::SideTooSmall {
                side,
                original: original_side,
            });
        }
        let padded = enlarge(
            bytes,
            &EnlargeSpec::by_side(EnlargeMode::Zeros, side, 0),
        )?;
        let square = to_square_image(&padded).expect("non-empty");
        debug_assert_eq!(square.width, side);
        let down = resize_bilinear(&square, resize_to, resize_to);
        let up = resize_bilinear(&down, side, side);
        let reconstructed = ByteImage::new(bytes.len(), 1, up.pixels[..bytes.len()].to_vec());
        let mi = mutual_information_bits(&original, &reconstructed).expect("same shape");
        out.push((side, mi_percent(mi, h_orig)));
    }
    Ok(out)
}

/// Sweep rows as a CSV with a `side,mi_percent` header.
pub fn sweep_csv(rows: &[(usize, f64)]) -> String {
    let mut out = String::from("side,mi_percent\n");
    for (side, pct) in rows {
        out.push_str(&format!("{side},{pct}\n"));
    }
    out
}
