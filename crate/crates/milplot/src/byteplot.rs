//! Byte sequences as greyscale images: square plots for the resize baseline,
//! fixed-width plots cut into patch bags for the MIL model.

use crate::tensor::Tensor;
use std::io::Write;
use std::path::Path;
use thiserror::Error;

/// Default patch side, and the fixed byteplot width for the MIL path.
pub const PATCH_SIZE: usize = 224;

#[derive(Debug, Error, PartialEq)]
pub enum ByteplotError {
    #[error("input byte sequence is empty")]
    EmptyInput,
    #[error("image width {width} does not match patch size {patch}")]
    WidthMismatch { width: usize, patch: usize },
}

/// 2-D greyscale image of 8-bit pixels, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ByteImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl ByteImage {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width * height);
        ByteImage {
            width,
            height,
            pixels,
        }
    }

    /// Binary PGM (P5) encoding for visual inspection.
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }

    pub fn write_pgm(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_pgm())
    }
}

/// An ordered set of unit-interval patches cut from one sample's byteplot.
#[derive(Debug, Clone)]
pub struct Bag {
    pub patch: usize,
    pub instances: Vec<Tensor>,
    pub label: Option<usize>,
    pub source_id: String,
    /// Byte count of the originating sample; trailing bag content past this
    /// length is padding.
    pub source_len: usize,
}

impl Bag {
    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }
}

/// Square byteplot: side = ceil(sqrt(len)), zero-padded at the tail.
pub fn to_square_image(bytes: &[u8]) -> Result<ByteImage, ByteplotError> {
    if bytes.is_empty() {
        return Err(ByteplotError::EmptyInput);
    }
    let side = (bytes.len() as f64).sqrt().ceil() as usize;
    debug_assert!(side * side >= bytes.len() && (side - 1) * (side - 1) < bytes.len());
    let mut pixels = vec![0u8; side * side];
    pixels[..bytes.len()].copy_from_slice(bytes);
    Ok(ByteImage::new(side, side, pixels))
}

/// Fixed-width byteplot: height = ceil(len / width), last row zero-padded.
pub fn to_fixed_width_image(bytes: &[u8], width: usize) -> Result<ByteImage, ByteplotError> {
    if bytes.is_empty() {
        return Err(ByteplotError::EmptyInput);
    }
    let height = bytes.len().div_ceil(width);
    let mut pixels = vec![0u8; width * height];
    pixels[..bytes.len()].copy_from_slice(bytes);
    Ok(ByteImage::new(width, height, pixels))
}

/// Scale 8-bit pixels to [0,1] reals.
pub fn to_unit(image: &ByteImage) -> Tensor {
    Tensor::from_vec(
        &[image.height, image.width],
        image.pixels.iter().map(|&p| p as f32 / 255.0).collect(),
    )
}

/// Pad the image height to the next multiple of `patch` with black rows and
/// split vertically into [patch, patch] unit-interval instances. Instance j
/// always covers rows [j*patch, (j+1)*patch).
pub fn make_bag(image: &ByteImage, patch: usize) -> Result<Bag, ByteplotError> {
    if image.width != patch {
        return Err(ByteplotError::WidthMismatch {
            width: image.width,
            patch,
        });
    }
    let k = image.height.div_ceil(patch).max(1);
    let mut instances = Vec::with_capacity(k);
    for j in 0..k {
        let mut data = vec![0.0f32; patch * patch];
        let row0 = j * patch;
        let rows = patch.min(image.height.saturating_sub(row0));
        for r in 0..rows {
            let src = &image.pixels[(row0 + r) * patch..(row0 + r + 1) * patch];
            for (d, s) in data[r * patch..(r + 1) * patch].iter_mut().zip(src) {
                *d = *s as f32 / 255.0;
            }
        }
        instances.push(Tensor::from_vec(&[patch, patch], data));
    }
    Ok(Bag {
        patch,
        instances,
        label: None,
        source_id: String::new(),
        source_len: image.width * image.height,
    })
}

/// Full MIL preprocessing for one sample: fixed-width byteplot, then a bag.
pub fn bag_from_bytes(
    bytes: &[u8],
    patch: usize,
    label: Option<usize>,
    source_id: &str,
) -> Result<Bag, ByteplotError> {
    let image = to_fixed_width_image(bytes, patch)?;
    let mut bag = make_bag(&image, patch)?;
    bag.label = label;
    bag.source_id = source_id.to_string();
    bag.source_len = bytes.len();
    Ok(bag)
}

/// Reassemble the sample bytes from a bag (scale by 255, round, truncate the
/// padding). The MIL path is lossless: this returns the original input of
/// `bag_from_bytes` exactly.
pub fn bag_to_bytes(bag: &Bag) -> Vec<u8> {
    let mut out = Vec::with_capacity(bag.len() * bag.patch * bag.patch);
    for inst in &bag.instances {
        out.extend(
            inst.data()
                .iter()
                .map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
        );
    }
    out.truncate(bag.source_len);
    out
}

/// Bilinear resize with the half-pixel-center convention:
/// src = (dst + 0.5) * (in/out) - 0.5, clamped to borders. Interpolated
/// values are rounded half away from zero and clamped to 0..=255.
pub fn resize_bilinear(image: &ByteImage, out_w: usize, out_h: usize) -> ByteImage {
    assert!(out_w >= 1 && out_h >= 1);
    let (in_w, in_h) = (image.width, image.height);
    let scale_x = in_w as f64 / out_w as f64;
    let scale_y = in_h as f64 / out_h as f64;

    // Precompute per-axis source cells and blend fractions.
    let xs: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|dx| axis_sample(dx, scale_x, in_w))
        .collect();
    let ys: Vec<(usize, usize, f64)> = (0..out_h)
        .map(|dy| axis_sample(dy, scale_y, in_h))
        .collect();

    let mut pixels = vec![0u8; out_w * out_h];
    for (dy, &(y0, y1, fy)) in ys.iter().enumerate() {
        let row0 = &image.pixels[y0 * in_w..(y0 + 1) * in_w];
        let row1 = &image.pixels[y1 * in_w..(y1 + 1) * in_w];
        let dst = &mut pixels[dy * out_w..(dy + 1) * out_w];
        for (dx, &(x0, x1, fx)) in xs.iter().enumerate() {
            let v00 = row0[x0] as f64;
            let v01 = row0[x1] as f64;
            let v10 = row1[x0] as f64;
            let v11 = row1[x1] as f64;
            let top = v00 + (v01 - v00) * fx;
            let bot = v10 + (v11 - v10) * fx;
            let v = top + (bot - top) * fy;
            dst[dx] = (v + 0.5).floor().clamp(0.0, 255.0) as u8;
        }
    }
    ByteImage::new(out_w, out_h, pixels)
}

fn axis_sample(dst: usize, scale: f64, in_len: usize) -> (usize, usize, f64) {
    let src = ((dst as f64 + 0.5) * scale - 0.5).clamp(0.0, (in_len - 1) as f64);
    let i0 = src.floor() as usize;
    let i1 = (i0 + 1).min(in_len - 1);
    (i0, i1, src - i0 as f64)
}
