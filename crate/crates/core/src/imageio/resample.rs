//! Separable bicubic resampling (cubic convolution, `a = -0.5`).
//!
//! Sample centers are aligned (`src = (dst + 0.5) / scale - 0.5`), borders are
//! clamped, and downscaling widens the kernel by `1 / scale` to suppress
//! aliasing. Weights are normalized to sum to one at every phase.

use super::{Image, ImageError, Result};
use crate::tensor::Tensor;

pub const CUBIC_A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn cubic(x: f64) -> f64 {
    let a = CUBIC_A;
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Contributions of the input samples to one output sample.
#[derive(Debug, Clone)]
pub struct Taps {
    /// Clamped input indices.
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

/// Per-output-index taps for resizing an axis of length `in_len` to `out_len`.
pub fn axis_taps(in_len: usize, out_len: usize) -> Vec<Taps> {
    let scale = out_len as f64 / in_len as f64;
    // kernel stretch when shrinking
    let stretch = if scale < 1.0 { scale } else { 1.0 };
    let support = 2.0 / stretch;
    (0..out_len)
        .map(|j| {
            let center = (j as f64 + 0.5) / scale - 0.5;
            let first = (center - support).floor() as i64 + 1;
            let last = (center + support).ceil() as i64 - 1;
            let mut indices = Vec::new();
            let mut weights = Vec::new();
            for i in first..=last {
                let w = cubic((center - i as f64) * stretch);
                if w == 0.0 {
                    continue;
                }
                indices.push(i.clamp(0, in_len as i64 - 1) as usize);
                weights.push(w);
            }
            let sum: f64 = weights.iter().sum();
            if sum != 1.0 {
                weights.iter_mut().for_each(|w| *w /= sum);
            }
            Taps { indices, weights }
        })
        .collect()
}

/// Resizes every plane of `t` to `out_h x out_w`: width pass, then height.
pub fn resize_tensor(t: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let s = t.shape();
    if out_h == 0 || out_w == 0 {
        return Err(ImageError::Dimensions {
            width: out_w,
            height: out_h,
        });
    }
    let col_taps = axis_taps(s.w, out_w);
    let row_taps = axis_taps(s.h, out_h);
    let mut out = Tensor::zeros([s.n, s.c, out_h, out_w]);
    let mut tmp = vec![0.0; s.h * out_w];
    for (plane_idx, src) in t.data().chunks_exact(s.plane()).enumerate() {
        for y in 0..s.h {
            let row = &src[y * s.w..(y + 1) * s.w];
            for (x, taps) in col_taps.iter().enumerate() {
                tmp[y * out_w + x] = taps.indices.iter().zip(&taps.weights).map(|(&i, w)| row[i] * w).sum();
            }
        }
        let dst = &mut out.data_mut()[plane_idx * out_h * out_w..(plane_idx + 1) * out_h * out_w];
        for (y, taps) in row_taps.iter().enumerate() {
            let drow = &mut dst[y * out_w..(y + 1) * out_w];
            for (&i, &w) in taps.indices.iter().zip(&taps.weights) {
                for (d, v) in drow.iter_mut().zip(&tmp[i * out_w..(i + 1) * out_w]) {
                    *d += v * w;
                }
            }
        }
    }
    Ok(out)
}

/// Scales both spatial axes by `num / den`.
pub fn scale_tensor(t: &Tensor, num: usize, den: usize) -> Result<Tensor> {
    let s = t.shape();
    resize_tensor(t, s.h * num / den, s.w * num / den)
}

pub fn upscale_tensor(t: &Tensor, factor: usize) -> Result<Tensor> {
    scale_tensor(t, factor, 1)
}

/// Resizes an 8-bit image, quantizing the result.
pub fn resize_image(img: &Image, out_w: usize, out_h: usize) -> Result<Image> {
    let t = resize_tensor(&img.to_tensor(), out_h, out_w)?;
    Image::from_tensor(&t, 0)
}

/// Bicubic downscale by an integer factor; dimensions must divide evenly.
pub fn downscale_image(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 || !img.width().is_multiple_of(factor) || !img.height().is_multiple_of(factor) {
        return Err(ImageError::ScaleMismatch {
            lr: (img.width() / factor.max(1), img.height() / factor.max(1)),
            hr: (img.width(), img.height()),
            scale: factor,
        });
    }
    resize_image(img, img.width() / factor, img.height() / factor)
}

pub fn upscale_image(img: &Image, factor: usize) -> Result<Image> {
    resize_image(img, img.width() * factor, img.height() * factor)
}
