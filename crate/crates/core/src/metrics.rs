//! PSNR and SSIM on 8-bit RGB images, and stereo dataset evaluation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::imageio::resample::downscale_image;
use crate::imageio::{parse_manifest, read_image, Image, ImageError};
use crate::model::{Model, ModelError};
use crate::stereo::StereoPair;

/// SSIM window side.
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const PEAK: f64 = 255.0;

#[derive(Debug, thiserror::Error)]
pub enum MetricsError {
    #[error("image sizes differ: {a:?} vs {b:?}")]
    DimensionMismatch { a: (usize, usize), b: (usize, usize) },
    #[error("image {width}x{height} is smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window")]
    TooSmall { width: usize, height: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub type Result<T, E = MetricsError> = std::result::Result<T, E>;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(MetricsError::DimensionMismatch {
            a: (a.width(), a.height()),
            b: (b.width(), b.height()),
        });
    }
    Ok(())
}

/// Mean squared error over all RGB samples.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .samples()
        .iter()
        .zip(b.samples())
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    Ok(sum / a.samples().len() as f64)
}

/// `10 log10(255^2 / MSE)` in dB; `+inf` for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (PEAK * PEAK / m).log10())
}

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let mid = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        let x = i as f64 - mid;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= sum);
    w
}

/// Separable valid-mode filtering of a `w x h` plane.
fn filter_valid(plane: &[f64], w: usize, h: usize, taps: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (ow, oh) = (w + 1 - SSIM_WINDOW, h + 1 - SSIM_WINDOW);
    let mut rows = vec![0.0; ow * h];
    for y in 0..h {
        let src = &plane[y * w..(y + 1) * w];
        for x in 0..ow {
            rows[y * ow + x] = taps.iter().zip(&src[x..]).map(|(t, v)| t * v).sum();
        }
    }
    let mut out = vec![0.0; ow * oh];
    for y in 0..oh {
        for (k, t) in taps.iter().enumerate() {
            let src = &rows[(y + k) * ow..(y + k + 1) * ow];
            for (o, v) in out[y * ow..(y + 1) * ow].iter_mut().zip(src) {
                *o += t * v;
            }
        }
    }
    out
}

/// Mean SSIM over an 11x11 Gaussian window (sigma 1.5), valid positions
/// only, computed per RGB channel and averaged.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(MetricsError::TooSmall { width: w, height: h });
    }
    let taps = gaussian_window();
    let c1 = (SSIM_K1 * PEAK).powi(2);
    let c2 = (SSIM_K2 * PEAK).powi(2);
    let mut total = 0.0;
    for ch in 0..3 {
        let plane = |img: &Image| -> Vec<f64> { img.samples()[ch..].iter().step_by(3).map(|&v| f64::from(v)).collect() };
        let (pa, pb) = (plane(a), plane(b));
        let prod = |x: &[f64], y: &[f64]| -> Vec<f64> { x.iter().zip(y).map(|(p, q)| p * q).collect() };
        let mu_a = filter_valid(&pa, w, h, &taps);
        let mu_b = filter_valid(&pb, w, h, &taps);
        let e_aa = filter_valid(&prod(&pa, &pa), w, h, &taps);
        let e_bb = filter_valid(&prod(&pb, &pb), w, h, &taps);
        let e_ab = filter_valid(&prod(&pa, &pb), w, h, &taps);
        let mut sum = 0.0;
        for i in 0..mu_a.len() {
            let (ma, mb) = (mu_a[i], mu_b[i]);
            let var_a = e_aa[i] - ma * ma;
            let var_b = e_bb[i] - mb * mb;
            let cov = e_ab[i] - ma * mb;
            sum += ((2.0 * ma * mb + c1) * (2.0 * cov + c2)) / ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
        }
        total += sum / mu_a.len() as f64;
    }
    Ok(total / 3.0)
}

/// Metrics of one stereo pair.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalRow {
    pub image_id: String,
    pub psnr_left: f64,
    pub ssim_left: f64,
    pub psnr_right: f64,
    pub ssim_right: f64,
}

impl EvalRow {
    pub fn compute(image_id: impl Into<String>, sr: &StereoPair<Image>, hr: &StereoPair<Image>) -> Result<Self> {
        Ok(Self {
            image_id: image_id.into(),
            psnr_left: psnr(&sr.left, &hr.left)?,
            ssim_left: ssim(&sr.left, &hr.left)?,
            psnr_right: psnr(&sr.right, &hr.right)?,
            ssim_right: ssim(&sr.right, &hr.right)?,
        })
    }

    /// `(left + right) / 2`.
    pub fn psnr_stereo(&self) -> f64 {
        (self.psnr_left + self.psnr_right) / 2.0
    }

    pub fn ssim_stereo(&self) -> f64 {
        (self.ssim_left + self.ssim_right) / 2.0
    }
}

/// Per-image rows plus dataset means.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub rows: Vec<EvalRow>,
}

/// Dataset means of every column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalMeans {
    pub psnr_left: f64,
    pub ssim_left: f64,
    pub psnr_right: f64,
    pub ssim_right: f64,
    pub psnr_stereo: f64,
    pub ssim_stereo: f64,
}

impl EvalReport {
    /// Column means in row order; `None` for an empty report.
    pub fn means(&self) -> Option<EvalMeans> {
        if self.rows.is_empty() {
            return None;
        }
        let n = self.rows.len() as f64;
        let mean = |f: fn(&EvalRow) -> f64| self.rows.iter().map(f).sum::<f64>() / n;
        Some(EvalMeans {
            psnr_left: mean(|r| r.psnr_left),
            ssim_left: mean(|r| r.ssim_left),
            psnr_right: mean(|r| r.psnr_right),
            ssim_right: mean(|r| r.ssim_right),
            psnr_stereo: mean(EvalRow::psnr_stereo),
            ssim_stereo: mean(EvalRow::ssim_stereo),
        })
    }

    /// CSV with a header, one row per image, and a final `MEAN` row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image_id,psnr_l,ssim_l,psnr_r,ssim_r,psnr_stereo,ssim_stereo\n");
        let mut line = |id: &str, v: [f64; 6]| {
            let cells: Vec<String> = v.iter().map(|x| format_value(*x)).collect();
            let _ = writeln!(out, "{id},{}", cells.join(","));
        };
        for r in &self.rows {
            line(
                &r.image_id,
                [r.psnr_left, r.ssim_left, r.psnr_right, r.ssim_right, r.psnr_stereo(), r.ssim_stereo()],
            );
        }
        if let Some(m) = self.means() {
            line(
                "MEAN",
                [m.psnr_left, m.ssim_left, m.psnr_right, m.ssim_right, m.psnr_stereo, m.ssim_stereo],
            );
        }
        out
    }
}

fn format_value(v: f64) -> String {
    if v.is_infinite() && v > 0.0 {
        "inf".into()
    } else {
        format!("{v:.6}")
    }
}

/// Bicubic `/ scale` low-resolution version of an HR pair, quantized to 8 bits.
pub fn degrade(hr: &StereoPair<Image>, scale: usize) -> Result<StereoPair<Image>> {
    Ok(hr.as_ref().try_map(|img| downscale_image(img, scale))?)
}

/// Evaluates `model` on in-memory HR pairs: degrade, super-resolve, quantize,
/// compare.
pub fn evaluate_pairs<'a>(
    model: &Model,
    pairs: impl IntoIterator<Item = (String, &'a StereoPair<Image>)>,
) -> Result<EvalReport> {
    let scale = model.config().upscale;
    let mut rows = Vec::new();
    for (id, hr) in pairs {
        let lr = degrade(hr, scale)?;
        let sr = model.infer_images(&lr)?;
        rows.push(EvalRow::compute(id, &sr, hr)?);
    }
    Ok(EvalReport { rows })
}

/// Evaluates `model` on every pair listed in `manifest`. Relative paths are
/// resolved against `hr_dir`; image ids are the left file stems.
pub fn evaluate_dataset(model: &Model, manifest: &Path, hr_dir: &Path) -> Result<EvalReport> {
    let text = std::fs::read_to_string(manifest).map_err(|e| ImageError::Io {
        path: manifest.display().to_string(),
        source: e,
    })?;
    let resolve = |p: &str| -> PathBuf {
        let p = Path::new(p);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            hr_dir.join(p)
        }
    };
    let mut loaded = Vec::new();
    for (left, right) in parse_manifest(&text)? {
        let left = resolve(&left);
        let id = left
            .file_stem()
            .map_or_else(|| left.display().to_string(), |s| s.to_string_lossy().into_owned());
        let hr = StereoPair::new(read_image(&left)?, read_image(resolve(&right))?);
        loaded.push((id, hr));
    }
    evaluate_pairs(model, loaded.iter().map(|(id, hr)| (id.clone(), hr)))
}
