//! 8-bit RGB images, file formats, bicubic resampling, and training patches.

mod patches;
mod ppm;
pub mod resample;

use std::path::Path;

pub use patches::{augment, extract_patches, Patch, PatchConfig, PatchSet};
pub use ppm::{decode_ppm, encode_ppm, read_ppm, write_ppm};

use crate::tensor::{Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum ImageError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed PPM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported image format: {0}")]
    Unsupported(String),
    #[error("image data too short: expected {expected} bytes, found {found}")]
    ShortData { expected: usize, found: usize },
    #[error("invalid image dimensions {width}x{height}")]
    Dimensions { width: usize, height: usize },
    #[error("image {width}x{height} is smaller than the {min_width}x{min_height} required")]
    TooSmall {
        width: usize,
        height: usize,
        min_width: usize,
        min_height: usize,
    },
    #[error("high-resolution size {hr:?} is not {scale}x the low-resolution size {lr:?}")]
    ScaleMismatch {
        lr: (usize, usize),
        hr: (usize, usize),
        scale: usize,
    },
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

pub type Result<T, E = ImageError> = std::result::Result<T, E>;

/// Interleaved 8-bit RGB, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    samples: Vec<u8>,
}

impl std::fmt::Debug for Image {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Image({}x{})", self.width, self.height)
    }
}

impl Image {
    pub fn new(width: usize, height: usize, samples: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(ImageError::Dimensions { width, height });
        }
        if samples.len() != 3 * width * height {
            return Err(ImageError::ShortData {
                expected: 3 * width * height,
                found: samples.len(),
            });
        }
        Ok(Self {
            width,
            height,
            samples,
        })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Result<Self> {
        let samples = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self::new(width, height, samples)
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [u8; 3]) -> Result<Self> {
        let mut samples = Vec::with_capacity(3 * width * height);
        for y in 0..height {
            for x in 0..width {
                samples.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, samples)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn samples(&self) -> &[u8] {
        &self.samples
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        let i = 3 * (y * self.width + x);
        [self.samples[i], self.samples[i + 1], self.samples[i + 2]]
    }

    /// `[1, 3, h, w]` tensor with samples mapped from `0..=255` to `[0, 1]`.
    pub fn to_tensor(&self) -> Tensor {
        let (w, h) = (self.width, self.height);
        let mut t = Tensor::zeros([1, 3, h, w]);
        let d = t.data_mut();
        for (i, px) in self.samples.chunks_exact(3).enumerate() {
            for (c, &v) in px.iter().enumerate() {
                d[c * w * h + i] = f64::from(v) / 255.0;
            }
        }
        t
    }

    /// Inverse of [`Image::to_tensor`] for batch item `n`: clamps to `[0, 1]`,
    /// scales to 255 and rounds half up.
    pub fn from_tensor(t: &Tensor, n: usize) -> Result<Self> {
        let s = t.shape();
        if s.c != 3 || n >= s.n {
            return Err(ImageError::Unsupported(format!(
                "tensor {s} is not a batch of RGB images containing item {n}"
            )));
        }
        Self::from_fn(s.w, s.h, |x, y| {
            let mut px = [0u8; 3];
            for (c, v) in px.iter_mut().enumerate() {
                *v = quantize(t.at(n, c, y, x));
            }
            px
        })
    }

    /// Sub-image with top-left corner `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, width: usize, height: usize) -> Result<Self> {
        if x + width > self.width || y + height > self.height {
            return Err(ImageError::TooSmall {
                width: self.width,
                height: self.height,
                min_width: x + width,
                min_height: y + height,
            });
        }
        Self::from_fn(width, height, |cx, cy| self.pixel(x + cx, y + cy))
    }

    pub fn flip_horizontal(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.pixel(self.width - 1 - x, y)).expect("same dims")
    }

    pub fn flip_vertical(&self) -> Self {
        Self::from_fn(self.width, self.height, |x, y| self.pixel(x, self.height - 1 - y)).expect("same dims")
    }
}

/// `[0, 1]` real to an 8-bit sample, clamping and rounding half up.
pub fn quantize(v: f64) -> u8 {
    let scaled = v.clamp(0.0, 1.0) * 255.0;
    (scaled + 0.5).floor().min(255.0) as u8
}

/// Reads a PPM file, or a PNG file when built with the `png` feature.
pub fn read_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    if has_extension(path, "png") {
        return read_png(path);
    }
    read_ppm(path)
}

/// Writes by extension: `.png` (with the `png` feature) or PPM otherwise.
pub fn write_image(image: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if has_extension(path, "png") {
        return write_png(image, path);
    }
    write_ppm(image, path)
}

fn has_extension(path: &Path, ext: &str) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case(ext))
}

pub(crate) fn io_error(path: &Path, source: std::io::Error) -> ImageError {
    ImageError::Io {
        path: path.display().to_string(),
        source,
    }
}

#[cfg(feature = "png")]
fn read_png(path: &Path) -> Result<Image> {
    let file = std::fs::File::open(path).map_err(|e| io_error(path, e))?;
    let mut decoder = png::Decoder::new(std::io::BufReader::new(file));
    decoder.set_transformations(png::Transformations::EXPAND | png::Transformations::STRIP_16);
    let mut reader = decoder
        .read_info()
        .map_err(|e| ImageError::Unsupported(format!("png: {e}")))?;
    let mut buf = vec![0; reader.output_buffer_size().unwrap_or(0)];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| ImageError::Unsupported(format!("png: {e}")))?;
    let (w, h) = (info.width as usize, info.height as usize);
    let data = &buf[..info.buffer_size()];
    let samples = match info.color_type {
        png::ColorType::Rgb => data.to_vec(),
        png::ColorType::Rgba => data.chunks_exact(4).flat_map(|p| [p[0], p[1], p[2]]).collect(),
        png::ColorType::Grayscale => data.iter().flat_map(|&v| [v, v, v]).collect(),
        png::ColorType::GrayscaleAlpha => data.chunks_exact(2).flat_map(|p| [p[0], p[0], p[0]]).collect(),
        other => return Err(ImageError::Unsupported(format!("png color type {other:?}"))),
    };
    Image::new(w, h, samples)
}

#[cfg(feature = "png")]
fn write_png(image: &Image, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| io_error(path, e))?;
    let mut encoder = png::Encoder::new(std::io::BufWriter::new(file), image.width as u32, image.height as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let png_err = |e: png::EncodingError| ImageError::Unsupported(format!("png: {e}"));
    let mut writer = encoder.write_header().map_err(png_err)?;
    writer.write_image_data(&image.samples).map_err(png_err)?;
    writer.finish().map_err(png_err)
}

#[cfg(not(feature = "png"))]
fn read_png(path: &Path) -> Result<Image> {
    Err(ImageError::Unsupported(format!(
        "{}: PNG support requires the `png` feature",
        path.display()
    )))
}

#[cfg(not(feature = "png"))]
fn write_png(_image: &Image, path: &Path) -> Result<()> {
    read_png(path).map(|_| ())
}

/// Parses a stereo manifest: one `left<TAB>right` path pair per line. Blank
/// lines and lines starting with `#` are skipped.
pub fn parse_manifest(text: &str) -> Result<Vec<(String, String)>> {
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        match (fields.next(), fields.next(), fields.next()) {
            (Some(l), Some(r), None) if !l.is_empty() && !r.is_empty() => pairs.push((l.to_string(), r.to_string())),
            _ => {
                return Err(ImageError::Manifest {
                    line: i + 1,
                    message: "expected `left_path<TAB>right_path`".into(),
                })
            }
        }
    }
    Ok(pairs)
}
