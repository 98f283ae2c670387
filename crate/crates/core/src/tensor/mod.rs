//! Dense NCHW tensors and the numeric kernels behind every layer.
//!
//! All kernels accumulate in a fixed row-major order so that identical inputs
//! give bitwise-identical outputs. The autodiff tape in [`crate::autograd`]
//! wraps these kernels; they are also usable directly for inference-only code
//! and as building blocks for reference checks.

pub mod kernels;

use std::fmt;

use rand::Rng;

/// Errors raised by tensor kernels and the autodiff tape.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TensorError {
    #[error("{op}: shape mismatch, expected {expected} but got {got}")]
    ShapeMismatch {
        op: &'static str,
        expected: Shape,
        got: Shape,
    },
    #[error("{op}: {what}")]
    Divisibility { op: &'static str, what: String },
    #[error("{op}: kernel {kernel}x{kernel} larger than padded input {h}x{w}")]
    KernelTooLarge {
        op: &'static str,
        kernel: usize,
        h: usize,
        w: usize,
    },
    #[error("invalid tensor shape {0:?}: all dimensions must be >= 1")]
    InvalidShape([usize; 4]),
    #[error("data length {len} does not match shape {shape}")]
    DataLength { len: usize, shape: Shape },
    #[error("backward requires a scalar loss, got shape {0}")]
    NonScalarLoss(Shape),
    #[error("backward was already run on this tape; record a new graph first")]
    TapeConsumed,
    #[error("backward called on a value that was not recorded on this tape")]
    NotRecorded,
}

pub type Result<T, E = TensorError> = std::result::Result<T, E>;

/// Batch, channel, height, width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub const fn new(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w }
    }

    pub const fn scalar() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub const fn numel(&self) -> usize {
        self.n * self.c * self.h * self.w
    }

    pub const fn plane(&self) -> usize {
        self.h * self.w
    }

    pub const fn dims(&self) -> [usize; 4] {
        [self.n, self.c, self.h, self.w]
    }

    fn validate(&self) -> Result<()> {
        if self.dims().contains(&0) {
            return Err(TensorError::InvalidShape(self.dims()));
        }
        Ok(())
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}, {}, {}]", self.n, self.c, self.h, self.w)
    }
}

impl From<[usize; 4]> for Shape {
    fn from(d: [usize; 4]) -> Self {
        Self::new(d[0], d[1], d[2], d[3])
    }
}

/// A dense 4-D array of `f64` in row-major `(n, c, h, w)` order.
#[derive(Clone, PartialEq)]
pub struct Tensor {
    shape: Shape,
    data: Vec<f64>,
}

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.shape)
            .field("len", &self.data.len())
            .finish()
    }
}

impl Tensor {
    pub fn from_vec(shape: impl Into<Shape>, data: Vec<f64>) -> Result<Self> {
        let shape = shape.into();
        shape.validate()?;
        if data.len() != shape.numel() {
            return Err(TensorError::DataLength {
                len: data.len(),
                shape,
            });
        }
        Ok(Self { shape, data })
    }

    /// # Panics
    /// If any dimension is zero.
    pub fn full(shape: impl Into<Shape>, value: f64) -> Self {
        let shape = shape.into();
        shape.validate().expect("tensor dimensions must be >= 1");
        Self {
            shape,
            data: vec![value; shape.numel()],
        }
    }

    pub fn zeros(shape: impl Into<Shape>) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: impl Into<Shape>) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn scalar(value: f64) -> Self {
        Self::full(Shape::scalar(), value)
    }

    /// Per-channel vector laid out as `[1, c, 1, 1]`.
    pub fn channel_vector(values: &[f64]) -> Self {
        Self::from_vec([1, values.len(), 1, 1], values.to_vec())
            .expect("channel vector must be non-empty")
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn uniform<R: Rng + ?Sized>(shape: impl Into<Shape>, lo: f64, hi: f64, rng: &mut R) -> Self {
        let mut t = Self::zeros(shape);
        for v in &mut t.data {
            *v = rng.gen_range(lo..hi);
        }
        t
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, n: usize, c: usize, h: usize, w: usize) -> usize {
        ((n * self.shape.c + c) * self.shape.h + h) * self.shape.w + w
    }

    #[inline]
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        self.data[self.index(n, c, h, w)]
    }

    #[inline]
    pub fn set(&mut self, n: usize, c: usize, h: usize, w: usize, value: f64) {
        let i = self.index(n, c, h, w);
        self.data[i] = value;
    }

    /// The contiguous `h * w` plane for batch item `n`, channel `c`.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let p = self.shape.plane();
        let start = (n * self.shape.c + c) * p;
        &self.data[start..start + p]
    }

    pub fn reshape(mut self, shape: impl Into<Shape>) -> Result<Self> {
        let shape = shape.into();
        shape.validate()?;
        if shape.numel() != self.shape.numel() {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                expected: self.shape,
                got: shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// `self += other`, elementwise.
    pub fn add_assign(&mut self, other: &Tensor) -> Result<()> {
        self.expect_shape("add_assign", other.shape)?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
        Ok(())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Copy of channels `start..start + len`.
    pub fn narrow_channels(&self, start: usize, len: usize) -> Result<Self> {
        let s = self.shape;
        if len == 0 || start + len > s.c {
            return Err(TensorError::Divisibility {
                op: "narrow_channels",
                what: format!("channel range {start}..{} outside 0..{}", start + len, s.c),
            });
        }
        let p = s.plane();
        let mut data = Vec::with_capacity(s.n * len * p);
        for n in 0..s.n {
            let base = (n * s.c + start) * p;
            data.extend_from_slice(&self.data[base..base + len * p]);
        }
        Self::from_vec([s.n, len, s.h, s.w], data)
    }

    /// Concatenate along the channel axis.
    pub fn concat_channels(parts: &[&Tensor]) -> Result<Self> {
        let first = parts.first().expect("concat of zero tensors").shape;
        let mut c = 0;
        for t in parts {
            let s = t.shape;
            if (s.n, s.h, s.w) != (first.n, first.h, first.w) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_channels",
                    expected: first,
                    got: s,
                });
            }
            c += s.c;
        }
        let p = first.plane();
        let mut data = Vec::with_capacity(first.n * c * p);
        for n in 0..first.n {
            for t in parts {
                let len = t.shape.c * p;
                data.extend_from_slice(&t.data[n * len..(n + 1) * len]);
            }
        }
        Self::from_vec([first.n, c, first.h, first.w], data)
    }

    /// Concatenate along the batch axis.
    pub fn concat_batch(parts: &[&Tensor]) -> Result<Self> {
        let first = parts.first().expect("concat of zero tensors").shape;
        let mut data = Vec::new();
        let mut n = 0;
        for t in parts {
            let s = t.shape;
            if (s.c, s.h, s.w) != (first.c, first.h, first.w) {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_batch",
                    expected: first,
                    got: s,
                });
            }
            n += s.n;
            data.extend_from_slice(&t.data);
        }
        Self::from_vec([n, first.c, first.h, first.w], data)
    }

    /// Mirror along the width axis.
    pub fn flip_horizontal(&self) -> Self {
        let s = self.shape;
        let mut out = self.clone();
        for row in out.data.chunks_exact_mut(s.w) {
            row.reverse();
        }
        out
    }

    /// Mirror along the height axis.
    pub fn flip_vertical(&self) -> Self {
        let s = self.shape;
        let mut out = self.clone();
        for plane in out.data.chunks_exact_mut(s.plane()) {
            for y in 0..s.h / 2 {
                let (top, bottom) = plane.split_at_mut((s.h - 1 - y) * s.w);
                top[y * s.w..(y + 1) * s.w].swap_with_slice(&mut bottom[..s.w]);
            }
        }
        out
    }

    pub(crate) fn expect_shape(&self, op: &'static str, other: Shape) -> Result<()> {
        if self.shape != other {
            return Err(TensorError::ShapeMismatch {
                op,
                expected: self.shape,
                got: other,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_dims_rejected() {
        assert!(matches!(
            Tensor::from_vec([1, 0, 2, 2], vec![]),
            Err(TensorError::InvalidShape(_))
        ));
        assert!(Tensor::from_vec([1, 1, 2, 2], vec![0.0; 3]).is_err());
    }

    #[test]
    fn flips_are_involutions() {
        let t = Tensor::from_vec([1, 2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        assert_eq!(t.flip_horizontal().at(0, 1, 2, 0), t.at(0, 1, 2, 3));
        assert_eq!(t.flip_vertical().at(0, 1, 0, 1), t.at(0, 1, 2, 1));
        assert_eq!(t.flip_horizontal().flip_horizontal(), t);
        assert_eq!(t.flip_vertical().flip_vertical(), t);
    }

    #[test]
    fn narrow_then_concat_restores() {
        let t = Tensor::from_vec([2, 4, 2, 2], (0..32).map(f64::from).collect()).unwrap();
        let a = t.narrow_channels(0, 1).unwrap();
        let b = t.narrow_channels(1, 3).unwrap();
        assert_eq!(Tensor::concat_channels(&[&a, &b]).unwrap(), t);
        assert!(t.narrow_channels(3, 2).is_err());
    }
}
