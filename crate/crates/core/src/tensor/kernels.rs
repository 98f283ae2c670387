//! Forward and backward kernels on plain [`Tensor`]s.
//!
//! Reductions run sequentially in row-major order. Nothing here allocates
//! graph state; the tape in [`crate::autograd`] decides what to keep.

use super::{Result, Shape, Tensor, TensorError};

/// Geometry shared by the convolution forward and backward passes.
#[derive(Debug, Clone, Copy)]
pub struct ConvGeometry {
    pub batch: usize,
    pub in_channels: usize,
    pub out_channels: usize,
    pub groups: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub kernel_h: usize,
    pub kernel_w: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeometry {
    pub fn new(x: Shape, weight: Shape, stride: usize, padding: usize, groups: usize) -> Result<Self> {
        const OP: &str = "conv2d";
        if groups == 0 || stride == 0 {
            return Err(TensorError::Divisibility {
                op: OP,
                what: "groups and stride must be >= 1".into(),
            });
        }
        if !x.c.is_multiple_of(groups) || !weight.n.is_multiple_of(groups) {
            return Err(TensorError::Divisibility {
                op: OP,
                what: format!(
                    "in channels {} and out channels {} must be divisible by groups {groups}",
                    x.c, weight.n
                ),
            });
        }
        if weight.c * groups != x.c {
            return Err(TensorError::ShapeMismatch {
                op: OP,
                expected: Shape::new(weight.n, x.c / groups, weight.h, weight.w),
                got: weight,
            });
        }
        let (ph, pw) = (x.h + 2 * padding, x.w + 2 * padding);
        if weight.h > ph || weight.w > pw {
            return Err(TensorError::KernelTooLarge {
                op: OP,
                kernel: weight.h.max(weight.w),
                h: ph,
                w: pw,
            });
        }
        Ok(Self {
            batch: x.n,
            in_channels: x.c,
            out_channels: weight.n,
            groups,
            in_h: x.h,
            in_w: x.w,
            kernel_h: weight.h,
            kernel_w: weight.w,
            stride,
            padding,
            out_h: (ph - weight.h) / stride + 1,
            out_w: (pw - weight.w) / stride + 1,
        })
    }

    pub fn out_shape(&self) -> Shape {
        Shape::new(self.batch, self.out_channels, self.out_h, self.out_w)
    }

    /// Multiply-accumulate count of one forward pass (bias adds excluded).
    pub fn macs(&self) -> u64 {
        (self.batch
            * self.out_channels
            * self.out_h
            * self.out_w
            * (self.in_channels / self.groups)
            * self.kernel_h
            * self.kernel_w) as u64
    }

    /// Output index range `[lo, hi)` along one axis whose input coordinate
    /// `o * stride + k - padding` lands inside `0..len`.
    fn valid_range(&self, k: usize, len: usize, out_len: usize) -> (usize, usize) {
        let s = self.stride;
        let lo = if self.padding > k {
            (self.padding - k).div_ceil(s)
        } else {
            0
        };
        let hi_excl = (len + self.padding).saturating_sub(k);
        let hi = if hi_excl == 0 { 0 } else { (hi_excl - 1) / s + 1 };
        (lo.min(out_len), hi.min(out_len))
    }

    /// Calls `f(out_y, in_y, out_x_lo, out_x_hi, in_x_lo)` for every output
    /// row touched by kernel tap `(ky, kx)`.
    #[inline]
    fn for_each_row(&self, ky: usize, kx: usize, mut f: impl FnMut(usize, usize, usize, usize, usize)) {
        let (y_lo, y_hi) = self.valid_range(ky, self.in_h, self.out_h);
        let (x_lo, x_hi) = self.valid_range(kx, self.in_w, self.out_w);
        if x_lo >= x_hi {
            return;
        }
        let ix_lo = x_lo * self.stride + kx - self.padding;
        for oy in y_lo..y_hi {
            let iy = oy * self.stride + ky - self.padding;
            f(oy, iy, x_lo, x_hi, ix_lo);
        }
    }
}

/// Grouped 2-D cross-correlation. `weight` is `[out, in / groups, kh, kw]`,
/// `bias` (if any) holds `out` values in any `[1, out, 1, 1]`-sized layout.
pub fn conv2d(
    x: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<Tensor> {
    let g = ConvGeometry::new(x.shape(), weight.shape(), stride, padding, groups)?;
    if let Some(b) = bias {
        if b.len() != g.out_channels {
            return Err(TensorError::ShapeMismatch {
                op: "conv2d bias",
                expected: Shape::new(1, g.out_channels, 1, 1),
                got: b.shape(),
            });
        }
    }
    let mut out = Tensor::zeros(g.out_shape());
    let (cin_g, cout_g) = (g.in_channels / groups, g.out_channels / groups);
    let (in_plane, out_plane) = (g.in_h * g.in_w, g.out_h * g.out_w);
    let k_area = g.kernel_h * g.kernel_w;
    let xd = x.data();
    let wd = weight.data();
    let od = out.data_mut();
    for b in 0..g.batch {
        for oc in 0..g.out_channels {
            let group = oc / cout_g;
            let obase = (b * g.out_channels + oc) * out_plane;
            let oplane = &mut od[obase..obase + out_plane];
            if let Some(bias) = bias {
                oplane.fill(bias.data()[oc]);
            }
            for icg in 0..cin_g {
                let ic = group * cin_g + icg;
                let ibase = (b * g.in_channels + ic) * in_plane;
                let iplane = &xd[ibase..ibase + in_plane];
                let wbase = (oc * cin_g + icg) * k_area;
                for ky in 0..g.kernel_h {
                    for kx in 0..g.kernel_w {
                        let wv = wd[wbase + ky * g.kernel_w + kx];
                        g.for_each_row(ky, kx, |oy, iy, x_lo, x_hi, ix_lo| {
                            let orow = &mut oplane[oy * g.out_w + x_lo..oy * g.out_w + x_hi];
                            let irow = &iplane[iy * g.in_w..(iy + 1) * g.in_w];
                            if g.stride == 1 {
                                for (o, i) in orow.iter_mut().zip(&irow[ix_lo..]) {
                                    *o += wv * i;
                                }
                            } else {
                                for (j, o) in orow.iter_mut().enumerate() {
                                    *o += wv * irow[ix_lo + j * g.stride];
                                }
                            }
                        });
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Gradients of [`conv2d`] with respect to input, weight and bias.
pub fn conv2d_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
    groups: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = ConvGeometry::new(x.shape(), weight.shape(), stride, padding, groups)?;
    if grad_out.shape() != g.out_shape() {
        return Err(TensorError::ShapeMismatch {
            op: "conv2d_backward",
            expected: g.out_shape(),
            got: grad_out.shape(),
        });
    }
    let mut gx = Tensor::zeros(x.shape());
    let mut gw = Tensor::zeros(weight.shape());
    let mut gb = Tensor::zeros([1, g.out_channels, 1, 1]);
    let (cin_g, cout_g) = (g.in_channels / groups, g.out_channels / groups);
    let (in_plane, out_plane) = (g.in_h * g.in_w, g.out_h * g.out_w);
    let k_area = g.kernel_h * g.kernel_w;
    let xd = x.data();
    let wd = weight.data();
    let god = grad_out.data();
    {
        let gbd = gb.data_mut();
        for b in 0..g.batch {
            for oc in 0..g.out_channels {
                let obase = (b * g.out_channels + oc) * out_plane;
                gbd[oc] += god[obase..obase + out_plane].iter().sum::<f64>();
            }
        }
    }
    let gxd = gx.data_mut();
    let gwd = gw.data_mut();
    for b in 0..g.batch {
        for oc in 0..g.out_channels {
            let group = oc / cout_g;
            let obase = (b * g.out_channels + oc) * out_plane;
            let gplane = &god[obase..obase + out_plane];
            for icg in 0..cin_g {
                let ic = group * cin_g + icg;
                let ibase = (b * g.in_channels + ic) * in_plane;
                let wbase = (oc * cin_g + icg) * k_area;
                for ky in 0..g.kernel_h {
                    for kx in 0..g.kernel_w {
                        let widx = wbase + ky * g.kernel_w + kx;
                        let wv = wd[widx];
                        let mut acc = 0.0;
                        g.for_each_row(ky, kx, |oy, iy, x_lo, x_hi, ix_lo| {
                            let grow = &gplane[oy * g.out_w + x_lo..oy * g.out_w + x_hi];
                            let row_start = ibase + iy * g.in_w;
                            let irow = &xd[row_start..row_start + g.in_w];
                            let gxrow = &mut gxd[row_start..row_start + g.in_w];
                            if g.stride == 1 {
                                let mut dot = 0.0;
                                for ((gv, iv), gxv) in grow
                                    .iter()
                                    .zip(&irow[ix_lo..])
                                    .zip(gxrow[ix_lo..].iter_mut())
                                {
                                    dot += gv * iv;
                                    *gxv += wv * gv;
                                }
                                acc += dot;
                            } else {
                                for (j, gv) in grow.iter().enumerate() {
                                    let ix = ix_lo + j * g.stride;
                                    acc += gv * irow[ix];
                                    gxrow[ix] += wv * gv;
                                }
                            }
                        });
                        gwd[widx] += acc;
                    }
                }
            }
        }
    }
    Ok((gx, gw, gb))
}

pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("sub", a, b, |x, y| x - y)
}

pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    zip_with("mul", a, b, |x, y| x * y)
}

fn zip_with(op: &'static str, a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    a.expect_shape(op, b.shape())?;
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data)
}

/// Whether `v` broadcasts against `x` as a per-(batch, channel) factor:
/// `v` is `[1 | n, 1 | c, 1, 1]`.
fn check_channel_broadcast(x: Shape, v: Shape) -> Result<()> {
    let ok = (v.n == 1 || v.n == x.n) && (v.c == 1 || v.c == x.c) && v.h == 1 && v.w == 1;
    if !ok {
        return Err(TensorError::ShapeMismatch {
            op: "channel_scale",
            expected: Shape::new(x.n, x.c, 1, 1),
            got: v,
        });
    }
    Ok(())
}

/// `x * v`, where `v` is `[1 | n, 1 | c, 1, 1]` and is broadcast over the
/// remaining axes. A `[1, 1, 1, 1]` factor scales the whole tensor.
pub fn channel_scale(x: &Tensor, v: &Tensor) -> Result<Tensor> {
    let (xs, vs) = (x.shape(), v.shape());
    check_channel_broadcast(xs, vs)?;
    let mut out = x.clone();
    let p = xs.plane();
    for (i, plane) in out.data_mut().chunks_exact_mut(p).enumerate() {
        let (n, c) = (i / xs.c, i % xs.c);
        let f = v.data()[(n % vs.n) * vs.c + c % vs.c];
        for o in plane {
            *o *= f;
        }
    }
    Ok(out)
}

/// Gradients of [`channel_scale`] with respect to `x` and `v`.
pub fn channel_scale_backward(x: &Tensor, v: &Tensor, grad_out: &Tensor) -> Result<(Tensor, Tensor)> {
    let gx = channel_scale(grad_out, v)?;
    let (xs, vs) = (x.shape(), v.shape());
    let mut gv = Tensor::zeros(vs);
    let p = xs.plane();
    for (i, (xp, gp)) in x.data().chunks_exact(p).zip(grad_out.data().chunks_exact(p)).enumerate() {
        let (n, c) = (i / xs.c, i % xs.c);
        let dot: f64 = xp.iter().zip(gp).map(|(a, b)| a * b).sum();
        gv.data_mut()[(n % vs.n) * vs.c + c % vs.c] += dot;
    }
    Ok((gx, gv))
}

/// Output of [`layer_norm`] plus what its backward pass needs.
pub struct LayerNormOutput {
    pub output: Tensor,
    /// The normalized input before scale/shift.
    pub normalized: Tensor,
    /// `1 / sqrt(var + eps)` per `(n, h, w)` position.
    pub inv_std: Vec<f64>,
}

/// Normalizes the channel vector at every `(n, h, w)` position to zero mean
/// and unit population variance, then applies per-channel scale and shift.
pub fn layer_norm(x: &Tensor, scale: &Tensor, shift: &Tensor, eps: f64) -> Result<LayerNormOutput> {
    let s = x.shape();
    for v in [scale, shift] {
        if v.len() != s.c {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                expected: Shape::new(1, s.c, 1, 1),
                got: v.shape(),
            });
        }
    }
    let p = s.plane();
    let inv_c = 1.0 / s.c as f64;
    let mut normalized = x.clone();
    let mut output = Tensor::zeros(s);
    let mut inv_std = vec![0.0; s.n * p];
    let mut mean = vec![0.0; p];
    let mut var = vec![0.0; p];
    for n in 0..s.n {
        mean.fill(0.0);
        var.fill(0.0);
        for c in 0..s.c {
            for (m, v) in mean.iter_mut().zip(x.plane(n, c)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m *= inv_c);
        for c in 0..s.c {
            for ((acc, v), m) in var.iter_mut().zip(x.plane(n, c)).zip(&mean) {
                let d = v - m;
                *acc += d * d;
            }
        }
        let rstd = &mut inv_std[n * p..(n + 1) * p];
        for (r, v) in rstd.iter_mut().zip(&var) {
            *r = 1.0 / (v * inv_c + eps).sqrt();
        }
        for c in 0..s.c {
            let base = (n * s.c + c) * p;
            let (a, b) = (scale.data()[c], shift.data()[c]);
            let xn = &mut normalized.data_mut()[base..base + p];
            for ((v, m), r) in xn.iter_mut().zip(&mean).zip(rstd.iter()) {
                *v = (*v - m) * r;
            }
            let xn = &normalized.data()[base..base + p];
            for (o, v) in output.data_mut()[base..base + p].iter_mut().zip(xn) {
                *o = v * a + b;
            }
        }
    }
    Ok(LayerNormOutput {
        output,
        normalized,
        inv_std,
    })
}

/// Gradients of [`layer_norm`] with respect to input, scale and shift.
pub fn layer_norm_backward(
    normalized: &Tensor,
    inv_std: &[f64],
    scale: &Tensor,
    grad_out: &Tensor,
) -> (Tensor, Tensor, Tensor) {
    let s = normalized.shape();
    let p = s.plane();
    let inv_c = 1.0 / s.c as f64;
    let mut gx = Tensor::zeros(s);
    let mut gscale = Tensor::zeros([1, s.c, 1, 1]);
    let mut gshift = Tensor::zeros([1, s.c, 1, 1]);
    let mut mean_g = vec![0.0; p];
    let mut mean_gx = vec![0.0; p];
    for n in 0..s.n {
        mean_g.fill(0.0);
        mean_gx.fill(0.0);
        for c in 0..s.c {
            let a = scale.data()[c];
            let (gp, xp) = (grad_out.plane(n, c), normalized.plane(n, c));
            let mut ds = 0.0;
            let mut db = 0.0;
            for i in 0..p {
                let g = gp[i] * a;
                mean_g[i] += g;
                mean_gx[i] += g * xp[i];
                ds += gp[i] * xp[i];
                db += gp[i];
            }
            gscale.data_mut()[c] += ds;
            gshift.data_mut()[c] += db;
        }
        let rstd = &inv_std[n * p..(n + 1) * p];
        for c in 0..s.c {
            let a = scale.data()[c];
            let base = (n * s.c + c) * p;
            let (gp, xp) = (grad_out.plane(n, c), normalized.plane(n, c));
            let out = &mut gx.data_mut()[base..base + p];
            for i in 0..p {
                out[i] = rstd[i] * (gp[i] * a - mean_g[i] * inv_c - xp[i] * mean_gx[i] * inv_c);
            }
        }
    }
    (gx, gscale, gshift)
}

/// Numerically stable softmax of one row, in place.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    let inv = 1.0 / sum;
    for v in row.iter_mut() {
        *v *= inv;
    }
}

/// Softmax over the last (width) axis of every row.
pub fn softmax_rows(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let w = x.shape().w;
    for row in out.data_mut().chunks_exact_mut(w) {
        softmax_in_place(row);
    }
    out
}

pub fn softmax_rows_backward(y: &Tensor, grad_out: &Tensor) -> Tensor {
    let w = y.shape().w;
    let mut gx = Tensor::zeros(y.shape());
    for ((gxr, yr), gr) in gx
        .data_mut()
        .chunks_exact_mut(w)
        .zip(y.data().chunks_exact(w))
        .zip(grad_out.data().chunks_exact(w))
    {
        let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
        for ((o, yv), gv) in gxr.iter_mut().zip(yr).zip(gr) {
            *o = yv * (gv - dot);
        }
    }
    gx
}

/// Output of [`row_attention`] with the attention maps kept for backward.
pub struct AttentionOutput {
    pub output: Tensor,
    /// Row-stochastic `w x w` matrices, one per `(n, h)`, laid out `[n, h, w, w]`.
    pub weights: Vec<f64>,
}

fn check_attention_shapes(q_left: &Tensor, q_right: &Tensor, v: &Tensor) -> Result<Shape> {
    let s = q_left.shape();
    q_left.expect_shape("row_attention", q_right.shape())?;
    q_left.expect_shape("row_attention", v.shape())?;
    Ok(s)
}

/// Cross attention along each image row: for every `(n, h)` the width axis is
/// the sequence and channels are the feature dimension.
/// `out = softmax(Q_left Q_right^T / sqrt(c)) V`.
pub fn row_attention(q_left: &Tensor, q_right: &Tensor, v: &Tensor, keep_weights: bool) -> Result<AttentionOutput> {
    let s = check_attention_shapes(q_left, q_right, v)?;
    let (w, c, h) = (s.w, s.c, s.h);
    let scale = 1.0 / (c as f64).sqrt();
    let mut out = Tensor::zeros(s);
    let mut weights = if keep_weights {
        vec![0.0; s.n * h * w * w]
    } else {
        Vec::new()
    };
    let mut attn = vec![0.0; w * w];
    let row = |t: &Tensor, n: usize, k: usize, y: usize| -> std::ops::Range<usize> {
        let start = t.index(n, k, y, 0);
        start..start + w
    };
    for n in 0..s.n {
        for y in 0..h {
            attn.fill(0.0);
            for k in 0..c {
                let ql = &q_left.data()[row(q_left, n, k, y)];
                let qr = &q_right.data()[row(q_right, n, k, y)];
                for (i, &a) in ql.iter().enumerate() {
                    for (s_ij, b) in attn[i * w..(i + 1) * w].iter_mut().zip(qr) {
                        *s_ij += a * b;
                    }
                }
            }
            for r in attn.chunks_exact_mut(w) {
                r.iter_mut().for_each(|v| *v *= scale);
                softmax_in_place(r);
            }
            for k in 0..c {
                let range = row(v, n, k, y);
                let vr = &v.data()[range.clone()];
                let or = &mut out.data_mut()[range];
                for (i, o) in or.iter_mut().enumerate() {
                    *o = attn[i * w..(i + 1) * w].iter().zip(vr).map(|(a, b)| a * b).sum();
                }
            }
            if keep_weights {
                let base = (n * h + y) * w * w;
                weights[base..base + w * w].copy_from_slice(&attn);
            }
        }
    }
    Ok(AttentionOutput { output: out, weights })
}

/// Gradients of [`row_attention`] with respect to `(q_left, q_right, v)`.
pub fn row_attention_backward(
    q_left: &Tensor,
    q_right: &Tensor,
    v: &Tensor,
    weights: &[f64],
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let s = check_attention_shapes(q_left, q_right, v)?;
    let (w, c, h) = (s.w, s.c, s.h);
    let scale = 1.0 / (c as f64).sqrt();
    let mut gql = Tensor::zeros(s);
    let mut gqr = Tensor::zeros(s);
    let mut gv = Tensor::zeros(s);
    let mut d_attn = vec![0.0; w * w];
    for n in 0..s.n {
        for y in 0..h {
            let base = (n * h + y) * w * w;
            let attn = &weights[base..base + w * w];
            d_attn.fill(0.0);
            for k in 0..c {
                let start = v.index(n, k, y, 0);
                let go = &grad_out.data()[start..start + w];
                let vr = &v.data()[start..start + w];
                let gvr = &mut gv.data_mut()[start..start + w];
                for (i, &g) in go.iter().enumerate() {
                    let arow = &attn[i * w..(i + 1) * w];
                    for ((d, vv), (gvv, a)) in d_attn[i * w..(i + 1) * w]
                        .iter_mut()
                        .zip(vr)
                        .zip(gvr.iter_mut().zip(arow))
                    {
                        *d += g * vv;
                        *gvv += g * a;
                    }
                }
            }
            // softmax backward, folded with the 1/sqrt(c) scale
            for (drow, arow) in d_attn.chunks_exact_mut(w).zip(attn.chunks_exact(w)) {
                let dot: f64 = drow.iter().zip(arow).map(|(a, b)| a * b).sum();
                for (d, a) in drow.iter_mut().zip(arow) {
                    *d = a * (*d - dot) * scale;
                }
            }
            for k in 0..c {
                let start = v.index(n, k, y, 0);
                let ql = &q_left.data()[start..start + w];
                let qr = &q_right.data()[start..start + w];
                for i in 0..w {
                    let ds = &d_attn[i * w..(i + 1) * w];
                    let dot: f64 = ds.iter().zip(qr).map(|(a, b)| a * b).sum();
                    gql.data_mut()[start + i] += dot;
                    let a = ql[i];
                    for (g, d) in gqr.data_mut()[start..start + w].iter_mut().zip(ds) {
                        *g += a * d;
                    }
                }
            }
        }
    }
    Ok((gql, gqr, gv))
}

/// Rearranges `[n, c * r^2, h, w]` into `[n, c, r * h, r * w]`:
/// `out(n, k, r*i + a, r*j + b) = in(n, k*r^2 + a*r + b, i, j)`.
pub fn pixel_shuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let s = x.shape();
    if r == 0 || !s.c.is_multiple_of(r * r) {
        return Err(TensorError::Divisibility {
            op: "pixel_shuffle",
            what: format!("channels {} not divisible by r^2 = {}", s.c, r * r),
        });
    }
    let oc = s.c / (r * r);
    let mut out = Tensor::zeros([s.n, oc, s.h * r, s.w * r]);
    let ow = s.w * r;
    for n in 0..s.n {
        for k in 0..oc {
            for a in 0..r {
                for b in 0..r {
                    let src = x.plane(n, k * r * r + a * r + b);
                    let dst_base = out.index(n, k, 0, 0);
                    let od = out.data_mut();
                    for i in 0..s.h {
                        let orow = dst_base + (r * i + a) * ow;
                        for j in 0..s.w {
                            od[orow + r * j + b] = src[i * s.w + j];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`].
pub fn pixel_unshuffle(x: &Tensor, r: usize) -> Result<Tensor> {
    let s = x.shape();
    if r == 0 || !s.h.is_multiple_of(r) || !s.w.is_multiple_of(r) {
        return Err(TensorError::Divisibility {
            op: "pixel_unshuffle",
            what: format!("spatial size {}x{} not divisible by {r}", s.h, s.w),
        });
    }
    let (h, w) = (s.h / r, s.w / r);
    let mut out = Tensor::zeros([s.n, s.c * r * r, h, w]);
    for n in 0..s.n {
        for k in 0..s.c {
            for a in 0..r {
                for b in 0..r {
                    let ch = k * r * r + a * r + b;
                    for i in 0..h {
                        for j in 0..w {
                            out.set(n, ch, i, j, x.at(n, k, r * i + a, r * j + b));
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Mean over each `h * w` plane, summed in row-major order.
pub fn global_avg_pool(x: &Tensor) -> Tensor {
    let s = x.shape();
    let inv = 1.0 / s.plane() as f64;
    let data = x
        .data()
        .chunks_exact(s.plane())
        .map(|p| p.iter().sum::<f64>() * inv)
        .collect();
    Tensor::from_vec([s.n, s.c, 1, 1], data).expect("pool shape")
}

pub fn global_avg_pool_backward(input_shape: Shape, grad_out: &Tensor) -> Tensor {
    let inv = 1.0 / input_shape.plane() as f64;
    let mut gx = Tensor::zeros(input_shape);
    for (plane, g) in gx.data_mut().chunks_exact_mut(input_shape.plane()).zip(grad_out.data()) {
        plane.fill(g * inv);
    }
    gx
}

/// Pads height and width by `p` on each side, repeating the border samples.
pub fn pad_replicate(x: &Tensor, p: usize) -> Tensor {
    let s = x.shape();
    let (oh, ow) = (s.h + 2 * p, s.w + 2 * p);
    let mut out = Tensor::zeros([s.n, s.c, oh, ow]);
    for (plane_idx, src) in x.data().chunks_exact(s.plane()).enumerate() {
        let dst = &mut out.data_mut()[plane_idx * oh * ow..(plane_idx + 1) * oh * ow];
        for y in 0..oh {
            let sy = y.saturating_sub(p).min(s.h - 1);
            for xx in 0..ow {
                let sx = xx.saturating_sub(p).min(s.w - 1);
                dst[y * ow + xx] = src[sy * s.w + sx];
            }
        }
    }
    out
}

pub fn pad_replicate_backward(input_shape: Shape, p: usize, grad_out: &Tensor) -> Tensor {
    let s = input_shape;
    let (oh, ow) = (s.h + 2 * p, s.w + 2 * p);
    let mut gx = Tensor::zeros(s);
    for (plane_idx, g) in grad_out.data().chunks_exact(oh * ow).enumerate() {
        let dst = &mut gx.data_mut()[plane_idx * s.plane()..(plane_idx + 1) * s.plane()];
        for y in 0..oh {
            let sy = y.saturating_sub(p).min(s.h - 1);
            for xx in 0..ow {
                let sx = xx.saturating_sub(p).min(s.w - 1);
                dst[sy * s.w + sx] += g[y * ow + xx];
            }
        }
    }
    gx
}

/// Stacks `times` copies of `x` along the batch axis.
pub fn repeat_batch(x: &Tensor, times: usize) -> Tensor {
    let s = x.shape();
    let mut data = Vec::with_capacity(x.len() * times);
    for _ in 0..times {
        data.extend_from_slice(x.data());
    }
    Tensor::from_vec([s.n * times, s.c, s.h, s.w], data).expect("repeat shape")
}

pub fn repeat_batch_backward(input_shape: Shape, grad_out: &Tensor) -> Tensor {
    let mut gx = Tensor::zeros(input_shape);
    for chunk in grad_out.data().chunks_exact(input_shape.numel()) {
        for (g, v) in gx.data_mut().iter_mut().zip(chunk) {
            *g += v;
        }
    }
    gx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: [usize; 4], data: &[f64]) -> Tensor {
        Tensor::from_vec(shape, data.to_vec()).unwrap()
    }

    #[test]
    fn ones_kernel_border_arithmetic() {
        let x = Tensor::ones([1, 1, 3, 3]);
        let w = Tensor::ones([1, 1, 3, 3]);
        let y = conv2d(&x, &w, None, 1, 1, 1).unwrap();
        assert_eq!(y.data(), &[4.0, 6.0, 4.0, 6.0, 9.0, 6.0, 4.0, 6.0, 4.0]);
    }

    #[test]
    fn identity_kernel_is_exact() {
        let x = t([1, 1, 2, 3], &[1.5, -2.0, 3.25, 0.1, 7.0, -0.3]);
        let mut w = Tensor::zeros([1, 1, 3, 3]);
        w.set(0, 0, 1, 1, 1.0);
        assert_eq!(conv2d(&x, &w, None, 1, 1, 1).unwrap(), x);
    }

    #[test]
    fn conv_rejects_bad_geometry() {
        let x = Tensor::ones([1, 3, 4, 4]);
        assert!(matches!(
            conv2d(&x, &Tensor::ones([4, 1, 3, 3]), None, 1, 1, 2),
            Err(TensorError::Divisibility { .. })
        ));
        assert!(matches!(
            conv2d(&x, &Tensor::ones([1, 3, 7, 7]), None, 1, 1, 1),
            Err(TensorError::KernelTooLarge { .. })
        ));
        assert!(matches!(
            conv2d(&x, &Tensor::ones([2, 2, 3, 3]), None, 1, 1, 1),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn strided_conv_shape() {
        let x = Tensor::ones([1, 1, 7, 6]);
        let y = conv2d(&x, &Tensor::ones([2, 1, 3, 3]), None, 2, 1, 1).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 2, 4, 3));
        // interior tap covers a full 3x3 window
        assert_eq!(y.at(0, 0, 1, 1), 9.0);
        assert_eq!(y.at(0, 0, 0, 0), 4.0);
    }

    #[test]
    fn layer_norm_two_channel_vector() {
        let x = t([1, 2, 1, 1], &[1.0, 3.0]);
        let out = layer_norm(&x, &Tensor::ones([1, 2, 1, 1]), &Tensor::zeros([1, 2, 1, 1]), 1e-12).unwrap();
        assert!((out.output.data()[0] + 1.0).abs() < 1e-9);
        assert!((out.output.data()[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_constant_is_zero() {
        let x = Tensor::full([2, 5, 3, 3], 4.2);
        let out = layer_norm(&x, &Tensor::ones([1, 5, 1, 1]), &Tensor::zeros([1, 5, 1, 1]), 1e-6).unwrap();
        assert!(out.output.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn softmax_closed_forms() {
        let y = softmax_rows(&t([1, 1, 2, 2], &[0.0, 0.0, 0.0, 3f64.ln()]));
        assert_eq!(&y.data()[..2], &[0.5, 0.5]);
        assert!((y.data()[2] - 0.25).abs() < 1e-15);
        assert!((y.data()[3] - 0.75).abs() < 1e-15);
    }

    #[test]
    fn pixel_shuffle_single_pixel_block() {
        let x = t([1, 4, 1, 1], &[1.0, 2.0, 3.0, 4.0]);
        let y = pixel_shuffle(&x, 2).unwrap();
        assert_eq!(y.shape(), Shape::new(1, 1, 2, 2));
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0]);
        assert!(pixel_shuffle(&Tensor::ones([1, 3, 2, 2]), 2).is_err());
    }

    #[test]
    fn pool_of_four() {
        let y = global_avg_pool(&t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]));
        assert_eq!(y.data(), &[2.5]);
    }

    #[test]
    fn channel_scale_vector() {
        let x = Tensor::ones([1, 2, 2, 2]);
        let y = channel_scale(&x, &Tensor::channel_vector(&[2.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[2.0, 2.0, 2.0, 2.0, 0.0, 0.0, 0.0, 0.0]);
        assert!(channel_scale(&x, &Tensor::ones([1, 3, 1, 1])).is_err());
    }

    #[test]
    fn replicate_padding_edges() {
        let x = t([1, 1, 2, 2], &[1.0, 2.0, 3.0, 4.0]);
        let y = pad_replicate(&x, 1);
        assert_eq!(
            y.data(),
            &[1.0, 1.0, 2.0, 2.0, 1.0, 1.0, 2.0, 2.0, 3.0, 3.0, 4.0, 4.0, 3.0, 3.0, 4.0, 4.0]
        );
        let g = pad_replicate_backward(x.shape(), 1, &Tensor::ones(y.shape()));
        assert_eq!(g.data(), &[4.0, 4.0, 4.0, 4.0]);
    }
}
