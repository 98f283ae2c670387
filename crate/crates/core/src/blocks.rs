//! Building blocks of the stereo SR networks: SimpleGate, simplified channel
//! attention, NAFBlock and its two group-convolution variants, the two stereo
//! cross attention modules, and the trainable edge operator.
//!
//! Each block owns only [`ParamId`]s; its forward pass reads the values from a
//! [`BoundParams`] so the same ids can be bound on a recording tape for
//! training or an inference tape for evaluation.

use crate::autograd::{row_attention, Var};
use crate::params::{BoundParams, ParamId, ParamRegistry};
use crate::tensor::{Result, TensorError};

/// Epsilon under the square root of every layer norm.
pub const LN_EPS: f64 = 1e-6;

/// A convolution with "same" padding and stride 1.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: ParamId,
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub groups: usize,
}

impl Conv {
    pub fn register(
        reg: &mut ParamRegistry,
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        groups: usize,
    ) -> Self {
        assert!(
            in_channels.is_multiple_of(groups) && out_channels.is_multiple_of(groups),
            "{name}: {in_channels}->{out_channels} not divisible into {groups} groups"
        );
        let weight = reg.kaiming(format!("{name}.weight"), out_channels, in_channels / groups, kernel);
        let bias = reg.constant(format!("{name}.bias"), vec![out_channels], 0.0);
        Self {
            weight,
            bias,
            in_channels,
            out_channels,
            kernel,
            groups,
        }
    }

    pub fn pointwise(reg: &mut ParamRegistry, name: &str, cin: usize, cout: usize) -> Self {
        Self::register(reg, name, cin, cout, 1, 1)
    }

    pub fn depthwise(reg: &mut ParamRegistry, name: &str, channels: usize) -> Self {
        Self::register(reg, name, channels, channels, 3, channels)
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        x.conv2d(&p[self.weight], Some(&p[self.bias]), 1, (self.kernel - 1) / 2, self.groups)
    }

    /// Multiply-accumulates per output pixel.
    pub fn macs_per_pixel(&self) -> u64 {
        (self.out_channels * (self.in_channels / self.groups) * self.kernel * self.kernel) as u64
    }
}

/// Channel-axis layer norm parameters.
#[derive(Debug, Clone)]
pub struct Norm {
    pub scale: ParamId,
    pub shift: ParamId,
}

impl Norm {
    pub fn register(reg: &mut ParamRegistry, name: &str, channels: usize) -> Self {
        Self {
            scale: reg.constant(format!("{name}.scale"), vec![channels], 1.0),
            shift: reg.constant(format!("{name}.shift"), vec![channels], 0.0),
        }
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        x.layer_norm(&p[self.scale], &p[self.shift], LN_EPS)
    }
}

/// Splits channels in half and multiplies the halves elementwise.
pub fn simple_gate<'t>(x: &Var<'t>) -> Result<Var<'t>> {
    let c = x.shape().c;
    if !c.is_multiple_of(2) {
        return Err(TensorError::Divisibility {
            op: "simple_gate",
            what: format!("channel count {c} is odd"),
        });
    }
    x.narrow_channels(0, c / 2)?.mul(&x.narrow_channels(c / 2, c / 2)?)
}

/// Simplified channel attention: global average pool, pointwise map with
/// bias, then channel-wise product with the input.
pub fn sca<'t>(p: &BoundParams<'t>, attention: &Conv, x: &Var<'t>) -> Result<Var<'t>> {
    let weights = attention.forward(p, &x.global_avg_pool())?;
    x.channel_scale(&weights)
}

/// Block-internal projection that maps the gated features back to `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    /// 1x1 convolution (NAFBlock).
    Pointwise,
    /// 3x3 grouped convolution (NAFGCBlock-1).
    Grouped { group_width: usize },
}

/// NAFBlock and NAFGCBlock-1: an MBConv branch
/// (LN, expand, 3x3 DW, SimpleGate, [SCA], projection) and an FFN branch
/// (LN, expand, SimpleGate, PW), each added back with a learned
/// per-channel residual scale.
#[derive(Debug, Clone)]
pub struct NafBlockParams {
    pub channels: usize,
    pub norm1: Norm,
    pub expand1: Conv,
    pub depthwise: Conv,
    pub sca: Option<Conv>,
    pub project1: Conv,
    pub beta: ParamId,
    pub norm2: Norm,
    pub expand2: Conv,
    pub project2: Conv,
    pub gamma: ParamId,
}

impl NafBlockParams {
    /// NAFBlock, with or without SCA.
    pub fn naf(reg: &mut ParamRegistry, name: &str, c: usize, expansion: usize, with_sca: bool) -> Self {
        Self::register(reg, name, c, expansion, with_sca, Projection::Pointwise)
    }

    /// NAFGCBlock-1: no SCA, grouped 3x3 projection.
    pub fn gc1(reg: &mut ParamRegistry, name: &str, c: usize, expansion: usize, group_width: usize) -> Self {
        Self::register(reg, name, c, expansion, false, Projection::Grouped { group_width })
    }

    pub fn register(
        reg: &mut ParamRegistry,
        name: &str,
        c: usize,
        expansion: usize,
        with_sca: bool,
        projection: Projection,
    ) -> Self {
        let wide = expansion * c;
        assert!(wide.is_multiple_of(2), "{name}: expanded width {wide} must be even");
        let half = wide / 2;
        let norm1 = Norm::register(reg, &format!("{name}.norm1"), c);
        let expand1 = Conv::pointwise(reg, &format!("{name}.expand1"), c, wide);
        let depthwise = Conv::depthwise(reg, &format!("{name}.dw"), wide);
        let sca = with_sca.then(|| Conv::pointwise(reg, &format!("{name}.sca"), half, half));
        let project1 = match projection {
            Projection::Pointwise => Conv::pointwise(reg, &format!("{name}.project1"), half, c),
            Projection::Grouped { group_width } => {
                Conv::register(reg, &format!("{name}.gconv"), half, c, 3, c / group_width)
            }
        };
        let beta = reg.constant(format!("{name}.beta"), vec![c], 0.0);
        let norm2 = Norm::register(reg, &format!("{name}.norm2"), c);
        let expand2 = Conv::pointwise(reg, &format!("{name}.expand2"), c, wide);
        let project2 = Conv::pointwise(reg, &format!("{name}.project2"), half, c);
        let gamma = reg.constant(format!("{name}.gamma"), vec![c], 0.0);
        Self {
            channels: c,
            norm1,
            expand1,
            depthwise,
            sca,
            project1,
            beta,
            norm2,
            expand2,
            project2,
            gamma,
        }
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        check_channels("naf_block", self.channels, x)?;
        let mut t = self.norm1.forward(p, x)?;
        t = self.expand1.forward(p, &t)?;
        t = self.depthwise.forward(p, &t)?;
        t = simple_gate(&t)?;
        if let Some(attention) = &self.sca {
            t = sca(p, attention, &t)?;
        }
        t = self.project1.forward(p, &t)?;
        let y = x.add(&t.channel_scale(&p[self.beta])?)?;

        let mut t = self.norm2.forward(p, &y)?;
        t = self.expand2.forward(p, &t)?;
        t = simple_gate(&t)?;
        t = self.project2.forward(p, &t)?;
        y.add(&t.channel_scale(&p[self.gamma])?)
    }

    /// Multiply-accumulates per pixel for one application; the SCA matvec
    /// runs once per image and is reported separately by [`Self::macs_per_image`].
    pub fn macs_per_pixel(&self) -> u64 {
        [&self.expand1, &self.depthwise, &self.project1, &self.expand2, &self.project2]
            .iter()
            .map(|c| c.macs_per_pixel())
            .sum()
    }

    pub fn macs_per_image(&self) -> u64 {
        self.sca.as_ref().map_or(0, Conv::macs_per_pixel)
    }
}

/// NAFGCBlock-2: LN, expand, 3x3 DW, SimpleGate, expand, 3x3 grouped
/// projection, with one residual scale. Built to be reapplied recursively.
#[derive(Debug, Clone)]
pub struct NafGcBlock2Params {
    pub channels: usize,
    pub norm: Norm,
    pub expand1: Conv,
    pub depthwise: Conv,
    pub expand2: Conv,
    pub gconv: Conv,
    pub beta: ParamId,
}

impl NafGcBlock2Params {
    pub fn register(reg: &mut ParamRegistry, name: &str, c: usize, expansion: usize, group_width: usize) -> Self {
        let wide = expansion * c;
        assert!(wide.is_multiple_of(2), "{name}: expanded width {wide} must be even");
        let half = wide / 2;
        Self {
            channels: c,
            norm: Norm::register(reg, &format!("{name}.norm"), c),
            expand1: Conv::pointwise(reg, &format!("{name}.expand1"), c, wide),
            depthwise: Conv::depthwise(reg, &format!("{name}.dw"), wide),
            expand2: Conv::pointwise(reg, &format!("{name}.expand2"), half, wide),
            gconv: Conv::register(reg, &format!("{name}.gconv"), wide, c, 3, c / group_width),
            beta: reg.constant(format!("{name}.beta"), vec![c], 0.0),
        }
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, x: &Var<'t>) -> Result<Var<'t>> {
        check_channels("nafgc_block2", self.channels, x)?;
        let mut t = self.norm.forward(p, x)?;
        t = self.expand1.forward(p, &t)?;
        t = self.depthwise.forward(p, &t)?;
        t = simple_gate(&t)?;
        t = self.expand2.forward(p, &t)?;
        t = self.gconv.forward(p, &t)?;
        x.add(&t.channel_scale(&p[self.beta])?)
    }

    pub fn macs_per_pixel(&self) -> u64 {
        [&self.expand1, &self.depthwise, &self.expand2, &self.gconv]
            .iter()
            .map(|c| c.macs_per_pixel())
            .sum()
    }
}

/// Stereo cross attention module with separate per-view projections.
#[derive(Debug, Clone)]
pub struct ScamParams {
    pub channels: usize,
    pub norm_left: Norm,
    pub norm_right: Norm,
    pub query_left: Conv,
    pub query_right: Conv,
    pub value_left: Conv,
    pub value_right: Conv,
    pub gamma_left: ParamId,
    pub gamma_right: ParamId,
}

impl ScamParams {
    pub fn register(reg: &mut ParamRegistry, name: &str, c: usize) -> Self {
        Self {
            channels: c,
            norm_left: Norm::register(reg, &format!("{name}.norm_l"), c),
            norm_right: Norm::register(reg, &format!("{name}.norm_r"), c),
            query_left: Conv::pointwise(reg, &format!("{name}.query_l"), c, c),
            query_right: Conv::pointwise(reg, &format!("{name}.query_r"), c, c),
            value_left: Conv::pointwise(reg, &format!("{name}.value_l"), c, c),
            value_right: Conv::pointwise(reg, &format!("{name}.value_r"), c, c),
            gamma_left: reg.constant(format!("{name}.gamma_l"), vec![c], 0.0),
            gamma_right: reg.constant(format!("{name}.gamma_r"), vec![c], 0.0),
        }
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, left: &Var<'t>, right: &Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        check_pair("scam", self.channels, left, right)?;
        let q_left = self.query_left.forward(p, &self.norm_left.forward(p, left)?)?;
        let q_right = self.query_right.forward(p, &self.norm_right.forward(p, right)?)?;
        let v_left = self.value_left.forward(p, left)?;
        let v_right = self.value_right.forward(p, right)?;
        fuse(p, self.gamma_left, self.gamma_right, left, right, &q_left, &q_right, &v_left, &v_right)
    }

    /// Pointwise projection MACs per pixel of one view pair.
    pub fn macs_per_pixel(&self) -> u64 {
        [&self.query_left, &self.query_right, &self.value_left, &self.value_right]
            .iter()
            .map(|c| c.macs_per_pixel())
            .sum()
    }
}

/// Depth-separated stereo cross attention: one layer norm and one 3x3
/// depthwise convolution shared by both views produce the queries, and the
/// raw inputs serve as values.
#[derive(Debug, Clone)]
pub struct DsscamParams {
    pub channels: usize,
    pub norm: Norm,
    pub depthwise: Conv,
    pub gamma_left: ParamId,
    pub gamma_right: ParamId,
}

impl DsscamParams {
    pub fn register(reg: &mut ParamRegistry, name: &str, c: usize) -> Self {
        Self {
            channels: c,
            norm: Norm::register(reg, &format!("{name}.norm"), c),
            depthwise: Conv::depthwise(reg, &format!("{name}.dw"), c),
            gamma_left: reg.constant(format!("{name}.gamma_l"), vec![c], 0.0),
            gamma_right: reg.constant(format!("{name}.gamma_r"), vec![c], 0.0),
        }
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, left: &Var<'t>, right: &Var<'t>) -> Result<(Var<'t>, Var<'t>)> {
        check_pair("dsscam", self.channels, left, right)?;
        let q_left = self.depthwise.forward(p, &self.norm.forward(p, left)?)?;
        let q_right = self.depthwise.forward(p, &self.norm.forward(p, right)?)?;
        fuse(p, self.gamma_left, self.gamma_right, left, right, &q_left, &q_right, left, right)
    }

    /// Depthwise MACs per pixel of one view pair.
    pub fn macs_per_pixel(&self) -> u64 {
        2 * self.depthwise.macs_per_pixel()
    }
}

/// Cross-view attention in both directions followed by the scaled residual
/// fusion `F_L = gamma_L * F_{R->L} + X_L` (and symmetrically for the right).
#[allow(clippy::too_many_arguments)]
fn fuse<'t>(
    p: &BoundParams<'t>,
    gamma_left: ParamId,
    gamma_right: ParamId,
    left: &Var<'t>,
    right: &Var<'t>,
    q_left: &Var<'t>,
    q_right: &Var<'t>,
    v_left: &Var<'t>,
    v_right: &Var<'t>,
) -> Result<(Var<'t>, Var<'t>)> {
    let right_to_left = row_attention(q_left, q_right, v_right)?;
    let left_to_right = row_attention(q_right, q_left, v_left)?;
    let out_left = left.add(&right_to_left.channel_scale(&p[gamma_left])?)?;
    let out_right = right.add(&left_to_right.channel_scale(&p[gamma_right])?)?;
    Ok((out_left, out_right))
}

/// Trainable 3x3 edge kernel shared across the three color channels plus a
/// scalar mix weight: `out = base + mix * edge(base)`.
#[derive(Debug, Clone)]
pub struct EdgeOpParams {
    pub kernel: ParamId,
    pub mix: ParamId,
}

/// Discrete Laplacian used as the initial edge kernel.
pub const LAPLACIAN: [f64; 9] = [0.0, 1.0, 0.0, 1.0, -4.0, 1.0, 0.0, 1.0, 0.0];

impl EdgeOpParams {
    pub fn register(reg: &mut ParamRegistry, name: &str) -> Self {
        Self {
            kernel: reg.explicit(format!("{name}.kernel"), vec![1, 1, 3, 3], LAPLACIAN.to_vec()),
            mix: reg.constant(format!("{name}.mix"), vec![1], 0.0),
        }
    }

    /// Edge response of `base`: the shared kernel applied per channel over a
    /// replicate-padded border.
    pub fn edge_map<'t>(&self, p: &BoundParams<'t>, base: &Var<'t>) -> Result<Var<'t>> {
        let c = base.shape().c;
        let kernel = p[self.kernel].repeat_batch(c);
        base.pad_replicate(1).conv2d(&kernel, None, 1, 0, c)
    }

    pub fn forward<'t>(&self, p: &BoundParams<'t>, base: &Var<'t>) -> Result<Var<'t>> {
        let edges = self.edge_map(p, base)?;
        base.add(&edges.channel_scale(&p[self.mix])?)
    }
}

fn check_channels(op: &'static str, expected: usize, x: &Var<'_>) -> Result<()> {
    let s = x.shape();
    if s.c != expected {
        return Err(TensorError::ShapeMismatch {
            op,
            expected: crate::tensor::Shape::new(s.n, expected, s.h, s.w),
            got: s,
        });
    }
    Ok(())
}

fn check_pair(op: &'static str, channels: usize, left: &Var<'_>, right: &Var<'_>) -> Result<()> {
    check_channels(op, channels, left)?;
    if left.shape() != right.shape() {
        return Err(TensorError::ShapeMismatch {
            op,
            expected: left.shape(),
            got: right.shape(),
        });
    }
    Ok(())
}
