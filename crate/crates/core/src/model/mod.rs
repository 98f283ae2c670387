//! Stereo super-resolution network assembled from an [`ArchConfig`].
//!
//! Each view is lifted to `c` channels by a 3x3 convolution, passed through
//! the block slots (each slot's block applied `repeats` times and followed by
//! a cross-view module), projected to `3 * upscale^2` channels and
//! pixel-shuffled, then added to the bicubic upsampling of the input. The
//! optional edge operator post-processes that sum.

mod config;
mod presets;
pub mod weights;

use std::path::Path;

pub use config::{ArchConfig, BlockKind, BlockSlot, CrossKind, DEFAULT_RECURSION};
pub use presets::{ablation_table, AblationRow, Preset};
pub use weights::WeightsError;

use crate::autograd::{Tape, Var};
use crate::blocks::{Conv, DsscamParams, EdgeOpParams, NafBlockParams, NafGcBlock2Params, ScamParams};
use crate::imageio::resample::upscale_tensor;
use crate::imageio::{Image, ImageError};
use crate::params::{BoundParams, ParamRegistry, ParameterStore};
use crate::stereo::StereoPair;
use crate::tensor::{Tensor, TensorError};

#[derive(Debug, thiserror::Error)]
pub enum ModelError {
    #[error("invalid architecture: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Weights(#[from] WeightsError),
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;

/// A preset name or the path of an architecture file.
pub fn resolve_arch(spec: &str) -> Result<(String, ArchConfig)> {
    if let Ok(preset) = spec.parse::<Preset>() {
        return Ok((preset.name().to_string(), preset.config()));
    }
    let path = Path::new(spec);
    if path.is_file() {
        let text = std::fs::read_to_string(path).map_err(|e| ImageError::Io {
            path: spec.to_string(),
            source: e,
        })?;
        let config = ArchConfig::parse(&text)?;
        let name = path.file_stem().map_or(spec.into(), |s| s.to_string_lossy().into_owned());
        return Ok((name, config));
    }
    spec.parse::<Preset>().map(|p| (p.name().to_string(), p.config()))
}

/// Smallest input side the 3x3 convolutions accept.
pub const MIN_INPUT_SIDE: usize = 3;

#[derive(Debug, Clone)]
enum Block {
    Naf(NafBlockParams),
    Gc2(NafGcBlock2Params),
}

impl Block {
    fn forward<'t>(&self, p: &BoundParams<'t>, x: &Var<'t>) -> Result<Var<'t>, TensorError> {
        match self {
            Self::Naf(b) => b.forward(p, x),
            Self::Gc2(b) => b.forward(p, x),
        }
    }

    fn macs(&self, pixels: u64) -> u64 {
        match self {
            Self::Naf(b) => b.macs_per_pixel() * pixels + b.macs_per_image(),
            Self::Gc2(b) => b.macs_per_pixel() * pixels,
        }
    }
}

#[derive(Debug, Clone)]
enum Cross {
    Scam(ScamParams),
    Dsscam(DsscamParams),
    None,
}

impl Cross {
    fn forward<'t>(
        &self,
        p: &BoundParams<'t>,
        left: Var<'t>,
        right: Var<'t>,
    ) -> Result<(Var<'t>, Var<'t>), TensorError> {
        match self {
            Self::Scam(m) => m.forward(p, &left, &right),
            Self::Dsscam(m) => m.forward(p, &left, &right),
            Self::None => Ok((left, right)),
        }
    }
}

#[derive(Debug, Clone)]
struct Layout {
    intro: Conv,
    slots: Vec<(Block, usize)>,
    cross: Vec<Cross>,
    tail: Conv,
    edge: Option<EdgeOpParams>,
}

#[derive(Debug, Clone)]
pub struct Model {
    config: ArchConfig,
    store: ParameterStore,
    layout: Layout,
}

impl Model {
    /// Builds the network with freshly initialized weights.
    pub fn new(config: ArchConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let c = config.channels;
        let s = config.expansion;
        let gw = config.group_width;
        let mut reg = ParamRegistry::new(seed);
        let intro = Conv::register(&mut reg, "intro", 3, c, 3, 1);
        let mut slots = Vec::with_capacity(config.blocks.len());
        let mut cross = Vec::with_capacity(config.blocks.len());
        for (i, slot) in config.blocks.iter().enumerate() {
            let name = format!("blocks.{i}");
            let block = match slot.kind {
                BlockKind::Naf => Block::Naf(NafBlockParams::naf(&mut reg, &name, c, s, config.sca)),
                BlockKind::NafGc1 => Block::Naf(NafBlockParams::gc1(&mut reg, &name, c, s, gw)),
                BlockKind::NafGc2 => Block::Gc2(NafGcBlock2Params::register(&mut reg, &name, c, s, gw)),
            };
            slots.push((block, slot.repeats));
            let name = format!("cross.{i}");
            cross.push(match config.cross {
                CrossKind::Scam => Cross::Scam(ScamParams::register(&mut reg, &name, c)),
                CrossKind::Dsscam => Cross::Dsscam(DsscamParams::register(&mut reg, &name, c)),
                CrossKind::None => Cross::None,
            });
        }
        let up = config.upscale;
        let tail = Conv::register(&mut reg, "tail", c, 3 * up * up, 3, 1);
        let edge = config.edge.then(|| EdgeOpParams::register(&mut reg, "edge"));
        Ok(Self {
            config,
            store: reg.finish(),
            layout: Layout {
                intro,
                slots,
                cross,
                tail,
                edge,
            },
        })
    }

    pub fn from_preset(preset: Preset, seed: u64) -> Result<Self> {
        Self::new(preset.config(), seed)
    }

    pub fn config(&self) -> &ArchConfig {
        &self.config
    }

    pub fn params(&self) -> &ParameterStore {
        &self.store
    }

    pub fn params_mut(&mut self) -> &mut ParameterStore {
        &mut self.store
    }

    /// Total number of trainable scalars. Shared weights count once.
    pub fn count_params(&self) -> usize {
        self.store.numel()
    }

    /// Multiply-accumulates of one forward pass on an `h x w` low-resolution
    /// stereo pair (both views).
    ///
    /// Counted: every convolution (`out_pixels * cout * cin / groups * k^2`),
    /// including the per-image SCA matvec and the edge kernel at output
    /// resolution, and both attention products of every cross module
    /// (`2 * h * w^2 * c` per direction). Recursive slots count once per
    /// application. Elementwise ops, norms, softmax and the bicubic skip are
    /// not counted.
    pub fn count_macs(&self, h: usize, w: usize) -> u64 {
        let px = (h * w) as u64;
        let c = self.config.channels as u64;
        let up = self.config.upscale as u64;
        let mut per_view = self.layout.intro.macs_per_pixel() * px;
        for (block, repeats) in &self.layout.slots {
            per_view += block.macs(px) * *repeats as u64;
        }
        per_view += self.layout.tail.macs_per_pixel() * px;
        if self.layout.edge.is_some() {
            per_view += px * up * up * 3 * 9;
        }
        let attention = 2 * 2 * (h * w * w) as u64 * c;
        let cross: u64 = self
            .layout
            .cross
            .iter()
            .map(|m| match m {
                Cross::Scam(s) => s.macs_per_pixel() * px + attention,
                Cross::Dsscam(d) => d.macs_per_pixel() * px + attention,
                Cross::None => 0,
            })
            .sum();
        2 * per_view + cross
    }

    /// Runs the network on a batch of stereo inputs `[n, 3, h, w]` in `[0, 1]`.
    ///
    /// `params` must come from [`ParameterStore::bind`] on this model's store.
    pub fn forward<'t>(
        &self,
        tape: &'t Tape,
        params: &BoundParams<'t>,
        lr: &StereoPair<Tensor>,
    ) -> Result<StereoPair<Var<'t>>> {
        let s = lr.left.shape();
        if s.c != 3 {
            return Err(ModelError::Input(format!("expected 3 color channels, got {s}")));
        }
        if lr.right.shape() != s {
            return Err(ModelError::Input(format!(
                "left view {s} and right view {} differ in shape",
                lr.right.shape()
            )));
        }
        if s.h < MIN_INPUT_SIDE || s.w < MIN_INPUT_SIDE {
            return Err(ModelError::Input(format!(
                "input {}x{} is smaller than {MIN_INPUT_SIDE}x{MIN_INPUT_SIDE}",
                s.w, s.h
            )));
        }
        let l = &self.layout;
        let up = self.config.upscale;
        let mut left = l.intro.forward(params, &tape.constant(lr.left.clone()))?;
        let mut right = l.intro.forward(params, &tape.constant(lr.right.clone()))?;
        for ((block, repeats), cross) in l.slots.iter().zip(&l.cross) {
            for _ in 0..*repeats {
                left = block.forward(params, &left)?;
                right = block.forward(params, &right)?;
            }
            (left, right) = cross.forward(params, left, right)?;
        }
        let finish = |features: &Var<'t>, input: &Tensor| -> Result<Var<'t>> {
            let residual = l.tail.forward(params, features)?.pixel_shuffle(up)?;
            let base = residual.add(&tape.constant(upscale_tensor(input, up)?))?;
            Ok(match &l.edge {
                Some(edge) => edge.forward(params, &base)?,
                None => base,
            })
        };
        Ok(StereoPair::new(finish(&left, &lr.left)?, finish(&right, &lr.right)?))
    }

    /// Forward pass without gradient bookkeeping.
    pub fn infer(&self, lr: &StereoPair<Tensor>) -> Result<StereoPair<Tensor>> {
        let tape = Tape::inference();
        let params = self.store.bind(&tape);
        let out = self.forward(&tape, &params, lr)?;
        Ok(out.map(|v| v.value().clone()))
    }

    /// Super-resolves an 8-bit stereo pair, quantizing the output.
    pub fn infer_images(&self, lr: &StereoPair<Image>) -> Result<StereoPair<Image>> {
        let out = self.infer(&lr.as_ref().map(Image::to_tensor))?;
        Ok(out.try_map(|t| Image::from_tensor(&t, 0))?)
    }

    /// MACs recorded by an actual forward pass at `h x w`, for checking
    /// [`Model::count_macs`]. Input values do not affect the count.
    pub fn measure_macs(&self, h: usize, w: usize) -> Result<u64> {
        let tape = Tape::inference();
        let params = self.store.bind(&tape);
        let input = Tensor::full([1, 3, h, w], 0.5);
        self.forward(&tape, &params, &StereoPair::new(input.clone(), input))?;
        Ok(tape.macs())
    }

    pub fn weights_to_bytes(&self) -> Vec<u8> {
        weights::store_to_bytes(&self.store)
    }

    pub fn load_weights_bytes(&mut self, bytes: &[u8]) -> Result<(), WeightsError> {
        weights::load_into_store(&mut self.store, bytes)
    }

    pub fn save_weights(&self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        weights::write_file(path.as_ref(), &self.weights_to_bytes())
    }

    /// Loads weights saved from a model with the same architecture. On error
    /// the current weights are left untouched.
    pub fn load_weights(&mut self, path: impl AsRef<Path>) -> Result<(), WeightsError> {
        let bytes = weights::read_file(path.as_ref())?;
        self.load_weights_bytes(&bytes)
    }
}
