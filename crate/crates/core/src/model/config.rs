//! Architecture description and its key-value text format.
//!
//! ```text
//! # NAFRSSR-M-like network
//! channels = 64
//! blocks = 8                # block slots, each followed by a cross module
//! schedule = nafgc2*8       # naf | nafgc1 | nafgc2, optional *count
//! recursion = 2             # one value for every nafgc2 slot, or a per-slot list
//! cross = dsscam            # scam | dsscam | none
//! expansion = 2
//! group_width = 4
//! sca = true                # SCA inside naf blocks
//! edge = true
//! ```

use std::fmt;
use std::str::FromStr;

use super::ModelError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BlockKind {
    /// NAFBlock.
    Naf,
    /// NAFGCBlock-1.
    NafGc1,
    /// NAFGCBlock-2, the recursive-capable block.
    NafGc2,
}

impl BlockKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Naf => "naf",
            Self::NafGc1 => "nafgc1",
            Self::NafGc2 => "nafgc2",
        }
    }
}

impl FromStr for BlockKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "naf" | "nafblock" => Ok(Self::Naf),
            "nafgc1" | "gc1" => Ok(Self::NafGc1),
            "nafgc2" | "gc2" => Ok(Self::NafGc2),
            other => Err(ModelError::Config(format!("unknown block kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CrossKind {
    Scam,
    Dsscam,
    None,
}

impl CrossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Scam => "scam",
            Self::Dsscam => "dsscam",
            Self::None => "none",
        }
    }
}

impl FromStr for CrossKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        match s.trim().to_ascii_lowercase().as_str() {
            "scam" => Ok(Self::Scam),
            "dsscam" => Ok(Self::Dsscam),
            "none" => Ok(Self::None),
            other => Err(ModelError::Config(format!("unknown cross module {other:?}"))),
        }
    }
}

/// One weight set in the block stack, applied `repeats` times in a row.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSlot {
    pub kind: BlockKind,
    pub repeats: usize,
}

impl BlockSlot {
    pub const fn once(kind: BlockKind) -> Self {
        Self { kind, repeats: 1 }
    }

    pub const fn recursive(repeats: usize) -> Self {
        Self {
            kind: BlockKind::NafGc2,
            repeats,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArchConfig {
    pub channels: usize,
    pub blocks: Vec<BlockSlot>,
    pub cross: CrossKind,
    pub expansion: usize,
    pub group_width: usize,
    pub sca: bool,
    pub edge: bool,
    pub upscale: usize,
}

/// Repeat count given to NAFGCBlock-2 slots when none is specified.
pub const DEFAULT_RECURSION: usize = 2;

impl ArchConfig {
    /// `count` identical slots of `kind` with default settings.
    pub fn uniform(channels: usize, kind: BlockKind, count: usize, cross: CrossKind) -> Self {
        let repeats = if kind == BlockKind::NafGc2 { DEFAULT_RECURSION } else { 1 };
        Self {
            channels,
            blocks: vec![BlockSlot { kind, repeats }; count],
            cross,
            expansion: 2,
            group_width: 4,
            sca: true,
            edge: false,
            upscale: 4,
        }
    }

    /// `gc1` NAFGCBlock-1 slots followed by `gc2` NAFGCBlock-2 slots with the
    /// default recursion, DSSCAM, and the edge operator.
    pub fn nafrssr(channels: usize, gc1: usize, gc2: usize) -> Self {
        let mut blocks = vec![BlockSlot::once(BlockKind::NafGc1); gc1];
        blocks.extend(std::iter::repeat_n(BlockSlot::recursive(DEFAULT_RECURSION), gc2));
        Self {
            blocks,
            edge: true,
            ..Self::uniform(channels, BlockKind::Naf, 0, CrossKind::Dsscam)
        }
    }

    /// Number of block applications, counting recursion.
    pub fn logical_blocks(&self) -> usize {
        self.blocks.iter().map(|b| b.repeats).sum()
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: String| Err(ModelError::Config(msg));
        if self.channels == 0 || self.expansion == 0 || self.upscale == 0 {
            return bad("channels, expansion and upscale must be >= 1".into());
        }
        if !(self.expansion * self.channels).is_multiple_of(2) {
            return bad(format!(
                "expansion {} x channels {} must be even for SimpleGate",
                self.expansion, self.channels
            ));
        }
        let grouped = self.blocks.iter().any(|b| b.kind != BlockKind::Naf);
        if grouped && (self.group_width == 0 || !self.channels.is_multiple_of(self.group_width)) {
            return bad(format!(
                "channels {} not divisible by group width {}",
                self.channels, self.group_width
            ));
        }
        for (i, b) in self.blocks.iter().enumerate() {
            if b.repeats == 0 {
                return bad(format!("block {i}: recursion count must be >= 1"));
            }
            if b.repeats > 1 && b.kind != BlockKind::NafGc2 {
                return bad(format!("block {i}: recursion is only allowed on nafgc2 blocks"));
            }
        }
        if grouped && self.blocks.iter().any(|b| b.kind == BlockKind::NafGc1)
            && !(self.expansion * self.channels / 2).is_multiple_of(self.channels / self.group_width)
        {
            return bad("grouped projection input not divisible into groups".into());
        }
        Ok(())
    }

    /// Parses the key-value format shown in the module docs.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut channels = None;
        let mut blocks = None;
        let mut schedule: Option<Vec<BlockKind>> = None;
        let mut recursion: Option<Vec<usize>> = None;
        let mut config = Self::uniform(1, BlockKind::Naf, 0, CrossKind::None);
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| ModelError::Config(format!("line {}: {msg}", lineno + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("{key}: bad integer {v:?}")));
            let boolean = |v: &str| match v.to_ascii_lowercase().as_str() {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(err(format!("{key}: bad boolean {v:?}"))),
            };
            match key {
                "channels" => channels = Some(int(value)?),
                "blocks" => blocks = Some(int(value)?),
                "schedule" => {
                    let mut kinds = Vec::new();
                    for token in value.split(',').filter(|t| !t.trim().is_empty()) {
                        let token = token.trim();
                        let (kind, count) = match token.split_once('*') {
                            Some((k, n)) => (k, int(n.trim())?),
                            None => (token, 1),
                        };
                        let kind: BlockKind = kind.parse().map_err(|e: ModelError| err(e.to_string()))?;
                        kinds.extend(std::iter::repeat_n(kind, count));
                    }
                    schedule = Some(kinds);
                }
                "recursion" => {
                    recursion = Some(
                        value
                            .split(',')
                            .filter(|v| !v.trim().is_empty())
                            .map(|v| int(v.trim()))
                            .collect::<Result<_, _>>()?,
                    );
                }
                "cross" => config.cross = value.parse().map_err(|e: ModelError| err(e.to_string()))?,
                "expansion" => config.expansion = int(value)?,
                "group_width" => config.group_width = int(value)?,
                "sca" => config.sca = boolean(value)?,
                "edge" => config.edge = boolean(value)?,
                "upscale" => config.upscale = int(value)?,
                other => return Err(err(format!("unknown key {other:?}"))),
            }
        }
        config.channels = channels.ok_or_else(|| ModelError::Config("missing key `channels`".into()))?;
        let kinds = match (schedule, blocks) {
            (Some(k), Some(n)) if k.len() != n => {
                return Err(ModelError::Config(format!(
                    "schedule lists {} blocks but blocks = {n}",
                    k.len()
                )))
            }
            (Some(k), _) => k,
            (None, Some(n)) => vec![BlockKind::Naf; n],
            (None, None) => return Err(ModelError::Config("one of `blocks` or `schedule` is required".into())),
        };
        let repeats: Vec<usize> = match recursion {
            None => kinds
                .iter()
                .map(|&k| if k == BlockKind::NafGc2 { DEFAULT_RECURSION } else { 1 })
                .collect(),
            Some(r) if r.len() == 1 && kinds.len() != 1 => kinds
                .iter()
                .map(|&k| if k == BlockKind::NafGc2 { r[0] } else { 1 })
                .collect(),
            Some(r) if r.len() == kinds.len() => r,
            Some(r) => {
                return Err(ModelError::Config(format!(
                    "recursion lists {} values for {} blocks",
                    r.len(),
                    kinds.len()
                )))
            }
        };
        config.blocks = kinds
            .into_iter()
            .zip(repeats)
            .map(|(kind, repeats)| BlockSlot { kind, repeats })
            .collect();
        config.validate()?;
        Ok(config)
    }

    /// Serializes to the key-value format; [`ArchConfig::parse`] reads it back.
    pub fn to_kv_string(&self) -> String {
        let schedule: Vec<&str> = self.blocks.iter().map(|b| b.kind.as_str()).collect();
        let recursion: Vec<String> = self.blocks.iter().map(|b| b.repeats.to_string()).collect();
        format!(
            "channels = {}\nblocks = {}\nschedule = {}\nrecursion = {}\ncross = {}\nexpansion = {}\ngroup_width = {}\nsca = {}\nedge = {}\nupscale = {}\n",
            self.channels,
            self.blocks.len(),
            schedule.join(","),
            recursion.join(","),
            self.cross.as_str(),
            self.expansion,
            self.group_width,
            self.sca,
            self.edge,
            self.upscale
        )
    }
}

impl fmt::Display for ArchConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "c={} slots={} logical={} cross={} s={} gw={} sca={} edge={}",
            self.channels,
            self.blocks.len(),
            self.logical_blocks(),
            self.cross.as_str(),
            self.expansion,
            self.group_width,
            self.sca,
            self.edge
        )
    }
}
