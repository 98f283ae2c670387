//! Wall-clock timing of inference forward passes.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::model::{Model, Result};
use crate::stereo::StereoPair;
use crate::tensor::Tensor;

/// Summary of repeated timings, in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchStats {
    pub samples: Vec<f64>,
    pub median: f64,
    /// Interquartile range.
    pub iqr: f64,
}

impl BenchStats {
    pub fn from_samples(mut samples: Vec<f64>) -> Self {
        assert!(!samples.is_empty(), "at least one timing");
        samples.sort_by(f64::total_cmp);
        let median = quantile(&samples, 0.5);
        let iqr = quantile(&samples, 0.75) - quantile(&samples, 0.25);
        Self { samples, median, iqr }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Times `iters` inference passes on a random `h x w` stereo pair after one
/// untimed warm-up pass.
pub fn time_forward(model: &Model, h: usize, w: usize, iters: usize, seed: u64) -> Result<BenchStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let input = StereoPair::new(
        Tensor::uniform([1, 3, h, w], 0.0, 1.0, &mut rng),
        Tensor::uniform([1, 3, h, w], 0.0, 1.0, &mut rng),
    );
    model.infer(&input)?;
    let mut samples = Vec::with_capacity(iters.max(1));
    for _ in 0..iters.max(1) {
        let start = Instant::now();
        model.infer(&input)?;
        samples.push(start.elapsed().as_secs_f64());
    }
    Ok(BenchStats::from_samples(samples))
}
