//! Seeded synthetic stereo scenes for demos, tests and benchmarks.
//!
//! A scene is a textured background plane plus a few rectangles floating in
//! front of it. The right view samples the same scene with every layer
//! shifted left by its disparity, so rows stay epipolar-aligned.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imageio::Image;
use crate::stereo::StereoPair;

#[derive(Debug, Clone)]
struct Layer {
    x0: f64,
    y0: f64,
    w: f64,
    h: f64,
    color: [f64; 3],
    disparity: f64,
    stripes: f64,
}

#[derive(Debug, Clone)]
pub struct Scene {
    waves: Vec<([f64; 3], f64, f64, f64)>,
    layers: Vec<Layer>,
    background_disparity: f64,
}

impl Scene {
    /// Random scene for a `width x height` frame with disparities up to
    /// `max_disparity` pixels.
    pub fn random(width: usize, height: usize, max_disparity: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let waves = (0..4)
            .map(|_| {
                let color = [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)];
                (color, rng.gen_range(0.02..0.25), rng.gen_range(0.02..0.25), rng.gen_range(0.0..std::f64::consts::TAU))
            })
            .collect();
        let (w, h) = (width as f64, height as f64);
        let layers = (0..5)
            .map(|_| Layer {
                x0: rng.gen_range(0.0..w * 0.8),
                y0: rng.gen_range(0.0..h * 0.8),
                w: rng.gen_range(w * 0.08..w * 0.35),
                h: rng.gen_range(h * 0.1..h * 0.5),
                color: [rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0), rng.gen_range(0.0..1.0)],
                disparity: rng.gen_range(max_disparity * 0.3..=max_disparity),
                stripes: rng.gen_range(0.0..0.6),
            })
            .collect();
        Self {
            waves,
            layers,
            background_disparity: max_disparity * 0.1,
        }
    }

    /// Color at continuous scene coordinates `(x, y)` as seen from a camera
    /// shifted by `view` (0 for the left eye, 1 for the right).
    fn sample(&self, x: f64, y: f64, view: f64) -> [f64; 3] {
        for layer in self.layers.iter().rev() {
            let lx = x + view * layer.disparity - layer.x0;
            let ly = y - layer.y0;
            if (0.0..layer.w).contains(&lx) && (0.0..layer.h).contains(&ly) {
                let stripe = if ((lx / 3.0).floor() as i64) % 2 == 0 { 1.0 } else { 1.0 - layer.stripes };
                return layer.color.map(|c| c * stripe);
            }
        }
        let bx = x + view * self.background_disparity;
        let mut rgb = [0.5; 3];
        for (color, fx, fy, phase) in &self.waves {
            let s = (bx * fx + y * fy + phase).sin() * 0.12;
            for (v, c) in rgb.iter_mut().zip(color) {
                *v += s * c;
            }
        }
        rgb
    }

    /// Renders both views with 2x2 supersampling.
    pub fn render(&self, width: usize, height: usize) -> StereoPair<Image> {
        let view = |v: f64| {
            Image::from_fn(width, height, |x, y| {
                let mut acc = [0.0; 3];
                for (dx, dy) in [(0.25, 0.25), (0.75, 0.25), (0.25, 0.75), (0.75, 0.75)] {
                    let s = self.sample(x as f64 + dx, y as f64 + dy, v);
                    for (a, b) in acc.iter_mut().zip(s) {
                        *a += b / 4.0;
                    }
                }
                acc.map(crate::imageio::quantize)
            })
            .expect("non-empty frame")
        };
        StereoPair::new(view(0.0), view(1.0))
    }
}

/// Renders a random stereo pair.
pub fn stereo_pair(width: usize, height: usize, max_disparity: f64, seed: u64) -> StereoPair<Image> {
    Scene::random(width, height, max_disparity, seed).render(width, height)
}
