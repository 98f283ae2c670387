//! Compares backpropagated gradients of a whole model with central finite
//! differences of its loss.
//!
//! `cargo run --release --example gradient_check`

use nafrssr::tensor::Tensor;
use nafrssr::training::{evaluate_loss, loss_and_grads};
use nafrssr::{ArchConfig, Model, StereoPair};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const STEP: f64 = 1e-5;

fn main() -> anyhow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut model = Model::new(ArchConfig::nafrssr(8, 1, 1), 0)?;
    // move the residual scales off zero so every branch carries gradient
    for p in model.params_mut().iter_mut() {
        for v in &mut p.values {
            *v += rng.gen_range(-0.2..0.2);
        }
    }
    let (h, w) = (3, 5);
    let mut image = |hh, ww| Tensor::uniform([1, 3, hh, ww], 0.0, 1.0, &mut rng);
    let lr = StereoPair::new(image(h, w), image(h, w));
    let hr = StereoPair::new(image(4 * h, 4 * w), image(4 * h, 4 * w));

    let (_, grads) = loss_and_grads(&model, &lr, &hr)?;
    let names: Vec<String> = model.params().iter().map(|p| p.name.clone()).collect();
    let mut worst: f64 = 0.0;
    println!("{:<28} {:>14} {:>14} {:>10}", "parameter", "analytic", "numeric", "rel err");
    for (i, name) in names.iter().enumerate() {
        let j = rng.gen_range(0..grads[i].len());
        let original = model.params().iter().nth(i).unwrap().values[j];
        let mut loss_at = |value: f64| -> anyhow::Result<f64> {
            model.params_mut().iter_mut().nth(i).unwrap().values[j] = value;
            Ok(evaluate_loss(&model, &lr, &hr)?)
        };
        let numeric = (loss_at(original + STEP)? - loss_at(original - STEP)?) / (2.0 * STEP);
        loss_at(original)?;
        let analytic = grads[i][j];
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(rel);
        println!("{:<28} {:>14.6e} {:>14.6e} {:>10.2e}", format!("{name}[{j}]"), analytic, numeric, rel);
    }
    println!("worst relative error over {} parameters: {worst:.2e}", names.len());
    Ok(())
}
