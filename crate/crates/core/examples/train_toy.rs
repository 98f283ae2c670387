//! Trains a small recursive model on synthetic stereo patches and saves a
//! checkpoint. The architecture matches `examples/configs/toy.arch`.
//!
//! `cargo run --release --example train_toy -- [steps] [out.nfrw]`

use std::path::PathBuf;

use nafrssr::imageio::{PatchConfig, PatchSet};
use nafrssr::metrics::degrade;
use nafrssr::training::{batch_tensors, evaluate_loss, save_checkpoint, train, TrainConfig};
use nafrssr::{synthetic, ArchConfig, Model};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let steps: usize = args.next().map_or(Ok(300), |s| s.parse())?;
    let out = PathBuf::from(args.next().unwrap_or_else(|| "target/train_toy.nfrw".into()));

    let patch = PatchConfig::default();
    let mut patches = PatchSet::default();
    for seed in 0..3 {
        let hr = synthetic::stereo_pair(2 * 4 * patch.width, 4 * patch.height + 80, 16.0, seed);
        patches.extend_from(&degrade(&hr, 4)?, &hr, patch)?;
    }
    println!("{} patches of {}x{} LR pixels", patches.len(), patch.height, patch.width);

    let mut model = Model::new(ArchConfig::nafrssr(16, 1, 1), 0)?;
    println!("model: {} parameters", model.count_params());
    let (lr, hr) = batch_tensors(&patches.patches)?;
    println!("loss before: {:.4e}", evaluate_loss(&model, &lr, &hr)?);

    let config = TrainConfig {
        steps,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let every = (steps / 10).max(1);
    let outcome = train(&mut model, &patches, &config, |r| {
        if r.step % every == 0 {
            println!("step {:>5}  lr {:.2e}  batch loss {:.4e}", r.step, r.lr, r.loss);
        }
    })?;
    println!("loss after:  {:.4e}", evaluate_loss(&model, &lr, &hr)?);

    if let Some(dir) = out.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(&model, &outcome.state, &out)?;
    println!("checkpoint written to {}", out.display());
    Ok(())
}
