//! Super-resolves a synthetic stereo pair and writes the results as PPM.
//!
//! `cargo run --release --example super_resolve -- [model] [weights.nfrw] [out_dir]`
//!
//! `model` is a preset name or an architecture file. Without weights the
//! network keeps its random initialization, so its output is bicubic plus an
//! untrained residual and scores below the bicubic baseline. To see a
//! trained model, run `train_toy` and then pass
//! `examples/configs/toy.arch target/train_toy.nfrw`.

use std::path::PathBuf;

use nafrssr::imageio::resample::upscale_image;
use nafrssr::imageio::write_image;
use nafrssr::metrics::{degrade, EvalRow};
use nafrssr::model::resolve_arch;
use nafrssr::{synthetic, Model};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let arch = args.next().unwrap_or_else(|| "NAFRSSR-M".into());
    let weights = args.next().filter(|a| !a.is_empty());
    let out_dir = PathBuf::from(args.next().unwrap_or_else(|| "target/super_resolve".into()));
    std::fs::create_dir_all(&out_dir)?;

    let (name, config) = resolve_arch(&arch)?;
    let mut model = Model::new(config, 0)?;
    println!("{name}: {} parameters", model.count_params());
    if let Some(path) = &weights {
        model.load_weights(path)?;
        println!("loaded {path}");
    }

    let hr = synthetic::stereo_pair(192, 96, 10.0, 3);
    let lr = degrade(&hr, 4)?;
    let sr = model.infer_images(&lr)?;
    let bicubic = lr.as_ref().try_map(|i| upscale_image(i, 4))?;

    for (name, img) in [
        ("hr_left", &hr.left),
        ("lr_left", &lr.left),
        ("sr_left", &sr.left),
        ("sr_right", &sr.right),
        ("bicubic_left", &bicubic.left),
    ] {
        write_image(img, out_dir.join(format!("{name}.ppm")))?;
    }

    let ours = EvalRow::compute("model", &sr, &hr)?;
    let base = EvalRow::compute("bicubic", &bicubic, &hr)?;
    for row in [&base, &ours] {
        println!(
            "{:<8} PSNR {:.3} dB  SSIM {:.4}",
            row.image_id,
            row.psnr_stereo(),
            row.ssim_stereo()
        );
    }
    println!("images written to {}", out_dir.display());
    Ok(())
}
