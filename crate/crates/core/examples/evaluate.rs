//! Runs the dataset evaluation pipeline on a generated test set.
//!
//! HR pairs are written to a temporary directory with a manifest, then
//! degraded, super-resolved and scored. With all weights zeroed the network
//! reduces to bicubic upsampling, which gives the reference baseline.
//!
//! `cargo run --release --example evaluate -- [model] [weights.nfrw]`

use nafrssr::imageio::write_image;
use nafrssr::metrics::evaluate_dataset;
use nafrssr::model::resolve_arch;
use nafrssr::{synthetic, Model};

fn main() -> anyhow::Result<()> {
    let mut args = std::env::args().skip(1);
    let arch = args.next().unwrap_or_else(|| "NAFRSSR-M".into());
    let weights = args.next();

    let dir = tempfile_dir()?;
    let mut manifest = String::from("# left\tright\n");
    for i in 0..4 {
        let hr = synthetic::stereo_pair(128, 96, 8.0, 100 + i);
        let (l, r) = (format!("scene{i}_L.ppm"), format!("scene{i}_R.ppm"));
        write_image(&hr.left, dir.join(&l))?;
        write_image(&hr.right, dir.join(&r))?;
        manifest.push_str(&format!("{l}\t{r}\n"));
    }
    let manifest_path = dir.join("test.txt");
    std::fs::write(&manifest_path, manifest)?;

    let (name, config) = resolve_arch(&arch)?;
    let mut model = Model::new(config, 0)?;
    match &weights {
        Some(path) => model.load_weights(path)?,
        None => model.params_mut().fill(0.0),
    }
    println!("{name} ({})", if weights.is_some() { "loaded weights" } else { "bicubic baseline" });
    print!("{}", evaluate_dataset(&model, &manifest_path, &dir)?.to_csv());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn tempfile_dir() -> std::io::Result<std::path::PathBuf> {
    let dir = std::env::temp_dir().join(format!("nafrssr-evaluate-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    Ok(dir)
}
