//! Parameter and multiply-accumulate counts across presets and input sizes,
//! plus a short CPU timing comparison.
//!
//! `cargo run --release --example cost_model`

use nafrssr::bench::time_forward;
use nafrssr::{ArchConfig, Model, Preset};

fn main() -> anyhow::Result<()> {
    let sizes = [(32, 32), (64, 64), (128, 128), (128, 256)];
    print!("{:<16} {:>10}", "preset", "params");
    for (h, w) in sizes {
        print!(" {:>12}", format!("GMAC@{h}x{w}"));
    }
    println!();
    for preset in Preset::ALL {
        let model = Model::from_preset(preset, 0)?;
        print!("{:<16} {:>10}", preset.name(), model.count_params());
        for (h, w) in sizes {
            print!(" {:>12.3}", model.count_macs(h, w) as f64 / 1e9);
        }
        println!();
    }

    println!("\nrecursion reuses weights: params stay fixed while compute grows");
    for repeats in 1..=4 {
        let mut config = ArchConfig::nafrssr(64, 0, 4);
        for slot in &mut config.blocks {
            slot.repeats = repeats;
        }
        let model = Model::new(config, 0)?;
        println!(
            "  repeats {repeats}: {:>8} params, {:>7.3} GMAC at 128x128",
            model.count_params(),
            model.count_macs(128, 128) as f64 / 1e9
        );
    }

    println!("\nmedian CPU forward time at 16x32 (3 runs):");
    for preset in [Preset::NafrssrM, Preset::NafssrT, Preset::NafssrS] {
        let stats = time_forward(&Model::from_preset(preset, 0)?, 16, 32, 3, 0)?;
        println!("  {:<12} {:>8.1} ms  (IQR {:.1} ms)", preset.name(), stats.median * 1e3, stats.iqr * 1e3);
    }
    Ok(())
}
