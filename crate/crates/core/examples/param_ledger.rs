//! Builds every preset and prints its parameter count next to the published
//! figure, then the ablation table with its tolerances.
//!
//! `cargo run --release --example param_ledger`

use nafrssr::model::ablation_table;
use nafrssr::{Model, Preset};

fn main() -> anyhow::Result<()> {
    println!("{:<16} {:>10} {:>10} {:>8}", "preset", "built", "reported", "ratio");
    for preset in Preset::ALL {
        let model = Model::from_preset(preset, 0)?;
        let built = model.count_params();
        let reported = preset.reported_params();
        println!(
            "{:<16} {:>10} {:>10} {:>8.4}",
            preset.name(),
            built,
            reported,
            built as f64 / reported as f64
        );
    }

    println!("\nablation variants of the tiny baseline:");
    for row in ablation_table() {
        println!(
            "{:<16} built {:>7}  reported {:>7}  delta {:>+4}  tolerance {:>3}  {}",
            row.preset,
            row.built,
            row.reported,
            row.delta(),
            row.tolerance,
            if row.passes() { "ok" } else { "FAIL" }
        );
    }

    let t = Model::from_preset(Preset::NafssrT, 0)?;
    println!("\nNAFSSR-T architecture:\n{}", t.config().to_kv_string());
    Ok(())
}
