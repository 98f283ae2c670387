use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use nafrssr::imageio::{self, resample, read_image, write_image, PatchConfig, PatchSet};
use nafrssr::metrics::{self, EvalReport, EvalRow};
use nafrssr::model::{ablation_table, resolve_arch, ArchConfig, Preset};
use nafrssr::training::{self, TrainConfig};
use nafrssr::{bench, synthetic, Model, StereoPair};

#[derive(Parser)]
#[command(name = "nafrssr", version, about = "Stereo image super-resolution (x4)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Super-resolve a stereo pair; also writes bicubic baselines.
    Infer(InferArgs),
    /// Bicubic-downscale an image (LR generation).
    Downsample(DownsampleArgs),
    /// PSNR/SSIM of a stereo pair, or of a model over a dataset manifest.
    Metrics(MetricsArgs),
    /// Print parameter counts.
    Params(CostArgs),
    /// Print multiply-accumulate counts.
    Macs(CostArgs),
    /// Train on HR stereo pairs (or synthetic scenes).
    Train(TrainArgs),
    /// Time inference forward passes.
    Bench(BenchArgs),
    /// Rebuild the component-ablation size table.
    Ablate(AblateArgs),
}

#[derive(Args)]
struct ModelArgs {
    /// Preset name or architecture file.
    #[arg(long, default_value = "NAFRSSR-M")]
    model: String,
    /// Weight file; without it the model is freshly initialized from --seed.
    #[arg(long)]
    weights: Option<PathBuf>,
    /// Set every weight to zero (the network then reduces to bicubic).
    #[arg(long, conflicts_with = "weights")]
    zero_weights: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

impl ModelArgs {
    fn build(&self) -> Result<Model> {
        let (_, config) = resolve_arch(&self.model)?;
        let mut model = Model::new(config, self.seed)?;
        if let Some(path) = &self.weights {
            model
                .load_weights(path)
                .with_context(|| format!("loading {}", path.display()))?;
        } else if self.zero_weights {
            model.params_mut().fill(0.0);
        }
        Ok(model)
    }
}

#[derive(Args)]
struct InferArgs {
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    left: PathBuf,
    #[arg(long)]
    right: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct DownsampleArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 4)]
    scale: usize,
}

#[derive(Args)]
struct MetricsArgs {
    /// Super-resolved image(s): one path, or left and right.
    #[arg(long, num_args = 1..=2)]
    sr: Vec<PathBuf>,
    /// Reference image(s), matching --sr.
    #[arg(long, num_args = 1..=2)]
    hr: Vec<PathBuf>,
    /// Evaluate a model over a manifest of HR pairs instead.
    #[arg(long, conflicts_with_all = ["sr", "hr"])]
    manifest: Option<PathBuf>,
    /// Directory that relative manifest paths are resolved against.
    #[arg(long, requires = "manifest")]
    hr_dir: Option<PathBuf>,
    #[command(flatten)]
    model: ModelArgs,
    /// Write the CSV report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CostArgs {
    #[arg(long)]
    model: Option<String>,
    /// Low-resolution input size, HxW.
    #[arg(long, default_value = "128x128", value_parser = parse_hw)]
    hw: (usize, usize),
    /// Print every preset.
    #[arg(long)]
    table: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long, default_value = "NAFRSSR-M")]
    model: String,
    /// Manifest of HR stereo pairs.
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    hr_dir: Option<PathBuf>,
    /// Train on this many synthetic scenes when no manifest is given.
    #[arg(long, default_value_t = 4)]
    synthetic: usize,
    #[arg(long, default_value_t = 1000)]
    steps: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 3e-3)]
    lr_max: f64,
    #[arg(long, default_value_t = 1e-7)]
    lr_min: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Disable flip augmentation.
    #[arg(long)]
    no_augment: bool,
    /// Output weights; the optimizer state goes to `<out>.opt`.
    #[arg(long)]
    out: PathBuf,
    /// Loss trace CSV.
    #[arg(long)]
    trace: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    /// Preset or architecture file; repeat to compare.
    #[arg(long, required = true)]
    model: Vec<String>,
    #[arg(long, default_value = "128x128", value_parser = parse_hw)]
    hw: (usize, usize),
    #[arg(long, default_value_t = 5)]
    iters: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct AblateArgs {
    #[arg(long, default_value = "table5")]
    suite: String,
}

fn parse_hw(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s
        .split_once(['x', 'X'])
        .ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| v.trim().parse::<usize>().ok().filter(|&n| n > 0);
    match (parse(h), parse(w)) {
        (Some(h), Some(w)) => Ok((h, w)),
        _ => Err(format!("expected positive HxW, got {s:?}")),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            let chain: Vec<String> = e.chain().map(|c| c.to_string()).collect();
            eprintln!("error: {}", chain.join(": "));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Infer(a) => infer(a)?,
        Command::Downsample(a) => {
            let img = read_image(&a.input)?;
            write_image(&resample::downscale_image(&img, a.scale)?, &a.output)?;
        }
        Command::Metrics(a) => metrics_cmd(a)?,
        Command::Params(a) => cost_table(a, false)?,
        Command::Macs(a) => cost_table(a, true)?,
        Command::Train(a) => train(a)?,
        Command::Bench(a) => {
            let (h, w) = a.hw;
            println!("model\tmedian_ms\tiqr_ms\titers");
            for spec in &a.model {
                let (name, config) = resolve_arch(spec)?;
                let stats = bench::time_forward(&Model::new(config, a.seed)?, h, w, a.iters, a.seed)?;
                println!(
                    "{name}\t{:.3}\t{:.3}\t{}",
                    stats.median * 1e3,
                    stats.iqr * 1e3,
                    stats.samples.len()
                );
            }
        }
        Command::Ablate(a) => return ablate(&a.suite),
    }
    Ok(ExitCode::SUCCESS)
}

fn infer(a: InferArgs) -> Result<()> {
    let model = a.model.build()?;
    let lr = StereoPair::new(read_image(&a.left)?, read_image(&a.right)?);
    let sr = model.infer_images(&lr)?;
    let up = model.config().upscale;
    std::fs::create_dir_all(&a.out_dir).with_context(|| format!("creating {}", a.out_dir.display()))?;
    let out = |name: &str| a.out_dir.join(name);
    write_image(&sr.left, out("sr_left.ppm"))?;
    write_image(&sr.right, out("sr_right.ppm"))?;
    write_image(&resample::upscale_image(&lr.left, up)?, out("bicubic_left.ppm"))?;
    write_image(&resample::upscale_image(&lr.right, up)?, out("bicubic_right.ppm"))?;
    println!(
        "wrote {}x{} outputs to {}",
        sr.left.width(),
        sr.left.height(),
        a.out_dir.display()
    );
    Ok(())
}

fn metrics_cmd(a: MetricsArgs) -> Result<()> {
    let report = if let Some(manifest) = &a.manifest {
        let model = a.model.build()?;
        let base = a
            .hr_dir
            .clone()
            .unwrap_or_else(|| manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
        metrics::evaluate_dataset(&model, manifest, &base)?
    } else {
        if a.sr.is_empty() || a.sr.len() != a.hr.len() {
            bail!("give the same number of --sr and --hr images (1 or 2), or --manifest");
        }
        let load = |paths: &[PathBuf]| -> Result<StereoPair<imageio::Image>> {
            let left = read_image(&paths[0])?;
            let right = match paths.get(1) {
                Some(p) => read_image(p)?,
                None => left.clone(),
            };
            Ok(StereoPair::new(left, right))
        };
        let id = a.sr[0]
            .file_stem()
            .map_or("image".into(), |s| s.to_string_lossy().into_owned());
        EvalReport {
            rows: vec![EvalRow::compute(id, &load(&a.sr)?, &load(&a.hr)?)?],
        }
    };
    let csv = report.to_csv();
    match &a.out {
        Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn cost_table(a: CostArgs, macs: bool) -> Result<()> {
    let (h, w) = a.hw;
    let entries: Vec<(String, ArchConfig)> = match (&a.model, a.table) {
        (_, true) => Preset::ALL.iter().map(|p| (p.name().to_string(), p.config())).collect(),
        (Some(spec), false) => vec![resolve_arch(spec)?],
        (None, false) => bail!("give --model <preset|config-file> or --table"),
    };
    let single = entries.len() == 1;
    for (name, config) in entries {
        let model = Model::new(config, 0)?;
        let value = if macs {
            model.count_macs(h, w)
        } else {
            model.count_params() as u64
        };
        if single {
            println!("{value}");
        } else {
            println!("{name}\t{value}");
        }
    }
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let (_, config) = resolve_arch(&a.model)?;
    let mut model = Model::new(config, a.seed)?;
    let scale = model.config().upscale;
    let patch = PatchConfig {
        scale,
        ..PatchConfig::default()
    };
    let mut patches = PatchSet::default();
    let mut add = |hr: StereoPair<imageio::Image>| -> Result<()> {
        let lr = metrics::degrade(&hr, scale)?;
        patches.extend_from(&lr, &hr, patch)?;
        Ok(())
    };
    if let Some(manifest) = &a.manifest {
        let text = std::fs::read_to_string(manifest).with_context(|| format!("reading {}", manifest.display()))?;
        let base = a
            .hr_dir
            .clone()
            .unwrap_or_else(|| manifest.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf));
        for (l, r) in imageio::parse_manifest(&text)? {
            add(StereoPair::new(read_image(base.join(l))?, read_image(base.join(r))?))?;
        }
    } else {
        let (w, h) = (patch.width * scale * 2, patch.height * scale * 2);
        for i in 0..a.synthetic {
            add(synthetic::stereo_pair(w, h, 24.0, a.seed.wrapping_add(i as u64)))?;
        }
    }
    let config = TrainConfig {
        steps: a.steps,
        batch_size: a.batch_size,
        seed: a.seed,
        lr_max: a.lr_max,
        lr_min: a.lr_min,
        augment: !a.no_augment,
        ..TrainConfig::default()
    };
    eprintln!("training on {} patches", patches.len());
    let every = (a.steps / 20).max(1);
    let outcome = training::train(&mut model, &patches, &config, |r| {
        if r.step % every == 0 || r.step + 1 == a.steps {
            eprintln!("step {:>6}  lr {:.3e}  loss {:.6e}", r.step, r.lr, r.loss);
        }
    })?;
    training::save_checkpoint(&model, &outcome.state, &a.out)?;
    if let Some(path) = &a.trace {
        std::fs::write(path, training::trace_csv(&outcome.trace))
            .with_context(|| format!("writing {}", path.display()))?;
    }
    Ok(())
}

fn ablate(suite: &str) -> Result<ExitCode> {
    if suite != "table5" {
        bail!("unknown suite {suite:?} (available: table5)");
    }
    println!("model\tbuilt\treported\tdelta\ttolerance\tstatus");
    let rows = ablation_table();
    for r in &rows {
        println!(
            "{}\t{}\t{}\t{:+}\t{}\t{}",
            r.preset,
            r.built,
            r.reported,
            r.delta(),
            r.tolerance,
            if r.passes() { "ok" } else { "FAIL" }
        );
    }
    Ok(if rows.iter().all(|r| r.passes()) {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    })
}
