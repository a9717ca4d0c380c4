use std::io::{self, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use epu::cli::{exit_code, run_explain, run_global_explain, run_pfm, run_synth, run_train, RunConfig};
use epu::data::SynthConfig;
use epu::Result;

#[derive(Parser)]
#[command(name = "epu", version, about = "Interpretable ensembles over opponent perceptual feature maps")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Run configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set train.lr=0.05`. Repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

impl Overrides {
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for s in &self.set {
            cfg.apply_override(s)?;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic two-class dataset.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Images per class.
        #[arg(long, default_value_t = 200)]
        count: usize,
        #[arg(long, default_value_t = 64)]
        side: usize,
        #[arg(long, default_value_t = 7)]
        seed: u64,
    },
    /// Write the four feature maps of one image as PGM files.
    Pfm {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        side: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train a model, or cross-validate with `--folds`.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        folds: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        batch_size: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        augment: bool,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Explain one prediction: label, score chart, relevance overlays.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Expected input side; must match the checkpoint.
        #[arg(long)]
        side: Option<usize>,
        #[arg(long)]
        prm_layer: Option<usize>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Per-class mean and spread of the scores over a labelled set.
    GlobalExplain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>, cfg: &RunConfig) -> Result<PathBuf> {
    flag.or_else(|| cfg.output_dir.clone())
        .ok_or_else(|| epu::Error::Config("an output directory is required (--out or output.dir)".into()))
}

fn run(cli: Cli) -> Result<()> {
    let stdout = io::stdout();
    let mut stdout = stdout.lock();
    match cli.command {
        Command::Synth { out, count, side, seed } => {
            let cfg = SynthConfig {
                count_per_class: count,
                side,
                seed,
                ..SynthConfig::default()
            };
            run_synth(&cfg, &out, &mut stdout)
        }
        Command::Pfm {
            image,
            out,
            side,
            overrides,
        } => {
            let cfg = overrides.resolve()?;
            for path in run_pfm(&image, &out, side.unwrap_or(cfg.arch.input_side))? {
                writeln!(stdout, "{}", path.display()).map_err(|e| epu::Error::io("<stdout>", e))?;
            }
            Ok(())
        }
        Command::Train {
            data,
            out,
            folds,
            epochs,
            lr,
            batch_size,
            seed,
            augment,
            overrides,
        } => {
            let mut cfg = overrides.resolve()?;
            if let Some(v) = epochs {
                cfg.train.epochs = v;
            }
            if let Some(v) = lr {
                cfg.train.lr = v;
            }
            if let Some(v) = batch_size {
                cfg.train.batch_size = v;
            }
            if let Some(v) = seed {
                cfg.train.seed = v;
            }
            cfg.train.augment |= augment;
            let out = out_dir(out, &cfg)?;
            run_train(&data, &cfg, &out, folds, &mut stdout).map(|_| ())
        }
        Command::Explain {
            model,
            image,
            out,
            side,
            prm_layer,
            overrides,
        } => {
            let cfg = overrides.resolve()?;
            let out = out_dir(out, &cfg)?;
            run_explain(&model, &image, &out, side, prm_layer.unwrap_or(cfg.prm_layer), &mut stdout).map(|_| ())
        }
        Command::GlobalExplain { model, data, out } => {
            let out = out_dir(out, &RunConfig::default())?;
            run_global_explain(&model, &data, &out, &mut stdout).map(|_| ())
        }
    }
}

fn main() -> ExitCode {
    if let Some(n) = std::env::var("EPU_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("warning: could not size the thread pool: {e}");
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
