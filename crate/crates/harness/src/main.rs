use std::path::{Path, PathBuf};
use std::process::ExitCode;

use aaa_core::{Error, Result};
use aaa_harness::{cmd_ablate, cmd_eval, cmd_generate, cmd_train, exit_code, ExperimentConfig, Mode, Overrides};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "aaa", version, about = "Federated attention-aggregation experiments on FC matrices")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic multi-site dataset.
    Gen {
        #[command(flatten)]
        common: Common,
        /// Output directory for site files and manifest.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a bundle (aaa, hard-select) or a single model (fedavg, pooled-single).
    Train {
        #[command(flatten)]
        common: Common,
        /// Run directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained run on its held-out split.
    Eval {
        /// Run directory written by `train`.
        #[arg(long)]
        out: PathBuf,
        /// Switch between aaa and hard-select for a bundle run.
        #[arg(long)]
        mode: Option<Mode>,
        /// Dataset directory replacing the one the run was trained on.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Run the subset × MoE ablation grid over several seeds.
    Ablate {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// JSON experiment config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    mode: Option<Mode>,
    #[arg(long)]
    rounds: Option<usize>,
    /// Epochs for both the autoencoder and the classifiers.
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Classifier width divisor (1 = full size).
    #[arg(long)]
    scale: Option<usize>,
    /// Worker threads for client training.
    #[arg(long)]
    jobs: Option<usize>,
    /// Dataset directory instead of generating one.
    #[arg(long)]
    data: Option<PathBuf>,
    /// ROI count of the generated dataset.
    #[arg(long)]
    n: Option<usize>,
    /// Switch off site and subtype effects in the generator.
    #[arg(long)]
    null_effects: bool,
}

impl Common {
    fn resolve(&self) -> Result<ExperimentConfig> {
        set_jobs(self.jobs)?;
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        Overrides {
            seed: self.seed,
            mode: self.mode,
            rounds: self.rounds,
            epochs: self.epochs,
            lr: self.lr,
            scale: self.scale,
            n: self.n,
            data: self.data.clone(),
            null_effects: self.null_effects,
        }
        .apply(&mut cfg);
        Ok(cfg)
    }
}

fn set_jobs(jobs: Option<usize>) -> Result<()> {
    if let Some(j) = jobs {
        if j == 0 {
            return Err(Error::Config("--jobs must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Gen { common, out } => {
            let s = cmd_generate(&common.resolve()?, &out)?;
            println!("n = {} ROIs, d = {} edges", s.n, s.edges);
            for (id, mdd, nc) in &s.sites {
                println!("site {id}: {mdd} MDD + {nc} NC = {}", mdd + nc);
            }
            println!("total {} samples; manifest sha256 {}", s.total, s.manifest_sha256);
        }
        Command::Train { common, out } => {
            let cfg = common.resolve()?;
            let s = cmd_train(&cfg, &out)?;
            println!("trained {} in {:.1}s", cfg.mode, s.seconds);
            println!("config fingerprint {}", s.config_fingerprint);
            println!("model sha256 {}", s.model_sha256);
            println!("{} log rows -> {}", s.log_rows, out.join(aaa_harness::commands::TRAIN_LOG).display());
        }
        Command::Eval { out, mode, data, jobs } => {
            set_jobs(jobs)?;
            let start = std::time::Instant::now();
            let r = cmd_eval(&out, mode, data.as_deref())?;
            print!("{}", r.table());
            println!("config fingerprint {}", r.config_fingerprint);
            println!("wall-clock {:.2}s", start.elapsed().as_secs_f64());
        }
        Command::Ablate { common, seeds, out } => {
            let start = std::time::Instant::now();
            let s = cmd_ablate(&common.resolve()?, seeds, &out)?;
            print!("{}", s.table());
            println!("wall-clock {:.1}s; grids in {}", start.elapsed().as_secs_f64(), display(&out));
        }
    }
    Ok(())
}

fn display(p: &Path) -> String {
    p.display().to_string()
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("AAA_LOG", "info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(exit_code(&e) as u8)
        }
    }
}
