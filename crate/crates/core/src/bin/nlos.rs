use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nlos_core::cli::{self, RunConfig};
use nlos_core::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "nlos",
    version,
    about = "Motion-sampled non-line-of-sight tracking and imaging"
)]
struct Args {
    /// Scene file (TOML).
    #[arg(long, global = true, env = "NLOS_CONFIG")]
    config: Option<PathBuf>,
    /// Overrides the scene seed.
    #[arg(long, global = true, env = "NLOS_SEED")]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, env = "NLOS_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Overrides the scene's sensor profile.
    #[arg(long, global = true, env = "NLOS_PROFILE")]
    profile: Option<String>,
    /// Output path; defaults to the scene's `paths.out`.
    #[arg(long, global = true, env = "NLOS_OUT")]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Render the scene into a dataset directory.
    Simulate,
    /// Write the canonical STIR of every scene object.
    PrecomputeStir,
    /// Track the scene objects through a dataset.
    Track {
        #[arg(long)]
        dataset: Option<PathBuf>,
        /// Directory written by `precompute-stir`; computed in place if absent.
        #[arg(long)]
        stirs: Option<PathBuf>,
    },
    /// Recover the camera's wall-parallel motion from a static landmark.
    Localize {
        #[arg(long)]
        dataset: Option<PathBuf>,
        #[arg(long)]
        stirs: Option<PathBuf>,
    },
    /// Fuse every frame and backproject a volume.
    Reconstruct {
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Score a track or localization output against ground truth.
    Evaluate {
        #[arg(long)]
        estimate: PathBuf,
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Draw a trajectory, camera path or volume as SVG.
    Plot {
        #[arg(long)]
        input: PathBuf,
        /// Adds ground truth from this dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
}

fn load_config(args: &Args) -> Result<RunConfig> {
    let path = args
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("this command needs --config".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(p) = &args.profile {
        cfg.profile = p.clone();
        cfg.validate()?;
    }
    Ok(cfg)
}

fn out_path(args: &Args, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    args.out
        .clone()
        .or_else(|| cfg.and_then(|c| c.paths.out.clone()))
        .ok_or_else(|| Error::Config("no output path: pass --out or set paths.out".into()))
}

fn dataset_path(flag: &Option<PathBuf>, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    flag.clone()
        .or_else(|| cfg.and_then(|c| c.paths.dataset.clone()))
        .ok_or_else(|| Error::Config("no dataset: pass --dataset or set paths.dataset".into()))
}

fn stirs_path(flag: &Option<PathBuf>, cfg: &RunConfig) -> Option<PathBuf> {
    flag.clone().or_else(|| cfg.paths.stirs.clone())
}

fn run(args: &Args) -> Result<()> {
    match &args.command {
        Command::Simulate => {
            let cfg = load_config(args)?;
            cli::cmd_simulate(&cfg, &out_path(args, Some(&cfg))?)
        }
        Command::PrecomputeStir => {
            let cfg = load_config(args)?;
            cli::cmd_precompute_stir(&cfg, &out_path(args, Some(&cfg))?)
        }
        Command::Track { dataset, stirs } => {
            let cfg = load_config(args)?;
            let s = stirs_path(stirs, &cfg);
            cli::cmd_track(
                &cfg,
                &dataset_path(dataset, Some(&cfg))?,
                s.as_deref(),
                &out_path(args, Some(&cfg))?,
            )
        }
        Command::Localize { dataset, stirs } => {
            let cfg = load_config(args)?;
            let s = stirs_path(stirs, &cfg);
            cli::cmd_localize(
                &cfg,
                &dataset_path(dataset, Some(&cfg))?,
                s.as_deref(),
                &out_path(args, Some(&cfg))?,
            )
        }
        Command::Reconstruct { dataset } => {
            let cfg = load_config(args)?;
            cli::cmd_reconstruct(
                &cfg,
                &dataset_path(dataset, Some(&cfg))?,
                &out_path(args, Some(&cfg))?,
            )
        }
        Command::Evaluate { estimate, dataset } => {
            let cfg = args
                .config
                .as_ref()
                .map(|_| load_config(args))
                .transpose()?;
            cli::cmd_evaluate(
                estimate,
                &dataset_path(dataset, cfg.as_ref())?,
                &out_path(args, cfg.as_ref())?,
            )
        }
        Command::Plot { input, dataset } => {
            let out = args
                .out
                .clone()
                .ok_or_else(|| Error::Config("plot needs --out".into()))?;
            cli::cmd_plot(input, dataset.as_deref().map(Path::new), &out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let args = Args::parse();
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(args.workers)
        .build()
    {
        Ok(p) => p,
        Err(e) => return report(&Error::Config(format!("thread pool: {e}"))),
    };
    match pool.install(|| run(&args)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => report(&e),
    }
}

/// Prints a one-line JSON error to stderr and maps its category to the exit
/// code.
fn report(e: &Error) -> ExitCode {
    let cat = e.category();
    let msg = serde_json::json!({
        "error": cat.as_str(),
        "code": cat.exit_code(),
        "message": e.to_string(),
    });
    eprintln!("{msg}");
    ExitCode::from(cat.exit_code() as u8)
}
