use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use sabm::appshell::{self, parse_criterion, PipelineConfig};
use sabm::blockmatch::{Criterion, DEFAULT_P_LARGE, DEFAULT_P_SMALL};
use sabm::metrics::{format_db, psnr_csv};

#[derive(Parser)]
#[command(name = "sabm", version, about = "Sensor-aided block matching pipeline")]
struct Cli {
    /// key = value configuration file
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set p_small=7` (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct PipelineArgs {
    /// Directory of frame_NNNN.pgm files
    #[arg(long)]
    frames: Option<PathBuf>,
    /// Sensor trace CSV
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    focal_length: Option<f64>,
    #[arg(long)]
    p_large: Option<u32>,
    #[arg(long)]
    p_small: Option<u32>,
    /// mse or mad
    #[arg(long)]
    criterion: Option<String>,
    /// skip or replicate
    #[arg(long)]
    border: Option<String>,
    #[arg(long)]
    training_frames: Option<usize>,
    #[arg(long)]
    fps: Option<f64>,
    /// Run every stage on one thread
    #[arg(long)]
    sequential: bool,
}

impl PipelineArgs {
    fn pairs(&self) -> Vec<(&'static str, String)> {
        let mut out = Vec::new();
        let mut push = |key, value: Option<String>| {
            if let Some(v) = value {
                out.push((key, v));
            }
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.to_string_lossy().into_owned());
        push("frames", path(&self.frames));
        push("trace", path(&self.trace));
        push("out", path(&self.out));
        push("focal_length", self.focal_length.map(|v| v.to_string()));
        push("p_large", self.p_large.map(|v| v.to_string()));
        push("p_small", self.p_small.map(|v| v.to_string()));
        push("criterion", self.criterion.clone());
        push("border", self.border.clone());
        push("training_frames", self.training_frames.map(|v| v.to_string()));
        push("fps", self.fps.map(|v| v.to_string()));
        if self.sequential {
            push("parallel", Some("false".into()));
        }
        out
    }
}

#[derive(Subcommand)]
enum Command {
    /// Render a scene along a trajectory with its sensor trace and ground truth
    Simulate {
        #[arg(long)]
        scene: PathBuf,
        #[arg(long)]
        trajectory: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        focal_length: Option<f64>,
        #[arg(long)]
        sequential: bool,
    },
    /// Build the consolidated depth map from the training frames
    Train(PipelineArgs),
    /// Predict motion vectors for the frames after the training frames
    Predict {
        /// Depth map written by `train`
        #[arg(long)]
        depth: PathBuf,
        #[command(flatten)]
        pipeline: PipelineArgs,
    },
    /// Train, predict, and compare against the training-phase search
    Bench(PipelineArgs),
    /// Analytic multiplications per frame for each pipeline stage
    Complexity {
        #[arg(long, default_value_t = 3840)]
        width: usize,
        #[arg(long, default_value_t = 2048)]
        height: usize,
        #[arg(long, default_value_t = DEFAULT_P_LARGE)]
        p_large: u32,
        #[arg(long, default_value_t = DEFAULT_P_SMALL)]
        p_small: u32,
        #[arg(long, default_value = "mse")]
        criterion: String,
    },
    /// PSNR between same-index frames of two directories
    Eval {
        #[arg(long)]
        reference: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Write the CSV here instead of stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(cli: &Cli, args: &[(&'static str, String)]) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::read(path)?,
        None => PipelineConfig::default(),
    };
    for raw in &cli.overrides {
        let Some((key, value)) = raw.split_once('=') else {
            bail!("--set expects KEY=VALUE, got {raw:?}");
        };
        cfg.set(key.trim(), value.trim())
            .map_err(anyhow::Error::msg)
            .with_context(|| format!("--set {raw}"))?;
    }
    for (key, value) in args {
        cfg.set(key, value).map_err(anyhow::Error::msg).with_context(|| format!("--{key}"))?;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Simulate {
            scene,
            trajectory,
            out,
            focal_length,
            sequential,
        } => {
            let mut args = Vec::new();
            if let Some(f) = focal_length {
                args.push(("focal_length", f.to_string()));
            }
            if *sequential {
                args.push(("parallel", "false".to_string()));
            }
            let cfg = load_config(&cli, &args)?;
            let summary = appshell::cmd_simulate(scene, trajectory, out, &cfg)?;
            println!("wrote {} frames to {}", summary.frames, out.display());
        }
        Command::Train(args) => {
            let cfg = load_config(&cli, &args.pairs())?;
            let summary = appshell::cmd_train(&cfg)?;
            println!(
                "trained on {} frame pairs; {}/{} blocks have depth; output in {}",
                summary.pairs,
                summary.valid_blocks,
                summary.blocks,
                cfg.out.display()
            );
        }
        Command::Predict { depth, pipeline } => {
            let cfg = load_config(&cli, &pipeline.pairs())?;
            let summary = appshell::cmd_predict(&cfg, depth)?;
            println!(
                "predicted {} frames; mean PSNR {} dB; output in {}",
                summary.psnr.len(),
                format_db(summary.mean_psnr()),
                cfg.out.display()
            );
        }
        Command::Bench(args) => {
            let cfg = load_config(&cli, &args.pairs())?;
            let summary = appshell::cmd_bench(&cfg)?;
            print!("{}", summary.summary_text());
        }
        Command::Complexity {
            width,
            height,
            p_large,
            p_small,
            criterion,
        } => {
            let criterion: Criterion = parse_criterion(criterion).map_err(anyhow::Error::msg)?;
            let report = appshell::cmd_complexity(*width, *height, *p_large, *p_small, criterion)?;
            print!("{}", report.to_csv());
            println!("reduction_factor,{:.6}", report.reduction_factor());
        }
        Command::Eval { reference, test, out } => {
            let csv = psnr_csv(&appshell::cmd_eval(reference, test)?);
            match out {
                Some(path) => std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{csv}"),
            }
        }
    }
    Ok(())
}
