use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use serde::Serialize;

use pitchrecon::commands;
use pitchrecon::extract::ExtractConfig;
use pitchrecon::gamecam::DEFAULT_PLAYER_WEIGHT;
use pitchrecon::pipeline::{run_pipeline, SceneManifest, StageError};
use pitchrecon::synth::SequenceConfig;

#[derive(Parser)]
#[command(name = "pitchrecon", version, about = "Soccer broadcast reconstruction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic sequence with ground truth and a manifest.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10)]
        frames: usize,
        #[arg(long, default_value_t = 4)]
        players: usize,
        /// Also write depth buffers and cameras for `extract` and `gamecam`.
        #[arg(long)]
        captures: bool,
    },
    /// Calibrate every frame of a manifest.
    Calibrate { manifest: PathBuf },
    /// Refine detections and merge them into tracks.
    Track { manifest: PathBuf },
    /// Segment every tracked player.
    Segment { manifest: PathBuf },
    /// Decode player depth onto billboards.
    Lift { manifest: PathBuf },
    /// Smooth player trajectories, or a standalone problem file with --problem.
    Smooth {
        manifest: Option<PathBuf>,
        #[arg(long, requires = "output", conflicts_with = "manifest")]
        problem: Option<PathBuf>,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Crop color/depth training pairs from a captured frame.
    Extract {
        #[arg(long)]
        color: PathBuf,
        /// Depth buffer in [0, 1] as PFM.
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        glcam: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "frame")]
        stem: String,
        #[arg(long, default_value_t = 0.5)]
        eps: f64,
        #[arg(long, default_value_t = 20)]
        min_pts: usize,
        #[arg(long, default_value_t = 10)]
        margin: usize,
        /// Buffers are stored bottom row first.
        #[arg(long)]
        flip_y: bool,
    },
    /// Score predicted depth maps and masks against references.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        csv: PathBuf,
    },
    /// Mesh lifted players and write OBJ scenes.
    Export { manifest: PathBuf },
    /// Run every stage.
    Run {
        manifest: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
    },
    /// Recover a game engine camera from a depth capture.
    Gamecam {
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        labels: PathBuf,
        #[arg(long)]
        aux_camera: PathBuf,
        #[arg(long, default_value_t = DEFAULT_PLAYER_WEIGHT)]
        lambda: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn print<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn load(path: &PathBuf) -> Result<SceneManifest> {
    SceneManifest::load(path).with_context(|| format!("loading manifest {}", path.display()))
}

fn report_errors(errors: &[StageError]) -> ExitCode {
    for e in errors {
        log::warn!("{} frame {:?} track {:?}: {}", e.stage, e.frame, e.track, e.message);
    }
    if errors.iter().any(|e| e.fatal) {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Synth {
            out,
            seed,
            frames,
            players,
            captures,
        } => {
            let mut config = SequenceConfig {
                frames,
                ..SequenceConfig::default()
            };
            config.scene.num_players = players;
            let manifest = commands::synth(&out, seed, &config, captures)?;
            println!("{}", manifest.display());
        }
        Command::Calibrate { manifest } => {
            let calibration = commands::calibrate(&load(&manifest)?)?;
            println!("calibrated {} of {} frames", calibration.cameras.iter().flatten().count(), calibration.cameras.len());
            return Ok(report_errors(&calibration.errors));
        }
        Command::Track { manifest } => print(&commands::track(&load(&manifest)?)?)?,
        Command::Segment { manifest } => {
            let (n, errors) = commands::segment(&load(&manifest)?)?;
            println!("{n} masks");
            return Ok(report_errors(&errors));
        }
        Command::Lift { manifest } => {
            let (n, errors) = commands::lift(&load(&manifest)?)?;
            println!("{n} players lifted");
            return Ok(report_errors(&errors));
        }
        Command::Smooth {
            manifest,
            problem,
            output,
        } => match (manifest, problem, output) {
            (_, Some(problem), Some(output)) => commands::smooth_file(&problem, &output)?,
            (Some(manifest), None, _) => {
                let (trajectories, errors) = commands::smooth(&load(&manifest)?)?;
                println!("{} trajectories", trajectories.len());
                return Ok(report_errors(&errors));
            }
            _ => anyhow::bail!("smooth needs a manifest or --problem with --output"),
        },
        Command::Extract {
            color,
            depth,
            glcam,
            out,
            stem,
            eps,
            min_pts,
            margin,
            flip_y,
        } => {
            let config = ExtractConfig {
                eps,
                min_pts,
                margin,
                flip_y,
                ..ExtractConfig::default()
            };
            let summary = commands::extract(&color, &depth, &glcam, &out, &stem, &config)?;
            println!("{} pairs", summary.pairs.len());
        }
        Command::Eval { pred, truth, csv } => {
            let summary = commands::eval(&pred, &truth, &csv)?;
            println!("mean st-RMSE {:?}, mean IoU {:?}", summary.mean_st_rmse, summary.mean_iou);
        }
        Command::Export { manifest } => {
            let (n, errors) = commands::export(&load(&manifest)?)?;
            println!("{n} scenes written");
            return Ok(report_errors(&errors));
        }
        Command::Run { manifest, workers } => {
            let mut manifest = load(&manifest)?;
            if let Some(w) = workers {
                manifest.params.workers = w;
            }
            let (report, _) = run_pipeline(&manifest)?;
            print(&report)?;
            return Ok(report_errors(&report.errors));
        }
        Command::Gamecam {
            depth,
            labels,
            aux_camera,
            lambda,
            out,
        } => print(&commands::gamecam(&depth, &labels, &aux_camera, lambda, &out)?)?,
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
