use anyhow::{bail, Context, Result};
use bevflow::bench::{
    emit_report, generate_training_set, replay, run_pipeline, simulate, ExperimentConfig, NoiseLevel, RunOptions,
    SweepPoint,
};
use bevflow::flow::train_estimator;
use clap::{Parser, Subcommand};
use log::info;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

/// Environment variable that overrides the configured output directory.
const OUT_DIR_ENV: &str = "BEVFLOW_OUT_DIR";

#[derive(Parser)]
#[command(name = "bevflow", version, about = "Latency-compensated collaborative BEV perception benchmark")]
struct Cli {
    /// Experiment config (TOML). Defaults are used when omitted.
    #[arg(short, long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides the config file.
    #[arg(short, long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,

    /// Replace the configured seed list with this single seed.
    #[arg(short, long, global = true)]
    seed: Option<u64>,

    /// Worker threads for independent sweep points.
    #[arg(short, long, global = true, default_value_t = 1)]
    workers: usize,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate observation and message logs for one sweep point.
    Simulate {
        /// Interval expectation in ms; defaults to the first configured value.
        #[arg(long)]
        interval_ms: Option<f64>,
        /// Translation pose-noise sigma in meters.
        #[arg(long)]
        sigma_t: Option<f64>,
        /// Rotation pose-noise sigma in degrees.
        #[arg(long)]
        sigma_r_deg: Option<f64>,
    },
    /// Fit the motion estimator on held-out scenes and write its parameters.
    Train {
        /// Parameter file to write; defaults to <out_dir>/estimator.bin.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Run the full sweep and write results.csv, config.json and plots.
    Run {
        /// Reuse finished sweep points recorded under <out_dir>/progress.
        #[arg(long)]
        resume: bool,
    },
    /// Re-evaluate the configured methods on logs written by `simulate`.
    Replay {
        /// Directory holding observations.jsonl and the message logs.
        #[arg(long)]
        log_dir: PathBuf,
    },
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(dir) = &cli.out_dir {
        cfg.out_dir = dir.clone();
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_rows(csv: &Path) -> Result<()> {
    let text = std::fs::read_to_string(csv)?;
    print!("{text}");
    Ok(())
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    let out = cfg.out_dir.clone();
    match cli.command {
        Command::Simulate { interval_ms, sigma_t, sigma_r_deg } => {
            let noise = cfg.pose_noise[0];
            let point = SweepPoint {
                interval_ms: interval_ms.unwrap_or(cfg.intervals_ms[0]),
                noise: NoiseLevel {
                    sigma_t: sigma_t.unwrap_or(noise.sigma_t),
                    sigma_r_deg: sigma_r_deg.unwrap_or(noise.sigma_r_deg),
                },
            };
            if !(0.0..=cfg.scenario.clock.nominal_period * 10_000.0).contains(&point.interval_ms) {
                bail!("interval {} ms is outside the supported range", point.interval_ms);
            }
            let summary = simulate(&cfg, point, &out)?;
            println!(
                "simulated {} scenes, {} evaluations, {} messages into {}",
                summary.scenes,
                summary.evaluations,
                summary.messages,
                out.display()
            );
        }
        Command::Train { output } => {
            let samples = generate_training_set(&cfg)?;
            if samples.is_empty() {
                bail!("held-out scenes produced no training samples");
            }
            info!("training on {} samples", samples.len());
            let mut opt = cfg.training.optimizer.clone();
            opt.time_encoding = cfg.time_encoding;
            opt.cell = cfg.scenario.grid.cell;
            let trained = train_estimator(&samples, &opt)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let path = output.unwrap_or_else(|| out.join("estimator.bin"));
            trained.params.save(&path)?;
            let summary = serde_json::json!({
                "samples": samples.len(),
                "initial_loss": trained.initial_loss,
                "final_loss": trained.final_loss,
                "time_encoding": cfg.time_encoding,
            });
            std::fs::write(out.join("training.json"), serde_json::to_vec_pretty(&summary)?)?;
            println!(
                "trained on {} samples: loss {:.4} -> {:.4}; wrote {}",
                samples.len(),
                trained.initial_loss,
                trained.final_loss,
                path.display()
            );
        }
        Command::Run { resume } => {
            let opts = RunOptions {
                workers: cli.workers,
                progress_dir: resume.then(|| out.join("progress")),
                estimator: None,
            };
            let report = run_pipeline(&cfg, &opts)?;
            let files = emit_report(&report, &cfg, &out)?;
            print_rows(&files.csv)?;
            println!("wall clock {:.1} s; results in {}", report.wall_clock_s, out.display());
        }
        Command::Replay { log_dir } => {
            let report = replay(&cfg, &log_dir, None)?;
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let csv = out.join("replay.csv");
            std::fs::write(&csv, report.to_csv()?)?;
            print_rows(&csv)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
