use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use log::info;

use denoise_assist::dae::{load_checkpoint, save_checkpoint, Dims};
use denoise_assist::dataset::Dataset;
use denoise_assist::drivers::{generate_dataset, GenConfig};
use denoise_assist::evaluator::{paired_experiment, render_report, render_summary, DriverKind};
use denoise_assist::sim::{generate_terrain_with, TerrainParams, VehicleSpec};
use denoise_assist::trainer::{train_with, write_history_csv, TrainConfig};
use denoise_assist::ModelParams64;
use denoise_assist_server::{serve, Shared};

#[derive(Parser)]
#[command(name = "denoise-assist", version, about = "Denoising driver assistance: data, training, evaluation, serving")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Size {
    Full,
    Micro,
}

#[derive(Subcommand)]
enum Cmd {
    /// Record skilled-driver sessions to a CSV dataset.
    GenData {
        /// Terrain seeds, one session each: `a..b` (end exclusive) or `a,b,c`.
        #[arg(long, default_value = "1..11")]
        seeds: String,
        /// Total minutes of driving, split evenly across the seeds.
        #[arg(long, default_value_t = 30.0)]
        minutes: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the denoising autoencoder on a dataset.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Where to write the best checkpoint.
        #[arg(long)]
        out: PathBuf,
        /// Per-epoch loss history (CSV).
        #[arg(long)]
        history: Option<PathBuf>,
        #[arg(long, default_value_t = 50)]
        epochs: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Size::Full)]
        size: Size,
    },
    /// Paired closed-loop evaluation, assistance off vs on.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        /// Terrain seeds: `a..b` (end exclusive) or `a,b,c`.
        #[arg(long, default_value = "100..120")]
        seeds: String,
        #[arg(long, default_value = "correlated")]
        driver: DriverKind,
        /// Per-run CSV table followed by the summary.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Export a terrain as JSON.
    Terrain {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the WebSocket assistance service.
    Serve {
        #[arg(long, env = "DENOISE_ASSIST_CKPT")]
        ckpt: Option<PathBuf>,
        #[arg(long, env = "DENOISE_ASSIST_PORT", default_value_t = 8765)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
    },
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let s = s.trim();
    let seeds: Vec<u64> = if let Some((a, b)) = s.split_once("..") {
        let (a, b): (u64, u64) = (a.trim().parse()?, b.trim().parse()?);
        (a..b).collect()
    } else {
        s.split(',').map(|x| x.trim().parse()).collect::<Result<_, _>>()?
    };
    if seeds.is_empty() {
        bail!("seed list {s:?} is empty");
    }
    Ok(seeds)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().cmd {
        Cmd::GenData { seeds, minutes, out } => {
            let seeds = parse_seeds(&seeds)?;
            let data = generate_dataset(&seeds, minutes, &GenConfig::default())?;
            data.save(&out).with_context(|| format!("writing {}", out.display()))?;
            info!(
                "{} sessions, {} steps ({:.1} min) → {}",
                data.sessions.len(),
                data.total_steps(),
                data.total_steps() as f64 / 600.0,
                out.display()
            );
        }
        Cmd::Train {
            data,
            out,
            history,
            epochs,
            seed,
            size,
        } => {
            let d = Dataset::load(&data).with_context(|| format!("reading {}", data.display()))?;
            let cfg = TrainConfig {
                dims: match size {
                    Size::Full => Dims::FULL,
                    Size::Micro => Dims::MICRO,
                },
                epochs,
                seed,
                ..TrainConfig::default()
            };
            let outcome = train_with(&d, &cfg, |e| {
                info!("epoch {:>3}  lr {:.1e}  train {:.6}  val {:.6}", e.epoch, e.lr, e.train_mse, e.val_mse)
            })?;
            save_checkpoint(&outcome.params, &out)?;
            if let Some(h) = history {
                let mut w = BufWriter::new(File::create(&h)?);
                write_history_csv(&outcome.history, &mut w)?;
                w.flush()?;
            }
            let best = &outcome.history[outcome.best_epoch - 1];
            info!(
                "best epoch {}: val {:.6} vs noisy {:.6} → {}",
                outcome.best_epoch,
                best.val_mse,
                outcome.val_noisy_mse,
                out.display()
            );
        }
        Cmd::Eval {
            ckpt,
            seeds,
            driver,
            report,
        } => {
            let params: ModelParams64 = load_checkpoint(&ckpt, None)?;
            let seeds = parse_seeds(&seeds)?;
            let runs = paired_experiment(Arc::new(params), &seeds, &driver.config())?;
            print!("{}", render_summary(&runs));
            if let Some(path) = report {
                std::fs::write(&path, render_report(&runs))?;
                info!("report → {}", path.display());
            }
        }
        Cmd::Terrain { seed, out } => {
            let spec = generate_terrain_with(seed, &TerrainParams::default(), &VehicleSpec::default())?;
            spec.save_json(&out)?;
            info!("terrain {seed}: {:.0} m, {} obstacles → {}", spec.total_length, spec.obstacles.len(), out.display());
        }
        Cmd::Serve { ckpt, port, host } => {
            let shared = match ckpt {
                Some(p) => Shared::from_checkpoint(p),
                None => Shared::default(),
            };
            if let Some(e) = &shared.load_error {
                log::warn!("assisted sessions disabled: {e}");
            }
            let runtime = tokio::runtime::Runtime::new()?;
            runtime.block_on(async {
                let listener = tokio::net::TcpListener::bind((host.as_str(), port)).await?;
                info!("listening on ws://{}", listener.local_addr()?);
                serve(listener, Arc::new(shared)).await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_lists() {
        assert_eq!(parse_seeds("100..103").unwrap(), vec![100, 101, 102]);
        assert_eq!(parse_seeds("4, 9,2").unwrap(), vec![4, 9, 2]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("5..5").is_err());
        assert!(parse_seeds("a,b").is_err());
    }
}
