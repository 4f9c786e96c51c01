use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};

use sbvae::dataset::DatasetSpec;
use sbvae::runner::{self, merge_json, EvalWhat, RunConfig, RunStatus, TrainOptions};

#[derive(Parser)]
#[command(name = "sbvae", version, about = "Train and analyze Spatial Broadcast VAEs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one run. With both --preset and --config, keys in the file override the preset.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<u64>,
        #[arg(long, default_value = "runs")]
        runs: PathBuf,
        /// Continue from the run's last checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Run every value x replica of the config's sweep block.
    Sweep {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, default_value = "runs")]
        runs: PathBuf,
    },
    /// Produce metrics, traversal grids or a geometry plot from a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, value_enum)]
        what: EvalWhat,
        /// Dataset spec (JSON) replacing the run's dataset.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Aggregate the run records under a directory into CSV tables.
    Report {
        #[arg(long)]
        runs: PathBuf,
    },
    /// Print a preset as JSON.
    Preset { name: Option<String> },
}

fn read_json(path: &Path) -> anyhow::Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn load_config(config: Option<&Path>, preset: Option<&str>) -> anyhow::Result<RunConfig> {
    let mut value = match preset {
        Some(name) => serde_json::to_value(runner::preset(name)?)?,
        None => serde_json::Value::Object(Default::default()),
    };
    match config {
        Some(path) => merge_json(&mut value, read_json(path)?),
        None if preset.is_none() => bail!("give --config, --preset or both"),
        None => {}
    }
    serde_json::from_value(value).context("invalid run config")
}

fn main() -> anyhow::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match Cli::parse().command {
        Command::Train {
            config,
            preset,
            seed,
            steps,
            runs,
            resume,
        } => {
            let mut cfg = load_config(config.as_deref(), preset.as_deref())?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                cfg.steps = s;
                cfg.eval_every = cfg.eval_every.min(s);
            }
            let mut opts = TrainOptions::new(&runs);
            opts.resume = resume;
            let rec = runner::train(&cfg, &opts)?;
            if let Some(e) = rec.final_eval() {
                println!(
                    "{} step {}: nll {:.3} kl {:.3} elbo {:.3} mig {} latents_used {}",
                    rec.run_id,
                    e.step,
                    e.losses.nll,
                    e.losses.kl,
                    e.losses.elbo_loss,
                    e.metrics.mig.map_or("-".into(), |m| format!("{m:.3}")),
                    e.metrics.latents_used.map_or("-".into(), |u| u.to_string()),
                );
            }
            if let RunStatus::Diverged { step, reason } = &rec.status {
                println!("{} diverged at step {step}: {reason}", rec.run_id);
            }
            println!("{}", runs.join(&rec.run_id).display());
        }
        Command::Sweep { config, preset, runs } => {
            let cfg = load_config(config.as_deref(), preset.as_deref())?;
            let out = runner::sweep(&cfg, &runs)?;
            for r in &out.summary {
                println!(
                    "{} = {}: {}/{} completed, nll {:?} kl {:?} mig {:?}",
                    r.parameter, r.value, r.completed, r.replicas, r.nll_mean, r.kl_mean, r.mig_mean
                );
            }
            println!("{}", out.summary_path.display());
        }
        Command::Evaluate {
            checkpoint,
            what,
            dataset,
        } => {
            let ds: Option<DatasetSpec> = match dataset {
                Some(p) => Some(serde_json::from_value(read_json(&p)?)?),
                None => None,
            };
            let a = runner::evaluate(&checkpoint, ds.as_ref(), what)?;
            if let Some(m) = &a.metrics {
                println!("{}", serde_json::to_string(m)?);
            }
            if let Some(g) = &a.geometry {
                println!("{}", serde_json::to_string(g)?);
            }
            for f in &a.files {
                println!("{}", f.display());
            }
        }
        Command::Report { runs } => {
            let r = runner::report(&runs)?;
            println!("run_id\tstatus\tdecoder\tbeta\tnll\tkl\tmig");
            for row in &r.runs {
                let f = |v: Option<f64>| v.map_or("-".into(), |x| format!("{x:.3}"));
                println!(
                    "{}\t{}\t{}\t{}\t{}\t{}\t{}",
                    row.run_id,
                    row.status,
                    row.decoder,
                    row.beta,
                    f(row.nll),
                    f(row.kl),
                    f(row.mig)
                );
            }
            if let Some(rd) = &r.rate_distortion {
                println!("\nbeta\treplicas\tnll\tkl\tmig");
                for row in rd {
                    println!(
                        "{}\t{}\t{:.3} +- {:.3}\t{:.3} +- {:.3}\t{}",
                        row.beta,
                        row.replicas,
                        row.nll_mean,
                        row.nll_std,
                        row.kl_mean,
                        row.kl_std,
                        row.mig_mean.map_or("-".into(), |m| format!("{m:.3}"))
                    );
                }
            }
            for f in &r.files {
                println!("{}", f.display());
            }
        }
        Command::Preset { name } => match name {
            Some(n) => println!("{}", serde_json::to_string_pretty(&runner::preset(&n)?)?),
            None => runner::PRESETS.iter().for_each(|p| println!("{p}")),
        },
    }
    Ok(())
}
