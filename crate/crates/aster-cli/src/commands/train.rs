use anyhow::{bail, Result};
use clap::Args;
use std::path::PathBuf;

use aster::env::ResetMode;
use aster::policy::{checkpoint, train};

#[derive(Args)]
pub struct TrainArgs {
    /// Run configuration (TOML); defaults apply when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Master seed for all rng streams.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Training iterations (rollout + update cycles).
    #[arg(long, default_value_t = 100)]
    pub iterations: usize,
    /// Episode initialization: composite (seeded + hover mix) or hover-only.
    #[arg(long, default_value = "composite")]
    pub reset_mode: String,
    /// Output directory for metrics, checkpoints and the config snapshot.
    #[arg(long)]
    pub out: PathBuf,
    /// Checkpoint interval in iterations.
    #[arg(long, default_value_t = 50)]
    pub checkpoint_every: usize,
}

pub const METRICS_HEADER: &str = "iteration,env_steps,mean_episode_reward,mean_episode_length,\
mean_traversals,episodes_completed,pg_loss,v_loss,approx_kl,clip_fraction";

pub fn run(args: TrainArgs) -> Result<()> {
    let run_cfg = super::load_config(&args.config)?;
    let reset_mode = match args.reset_mode.as_str() {
        "composite" => ResetMode::Auto,
        "hover-only" => ResetMode::Hover,
        other => bail!("unknown reset mode '{other}' (expected composite or hover-only)"),
    };
    super::ensure_dir(&args.out)?;
    super::write_file(&args.out.join("config.toml"), &run_cfg.to_toml())?;

    let mut metrics = String::from(METRICS_HEADER);
    metrics.push('\n');
    if args.iterations == 0 {
        super::write_file(&args.out.join("metrics.csv"), &metrics)?;
        println!("config snapshot written to {}", args.out.display());
        return Ok(());
    }

    let fp = checkpoint::fingerprint(&run_cfg.env, &run_cfg.ppo);
    let ckpt_path = args.out.join("checkpoint.json");
    let every = args.checkpoint_every.max(1);
    let outcome = train(&run_cfg, reset_mode, args.seed, args.iterations, |row, ac| {
        metrics.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            row.iteration,
            row.env_steps_total,
            row.mean_episode_reward,
            row.mean_episode_length,
            row.mean_traversals,
            row.episodes_completed,
            row.pg_loss,
            row.v_loss,
            row.approx_kl,
            row.clip_fraction
        ));
        // Rolling snapshot so an interrupted run keeps usable artifacts.
        if (row.iteration + 1) % every == 0 {
            let _ = checkpoint::save(ac, &fp, &ckpt_path);
            let _ = std::fs::write(args.out.join("metrics.csv"), &metrics);
        }
        if (row.iteration + 1) % 10 == 0 || row.iteration == 0 {
            eprintln!(
                "iter {:>5}  steps {:>9}  reward {:>9.3}  len {:>7.1}  traversals {:>6.2}",
                row.iteration,
                row.env_steps_total,
                row.mean_episode_reward,
                row.mean_episode_length,
                row.mean_traversals
            );
        }
    })?;

    checkpoint::save(&outcome.learner.ac, &fp, &ckpt_path)?;
    super::write_file(&args.out.join("metrics.csv"), &metrics)?;
    println!(
        "trained {} iterations; checkpoint at {}",
        args.iterations,
        ckpt_path.display()
    );
    Ok(())
}
