use anyhow::Result;
use clap::Args;
use std::path::PathBuf;

use aster::eval::{run_eval, ParamOverride};
use aster::tracks::{self, Track};
use aster::trajectory;

#[derive(Args)]
pub struct EvalArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path or stub:{hover,tracker,random}.
    #[arg(long)]
    pub checkpoint: String,
    /// Track spec: a file path, name:<Ribbon|Croissant|MultiHeading> or
    /// random:<n>:<seed>.
    #[arg(long)]
    pub track: String,
    /// Episodes per track.
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Payload-mass scale override (1.0 = nominal).
    #[arg(long, default_value_t = 1.0)]
    pub ml_scale: f64,
    /// Cable-length scale override (1.0 = nominal).
    #[arg(long, default_value_t = 1.0)]
    pub l_scale: f64,
    /// Write per-episode trajectory CSVs next to the report.
    #[arg(long, default_value_t = false)]
    pub trajectories: bool,
    #[arg(long)]
    pub out: PathBuf,
}

/// Expands the track spec and episode count into the evaluated track list.
/// `random:<wps>:<seed>` yields one *distinct* random track per episode from
/// a single deterministic stream; other specs run the same track each time.
pub fn episode_tracks(
    spec: &str,
    episodes: usize,
    run: &aster::config::RunConfig,
) -> Result<Vec<Track>> {
    let sampler = run.env.sampler();
    let n_episodes = episodes.max(1);
    if let Some(rest) = spec.strip_prefix("random:") {
        let mut parts = rest.split(':');
        let wps: usize = parts
            .next()
            .and_then(|s| s.parse().ok())
            .filter(|n| *n >= 1)
            .ok_or_else(|| anyhow::anyhow!("bad track spec '{spec}'"))?;
        let track_seed: u64 = parts
            .next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| anyhow::anyhow!("bad track spec '{spec}'"))?;
        if parts.next().is_some() {
            anyhow::bail!("bad track spec '{spec}'");
        }
        let mut rng = aster::config::seeded_rng(track_seed, 0);
        return Ok((0..n_episodes)
            .map(|_| tracks::random_track(wps, &sampler, &mut rng))
            .collect());
    }
    let base = tracks::from_spec(spec, &sampler)?;
    Ok(vec![base; n_episodes])
}

pub fn run(args: EvalArgs) -> Result<()> {
    let run_cfg = super::load_config(&args.config)?;
    let policy = super::load_policy(&args.checkpoint, &run_cfg)?;
    let track_list = episode_tracks(&args.track, args.episodes, &run_cfg)?;
    let overrides = ParamOverride {
        m_l_scale: args.ml_scale,
        l_scale: args.l_scale,
    };
    let (report, trajs) = run_eval(
        &policy,
        &track_list,
        &run_cfg,
        overrides,
        args.seed,
        args.trajectories,
    );

    super::ensure_dir(&args.out)?;
    super::write_file(&args.out.join("report.csv"), &report.to_csv())?;
    super::write_file(&args.out.join("summary.txt"), &format!("{}\n", report.summary()))?;
    if args.trajectories {
        let tdir = args.out.join("trajectories");
        super::ensure_dir(&tdir)?;
        for (i, rows) in trajs.iter().enumerate() {
            super::write_file(
                &tdir.join(format!("track_{i:04}.csv")),
                &trajectory::to_csv(rows),
            )?;
        }
    }
    println!("{}", report.summary());
    Ok(())
}
