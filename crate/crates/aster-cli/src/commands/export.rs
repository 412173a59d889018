use anyhow::{bail, Context, Result};
use clap::Args;
use std::fmt::Write as _;
use std::path::PathBuf;

use aster::eval::{run_eval, ParamOverride};
use aster::trajectory;

#[derive(Args)]
pub struct ExportArgs {
    /// Re-summarize the trajectories of a previous run directory instead of
    /// rolling out fresh episodes.
    #[arg(long)]
    pub run_dir: Option<PathBuf>,
    /// Run configuration (TOML); rollout mode only.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path or stub:{hover,tracker,random}; rollout mode only.
    #[arg(long)]
    pub checkpoint: Option<String>,
    /// Track spec; rollout mode only.
    #[arg(long)]
    pub track: Option<String>,
    #[arg(long, default_value_t = 1)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

/// Velocity statistics recomputed from trajectory rows.
pub fn velocity_stats(rows: &[trajectory::TrajectoryRow]) -> (f64, f64) {
    if rows.is_empty() {
        return (0.0, 0.0);
    }
    let mut sum = 0.0;
    let mut max = 0.0f64;
    for r in rows {
        let v = (r.v_q[0] * r.v_q[0] + r.v_q[1] * r.v_q[1] + r.v_q[2] * r.v_q[2]).sqrt();
        sum += v;
        max = max.max(v);
    }
    (sum / rows.len() as f64, max)
}

fn summarize(trajs: &[(String, Vec<trajectory::TrajectoryRow>)]) -> String {
    let mut out = String::from("episode,steps,traversals,avg_velocity,max_velocity\n");
    for (name, rows) in trajs {
        let (avg, max) = velocity_stats(rows);
        let traversals = rows.iter().filter(|r| r.events.contains("traversal")).count();
        let _ = writeln!(out, "{},{},{},{},{}", name, rows.len(), traversals, avg, max);
    }
    out
}

pub fn run(args: ExportArgs) -> Result<()> {
    super::ensure_dir(&args.out)?;
    if let Some(run_dir) = &args.run_dir {
        let tdir = run_dir.join("trajectories");
        let mut entries: Vec<PathBuf> = std::fs::read_dir(&tdir)
            .with_context(|| format!("reading {}", tdir.display()))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        entries.sort();
        let mut trajs = Vec::new();
        for path in entries {
            let text = std::fs::read_to_string(&path)?;
            let rows = trajectory::from_csv(&text).map_err(anyhow::Error::msg)?;
            let name = path.file_stem().unwrap().to_string_lossy().to_string();
            trajs.push((name, rows));
        }
        super::write_file(&args.out.join("export_summary.csv"), &summarize(&trajs))?;
        println!("summarized {} trajectories from {}", trajs.len(), run_dir.display());
        return Ok(());
    }

    let (Some(checkpoint), Some(track)) = (&args.checkpoint, &args.track) else {
        bail!("export needs either --run-dir or both --checkpoint and --track");
    };
    let run_cfg = super::load_config(&args.config)?;
    let policy = super::load_policy(checkpoint, &run_cfg)?;
    let tracks = super::eval::episode_tracks(track, args.episodes, &run_cfg)?;
    let (report, trajs) = run_eval(
        &policy,
        &tracks,
        &run_cfg,
        ParamOverride::default(),
        args.seed,
        true,
    );
    let tdir = args.out.join("trajectories");
    super::ensure_dir(&tdir)?;
    let mut named = Vec::new();
    for (i, rows) in trajs.iter().enumerate() {
        let name = format!("track_{i:04}");
        super::write_file(&tdir.join(format!("{name}.csv")), &trajectory::to_csv(rows))?;
        named.push((name, rows.clone()));
    }
    super::write_file(&args.out.join("export_summary.csv"), &summarize(&named))?;
    super::write_file(&args.out.join("report.csv"), &report.to_csv())?;
    println!("{}", report.summary());
    Ok(())
}
