use anyhow::Result;
use clap::Args;
use std::path::PathBuf;

use aster::eval::{run_sweep, sweep_to_csv, SweepParam, SweepRow};

#[derive(Args)]
pub struct SweepArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Checkpoint path or stub:{hover,tracker,random}.
    #[arg(long)]
    pub checkpoint: String,
    /// Swept parameter: m_l, l, or both.
    #[arg(long, default_value = "both")]
    pub param: String,
    /// Variation fractions, comma separated.
    #[arg(long, default_value = "-0.4,-0.2,0,0.2,0.4", value_delimiter = ',')]
    pub variations: Vec<f64>,
    /// Track spec evaluated at every grid point.
    #[arg(long, default_value = "random:10:1")]
    pub track: String,
    /// Episodes (distinct random tracks) per grid point.
    #[arg(long, default_value_t = 200)]
    pub episodes: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: SweepArgs) -> Result<()> {
    let run_cfg = super::load_config(&args.config)?;
    let policy = super::load_policy(&args.checkpoint, &run_cfg)?;
    let tracks = super::eval::episode_tracks(&args.track, args.episodes, &run_cfg)?;

    let params: Vec<SweepParam> = match args.param.as_str() {
        "both" => vec![SweepParam::PayloadMass, SweepParam::CableLength],
        other => vec![other.parse().map_err(anyhow::Error::msg)?],
    };

    let mut rows: Vec<SweepRow> = Vec::new();
    for p in params {
        rows.extend(run_sweep(
            &policy,
            p,
            &args.variations,
            &tracks,
            &run_cfg,
            args.seed,
        ));
    }

    super::ensure_dir(&args.out)?;
    let grid = sweep_to_csv(&rows);
    super::write_file(&args.out.join("sweep.csv"), &grid)?;
    for r in &rows {
        let pct = (r.variation * 100.0).round() as i64;
        super::write_file(
            &args.out.join(format!("report_{}_{:+}.csv", r.param, pct)),
            &r.report.to_csv(),
        )?;
        println!("{} {:+}%: {}", r.param, pct, r.report.summary());
    }
    Ok(())
}
