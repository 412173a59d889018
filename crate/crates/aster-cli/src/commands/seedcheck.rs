use anyhow::{bail, Context, Result};
use clap::Args;
use nalgebra::Vector3;
use std::fmt::Write as _;
use std::path::PathBuf;

use aster::config::seeded_rng;
use aster::dynamics::{hybrid_step, Phase};
use aster::hdss::{generate_seed, SeededEpisodeState};
use aster::tracks::{make_waypoint, Waypoint, WaypointKind};

#[derive(Args)]
pub struct SeedCheckArgs {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Waypoint spec `x,y,z:kind:yaw`, e.g. `0,0,3:upright:0`.
    #[arg(long, default_value = "0,0,3:upright:0")]
    pub waypoint: String,
    /// Number of seeds to generate.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Forward-integrate each seed K steps with the chain's feed-forward
    /// commands and report the divergence from the backward chain.
    #[arg(long, default_value_t = false)]
    pub forward_verify: bool,
    /// Write one chain CSV per seed under out/chains/.
    #[arg(long, default_value_t = false)]
    pub dump_chains: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub const CHAIN_HEADER: &str = "t,xl_x,xl_y,xl_z,vl_x,vl_y,vl_z,al_x,al_y,al_z,\
jl_x,jl_y,jl_z,xq_x,xq_y,xq_z,vq_x,vq_y,vq_z,aq_x,aq_y,aq_z,phase";

pub fn parse_waypoint(spec: &str, ws: &aster::hdss::Workspace) -> Result<Waypoint> {
    let parts: Vec<&str> = spec.split(':').collect();
    if parts.len() != 3 {
        bail!("waypoint spec must be x,y,z:kind:yaw, got '{spec}'");
    }
    let coords: Vec<f64> = parts[0]
        .split(',')
        .map(|v| v.parse::<f64>().context("waypoint coordinate"))
        .collect::<Result<_>>()?;
    if coords.len() != 3 {
        bail!("waypoint position needs three coordinates");
    }
    let kind = match parts[1] {
        "upright" => WaypointKind::Upright,
        "inverted" => WaypointKind::Inverted,
        other => bail!("unknown waypoint kind '{other}'"),
    };
    let yaw: f64 = parts[2].parse().context("waypoint yaw")?;
    Ok(make_waypoint(
        Vector3::new(coords[0], coords[1], coords[2]),
        kind,
        yaw,
        ws,
    )?)
}

pub fn chain_to_csv(seed: &SeededEpisodeState, dt: f64) -> String {
    let mut out = String::from(CHAIN_HEADER);
    out.push('\n');
    for (i, c) in seed.chain.iter().enumerate() {
        let t = i as f64 * dt;
        let mut fields = vec![format!("{t}")];
        for v in [c.x_l, c.v_l, c.a_l, c.j_l, c.x_q, c.v_q, c.a_q] {
            fields.push(format!("{}", v.x));
            fields.push(format!("{}", v.y));
            fields.push(format!("{}", v.z));
        }
        fields.push(
            match c.phase {
                Phase::Taut => "taut",
                Phase::Slack => "slack",
            }
            .to_string(),
        );
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

/// Replays the chain's feed-forward commands (thrust from ‖a_q − g‖,
/// body rates from the derived chain rates) through the simulator and
/// reports the max quadrotor position divergence from the chain.
pub fn forward_divergence(
    seed: &SeededEpisodeState,
    params: &aster::dynamics::PhysicalParams,
    dt: f64,
) -> f64 {
    let mut state = seed.state;
    let mut max_div = 0.0f64;
    for i in 0..seed.chain.len().saturating_sub(1) {
        let a_q = seed.chain[i].a_q;
        let t_cmd = (a_q - params.g_vec()).norm().clamp(0.0, params.t_max);
        let omega_cmd = seed.body_rates[i];
        match hybrid_step(&state, t_cmd, &omega_cmd, params, dt) {
            Ok((next, _)) => state = next,
            Err(_) => return f64::INFINITY,
        }
        let div = (state.x_q - seed.chain[i + 1].x_q).norm();
        max_div = max_div.max(div);
    }
    max_div
}

fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let idx = ((sorted.len() as f64 - 1.0) * q).round() as usize;
    sorted[idx]
}

pub fn run(args: SeedCheckArgs) -> Result<()> {
    let run_cfg = super::load_config(&args.config)?;
    let params = run_cfg.params.to_params();
    let ws = run_cfg.env.workspace;
    let wp = parse_waypoint(&args.waypoint, &ws)?;
    super::ensure_dir(&args.out)?;
    if args.dump_chains {
        super::ensure_dir(&args.out.join("chains"))?;
    }

    let mut csv = String::from("seed_id,valid,max_drift,phase_switches,resamples,forward_divergence\n");
    let mut drifts = Vec::new();
    let mut divergences = Vec::new();
    let mut switch_hist = std::collections::BTreeMap::<usize, usize>::new();
    let mut valid = 0usize;

    for i in 0..args.count {
        let mut rng = seeded_rng(args.seed, 100 + i as u64);
        match generate_seed(&wp, &run_cfg.hdss, &params, &ws, &mut rng) {
            Ok(seed) => {
                valid += 1;
                drifts.push(seed.max_drift);
                *switch_hist.entry(seed.phase_switches).or_insert(0) += 1;
                let div = if args.forward_verify {
                    let d = forward_divergence(&seed, &params, run_cfg.hdss.dt);
                    divergences.push(d);
                    format!("{d}")
                } else {
                    String::new()
                };
                let _ = writeln!(
                    csv,
                    "{},1,{},{},{},{}",
                    i, seed.max_drift, seed.phase_switches, seed.resamples, div
                );
                if args.dump_chains {
                    super::write_file(
                        &args.out.join("chains").join(format!("seed_{i:05}.csv")),
                        &chain_to_csv(&seed, run_cfg.hdss.dt),
                    )?;
                }
            }
            Err(_) => {
                let _ = writeln!(csv, "{i},0,,,,");
            }
        }
    }

    drifts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    divergences.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let pass_rate = valid as f64 / args.count.max(1) as f64;

    let mut summary = String::new();
    let _ = writeln!(summary, "waypoint: {}", args.waypoint);
    let _ = writeln!(summary, "seeds: {}", args.count);
    let _ = writeln!(summary, "validity_pass_rate: {pass_rate}");
    let _ = writeln!(
        summary,
        "drift_p50: {}  drift_p95: {}  drift_max: {}",
        percentile(&drifts, 0.5),
        percentile(&drifts, 0.95),
        drifts.last().copied().unwrap_or(f64::NAN)
    );
    let _ = writeln!(
        summary,
        "phase_switch_histogram: {}",
        switch_hist
            .iter()
            .map(|(k, v)| format!("{k}:{v}"))
            .collect::<Vec<_>>()
            .join(" ")
    );
    if args.forward_verify {
        let _ = writeln!(
            summary,
            "forward_divergence_p50: {}  p95: {}  max: {}",
            percentile(&divergences, 0.5),
            percentile(&divergences, 0.95),
            divergences.last().copied().unwrap_or(f64::NAN)
        );
    }

    super::write_file(&args.out.join("seeds.csv"), &csv)?;
    super::write_file(&args.out.join("summary.txt"), &summary)?;
    print!("{summary}");
    Ok(())
}
