//! Track evaluation and robustness sweeps.
//!
//! An evaluation runs one episode per track: the system starts in hover two
//! meters in front of the first waypoint's crossing plane and must traverse
//! every waypoint within the per-track timeout. Success rate, completion
//! times and quadrotor velocity statistics are aggregated into a report
//! whose accounting can be recounted from the exported trajectories.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::config::{seeded_rng, RunConfig};
use crate::dynamics::PhysicalParams;
use crate::env::{map_action, WaypointEnv};
use crate::policy::ActorCritic;
use crate::so3;
use crate::tracks::Track;
use crate::trajectory::TrajectoryRow;

/// Per-track timeout for the success definition [s].
pub const TRACK_TIMEOUT_S: f64 = 30.0;

/// Policy used during evaluation. Checkpoint policies act on observations
/// with the deterministic mean; the scripted stubs may read the full state.
pub enum EvalPolicy {
    Checkpoint(Box<ActorCritic>),
    /// Constant hover-thrust action.
    StubHover,
    /// PD position tracker that aims just past the current waypoint's plane
    /// and aligns the target attitude. Reliable on gentle upright targets.
    StubTracker,
    /// Uniform random actions (sanity floor).
    StubRandom,
}

impl EvalPolicy {
    /// Parses `stub:hover`, `stub:tracker`, `stub:random`; anything else is
    /// treated as a checkpoint path by the caller.
    pub fn from_stub_name(name: &str) -> Option<EvalPolicy> {
        match name {
            "stub:hover" => Some(EvalPolicy::StubHover),
            "stub:tracker" => Some(EvalPolicy::StubTracker),
            "stub:random" => Some(EvalPolicy::StubRandom),
            _ => None,
        }
    }

    fn act(&self, env: &WaypointEnv, rng: &mut rand_chacha::ChaCha8Rng) -> [f64; 4] {
        match self {
            EvalPolicy::Checkpoint(ac) => {
                let obs = env.observation();
                match ac.policy_forward(&obs.data) {
                    Ok((mean, _)) => [mean[0], mean[1], mean[2], mean[3]],
                    Err(_) => [0.0; 4],
                }
            }
            EvalPolicy::StubHover => hover_action(&env.params),
            EvalPolicy::StubTracker => tracker_action(env),
            EvalPolicy::StubRandom => {
                use rand::Rng;
                let mut a = [0.0; 4];
                for v in &mut a {
                    *v = rng.random_range(-1.0..=1.0);
                }
                a
            }
        }
    }
}

fn hover_action(params: &PhysicalParams) -> [f64; 4] {
    let a_t = 2.0 * params.hover_thrust() / params.t_max - 1.0;
    [a_t, 0.0, 0.0, 0.0]
}

/// PD position controller with flatness attitude tracking. The aim point
/// sits slightly past the waypoint on the crossing side so the plane is
/// actually crossed rather than asymptotically approached.
fn tracker_action(env: &WaypointEnv) -> [f64; 4] {
    let p = &env.params;
    let wp = env.current_waypoint();
    let x_t = wp.rotation * Vector3::x();
    let aim = wp.position - x_t * 0.3;
    let kp = 4.0;
    let kd = 3.5;
    let a_des = (aim - env.state.x_q) * kp - env.state.v_q * kd - p.g_vec();
    // a_des here is the specific thrust (acceleration the rotors must add).
    let t_cmd = a_des.norm().clamp(0.0, p.t_max);
    let r_des = so3::from_z_axis_yaw(&a_des, wp.yaw).unwrap_or_else(nalgebra::Matrix3::identity);
    let err = so3::log_map_checked(&(env.state.r.transpose() * r_des)).unwrap_or_default();
    let omega_cmd = err * 6.0;
    let a_t = 2.0 * t_cmd / p.t_max - 1.0;
    [
        a_t.clamp(-1.0, 1.0),
        (omega_cmd.x / p.omega_max.x).clamp(-1.0, 1.0),
        (omega_cmd.y / p.omega_max.y).clamp(-1.0, 1.0),
        (omega_cmd.z / p.omega_max.z).clamp(-1.0, 1.0),
    ]
}

/// Outcome of one track episode.
#[derive(Debug, Clone)]
pub struct TrackRecord {
    pub track_id: usize,
    pub waypoints: usize,
    pub traversed: usize,
    pub success: bool,
    /// Time of the last traversal [s]; meaningful only on success.
    pub completion_time: f64,
    pub avg_velocity: f64,
    pub max_velocity: f64,
    pub steps: usize,
}

/// Aggregated evaluation report.
#[derive(Debug, Clone)]
pub struct EvalReport {
    pub success_rate: f64,
    /// Mean completion time over successful tracks [s]; 0 when none.
    pub avg_completion_time: f64,
    /// Mean of the per-track average quadrotor speeds [m/s].
    pub avg_velocity: f64,
    /// Max quadrotor speed over all tracks [m/s].
    pub max_velocity: f64,
    pub per_track: Vec<TrackRecord>,
}

impl EvalReport {
    fn from_records(per_track: Vec<TrackRecord>) -> Self {
        let n = per_track.len().max(1) as f64;
        let successes: Vec<&TrackRecord> = per_track.iter().filter(|r| r.success).collect();
        let success_rate = successes.len() as f64 / n;
        let avg_completion_time = if successes.is_empty() {
            0.0
        } else {
            successes.iter().map(|r| r.completion_time).sum::<f64>() / successes.len() as f64
        };
        let avg_velocity = per_track.iter().map(|r| r.avg_velocity).sum::<f64>() / n;
        let max_velocity = per_track.iter().map(|r| r.max_velocity).fold(0.0, f64::max);
        EvalReport {
            success_rate,
            avg_completion_time,
            avg_velocity,
            max_velocity,
            per_track,
        }
    }

    /// Per-track records as CSV (stable order by track id).
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "track_id,waypoints,traversed,success,completion_time,avg_velocity,max_velocity,steps\n",
        );
        for r in &self.per_track {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                r.track_id,
                r.waypoints,
                r.traversed,
                r.success as u8,
                r.completion_time,
                r.avg_velocity,
                r.max_velocity,
                r.steps
            ));
        }
        out
    }

    pub fn summary(&self) -> String {
        format!(
            "tracks: {}  SR: {:.3}  T: {:.3} s  avg vel: {:.3} m/s  max vel: {:.3} m/s",
            self.per_track.len(),
            self.success_rate,
            self.avg_completion_time,
            self.avg_velocity,
            self.max_velocity
        )
    }
}

/// Parses the per-track CSV back into records (used by the parse-back
/// checks on report files).
pub fn records_from_csv(text: &str) -> Result<Vec<TrackRecord>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty report")?;
    if header
        != "track_id,waypoints,traversed,success,completion_time,avg_velocity,max_velocity,steps"
    {
        return Err(format!("unexpected header: {header}"));
    }
    let mut out = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(format!("expected 8 fields, got {}", f.len()));
        }
        out.push(TrackRecord {
            track_id: f[0].parse().map_err(|e| format!("track_id: {e}"))?,
            waypoints: f[1].parse().map_err(|e| format!("waypoints: {e}"))?,
            traversed: f[2].parse().map_err(|e| format!("traversed: {e}"))?,
            success: f[3] == "1",
            completion_time: f[4].parse().map_err(|e| format!("completion_time: {e}"))?,
            avg_velocity: f[5].parse().map_err(|e| format!("avg_velocity: {e}"))?,
            max_velocity: f[6].parse().map_err(|e| format!("max_velocity: {e}"))?,
            steps: f[7].parse().map_err(|e| format!("steps: {e}"))?,
        });
    }
    Ok(out)
}

/// Scale overrides applied on top of the nominal parameters.
#[derive(Debug, Clone, Copy)]
pub struct ParamOverride {
    pub m_l_scale: f64,
    pub l_scale: f64,
}

impl Default for ParamOverride {
    fn default() -> Self {
        ParamOverride {
            m_l_scale: 1.0,
            l_scale: 1.0,
        }
    }
}

/// Runs one episode on a fixed track; returns the record and, on request,
/// the trajectory.
pub fn run_track_episode(
    policy: &EvalPolicy,
    track: &Track,
    run: &RunConfig,
    overrides: ParamOverride,
    seed: u64,
    track_id: usize,
    capture: bool,
) -> (TrackRecord, Vec<TrajectoryRow>) {
    let mut params = run.params.to_params();
    params.m_l *= overrides.m_l_scale;
    params.l *= overrides.l_scale;

    let mut env_cfg = run.env;
    env_cfg.max_episode_steps = (TRACK_TIMEOUT_S / env_cfg.dt).round() as usize;
    env_cfg.dr_fraction = 0.0; // evaluation uses the explicit overrides only

    let n_waypoints = track.waypoints.len();
    let mut env = WaypointEnv::new_fixed(
        env_cfg,
        run.hdss,
        params,
        track.clone(),
        seeded_rng(seed, 10_000 + track_id as u64),
    );
    let mut policy_rng = seeded_rng(seed, 20_000 + track_id as u64);

    let mut rows = Vec::new();
    let mut traversed = 0usize;
    let mut completion_time = 0.0;
    let mut sum_speed = 0.0;
    let mut max_speed = 0.0f64;
    let mut steps = 0usize;
    while !env.is_done() {
        let a = policy.act(&env, &mut policy_rng);
        let a_mapped = map_action(&a, &env.params).a_norm;
        let out = env.step(&a);
        steps += 1;
        let speed = env.state.v_q.norm();
        sum_speed += speed;
        max_speed = max_speed.max(speed);
        if out.traversed_waypoint.is_some() {
            traversed += 1;
            completion_time = env.state.t;
        }
        if capture {
            rows.push(TrajectoryRow::from_step(
                &env.state,
                &a_mapped,
                &out.reward,
                out.event,
                out.traversed_waypoint,
            ));
        }
        if out.done {
            break;
        }
    }

    let success = traversed == n_waypoints;
    (
        TrackRecord {
            track_id,
            waypoints: n_waypoints,
            traversed,
            success,
            completion_time: if success { completion_time } else { 0.0 },
            avg_velocity: if steps > 0 { sum_speed / steps as f64 } else { 0.0 },
            max_velocity: max_speed,
            steps,
        },
        rows,
    )
}

/// Evaluates a policy over a set of tracks (episodes run in parallel, the
/// report is ordered by track id).
pub fn run_eval(
    policy: &EvalPolicy,
    tracks: &[Track],
    run: &RunConfig,
    overrides: ParamOverride,
    seed: u64,
    capture: bool,
) -> (EvalReport, Vec<Vec<TrajectoryRow>>) {
    let results: Vec<(TrackRecord, Vec<TrajectoryRow>)> = tracks
        .par_iter()
        .enumerate()
        .map(|(i, track)| run_track_episode(policy, track, run, overrides, seed, i, capture))
        .collect();
    let mut records = Vec::with_capacity(results.len());
    let mut trajectories = Vec::with_capacity(results.len());
    for (r, t) in results {
        records.push(r);
        trajectories.push(t);
    }
    (EvalReport::from_records(records), trajectories)
}

/// Parameter swept by [`run_sweep`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    PayloadMass,
    CableLength,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "m_l" | "ml" | "mass" => Ok(SweepParam::PayloadMass),
            "l" | "length" => Ok(SweepParam::CableLength),
            other => Err(format!("unknown sweep parameter '{other}' (expected m_l or l)")),
        }
    }
}

impl SweepParam {
    pub fn name(&self) -> &'static str {
        match self {
            SweepParam::PayloadMass => "m_l",
            SweepParam::CableLength => "l",
        }
    }
}

/// One sweep row: the variation fraction and the aggregate metrics.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: &'static str,
    pub variation: f64,
    pub report: EvalReport,
}

/// Evaluates the policy across variation fractions of one parameter on a
/// shared set of tracks.
pub fn run_sweep(
    policy: &EvalPolicy,
    param: SweepParam,
    variations: &[f64],
    tracks: &[Track],
    run: &RunConfig,
    seed: u64,
) -> Vec<SweepRow> {
    variations
        .iter()
        .map(|&variation| {
            let overrides = match param {
                SweepParam::PayloadMass => ParamOverride {
                    m_l_scale: 1.0 + variation,
                    ..ParamOverride::default()
                },
                SweepParam::CableLength => ParamOverride {
                    l_scale: 1.0 + variation,
                    ..ParamOverride::default()
                },
            };
            let (report, _) = run_eval(policy, tracks, run, overrides, seed, false);
            SweepRow {
                param: param.name(),
                variation,
                report,
            }
        })
        .collect()
}

/// Sweep rows as CSV (`param,variation_pct,...` per grid point).
pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(
        "param,variation_pct,success_rate,avg_completion_time,avg_velocity,max_velocity\n",
    );
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.param,
            (r.variation * 100.0).round() as i64,
            r.report.success_rate,
            r.report.avg_completion_time,
            r.report.avg_velocity,
            r.report.max_velocity
        ));
    }
    out
}

/// Parses [`sweep_to_csv`] output (parse-back checks).
pub fn sweep_from_csv(text: &str) -> Result<Vec<(String, i64, f64, f64, f64, f64)>, String> {
    let mut lines = text.lines();
    let header = lines.next().ok_or("empty sweep")?;
    if header != "param,variation_pct,success_rate,avg_completion_time,avg_velocity,max_velocity" {
        return Err(format!("unexpected header: {header}"));
    }
    let mut out = Vec::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(format!("expected 6 fields, got {}", f.len()));
        }
        out.push((
            f[0].to_string(),
            f[1].parse().map_err(|e| format!("variation: {e}"))?,
            f[2].parse().map_err(|e| format!("sr: {e}"))?,
            f[3].parse().map_err(|e| format!("time: {e}"))?,
            f[4].parse().map_err(|e| format!("avg vel: {e}"))?,
            f[5].parse().map_err(|e| format!("max vel: {e}"))?,
        ));
    }
    Ok(out)
}
