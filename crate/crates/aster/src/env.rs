//! The attitude-aware waypoint-traversal MDP.
//!
//! Observations pack the relative positions to the next two waypoints, the
//! quadrotor velocity, the body→target relative rotation, the body-frame
//! payload position, the payload velocity, the target rotation and the
//! previous action into 37 scalars, with the fixed elementwise scaling
//! applied to positions and velocities. Actions are normalized 4-vectors
//! mapped linearly to a collective thrust acceleration and body-rate
//! setpoints. The traversal reward is gated on three simultaneous criteria
//! (plane crossing, proximity, attitude tolerance); safety, crash and
//! action-smoothness terms are added every step.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dynamics::{self, PhysicalParams, StepEvent, SystemState};
use crate::hdss::{self, SeedConfig, Workspace};
use crate::so3;
use crate::tracks::{self, SamplerConfig, Track, Waypoint};

pub const OBS_DIM: usize = 37;
pub const ACT_DIM: usize = 4;

/// Scaled observation vector plus named views used by tests.
#[derive(Debug, Clone)]
pub struct Observation {
    pub data: [f64; OBS_DIM],
}

impl Observation {
    pub fn dx1(&self) -> &[f64] {
        &self.data[0..3]
    }
    pub fn dx2(&self) -> &[f64] {
        &self.data[3..6]
    }
    pub fn v_q(&self) -> &[f64] {
        &self.data[6..9]
    }
    pub fn r_bt(&self) -> &[f64] {
        &self.data[9..18]
    }
    pub fn x_l_b(&self) -> &[f64] {
        &self.data[18..21]
    }
    pub fn v_l(&self) -> &[f64] {
        &self.data[21..24]
    }
    pub fn r_tw(&self) -> &[f64] {
        &self.data[24..33]
    }
    pub fn a_prev(&self) -> &[f64] {
        &self.data[33..37]
    }
}

/// Normalized action and its physical mapping.
#[derive(Debug, Clone, Copy)]
pub struct ActionCommand {
    pub a_norm: [f64; 4],
    /// Collective thrust acceleration [m/s²].
    pub t_cmd: f64,
    /// Body-rate setpoints [rad/s].
    pub omega_cmd: Vector3<f64>,
}

/// Per-step reward decomposition.
#[derive(Debug, Clone, Copy, Default)]
pub struct RewardBreakdown {
    pub r_target: f64,
    pub r_safe: f64,
    pub r_crash: f64,
    pub r_smooth: f64,
    pub traversed: bool,
    /// Position error at the traversal step [m].
    pub pos_err: f64,
    /// Geodesic attitude error at the traversal step [rad].
    pub att_err: f64,
}

impl RewardBreakdown {
    pub fn total(&self) -> f64 {
        self.r_target + self.r_safe + self.r_crash + self.r_smooth
    }
}

/// Environment constants. Field names double as the config file keys.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct EnvConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub sigma_p: f64,
    pub sigma_theta: f64,
    /// Completion bonus added on traversal.
    pub bonus_c: f64,
    /// Proximity gate [m].
    pub proximity_l: f64,
    /// Attitude gate [degrees].
    pub eps_theta_deg: f64,
    pub r_exceed: f64,
    pub r_bound: f64,
    /// Relative-position scaling [m].
    pub k_q: [f64; 3],
    /// Velocity scaling [m/s].
    pub k_v: [f64; 3],
    /// Payload-position scaling [m].
    pub k_l: [f64; 3],
    pub workspace: Workspace,
    /// Simulation step [s].
    pub dt: f64,
    /// Fraction of seeded resets in Auto mode.
    pub hdss_fraction: f64,
    /// Domain-randomization half-width for payload mass and cable length.
    pub dr_fraction: f64,
    pub max_episode_steps: usize,
    /// Inverted share of dynamically resampled waypoints.
    pub inverted_fraction: f64,
    /// Margin used for hover resets and waypoint clamping [m].
    pub reset_margin: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            lambda1: 10.0,
            lambda2: 10.0,
            lambda3: 1e-4,
            sigma_p: 3.0,
            sigma_theta: 2.0,
            bonus_c: 5.0,
            proximity_l: 0.75,
            eps_theta_deg: 25.0,
            r_exceed: 3.0,
            r_bound: 10.0,
            k_q: [4.0, 4.0, 3.0],
            k_v: [5.0, 5.0, 5.0],
            k_l: [0.5, 0.5, 0.5],
            workspace: Workspace::default(),
            dt: 0.01,
            hdss_fraction: 0.9,
            dr_fraction: 0.2,
            max_episode_steps: 1500,
            inverted_fraction: 0.5,
            reset_margin: 0.5,
        }
    }
}

impl EnvConfig {
    pub fn eps_theta_rad(&self) -> f64 {
        self.eps_theta_deg.to_radians()
    }

    pub fn sampler(&self) -> SamplerConfig {
        SamplerConfig {
            workspace: self.workspace,
            inverted_fraction: self.inverted_fraction,
        }
    }
}

/// Geodesic attitude error between the body and target rotations.
pub fn attitude_error(r_bw: &Matrix3<f64>, r_tw: &Matrix3<f64>) -> f64 {
    so3::rotation_angle(&(r_tw.transpose() * r_bw))
}

/// Builds the scaled 37-entry observation.
pub fn build_observation(
    state: &SystemState,
    wp1: &Waypoint,
    wp2: &Waypoint,
    a_prev: &[f64; 4],
    cfg: &EnvConfig,
) -> Observation {
    let mut data = [0.0; OBS_DIM];
    let dx1 = wp1.position - state.x_q;
    let dx2 = wp2.position - state.x_q;
    for i in 0..3 {
        data[i] = dx1[i] / cfg.k_q[i];
        data[3 + i] = dx2[i] / cfg.k_q[i];
        data[6 + i] = state.v_q[i] / cfg.k_v[i];
    }
    let r_bt = wp1.rotation.transpose() * state.r;
    let x_l_b = state.r.transpose() * (state.x_l - state.x_q);
    let r_tw = &wp1.rotation;
    for row in 0..3 {
        for col in 0..3 {
            data[9 + 3 * row + col] = r_bt[(row, col)];
            data[24 + 3 * row + col] = r_tw[(row, col)];
        }
    }
    for i in 0..3 {
        data[18 + i] = x_l_b[i] / cfg.k_l[i];
        data[21 + i] = state.v_l[i] / cfg.k_v[i];
    }
    data[33..37].copy_from_slice(a_prev);
    Observation { data }
}

/// Maps a normalized action to physical commands, clamping to `[-1, 1]`
/// first: `T = (ã+1)/2 · T_max`, `ω = ã ⊙ ω_max`.
pub fn map_action(a_norm: &[f64; 4], params: &PhysicalParams) -> ActionCommand {
    let mut a = *a_norm;
    for v in &mut a {
        *v = v.clamp(-1.0, 1.0);
    }
    ActionCommand {
        a_norm: a,
        t_cmd: (a[0] + 1.0) / 2.0 * params.t_max,
        omega_cmd: Vector3::new(
            a[1] * params.omega_max.x,
            a[2] * params.omega_max.y,
            a[3] * params.omega_max.z,
        ),
    }
}

/// Traversal test between two consecutive states: the target-plane dot
/// product `Δx_q1 · x_T` must cross from negative to positive, with the
/// post-step state inside the proximity and attitude gates. Returns the
/// verdict plus the position/attitude errors at the post-step state.
pub fn check_traversal(
    prev_state: &SystemState,
    state: &SystemState,
    waypoint: &Waypoint,
    cfg: &EnvConfig,
) -> (bool, f64, f64) {
    let x_t = waypoint.rotation * Vector3::x();
    let d_prev = (waypoint.position - prev_state.x_q).dot(&x_t);
    let d_now = (waypoint.position - state.x_q).dot(&x_t);
    let pos_err = (waypoint.position - state.x_q).norm();
    let att_err = attitude_error(&state.r, &waypoint.rotation);
    let crossed = d_prev < 0.0 && d_now >= 0.0;
    let ok = crossed && pos_err < cfg.proximity_l && att_err < cfg.eps_theta_rad();
    (ok, pos_err, att_err)
}

/// Per-step reward.
pub fn compute_reward(
    state: &SystemState,
    a_prev: &[f64; 4],
    a_now: &[f64; 4],
    traversal: (bool, f64, f64),
    cfg: &EnvConfig,
) -> RewardBreakdown {
    let (traversed, pos_err, att_err) = traversal;
    let r_target = if traversed {
        cfg.lambda1 * (-cfg.sigma_p * pos_err).exp()
            + cfg.lambda2 * (-cfg.sigma_theta * att_err).exp()
            + cfg.bonus_c
    } else {
        0.0
    };
    let z_l_body = (state.r.transpose() * (state.x_l - state.x_q)).z;
    let r_safe = if z_l_body > 0.0 { -cfg.r_exceed } else { 0.0 };
    let outside = !cfg.workspace.contains(&state.x_q) || !cfg.workspace.contains(&state.x_l);
    let r_crash = if outside { -cfg.r_bound } else { 0.0 };
    let diff: f64 = a_prev
        .iter()
        .zip(a_now.iter())
        .map(|(p, n)| (p - n) * (p - n))
        .sum();
    let r_smooth = -cfg.lambda3 * diff.sqrt();
    RewardBreakdown {
        r_target,
        r_safe,
        r_crash,
        r_smooth,
        traversed,
        pos_err,
        att_err,
    }
}

/// Episode reset mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResetMode {
    /// Seeded with probability `hdss_fraction`, hover otherwise.
    Auto,
    Hdss,
    Hover,
}

/// Draws an episode start state. Seeded resets back-propagate from the
/// waypoint and fall back to a hover reset if seeding fails; hover resets
/// place an upright stationary system at a uniform workspace position.
pub fn reset<R: Rng>(
    mode: ResetMode,
    waypoint: &Waypoint,
    seed_cfg: &SeedConfig,
    cfg: &EnvConfig,
    params: &PhysicalParams,
    rng: &mut R,
) -> SystemState {
    let mode = match mode {
        ResetMode::Auto => {
            if rng.random_range(0.0..1.0) < cfg.hdss_fraction {
                ResetMode::Hdss
            } else {
                ResetMode::Hover
            }
        }
        other => other,
    };
    match mode {
        ResetMode::Hdss => {
            match hdss::generate_seed(waypoint, seed_cfg, params, &cfg.workspace, rng) {
                Ok(seed) => seed.state,
                Err(_) => hover_reset(cfg, params, rng),
            }
        }
        ResetMode::Hover => hover_reset(cfg, params, rng),
        ResetMode::Auto => unreachable!(),
    }
}

fn hover_reset<R: Rng>(cfg: &EnvConfig, params: &PhysicalParams, rng: &mut R) -> SystemState {
    let pos = cfg.workspace.sample_margin(cfg.reset_margin, rng);
    SystemState::hover(pos, params)
}

/// Domain randomization: payload mass and cable length independently scaled
/// by uniform factors in `[1 - dr, 1 + dr]`.
pub fn randomize_params<R: Rng>(
    nominal: &PhysicalParams,
    cfg: &EnvConfig,
    rng: &mut R,
) -> PhysicalParams {
    let mut p = *nominal;
    if cfg.dr_fraction > 0.0 {
        p.m_l *= rng.random_range(1.0 - cfg.dr_fraction..=1.0 + cfg.dr_fraction);
        p.l *= rng.random_range(1.0 - cfg.dr_fraction..=1.0 + cfg.dr_fraction);
    }
    p
}

/// Draws the next waypoint relative to the current one (see
/// [`tracks::resample_waypoint`]); offsets live in the fixed relative volume
/// and the position is clamped into the workspace with the reset margin.
pub fn resample_waypoint<R: Rng>(current: &Waypoint, cfg: &EnvConfig, rng: &mut R) -> Waypoint {
    tracks::resample_waypoint(current, &cfg.sampler(), rng)
}

/// Waypoint source for an episode: endless resampling (training) or a fixed
/// track (evaluation).
#[derive(Debug, Clone)]
enum TargetMode {
    Dynamic,
    Fixed(Track),
}

/// Step outcome handed to the learner / evaluator.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: RewardBreakdown,
    pub done: bool,
    /// Episode ended by the step cap rather than a crash.
    pub truncated: bool,
    pub event: StepEvent,
    /// Index of the waypoint credited this step, if any.
    pub traversed_waypoint: Option<usize>,
}

/// A single environment instance with its own rng stream.
pub struct WaypointEnv {
    pub cfg: EnvConfig,
    pub seed_cfg: SeedConfig,
    nominal_params: PhysicalParams,
    pub params: PhysicalParams,
    reset_mode: ResetMode,
    target_mode: TargetMode,
    rng: ChaCha8Rng,
    pub state: SystemState,
    wp_current: Waypoint,
    wp_next: Waypoint,
    /// Cursor into the fixed track.
    cursor: usize,
    pub a_prev: [f64; 4],
    pub steps: usize,
    pub episode_reward: f64,
    pub episode_traversals: usize,
    done: bool,
}

impl WaypointEnv {
    /// Training-style env with endless waypoint resampling.
    pub fn new_dynamic(
        cfg: EnvConfig,
        seed_cfg: SeedConfig,
        params: PhysicalParams,
        reset_mode: ResetMode,
        rng: ChaCha8Rng,
    ) -> Self {
        let mut env = WaypointEnv {
            cfg,
            seed_cfg,
            nominal_params: params,
            params,
            reset_mode,
            target_mode: TargetMode::Dynamic,
            rng,
            state: SystemState::hover(cfg.workspace.center(), &params),
            wp_current: tracks::make_waypoint(
                cfg.workspace.center(),
                tracks::WaypointKind::Upright,
                0.0,
                &cfg.workspace,
            )
            .expect("workspace center is valid"),
            wp_next: tracks::make_waypoint(
                cfg.workspace.center(),
                tracks::WaypointKind::Upright,
                0.0,
                &cfg.workspace,
            )
            .expect("workspace center is valid"),
            cursor: 0,
            a_prev: [0.0; 4],
            steps: 0,
            episode_reward: 0.0,
            episode_traversals: 0,
            done: false,
        };
        env.reset_episode();
        env
    }

    /// Evaluation env bound to a fixed track. The start state hovers two
    /// meters behind the first waypoint's crossing plane.
    pub fn new_fixed(
        cfg: EnvConfig,
        seed_cfg: SeedConfig,
        params: PhysicalParams,
        track: Track,
        rng: ChaCha8Rng,
    ) -> Self {
        assert!(!track.waypoints.is_empty());
        let mut env = WaypointEnv {
            cfg,
            seed_cfg,
            nominal_params: params,
            params,
            reset_mode: ResetMode::Hover,
            target_mode: TargetMode::Fixed(track),
            rng,
            state: SystemState::hover(cfg.workspace.center(), &params),
            wp_current: tracks::make_waypoint(
                cfg.workspace.center(),
                tracks::WaypointKind::Upright,
                0.0,
                &cfg.workspace,
            )
            .expect("workspace center is valid"),
            wp_next: tracks::make_waypoint(
                cfg.workspace.center(),
                tracks::WaypointKind::Upright,
                0.0,
                &cfg.workspace,
            )
            .expect("workspace center is valid"),
            cursor: 0,
            a_prev: [0.0; 4],
            steps: 0,
            episode_reward: 0.0,
            episode_traversals: 0,
            done: false,
        };
        env.reset_episode();
        env
    }

    pub fn current_waypoint(&self) -> &Waypoint {
        &self.wp_current
    }

    pub fn next_waypoint(&self) -> &Waypoint {
        &self.wp_next
    }

    pub fn waypoints_remaining(&self) -> usize {
        match &self.target_mode {
            TargetMode::Dynamic => usize::MAX,
            TargetMode::Fixed(track) => track.waypoints.len().saturating_sub(self.cursor),
        }
    }

    fn sync_fixed_targets(&mut self) {
        if let TargetMode::Fixed(track) = &self.target_mode {
            let n = track.waypoints.len();
            let c = self.cursor.min(n - 1);
            self.wp_current = track.waypoints[c];
            // Last waypoint duplicates as the look-ahead.
            self.wp_next = track.waypoints[(c + 1).min(n - 1)];
        }
    }

    /// Starts a fresh episode: re-randomizes parameters, redraws waypoints
    /// (dynamic mode) and the start state, and clears accumulators.
    pub fn reset_episode(&mut self) -> Observation {
        self.params = randomize_params(&self.nominal_params, &self.cfg, &mut self.rng);
        match &self.target_mode {
            TargetMode::Dynamic => {
                let anchor_pos = self.cfg.workspace.sample_margin(self.cfg.reset_margin, &mut self.rng);
                let anchor = tracks::make_waypoint(
                    anchor_pos,
                    tracks::WaypointKind::Upright,
                    0.0,
                    &self.cfg.workspace,
                )
                .expect("margin-sampled anchor is valid");
                self.wp_current = resample_waypoint(&anchor, &self.cfg, &mut self.rng);
                self.wp_next = resample_waypoint(&self.wp_current, &self.cfg, &mut self.rng);
                self.state = reset(
                    self.reset_mode,
                    &self.wp_current,
                    &self.seed_cfg,
                    &self.cfg,
                    &self.params,
                    &mut self.rng,
                );
            }
            TargetMode::Fixed(track) => {
                self.cursor = 0;
                let first = track.waypoints[0];
                // The crossing criterion wants (wp - x_q)·x_T to go from
                // negative to positive, so the approach side is +x_T.
                let x_t = first.rotation * Vector3::x();
                let start = self
                    .cfg
                    .workspace
                    .clamp_margin(&(first.position + x_t * 2.0), self.cfg.reset_margin);
                self.state = SystemState::hover(start, &self.params);
                self.sync_fixed_targets();
            }
        }
        self.a_prev = [0.0; 4];
        self.steps = 0;
        self.episode_reward = 0.0;
        self.episode_traversals = 0;
        self.done = false;
        self.observation()
    }

    pub fn observation(&self) -> Observation {
        build_observation(&self.state, &self.wp_current, &self.wp_next, &self.a_prev, &self.cfg)
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Advances one step. The episode terminates on workspace violation,
    /// integration failure, the step cap, or (fixed tracks) track completion.
    pub fn step(&mut self, a_norm: &[f64; 4]) -> StepOutcome {
        assert!(!self.done, "step() called on a terminal episode");
        let cmd = map_action(a_norm, &self.params);
        let prev_state = self.state;

        let (next, event, integration_failed) = match dynamics::hybrid_step(
            &prev_state,
            cmd.t_cmd,
            &cmd.omega_cmd,
            &self.params,
            self.cfg.dt,
        ) {
            Ok((s, ev)) => (s, ev, false),
            Err(_) => (prev_state, StepEvent::None, true),
        };
        self.state = next;
        self.steps += 1;

        let traversal = check_traversal(&prev_state, &self.state, &self.wp_current, &self.cfg);
        let mut reward = compute_reward(&self.state, &self.a_prev, &cmd.a_norm, traversal, &self.cfg);
        if integration_failed {
            reward.r_crash = -self.cfg.r_bound;
        }

        let mut traversed_waypoint = None;
        if reward.traversed {
            self.episode_traversals += 1;
            match &self.target_mode {
                TargetMode::Dynamic => {
                    traversed_waypoint = Some(self.episode_traversals - 1);
                    self.wp_current = self.wp_next;
                    self.wp_next = resample_waypoint(&self.wp_current, &self.cfg, &mut self.rng);
                }
                TargetMode::Fixed(_) => {
                    traversed_waypoint = Some(self.cursor);
                    self.cursor += 1;
                    self.sync_fixed_targets();
                }
            }
        }

        let out_of_bounds = reward.r_crash != 0.0;
        let track_done = matches!(&self.target_mode, TargetMode::Fixed(t) if self.cursor >= t.waypoints.len());
        let truncated =
            self.steps >= self.cfg.max_episode_steps && !out_of_bounds && !track_done;
        self.done = out_of_bounds || track_done || truncated;

        self.a_prev = cmd.a_norm;
        self.episode_reward += reward.total();

        StepOutcome {
            observation: self.observation(),
            reward,
            done: self.done,
            truncated,
            event,
            traversed_waypoint,
        }
    }

    /// Simulation time of the current state.
    pub fn time(&self) -> f64 {
        self.state.t
    }
}
