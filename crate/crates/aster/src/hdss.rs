//! Hybrid-dynamics state seeding.
//!
//! Episode start states are generated by back-propagating a sampled goal
//! configuration K steps through the cable's taut and slack phases. Each
//! backstep applies an affine kinematic-inversion map to stacked flat-output
//! blocks: the payload chain `ξ_l = [x_l, v_l, a_l, j_l]` driven by a sampled
//! snap, and the quadrotor chain `ξ_q = [x_q, v_q, a_q]` whose acceleration
//! is tied to the payload through the cable constraint (taut) or driven by a
//! sampled jerk (slack). Attitudes are recovered from the quadrotor
//! acceleration and the waypoint yaw, body rates by differencing consecutive
//! attitudes, and the step-0 state is assembled into a simulator state.
//!
//! The quadrotor chain is deliberately *not* re-projected onto the cable
//! sphere during back-propagation; the accumulated cable-length drift is
//! measured instead and gated when a seed is accepted.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use rand::Rng;
use thiserror::Error;

use crate::dynamics::{Phase, PhysicalParams, SystemState};
use crate::so3;
use crate::tracks::Waypoint;

/// Stacked flat-output blocks at one time step of the backward chain.
#[derive(Debug, Clone, Copy)]
pub struct FlatChain {
    pub x_l: Vector3<f64>,
    pub v_l: Vector3<f64>,
    pub a_l: Vector3<f64>,
    pub j_l: Vector3<f64>,
    pub x_q: Vector3<f64>,
    pub v_q: Vector3<f64>,
    pub a_q: Vector3<f64>,
    pub phase: Phase,
    /// 0 is the seeded start, K the goal.
    pub step_index: usize,
}

impl FlatChain {
    pub fn is_finite(&self) -> bool {
        [self.x_l, self.v_l, self.a_l, self.j_l, self.x_q, self.v_q, self.a_q]
            .iter()
            .all(|v| v.iter().all(|c| c.is_finite()))
    }
}

/// Seeding configuration. All sampling ranges are symmetric per-component
/// bounds, `[-bound, bound]³`.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct SeedConfig {
    /// Number of backsteps.
    pub k_steps: usize,
    /// Backstep interval [s].
    pub dt: f64,
    /// Goal payload velocity bound [m/s].
    pub goal_velocity_range: f64,
    /// Goal payload acceleration bound [m/s²] (sampled in the target frame).
    pub goal_accel_range: f64,
    /// Goal payload jerk bound [m/s³].
    pub goal_jerk_range: f64,
    /// Per-backstep payload snap bound in the taut phase [m/s⁴].
    pub snap_range: f64,
    /// Per-backstep quadrotor jerk bound in the slack phase [m/s³].
    pub jerk_range: f64,
    /// Tension proxy threshold for the taut→slack switch [m/s²].
    pub eps_tension: f64,
    /// Accepted cable-length drift as a fraction of `l`.
    pub drift_tolerance: f64,
    /// Chain redraws before seeding gives up.
    pub max_resamples: usize,
}

impl Default for SeedConfig {
    fn default() -> Self {
        SeedConfig {
            k_steps: 60,
            dt: 0.01,
            goal_velocity_range: 3.0,
            goal_accel_range: 5.0,
            goal_jerk_range: 4.0,
            snap_range: 15.0,
            jerk_range: 50.0,
            eps_tension: 0.2,
            drift_tolerance: 0.05,
            max_resamples: 20,
        }
    }
}

/// Accepted seed: the step-0 simulator state plus chain diagnostics.
#[derive(Debug, Clone)]
pub struct SeededEpisodeState {
    pub state: SystemState,
    /// `| ‖x_q - x_l‖ - l |` maximized over taut chain steps [m].
    pub max_drift: f64,
    pub phase_switches: usize,
    pub resamples: usize,
    /// Chain in forward time order (step 0 first), for diagnostics.
    pub chain: Vec<FlatChain>,
    /// Attitudes along the chain, aligned with `chain`.
    pub attitudes: Vec<Matrix3<f64>>,
    /// Body rates along the chain, aligned with `chain`.
    pub body_rates: Vec<Vector3<f64>>,
}

#[derive(Debug, Error)]
pub enum SeedError {
    #[error("tension proxy vanished (‖a_l - g‖ = {0}); phase switch required")]
    PhaseSwitch(f64),
    #[error("attitude undefined in free fall (‖a_q - g‖ = {0})")]
    FreeFallAttitude(f64),
    #[error("consecutive attitudes {0} rad apart; body-rate ambiguity")]
    RateAmbiguity(f64),
    #[error("no valid seed after {0} resamples")]
    ResamplesExhausted(usize),
}

/// Backward signal from [`detect_backward_phase_switch`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhaseSignal {
    Stay,
    ToSlack,
    ToTaut,
}

// ---------------------------------------------------------------------------
// Printed transition matrices (scalar blocks acting on 3-vector components).
// ---------------------------------------------------------------------------

/// Taut-phase payload block matrix `A(Δt)`: backward 4-chain propagator.
#[rustfmt::skip]
pub fn taut_a_matrix(dt: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, -dt, dt * dt / 2.0, -dt * dt * dt / 6.0,
        0.0, 1.0, -dt,           dt * dt / 2.0,
        0.0, 0.0, 1.0,           -dt,
        0.0, 0.0, 0.0,           1.0,
    )
}

/// Forward 4-chain Taylor propagator; equals `A(-Δt)`.
pub fn taut_a_forward_matrix(dt: f64) -> Matrix4<f64> {
    taut_a_matrix(-dt)
}

/// Taut-phase snap input column `B(Δt)`.
pub fn taut_b_column(dt: f64) -> Vector4<f64> {
    Vector4::new(
        -dt * dt * dt * dt / 24.0,
        dt * dt * dt / 6.0,
        -dt * dt / 2.0,
        dt,
    )
}

/// Slack-phase payload block matrix: ballistic rows, acceleration and jerk
/// rows zeroed (the accel slot is refilled from the gravity column).
#[rustfmt::skip]
pub fn slack_a_matrix(dt: f64) -> Matrix4<f64> {
    Matrix4::new(
        1.0, -dt, dt * dt / 2.0, 0.0,
        0.0, 1.0, -dt,           0.0,
        0.0, 0.0, 0.0,           0.0,
        0.0, 0.0, 0.0,           0.0,
    )
}

/// Slack-phase quadrotor block matrix `D(Δt)`.
#[rustfmt::skip]
pub fn slack_d_matrix(dt: f64) -> Matrix3<f64> {
    Matrix3::new(
        1.0, -dt, dt * dt / 2.0,
        0.0, 1.0, -dt,
        0.0, 0.0, 1.0,
    )
}

/// Slack-phase quadrotor jerk column `E(Δt)`.
pub fn slack_e_column(dt: f64) -> Vector3<f64> {
    Vector3::new(-dt * dt * dt / 6.0, dt * dt / 2.0, -dt)
}

// ---------------------------------------------------------------------------
// Backsteps
// ---------------------------------------------------------------------------

/// One taut backstep without the tension-vanishing check. Exposed for the
/// seeding loop and the algebraic round-trip tests.
pub fn taut_backstep_raw(
    chain: &FlatChain,
    snap: &Vector3<f64>,
    cfg: &SeedConfig,
    params: &PhysicalParams,
) -> FlatChain {
    let dt = cfg.dt;
    let a = taut_a_matrix(dt);
    let b = taut_b_column(dt);

    let x_l = chain.x_l * a[(0, 0)]
        + chain.v_l * a[(0, 1)]
        + chain.a_l * a[(0, 2)]
        + chain.j_l * a[(0, 3)]
        + snap * b[0];
    let v_l = chain.v_l * a[(1, 1)] + chain.a_l * a[(1, 2)] + chain.j_l * a[(1, 3)] + snap * b[1];
    let a_l = chain.a_l * a[(2, 2)] + chain.j_l * a[(2, 3)] + snap * b[2];
    let j_l = chain.j_l * a[(3, 3)] + snap * b[3];

    // Quadrotor chain: position and velocity Taylor-backstepped with the
    // current acceleration; the new acceleration comes from differentiating
    // the cable constraint (printed F column). The tension proxy in the
    // denominator is floored at eps_tension: below that threshold the taut
    // map does not apply anyway (the phase rule switches to slack there),
    // and the floor keeps forced re-entry steps bounded.
    let x_q = chain.x_q - chain.v_q * dt + chain.a_q * (dt * dt / 2.0);
    let v_q = chain.v_q - chain.a_q * dt;
    let w = (a_l - params.g_vec()).norm().max(cfg.eps_tension);
    let a_q = a_l + snap * (params.l / w);

    FlatChain {
        x_l,
        v_l,
        a_l,
        j_l,
        x_q,
        v_q,
        a_q,
        phase: Phase::Taut,
        step_index: chain.step_index.saturating_sub(1),
    }
}

/// Taut-phase backstep. Fails with [`SeedError::PhaseSwitch`] when the new
/// payload acceleration lands on the zero-tension manifold.
pub fn backstep_taut(
    chain: &FlatChain,
    snap: &Vector3<f64>,
    cfg: &SeedConfig,
    params: &PhysicalParams,
) -> Result<FlatChain, SeedError> {
    let a_l_prev = chain.a_l - chain.j_l * cfg.dt - snap * (cfg.dt * cfg.dt / 2.0);
    let w = (a_l_prev - params.g_vec()).norm();
    if w < cfg.eps_tension {
        return Err(SeedError::PhaseSwitch(w));
    }
    Ok(taut_backstep_raw(chain, snap, cfg, params))
}

/// Exact forward inverse of the printed taut backward map: recovers
/// `ξ_{l,t}` from `ξ_{l,t-1}` and the snap used in the backstep.
pub fn taut_forward_payload(
    chain: &FlatChain,
    snap: &Vector3<f64>,
    cfg: &SeedConfig,
) -> [Vector3<f64>; 4] {
    let dt = cfg.dt;
    let a_inv = taut_a_forward_matrix(dt); // A(Δt)⁻¹ = A(-Δt)
    let b = taut_b_column(dt);
    // ξ_t = A⁻¹ (ξ_{t-1} - B s)
    let r0 = chain.x_l - snap * b[0];
    let r1 = chain.v_l - snap * b[1];
    let r2 = chain.a_l - snap * b[2];
    let r3 = chain.j_l - snap * b[3];
    [
        r0 * a_inv[(0, 0)] + r1 * a_inv[(0, 1)] + r2 * a_inv[(0, 2)] + r3 * a_inv[(0, 3)],
        r1 * a_inv[(1, 1)] + r2 * a_inv[(1, 2)] + r3 * a_inv[(1, 3)],
        r2 * a_inv[(2, 2)] + r3 * a_inv[(2, 3)],
        r3 * a_inv[(3, 3)],
    ]
}

/// Slack-phase backstep: ballistic payload (acceleration pinned to gravity,
/// jerk zeroed) and a jerk-driven quadrotor chain.
pub fn backstep_slack(
    chain: &FlatChain,
    jerk_q: &Vector3<f64>,
    cfg: &SeedConfig,
    params: &PhysicalParams,
) -> FlatChain {
    let dt = cfg.dt;
    let x_l = chain.x_l - chain.v_l * dt + chain.a_l * (dt * dt / 2.0);
    let v_l = chain.v_l - chain.a_l * dt;
    let a_l = params.g_vec();
    let j_l = Vector3::zeros();

    let d = slack_d_matrix(dt);
    let e = slack_e_column(dt);
    let x_q = chain.x_q * d[(0, 0)] + chain.v_q * d[(0, 1)] + chain.a_q * d[(0, 2)] + jerk_q * e[0];
    let v_q = chain.v_q * d[(1, 1)] + chain.a_q * d[(1, 2)] + jerk_q * e[1];
    let a_q = chain.a_q * d[(2, 2)] + jerk_q * e[2];

    FlatChain {
        x_l,
        v_l,
        a_l,
        j_l,
        x_q,
        v_q,
        a_q,
        phase: Phase::Slack,
        step_index: chain.step_index.saturating_sub(1),
    }
}

/// Exact forward inverse of the slack quadrotor backstep.
pub fn slack_forward_quad(
    chain: &FlatChain,
    jerk_q: &Vector3<f64>,
    cfg: &SeedConfig,
) -> [Vector3<f64>; 3] {
    let dt = cfg.dt;
    let a_q = chain.a_q + jerk_q * dt;
    let v_q = chain.v_q + a_q * dt - jerk_q * (dt * dt / 2.0);
    let x_q = chain.x_q + v_q * dt - a_q * (dt * dt / 2.0) + jerk_q * (dt * dt * dt / 6.0);
    [x_q, v_q, a_q]
}

/// Phase-switch test on the current chain state: taut chains go slack when
/// the tension proxy `‖a_l - g‖` vanishes, slack chains come up taut when
/// the cable reaches full length.
pub fn detect_backward_phase_switch(
    chain: &FlatChain,
    cfg: &SeedConfig,
    params: &PhysicalParams,
) -> PhaseSignal {
    match chain.phase {
        Phase::Taut => {
            if (chain.a_l - params.g_vec()).norm() < cfg.eps_tension {
                PhaseSignal::ToSlack
            } else {
                PhaseSignal::Stay
            }
        }
        Phase::Slack => {
            if (chain.x_q - chain.x_l).norm() >= params.l {
                PhaseSignal::ToTaut
            } else {
                PhaseSignal::Stay
            }
        }
    }
}

/// Attitude from the quadrotor acceleration and a yaw angle: the body z-axis
/// carries the net specific thrust `a_q - g`.
pub fn derive_attitude(
    a_q: &Vector3<f64>,
    yaw: f64,
    params: &PhysicalParams,
) -> Result<Matrix3<f64>, SeedError> {
    let thrust = a_q - params.g_vec();
    let w = thrust.norm();
    if w < 1e-6 {
        return Err(SeedError::FreeFallAttitude(w));
    }
    so3::from_z_axis_yaw(&thrust, yaw).ok_or(SeedError::FreeFallAttitude(w))
}

/// Body rates from consecutive attitudes: `ω = vee(log(R_prevᵀ R_next)) / dt`.
pub fn derive_body_rates(
    r_prev: &Matrix3<f64>,
    r_next: &Matrix3<f64>,
    dt: f64,
) -> Result<Vector3<f64>, SeedError> {
    let rel = r_prev.transpose() * r_next;
    match so3::log_map_checked(&rel) {
        Some(w) => Ok(w / dt),
        None => Err(SeedError::RateAmbiguity(so3::rotation_angle(&rel))),
    }
}

// ---------------------------------------------------------------------------
// Goal sampling and the seeding loop
// ---------------------------------------------------------------------------

fn sample_box<R: Rng>(rng: &mut R, bound: f64) -> Vector3<f64> {
    if bound == 0.0 {
        return Vector3::zeros();
    }
    Vector3::new(
        rng.random_range(-bound..=bound),
        rng.random_range(-bound..=bound),
        rng.random_range(-bound..=bound),
    )
}

/// Samples the goal chain anchored at a waypoint.
///
/// The quadrotor goal sits on the waypoint. The payload hangs on the cable
/// sphere in the lower hemisphere *of the target frame*: the goal payload
/// acceleration is drawn in the target frame and offset by one gravity so
/// that the tension direction `u = (a_l - g)/‖a_l - g‖` lands in the
/// target-frame upper hemisphere, and the payload sits at `x_q - l u`. This
/// couples the cable direction to the sampled acceleration, which keeps the
/// goal anchor consistent with the constraint (and degenerates to a plain
/// hover below the waypoint when all ranges are zero). Goal quadrotor
/// velocity and acceleration follow from differentiating
/// `x_q = x_l + l (a_l - g)/‖a_l - g‖`.
pub fn sample_goal_chain<R: Rng>(
    waypoint: &Waypoint,
    cfg: &SeedConfig,
    params: &PhysicalParams,
    rng: &mut R,
) -> FlatChain {
    let g = params.g_vec();
    // Constraint acceleration in the target frame; redraw the rare samples
    // that leave the hemisphere or degenerate to zero tension.
    let vec_w = loop {
        let beta = sample_box(rng, cfg.goal_accel_range);
        let vec_t = beta + Vector3::new(0.0, 0.0, params.g_mag);
        if vec_t.z > 0.0 && vec_t.norm() >= 1e-6 {
            break waypoint.rotation * vec_t;
        }
    };
    let w = vec_w.norm();
    let u = vec_w / w;

    let a_l = g + vec_w;
    let x_q = waypoint.position;
    let x_l = x_q - u * params.l;
    let v_l = sample_box(rng, cfg.goal_velocity_range);
    let j_l = sample_box(rng, cfg.goal_jerk_range);

    // d/dt and d²/dt² of x_q = x_l + l u with u = (a_l - g)/‖a_l - g‖,
    // evaluated with zero snap at the anchor.
    let proj = Matrix3::identity() - u * u.transpose();
    let pj = proj * j_l;
    let v_q = v_l + pj * (params.l / w);
    let a_q = a_l + (pj * (-2.0 * u.dot(&j_l)) - u * pj.dot(&j_l)) * (params.l / (w * w));

    FlatChain {
        x_l,
        v_l,
        a_l,
        j_l,
        x_q,
        v_q,
        a_q,
        phase: Phase::Taut,
        step_index: cfg.k_steps,
    }
}

/// Axis-aligned workspace bounds.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct Workspace {
    pub min: [f64; 3],
    pub max: [f64; 3],
}

impl Default for Workspace {
    fn default() -> Self {
        Workspace {
            min: [-8.0, -8.0, 0.1],
            max: [8.0, 8.0, 8.0],
        }
    }
}

impl Workspace {
    pub fn contains(&self, p: &Vector3<f64>) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn center(&self) -> Vector3<f64> {
        Vector3::new(
            (self.min[0] + self.max[0]) / 2.0,
            (self.min[1] + self.max[1]) / 2.0,
            (self.min[2] + self.max[2]) / 2.0,
        )
    }

    pub fn clamp_margin(&self, p: &Vector3<f64>, margin: f64) -> Vector3<f64> {
        Vector3::new(
            p.x.clamp(self.min[0] + margin, self.max[0] - margin),
            p.y.clamp(self.min[1] + margin, self.max[1] - margin),
            p.z.clamp(self.min[2] + margin, self.max[2] - margin),
        )
    }

    pub fn sample_margin<R: Rng>(&self, margin: f64, rng: &mut R) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(self.min[0] + margin..=self.max[0] - margin),
            rng.random_range(self.min[1] + margin..=self.max[1] - margin),
            rng.random_range(self.min[2] + margin..=self.max[2] - margin),
        )
    }
}

/// One chain draw before the validity gate.
struct ChainDraw {
    chain: Vec<FlatChain>,
    attitudes: Vec<Matrix3<f64>>,
    body_rates: Vec<Vector3<f64>>,
    max_drift: f64,
    phase_switches: usize,
}

fn draw_chain<R: Rng>(
    waypoint: &Waypoint,
    cfg: &SeedConfig,
    params: &PhysicalParams,
    rng: &mut R,
) -> ChainDraw {
    let mut backward = Vec::with_capacity(cfg.k_steps + 1);
    let mut current = sample_goal_chain(waypoint, cfg, params, rng);
    let mut phase_switches = 0usize;
    backward.push(current);

    while current.step_index > 0 {
        let next = match current.phase {
            Phase::Taut => {
                let snap = sample_box(rng, cfg.snap_range);
                match backstep_taut(&current, &snap, cfg, params) {
                    Ok(prev) => prev,
                    Err(_) => {
                        // Honor the switch only when the tension proxy is
                        // collapsing in the backward direction; right after
                        // a slack→taut entry it starts at zero and must be
                        // allowed to grow.
                        let w_prev = {
                            let a_l_prev =
                                current.a_l - current.j_l * cfg.dt - snap * (cfg.dt * cfg.dt / 2.0);
                            (a_l_prev - params.g_vec()).norm()
                        };
                        let w_now = (current.a_l - params.g_vec()).norm();
                        if w_prev < w_now {
                            phase_switches += 1;
                            let mut slack_from = current;
                            slack_from.phase = Phase::Slack;
                            let jerk = sample_box(rng, cfg.jerk_range);
                            backstep_slack(&slack_from, &jerk, cfg, params)
                        } else {
                            taut_backstep_raw(&current, &snap, cfg, params)
                        }
                    }
                }
            }
            Phase::Slack => {
                let jerk = sample_box(rng, cfg.jerk_range);
                let prev = backstep_slack(&current, &jerk, cfg, params);
                if detect_backward_phase_switch(&prev, cfg, params) == PhaseSignal::ToTaut {
                    phase_switches += 1;
                    let mut taut = prev;
                    taut.phase = Phase::Taut;
                    taut
                } else {
                    prev
                }
            }
        };
        backward.push(next);
        current = next;
    }

    backward.reverse(); // forward time order, step 0 first
    let chain = backward;

    // Attitudes per step; across free-fall singularities the later step's
    // attitude is retained (the chain is built goal-first).
    let n = chain.len();
    let mut attitudes = vec![Matrix3::identity(); n];
    let mut last_good: Option<Matrix3<f64>> = None;
    for i in (0..n).rev() {
        match derive_attitude(&chain[i].a_q, waypoint.yaw, params) {
            Ok(r) => {
                attitudes[i] = r;
                last_good = Some(r);
            }
            Err(_) => {
                attitudes[i] = last_good.unwrap_or_else(Matrix3::identity);
            }
        }
    }

    let mut body_rates = vec![Vector3::zeros(); n];
    for i in 0..n {
        let (a, b) = if i + 1 < n {
            (attitudes[i], attitudes[i + 1])
        } else {
            (attitudes[i - 1], attitudes[i])
        };
        body_rates[i] = derive_body_rates(&a, &b, cfg.dt).unwrap_or_else(|_| Vector3::zeros());
    }

    let max_drift = chain
        .iter()
        .filter(|c| c.phase == Phase::Taut)
        .map(|c| ((c.x_q - c.x_l).norm() - params.l).abs())
        .fold(0.0, f64::max);

    ChainDraw {
        chain,
        attitudes,
        body_rates,
        max_drift,
        phase_switches,
    }
}

fn chain_is_valid(
    draw: &ChainDraw,
    cfg: &SeedConfig,
    params: &PhysicalParams,
    workspace: &Workspace,
) -> bool {
    if draw.max_drift > cfg.drift_tolerance * params.l {
        return false;
    }
    for (i, c) in draw.chain.iter().enumerate() {
        if !c.is_finite() {
            return false;
        }
        if !workspace.contains(&c.x_q) || !workspace.contains(&c.x_l) {
            return false;
        }
        let w = &draw.body_rates[i];
        for axis in 0..3 {
            if w[axis].abs() > 1.5 * params.omega_max[axis] {
                return false;
            }
        }
    }
    true
}

/// Assembles the simulator state at step 0 of a chain. Taut states are
/// projected onto the constraint manifold (payload snapped to the cable
/// sphere, radial relative velocity removed); the drift gate bounds how much
/// the projection moves things.
fn assemble_state(
    chain0: &FlatChain,
    attitude: &Matrix3<f64>,
    body_rate: &Vector3<f64>,
    params: &PhysicalParams,
) -> SystemState {
    let mut state = SystemState {
        x_q: chain0.x_q,
        v_q: chain0.v_q,
        r: *attitude,
        omega: *body_rate,
        x_l: chain0.x_l,
        v_l: chain0.v_l,
        phase: chain0.phase,
        t: 0.0,
    };
    let dist = (state.x_l - state.x_q).norm();
    if state.phase == Phase::Taut || dist >= params.l {
        let rho = (state.x_l - state.x_q) / dist;
        state.x_l = state.x_q + rho * params.l;
        let v_rel = state.v_l - state.v_q;
        state.v_l -= rho * v_rel.dot(&rho);
        state.phase = Phase::Taut;
    }
    state
}

/// Generates one seeded episode state for a waypoint, redrawing chains until
/// the validity gate passes or the resample budget is exhausted.
pub fn generate_seed<R: Rng>(
    waypoint: &Waypoint,
    cfg: &SeedConfig,
    params: &PhysicalParams,
    workspace: &Workspace,
    rng: &mut R,
) -> Result<SeededEpisodeState, SeedError> {
    for attempt in 0..=cfg.max_resamples {
        let draw = draw_chain(waypoint, cfg, params, rng);
        if chain_is_valid(&draw, cfg, params, workspace) {
            let state =
                assemble_state(&draw.chain[0], &draw.attitudes[0], &draw.body_rates[0], params);
            return Ok(SeededEpisodeState {
                state,
                max_drift: draw.max_drift,
                phase_switches: draw.phase_switches,
                resamples: attempt,
                chain: draw.chain,
                attitudes: draw.attitudes,
                body_rates: draw.body_rates,
            });
        }
    }
    Err(SeedError::ResamplesExhausted(cfg.max_resamples))
}
