//! Hybrid dynamics of the quadrotor/cable/payload system.
//!
//! Two phases are simulated. While the cable is taut the payload and the
//! quadrotor form a single constrained body: the payload translational
//! dynamics carry the cable tension, the cable direction evolves on the unit
//! sphere, and the quadrotor pose is recovered from the constraint
//! `x_q = x_l - l ρ`. While the cable is slack the quadrotor flies free and
//! the payload is ballistic. Transitions are detected after every RK4 step:
//! taut→slack when the tension drops below zero, slack→taut when the cable
//! reaches full length with a separating radial velocity, resolved by an
//! inelastic momentum-conserving impulse along the cable.
//!
//! World frame is Z-up, so gravity is `[0, 0, -g]`. Thrust commands are
//! mass-normalized collective accelerations in m/s²; the thrust force on the
//! quadrotor is `m_q · T_cmd · R e₃`.

use nalgebra::{Matrix3, Vector3};
use thiserror::Error;

use crate::so3;

/// Cable phase flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Taut,
    Slack,
}

/// Full hybrid state of the system.
#[derive(Debug, Clone, Copy)]
pub struct SystemState {
    /// Quadrotor position [m].
    pub x_q: Vector3<f64>,
    /// Quadrotor velocity [m/s].
    pub v_q: Vector3<f64>,
    /// Body→world rotation.
    pub r: Matrix3<f64>,
    /// Body angular rates [rad/s].
    pub omega: Vector3<f64>,
    /// Payload position [m].
    pub x_l: Vector3<f64>,
    /// Payload velocity [m/s].
    pub v_l: Vector3<f64>,
    pub phase: Phase,
    /// Simulation time [s].
    pub t: f64,
}

impl SystemState {
    /// Stationary upright hover with the payload hanging straight below.
    pub fn hover(x_q: Vector3<f64>, params: &PhysicalParams) -> Self {
        SystemState {
            x_q,
            v_q: Vector3::zeros(),
            r: Matrix3::identity(),
            omega: Vector3::zeros(),
            x_l: x_q - Vector3::new(0.0, 0.0, params.l),
            v_l: Vector3::zeros(),
            phase: Phase::Taut,
            t: 0.0,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x_q.iter().all(|v| v.is_finite())
            && self.v_q.iter().all(|v| v.is_finite())
            && self.r.iter().all(|v| v.is_finite())
            && self.omega.iter().all(|v| v.is_finite())
            && self.x_l.iter().all(|v| v.is_finite())
            && self.v_l.iter().all(|v| v.is_finite())
            && self.t.is_finite()
    }

    /// Mechanical energy (kinetic + gravitational potential) of both bodies.
    pub fn mechanical_energy(&self, params: &PhysicalParams) -> f64 {
        0.5 * params.m_q * self.v_q.norm_squared()
            + 0.5 * params.m_l * self.v_l.norm_squared()
            + params.m_q * params.g_mag * self.x_q.z
            + params.m_l * params.g_mag * self.x_l.z
    }
}

/// Unit cable direction (quadrotor→payload) and its rate.
#[derive(Debug, Clone, Copy)]
pub struct CableCoords {
    pub rho: Vector3<f64>,
    pub rho_dot: Vector3<f64>,
}

impl CableCoords {
    /// Extracts normalized cable coordinates from a state. The direction is
    /// renormalized and the rate is projected onto the tangent plane, so the
    /// invariants `‖ρ‖ = 1` and `ρ·ρ̇ = 0` hold by construction.
    pub fn from_state(state: &SystemState, params: &PhysicalParams) -> Self {
        let rho = (state.x_l - state.x_q).normalize();
        let raw_rate = (state.v_l - state.v_q) / params.l;
        let rho_dot = raw_rate - rho * rho.dot(&raw_rate);
        CableCoords { rho, rho_dot }
    }
}

/// Physical parameters of the platform.
#[derive(Debug, Clone, Copy)]
pub struct PhysicalParams {
    /// Quadrotor mass [kg].
    pub m_q: f64,
    /// Payload mass [kg].
    pub m_l: f64,
    /// Cable length [m].
    pub l: f64,
    /// Quadrotor inertia [kg·m²].
    pub i_q: Matrix3<f64>,
    /// Gravity magnitude [m/s²].
    pub g_mag: f64,
    /// Max collective thrust acceleration [m/s²].
    pub t_max: f64,
    /// Body-rate limits [rad/s].
    pub omega_max: Vector3<f64>,
    /// Inner-loop rate gain [1/s].
    pub k_omega: f64,
}

impl Default for PhysicalParams {
    fn default() -> Self {
        PhysicalParams {
            m_q: 0.315,
            m_l: 0.035,
            l: 0.4,
            i_q: Matrix3::from_diagonal(&Vector3::new(1.4e-3, 1.4e-3, 2.2e-3)),
            g_mag: 9.81,
            t_max: 3.5 * 9.81,
            omega_max: Vector3::new(10.0, 10.0, 3.0),
            k_omega: 20.0,
        }
    }
}

impl PhysicalParams {
    /// Gravity acceleration vector in the world frame.
    pub fn g_vec(&self) -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -self.g_mag)
    }

    /// Collective thrust acceleration that holds the full system in hover.
    pub fn hover_thrust(&self) -> f64 {
        (self.m_q + self.m_l) * self.g_mag / self.m_q
    }
}

/// Event reported by [`hybrid_step`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepEvent {
    None,
    TautToSlack,
    SlackToTaut,
    /// The cable reached full length and the impulse was applied, but the
    /// post-impulse tension was negative so the phase stayed slack.
    SlackImpulse,
}

#[derive(Debug, Error)]
pub enum DynamicsError {
    #[error("cable direction is not a unit vector (|rho| = {0})")]
    NonUnitCable(f64),
    #[error("integration produced a non-finite state at t = {0}")]
    NonFinite(f64),
}

/// Time derivatives of the taut-phase state.
#[derive(Debug, Clone, Copy)]
pub struct TautDerivatives {
    pub x_l_dot: Vector3<f64>,
    pub v_l_dot: Vector3<f64>,
    pub rho_dot: Vector3<f64>,
    pub rho_ddot: Vector3<f64>,
    pub r_dot: Matrix3<f64>,
    pub omega_dot: Vector3<f64>,
}

/// Time derivatives of the slack-phase state.
#[derive(Debug, Clone, Copy)]
pub struct SlackDerivatives {
    pub x_q_dot: Vector3<f64>,
    pub v_q_dot: Vector3<f64>,
    pub x_l_dot: Vector3<f64>,
    pub v_l_dot: Vector3<f64>,
    pub r_dot: Matrix3<f64>,
    pub omega_dot: Vector3<f64>,
}

/// Cable tension for a taut configuration under a given world-frame thrust
/// force. Positive means the cable is pulling; a negative value signals that
/// the taut constraint would have to push, i.e. the cable goes slack.
pub fn cable_tension(
    cable: &CableCoords,
    thrust_world: &Vector3<f64>,
    params: &PhysicalParams,
) -> f64 {
    let radial = cable.rho.dot(thrust_world)
        - params.m_q * params.l * cable.rho_dot.dot(&cable.rho_dot);
    -params.m_l * radial / (params.m_q + params.m_l)
}

/// Inner-loop torque: feedback-linearizing rate tracking with gyroscopic
/// feed-forward, `M = I K_ω (ω_cmd - ω) + ω × I ω`. The closed-loop rate
/// error then decays as a first-order system with time constant `1/K_ω`.
pub fn rate_moment(
    omega_cmd: &Vector3<f64>,
    omega: &Vector3<f64>,
    params: &PhysicalParams,
) -> Vector3<f64> {
    params.i_q * ((omega_cmd - omega) * params.k_omega) + omega.cross(&(params.i_q * omega))
}

fn omega_dot(omega: &Vector3<f64>, torque: &Vector3<f64>, params: &PhysicalParams) -> Vector3<f64> {
    let i_inv = params
        .i_q
        .try_inverse()
        .expect("inertia matrix must be invertible");
    i_inv * (torque - omega.cross(&(params.i_q * omega)))
}

/// Taut-phase state derivatives for a given thrust acceleration and torque.
pub fn taut_derivatives(
    state: &SystemState,
    cable: &CableCoords,
    t_cmd: f64,
    torque: &Vector3<f64>,
    params: &PhysicalParams,
) -> Result<TautDerivatives, DynamicsError> {
    let rho_norm = cable.rho.norm();
    if (rho_norm - 1.0).abs() > 1e-6 {
        return Err(DynamicsError::NonUnitCable(rho_norm));
    }
    let thrust_world = state.r * Vector3::new(0.0, 0.0, params.m_q * t_cmd);
    let rate_sq = cable.rho_dot.dot(&cable.rho_dot);
    let radial = cable.rho.dot(&thrust_world) - params.m_q * params.l * rate_sq;
    let v_l_dot = params.g_vec() + cable.rho * (radial / (params.m_q + params.m_l));
    let rho_ddot = (cable.rho * (-params.m_q * params.l * rate_sq)
        + cable.rho.cross(&cable.rho.cross(&thrust_world)))
        / (params.m_q * params.l);
    Ok(TautDerivatives {
        x_l_dot: state.v_l,
        v_l_dot,
        rho_dot: cable.rho_dot,
        rho_ddot,
        r_dot: state.r * so3::hat(&state.omega),
        omega_dot: omega_dot(&state.omega, torque, params),
    })
}

/// Slack-phase state derivatives: free quadrotor, ballistic payload.
pub fn slack_derivatives(
    state: &SystemState,
    t_cmd: f64,
    torque: &Vector3<f64>,
    params: &PhysicalParams,
) -> SlackDerivatives {
    SlackDerivatives {
        x_q_dot: state.v_q,
        v_q_dot: params.g_vec() + state.r * Vector3::new(0.0, 0.0, t_cmd),
        x_l_dot: state.v_l,
        v_l_dot: params.g_vec(),
        r_dot: state.r * so3::hat(&state.omega),
        omega_dot: omega_dot(&state.omega, torque, params),
    }
}

/// Outcome of [`slack_to_taut_impulse`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImpulseOutcome {
    Applied,
    /// Radial relative velocity was not separating; the state is unchanged.
    NotSeparating,
}

/// Inelastic impulse applied when the slack cable reaches full length with a
/// separating radial velocity. Removes the radial relative velocity while
/// conserving total linear momentum, projects the payload back onto the
/// cable sphere, and sets the phase to taut.
pub fn slack_to_taut_impulse(
    state: &SystemState,
    params: &PhysicalParams,
) -> (SystemState, ImpulseOutcome) {
    let rho = (state.x_l - state.x_q).normalize();
    let sigma = (state.v_l - state.v_q).dot(&rho);
    if sigma <= 0.0 {
        return (*state, ImpulseOutcome::NotSeparating);
    }
    let m_total = params.m_q + params.m_l;
    let mut next = *state;
    next.v_q += rho * (params.m_l / m_total * sigma);
    next.v_l -= rho * (params.m_q / m_total * sigma);
    next.x_l = next.x_q + rho * params.l;
    next.phase = Phase::Taut;
    (next, ImpulseOutcome::Applied)
}

// Taut-phase integration variables. The quadrotor pose is reconstructed from
// (x_l, rho) after the step, which keeps the cable constraint exact.
#[derive(Clone, Copy)]
struct TautY {
    x_l: Vector3<f64>,
    v_l: Vector3<f64>,
    rho: Vector3<f64>,
    rho_dot: Vector3<f64>,
    r: Matrix3<f64>,
    omega: Vector3<f64>,
}

impl TautY {
    fn add_scaled(&self, k: &TautY, h: f64) -> TautY {
        TautY {
            x_l: self.x_l + k.x_l * h,
            v_l: self.v_l + k.v_l * h,
            rho: self.rho + k.rho * h,
            rho_dot: self.rho_dot + k.rho_dot * h,
            r: self.r + k.r * h,
            omega: self.omega + k.omega * h,
        }
    }

    fn rk4_combine(&self, k1: &TautY, k2: &TautY, k3: &TautY, k4: &TautY, h: f64) -> TautY {
        let w = h / 6.0;
        TautY {
            x_l: self.x_l + (k1.x_l + k2.x_l * 2.0 + k3.x_l * 2.0 + k4.x_l) * w,
            v_l: self.v_l + (k1.v_l + k2.v_l * 2.0 + k3.v_l * 2.0 + k4.v_l) * w,
            rho: self.rho + (k1.rho + k2.rho * 2.0 + k3.rho * 2.0 + k4.rho) * w,
            rho_dot: self.rho_dot + (k1.rho_dot + k2.rho_dot * 2.0 + k3.rho_dot * 2.0 + k4.rho_dot) * w,
            r: self.r + (k1.r + k2.r * 2.0 + k3.r * 2.0 + k4.r) * w,
            omega: self.omega + (k1.omega + k2.omega * 2.0 + k3.omega * 2.0 + k4.omega) * w,
        }
    }
}

fn taut_rhs(y: &TautY, t_cmd: f64, omega_cmd: &Vector3<f64>, params: &PhysicalParams) -> TautY {
    let torque = rate_moment(omega_cmd, &y.omega, params);
    let thrust_world = y.r * Vector3::new(0.0, 0.0, params.m_q * t_cmd);
    let rate_sq = y.rho_dot.dot(&y.rho_dot);
    let radial = y.rho.dot(&thrust_world) - params.m_q * params.l * rate_sq;
    let v_l_dot = params.g_vec() + y.rho * (radial / (params.m_q + params.m_l));
    let rho_ddot = (y.rho * (-params.m_q * params.l * rate_sq)
        + y.rho.cross(&y.rho.cross(&thrust_world)))
        / (params.m_q * params.l);
    TautY {
        x_l: y.v_l,
        v_l: v_l_dot,
        rho: y.rho_dot,
        rho_dot: rho_ddot,
        r: y.r * so3::hat(&y.omega),
        omega: omega_dot(&y.omega, &torque, params),
    }
}

#[derive(Clone, Copy)]
struct SlackY {
    x_q: Vector3<f64>,
    v_q: Vector3<f64>,
    x_l: Vector3<f64>,
    v_l: Vector3<f64>,
    r: Matrix3<f64>,
    omega: Vector3<f64>,
}

impl SlackY {
    fn add_scaled(&self, k: &SlackY, h: f64) -> SlackY {
        SlackY {
            x_q: self.x_q + k.x_q * h,
            v_q: self.v_q + k.v_q * h,
            x_l: self.x_l + k.x_l * h,
            v_l: self.v_l + k.v_l * h,
            r: self.r + k.r * h,
            omega: self.omega + k.omega * h,
        }
    }

    fn rk4_combine(&self, k1: &SlackY, k2: &SlackY, k3: &SlackY, k4: &SlackY, h: f64) -> SlackY {
        let w = h / 6.0;
        SlackY {
            x_q: self.x_q + (k1.x_q + k2.x_q * 2.0 + k3.x_q * 2.0 + k4.x_q) * w,
            v_q: self.v_q + (k1.v_q + k2.v_q * 2.0 + k3.v_q * 2.0 + k4.v_q) * w,
            x_l: self.x_l + (k1.x_l + k2.x_l * 2.0 + k3.x_l * 2.0 + k4.x_l) * w,
            v_l: self.v_l + (k1.v_l + k2.v_l * 2.0 + k3.v_l * 2.0 + k4.v_l) * w,
            r: self.r + (k1.r + k2.r * 2.0 + k3.r * 2.0 + k4.r) * w,
            omega: self.omega + (k1.omega + k2.omega * 2.0 + k3.omega * 2.0 + k4.omega) * w,
        }
    }
}

fn slack_rhs(y: &SlackY, t_cmd: f64, omega_cmd: &Vector3<f64>, params: &PhysicalParams) -> SlackY {
    let torque = rate_moment(omega_cmd, &y.omega, params);
    SlackY {
        x_q: y.v_q,
        v_q: params.g_vec() + y.r * Vector3::new(0.0, 0.0, t_cmd),
        x_l: y.v_l,
        v_l: params.g_vec(),
        r: y.r * so3::hat(&y.omega),
        omega: omega_dot(&y.omega, &torque, params),
    }
}

// Tension threshold below which a post-impulse state is not considered taut.
const TENSION_EPS: f64 = 1e-9;

/// Advances the hybrid system one RK4 step of length `dt` under a collective
/// thrust acceleration and body-rate setpoint, detecting phase transitions
/// after the step.
pub fn hybrid_step(
    state: &SystemState,
    t_cmd: f64,
    omega_cmd: &Vector3<f64>,
    params: &PhysicalParams,
    dt: f64,
) -> Result<(SystemState, StepEvent), DynamicsError> {
    let (next, event) = match state.phase {
        Phase::Taut => {
            let cable = CableCoords::from_state(state, params);
            let y0 = TautY {
                x_l: state.x_l,
                v_l: state.v_l,
                rho: cable.rho,
                rho_dot: cable.rho_dot,
                r: state.r,
                omega: state.omega,
            };
            let k1 = taut_rhs(&y0, t_cmd, omega_cmd, params);
            let k2 = taut_rhs(&y0.add_scaled(&k1, dt / 2.0), t_cmd, omega_cmd, params);
            let k3 = taut_rhs(&y0.add_scaled(&k2, dt / 2.0), t_cmd, omega_cmd, params);
            let k4 = taut_rhs(&y0.add_scaled(&k3, dt), t_cmd, omega_cmd, params);
            let y = y0.rk4_combine(&k1, &k2, &k3, &k4, dt);

            // Project back onto the constraint manifold.
            let rho = y.rho.normalize();
            let rho_dot = y.rho_dot - rho * rho.dot(&y.rho_dot);
            let r = so3::orthonormalize(&y.r);
            let next = SystemState {
                x_q: y.x_l - rho * params.l,
                v_q: y.v_l - rho_dot * params.l,
                r,
                omega: y.omega,
                x_l: y.x_l,
                v_l: y.v_l,
                phase: Phase::Taut,
                t: state.t + dt,
            };

            let cable = CableCoords { rho, rho_dot };
            let thrust_world = r * Vector3::new(0.0, 0.0, params.m_q * t_cmd);
            if cable_tension(&cable, &thrust_world, params) < 0.0 {
                let mut slack = next;
                slack.phase = Phase::Slack;
                (slack, StepEvent::TautToSlack)
            } else {
                (next, StepEvent::None)
            }
        }
        Phase::Slack => {
            let y0 = SlackY {
                x_q: state.x_q,
                v_q: state.v_q,
                x_l: state.x_l,
                v_l: state.v_l,
                r: state.r,
                omega: state.omega,
            };
            let k1 = slack_rhs(&y0, t_cmd, omega_cmd, params);
            let k2 = slack_rhs(&y0.add_scaled(&k1, dt / 2.0), t_cmd, omega_cmd, params);
            let k3 = slack_rhs(&y0.add_scaled(&k2, dt / 2.0), t_cmd, omega_cmd, params);
            let k4 = slack_rhs(&y0.add_scaled(&k3, dt), t_cmd, omega_cmd, params);
            let y = y0.rk4_combine(&k1, &k2, &k3, &k4, dt);
            let next = SystemState {
                x_q: y.x_q,
                v_q: y.v_q,
                r: so3::orthonormalize(&y.r),
                omega: y.omega,
                x_l: y.x_l,
                v_l: y.v_l,
                phase: Phase::Slack,
                t: state.t + dt,
            };

            let dist = (next.x_q - next.x_l).norm();
            if dist >= params.l {
                let (after, outcome) = slack_to_taut_impulse(&next, params);
                match outcome {
                    ImpulseOutcome::Applied => {
                        let cable = CableCoords::from_state(&after, params);
                        let thrust_world = after.r * Vector3::new(0.0, 0.0, params.m_q * t_cmd);
                        if cable_tension(&cable, &thrust_world, params) >= -TENSION_EPS {
                            (after, StepEvent::SlackToTaut)
                        } else {
                            let mut still_slack = after;
                            still_slack.phase = Phase::Slack;
                            (still_slack, StepEvent::SlackImpulse)
                        }
                    }
                    ImpulseOutcome::NotSeparating => (next, StepEvent::None),
                }
            } else {
                (next, StepEvent::None)
            }
        }
    };

    if !next.is_finite() {
        return Err(DynamicsError::NonFinite(state.t));
    }
    Ok((next, event))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use proptest::prelude::*;

    fn params() -> PhysicalParams {
        PhysicalParams::default()
    }

    /// Independent route to the constrained accelerations: solve the
    /// two-body system with the cable as an explicit Lagrange multiplier.
    /// Unknowns are [a_l, a_q, T]; the last row enforces the second
    /// derivative of the length constraint, ρ·(a_l − a_q) = −l‖ρ̇‖².
    fn kkt_oracle(
        cable: &CableCoords,
        thrust_world: &Vector3<f64>,
        p: &PhysicalParams,
    ) -> (Vector3<f64>, Vector3<f64>, f64) {
        let mut a = DMatrix::<f64>::zeros(7, 7);
        let mut b = DVector::<f64>::zeros(7);
        let g = p.g_vec();
        for i in 0..3 {
            a[(i, i)] = p.m_l;
            a[(i, 6)] = cable.rho[i];
            b[i] = p.m_l * g[i];
            a[(3 + i, 3 + i)] = p.m_q;
            a[(3 + i, 6)] = -cable.rho[i];
            b[3 + i] = p.m_q * g[i] + thrust_world[i];
            a[(6, i)] = cable.rho[i];
            a[(6, 3 + i)] = -cable.rho[i];
        }
        b[6] = -p.l * cable.rho_dot.norm_squared();
        let z = a.lu().solve(&b).expect("oracle system is regular");
        (
            Vector3::new(z[0], z[1], z[2]),
            Vector3::new(z[3], z[4], z[5]),
            z[6],
        )
    }

    #[test]
    fn tension_hover_matches_static_balance() {
        let p = params();
        let cable = CableCoords {
            rho: Vector3::new(0.0, 0.0, -1.0),
            rho_dot: Vector3::zeros(),
        };
        let thrust = Vector3::new(0.0, 0.0, (p.m_q + p.m_l) * p.g_mag);
        let t = cable_tension(&cable, &thrust, &p);
        assert!((t - p.m_l * p.g_mag).abs() < 1e-12, "T_c = {t}");
        assert!((t - 0.34335).abs() < 1e-9);
    }

    #[test]
    fn tension_free_fall_is_zero() {
        let p = params();
        let cable = CableCoords {
            rho: Vector3::new(0.3, -0.5, 0.81).normalize(),
            rho_dot: Vector3::zeros(),
        };
        assert_eq!(cable_tension(&cable, &Vector3::zeros(), &p), 0.0);
    }

    #[test]
    fn tension_swinging_matches_lagrange_oracle() {
        let p = params();
        let cable = CableCoords {
            rho: Vector3::new(1.0, 0.0, 0.0),
            rho_dot: Vector3::new(0.0, 2.0, 0.0),
        };
        let thrust = Vector3::new(0.0, 0.0, 5.0);
        let (_, _, t_oracle) = kkt_oracle(&cable, &thrust, &p);
        let t = cable_tension(&cable, &thrust, &p);
        assert!((t - t_oracle).abs() < 1e-12);
        // Frozen from the oracle: mu * l * |rho_dot|^2 with the thrust
        // orthogonal to the cable.
        assert!((t - 0.0504).abs() < 1e-12, "T_c = {t}");
    }

    fn taut_state(rho: Vector3<f64>, rho_dot: Vector3<f64>, p: &PhysicalParams) -> SystemState {
        let x_l = Vector3::new(0.0, 0.0, 2.0);
        SystemState {
            x_q: x_l - rho * p.l,
            v_q: -rho_dot * p.l,
            r: Matrix3::identity(),
            omega: Vector3::zeros(),
            x_l,
            v_l: Vector3::zeros(),
            phase: Phase::Taut,
            t: 0.0,
        }
    }

    #[test]
    fn taut_derivatives_hover_equilibrium() {
        let p = params();
        let state = SystemState::hover(Vector3::new(0.0, 0.0, 2.0), &p);
        let cable = CableCoords::from_state(&state, &p);
        let d = taut_derivatives(&state, &cable, p.hover_thrust(), &Vector3::zeros(), &p).unwrap();
        assert!(d.x_l_dot.norm() < 1e-15);
        assert!(d.v_l_dot.norm() < 1e-12);
        assert!(d.rho_dot.norm() < 1e-15);
        assert!(d.rho_ddot.norm() < 1e-12);
        assert!(d.r_dot.abs().max() < 1e-15);
        assert!(d.omega_dot.norm() < 1e-12);
    }

    #[test]
    fn taut_derivatives_match_oracle_zero_thrust_horizontal() {
        let p = params();
        let state = taut_state(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros(), &p);
        let cable = CableCoords::from_state(&state, &p);
        let d = taut_derivatives(&state, &cable, 0.0, &Vector3::zeros(), &p).unwrap();
        let (a_l, a_q, _) = kkt_oracle(&cable, &Vector3::zeros(), &p);
        assert!((d.v_l_dot - a_l).norm() < 1e-12);
        assert!((d.rho_ddot - (a_l - a_q) / p.l).norm() < 1e-12);
    }

    #[test]
    fn taut_derivatives_match_oracle_generic() {
        let p = params();
        let rho = Vector3::new(0.6, -0.3, -0.5).normalize();
        let raw = Vector3::new(0.7, 1.1, -0.2);
        let rho_dot = raw - rho * rho.dot(&raw);
        let mut state = taut_state(rho, rho_dot, &p);
        state.r = so3::exp_map(&Vector3::new(0.3, -0.2, 0.9));
        let cable = CableCoords::from_state(&state, &p);
        let t_cmd = 12.0;
        let d = taut_derivatives(&state, &cable, t_cmd, &Vector3::new(1e-3, -2e-3, 5e-4), &p).unwrap();
        let thrust_world = state.r * Vector3::new(0.0, 0.0, p.m_q * t_cmd);
        let (a_l, a_q, t_oracle) = kkt_oracle(&cable, &thrust_world, &p);
        assert!((d.v_l_dot - a_l).norm() < 1e-10);
        assert!((d.rho_ddot - (a_l - a_q) / p.l).norm() < 1e-10);
        assert!((cable_tension(&cable, &thrust_world, &p) - t_oracle).abs() < 1e-12);
    }

    #[test]
    fn taut_derivatives_reject_non_unit_rho() {
        let p = params();
        let state = taut_state(Vector3::new(1.0, 0.0, 0.0), Vector3::zeros(), &p);
        let cable = CableCoords {
            rho: Vector3::new(1.1, 0.0, 0.0),
            rho_dot: Vector3::zeros(),
        };
        assert!(matches!(
            taut_derivatives(&state, &cable, 0.0, &Vector3::zeros(), &p),
            Err(DynamicsError::NonUnitCable(_))
        ));
    }

    #[test]
    fn slack_free_fall_and_hover() {
        let p = params();
        let mut state = SystemState::hover(Vector3::new(0.0, 0.0, 3.0), &p);
        state.phase = Phase::Slack;
        let d0 = slack_derivatives(&state, 0.0, &Vector3::zeros(), &p);
        assert!((d0.v_q_dot - d0.v_l_dot).norm() < 1e-15);

        let dg = slack_derivatives(&state, p.g_mag, &Vector3::zeros(), &p);
        assert!(dg.v_q_dot.norm() < 1e-12);
        assert!((dg.v_l_dot - p.g_vec()).norm() < 1e-15);
    }

    #[test]
    fn slack_payload_follows_ballistic_arc() {
        let p = params();
        let dt = 0.01;
        let x0 = Vector3::new(1.0, -2.0, 4.0);
        let v0 = Vector3::new(0.5, 0.3, 1.0);
        // Co-moving free fall keeps the cable slack for the whole horizon.
        let mut state = SystemState {
            x_q: x0 + Vector3::new(0.0, 0.0, 0.2),
            v_q: v0,
            r: Matrix3::identity(),
            omega: Vector3::zeros(),
            x_l: x0,
            v_l: v0,
            phase: Phase::Slack,
            t: 0.0,
        };
        for _ in 0..50 {
            let (next, ev) = hybrid_step(&state, 0.0, &Vector3::zeros(), &p, dt).unwrap();
            assert_eq!(ev, StepEvent::None);
            state = next;
        }
        let t = state.t;
        let expected = x0 + v0 * t + p.g_vec() * (0.5 * t * t);
        assert!((state.x_l - expected).norm() < 1e-12, "ballistic error {}", (state.x_l - expected).norm());
    }

    #[test]
    fn rate_moment_examples() {
        let p = params();
        let omega = Vector3::new(1.0, -2.0, 0.5);
        let m = rate_moment(&omega, &omega, &p);
        assert!((m - omega.cross(&(p.i_q * omega))).norm() < 1e-15);

        let m = rate_moment(&Vector3::new(10.0, 0.0, 0.0), &Vector3::zeros(), &p);
        assert!((m.x - 20.0 * 10.0 * p.i_q[(0, 0)]).abs() < 1e-12);
        assert!(m.y.abs() < 1e-15 && m.z.abs() < 1e-15);
    }

    #[test]
    fn rate_step_response_converges_first_order() {
        let p = params();
        let dt = 0.001;
        let omega_cmd = Vector3::new(4.0, -3.0, 1.0);
        let mut state = SystemState::hover(Vector3::new(0.0, 0.0, 3.0), &p);
        // 5 time constants of the 20 (1/s) loop.
        let steps = (5.0 / p.k_omega / dt).round() as usize;
        for _ in 0..steps {
            let (next, _) = hybrid_step(&state, p.hover_thrust(), &omega_cmd, &p, dt).unwrap();
            state = next;
        }
        let err = (state.omega - omega_cmd).norm() / omega_cmd.norm();
        assert!(err < 0.01, "relative rate error {err}");
    }

    #[test]
    fn hover_is_fixed_point() {
        let p = params();
        let start = SystemState::hover(Vector3::new(0.0, 0.0, 2.0), &p);
        let mut state = start;
        for _ in 0..100 {
            let (next, ev) = hybrid_step(&state, p.hover_thrust(), &Vector3::zeros(), &p, 0.01).unwrap();
            assert_eq!(ev, StepEvent::None);
            state = next;
        }
        assert!((state.x_q - start.x_q).norm() < 1e-6);
        assert!((state.x_l - start.x_l).norm() < 1e-6);
        assert!(state.v_q.norm() < 1e-6);
    }

    #[test]
    fn zero_thrust_pendulum_conserves_energy() {
        let p = params();
        let rho = Vector3::new(1.0, 0.0, 0.0);
        let rho_dot = Vector3::new(0.0, 0.0, -2.0);
        let mut state = taut_state(rho, rho_dot, &p);
        let e0 = state.mechanical_energy(&p);
        for _ in 0..100 {
            let (next, _) = hybrid_step(&state, 0.0, &Vector3::zeros(), &p, 0.01).unwrap();
            state = next;
            let cable = CableCoords::from_state(&state, &p);
            assert!((cable.rho.norm() - 1.0).abs() < 1e-9);
            assert!(cable.rho.dot(&cable.rho_dot).abs() < 1e-8);
            assert!(((state.x_q - state.x_l).norm() - p.l).abs() < 1e-9 * p.l);
        }
        let drift = ((state.mechanical_energy(&p) - e0) / e0).abs();
        assert!(drift < 1e-4, "energy drift {drift}");
    }

    #[test]
    fn small_angle_period_matches_analytic_pendulum() {
        let p = params();
        // Constant total-weight thrust on an upright quadrotor turns the
        // relative coordinate into a pendulum in an effective gravity field
        // g_eff = g (m_q + m_l) / m_q, i.e. effective length l m_q / (m_q+m_l).
        let theta0 = 0.02f64;
        let rho = Vector3::new(theta0.sin(), 0.0, -theta0.cos());
        let mut state = taut_state(rho, Vector3::zeros(), &p);
        let expected = 2.0 * std::f64::consts::PI
            * (p.l * p.m_q / ((p.m_q + p.m_l) * p.g_mag)).sqrt();
        let dt = 1e-3;
        let mut crossings = Vec::new();
        let mut prev_x = rho.x;
        for _ in 0..10_000 {
            let (next, _) = hybrid_step(&state, p.hover_thrust(), &Vector3::zeros(), &p, dt).unwrap();
            state = next;
            let x = (state.x_l - state.x_q).x;
            if prev_x > 0.0 && x <= 0.0 {
                crossings.push(state.t);
            }
            prev_x = x;
        }
        assert!(crossings.len() >= 4, "too few crossings: {}", crossings.len());
        let period = (crossings[crossings.len() - 1] - crossings[0]) / (crossings.len() - 1) as f64;
        let rel = ((period - expected) / expected).abs();
        assert!(rel < 0.01, "period {period} vs analytic {expected}");
    }

    #[test]
    fn swing_past_horizontal_goes_slack() {
        let p = params();
        // Hover thrust with the payload swinging upward: past horizontal the
        // decelerating swing drives the tension through zero.
        let rho = Vector3::new(1.0, 0.0, 0.0);
        let rho_dot = Vector3::new(0.0, 0.0, 3.0);
        let mut state = taut_state(rho, rho_dot, &p);
        let mut saw_transition = false;
        for _ in 0..200 {
            let (next, ev) = hybrid_step(&state, p.hover_thrust(), &Vector3::zeros(), &p, 0.01).unwrap();
            if ev == StepEvent::TautToSlack {
                saw_transition = true;
                assert_eq!(next.phase, Phase::Slack);
                break;
            }
            state = next;
        }
        assert!(saw_transition, "expected a taut→slack transition");
    }

    #[test]
    fn impulse_no_op_when_not_separating() {
        let p = params();
        let mut state = SystemState::hover(Vector3::new(0.0, 0.0, 2.0), &p);
        state.phase = Phase::Slack;
        let (after, outcome) = slack_to_taut_impulse(&state, &p);
        assert_eq!(outcome, ImpulseOutcome::NotSeparating);
        assert!((after.v_q - state.v_q).norm() == 0.0);
        assert!((after.v_l - state.v_l).norm() == 0.0);
    }

    #[test]
    fn impulse_bookkeeping_payload_drop() {
        let p = params();
        let mut state = SystemState::hover(Vector3::new(0.0, 0.0, 2.0), &p);
        state.phase = Phase::Slack;
        state.v_l = Vector3::new(0.0, 0.0, -2.0); // falling straight down, separating
        let momentum_before = state.v_q * p.m_q + state.v_l * p.m_l;
        let ke_before = 0.5 * p.m_q * state.v_q.norm_squared() + 0.5 * p.m_l * state.v_l.norm_squared();
        let (after, outcome) = slack_to_taut_impulse(&state, &p);
        assert_eq!(outcome, ImpulseOutcome::Applied);
        assert_eq!(after.phase, Phase::Taut);
        let momentum_after = after.v_q * p.m_q + after.v_l * p.m_l;
        assert!((momentum_after - momentum_before).abs().max() < 1e-12);
        let ke_after = 0.5 * p.m_q * after.v_q.norm_squared() + 0.5 * p.m_l * after.v_l.norm_squared();
        let mu = p.m_q * p.m_l / (p.m_q + p.m_l);
        let sigma = 2.0;
        assert!((ke_before - ke_after - 0.5 * mu * sigma * sigma).abs() < 1e-12);
    }

    #[test]
    fn no_instant_reslack_after_taut_transition() {
        let p = params();
        // Payload dropped from just below the quadrotor while the quadrotor
        // hovers: the cable reaches length and must come up taut with
        // non-negative tension.
        let x_q = Vector3::new(0.0, 0.0, 3.0);
        let mut state = SystemState {
            x_q,
            v_q: Vector3::zeros(),
            r: Matrix3::identity(),
            omega: Vector3::zeros(),
            x_l: x_q - Vector3::new(0.0, 0.0, 0.5 * p.l),
            v_l: Vector3::zeros(),
            phase: Phase::Slack,
            t: 0.0,
        };
        let mut saw = false;
        for _ in 0..200 {
            let (next, ev) = hybrid_step(&state, p.hover_thrust(), &Vector3::zeros(), &p, 0.01).unwrap();
            if ev == StepEvent::SlackToTaut {
                let cable = CableCoords::from_state(&next, &p);
                let thrust = next.r * Vector3::new(0.0, 0.0, p.m_q * p.hover_thrust());
                assert!(cable_tension(&cable, &thrust, &p) >= -TENSION_EPS);
                saw = true;
                break;
            }
            state = next;
        }
        assert!(saw, "expected a slack→taut transition");
    }

    #[test]
    fn blow_up_is_reported() {
        let p = params();
        let mut state = SystemState::hover(Vector3::new(0.0, 0.0, 2.0), &p);
        state.v_q.x = f64::INFINITY;
        state.phase = Phase::Slack;
        assert!(matches!(
            hybrid_step(&state, 0.0, &Vector3::zeros(), &p, 0.01),
            Err(DynamicsError::NonFinite(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn impulse_conserves_momentum_and_dissipates(
            dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0,
            vqx in -3.0f64..3.0, vqy in -3.0f64..3.0, vqz in -3.0f64..3.0,
            vlx in -5.0f64..5.0, vly in -5.0f64..5.0, vlz in -5.0f64..5.0,
        ) {
            let p = params();
            let dir = Vector3::new(dx, dy, dz);
            prop_assume!(dir.norm() > 0.1);
            let rho = dir.normalize();
            let x_q = Vector3::new(0.0, 0.0, 3.0);
            let state = SystemState {
                x_q,
                v_q: Vector3::new(vqx, vqy, vqz),
                r: Matrix3::identity(),
                omega: Vector3::zeros(),
                x_l: x_q + rho * (p.l * 1.001),
                v_l: Vector3::new(vlx, vly, vlz),
                phase: Phase::Slack,
                t: 0.0,
            };
            let sigma = (state.v_l - state.v_q).dot(&rho);
            let (after, outcome) = slack_to_taut_impulse(&state, &p);
            if sigma > 0.0 {
                prop_assert_eq!(outcome, ImpulseOutcome::Applied);
                let dp = (after.v_q * p.m_q + after.v_l * p.m_l)
                    - (state.v_q * p.m_q + state.v_l * p.m_l);
                prop_assert!(dp.abs().max() < 1e-12);
                let rho_after = (after.x_l - after.x_q).normalize();
                prop_assert!((after.v_l - after.v_q).dot(&rho_after).abs() < 1e-12);
                let ke_before = 0.5 * p.m_q * state.v_q.norm_squared()
                    + 0.5 * p.m_l * state.v_l.norm_squared();
                let ke_after = 0.5 * p.m_q * after.v_q.norm_squared()
                    + 0.5 * p.m_l * after.v_l.norm_squared();
                prop_assert!(ke_after <= ke_before + 1e-12);
            } else {
                prop_assert_eq!(outcome, ImpulseOutcome::NotSeparating);
            }
        }

        #[test]
        fn taut_step_preserves_cable_invariants(
            ax in -0.9f64..0.9, ay in -0.9f64..0.9,
            wx in -2.0f64..2.0, wy in -2.0f64..2.0,
            t_cmd in 0.0f64..30.0,
        ) {
            let p = params();
            let dir = Vector3::new(ax, ay, -(1.0f64 - (ax * ax + ay * ay).min(0.99)).sqrt());
            let rho = dir.normalize();
            let raw = Vector3::new(wx, wy, 0.3);
            let rho_dot = raw - rho * rho.dot(&raw);
            let mut state = taut_state(rho, rho_dot, &p);
            for _ in 0..10 {
                let (next, _) = hybrid_step(&state, t_cmd, &Vector3::zeros(), &p, 0.01).unwrap();
                state = next;
                if state.phase != Phase::Taut {
                    break;
                }
                let cable = CableCoords::from_state(&state, &p);
                prop_assert!((cable.rho.norm() - 1.0).abs() < 1e-9);
                prop_assert!(cable.rho.dot(&cable.rho_dot).abs() < 1e-8);
                prop_assert!(so3::orthonormality_error(&state.r) < 1e-9);
            }
        }
    }
}
