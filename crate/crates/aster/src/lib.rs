//! Workbench for agile flight of a quadrotor with a cable-suspended payload.
//!
//! The crate bundles everything needed to study attitude-constrained waypoint
//! traversal for this hybrid system at desk scale:
//!
//! * [`dynamics`] — event-driven simulation of the taut/slack cable phases
//!   with RK4 integration and momentum-conserving cable-snap impulses.
//! * [`hdss`] — hybrid-dynamics state seeding: back-propagation of goal
//!   states through the phase-aware kinematic inversion, used to initialize
//!   training episodes in reward-rich configurations.
//! * [`tracks`] — SE(3) waypoints, random track generation and named
//!   benchmark tracks, plus a JSON track file format.
//! * [`env`] — the waypoint-traversal MDP: observations, action mapping,
//!   gated traversal reward, composite resets and batched stepping.
//! * [`policy`] — compact MLP actor/critic with a from-scratch PPO trainer.
//! * [`eval`] — success-rate/timing evaluation and robustness sweeps.

pub mod config;
pub mod dynamics;
pub mod env;
pub mod eval;
pub mod hdss;
pub mod policy;
pub mod so3;
pub mod tracks;
pub mod trajectory;
