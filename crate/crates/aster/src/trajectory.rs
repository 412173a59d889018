//! Trajectory logging: one CSV row per simulation step.
//!
//! The schema is fixed: 29 numeric columns (time, quadrotor pose/velocity as
//! position + quaternion + rates, payload position/velocity, cable phase,
//! the 4 normalized action entries and the 4 reward components) plus a final
//! free-text `events` column. Floats are written with Rust's shortest
//! round-trip formatting, so re-parsing a file reproduces the values
//! bit-exactly and repeated runs produce byte-identical bodies.

use nalgebra::{Rotation3, UnitQuaternion};

use crate::dynamics::{Phase, StepEvent, SystemState};
use crate::env::RewardBreakdown;

pub const HEADER: &str = "t,xq_x,xq_y,xq_z,vq_x,vq_y,vq_z,quat_w,quat_x,quat_y,quat_z,\
omega_x,omega_y,omega_z,xl_x,xl_y,xl_z,vl_x,vl_y,vl_z,phase,a0,a1,a2,a3,\
r_target,r_safe,r_crash,r_smooth,events";

/// Number of comma-separated columns, events included.
pub const COLUMNS: usize = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub t: f64,
    pub x_q: [f64; 3],
    pub v_q: [f64; 3],
    pub quat: [f64; 4],
    pub omega: [f64; 3],
    pub x_l: [f64; 3],
    pub v_l: [f64; 3],
    pub phase: Phase,
    pub action: [f64; 4],
    pub r_target: f64,
    pub r_safe: f64,
    pub r_crash: f64,
    pub r_smooth: f64,
    /// Semicolon-separated event tags, e.g. `traversal:2;slack_to_taut`.
    pub events: String,
}

impl TrajectoryRow {
    pub fn from_step(
        state: &SystemState,
        action: &[f64; 4],
        reward: &RewardBreakdown,
        event: StepEvent,
        traversed_waypoint: Option<usize>,
    ) -> Self {
        let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(state.r));
        let qi = q.into_inner();
        let mut events = Vec::new();
        if let Some(i) = traversed_waypoint {
            events.push(format!("traversal:{i}"));
        }
        match event {
            StepEvent::None => {}
            StepEvent::TautToSlack => events.push("taut_to_slack".to_string()),
            StepEvent::SlackToTaut => events.push("slack_to_taut".to_string()),
            StepEvent::SlackImpulse => events.push("slack_impulse".to_string()),
        }
        TrajectoryRow {
            t: state.t,
            x_q: [state.x_q.x, state.x_q.y, state.x_q.z],
            v_q: [state.v_q.x, state.v_q.y, state.v_q.z],
            quat: [qi.w, qi.i, qi.j, qi.k],
            omega: [state.omega.x, state.omega.y, state.omega.z],
            x_l: [state.x_l.x, state.x_l.y, state.x_l.z],
            v_l: [state.v_l.x, state.v_l.y, state.v_l.z],
            phase: state.phase,
            action: *action,
            r_target: reward.r_target,
            r_safe: reward.r_safe,
            r_crash: reward.r_crash,
            r_smooth: reward.r_smooth,
            events: events.join(";"),
        }
    }

    pub fn to_csv_line(&self) -> String {
        let mut fields: Vec<String> = Vec::with_capacity(COLUMNS);
        fields.push(format!("{}", self.t));
        for v in self.x_q.iter().chain(&self.v_q) {
            fields.push(format!("{v}"));
        }
        for v in &self.quat {
            fields.push(format!("{v}"));
        }
        for v in self.omega.iter().chain(&self.x_l).chain(&self.v_l) {
            fields.push(format!("{v}"));
        }
        fields.push(
            match self.phase {
                Phase::Taut => "taut",
                Phase::Slack => "slack",
            }
            .to_string(),
        );
        for v in &self.action {
            fields.push(format!("{v}"));
        }
        for v in [self.r_target, self.r_safe, self.r_crash, self.r_smooth] {
            fields.push(format!("{v}"));
        }
        fields.push(self.events.clone());
        fields.join(",")
    }

    pub fn parse_csv_line(line: &str) -> Result<Self, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != COLUMNS {
            return Err(format!("expected {COLUMNS} columns, got {}", fields.len()));
        }
        let num = |i: usize| -> Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| format!("column {i} ('{}'): {e}", fields[i]))
        };
        let vec3 = |i: usize| -> Result<[f64; 3], String> { Ok([num(i)?, num(i + 1)?, num(i + 2)?]) };
        Ok(TrajectoryRow {
            t: num(0)?,
            x_q: vec3(1)?,
            v_q: vec3(4)?,
            quat: [num(7)?, num(8)?, num(9)?, num(10)?],
            omega: vec3(11)?,
            x_l: vec3(14)?,
            v_l: vec3(17)?,
            phase: match fields[20] {
                "taut" => Phase::Taut,
                "slack" => Phase::Slack,
                other => return Err(format!("unknown phase '{other}'")),
            },
            action: [num(21)?, num(22)?, num(23)?, num(24)?],
            r_target: num(25)?,
            r_safe: num(26)?,
            r_crash: num(27)?,
            r_smooth: num(28)?,
            events: fields[29].to_string(),
        })
    }
}

/// Serializes rows under the fixed header.
pub fn to_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::with_capacity(rows.len() * 256 + HEADER.len() + 1);
    out.push_str(HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.to_csv_line());
        out.push('\n');
    }
    out
}

/// Parses a CSV produced by [`to_csv`].
pub fn from_csv(text: &str) -> Result<Vec<TrajectoryRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == HEADER => {}
        Some(h) => return Err(format!("unexpected header: {h}")),
        None => return Err("empty file".to_string()),
    }
    lines.map(TrajectoryRow::parse_csv_line).collect()
}
