//! Tracking errors, shaped rewards, penalty terms and MPJPE.
//!
//! Link pose errors are measured in the hybrid tracking frame: the state's
//! links are taken relative to `T_rel` and the reference links relative to
//! the reference root, so planar drift and heading of the robot do not count
//! against link tracking while height and tilt do. Velocity errors stay in
//! the world frame.

use crate::geometry::{relative_frame, GeometryError, RigidTransform, Vec3};
use crate::motion::{LinkState, MotionFrame};
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("trajectory lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty trajectory")]
    EmptyTrajectory,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("reward scale for {term} must be positive, got {sigma}")]
    InvalidSigma { term: &'static str, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobotState {
    pub root: RigidTransform,
    pub joint_pos: Vec<f64>,
    pub joint_vel: Vec<f64>,
    pub links: Vec<LinkState>,
    pub last_action: Vec<f64>,
    pub action: Vec<f64>,
    pub joint_torques: Vec<f64>,
    /// Contact flag per monitored body.
    pub contact_flags: Vec<bool>,
}

impl RobotState {
    /// A state that replays a reference frame: zero actions, torques and contacts.
    pub fn from_frame(frame: &MotionFrame) -> Self {
        let n = frame.joint_pos.len();
        RobotState {
            root: frame.root,
            joint_pos: frame.joint_pos.clone(),
            joint_vel: frame.joint_vel.clone(),
            links: frame.links.clone(),
            last_action: vec![0.0; n],
            action: vec![0.0; n],
            joint_torques: vec![0.0; n],
            contact_flags: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ErrorVector {
    pub root_pos: f64,
    pub root_rot: f64,
    pub link_pos: f64,
    pub link_rot: f64,
    pub link_lin_vel: f64,
    pub link_ang_vel: f64,
}

impl ErrorVector {
    pub const NAMES: [&'static str; 6] =
        ["root_pos", "root_rot", "link_pos", "link_rot", "link_lin_vel", "link_ang_vel"];

    pub fn to_array(&self) -> [f64; 6] {
        [self.root_pos, self.root_rot, self.link_pos, self.link_rot, self.link_lin_vel, self.link_ang_vel]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        ErrorVector {
            root_pos: a[0],
            root_rot: a[1],
            link_pos: a[2],
            link_rot: a[3],
            link_lin_vel: a[4],
            link_ang_vel: a[5],
        }
    }
}

fn check_links(state: usize, reference: usize) -> Result<(), MetricsError> {
    if state != reference {
        return Err(MetricsError::SchemaMismatch(format!("{state} links vs {reference} in the reference")));
    }
    Ok(())
}

/// Error terms between `state` and `reference`; `t_rel` is expected to be
/// `relative_frame(reference.root, state.root)`.
pub fn tracking_errors(
    state: &RobotState,
    reference: &MotionFrame,
    t_rel: &RigidTransform,
) -> Result<ErrorVector, MetricsError> {
    check_links(state.links.len(), reference.links.len())?;
    if state.joint_pos.len() != reference.joint_pos.len() {
        return Err(MetricsError::SchemaMismatch(format!(
            "{} joints vs {} in the reference",
            state.joint_pos.len(),
            reference.joint_pos.len()
        )));
    }
    let root_pos = (state.root.translation - reference.root.translation).norm();
    let root_rot = reference.root.rotation.angle_to(&state.root.rotation);

    let rel_inv = t_rel.invert();
    let ref_inv = reference.root.invert();
    let mut sums = [0.0; 4];
    for (s, r) in state.links.iter().zip(&reference.links) {
        let s_local = rel_inv.compose(&s.pose);
        let r_local = ref_inv.compose(&r.pose);
        sums[0] += (s_local.translation - r_local.translation).norm();
        sums[1] += r_local.rotation.angle_to(&s_local.rotation);
        sums[2] += (s.lin_vel - r.lin_vel).norm();
        sums[3] += (s.ang_vel - r.ang_vel).norm();
    }
    let n = state.links.len().max(1) as f64;
    Ok(ErrorVector {
        root_pos,
        root_rot,
        link_pos: sums[0] / n,
        link_rot: sums[1] / n,
        link_lin_vel: sums[2] / n,
        link_ang_vel: sums[3] / n,
    })
}

/// Per-term means of [`tracking_errors`] over two synchronized frame sequences.
pub fn mean_tracking_errors(states: &[MotionFrame], refs: &[MotionFrame]) -> Result<ErrorVector, MetricsError> {
    if states.len() != refs.len() {
        return Err(MetricsError::LengthMismatch(states.len(), refs.len()));
    }
    if states.is_empty() {
        return Err(MetricsError::EmptyTrajectory);
    }
    let mut acc = [0.0; 6];
    for (s, r) in states.iter().zip(refs) {
        let t_rel = relative_frame(&r.root, &s.root)?;
        let e = tracking_errors(&RobotState::from_frame(s), r, &t_rel)?.to_array();
        for (a, v) in acc.iter_mut().zip(e) {
            *a += v;
        }
    }
    Ok(ErrorVector::from_array(acc.map(|a| a / states.len() as f64)))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardTerm {
    pub weight: f64,
    pub sigma: f64,
}

/// Weights and scales of the `w · exp(−e²/σ²)` tracking terms. The
/// defaults are conventional motion-tracking values, not tuned ones.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RewardConfig {
    pub root_pos: RewardTerm,
    pub root_rot: RewardTerm,
    pub link_pos: RewardTerm,
    pub link_rot: RewardTerm,
    pub link_lin_vel: RewardTerm,
    pub link_ang_vel: RewardTerm,
}

impl Default for RewardConfig {
    fn default() -> Self {
        RewardConfig {
            root_pos: RewardTerm { weight: 0.5, sigma: 0.3 },
            root_rot: RewardTerm { weight: 0.5, sigma: 0.4 },
            link_pos: RewardTerm { weight: 1.0, sigma: 0.3 },
            link_rot: RewardTerm { weight: 1.0, sigma: 0.4 },
            link_lin_vel: RewardTerm { weight: 1.0, sigma: 1.0 },
            link_ang_vel: RewardTerm { weight: 1.0, sigma: std::f64::consts::PI },
        }
    }
}

impl RewardConfig {
    pub fn terms(&self) -> [RewardTerm; 6] {
        [self.root_pos, self.root_rot, self.link_pos, self.link_rot, self.link_lin_vel, self.link_ang_vel]
    }

    pub fn validate(&self) -> Result<(), MetricsError> {
        for (term, t) in ErrorVector::NAMES.into_iter().zip(self.terms()) {
            if !(t.sigma > 0.0 && t.sigma.is_finite()) {
                return Err(MetricsError::InvalidSigma { term, sigma: t.sigma });
            }
        }
        Ok(())
    }

    pub fn max_reward(&self) -> f64 {
        self.terms().iter().map(|t| t.weight).sum()
    }
}

/// `Σ w · exp(−e² / σ²)` over the six tracking terms.
pub fn reward(errors: &ErrorVector, cfg: &RewardConfig) -> f64 {
    errors.to_array().iter().zip(cfg.terms()).map(|(e, t)| t.weight * (-(e * e) / (t.sigma * t.sigma)).exp()).sum()
}

/// Joint position bounds and absolute torque limits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointLimits {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub torque: Vec<f64>,
}

impl JointLimits {
    /// `|q| ≤ limit` and `|τ| ≤ torque`.
    pub fn symmetric(limit: &[f64], torque: &[f64]) -> Self {
        JointLimits { lower: limit.iter().map(|l| -l).collect(), upper: limit.to_vec(), torque: torque.to_vec() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PenaltyVector {
    pub action_rate: f64,
    pub joint_limit_violation: f64,
    pub undesired_contact: f64,
    pub torque_limit_violation: f64,
}

pub fn penalties(
    state: &RobotState,
    limits: &JointLimits,
    undesired_bodies: &HashSet<usize>,
) -> Result<PenaltyVector, MetricsError> {
    let n = state.joint_pos.len();
    let lens = [
        state.action.len(),
        state.last_action.len(),
        state.joint_torques.len(),
        limits.lower.len(),
        limits.upper.len(),
        limits.torque.len(),
    ];
    if lens.iter().any(|&l| l != n) {
        return Err(MetricsError::SchemaMismatch(format!("{n} joints but per-joint arrays of lengths {lens:?}")));
    }
    if let Some(&b) = undesired_bodies.iter().find(|&&b| b >= state.contact_flags.len()) {
        return Err(MetricsError::SchemaMismatch(format!(
            "undesired body {b} but only {} contact flags",
            state.contact_flags.len()
        )));
    }
    let sq = |x: f64| x * x;
    let action_rate = state.action.iter().zip(&state.last_action).map(|(a, b)| sq(a - b)).sum();
    let joint_limit_violation = (0..n)
        .map(|i| {
            let q = state.joint_pos[i];
            sq((q - limits.upper[i]).max(0.0)) + sq((limits.lower[i] - q).max(0.0))
        })
        .sum();
    let torque_limit_violation =
        state.joint_torques.iter().zip(&limits.torque).map(|(t, l)| sq((t.abs() - l).max(0.0))).sum();
    let undesired_contact = undesired_bodies.iter().filter(|&&b| state.contact_flags[b]).count() as f64;
    Ok(PenaltyVector { action_rate, joint_limit_violation, undesired_contact, torque_limit_violation })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frame {
    /// World coordinates.
    Global,
    /// Each side in its own root frame.
    Base,
}

fn link_position(frame: &MotionFrame, link: &LinkState, mode: Frame) -> Vec3 {
    match mode {
        Frame::Global => link.pose.translation,
        Frame::Base => frame.root.inverse_transform_point(&link.pose.translation),
    }
}

/// Mean per-link position error over all frames and links.
pub fn mpjpe(states: &[MotionFrame], refs: &[MotionFrame], mode: Frame) -> Result<f64, MetricsError> {
    if states.len() != refs.len() {
        return Err(MetricsError::LengthMismatch(states.len(), refs.len()));
    }
    if states.is_empty() {
        return Err(MetricsError::EmptyTrajectory);
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for (s, r) in states.iter().zip(refs) {
        check_links(s.links.len(), r.links.len())?;
        for (ls, lr) in s.links.iter().zip(&r.links) {
            total += (link_position(s, ls, mode) - link_position(r, lr, mode)).norm();
            count += 1;
        }
    }
    Ok(if count == 0 { 0.0 } else { total / count as f64 })
}
