//! Reference motions and the plain-text clip format.
//!
//! ```text
//! # comments and blank lines are ignored
//! id vault_01
//! rate 50
//! joints 3
//! links pelvis left_hand right_hand
//! frame <root> <joint_pos × joints> <joint_vel × joints> <link × links>
//! frame ...
//! ```
//!
//! `<root>` is `tx ty tz qw qx qy qz`; each `<link>` is
//! `tx ty tz qw qx qy qz vx vy vz wx wy wz` (pose, world linear velocity,
//! world angular velocity). Quaternions are renormalized on load when
//! their norm is within 1e-6 of one and rejected otherwise.

use crate::geometry::{GeometryError, RigidTransform, Vec3};
use std::fmt::Write as _;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("clip needs at least two frames, found {0}")]
    TooFewFrames(usize),
    #[error("frame rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("frame {frame}: {message}")]
    InconsistentFrame { frame: usize, message: String },
    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkState {
    pub pose: RigidTransform,
    pub lin_vel: Vec3,
    pub ang_vel: Vec3,
}

impl LinkState {
    pub fn at_rest(pose: RigidTransform) -> Self {
        LinkState { pose, lin_vel: Vec3::zeros(), ang_vel: Vec3::zeros() }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionFrame {
    pub root: RigidTransform,
    pub joint_pos: Vec<f64>,
    pub joint_vel: Vec<f64>,
    pub links: Vec<LinkState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionClip {
    pub id: String,
    pub frame_rate: f64,
    pub link_names: Vec<String>,
    pub frames: Vec<MotionFrame>,
}

impl MotionClip {
    pub fn new(
        id: impl Into<String>,
        frame_rate: f64,
        link_names: Vec<String>,
        frames: Vec<MotionFrame>,
    ) -> Result<Self, MotionError> {
        let clip = MotionClip { id: id.into(), frame_rate, link_names, frames };
        clip.validate()?;
        Ok(clip)
    }

    pub fn validate(&self) -> Result<(), MotionError> {
        if !(self.frame_rate > 0.0 && self.frame_rate.is_finite()) {
            return Err(MotionError::InvalidRate(self.frame_rate));
        }
        if self.frames.len() < 2 {
            return Err(MotionError::TooFewFrames(self.frames.len()));
        }
        let joints = self.frames[0].joint_pos.len();
        for (frame, f) in self.frames.iter().enumerate() {
            let bad = |message: String| Err(MotionError::InconsistentFrame { frame, message });
            if f.joint_pos.len() != joints || f.joint_vel.len() != joints {
                return bad(format!(
                    "expected {joints} joint positions and velocities, found {} and {}",
                    f.joint_pos.len(),
                    f.joint_vel.len()
                ));
            }
            if f.links.len() != self.link_names.len() {
                return bad(format!("expected {} links, found {}", self.link_names.len(), f.links.len()));
            }
        }
        Ok(())
    }

    pub fn joint_count(&self) -> usize {
        self.frames[0].joint_pos.len()
    }

    pub fn link_count(&self) -> usize {
        self.link_names.len()
    }

    /// Time of the last frame, seconds.
    pub fn duration(&self) -> f64 {
        (self.frames.len() - 1) as f64 / self.frame_rate
    }

    /// Frame nearest to time `t` (clamped to the clip).
    pub fn frame_at(&self, t: f64) -> &MotionFrame {
        let i = (t * self.frame_rate).round().clamp(0.0, (self.frames.len() - 1) as f64) as usize;
        &self.frames[i]
    }

    /// Applies a rigid world-frame motion to every pose and velocity.
    pub fn transformed(&self, world: &RigidTransform) -> MotionClip {
        let frames = self
            .frames
            .iter()
            .map(|f| MotionFrame {
                root: world.compose(&f.root),
                joint_pos: f.joint_pos.clone(),
                joint_vel: f.joint_vel.clone(),
                links: f
                    .links
                    .iter()
                    .map(|l| LinkState {
                        pose: world.compose(&l.pose),
                        lin_vel: world.transform_vector(&l.lin_vel),
                        ang_vel: world.transform_vector(&l.ang_vel),
                    })
                    .collect(),
            })
            .collect();
        MotionClip { frames, ..self.clone() }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "id {}", self.id);
        let _ = writeln!(out, "rate {}", self.frame_rate);
        let _ = writeln!(out, "joints {}", self.joint_count());
        let _ = writeln!(out, "links {}", self.link_names.join(" "));
        for f in &self.frames {
            out.push_str("frame");
            push_pose(&mut out, &f.root);
            for v in f.joint_pos.iter().chain(&f.joint_vel) {
                let _ = write!(out, " {v}");
            }
            for l in &f.links {
                push_pose(&mut out, &l.pose);
                for v in l.lin_vel.iter().chain(l.ang_vel.iter()) {
                    let _ = write!(out, " {v}");
                }
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<(), MotionError> {
        std::fs::write(path, self.to_text())
            .map_err(|source| MotionError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: &Path) -> Result<MotionClip, MotionError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| MotionError::Io { path: path.display().to_string(), source })?;
        parse_clip(&text).map_err(|e| match e {
            MotionError::Parse { line, message, .. } => {
                MotionError::Parse { path: path.display().to_string(), line, message }
            }
            other => other,
        })
    }
}

fn push_pose(out: &mut String, t: &RigidTransform) {
    let (p, q) = t.to_translation_quaternion();
    for v in p.iter().chain(q.iter()) {
        let _ = write!(out, " {v}");
    }
}

pub fn parse_clip(text: &str) -> Result<MotionClip, MotionError> {
    let err = |line: usize, message: String| MotionError::Parse { path: "<clip>".into(), line, message };
    let mut id = None;
    let mut rate = None;
    let mut joints = None;
    let mut links: Option<Vec<String>> = None;
    let mut frames = Vec::new();

    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let Some((key, rest)) =
            content.split_once(char::is_whitespace).or((!content.is_empty()).then_some((content, "")))
        else {
            continue;
        };
        let rest = rest.trim();
        match key {
            "id" => id = Some(rest.to_string()),
            "rate" => rate = Some(rest.parse::<f64>().map_err(|e| err(line, format!("bad rate: {e}")))?),
            "joints" => joints = Some(rest.parse::<usize>().map_err(|e| err(line, format!("bad joint count: {e}")))?),
            "links" => links = Some(rest.split_whitespace().map(str::to_string).collect()),
            "frame" => {
                let (Some(nj), Some(names)) = (joints, links.as_ref()) else {
                    return Err(err(line, "frame record before joints/links header".into()));
                };
                let values: Vec<f64> = rest
                    .split_whitespace()
                    .map(|f| f.parse::<f64>().map_err(|e| err(line, format!("bad number {f:?}: {e}"))))
                    .collect::<Result<_, _>>()?;
                let expected = 7 + 2 * nj + 13 * names.len();
                if values.len() != expected {
                    return Err(err(line, format!("expected {expected} values, found {}", values.len())));
                }
                let pose = |v: &[f64]| -> Result<RigidTransform, MotionError> {
                    RigidTransform::from_translation_quaternion([v[0], v[1], v[2]], [v[3], v[4], v[5], v[6]])
                        .map_err(|e: GeometryError| err(line, e.to_string()))
                };
                let root = pose(&values[..7])?;
                let joint_pos = values[7..7 + nj].to_vec();
                let joint_vel = values[7 + nj..7 + 2 * nj].to_vec();
                let links = values[7 + 2 * nj..]
                    .chunks_exact(13)
                    .map(|c| {
                        Ok(LinkState {
                            pose: pose(&c[..7])?,
                            lin_vel: Vec3::new(c[7], c[8], c[9]),
                            ang_vel: Vec3::new(c[10], c[11], c[12]),
                        })
                    })
                    .collect::<Result<_, MotionError>>()?;
                frames.push(MotionFrame { root, joint_pos, joint_vel, links });
            }
            other => return Err(err(line, format!("unknown record {other:?}"))),
        }
    }
    let rate = rate.ok_or_else(|| err(0, "missing rate".into()))?;
    MotionClip::new(id.unwrap_or_default(), rate, links.unwrap_or_default(), frames)
}
