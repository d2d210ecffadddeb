//! TOML run configuration. Every section is optional and falls back to the
//! defaults below; unknown keys are rejected.
//!
//! ```toml
//! [[scene.prototypes]]
//! name = "floor"
//! path = "meshes/floor.obj"        # relative to the config file
//!
//! [[scene.prototypes]]
//! name = "box"
//! cuboid = [0.25, 0.3, 0.2]        # half extents
//!
//! [[scene.instances]]
//! prototype = "box"                # name or index
//! translation = [1.5, 0.0, 0.2]
//! rotation = [1.0, 0.0, 0.0, 0.0]  # w, x, y, z
//! group = -1
//!
//! [camera]
//! width = 64
//! ...
//! ```

use crate::camera::{look_at, CameraError, CameraIntrinsics, CameraModel};
use crate::curriculum::{CurriculumSettings, SmoothingKernel, StuckConfig};
use crate::depth::{DepthError, NoiseConfig};
use crate::geometry::{GeometryError, RigidTransform, Vec3};
use crate::mesh::{MeshError, TriangleMesh};
use crate::metrics::{MetricsError, RewardConfig};
use crate::scene::{GroupId, MeshInstance, Prototype, Scene, SceneError};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Toml { path: String, source: toml::de::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Depth(#[from] DepthError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scene: SceneConfig,
    pub camera: CameraConfig,
    pub noise: NoiseConfig,
    pub curriculum: CurriculumConfig,
    pub metrics: MetricsConfig,
    pub bench: BenchConfig,
    /// Directory that relative prototype paths resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneConfig {
    pub prototypes: Vec<PrototypeDef>,
    pub instances: Vec<InstanceDef>,
}

/// Exactly one of `path`, `cuboid` or `ground` must be set.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PrototypeDef {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cuboid: Option<[f64; 3]>,
    /// Side length of a square ground quad at z = 0.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ground: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PrototypeRef {
    Index(usize),
    Name(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceDef {
    pub prototype: PrototypeRef,
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "identity_quaternion")]
    pub rotation: [f64; 4],
    #[serde(default = "static_group")]
    pub group: GroupId,
}

fn identity_quaternion() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn static_group() -> GroupId {
    crate::scene::STATIC_GROUP
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CameraConfig {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view, degrees; used when `fx` is absent.
    pub hfov_deg: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fx: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fy: Option<f64>,
    pub near: f64,
    pub far: f64,
    pub position: [f64; 3],
    pub look_at: [f64; 3],
    pub up: [f64; 3],
    /// Group whose instances the camera sees besides static ones.
    pub group: GroupId,
}

impl Default for CameraConfig {
    fn default() -> Self {
        CameraConfig {
            width: 64,
            height: 48,
            hfov_deg: 87.0,
            fx: None,
            fy: None,
            near: 0.1,
            far: 5.0,
            position: [0.0, 0.0, 0.0],
            look_at: [1.0, 0.0, 0.0],
            up: [0.0, 0.0, 1.0],
            group: crate::scene::STATIC_GROUP,
        }
    }
}

impl CameraConfig {
    pub fn model(&self) -> Result<CameraModel, ConfigError> {
        let pose = look_at(Vec3::from(self.position), Vec3::from(self.look_at), Vec3::from(self.up))?;
        let f_fov = 0.5 * self.width as f64 / (0.5 * self.hfov_deg.to_radians()).tan();
        let fx = self.fx.unwrap_or(f_fov);
        let intrinsics = CameraIntrinsics {
            width: self.width,
            height: self.height,
            fx,
            fy: self.fy.unwrap_or(fx),
            cx: 0.5 * self.width as f64,
            cy: 0.5 * self.height as f64,
            near: self.near,
            far: self.far,
        };
        Ok(CameraModel::new(intrinsics, pose)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CurriculumConfig {
    pub t_bin: f64,
    pub kernel: SmoothingKernel,
    pub epsilon: f64,
    /// Multiplicative decay of failure counts per update; off when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub count_decay: Option<f64>,
    pub stuck: StuckConfig,
    /// Durations of synthetic clips when no clip files are given, seconds.
    pub durations: Vec<f64>,
    pub iterations: usize,
    pub model: FailureModelConfig,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        let s = CurriculumSettings::default();
        CurriculumConfig {
            t_bin: 1.0,
            kernel: s.kernel,
            epsilon: s.epsilon,
            count_decay: s.count_decay,
            stuck: StuckConfig::default(),
            durations: vec![3.2, 0.7],
            iterations: 1000,
            model: FailureModelConfig::Never,
        }
    }
}

impl CurriculumConfig {
    pub fn settings(&self) -> CurriculumSettings {
        CurriculumSettings { kernel: self.kernel, epsilon: self.epsilon, count_decay: self.count_decay }
    }
}

/// Synthetic rollout outcome used by `curriculum-sim`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum FailureModelConfig {
    Never,
    Fixed {
        motion: usize,
        time: f64,
    },
    /// Per-bin failure probabilities as `(motion, bin, p)` triples; other bins never fail.
    Hazard {
        bins: Vec<(usize, usize, f64)>,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MetricsConfig {
    /// Links compared by the metrics; empty means all links of the clip.
    pub key_links: Vec<String>,
    pub reward: RewardConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchConfig {
    pub groups: Vec<usize>,
    pub instances_per_group: usize,
    pub static_instances: usize,
    pub rays: usize,
    pub repetitions: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            groups: vec![8, 64, 256, 1024],
            instances_per_group: 16,
            static_instances: 4,
            rays: 16384,
            repetitions: 5,
        }
    }
}

impl Config {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Config, ConfigError> {
        Self::parse(text, base_dir, &base_dir.display().to_string())
    }

    pub fn load(path: &Path) -> Result<Config, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")), &path.display().to_string())
    }

    fn parse(text: &str, base_dir: &Path, label: &str) -> Result<Config, ConfigError> {
        let mut cfg: Config =
            toml::from_str(text).map_err(|source| ConfigError::Toml { path: label.to_string(), source })?;
        cfg.base_dir = base_dir.to_path_buf();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for p in &self.scene.prototypes {
            let set = [p.path.is_some(), p.cuboid.is_some(), p.ground.is_some()].iter().filter(|&&b| b).count();
            if set != 1 {
                return Err(ConfigError::Invalid(format!(
                    "prototype {:?} must set exactly one of path, cuboid, ground",
                    p.name
                )));
            }
        }
        self.noise.validate()?;
        self.metrics.reward.validate()?;
        let c = &self.curriculum;
        if !(c.t_bin > 0.0) || !(c.epsilon > 0.0) {
            return Err(ConfigError::Invalid(format!(
                "curriculum needs t_bin > 0 and epsilon > 0 (got {}, {})",
                c.t_bin, c.epsilon
            )));
        }
        if !(c.stuck.window > 0.0 && c.stuck.displacement_threshold > 0.0) {
            return Err(ConfigError::Invalid("stuck window and threshold must be positive".into()));
        }
        if self.bench.groups.is_empty() || self.bench.rays == 0 || self.bench.repetitions == 0 {
            return Err(ConfigError::Invalid("bench sweep needs groups, rays and repetitions".into()));
        }
        Ok(())
    }

    /// Effective configuration as TOML, with every default filled in.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    /// [`Config::to_toml`] with each line prefixed by `# `, for report headers.
    pub fn header_comment(&self) -> String {
        self.to_toml().lines().map(|l| format!("# {l}\n")).collect()
    }

    pub fn build_scene(&self) -> Result<Scene, ConfigError> {
        let prototypes = self
            .scene
            .prototypes
            .iter()
            .map(|p| -> Result<Arc<Prototype>, ConfigError> {
                let mesh = if let Some(path) = &p.path {
                    TriangleMesh::load_obj(&self.base_dir.join(path))?
                } else if let Some(h) = p.cuboid {
                    TriangleMesh::cuboid(Vec3::from(h))
                } else {
                    TriangleMesh::ground_quad(p.ground.unwrap_or(1.0))
                };
                Ok(Arc::new(Prototype::new(mesh)?))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let instances = self
            .scene
            .instances
            .iter()
            .map(|i| {
                let prototype_id = match &i.prototype {
                    PrototypeRef::Index(k) => *k,
                    PrototypeRef::Name(n) => self
                        .scene
                        .prototypes
                        .iter()
                        .position(|p| &p.name == n)
                        .ok_or_else(|| ConfigError::Invalid(format!("unknown prototype {n:?}")))?,
                };
                let transform = RigidTransform::from_translation_quaternion(i.translation, i.rotation)?;
                Ok(MeshInstance::new(prototype_id, transform, i.group))
            })
            .collect::<Result<Vec<_>, ConfigError>>()?;
        Ok(Scene::seal(prototypes, instances)?)
    }
}
