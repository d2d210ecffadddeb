//! Depth post-processing that makes rendered depth resemble a stereo sensor:
//! Gaussian range noise, rectangular dropout patches, hole inpainting and
//! clip/normalize.
//!
//! All randomness comes from [`CounterRng`] keyed by `NoiseConfig::seed`,
//! so each stage is a pure function of `(image, config)`.
//!
//! The default noise magnitudes and patch statistics are placeholders, not
//! measured sensor values; tune them per camera.

use crate::raycast::DepthMap;
use crate::rng::CounterRng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

const NOISE_DOMAIN: u32 = 0;
const PATCH_DOMAIN: u32 = 1;

/// Inpainting stops once no pixel moves more than this (metres).
pub const INPAINT_TOLERANCE: f64 = 1e-4;
pub const INPAINT_MAX_ITERATIONS: usize = 500;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DepthError {
    #[error("image has no valid pixels to inpaint from")]
    AllInvalid,
    #[error("image dimensions {width}x{height} do not match {len} values")]
    ShapeMismatch { width: usize, height: usize, len: usize },
    #[error("image must have positive dimensions")]
    Empty,
    #[error("clip range must satisfy far > near (near = {near}, far = {far})")]
    InvalidClip { near: f64, far: f64 },
    #[error("invalid noise config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseConfig {
    /// Standard deviation of additive range noise, metres.
    pub gaussian_sigma: f64,
    /// Inclusive range of the number of dropout patches per image.
    pub patch_count_range: [u32; 2],
    /// Inclusive range of patch side lengths, pixels.
    pub patch_size_range: [u32; 2],
    /// Value written into hole pixels (they are also flagged invalid).
    pub hole_fill_value: f64,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            gaussian_sigma: 0.01,
            patch_count_range: [0, 3],
            patch_size_range: [2, 8],
            hole_fill_value: 0.0,
            seed: 0,
        }
    }
}

impl NoiseConfig {
    /// No noise and no patches.
    pub fn clean(seed: u64) -> Self {
        NoiseConfig { gaussian_sigma: 0.0, patch_count_range: [0, 0], seed, ..Default::default() }
    }

    pub fn validate(&self) -> Result<(), DepthError> {
        if !(self.gaussian_sigma >= 0.0 && self.gaussian_sigma.is_finite()) {
            return Err(DepthError::InvalidConfig(format!("gaussian_sigma = {}", self.gaussian_sigma)));
        }
        let [c0, c1] = self.patch_count_range;
        let [s0, s1] = self.patch_size_range;
        if c0 > c1 {
            return Err(DepthError::InvalidConfig(format!("patch_count_range [{c0}, {c1}] is empty")));
        }
        if s0 > s1 {
            return Err(DepthError::InvalidConfig(format!("patch_size_range [{s0}, {s1}] is empty")));
        }
        Ok(())
    }
}

/// Depth image with a validity mask. Values are metres, or `[0, 1]` once
/// `normalized` is set.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
    pub normalized: bool,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self, DepthError> {
        if width == 0 || height == 0 {
            return Err(DepthError::Empty);
        }
        if values.len() != width * height {
            return Err(DepthError::ShapeMismatch { width, height, len: values.len() });
        }
        let valid = values.iter().map(|v| v.is_finite()).collect();
        Ok(DepthImage { width, height, values, valid, normalized: false })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self, DepthError> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_depth_map(map: &DepthMap) -> Result<Self, DepthError> {
        Self::new(map.width, map.height, map.values.clone())
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn invalid_count(&self) -> usize {
        self.valid.iter().filter(|v| !**v).count()
    }

    /// `(min, max)` over valid pixels.
    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.values.iter().zip(&self.valid).filter(|(_, ok)| **ok).fold(None, |acc, (&v, _)| match acc {
            None => Some((v, v)),
            Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
        })
    }

    pub fn set_invalid(&mut self, i: usize, fill: f64) {
        self.valid[i] = false;
        self.values[i] = fill;
    }
}

/// Adds i.i.d. `N(0, σ²)` noise to every valid pixel. The noise of pixel
/// `i` is the normal draw at `(seed, domain 0, index i, draw 0)`.
pub fn add_gaussian_noise(img: &DepthImage, cfg: &NoiseConfig) -> DepthImage {
    let mut out = img.clone();
    if cfg.gaussian_sigma == 0.0 {
        return out;
    }
    let rng = CounterRng::new(cfg.seed);
    for (i, (v, ok)) in out.values.iter_mut().zip(&img.valid).enumerate() {
        if *ok {
            *v += cfg.gaussian_sigma * rng.normal(NOISE_DOMAIN, i as u64, 0);
        }
    }
    out
}

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Patch {
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
}

/// Patch layout for an image of the given size. The patch count is drawn at
/// `(domain 1, index 0, draw 0)`; patch `p` uses index `p + 1` with draws
/// 0–3 for width, height, x and y. Sides are clamped to the image.
pub fn patch_layout(width: usize, height: usize, cfg: &NoiseConfig) -> Vec<Patch> {
    let rng = CounterRng::new(cfg.seed);
    let [c0, c1] = cfg.patch_count_range;
    let [s0, s1] = cfg.patch_size_range;
    let count = rng.inclusive(PATCH_DOMAIN, 0, 0, c0 as u64, c1 as u64);
    (0..count)
        .map(|p| {
            let idx = p + 1;
            let w = (rng.inclusive(PATCH_DOMAIN, idx, 0, s0 as u64, s1 as u64) as usize).min(width);
            let h = (rng.inclusive(PATCH_DOMAIN, idx, 1, s0 as u64, s1 as u64) as usize).min(height);
            let x = rng.below(PATCH_DOMAIN, idx, 2, (width - w + 1) as u64) as usize;
            let y = rng.below(PATCH_DOMAIN, idx, 3, (height - h + 1) as u64) as usize;
            Patch { x, y, width: w, height: h }
        })
        .collect()
}

/// Marks the pixels covered by [`patch_layout`] as holes.
pub fn add_patch_artifacts(img: &DepthImage, cfg: &NoiseConfig) -> DepthImage {
    let mut out = img.clone();
    for patch in patch_layout(img.width, img.height, cfg) {
        for y in patch.y..patch.y + patch.height {
            for x in patch.x..patch.x + patch.width {
                out.set_invalid(y * img.width + x, cfg.hole_fill_value);
            }
        }
    }
    out
}

fn neighbors(width: usize, height: usize, i: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % width, i / width);
    [
        (x > 0).then(|| i - 1),
        (x + 1 < width).then(|| i + 1),
        (y > 0).then(|| i - width),
        (y + 1 < height).then(|| i + width),
    ]
    .into_iter()
    .flatten()
}

/// Fills holes by diffusion.
///
/// Holes are first seeded front by front from their already-known
/// 4-neighbours, then relaxed by Jacobi iterations (each hole becomes the
/// mean of its in-image 4-neighbours) until no value changes by more than
/// [`INPAINT_TOLERANCE`] or [`INPAINT_MAX_ITERATIONS`] sweeps have run.
/// Every filled value is a convex combination of valid inputs.
pub fn inpaint_holes(img: &DepthImage) -> Result<DepthImage, DepthError> {
    let holes: Vec<usize> = (0..img.len()).filter(|&i| !img.valid[i]).collect();
    if holes.is_empty() {
        return Ok(img.clone());
    }
    if holes.len() == img.len() {
        return Err(DepthError::AllInvalid);
    }
    let (w, h) = (img.width, img.height);
    let mut values = img.values.clone();
    let mut known = img.valid.clone();

    let mut pending = holes.clone();
    while !pending.is_empty() {
        let front: Vec<(usize, f64)> = pending
            .iter()
            .filter_map(|&i| {
                let (sum, n) =
                    neighbors(w, h, i).filter(|&j| known[j]).fold((0.0, 0u32), |(s, n), j| (s + values[j], n + 1));
                (n > 0).then(|| (i, sum / f64::from(n)))
            })
            .collect();
        for &(i, v) in &front {
            values[i] = v;
            known[i] = true;
        }
        pending.retain(|&i| !known[i]);
    }

    let mut next = values.clone();
    for _ in 0..INPAINT_MAX_ITERATIONS {
        let mut max_update = 0.0f64;
        for &i in &holes {
            let (sum, n) = neighbors(w, h, i).fold((0.0, 0u32), |(s, n), j| (s + values[j], n + 1));
            let v = sum / f64::from(n);
            max_update = max_update.max((v - values[i]).abs());
            next[i] = v;
        }
        std::mem::swap(&mut values, &mut next);
        if max_update < INPAINT_TOLERANCE {
            break;
        }
    }

    Ok(DepthImage { width: w, height: h, values, valid: vec![true; img.len()], normalized: img.normalized })
}

/// Clamps to `[near, far]` and maps affinely onto `[0, 1]`.
pub fn clip_normalize(img: &DepthImage, near: f64, far: f64) -> Result<DepthImage, DepthError> {
    if !(far > near) {
        return Err(DepthError::InvalidClip { near, far });
    }
    let span = far - near;
    let values = img.values.iter().map(|&v| (v.clamp(near, far) - near) / span).collect();
    Ok(DepthImage { values, normalized: true, ..img.clone() })
}

/// Inverse of [`clip_normalize`] on the clamped range.
pub fn denormalize(img: &DepthImage, near: f64, far: f64) -> Result<DepthImage, DepthError> {
    if !(far > near) {
        return Err(DepthError::InvalidClip { near, far });
    }
    let values = img.values.iter().map(|&v| near + v * (far - near)).collect();
    Ok(DepthImage { values, normalized: false, ..img.clone() })
}

/// Noise → patches → inpaint → normalize.
///
/// If the patches remove every pixel the frame is treated as a full dropout
/// and reported as `far` (normalized 1.0).
pub fn run_pipeline(img: &DepthImage, cfg: &NoiseConfig, near: f64, far: f64) -> Result<DepthImage, DepthError> {
    cfg.validate()?;
    let noisy = add_gaussian_noise(img, cfg);
    let patched = add_patch_artifacts(&noisy, cfg);
    let filled = match inpaint_holes(&patched) {
        Ok(filled) => filled,
        Err(DepthError::AllInvalid) => {
            DepthImage { values: vec![far; patched.len()], valid: vec![true; patched.len()], ..patched }
        }
        Err(e) => return Err(e),
    };
    clip_normalize(&filled, near, far)
}
