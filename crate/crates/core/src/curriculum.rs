//! Failure-driven reset sampling over temporal bins of reference motions,
//! and early truncation of rollouts that stall near their start.
//!
//! Each motion is cut into bins of at most `t_bin` seconds. Failures are
//! counted per bin, smoothed along time within the same motion, and turned
//! into sampling weights `W = F̃ + ε`. Reset states are drawn with
//! probability proportional to `W`, uniformly in time inside the drawn bin.

use crate::geometry::Vec3;
use crate::motion::MotionClip;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

/// Slack when deciding how many bins a duration needs, so that e.g.
/// `0.3 / 0.1` does not produce a spurious empty tail bin.
const BIN_COUNT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurriculumError {
    #[error("no motion clips to sample from")]
    EmptyClipSet,
    #[error("bin duration must be positive, got {0}")]
    InvalidBinDuration(f64),
    #[error("motion {motion} has invalid duration {duration}")]
    InvalidDuration { motion: usize, duration: f64 },
    #[error("motion index {motion} out of range ({count} motions)")]
    UnknownMotion { motion: usize, count: usize },
    #[error("time {t} is outside motion {motion} (duration {duration})")]
    OutOfRangeTime { motion: usize, t: f64, duration: f64 },
    #[error("epsilon must be positive, got {0}")]
    InvalidEpsilon(f64),
    #[error("checkpoint line {line}: {message}")]
    Checkpoint { line: usize, message: String },
}

/// Half-open time interval `[start, end)` of a motion; the last bin of a
/// motion also contains its end time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub start: f64,
    pub end: f64,
}

impl Bin {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
struct MotionBins {
    duration: f64,
    /// Offset of the first bin in the flat per-bin arrays.
    offset: usize,
    bins: Vec<Bin>,
}

/// Time-smoothing kernel applied to failure counts within one motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum SmoothingKernel {
    /// `K(j, i) = exp(−|j − i| / decay_bins)`, zero beyond
    /// `truncate · decay_bins` bins.
    Exponential { decay_bins: f64, truncate: f64 },
}

impl Default for SmoothingKernel {
    fn default() -> Self {
        SmoothingKernel::Exponential { decay_bins: 1.0, truncate: 5.0 }
    }
}

impl SmoothingKernel {
    pub fn exponential(decay_bins: f64) -> Self {
        SmoothingKernel::Exponential { decay_bins, truncate: 5.0 }
    }

    pub fn weight(&self, j: usize, i: usize) -> f64 {
        match *self {
            SmoothingKernel::Exponential { decay_bins, truncate } => {
                let d = j.abs_diff(i) as f64;
                if d > truncate * decay_bins {
                    0.0
                } else {
                    (-d / decay_bins).exp()
                }
            }
        }
    }
}

/// Failure statistics and sampling weights for every bin of every motion.
#[derive(Debug, Clone, PartialEq)]
pub struct BinTable {
    t_bin: f64,
    motions: Vec<MotionBins>,
    /// Raw cumulative failure counts `F`.
    failures: Vec<u64>,
    /// Counts fed to the smoother; equal to `failures` unless decay is used.
    effective: Vec<f64>,
    /// Smoothed scores `F̃`.
    smoothed: Vec<f64>,
    /// Sampling weights `W`.
    weights: Vec<f64>,
}

/// Bins each clip by its duration `(frames − 1) / rate`.
pub fn discretize(clips: &[MotionClip], t_bin: f64) -> Result<BinTable, CurriculumError> {
    let durations: Vec<f64> = clips.iter().map(MotionClip::duration).collect();
    BinTable::from_durations(&durations, t_bin)
}

impl BinTable {
    /// `ceil(duration / t_bin)` bins per motion, uniform weights, no failures.
    pub fn from_durations(durations: &[f64], t_bin: f64) -> Result<BinTable, CurriculumError> {
        if durations.is_empty() {
            return Err(CurriculumError::EmptyClipSet);
        }
        if !(t_bin > 0.0 && t_bin.is_finite()) {
            return Err(CurriculumError::InvalidBinDuration(t_bin));
        }
        let mut motions = Vec::with_capacity(durations.len());
        let mut offset = 0;
        for (motion, &duration) in durations.iter().enumerate() {
            if !(duration > 0.0 && duration.is_finite()) {
                return Err(CurriculumError::InvalidDuration { motion, duration });
            }
            let count = ((duration / t_bin) - BIN_COUNT_SLACK).ceil().max(1.0) as usize;
            let bins = (0..count)
                .map(|j| Bin {
                    start: j as f64 * t_bin,
                    end: if j + 1 == count { duration } else { (j + 1) as f64 * t_bin },
                })
                .collect();
            motions.push(MotionBins { duration, offset, bins });
            offset += count;
        }
        Ok(BinTable {
            t_bin,
            motions,
            failures: vec![0; offset],
            effective: vec![0.0; offset],
            smoothed: vec![0.0; offset],
            weights: vec![1.0; offset],
        })
    }

    pub fn t_bin(&self) -> f64 {
        self.t_bin
    }

    pub fn motion_count(&self) -> usize {
        self.motions.len()
    }

    /// Total number of bins over all motions.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn bins(&self, motion: usize) -> &[Bin] {
        &self.motions[motion].bins
    }

    pub fn duration(&self, motion: usize) -> f64 {
        self.motions[motion].duration
    }

    /// Flat index of bin `j` of `motion`.
    pub fn flat_index(&self, motion: usize, j: usize) -> usize {
        self.motions[motion].offset + j
    }

    /// `(motion, bin)` for a flat index.
    pub fn locate(&self, flat: usize) -> (usize, usize) {
        let motion = self.motions.partition_point(|m| m.offset <= flat) - 1;
        (motion, flat - self.motions[motion].offset)
    }

    pub fn failures(&self) -> &[u64] {
        &self.failures
    }

    pub fn smoothed(&self) -> &[f64] {
        &self.smoothed
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    fn motion(&self, motion: usize) -> Result<&MotionBins, CurriculumError> {
        self.motions.get(motion).ok_or(CurriculumError::UnknownMotion { motion, count: self.motions.len() })
    }

    /// Bin containing time `t` of `motion`. Bins are half-open, and the
    /// clip end belongs to the last bin.
    pub fn bin_of(&self, motion: usize, t: f64) -> Result<usize, CurriculumError> {
        let m = self.motion(motion)?;
        if !(t >= 0.0 && t <= m.duration) {
            return Err(CurriculumError::OutOfRangeTime { motion, t, duration: m.duration });
        }
        let j = m.bins.partition_point(|b| b.start <= t) - 1;
        Ok(j.min(m.bins.len() - 1))
    }

    /// Increments `F` of the bin containing `t_fail`; weights are left
    /// untouched until [`BinTable::update_weights`].
    pub fn record_failure(&mut self, motion: usize, t_fail: f64) -> Result<usize, CurriculumError> {
        let j = self.bin_of(motion, t_fail)?;
        let flat = self.flat_index(motion, j);
        self.failures[flat] += 1;
        self.effective[flat] += 1.0;
        Ok(j)
    }

    /// Multiplies the counts seen by the smoother by `factor` (raw counts
    /// are kept).
    pub fn decay_counts(&mut self, factor: f64) {
        for c in &mut self.effective {
            *c *= factor;
        }
    }

    /// `F̃[k, j] = Σ_i F[k, i] · K(j, i)` within each motion, then `W = F̃ + ε`.
    pub fn update_weights(&mut self, kernel: &SmoothingKernel, epsilon: f64) -> Result<(), CurriculumError> {
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(CurriculumError::InvalidEpsilon(epsilon));
        }
        for m in &self.motions {
            let n = m.bins.len();
            let counts = &self.effective[m.offset..m.offset + n];
            for j in 0..n {
                let score: f64 = counts
                    .iter()
                    .enumerate()
                    .filter(|(_, &c)| c != 0.0)
                    .fold(0.0, |acc, (i, &c)| acc + c * kernel.weight(j, i));
                self.smoothed[m.offset + j] = score;
                self.weights[m.offset + j] = score + epsilon;
            }
        }
        Ok(())
    }

    /// `P = W / ΣW` over all bins of all motions.
    pub fn probabilities(&self) -> Vec<f64> {
        let total: f64 = self.weights.iter().sum();
        self.weights.iter().map(|w| w / total).collect()
    }

    /// Read-only snapshot for sampling.
    pub fn sampler(&self) -> StartSampler {
        let mut cumulative = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cumulative.push(acc);
        }
        let bins = (0..self.len())
            .map(|flat| {
                let (motion, j) = self.locate(flat);
                (motion, j, self.motions[motion].bins[j])
            })
            .collect();
        StartSampler { cumulative, bins }
    }

    pub fn sample_start<R: Rng + ?Sized>(&self, rng: &mut R) -> StartSample {
        self.sampler().sample(rng)
    }

    /// CSV dump: `motion,bin,start,end,failures,effective,smoothed,weight`.
    pub fn checkpoint(&self) -> String {
        let mut out = format!("# t_bin={}\nmotion,bin,start,end,failures,effective,smoothed,weight\n", self.t_bin);
        for (k, m) in self.motions.iter().enumerate() {
            for (j, b) in m.bins.iter().enumerate() {
                let f = m.offset + j;
                let _ = writeln!(
                    out,
                    "{k},{j},{},{},{},{},{},{}",
                    b.start, b.end, self.failures[f], self.effective[f], self.smoothed[f], self.weights[f]
                );
            }
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<BinTable, CurriculumError> {
        let bad = |line: usize, message: String| CurriculumError::Checkpoint { line, message };
        let mut t_bin = None;
        let mut rows: Vec<(usize, usize, f64, u64, f64, f64, f64)> = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let raw = raw.trim();
            if let Some(v) = raw.strip_prefix("# t_bin=") {
                t_bin = Some(v.parse::<f64>().map_err(|e| bad(line, e.to_string()))?);
                continue;
            }
            if raw.is_empty() || raw.starts_with('#') || raw.starts_with("motion,") {
                continue;
            }
            let f: Vec<&str> = raw.split(',').collect();
            if f.len() != 8 {
                return Err(bad(line, format!("expected 8 fields, found {}", f.len())));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| bad(line, e.to_string()));
            let idx = |s: &str| s.parse::<usize>().map_err(|e| bad(line, e.to_string()));
            rows.push((
                idx(f[0])?,
                idx(f[1])?,
                num(f[3])?,
                f[4].parse::<u64>().map_err(|e| bad(line, e.to_string()))?,
                num(f[5])?,
                num(f[6])?,
                num(f[7])?,
            ));
        }
        let t_bin = t_bin.ok_or_else(|| bad(1, "missing t_bin header".into()))?;
        let motion_count = rows.iter().map(|r| r.0 + 1).max().ok_or(CurriculumError::EmptyClipSet)?;
        let durations: Vec<f64> =
            (0..motion_count).map(|k| rows.iter().filter(|r| r.0 == k).map(|r| r.2).fold(0.0, f64::max)).collect();
        let mut table = BinTable::from_durations(&durations, t_bin)?;
        if rows.len() != table.len() {
            return Err(bad(0, format!("expected {} bins, found {}", table.len(), rows.len())));
        }
        for (k, j, _, failures, effective, smoothed, weight) in rows {
            if j >= table.bins(k).len() {
                return Err(bad(0, format!("motion {k} has no bin {j}")));
            }
            let f = table.flat_index(k, j);
            table.failures[f] = failures;
            table.effective[f] = effective;
            table.smoothed[f] = smoothed;
            table.weights[f] = weight;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StartSample {
    pub motion: usize,
    pub bin: usize,
    pub t_start: f64,
}

/// Cumulative-weight snapshot of a [`BinTable`]; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct StartSampler {
    cumulative: Vec<f64>,
    bins: Vec<(usize, usize, Bin)>,
}

impl StartSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> StartSample {
        let total = *self.cumulative.last().expect("non-empty table");
        let u = rng.random::<f64>() * total;
        let flat = self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1);
        let (motion, bin, b) = self.bins[flat];
        let t_start = b.start + rng.random::<f64>() * b.duration();
        StartSample { motion, bin, t_start }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StuckConfig {
    /// Trailing window length, seconds.
    pub window: f64,
    /// Root displacement below which the robot counts as stuck, metres.
    pub displacement_threshold: f64,
    /// Only the first `grace` seconds of an episode are checked.
    pub grace: f64,
}

impl Default for StuckConfig {
    fn default() -> Self {
        StuckConfig { window: 1.0, displacement_threshold: 0.1, grace: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StuckStatus {
    Stuck {
        displacement: f64,
    },
    Moving {
        displacement: f64,
    },
    /// The episode is past the grace period; never truncated.
    OutsideGrace,
    /// History does not yet span a full window.
    InsufficientHistory,
}

impl StuckStatus {
    pub fn is_stuck(&self) -> bool {
        matches!(self, StuckStatus::Stuck { .. })
    }
}

const STUCK_TIME_SLACK: f64 = 1e-9;

/// Stuck iff `episode_t ≤ grace` and every root position in the trailing
/// window `[episode_t − window, episode_t]` lies within
/// `displacement_threshold` of the latest one. `root_positions` are
/// `(time, position)` pairs in increasing time.
pub fn detect_stuck(root_positions: &[(f64, Vec3)], cfg: &StuckConfig, episode_t: f64) -> StuckStatus {
    if episode_t > cfg.grace + STUCK_TIME_SLACK {
        return StuckStatus::OutsideGrace;
    }
    let upto = root_positions.partition_point(|(t, _)| *t <= episode_t + STUCK_TIME_SLACK);
    let history = &root_positions[..upto];
    let window_start = episode_t - cfg.window;
    match history.first() {
        Some((t0, _)) if *t0 <= window_start + STUCK_TIME_SLACK => {}
        _ => return StuckStatus::InsufficientHistory,
    }
    let latest = history[history.len() - 1].1;
    let first_in_window = history.partition_point(|(t, _)| *t < window_start - STUCK_TIME_SLACK);
    let displacement = history[first_in_window..].iter().map(|(_, p)| (p - latest).norm()).fold(0.0, f64::max);
    if displacement < cfg.displacement_threshold {
        StuckStatus::Stuck { displacement }
    } else {
        StuckStatus::Moving { displacement }
    }
}

/// Outcome generator standing in for a policy rollout.
pub trait FailureModel {
    /// Failure time for a rollout started at `start`, or `None` on success.
    fn rollout<R: Rng + ?Sized>(&mut self, table: &BinTable, start: &StartSample, rng: &mut R) -> Option<f64>;
}

/// Never fails.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeverFail;

impl FailureModel for NeverFail {
    fn rollout<R: Rng + ?Sized>(&mut self, _: &BinTable, _: &StartSample, _: &mut R) -> Option<f64> {
        None
    }
}

/// Fails at `time` of `motion` whenever a rollout of that motion starts
/// at or before it.
#[derive(Debug, Clone, Copy)]
pub struct FixedFailure {
    pub motion: usize,
    pub time: f64,
}

impl FailureModel for FixedFailure {
    fn rollout<R: Rng + ?Sized>(&mut self, _: &BinTable, start: &StartSample, _: &mut R) -> Option<f64> {
        (start.motion == self.motion && start.t_start <= self.time).then_some(self.time)
    }
}

/// Walks forward from the start bin; in each bin crossed the rollout fails
/// with that bin's probability, at a uniform time inside the traversed part.
#[derive(Debug, Clone)]
pub struct BinHazard {
    /// Failure probability per flat bin index.
    pub probabilities: Vec<f64>,
}

impl FailureModel for BinHazard {
    fn rollout<R: Rng + ?Sized>(&mut self, table: &BinTable, start: &StartSample, rng: &mut R) -> Option<f64> {
        let bins = table.bins(start.motion);
        for (j, bin) in bins.iter().enumerate().skip(start.bin) {
            let p = self.probabilities[table.flat_index(start.motion, j)];
            let draw = rng.random::<f64>();
            if draw < p {
                let from = bin.start.max(start.t_start);
                return Some(from + rng.random::<f64>() * (bin.end - from));
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurriculumSettings {
    pub kernel: SmoothingKernel,
    pub epsilon: f64,
    /// Optional multiplicative decay of counts applied before each update.
    pub count_decay: Option<f64>,
}

impl Default for CurriculumSettings {
    fn default() -> Self {
        CurriculumSettings { kernel: SmoothingKernel::default(), epsilon: 0.01, count_decay: None }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumTrace {
    /// `distributions[0]` is the initial `P`; entry `i` is `P` after iteration `i`.
    pub distributions: Vec<Vec<f64>>,
    pub failures: usize,
}

/// Runs the sample → rollout → update loop without any physics and
/// records `P` after every iteration. Weights are only recomputed on
/// iterations that end in failure.
pub fn simulate_curriculum<M: FailureModel, R: Rng + ?Sized>(
    table: &mut BinTable,
    settings: &CurriculumSettings,
    model: &mut M,
    iterations: usize,
    rng: &mut R,
) -> Result<CurriculumTrace, CurriculumError> {
    let mut distributions = Vec::with_capacity(iterations + 1);
    let failures =
        simulate_curriculum_with(table, settings, model, iterations, rng, |_, p| distributions.push(p.to_vec()))?;
    Ok(CurriculumTrace { distributions, failures })
}

/// Like [`simulate_curriculum`] but hands each distribution to `observe`
/// instead of storing it. Returns the number of failures.
pub fn simulate_curriculum_with<M: FailureModel, R: Rng + ?Sized>(
    table: &mut BinTable,
    settings: &CurriculumSettings,
    model: &mut M,
    iterations: usize,
    rng: &mut R,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<usize, CurriculumError> {
    if !(settings.epsilon > 0.0 && settings.epsilon.is_finite()) {
        return Err(CurriculumError::InvalidEpsilon(settings.epsilon));
    }
    observe(0, &table.probabilities());
    let mut sampler = table.sampler();
    let mut failures = 0;
    for it in 1..=iterations {
        let start = sampler.sample(rng);
        if let Some(t_fail) = model.rollout(table, &start, rng) {
            let t_fail = t_fail.clamp(0.0, table.duration(start.motion));
            table.record_failure(start.motion, t_fail)?;
            if let Some(factor) = settings.count_decay {
                table.decay_counts(factor);
            }
            table.update_weights(&settings.kernel, settings.epsilon)?;
            sampler = table.sampler();
            failures += 1;
        }
        observe(it, &table.probabilities());
    }
    Ok(failures)
}
