//! Turning a trajectory into the fixed-length scalar channel the classifier
//! reads.
//!
//! Five pipelines are supported. `MinMax` only rescales the raw position.
//! The four polar pipelines replace a (position, velocity) pair by its
//! amplitude `ρ = √(q² + q̇²)`, which strips the oscillation phase and
//! leaves the decay envelope; optionally on a log scale and smoothed by a
//! centered moving mean.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::systems::{Trajectory, TrajectoryMeta};

#[derive(Debug, Error, PartialEq)]
pub enum PreprocessError {
    #[error("sequence lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("signal is constant; min-max scaling is undefined")]
    ConstantSignal,
    #[error("signal has no positive maximum")]
    ZeroSignal,
    #[error("sequence too short ({0} samples)")]
    TooShort(usize),
    #[error("coordinate pair {pair} out of range ({available} available)")]
    BadCoordPair { pair: usize, available: usize },
    #[error("invalid pipeline spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PipelineKind {
    MinMax,
    Polar,
    PolarMovMean,
    PolarLog,
    PolarLogMovMean,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 5] = [
        PipelineKind::MinMax,
        PipelineKind::Polar,
        PipelineKind::PolarMovMean,
        PipelineKind::PolarLog,
        PipelineKind::PolarLogMovMean,
    ];

    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Command-line and file-name spelling.
    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::MinMax => "minmax",
            PipelineKind::Polar => "polar",
            PipelineKind::PolarMovMean => "polar-movmean",
            PipelineKind::PolarLog => "polar-log",
            PipelineKind::PolarLogMovMean => "polar-log-movmean",
        }
    }

    /// Row label used in the summary table.
    pub fn label(self) -> &'static str {
        match self {
            PipelineKind::MinMax => "Min-max",
            PipelineKind::Polar => "Polar",
            PipelineKind::PolarMovMean => "Pol-MovMean",
            PipelineKind::PolarLog => "Pol-log",
            PipelineKind::PolarLogMovMean => "Pol-log-MovMean",
        }
    }

    pub fn is_polar(self) -> bool {
        self != PipelineKind::MinMax
    }

    fn uses_log(self) -> bool {
        matches!(self, PipelineKind::PolarLog | PipelineKind::PolarLogMovMean)
    }

    fn uses_movmean(self) -> bool {
        matches!(
            self,
            PipelineKind::PolarMovMean | PipelineKind::PolarLogMovMean
        )
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineKind {
    type Err = PreprocessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == norm || k.label().to_ascii_lowercase() == norm)
            .ok_or_else(|| PreprocessError::InvalidSpec(format!("unknown pipeline '{s}'")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineSpec {
    pub kind: PipelineKind,
    pub resample_len: usize,
    /// Moving-mean window as a fraction of the channel length.
    pub movmean_fraction: f64,
    /// Values below this are clamped before taking the logarithm.
    pub log_floor: f64,
    pub coord_pair: usize,
}

impl PipelineSpec {
    pub fn new(kind: PipelineKind) -> Self {
        Self {
            kind,
            resample_len: 1024,
            movmean_fraction: 0.05,
            log_floor: (-12.0f64).exp(),
            coord_pair: 0,
        }
    }

    pub fn with_coord_pair(mut self, pair: usize) -> Self {
        self.coord_pair = pair;
        self
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.resample_len < 32 {
            return Err(PreprocessError::InvalidSpec(
                "resample_len must be at least 32".into(),
            ));
        }
        if !(self.movmean_fraction > 0.0 && self.movmean_fraction < 0.5) {
            return Err(PreprocessError::InvalidSpec(
                "movmean_fraction must lie in (0, 0.5)".into(),
            ));
        }
        if !(self.log_floor > 0.0 && self.log_floor < 1.0) {
            return Err(PreprocessError::InvalidSpec(
                "log_floor must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }
}

/// A preprocessed classifier input.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub values: Vec<f32>,
    pub spec: PipelineSpec,
    pub meta: TrajectoryMeta,
}

pub fn to_polar(q: &[f64], qdot: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    if q.len() != qdot.len() {
        return Err(PreprocessError::LengthMismatch(q.len(), qdot.len()));
    }
    if q.len() < 2 {
        return Err(PreprocessError::TooShort(q.len()));
    }
    Ok(q.iter().zip(qdot).map(|(a, b)| a.hypot(*b)).collect())
}

fn min_max(s: &[f64]) -> (f64, f64) {
    s.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        })
}

/// Affine map of `s` onto `[-1, 1]`.
pub fn minmax_scale(s: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    if s.len() < 2 {
        return Err(PreprocessError::TooShort(s.len()));
    }
    let (lo, hi) = min_max(s);
    if !(hi > lo) {
        return Err(PreprocessError::ConstantSignal);
    }
    let span = hi - lo;
    Ok(s.iter()
        .map(|&v| {
            if v == hi {
                1.0
            } else {
                2.0 * ((v - lo) / span) - 1.0
            }
        })
        .collect())
}

pub fn unit_max_scale(rho: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    let (_, hi) = min_max(rho);
    if !(hi > 0.0) {
        return Err(PreprocessError::ZeroSignal);
    }
    Ok(rho.iter().map(|v| v / hi).collect())
}

pub fn log_scale(rho_scaled: &[f64], floor: f64) -> Vec<f64> {
    rho_scaled.iter().map(|&v| v.max(floor).ln()).collect()
}

/// Moving-mean window length for a sequence of `len` samples.
pub fn movmean_window(len: usize, fraction: f64) -> usize {
    ((fraction * len as f64).round() as usize).max(1)
}

/// Centered moving mean with window `max(1, round(fraction·len))`.
///
/// An even window reaches one sample further back than forward. Near either
/// end the window shrinks to the samples that exist.
pub fn moving_mean(s: &[f64], fraction: f64) -> Vec<f64> {
    moving_mean_window(s, movmean_window(s.len(), fraction))
}

pub fn moving_mean_window(s: &[f64], w: usize) -> Vec<f64> {
    let n = s.len();
    let back = w / 2;
    let fwd = w - 1 - back;
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in s {
        acc += v;
        prefix.push(acc);
    }
    (0..n)
        .map(|i| {
            let lo = i.saturating_sub(back);
            let hi = (i + fwd).min(n - 1);
            let count = (hi - lo + 1) as f64;
            let window = &s[lo..=hi];
            // constant windows stay exact instead of picking up prefix-sum noise
            if window.iter().all(|&v| v == window[0]) {
                window[0]
            } else {
                (prefix[hi + 1] - prefix[lo]) / count
            }
        })
        .collect()
}

/// Linear interpolation onto `n` equispaced points spanning the input.
pub fn resample(s: &[f64], n: usize) -> Result<Vec<f64>, PreprocessError> {
    if s.len() < 2 {
        return Err(PreprocessError::TooShort(s.len()));
    }
    if n < 2 {
        return Err(PreprocessError::InvalidSpec(
            "resample target must be at least 2".into(),
        ));
    }
    let last = s.len() - 1;
    let mut out = Vec::with_capacity(n);
    for j in 0..n {
        if j == n - 1 {
            out.push(s[last]);
            continue;
        }
        let x = (j * last) as f64 / (n - 1) as f64;
        let i = (x.floor() as usize).min(last - 1);
        let f = x - i as f64;
        out.push(if f == 0.0 {
            s[i]
        } else {
            s[i] + f * (s[i + 1] - s[i])
        });
    }
    Ok(out)
}

/// Runs the pipeline and returns the channel in double precision.
pub fn transform(traj: &Trajectory, spec: &PipelineSpec) -> Result<Vec<f64>, PreprocessError> {
    spec.validate()?;
    let available = traj.coord_pairs.len();
    if spec.coord_pair >= available {
        return Err(PreprocessError::BadCoordPair {
            pair: spec.coord_pair,
            available,
        });
    }
    let (q, qdot) = traj.coordinate(spec.coord_pair);
    transform_signals(&q, &qdot, spec)
}

/// Pipeline on a raw (position, velocity) pair.
pub fn transform_signals(
    q: &[f64],
    qdot: &[f64],
    spec: &PipelineSpec,
) -> Result<Vec<f64>, PreprocessError> {
    let kind = spec.kind;
    if kind == PipelineKind::MinMax {
        return resample(&minmax_scale(q)?, spec.resample_len);
    }
    let rho = unit_max_scale(&to_polar(q, qdot)?)?;
    let rho = if kind.uses_log() {
        log_scale(&rho, spec.log_floor)
    } else {
        rho
    };
    let out = resample(&rho, spec.resample_len)?;
    Ok(if kind.uses_movmean() {
        moving_mean(&out, spec.movmean_fraction)
    } else {
        out
    })
}

pub fn apply_pipeline(traj: &Trajectory, spec: &PipelineSpec) -> Result<Channel, PreprocessError> {
    let values = transform(traj, spec)?.into_iter().map(|v| v as f32).collect();
    Ok(Channel {
        values,
        spec: *spec,
        meta: traj.meta.clone(),
    })
}
