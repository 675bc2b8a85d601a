//! Scoring mathematics: the driving score and behavioral signature, and
//! cross-algorithm normalized benchmark scores with best-so-far curves.

mod normalize;
mod report;

use thiserror::Error;

use crate::par;
use crate::soldb::{FeatureSignature, MetricsRecord};

pub use normalize::{normalized_scores, normalized_scores_or_flat, BenchmarkEntry, Direction};
pub use report::{best_so_far_curve, write_curve_csv, write_problem_table, BudgetAxis, CurvePoint};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoreError {
    #[error("metric `{0}` is missing")]
    MissingMetric(String),
    #[error("invalid scoring config: {0}")]
    InvalidConfig(String),
    #[error("all scores are equal; normalization is undefined")]
    DegenerateRange,
    #[error("normalization needs at least two entries, got {0}")]
    TooFewEntries(usize),
    #[error("report output failed: {0}")]
    Io(String),
}

pub const COLLISIONS: &str = "collisions";
pub const TELEPORTS: &str = "teleports";
pub const EMERGENCY_STOPS: &str = "emergencyStops";
pub const EMERGENCY_BRAKING: &str = "emergencyBraking";
pub const CRITICAL_TTC: &str = "critical_ttc_count";
pub const AVG_SPEED: &str = "avg_speed";
pub const SPEED_VARIANCE: &str = "speed_variance";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Penalties {
    pub collision: f64,
    pub teleport: f64,
    pub emergency_stop: f64,
    pub emergency_braking: f64,
    pub critical_ttc: f64,
}

/// Level thresholds. Each `*_bands` array lists the upper bounds for levels
/// 3, 2 and 1; anything above the last bound is level 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignatureBands {
    pub ttc_weak: f64,
    pub emergency_weak: f64,
    pub ttc_good: f64,
    pub speed_bands: [f64; 3],
    pub variance_bands: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoringConfig {
    /// Target speed in m/s.
    pub target_speed: f64,
    /// (safety, speed, smoothness).
    pub weights: [f64; 3],
    pub penalties: Penalties,
    /// Speed deviation: full marks up to `.0`, zero from `.1`.
    pub speed_breaks: (f64, f64),
    /// Speed variance: full marks up to `.0`, zero from `.1`.
    pub variance_breaks: (f64, f64),
    pub bands: SignatureBands,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        ScoringConfig {
            target_speed: 13.89,
            weights: [0.5, 0.3, 0.2],
            penalties: Penalties {
                collision: 50.0,
                teleport: 30.0,
                emergency_stop: 5.0,
                emergency_braking: 2.0,
                critical_ttc: 0.5,
            },
            speed_breaks: (1.0, 12.0),
            variance_breaks: (2.0, 22.0),
            bands: SignatureBands {
                ttc_weak: 100.0,
                emergency_weak: 5.0,
                ttc_good: 30.0,
                speed_bands: [1.0, 3.0, 6.0],
                variance_bands: [4.0, 9.0, 16.0],
            },
        }
    }
}

impl ScoringConfig {
    pub fn validate(&self) -> Result<(), ScoreError> {
        let bad = |m: &str| Err(ScoreError::InvalidConfig(m.to_string()));
        let sum: f64 = self.weights.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || self.weights.iter().any(|w| *w < 0.0) {
            return bad("weights must be non-negative and sum to 1");
        }
        let p = &self.penalties;
        if [p.collision, p.teleport, p.emergency_stop, p.emergency_braking, p.critical_ttc]
            .iter()
            .any(|c| !(*c >= 0.0))
        {
            return bad("penalties must be non-negative");
        }
        if !(self.speed_breaks.0 < self.speed_breaks.1) || !(self.variance_breaks.0 < self.variance_breaks.1) {
            return bad("breakpoints must be increasing");
        }
        let increasing = |b: &[f64; 3]| b[0] <= b[1] && b[1] <= b[2];
        if !increasing(&self.bands.speed_bands) || !increasing(&self.bands.variance_bands) {
            return bad("signature bands must be increasing");
        }
        if !(self.target_speed >= 0.0) {
            return bad("target speed must be non-negative");
        }
        Ok(())
    }
}

fn metric(m: &MetricsRecord, name: &str) -> Result<f64, ScoreError> {
    m.get(name).ok_or_else(|| ScoreError::MissingMetric(name.to_string()))
}

/// 100 minus additive penalties; not clamped, so it can go negative.
pub fn safety_score(m: &MetricsRecord, cfg: &ScoringConfig) -> Result<f64, ScoreError> {
    let p = &cfg.penalties;
    Ok(100.0
        - p.collision * metric(m, COLLISIONS)?
        - p.teleport * metric(m, TELEPORTS)?
        - p.emergency_stop * metric(m, EMERGENCY_STOPS)?
        - p.emergency_braking * metric(m, EMERGENCY_BRAKING)?
        - p.critical_ttc * metric(m, CRITICAL_TTC)?)
}

/// 100 up to `lo`, linear down to 0 at `hi`.
fn ramp(x: f64, (lo, hi): (f64, f64)) -> f64 {
    if x <= lo {
        100.0
    } else if x >= hi {
        0.0
    } else {
        100.0 * (hi - x) / (hi - lo)
    }
}

pub fn speed_score(avg_speed: f64, cfg: &ScoringConfig) -> f64 {
    ramp((avg_speed - cfg.target_speed).abs(), cfg.speed_breaks)
}

pub fn smoothness_score(speed_variance: f64, cfg: &ScoringConfig) -> f64 {
    ramp(speed_variance, cfg.variance_breaks)
}

pub fn combined_score(m: &MetricsRecord, cfg: &ScoringConfig) -> Result<f64, ScoreError> {
    let subs = [
        safety_score(m, cfg)?,
        speed_score(metric(m, AVG_SPEED)?, cfg),
        smoothness_score(metric(m, SPEED_VARIANCE)?, cfg),
    ];
    Ok(cfg.weights.iter().zip(subs).map(|(w, s)| w * s).sum())
}

fn band_level(x: f64, bands: &[f64; 3]) -> u32 {
    match bands.iter().position(|b| x <= *b) {
        Some(i) => 3 - i as u32,
        None => 0,
    }
}

/// (safety level, speed level, smoothness level), each in 0..=3.
pub fn behavioral_signature(m: &MetricsRecord, cfg: &ScoringConfig) -> Result<FeatureSignature, ScoreError> {
    let b = &cfg.bands;
    let ttc = metric(m, CRITICAL_TTC)?;
    let emergencies = metric(m, EMERGENCY_STOPS)? + metric(m, EMERGENCY_BRAKING)?;
    let safety = if metric(m, COLLISIONS)? > 0.0 || metric(m, TELEPORTS)? > 0.0 {
        0
    } else if ttc > b.ttc_weak || emergencies > b.emergency_weak {
        1
    } else if ttc > b.ttc_good {
        2
    } else {
        3
    };
    let speed = band_level((metric(m, AVG_SPEED)? - cfg.target_speed).abs(), &b.speed_bands);
    let smooth = band_level(metric(m, SPEED_VARIANCE)?, &b.variance_bands);
    Ok(FeatureSignature(vec![safety, speed, smooth]))
}

/// Score and signature for one metrics record.
pub fn score_driving(m: &MetricsRecord, cfg: &ScoringConfig) -> Result<(f64, FeatureSignature), ScoreError> {
    Ok((combined_score(m, cfg)?, behavioral_signature(m, cfg)?))
}

/// Scores many records; fans out over the thread pool when enabled.
pub fn score_batch(batch: &[MetricsRecord], cfg: &ScoringConfig) -> Vec<Result<(f64, FeatureSignature), ScoreError>> {
    par::map(batch, |m| score_driving(m, cfg))
}

pub fn score_batch_seq(batch: &[MetricsRecord], cfg: &ScoringConfig) -> Vec<Result<(f64, FeatureSignature), ScoreError>> {
    par::map_seq(batch, |m| score_driving(m, cfg))
}
