//! Pair of unbalanced Mach-Zehnder interferometers: transforms cascade pair
//! events into coincidence records with the three-peak structure and the
//! phase-dependent central-peak interference.
//!
//! Interference is implemented at the coincidence level. Per pair the route
//! class is drawn as {SL: 1/4, LS: 1/4, short-short-or-long-long candidate:
//! 1/2}; SL and LS are recorded with the long-arm delay on the respective
//! detector, and the indistinguishable candidate survives with probability
//! (1 + V·cos(φa + φb))/2, survivors split evenly between SS and LL.
//! Non-survivors exit the unmonitored ports and are counted as discarded.
//! This is exact when the long-short delay far exceeds the pair correlation
//! time, which the configuration check enforces.

use crate::cascade::PairEvent;
use crate::corr;
use crate::rng::rng_from_seed;
use crate::ttag::{ClickStream, TimeTagRecord};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::Serialize;
use std::io::Write;
use thiserror::Error;

/// Interferometer pair configuration.
#[derive(Debug, Clone, Copy)]
pub struct FransonConfig {
    /// Long-short arm delay ΔT (ps).
    pub delta_t_ps: u64,
    /// Phase of interferometer a (radians).
    pub phi_a: f64,
    /// Phase of interferometer b (radians).
    pub phi_b: f64,
    /// Intrinsic interference visibility V in [0, 1].
    pub visibility: f64,
    /// Gaussian detection-time jitter sigma (ps).
    pub jitter_sigma_ps: f64,
}

impl Default for FransonConfig {
    fn default() -> Self {
        FransonConfig {
            delta_t_ps: 47_000,
            phi_a: 0.0,
            phi_b: 0.0,
            visibility: 0.926,
            jitter_sigma_ps: 0.0,
        }
    }
}

impl FransonConfig {
    pub fn validate(&self) -> Result<(), FransonError> {
        if self.delta_t_ps == 0 {
            return Err(FransonError::BadConfig("delta_t_ps must be positive"));
        }
        if !(0.0..=1.0).contains(&self.visibility) {
            return Err(FransonError::BadConfig("visibility must lie in [0, 1]"));
        }
        let jitter_ok = self.jitter_sigma_ps.is_finite() && self.jitter_sigma_ps >= 0.0;
        if !jitter_ok || !self.phi_a.is_finite() || !self.phi_b.is_finite() {
            return Err(FransonError::BadConfig("jitter and phases must be finite"));
        }
        Ok(())
    }

    /// The delay must far exceed the pair correlation time for the
    /// coincidence-level interference model to hold. Checked against the
    /// late-photon decay rate (1/s); violation deserves a warning upstream.
    pub fn delay_is_adequate(&self, gamma_decay: f64) -> bool {
        let lifetime_ps = 1e12 / gamma_decay;
        self.delta_t_ps as f64 >= 5.0 * lifetime_ps
    }

    pub fn phase_sum(&self) -> f64 {
        self.phi_a + self.phi_b
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PeakClass {
    Left,
    Central,
    Right,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum PathPair {
    /// Indistinguishable short-short / long-long central class.
    SsOrLl,
    /// Short on a, long on b.
    Sl,
    /// Long on a, short on b.
    Ls,
}

/// One recorded coincidence after the interferometers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FransonOutcome {
    pub detect_a_ps: i64,
    pub detect_b_ps: i64,
    pub peak_class: PeakClass,
    pub path_pair: PathPair,
}

/// Outcomes plus the count of pairs lost to the unmonitored ports.
#[derive(Debug, Clone)]
pub struct TransformResult {
    pub outcomes: Vec<FransonOutcome>,
    pub discarded: u64,
}

#[derive(Debug, Error)]
pub enum FransonError {
    #[error("invalid config: {0}")]
    BadConfig(&'static str),
    #[error("phase list must be non-empty")]
    EmptyPhaseList,
    #[error("histogram error: {0}")]
    Corr(#[from] corr::CorrError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn classify(diff_ps: i64, delta_t_ps: u64) -> PeakClass {
    let half = delta_t_ps as i64 / 2;
    if diff_ps >= half {
        PeakClass::Right
    } else if diff_ps <= -half {
        PeakClass::Left
    } else {
        PeakClass::Central
    }
}

/// Send pairs through the interferometer pair.
///
/// The early photon enters interferometer a, the late photon interferometer
/// b. Detection times carry the long-arm delay and the configured jitter;
/// the peak class is derived from the recorded time difference.
pub fn transform_pairs(
    pairs: &[PairEvent],
    config: &FransonConfig,
    seed: u64,
) -> Result<TransformResult, FransonError> {
    config.validate()?;
    let mut rng = rng_from_seed(seed);
    let jitter = if config.jitter_sigma_ps > 0.0 {
        Some(Normal::new(0.0, config.jitter_sigma_ps).expect("validated sigma"))
    } else {
        None
    };
    let survival = (1.0 + config.visibility * config.phase_sum().cos()) / 2.0;
    let delta_t = config.delta_t_ps as i64;

    let mut outcomes = Vec::with_capacity(pairs.len());
    let mut discarded = 0u64;
    for pair in pairs {
        let route = rng.gen::<f64>();
        let (long_a, long_b, path_pair) = if route < 0.25 {
            // Short on a, long on b.
            (false, true, PathPair::Sl)
        } else if route < 0.5 {
            (true, false, PathPair::Ls)
        } else {
            if rng.gen::<f64>() >= survival {
                discarded += 1;
                continue;
            }
            let both_long = rng.gen::<bool>();
            (both_long, both_long, PathPair::SsOrLl)
        };
        let mut detect_a = pair.t_early_ps as i64 + if long_a { delta_t } else { 0 };
        let mut detect_b = pair.t_late_ps as i64 + if long_b { delta_t } else { 0 };
        if let Some(normal) = &jitter {
            detect_a += normal.sample(&mut rng).round() as i64;
            detect_b += normal.sample(&mut rng).round() as i64;
        }
        outcomes.push(FransonOutcome {
            detect_a_ps: detect_a,
            detect_b_ps: detect_b,
            peak_class: classify(detect_b - detect_a, config.delta_t_ps),
            path_pair,
        });
    }
    Ok(TransformResult { outcomes, discarded })
}

/// Convert outcomes to the two detector click streams (a on channel 0, b on
/// channel 1). Rare jitter-induced negative times clamp to zero.
pub fn outcomes_to_streams(outcomes: &[FransonOutcome]) -> (ClickStream, ClickStream) {
    let a_records: Vec<TimeTagRecord> = outcomes
        .iter()
        .map(|o| TimeTagRecord { timestamp_ps: o.detect_a_ps.max(0) as u64, channel: 0 })
        .collect();
    let b_records: Vec<TimeTagRecord> = outcomes
        .iter()
        .map(|o| TimeTagRecord { timestamp_ps: o.detect_b_ps.max(0) as u64, channel: 1 })
        .collect();
    let mut a = ClickStream::from_records(a_records, 0, "franson detector a");
    a.channel_labels.insert(0, "franson a".into());
    let mut b = ClickStream::from_records(b_records, 0, "franson detector b");
    b.channel_labels.insert(1, "franson b".into());
    let duration = a.duration_ps.max(b.duration_ps);
    a.duration_ps = duration;
    b.duration_ps = duration;
    (a, b)
}

/// Central-peak coincidence window: full width at half maximum of 12 ns.
pub const CENTRAL_WINDOW_HALF_WIDTH_PS: i64 = 6_000;

/// Count central-peak coincidences within the 12 ns window.
pub fn central_peak_count(outcomes: &[FransonOutcome]) -> u64 {
    outcomes
        .iter()
        .filter(|o| (o.detect_b_ps - o.detect_a_ps).abs() <= CENTRAL_WINDOW_HALF_WIDTH_PS)
        .count() as u64
}

/// Scan the phase sum Φ = φa + φb and record the central-peak area per
/// point, computed through a coincidence histogram and the 12 ns peak
/// window.
pub fn interference_curve(
    pairs: &[PairEvent],
    config_base: &FransonConfig,
    phi_sum_list: &[f64],
    seed: u64,
) -> Result<Vec<(f64, u64)>, FransonError> {
    if phi_sum_list.is_empty() {
        return Err(FransonError::EmptyPhaseList);
    }
    config_base.validate()?;
    let mut curve = Vec::with_capacity(phi_sum_list.len());
    for (i, &phi) in phi_sum_list.iter().enumerate() {
        let config = FransonConfig { phi_a: phi, phi_b: 0.0, ..*config_base };
        let result = transform_pairs(pairs, &config, crate::rng::derive_seed(seed, i as u64))?;
        let (a, b) = outcomes_to_streams(&result.outcomes);
        let range = (config.delta_t_ps as i64 + 20_000 + 499) / 500 * 500;
        let hist = corr::cross_histogram(&a, &b, -range, range, 500)?;
        let area = corr::peak_area(&hist, 0, CENTRAL_WINDOW_HALF_WIDTH_PS)?;
        curve.push((phi, area));
    }
    Ok(curve)
}

/// Export outcomes as CSV with columns
/// `detect_a_ps,detect_b_ps,peak_class,path_pair`.
pub fn write_outcomes_csv<W: Write>(
    outcomes: &[FransonOutcome],
    sink: &mut W,
) -> Result<(), FransonError> {
    writeln!(sink, "detect_a_ps,detect_b_ps,peak_class,path_pair")?;
    for o in outcomes {
        let class = match o.peak_class {
            PeakClass::Left => "left",
            PeakClass::Central => "central",
            PeakClass::Right => "right",
        };
        let path = match o.path_pair {
            PathPair::SsOrLl => "ss_or_ll",
            PathPair::Sl => "sl",
            PathPair::Ls => "ls",
        };
        writeln!(sink, "{},{},{},{}", o.detect_a_ps, o.detect_b_ps, class, path)?;
    }
    Ok(())
}
