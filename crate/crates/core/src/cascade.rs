//! Analytic two-photon cascade pair source.
//!
//! Inelastic scattering emits temporally ordered photon pairs on the two
//! sidebands: pair start times form a Poisson process at the pair rate, and
//! the late photon follows the early one with an exponential delay at the
//! Purcell-scaled decay rate. Pair emission is treated as Poissonian with no
//! dead time between pairs; at the modeled operating point
//! pair_rate × lifetime ≈ 1e-4, so overlap corrections are negligible.

use crate::physpar::{self, SystemParams};
use crate::rng::{derive_seed, rng_from_seed};
use crate::ttag::{self, ClickStream, DetectorConfig, TimeTagRecord, TtagError};
use num_complex::Complex64;
use rand::Rng as _;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

/// Sideband label; Plus is the sideband at +|Δa| from the drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Sideband {
    Plus,
    Minus,
}

impl Sideband {
    pub fn other(self) -> Sideband {
        match self {
            Sideband::Plus => Sideband::Minus,
            Sideband::Minus => Sideband::Plus,
        }
    }
}

/// Spectral filter chain in front of the detectors. The two knobs are kept
/// independent: the notch suppression of the elastic line and the
/// transmission of the inelastic sidebands.
#[derive(Debug, Clone, Copy)]
pub struct FilterConfig {
    /// Fraction of the elastic line removed by the notch filter.
    pub elastic_suppression: f64,
    /// Transmission of the inelastic sidebands through the filter chain.
    pub inelastic_transmission: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { elastic_suppression: 0.995, inelastic_transmission: 0.995 }
    }
}

/// Analytic pair-source model.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CascadePairModel {
    /// Pair emission rate s·R_c/2 (pairs/s).
    pub pair_rate: f64,
    /// Conditional decay rate of the late photon (1/s).
    pub gamma_decay: f64,
    /// Sideband offset magnitude |Δa| (MHz); photons sit at ±offset.
    pub sideband_offset_mhz: f64,
    /// Residual elastic (Poissonian) photon rate as a fraction of the
    /// inelastic photon rate after filtering.
    pub elastic_background_fraction: f64,
    /// Which sideband the early photon carries.
    pub early_sideband: Sideband,
}

/// One ordered pair emission.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PairEvent {
    pub t_early_ps: u64,
    pub t_late_ps: u64,
    pub sideband_early: Sideband,
    pub sideband_late: Sideband,
}

/// Output of [`to_click_streams`].
#[derive(Debug, Clone)]
pub enum CascadeStreams {
    /// Sideband-separated detection: early sideband on channel 0, late on
    /// channel 1.
    Split { early: ClickStream, late: ClickStream },
    /// Notch-only detection: both photons plus the residual elastic
    /// background on a single channel.
    Merged(ClickStream),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamMode {
    Split,
    Merged,
}

#[derive(Debug, Error)]
pub enum CascadeError {
    #[error("invalid model: {0}")]
    BadModel(&'static str),
    #[error("duration must be positive")]
    BadDuration,
    #[error("parameter error: {0}")]
    Param(#[from] physpar::ParamError),
    #[error("stream error: {0}")]
    Ttag(#[from] TtagError),
}

impl CascadePairModel {
    pub fn validate(&self) -> Result<(), CascadeError> {
        if self.pair_rate.is_nan() || self.pair_rate < 0.0 {
            return Err(CascadeError::BadModel("pair_rate must be non-negative"));
        }
        if self.gamma_decay.is_nan() || self.gamma_decay <= 0.0 {
            return Err(CascadeError::BadModel("gamma_decay must be positive"));
        }
        if !(0.0..=1.0).contains(&self.elastic_background_fraction) {
            return Err(CascadeError::BadModel(
                "elastic_background_fraction must lie in [0, 1]",
            ));
        }
        Ok(())
    }

    /// Conditional lifetime of the late photon, 1/gamma_decay, in ns.
    pub fn lifetime_ns(&self) -> f64 {
        1e9 / self.gamma_decay
    }
}

/// Build the pair-source model from system parameters and the filter chain.
///
/// The pair rate is s·R_c/2 in the collection-rate convention; the decay
/// rate is the physical 2π·Γ_eff(Δc) so that wavepacket shapes come out in
/// real time.
pub fn pair_model_from_params(
    params: &SystemParams,
    filter: &FilterConfig,
) -> Result<CascadePairModel, CascadeError> {
    params.validate()?;
    let gamma_eff = physpar::effective_purcell_gamma(params, params.delta_c)?;
    let s = physpar::saturation(params.omega, params.delta_a, gamma_eff)?;
    let r_c = physpar::collection_rate(params)?;
    let model = CascadePairModel {
        pair_rate: s * r_c / 2.0,
        gamma_decay: 2.0 * PI * gamma_eff * 1e6,
        sideband_offset_mhz: params.delta_a.abs(),
        elastic_background_fraction: (1.0 - filter.elastic_suppression)
            / filter.inelastic_transmission,
        early_sideband: Sideband::Plus,
    };
    model.validate()?;
    Ok(model)
}

/// Sample ordered pair emissions over `duration_s` seconds.
pub fn sample_pairs(
    model: &CascadePairModel,
    duration_s: f64,
    seed: u64,
) -> Result<Vec<PairEvent>, CascadeError> {
    model.validate()?;
    if duration_s.is_nan() || duration_s <= 0.0 {
        return Err(CascadeError::BadDuration);
    }
    let mut pairs = Vec::new();
    if model.pair_rate == 0.0 {
        return Ok(pairs);
    }
    let mut rng = rng_from_seed(seed);
    let gap = Exp::new(model.pair_rate).expect("validated rate");
    let delay = Exp::new(model.gamma_decay).expect("validated rate");
    let mut t = 0.0f64;
    loop {
        t += gap.sample(&mut rng);
        if t >= duration_s {
            break;
        }
        let dt = delay.sample(&mut rng);
        let t_early_ps = (t * 1e12) as u64;
        let t_late_ps = ((t + dt) * 1e12) as u64;
        pairs.push(PairEvent {
            t_early_ps,
            t_late_ps,
            sideband_early: model.early_sideband,
            sideband_late: model.early_sideband.other(),
        });
    }
    Ok(pairs)
}

/// Normalized conditional wavepacket of the late photon,
/// ψ(τ) = θ(τ)·√Γ·e^(−Γτ/2) with ∫|ψ|²dτ = 1 over τ in seconds.
pub fn joint_amplitude(tau_ps: f64, model: &CascadePairModel) -> Complex64 {
    if tau_ps < 0.0 {
        return Complex64::new(0.0, 0.0);
    }
    let tau_s = tau_ps * 1e-12;
    let gamma = model.gamma_decay;
    Complex64::new(gamma.sqrt() * (-gamma * tau_s / 2.0).exp(), 0.0)
}

/// Convert pair events to detector click streams.
///
/// Both photons pass the detector chain (efficiency thinning, dark counts,
/// jitter, dead time). In merged mode a residual elastic background is added
/// as a Poisson process at elastic_background_fraction × the inelastic
/// photon rate before the detector chain.
pub fn to_click_streams(
    pairs: &[PairEvent],
    model: &CascadePairModel,
    detector: &DetectorConfig,
    mode: StreamMode,
    duration_ps: u64,
    seed: u64,
) -> Result<CascadeStreams, CascadeError> {
    model.validate()?;
    let duration_ps =
        duration_ps.max(pairs.iter().map(|p| p.t_late_ps).max().unwrap_or(0));

    match mode {
        StreamMode::Split => {
            let early_records: Vec<TimeTagRecord> = pairs
                .iter()
                .map(|p| TimeTagRecord { timestamp_ps: p.t_early_ps, channel: 0 })
                .collect();
            let late_records: Vec<TimeTagRecord> = pairs
                .iter()
                .map(|p| TimeTagRecord { timestamp_ps: p.t_late_ps, channel: 1 })
                .collect();
            let mut early = ClickStream::from_records(early_records, duration_ps, "cascade early");
            early
                .channel_labels
                .insert(0, format!("sideband {:?} (early)", model.early_sideband));
            let mut late = ClickStream::from_records(late_records, duration_ps, "cascade late");
            late.channel_labels
                .insert(1, format!("sideband {:?} (late)", model.early_sideband.other()));
            let early = ttag::apply_detector(&early, detector, derive_seed(seed, 0))?;
            let late = ttag::apply_detector(&late, detector, derive_seed(seed, 1))?;
            Ok(CascadeStreams::Split { early, late })
        }
        StreamMode::Merged => {
            let mut records: Vec<TimeTagRecord> = Vec::with_capacity(pairs.len() * 2);
            for p in pairs {
                records.push(TimeTagRecord { timestamp_ps: p.t_early_ps, channel: 0 });
                records.push(TimeTagRecord { timestamp_ps: p.t_late_ps, channel: 0 });
            }
            // Residual elastic leakage, Poissonian and uncorrelated.
            let background_rate = model.elastic_background_fraction * 2.0 * model.pair_rate;
            if background_rate > 0.0 && duration_ps > 0 {
                let mut rng = rng_from_seed(derive_seed(seed, 2));
                let expected = background_rate * duration_ps as f64 * 1e-12;
                let n = ttag::sample_poisson(expected, &mut rng);
                for _ in 0..n {
                    records.push(TimeTagRecord {
                        timestamp_ps: rng.gen_range(0..=duration_ps),
                        channel: 0,
                    });
                }
            }
            let mut stream = ClickStream::from_records(records, duration_ps, "cascade merged");
            stream.channel_labels.insert(0, "cavity output (notch only)".into());
            let stream = ttag::apply_detector(&stream, detector, derive_seed(seed, 3))?;
            Ok(CascadeStreams::Merged(stream))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corr;

    fn reference_model() -> CascadePairModel {
        pair_model_from_params(&SystemParams::reference(), &FilterConfig::default()).unwrap()
    }

    #[test]
    fn model_matches_reference_budget() {
        let model = reference_model();
        assert!((model.pair_rate - 3.6e4).abs() < 0.2e4, "pair rate {}", model.pair_rate);
        assert!((model.lifetime_ns() - 2.93).abs() < 0.05, "lifetime {}", model.lifetime_ns());
        assert!((model.elastic_background_fraction - 0.005).abs() < 3e-5);
        assert_eq!(model.sideband_offset_mhz, 93.7);
    }

    #[test]
    fn zero_drive_gives_zero_pairs() {
        let params = SystemParams { omega: 0.0, ..SystemParams::reference() };
        let model = pair_model_from_params(&params, &FilterConfig::default()).unwrap();
        assert_eq!(model.pair_rate, 0.0);
        let pairs = sample_pairs(&model, 1.0, 5).unwrap();
        assert!(pairs.is_empty());
    }

    #[test]
    fn lifetime_grows_with_cavity_detuning() {
        let params = SystemParams::reference();
        let mut prev = 0.0;
        for dc in [0.0, 150.0, 330.0] {
            let model =
                pair_model_from_params(&params.with_delta_c(dc), &FilterConfig::default())
                    .unwrap();
            assert!(model.lifetime_ns() > prev);
            prev = model.lifetime_ns();
        }
        // Free-space limit: 26.5 ns.
        let far = pair_model_from_params(
            &params.with_delta_c(1e9),
            &FilterConfig::default(),
        )
        .unwrap();
        assert!((far.lifetime_ns() - 26.53).abs() < 0.05);
    }

    #[test]
    fn pair_statistics() {
        let model = reference_model();
        let duration = 0.5;
        let pairs = sample_pairs(&model, duration, 42).unwrap();
        let expected = model.pair_rate * duration;
        assert!(
            ((pairs.len() as f64) - expected).abs() < 4.0 * expected.sqrt(),
            "count {} vs expected {expected}",
            pairs.len()
        );
        // Temporal order invariant and exponential delay mean.
        let mut sum = 0.0;
        for p in &pairs {
            assert!(p.t_late_ps >= p.t_early_ps);
            assert_eq!(p.sideband_early, Sideband::Plus);
            assert_eq!(p.sideband_late, Sideband::Minus);
            sum += (p.t_late_ps - p.t_early_ps) as f64;
        }
        let mean_ps = sum / pairs.len() as f64;
        let want_ps = 1e12 / model.gamma_decay;
        let se = want_ps / (pairs.len() as f64).sqrt();
        assert!((mean_ps - want_ps).abs() < 3.0 * se, "mean {mean_ps} want {want_ps}");
    }

    #[test]
    fn sampling_is_deterministic() {
        let model = reference_model();
        let a = sample_pairs(&model, 0.05, 7).unwrap();
        let b = sample_pairs(&model, 0.05, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_pairs(&model, 0.05, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn joint_amplitude_is_normalized() {
        let model = reference_model();
        assert_eq!(joint_amplitude(-1.0, &model).norm(), 0.0);
        // Simpson quadrature of |psi|^2 out to 40 lifetimes.
        let lifetime_ps = 1e12 / model.gamma_decay;
        let n = 4000usize;
        let h = 40.0 * lifetime_ps / n as f64;
        let f = |tau: f64| joint_amplitude(tau, &model).norm_sqr() * 1e-12; // per ps
        let mut integral = f(0.0) + f(40.0 * lifetime_ps);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            integral += w * f(k as f64 * h);
        }
        integral *= h / 3.0;
        assert!((integral - 1.0).abs() < 1e-9, "integral {integral}");
        // Exponential law.
        let ratio = joint_amplitude(lifetime_ps, &model).norm_sqr()
            / joint_amplitude(0.0, &model).norm_sqr();
        assert!((ratio - (-1.0f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn split_cross_correlation_is_one_sided_exponential() {
        let model = reference_model();
        let pairs = sample_pairs(&model, 2.0, 11).unwrap();
        let streams = to_click_streams(
            &pairs,
            &model,
            &DetectorConfig::default(),
            StreamMode::Split,
            2_000_000_000_000,
            13,
        )
        .unwrap();
        let CascadeStreams::Split { early, late } = streams else { panic!("split mode") };
        let hist = corr::cross_histogram(&early, &late, -20_000, 20_000, 250).unwrap();
        // Negative side holds no pair signal: only cross-pair accidentals,
        // far below the positive side.
        let negative: u64 = hist.counts[..80].iter().sum();
        let positive: u64 = hist.counts[80..].iter().sum();
        let accidental = model.pair_rate * model.pair_rate * 2.0 * 20e-9;
        assert!(
            (negative as f64) < accidental + 5.0 * accidental.sqrt().max(1.0),
            "negative side {negative} vs accidental level {accidental}"
        );
        assert!(negative as f64 <= 0.005 * positive as f64);
        // Positive side fits to the model decay rate within 5%.
        let xs: Vec<f64> = (80..160).map(|i| hist.bin_center_ps(i) * 1e-12).collect();
        let ys: Vec<f64> = hist.counts[80..160].iter().map(|&c| c as f64).collect();
        let weights = crate::fit::poisson_weights(&ys);
        let fit = crate::fit::fit_exponential(&xs, &ys, Some(&weights)).unwrap();
        assert!(fit.converged);
        let rate = fit.param("rate");
        assert!(
            (rate / model.gamma_decay - 1.0).abs() < 0.05,
            "rate {rate} vs {}",
            model.gamma_decay
        );
    }

    #[test]
    fn zero_efficiency_empties_streams() {
        let model = reference_model();
        let pairs = sample_pairs(&model, 0.01, 3).unwrap();
        let detector = DetectorConfig { efficiency: 0.0, ..DetectorConfig::default() };
        match to_click_streams(&pairs, &model, &detector, StreamMode::Split, 0, 4).unwrap() {
            CascadeStreams::Split { early, late } => {
                assert!(early.is_empty());
                assert!(late.is_empty());
            }
            _ => panic!("split mode"),
        }
    }

    #[test]
    fn merged_stream_is_bunched() {
        let model = reference_model();
        let pairs = sample_pairs(&model, 1.0, 19).unwrap();
        let streams = to_click_streams(
            &pairs,
            &model,
            &DetectorConfig::default(),
            StreamMode::Merged,
            1_000_000_000_000,
            21,
        )
        .unwrap();
        let CascadeStreams::Merged(stream) = streams else { panic!("merged mode") };
        let hist = corr::auto_histogram(&stream, -20_000, 20_000, 1000).unwrap();
        let norm = corr::g2_normalize(&hist).unwrap();
        let g2_zero = norm.g2_at(0).unwrap();
        assert!(g2_zero >= 10.0, "g2(0) = {g2_zero}");
    }

    #[test]
    fn thinning_composes_in_distribution() {
        // Efficiency p then q versus p·q: compare inter-click distributions
        // with a two-sample KS test.
        let model = reference_model();
        let pairs = sample_pairs(&model, 1.0, 23).unwrap();
        let duration = 1_000_000_000_000;
        let thin = |pairs: &[PairEvent], effs: &[f64], seed: u64| -> Vec<u64> {
            let mut streams = to_click_streams(
                pairs,
                &model,
                &DetectorConfig::default(),
                StreamMode::Merged,
                duration,
                seed,
            )
            .unwrap();
            for (i, &e) in effs.iter().enumerate() {
                let CascadeStreams::Merged(s) = &streams else { unreachable!() };
                let config = DetectorConfig { efficiency: e, ..DetectorConfig::default() };
                let thinned =
                    ttag::apply_detector(s, &config, derive_seed(seed, 100 + i as u64)).unwrap();
                streams = CascadeStreams::Merged(thinned);
            }
            let CascadeStreams::Merged(s) = streams else { unreachable!() };
            s.records.windows(2).map(|w| w[1].timestamp_ps - w[0].timestamp_ps).collect()
        };
        let two_step = thin(&pairs, &[0.7, 0.6], 31);
        let one_step = thin(&pairs, &[0.42], 37);

        let mut a = two_step.clone();
        let mut b = one_step.clone();
        a.sort_unstable();
        b.sort_unstable();
        // KS statistic.
        let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
        while i < a.len() && j < b.len() {
            if a[i] <= b[j] {
                i += 1;
            } else {
                j += 1;
            }
            let fa = i as f64 / a.len() as f64;
            let fb = j as f64 / b.len() as f64;
            d = d.max((fa - fb).abs());
        }
        let n = a.len() as f64;
        let m = b.len() as f64;
        // alpha = 0.001 critical value.
        let critical = 1.949 * ((n + m) / (n * m)).sqrt();
        assert!(d < critical, "KS statistic {d} exceeds {critical}");
    }
}
