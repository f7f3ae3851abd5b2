//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured values. Tolerances are pinned here, not configurable.

use pairsim::bell::{self, ChshBasis, CoincidenceTable};
use pairsim::cascade::{self, CascadeStreams, FilterConfig, StreamMode};
use pairsim::corr;
use pairsim::fit::{self, models};
use pairsim::franson::{self, FransonConfig, PathPair, PeakClass};
use pairsim::mcwf::{self, JumpChannel};
use pairsim::physpar::{self, reference, SystemParams};
use pairsim::rng::{derive_seed, rng_from_seed};
use pairsim::ttag::{self, ClickStream, DetectorConfig, TimeTagRecord, TtagError};
use rand::Rng as _;
use std::f64::consts::PI;

fn within(value: f64, target: f64, relative: f64) -> bool {
    (value - target).abs() <= relative * target.abs()
}

/// Coincidence counts of the reference CHSH measurement run: rows are φb in
/// {0, π/2, π, 3π/2}, columns φa in {−π/4, π/4, 3π/4, 5π/4}.
fn reference_chsh_table() -> CoincidenceTable {
    let phi_a = [-PI / 4.0, PI / 4.0, 3.0 * PI / 4.0, 5.0 * PI / 4.0];
    let phi_b = [0.0, PI / 2.0, PI, 3.0 * PI / 2.0];
    let counts: [[u64; 4]; 4] = [
        [190, 205, 46, 40],
        [256, 38, 24, 160],
        [60, 56, 206, 239],
        [39, 209, 220, 49],
    ];
    let mut table = CoincidenceTable::new();
    for (row, &pb) in phi_b.iter().enumerate() {
        for (col, &pa) in phi_a.iter().enumerate() {
            table.insert(pa, pb, counts[row][col]);
        }
    }
    table
}

#[test]
fn acceptance_01_closed_form_chain() {
    let params = SystemParams::reference();

    let c = physpar::cooperativity(params.g, params.kappa, params.gamma).unwrap();
    assert!((c - 3969.0 / 984.0).abs() < 1e-12, "C must be exact arithmetic");
    assert!((c - 4.03).abs() < 0.005);
    assert!((c - reference::COOPERATIVITY).abs() <= reference::COOPERATIVITY_SIGMA);

    let gamma_purcell = physpar::purcell_gamma(&params).unwrap();
    assert!((gamma_purcell - (2.0 * c + 1.0) * 2.0 * params.gamma).abs() < 1e-12);
    let s = physpar::saturation(params.omega, params.delta_a, gamma_purcell).unwrap();
    let s_exact = (2.0 * params.omega * params.omega / (gamma_purcell * gamma_purcell))
        / (1.0 + (2.0 * params.delta_a / gamma_purcell).powi(2));
    assert!((s - s_exact).abs() < 1e-15, "s must be exact arithmetic");
    assert!((s - reference::SATURATION).abs() <= reference::SATURATION_SIGMA);
    assert!((s - 0.0543).abs() < 3e-4, "s = {s} vs quoted 0.0543");

    let r_c = physpar::collection_rate(&params).unwrap();
    let photon_rate = s * r_c;
    let pair_rate = photon_rate / 2.0;
    let fiber = physpar::fiber_pair_rate(&params).unwrap();
    let detected = physpar::detected_pair_rate(&params).unwrap();
    assert!(within(photon_rate, 7.2e4, 0.05), "s·R_c = {photon_rate}");
    assert!(within(pair_rate, 3.6e4, 0.05), "pair rate = {pair_rate}");
    assert!(within(fiber, 5.8e3, 0.05), "fiber pair rate = {fiber}");
    assert!(within(detected, 16.1, 0.05), "detected pair rate = {detected}");
    assert!(detected > 16.0);

    println!(
        "acceptance 1 [closed-form chain]: PASS — C = {c:.4}, s = {s:.4}, \
         s·R_c = {photon_rate:.3e}/s, pairs = {pair_rate:.3e}/s, \
         fiber = {fiber:.3e}/s, detected = {detected:.2}/s"
    );
}

#[test]
fn acceptance_02_chsh_determinism() {
    let table = reference_chsh_table();
    let result = bell::chsh(&table, &ChshBasis::reference()).unwrap();
    assert!(
        (result.s_value - 2.607).abs() <= 0.005,
        "S = {} vs 2.607 ± 0.005",
        result.s_value
    );
    assert!(
        result.s_sigma >= 0.05 && result.s_sigma <= 0.09,
        "sigma_S = {} outside [0.05, 0.09]",
        result.s_sigma
    );
    println!(
        "acceptance 2 [CHSH determinism]: PASS — S = {:.4} ± {:.4}",
        result.s_value, result.s_sigma
    );
}

#[test]
fn acceptance_03_end_to_end_entanglement() {
    let params = SystemParams::reference();
    let model = cascade::pair_model_from_params(&params, &FilterConfig::default()).unwrap();
    let config = FransonConfig { visibility: 0.926, delta_t_ps: 47_000, ..FransonConfig::default() };
    assert!(config.delay_is_adequate(model.gamma_decay));

    let counts_per_setting = 12_500usize;
    let needed = 16 * counts_per_setting; // 2e5 pairs
    let duration_s = needed as f64 * 1.05 / model.pair_rate + 0.01;
    let pairs = cascade::sample_pairs(&model, duration_s, 4001).unwrap();
    assert!(pairs.len() >= needed, "sampled {} pairs", pairs.len());

    let basis = ChshBasis::reference();
    let table =
        bell::table_from_franson(&pairs, &config, &basis, counts_per_setting, 4002).unwrap();
    let result = bell::chsh(&table, &basis).unwrap();
    let s_ideal = 2.0 * std::f64::consts::SQRT_2 * 0.926;
    assert!(
        (result.s_value - s_ideal).abs() <= 3.0 * result.s_sigma,
        "S = {} ± {} vs ideal {s_ideal}",
        result.s_value,
        result.s_sigma
    );

    let phases: Vec<f64> = (0..13).map(|i| 2.0 * PI * i as f64 / 12.0).collect();
    let curve =
        franson::interference_curve(&pairs[..needed], &config, &phases, 4003).unwrap();
    let phis: Vec<f64> = curve.iter().map(|&(p, _)| p).collect();
    let areas: Vec<f64> = curve.iter().map(|&(_, a)| a as f64).collect();
    let fitted = fit::fit_sinusoid(&phis, &areas).unwrap();
    assert!(fitted.converged);
    let visibility = fitted.param("visibility");
    assert!(
        (visibility - 0.926).abs() <= 0.03,
        "fitted visibility {visibility} vs 0.926 ± 0.03"
    );

    println!(
        "acceptance 3 [end-to-end entanglement]: PASS — S = {:.4} ± {:.4} \
         (ideal {s_ideal:.4}), fitted visibility = {visibility:.4}",
        result.s_value, result.s_sigma
    );
}

#[test]
fn acceptance_04_antibunching() {
    // The antibunching measurement configuration: cavity detuned by 330 MHz
    // from the drive (the sign puts the cavity above the drive, 236 MHz from
    // the atom, matching the measured antibunching configuration).
    let params = SystemParams::reference().with_delta_c(-330.0);
    let model = mcwf::build_model(&params, 2).unwrap();
    let ensemble = mcwf::run_ensemble(&model, 1000, 50_000, 4100).unwrap();
    assert!(
        ensemble.summary.cavity_counts >= 100_000,
        "need at least 1e5 cavity clicks, got {}",
        ensemble.summary.cavity_counts
    );

    // g²(τ) with 1 ns bins centered on zero delay.
    let hist = corr::auto_histogram(&ensemble.cavity_stream, -60_500, 60_500, 1_000).unwrap();
    let normalized = corr::g2_normalize(&hist).unwrap();
    let g2_zero = normalized.g2_at(0).unwrap();
    let g2_pass = g2_zero < 0.15;

    // Damped-cosine fit of the positive-delay side.
    let g2 = normalized.normalized.as_ref().unwrap();
    let zero_bin = normalized.bin_index(0).unwrap();
    let xs: Vec<f64> = (1..=50).map(|k| normalized.bin_center_ps(zero_bin + k) * 1e-3).collect();
    let ys: Vec<f64> = (1..=50).map(|k| g2[zero_bin + k]).collect();
    let fitted = fit::fit_damped_cosine(&xs, &ys).unwrap();
    let freq_mhz = fitted.param("frequency") / (2.0 * PI) * 1e3;
    let omega_prime = physpar::rabi_sideband(params.omega, params.delta_a);
    let freq_pass = (freq_mhz - omega_prime).abs() <= 0.05 * omega_prime;

    println!(
        "acceptance 4 [antibunching]: g2(0) = {g2_zero:.4} (< 0.15: {}), \
         oscillation = {freq_mhz:.1} MHz vs Ω' = {omega_prime:.1} MHz ± 5% ({})",
        if g2_pass { "pass" } else { "FAIL" },
        if freq_pass { "pass" } else { "FAIL" },
    );
    assert!(g2_pass, "g2(0) = {g2_zero} is not below 0.15");
    assert!(
        freq_pass,
        "acceptance 4 [antibunching]: FAIL — fitted oscillation {freq_mhz:.1} MHz is not \
         within 5% of Ω' = {omega_prime:.1} MHz. The pinned Hamiltonian dresses the atomic \
         line through the atom-cavity coupling, so the cavity-output correlation oscillates \
         at the pulled frequency (~84 MHz here, ~105 MHz at the opposite detuning sign, \
         ~106 MHz at zero detuning), never within 5% of √(Ω²+Δa²) at any measured \
         configuration. See the decisions ledger for the full analysis."
    );
    println!("acceptance 4 [antibunching]: PASS");
}

#[test]
fn acceptance_05_bunching() {
    let params = SystemParams::reference();
    // 0.5% elastic background.
    let filter = FilterConfig { elastic_suppression: 0.995, inelastic_transmission: 1.0 };
    let model = cascade::pair_model_from_params(&params, &filter).unwrap();
    assert!((model.elastic_background_fraction - 0.005).abs() < 1e-12);

    let duration_s = 2.0;
    let pairs = cascade::sample_pairs(&model, duration_s, 4200).unwrap();
    let streams = cascade::to_click_streams(
        &pairs,
        &model,
        &DetectorConfig::default(),
        StreamMode::Merged,
        (duration_s * 1e12) as u64,
        4201,
    )
    .unwrap();
    let CascadeStreams::Merged(stream) = streams else { panic!("merged mode") };
    let hist = corr::auto_histogram(&stream, -20_500, 20_500, 1_000).unwrap();
    let normalized = corr::g2_normalize(&hist).unwrap();
    let g2_zero = normalized.g2_at(0).unwrap();
    assert!(g2_zero >= 10.0, "g2(0) = {g2_zero} is not >= 10");
    println!("acceptance 5 [bunching]: PASS — merged-stream g2(0) = {g2_zero:.0} (>= 10)");
}

fn split_decay_time_ns(params: &SystemParams, n_pairs: usize, seed: u64) -> (f64, u64, u64) {
    let model = cascade::pair_model_from_params(params, &FilterConfig::default()).unwrap();
    let duration_s = n_pairs as f64 * 1.02 / model.pair_rate + 1e-3;
    let pairs = cascade::sample_pairs(&model, duration_s, seed).unwrap();
    let streams = cascade::to_click_streams(
        &pairs,
        &model,
        &DetectorConfig::default(),
        StreamMode::Split,
        (duration_s * 1e12) as u64,
        derive_seed(seed, 1),
    )
    .unwrap();
    let CascadeStreams::Split { early, late } = streams else { panic!("split mode") };
    let hist = corr::cross_histogram(&early, &late, -20_000, 80_000, 250).unwrap();
    let negative: u64 = hist.counts[..80].iter().sum();
    let positive: u64 = hist.counts[80..].iter().sum();
    let xs: Vec<f64> = (80..hist.counts.len()).map(|k| hist.bin_center_ps(k) * 1e-3).collect();
    let ys: Vec<f64> = hist.counts[80..].iter().map(|&c| c as f64).collect();
    let weights = fit::poisson_weights(&ys);
    let fitted = fit::fit_exponential(&xs, &ys, Some(&weights)).unwrap();
    assert!(fitted.converged);
    (1.0 / fitted.param("rate"), negative, positive)
}

#[test]
fn acceptance_06_wavepacket_compression() {
    let params = SystemParams::reference();

    // Fitted decay time at zero detuning for C = 4.03.
    let (decay_ns, negative, positive) = split_decay_time_ns(&params, 200_000, 4300);
    assert!(
        (2.6..=3.2).contains(&decay_ns),
        "decay time {decay_ns} ns outside [2.6, 3.2]"
    );

    // Negative-delay side holds no pair signal, only cross-pair accidentals.
    let model = cascade::pair_model_from_params(&params, &FilterConfig::default()).unwrap();
    let duration_s = 200_000.0 * 1.02 / model.pair_rate + 1e-3;
    let accidental = model.pair_rate * model.pair_rate * duration_s * 20e-9;
    assert!(
        (negative as f64) < accidental + 5.0 * accidental.sqrt().max(1.0),
        "negative side {negative} vs accidental level {accidental:.1}"
    );
    assert!((negative as f64) < 0.005 * positive as f64);

    // Cooperativity window: the model mapping C -> conditional lifetime.
    let lifetime_for = |c_target: f64| -> f64 {
        let g = (c_target * 2.0 * params.kappa * params.gamma).sqrt();
        let p = SystemParams { g, ..params.clone() };
        cascade::pair_model_from_params(&p, &FilterConfig::default()).unwrap().lifetime_ns()
    };
    let high_c = lifetime_for(4.9);
    let low_c = lifetime_for(3.3);
    assert!(high_c >= 2.4, "C = 4.9 lifetime {high_c} ns");
    assert!(low_c <= 3.5, "C = 3.3 lifetime {low_c} ns");

    // Strictly increasing decay time with cavity detuning.
    let (decay_150, _, _) = split_decay_time_ns(&params.with_delta_c(150.0), 100_000, 4301);
    let (decay_330, _, _) = split_decay_time_ns(&params.with_delta_c(330.0), 100_000, 4302);
    assert!(
        decay_ns < decay_150 && decay_150 < decay_330,
        "decay times not increasing: {decay_ns}, {decay_150}, {decay_330}"
    );

    println!(
        "acceptance 6 [wavepacket compression]: PASS — decay(Δc=0) = {decay_ns:.3} ns in \
         [2.6, 3.2]; C = 4.9 → {high_c:.2} ns, C = 3.3 → {low_c:.2} ns; \
         broadening {decay_ns:.2} → {decay_150:.2} → {decay_330:.2} ns; \
         negative side {negative} counts (accidental level)"
    );
}

#[test]
fn acceptance_07_rate_vs_detuning_fit() {
    let truth = SystemParams { eta_total: 0.03, ..SystemParams::reference() };
    let detunings: Vec<f64> = (-8..=8).map(|i| i as f64 * 50.0).collect();
    let mut rng = rng_from_seed(4400);
    let rates: Vec<f64> = detunings
        .iter()
        .map(|&dc| {
            let r = physpar::detected_pair_rate(&truth.with_delta_c(dc)).unwrap();
            let noise: f64 = rng.gen::<f64>() + rng.gen::<f64>() + rng.gen::<f64>()
                + rng.gen::<f64>()
                + rng.gen::<f64>()
                + rng.gen::<f64>()
                - 3.0; // Irwin-Hall(6), near-Gaussian, sigma = sqrt(1/2)
            let noise = noise * std::f64::consts::SQRT_2; // unit sigma
            (r * (1.0 + 0.05 * noise)).max(0.0)
        })
        .collect();
    let fitted = fit::fit_rate_vs_detuning(&detunings, &rates, &truth).unwrap();
    assert!(fitted.converged);
    let eta = fitted.param("eta");
    assert!(within(eta, 0.03, 0.10), "eta = {eta} vs 0.03 ± 10%");
    println!(
        "acceptance 7 [rate-vs-detuning fit]: PASS — eta = {eta:.5} from 5% noise \
         (injected 0.03)"
    );
}

#[test]
fn acceptance_08_oracle_equivalence() {
    // Parameter sets: reference; uncoupled atom; the Fig.-2-style cavity
    // detuning of 330 MHz magnitude in both sign conventions.
    let reference = SystemParams::reference();
    let sets: Vec<(&str, SystemParams, u64, u64)> = vec![
        ("reference", reference.clone(), 40, 50_000),
        ("g = 0", SystemParams { g: 0.0, ..reference.clone() }, 60, 50_000),
        ("Δc = +330", reference.with_delta_c(330.0), 200, 50_000),
        ("Δc = -330", reference.with_delta_c(-330.0), 200, 50_000),
    ];
    let mut report = Vec::new();
    for (label, params, n_traj, traj_ns) in sets {
        let model = mcwf::build_model(&params, 2).unwrap();
        let oracle = mcwf::steady_state_oracle(&model).unwrap();
        let ensemble = mcwf::run_ensemble(&model, n_traj, traj_ns, 4500).unwrap();
        for (channel, counts, measured) in [
            (
                JumpChannel::CavityEmission,
                ensemble.summary.cavity_counts,
                ensemble.summary.cavity_rate,
            ),
            (
                JumpChannel::FreeSpace,
                ensemble.summary.free_space_counts,
                ensemble.summary.free_space_rate,
            ),
        ] {
            let expected = oracle.rate(channel);
            if expected == 0.0 {
                assert_eq!(counts, 0, "{label}: {channel:?} should be silent");
                continue;
            }
            let standard_error = expected / (counts.max(1) as f64).sqrt();
            assert!(
                (measured - expected).abs() <= 3.0 * standard_error,
                "{label} {channel:?}: ensemble {measured:.4e} vs oracle {expected:.4e} \
                 (3 SE = {:.2e})",
                3.0 * standard_error
            );
        }
        report.push(format!(
            "{label}: cavity {:.3e}/s vs {:.3e}/s",
            ensemble.summary.cavity_rate,
            oracle.rate(JumpChannel::CavityEmission)
        ));
    }
    println!(
        "acceptance 8 [oracle equivalence]: PASS — all channel rates within 3 SE ({})",
        report.join("; ")
    );
}

#[test]
fn acceptance_09a_ttag_round_trip_and_errors() {
    let mut rng = rng_from_seed(4600);
    let mut records: Vec<TimeTagRecord> = (0..1_000_000)
        .map(|_| TimeTagRecord {
            timestamp_ps: rng.gen_range(0..10_000_000_000_000),
            channel: rng.gen_range(0..3),
        })
        .collect();
    records.sort_unstable();
    let stream = ClickStream::from_records(records, 10_000_000_000_000, "acceptance");
    let mut first = Vec::new();
    ttag::write_binary(&stream, &mut first).unwrap();
    let back = ttag::read_binary(&mut first.as_slice()).unwrap();
    let mut second = Vec::new();
    ttag::write_binary(&back, &mut second).unwrap();
    assert_eq!(first, second, "round trip must re-serialize byte-identically");

    let mut bad_magic = first.clone();
    bad_magic[1] = b'X';
    assert!(matches!(ttag::read_binary(&mut bad_magic.as_slice()), Err(TtagError::BadMagic)));
    let mut bad_version = first.clone();
    bad_version[4] = 200;
    assert!(matches!(
        ttag::read_binary(&mut bad_version.as_slice()),
        Err(TtagError::UnsupportedVersion(200))
    ));
    let truncated = &first[..first.len() - 1];
    assert!(matches!(ttag::read_binary(&mut &truncated[..]), Err(TtagError::Truncated(_))));

    // Out-of-order records are rejected with the first offending index.
    let mut bytes = Vec::new();
    bytes.extend_from_slice(b"TTAG");
    bytes.extend_from_slice(&1u16.to_le_bytes());
    bytes.extend_from_slice(&3u64.to_le_bytes());
    for (ts, ch) in [(50u64, 0u16), (40, 0), (60, 0)] {
        bytes.extend_from_slice(&ts.to_le_bytes());
        bytes.extend_from_slice(&ch.to_le_bytes());
    }
    assert!(matches!(
        ttag::read_binary(&mut bytes.as_slice()),
        Err(TtagError::UnsortedRecords(1))
    ));
    println!("acceptance 9a [ttag serialization]: PASS — 1e6-record byte-identical round trip, error taxonomy complete");
}

#[test]
fn acceptance_09b_corr_brute_force_equivalence() {
    let mut rng = rng_from_seed(4700);
    let make = |rng: &mut pairsim::rng::Rng, n: usize, channel: u16| -> ClickStream {
        let mut records: Vec<TimeTagRecord> = (0..n)
            .map(|_| TimeTagRecord { timestamp_ps: rng.gen_range(0..500_000_000), channel })
            .collect();
        records.sort_unstable();
        ClickStream::from_records(records, 500_000_000, "acceptance")
    };
    let a = make(&mut rng, 10_000, 0);
    let b = make(&mut rng, 10_000, 1);

    let hist = corr::cross_histogram(&a, &b, -10_000, 10_000, 500).unwrap();
    let starts: Vec<u64> = a.records.iter().map(|r| r.timestamp_ps).collect();
    let stops: Vec<u64> = b.records.iter().map(|r| r.timestamp_ps).collect();
    let brute =
        corr::brute_force_histogram(&starts, &stops, -10_000, 10_000, 500, false).unwrap();
    assert_eq!(hist.counts, brute);
    let total: u64 = hist.counts.iter().sum();

    let auto = corr::auto_histogram(&a, -10_000, 10_000, 500).unwrap();
    let brute_auto =
        corr::brute_force_histogram(&starts, &starts, -10_000, 10_000, 500, true).unwrap();
    assert_eq!(auto.counts, brute_auto);

    println!(
        "acceptance 9b [corr brute-force equivalence]: PASS — sweep matches O(n²) pairer \
         on 1e4-click streams ({total} pairs in range)"
    );
}

#[test]
fn acceptance_09c_franson_route_conservation_and_side_peaks() {
    let params = SystemParams::reference();
    let model = cascade::pair_model_from_params(&params, &FilterConfig::default()).unwrap();
    let pairs = cascade::sample_pairs(&model, 1.2, 4800).unwrap();

    let phases = [0.0, PI / 3.0, 2.0 * PI / 3.0, PI, 4.0 * PI / 3.0, 5.0 * PI / 3.0];
    let mut side_areas = Vec::new();
    for (i, &phi) in phases.iter().enumerate() {
        let config =
            FransonConfig { phi_a: phi, phi_b: 0.0, visibility: 0.926, ..FransonConfig::default() };
        let result = franson::transform_pairs(&pairs, &config, derive_seed(4801, i as u64)).unwrap();
        // Exact route-count conservation.
        assert_eq!(result.outcomes.len() as u64 + result.discarded, pairs.len() as u64);
        let mut left = 0u64;
        let mut right = 0u64;
        let mut escaped = 0u64;
        let mut central_class = 0u64;
        for outcome in &result.outcomes {
            match outcome.peak_class {
                PeakClass::Left => left += 1,
                PeakClass::Right => right += 1,
                PeakClass::Central => central_class += 1,
            }
            // Central-route events land in the central window except for the
            // exponential tail of the pair delay.
            if outcome.path_pair == PathPair::SsOrLl && outcome.peak_class != PeakClass::Central
            {
                escaped += 1;
            }
        }
        assert!(
            (escaped as f64) < 0.002 * central_class.max(1) as f64,
            "{escaped} central-route events escaped the window"
        );
        side_areas.push(left as f64);
        side_areas.push(right as f64);
    }
    // Side peaks statistically equal and phase independent: chi-square
    // against the pooled mean, 11 dof, 99.9% quantile 31.26.
    let mean = side_areas.iter().sum::<f64>() / side_areas.len() as f64;
    let chi2: f64 = side_areas.iter().map(|a| (a - mean) * (a - mean) / mean).sum();
    assert!(chi2 < 31.26, "side-peak chi2 = {chi2}, areas {side_areas:?}");
    println!(
        "acceptance 9c [franson routes]: PASS — exact route conservation at 6 phases, \
         side-peak chi2 = {chi2:.1} (11 dof)"
    );
}

#[test]
fn acceptance_09d_bell_invariances() {
    let table = reference_chsh_table();
    let counts = table.coefficient_counts(PI / 4.0, 0.0).unwrap();
    // Scaling invariance, exact in integer arithmetic.
    for scale in [3u64, 17, 100_000] {
        let p = (counts[0] + counts[1]) as i128;
        let m = (counts[2] + counts[3]) as i128;
        let ps = p * scale as i128;
        let ms = m * scale as i128;
        assert_eq!((p - m) * (ps + ms), (ps - ms) * (p + m));
    }
    // Orthogonal-phase swap flips the sign of E exactly.
    let (e, _) = bell::correlation_coefficient(&table, PI / 4.0, 0.0).unwrap();
    let (e_a, _) = bell::correlation_coefficient(&table, PI / 4.0 + PI, 0.0).unwrap();
    let (e_b, _) = bell::correlation_coefficient(&table, PI / 4.0, PI).unwrap();
    assert_eq!(e, -e_a);
    assert_eq!(e, -e_b);
    println!(
        "acceptance 9d [bell invariances]: PASS — E scaling exact, orthogonal swap flips \
         sign (E = {e:.4})"
    );
}

#[test]
fn acceptance_09e_fit_jacobians() {
    type Case = (&'static str, usize, fn(f64, &[f64]) -> f64, fn(f64, &[f64], &mut [f64]));
    let cases: [Case; 4] = [
        ("exponential", 3, models::exponential_eval, models::exponential_jacobian),
        ("damped_cosine", 5, models::damped_cosine_eval, models::damped_cosine_jacobian),
        ("sinusoid", 3, models::sinusoid_eval, models::sinusoid_jacobian),
        ("eta_squared", 1, models::eta_squared_eval, models::eta_squared_jacobian),
    ];
    let mut rng = rng_from_seed(4900);
    let mut checks = 0u64;
    for (name, np, eval, jacobian) in cases {
        for _ in 0..200 {
            let p: Vec<f64> = (0..np).map(|_| rng.gen_range(0.1..3.0)).collect();
            let x: f64 = rng.gen_range(0.05..6.0);
            let mut analytic = vec![0.0; np];
            jacobian(x, &p, &mut analytic);
            // Relative to the Jacobian row scale: components exponentially
            // below it drown in finite-difference roundoff by definition.
            let row_scale =
                analytic.iter().fold(0.0f64, |acc, v| acc.max(v.abs())).max(1e-9);
            for k in 0..np {
                let h = 1e-6 * p[k].abs().max(1e-3);
                let mut plus = p.clone();
                plus[k] += h;
                let mut minus = p.clone();
                minus[k] -= h;
                let fd = (eval(x, &plus) - eval(x, &minus)) / (2.0 * h);
                let scale = analytic[k].abs().max(fd.abs()).max(row_scale);
                assert!(
                    (analytic[k] - fd).abs() / scale < 1e-6,
                    "{name} param {k}: analytic {} vs finite difference {fd}",
                    analytic[k]
                );
                checks += 1;
            }
        }
    }
    println!(
        "acceptance 9e [fit jacobians]: PASS — {checks} analytic-vs-central-difference \
         checks at 1e-6 relative"
    );
}
