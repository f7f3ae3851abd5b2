//! CHSH estimation: correlation coefficients from coincidence counts, the
//! CHSH parameter, and Poisson error propagation.
//!
//! Counts at different settings are measured separately, so they are treated
//! as independent Poisson variables; E-coefficient variances follow from
//! first-order propagation with Var(n) = n, giving Var(E) = 4PM/T³ for
//! positive-group total P, negative-group total M, T = P + M.

use crate::cascade::PairEvent;
use crate::franson::{self, FransonConfig};
use crate::rng::derive_seed;
use serde::Serialize;
use std::f64::consts::PI;
use std::io::{Read, Write};
use thiserror::Error;

/// Phase-matching tolerance for locating table entries and orthogonal
/// partners (radians).
pub const PHASE_TOLERANCE: f64 = 1e-9;

/// Coincidence counts n(φa, φb) over a basis grid. Phases are canonicalized
/// to [0, 2π); lookups match within [`PHASE_TOLERANCE`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CoincidenceTable {
    entries: Vec<(f64, f64, u64)>,
}

/// The four CHSH analyzer settings (φa, φa′, φb, φb′).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ChshBasis {
    pub phi_a: f64,
    pub phi_a_prime: f64,
    pub phi_b: f64,
    pub phi_b_prime: f64,
}

impl ChshBasis {
    /// The basis used by the reference measurement: (π/4, −π/4, 0, π/2).
    pub fn reference() -> Self {
        ChshBasis {
            phi_a: PI / 4.0,
            phi_a_prime: -PI / 4.0,
            phi_b: 0.0,
            phi_b_prime: PI / 2.0,
        }
    }
}

/// One correlation coefficient with its propagated uncertainty.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct CorrelationCoefficient {
    pub phi_a: f64,
    pub phi_b: f64,
    pub e: f64,
    pub sigma: f64,
}

/// CHSH parameter with per-coefficient breakdown.
#[derive(Debug, Clone, Serialize)]
pub struct ChshResult {
    pub e_values: [CorrelationCoefficient; 4],
    pub s_value: f64,
    pub s_sigma: f64,
    pub basis: ChshBasis,
}

/// Detector-indexed coincidence block for the two-detector-per-side form:
/// `n[i][j]` counts coincidences between detector i on side a and detector j
/// on side b.
#[derive(Debug, Clone, Copy)]
pub struct DetectorBlock {
    pub n11: u64,
    pub n12: u64,
    pub n21: u64,
    pub n22: u64,
}

#[derive(Debug, Error)]
pub enum BellError {
    #[error("missing table entry at (phi_a = {phi_a}, phi_b = {phi_b})")]
    MissingEntry { phi_a: f64, phi_b: f64 },
    #[error("zero total counts for (phi_a = {phi_a}, phi_b = {phi_b})")]
    ZeroTotal { phi_a: f64, phi_b: f64 },
    #[error("not enough pairs: need {needed}, got {got}")]
    NotEnoughPairs { needed: usize, got: usize },
    #[error("malformed CSV row at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("CSV header mismatch; expected \"phi_a_rad,phi_b_rad,counts\"")]
    BadCsvHeader,
    #[error("franson error: {0}")]
    Franson(#[from] franson::FransonError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn canonical(phi: f64) -> f64 {
    let two_pi = 2.0 * PI;
    let mut p = phi.rem_euclid(two_pi);
    // Collapse values within tolerance of 2π onto 0.
    if (two_pi - p).abs() < PHASE_TOLERANCE {
        p = 0.0;
    }
    p
}

fn phases_match(a: f64, b: f64) -> bool {
    let d = (a - b).abs();
    d < PHASE_TOLERANCE || (2.0 * PI - d).abs() < PHASE_TOLERANCE
}

impl CoincidenceTable {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert counts at a setting; counts accumulate when the setting is
    /// already present.
    pub fn insert(&mut self, phi_a: f64, phi_b: f64, counts: u64) {
        let (pa, pb) = (canonical(phi_a), canonical(phi_b));
        for (a, b, c) in &mut self.entries {
            if phases_match(*a, pa) && phases_match(*b, pb) {
                *c += counts;
                return;
            }
        }
        self.entries.push((pa, pb, counts));
    }

    pub fn get(&self, phi_a: f64, phi_b: f64) -> Option<u64> {
        let (pa, pb) = (canonical(phi_a), canonical(phi_b));
        self.entries
            .iter()
            .find(|(a, b, _)| phases_match(*a, pa) && phases_match(*b, pb))
            .map(|&(_, _, c)| c)
    }

    pub fn phi_a_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.iter().map(|&(a, _, _)| a).collect();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v.dedup_by(|x, y| phases_match(*x, *y));
        v
    }

    pub fn phi_b_values(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.entries.iter().map(|&(_, b, _)| b).collect();
        v.sort_by(|x, y| x.partial_cmp(y).unwrap());
        v.dedup_by(|x, y| phases_match(*x, *y));
        v
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The four counts entering one correlation coefficient:
    /// [n(a,b), n(a⊥,b⊥), n(a,b⊥), n(a⊥,b)] with ⊥ = phase + π.
    pub fn coefficient_counts(&self, phi_a: f64, phi_b: f64) -> Result<[u64; 4], BellError> {
        let a_perp = phi_a + PI;
        let b_perp = phi_b + PI;
        let lookup = |pa: f64, pb: f64| {
            self.get(pa, pb).ok_or(BellError::MissingEntry {
                phi_a: canonical(pa),
                phi_b: canonical(pb),
            })
        };
        Ok([
            lookup(phi_a, phi_b)?,
            lookup(a_perp, b_perp)?,
            lookup(phi_a, b_perp)?,
            lookup(a_perp, phi_b)?,
        ])
    }

    /// Write CSV with columns `phi_a_rad,phi_b_rad,counts`.
    pub fn write_csv<W: Write>(&self, sink: &mut W) -> Result<(), BellError> {
        writeln!(sink, "phi_a_rad,phi_b_rad,counts")?;
        let mut rows = self.entries.clone();
        rows.sort_by(|x, y| (x.0, x.1).partial_cmp(&(y.0, y.1)).unwrap());
        for (a, b, c) in rows {
            writeln!(sink, "{a},{b},{c}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: Read>(source: &mut R) -> Result<Self, BellError> {
        let mut text = String::new();
        source.read_to_string(&mut text)?;
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim_end() == "phi_a_rad,phi_b_rad,counts" => {}
            _ => return Err(BellError::BadCsvHeader),
        }
        let mut table = CoincidenceTable::new();
        for (idx, line) in lines {
            let line = line.trim_end();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 {
                return Err(BellError::MalformedCsv {
                    line: idx + 1,
                    reason: "expected three comma-separated fields".into(),
                });
            }
            let parse_f = |s: &str, what: &str| {
                s.trim().parse::<f64>().map_err(|e| BellError::MalformedCsv {
                    line: idx + 1,
                    reason: format!("bad {what}: {e}"),
                })
            };
            let phi_a = parse_f(fields[0], "phi_a_rad")?;
            let phi_b = parse_f(fields[1], "phi_b_rad")?;
            let counts = fields[2].trim().parse::<u64>().map_err(|e| BellError::MalformedCsv {
                line: idx + 1,
                reason: format!("bad counts: {e}"),
            })?;
            table.insert(phi_a, phi_b, counts);
        }
        Ok(table)
    }
}

fn e_from_counts(counts: [u64; 4]) -> Result<(f64, f64), (u64, u64)> {
    let p = counts[0] + counts[1];
    let m = counts[2] + counts[3];
    let t = p + m;
    if t == 0 {
        return Err((p, m));
    }
    let e = (p as f64 - m as f64) / t as f64;
    // First-order Poisson propagation: Var(E) = 4PM/T³.
    let var = 4.0 * p as f64 * m as f64 / (t as f64).powi(3);
    Ok((e, var.sqrt()))
}

/// Correlation coefficient from the single-detector expanded-basis form:
/// E = [n(a,b) + n(a⊥,b⊥) − n(a,b⊥) − n(a⊥,b)] / total.
pub fn correlation_coefficient(
    table: &CoincidenceTable,
    phi_a: f64,
    phi_b: f64,
) -> Result<(f64, f64), BellError> {
    let counts = table.coefficient_counts(phi_a, phi_b)?;
    e_from_counts(counts).map_err(|_| BellError::ZeroTotal {
        phi_a: canonical(phi_a),
        phi_b: canonical(phi_b),
    })
}

/// Correlation coefficient from the two-detector-per-side form:
/// E = (n11 + n22 − n12 − n21) / total.
pub fn correlation_coefficient_dual(block: &DetectorBlock) -> Result<(f64, f64), BellError> {
    e_from_counts([block.n11, block.n22, block.n12, block.n21])
        .map_err(|_| BellError::ZeroTotal { phi_a: f64::NAN, phi_b: f64::NAN })
}

/// CHSH parameter S = |E(a,b) − E(a,b′) + E(a′,b) + E(a′,b′)| with the
/// root-sum-square Poisson uncertainty.
pub fn chsh(table: &CoincidenceTable, basis: &ChshBasis) -> Result<ChshResult, BellError> {
    let settings = [
        (basis.phi_a, basis.phi_b),
        (basis.phi_a, basis.phi_b_prime),
        (basis.phi_a_prime, basis.phi_b),
        (basis.phi_a_prime, basis.phi_b_prime),
    ];
    let mut coefficients = Vec::with_capacity(4);
    for (pa, pb) in settings {
        let (e, sigma) = correlation_coefficient(table, pa, pb)?;
        coefficients.push(CorrelationCoefficient { phi_a: canonical(pa), phi_b: canonical(pb), e, sigma });
    }
    let s = coefficients[0].e - coefficients[1].e + coefficients[2].e + coefficients[3].e;
    let s_sigma = coefficients.iter().map(|c| c.sigma * c.sigma).sum::<f64>().sqrt();
    Ok(ChshResult {
        e_values: [coefficients[0], coefficients[1], coefficients[2], coefficients[3]],
        s_value: s.abs(),
        s_sigma,
        basis: *basis,
    })
}

/// Build a coincidence table by running the interferometer transform at each
/// of the sixteen settings (basis phases and their orthogonal partners),
/// counting central-peak coincidences within the 12 ns window.
///
/// The pair list is split into sixteen disjoint chunks of
/// `counts_per_setting` pairs, so setting counts are independent.
pub fn table_from_franson(
    pairs: &[PairEvent],
    config_base: &FransonConfig,
    basis: &ChshBasis,
    counts_per_setting: usize,
    seed: u64,
) -> Result<CoincidenceTable, BellError> {
    let phi_a_settings = [
        basis.phi_a,
        basis.phi_a + PI,
        basis.phi_a_prime,
        basis.phi_a_prime + PI,
    ];
    let phi_b_settings = [
        basis.phi_b,
        basis.phi_b + PI,
        basis.phi_b_prime,
        basis.phi_b_prime + PI,
    ];
    let needed = counts_per_setting * 16;
    if pairs.len() < needed {
        return Err(BellError::NotEnoughPairs { needed, got: pairs.len() });
    }
    let mut table = CoincidenceTable::new();
    let mut chunk_index = 0u64;
    for &pa in &phi_a_settings {
        for &pb in &phi_b_settings {
            let at = chunk_index as usize * counts_per_setting;
            let chunk = &pairs[at..at + counts_per_setting];
            let config = FransonConfig { phi_a: pa, phi_b: pb, ..*config_base };
            let result =
                franson::transform_pairs(chunk, &config, derive_seed(seed, chunk_index))?;
            table.insert(pa, pb, franson::central_peak_count(&result.outcomes));
            chunk_index += 1;
        }
    }
    Ok(table)
}
