//! Time-tag event model, bit-exact serialization, stream utilities and the
//! detector model.
//!
//! All timestamps live on a 1 ps integer grid, finer than any physical time
//! scale in the toolkit, so ordering and coincidence logic are exact.

use crate::rng::{rng_from_seed, Rng};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use std::collections::BTreeMap;
use std::io::{Read, Write};
use thiserror::Error;

/// One detection event: picosecond timestamp and detector channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct TimeTagRecord {
    pub timestamp_ps: u64,
    pub channel: u16,
}

/// A sorted sequence of detection events with stream metadata.
///
/// Invariants: records sorted by timestamp, ties broken by channel
/// ascending; every timestamp ≤ `duration_ps`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClickStream {
    pub records: Vec<TimeTagRecord>,
    pub duration_ps: u64,
    pub channel_labels: BTreeMap<u16, String>,
    /// Provenance note: which generator or file produced the stream.
    pub origin: String,
}

/// Detector response applied to a stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorConfig {
    /// Detection efficiency in [0, 1].
    pub efficiency: f64,
    /// Dark count rate per channel (Hz).
    pub dark_rate_hz: f64,
    /// Gaussian timing jitter sigma (ps).
    pub jitter_sigma_ps: f64,
    /// Non-paralyzable dead time per channel (ps).
    pub dead_time_ps: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            efficiency: 1.0,
            dark_rate_hz: 0.0,
            jitter_sigma_ps: 0.0,
            dead_time_ps: 0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), TtagError> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(TtagError::BadConfig("efficiency must lie in [0, 1]"));
        }
        let non_negative = |v: f64| v.is_finite() && v >= 0.0;
        if !non_negative(self.dark_rate_hz) || !non_negative(self.jitter_sigma_ps) {
            return Err(TtagError::BadConfig("rates and jitter must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum TtagError {
    #[error("bad magic bytes; expected \"TTAG\"")]
    BadMagic,
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("truncated payload: {0}")]
    Truncated(&'static str),
    #[error("records out of order at index {0}")]
    UnsortedRecords(usize),
    #[error("timestamp at index {index} exceeds stream duration")]
    BeyondDuration { index: usize },
    #[error("malformed CSV row at line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("CSV header mismatch; expected \"timestamp_ps,channel\"")]
    BadCsvHeader,
    #[error("conflicting labels for channel {channel}: {a:?} vs {b:?}")]
    ConflictingLabels { channel: u16, a: String, b: String },
    #[error("invalid detector config: {0}")]
    BadConfig(&'static str),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

const MAGIC: &[u8; 4] = b"TTAG";
const VERSION: u16 = 1;

impl ClickStream {
    /// An empty stream of the given duration.
    pub fn empty(duration_ps: u64, origin: impl Into<String>) -> Self {
        ClickStream {
            records: Vec::new(),
            duration_ps,
            channel_labels: BTreeMap::new(),
            origin: origin.into(),
        }
    }

    /// Build a stream from possibly unsorted records; sorts and derives the
    /// duration as the latest timestamp unless a larger one is given.
    pub fn from_records(
        mut records: Vec<TimeTagRecord>,
        duration_ps: u64,
        origin: impl Into<String>,
    ) -> Self {
        records.sort_unstable();
        let last = records.last().map_or(0, |r| r.timestamp_ps);
        ClickStream {
            records,
            duration_ps: duration_ps.max(last),
            channel_labels: BTreeMap::new(),
            origin: origin.into(),
        }
    }

    /// Check both stream invariants, reporting the first violation.
    pub fn check_invariants(&self) -> Result<(), TtagError> {
        for (i, pair) in self.records.windows(2).enumerate() {
            if pair[1] < pair[0] {
                return Err(TtagError::UnsortedRecords(i + 1));
            }
        }
        for (i, r) in self.records.iter().enumerate() {
            if r.timestamp_ps > self.duration_ps {
                return Err(TtagError::BeyondDuration { index: i });
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Timestamps of one channel, in order.
    pub fn channel_timestamps(&self, channel: u16) -> Vec<u64> {
        self.records
            .iter()
            .filter(|r| r.channel == channel)
            .map(|r| r.timestamp_ps)
            .collect()
    }

    /// Mean click rate in Hz over the stream duration.
    pub fn rate_hz(&self) -> f64 {
        if self.duration_ps == 0 {
            return 0.0;
        }
        self.records.len() as f64 / (self.duration_ps as f64 * 1e-12)
    }
}

/// Write the bit-exact binary format: magic "TTAG", version u16 = 1,
/// record count u64, then {timestamp_ps u64, channel u16} per record, all
/// little-endian, packed without padding.
pub fn write_binary<W: Write>(stream: &ClickStream, sink: &mut W) -> Result<(), TtagError> {
    stream.check_invariants()?;
    sink.write_all(MAGIC)?;
    sink.write_all(&VERSION.to_le_bytes())?;
    sink.write_all(&(stream.records.len() as u64).to_le_bytes())?;
    let mut buf = Vec::with_capacity(stream.records.len() * 10);
    for r in &stream.records {
        buf.extend_from_slice(&r.timestamp_ps.to_le_bytes());
        buf.extend_from_slice(&r.channel.to_le_bytes());
    }
    sink.write_all(&buf)?;
    Ok(())
}

/// Read the binary format back. Every malformed input maps to one named
/// error.
pub fn read_binary<R: Read>(source: &mut R) -> Result<ClickStream, TtagError> {
    let mut bytes = Vec::new();
    source.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(TtagError::Truncated("missing magic"));
    }
    if &bytes[0..4] != MAGIC {
        return Err(TtagError::BadMagic);
    }
    if bytes.len() < 6 {
        return Err(TtagError::Truncated("missing version"));
    }
    let version = u16::from_le_bytes([bytes[4], bytes[5]]);
    if version != VERSION {
        return Err(TtagError::UnsupportedVersion(version));
    }
    if bytes.len() < 14 {
        return Err(TtagError::Truncated("missing record count"));
    }
    let count = u64::from_le_bytes(bytes[6..14].try_into().unwrap()) as usize;
    let payload = &bytes[14..];
    if payload.len() < count * 10 {
        return Err(TtagError::Truncated("record payload shorter than record count"));
    }
    let mut records = Vec::with_capacity(count);
    for i in 0..count {
        let at = i * 10;
        let timestamp_ps = u64::from_le_bytes(payload[at..at + 8].try_into().unwrap());
        let channel = u16::from_le_bytes(payload[at + 8..at + 10].try_into().unwrap());
        records.push(TimeTagRecord { timestamp_ps, channel });
    }
    for (i, pair) in records.windows(2).enumerate() {
        if pair[1] < pair[0] {
            return Err(TtagError::UnsortedRecords(i + 1));
        }
    }
    let duration_ps = records.last().map_or(0, |r| r.timestamp_ps);
    Ok(ClickStream {
        records,
        duration_ps,
        channel_labels: BTreeMap::new(),
        origin: "read from binary".into(),
    })
}

/// Write the CSV form: header "timestamp_ps,channel", one decimal record per
/// line.
pub fn write_csv<W: Write>(stream: &ClickStream, sink: &mut W) -> Result<(), TtagError> {
    stream.check_invariants()?;
    writeln!(sink, "timestamp_ps,channel")?;
    for r in &stream.records {
        writeln!(sink, "{},{}", r.timestamp_ps, r.channel)?;
    }
    Ok(())
}

/// Read the CSV form with the same semantics as the binary reader.
pub fn read_csv<R: Read>(source: &mut R) -> Result<ClickStream, TtagError> {
    let mut text = String::new();
    source.read_to_string(&mut text)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim_end() == "timestamp_ps,channel" => {}
        _ => return Err(TtagError::BadCsvHeader),
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split(',');
        let (ts, ch) = match (parts.next(), parts.next(), parts.next()) {
            (Some(ts), Some(ch), None) => (ts, ch),
            _ => {
                return Err(TtagError::MalformedCsv {
                    line: idx + 1,
                    reason: "expected two comma-separated fields".into(),
                })
            }
        };
        let timestamp_ps = ts.trim().parse::<u64>().map_err(|e| TtagError::MalformedCsv {
            line: idx + 1,
            reason: format!("bad timestamp: {e}"),
        })?;
        let channel = ch.trim().parse::<u16>().map_err(|e| TtagError::MalformedCsv {
            line: idx + 1,
            reason: format!("bad channel: {e}"),
        })?;
        records.push(TimeTagRecord { timestamp_ps, channel });
    }
    for (i, pair) in records.windows(2).enumerate() {
        if pair[1] < pair[0] {
            return Err(TtagError::UnsortedRecords(i + 1));
        }
    }
    let duration_ps = records.last().map_or(0, |r| r.timestamp_ps);
    Ok(ClickStream {
        records,
        duration_ps,
        channel_labels: BTreeMap::new(),
        origin: "read from csv".into(),
    })
}

/// Apply the detector model: Bernoulli thinning by efficiency, added Poisson
/// dark counts per channel, Gaussian timing jitter followed by a re-sort,
/// and non-paralyzable dead-time pruning per channel, in that order.
pub fn apply_detector(
    stream: &ClickStream,
    config: &DetectorConfig,
    seed: u64,
) -> Result<ClickStream, TtagError> {
    config.validate()?;
    stream.check_invariants()?;
    let mut rng = rng_from_seed(seed);

    let mut kept: Vec<TimeTagRecord> = stream
        .records
        .iter()
        .filter(|_| rng.gen::<f64>() < config.efficiency)
        .copied()
        .collect();

    if config.dark_rate_hz > 0.0 && stream.duration_ps > 0 {
        let mut channels: Vec<u16> = stream.channel_labels.keys().copied().collect();
        if channels.is_empty() {
            channels = stream.records.iter().map(|r| r.channel).collect();
            channels.sort_unstable();
            channels.dedup();
        }
        let expected = config.dark_rate_hz * stream.duration_ps as f64 * 1e-12;
        for ch in channels {
            let n = sample_poisson(expected, &mut rng);
            for _ in 0..n {
                let t = rng.gen_range(0..=stream.duration_ps);
                kept.push(TimeTagRecord { timestamp_ps: t, channel: ch });
            }
        }
    }

    if config.jitter_sigma_ps > 0.0 {
        let normal = Normal::new(0.0, config.jitter_sigma_ps).expect("sigma validated");
        for r in &mut kept {
            let shifted = r.timestamp_ps as i128 + normal.sample(&mut rng).round() as i128;
            r.timestamp_ps = shifted.clamp(0, stream.duration_ps as i128) as u64;
        }
    }
    kept.sort_unstable();

    if config.dead_time_ps > 0 {
        let mut last_kept: BTreeMap<u16, u64> = BTreeMap::new();
        kept.retain(|r| match last_kept.get(&r.channel) {
            Some(&prev) if r.timestamp_ps < prev.saturating_add(config.dead_time_ps) => false,
            _ => {
                last_kept.insert(r.channel, r.timestamp_ps);
                true
            }
        });
    }

    Ok(ClickStream {
        records: kept,
        duration_ps: stream.duration_ps,
        channel_labels: stream.channel_labels.clone(),
        origin: format!("{} + detector", stream.origin),
    })
}

/// Sorted merge of several streams. Durations combine by maximum; channel
/// label maps must agree where they overlap.
pub fn merge(streams: &[&ClickStream]) -> Result<ClickStream, TtagError> {
    let mut labels: BTreeMap<u16, String> = BTreeMap::new();
    let mut records = Vec::with_capacity(streams.iter().map(|s| s.records.len()).sum());
    let mut duration_ps = 0;
    let mut origins = Vec::new();
    for s in streams {
        s.check_invariants()?;
        for (&ch, label) in &s.channel_labels {
            match labels.get(&ch) {
                Some(existing) if existing != label => {
                    return Err(TtagError::ConflictingLabels {
                        channel: ch,
                        a: existing.clone(),
                        b: label.clone(),
                    })
                }
                _ => {
                    labels.insert(ch, label.clone());
                }
            }
        }
        records.extend_from_slice(&s.records);
        duration_ps = duration_ps.max(s.duration_ps);
        origins.push(s.origin.as_str());
    }
    records.sort_unstable();
    Ok(ClickStream {
        records,
        duration_ps,
        channel_labels: labels,
        origin: format!("merge({})", origins.join(", ")),
    })
}

/// Knuth-style Poisson sampler, switching to a normal approximation for
/// large means.
pub(crate) fn sample_poisson(mean: f64, rng: &mut Rng) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    if mean > 64.0 {
        let normal = Normal::new(mean, mean.sqrt()).expect("positive mean");
        return normal.sample(rng).round().max(0.0) as u64;
    }
    let limit = (-mean).exp();
    let mut product = rng.gen::<f64>();
    let mut count = 0;
    while product > limit {
        product *= rng.gen::<f64>();
        count += 1;
    }
    count
}
