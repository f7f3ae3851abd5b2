//! Streaming correlation engine: coincidence histograms, g²(τ)
//! normalization and peak-area extraction.
//!
//! Histograms are built by a two-pointer sweep over sorted click streams,
//! linear in the number of clicks plus the number of delay-qualified pairs,
//! with exact integer counts.

use crate::ttag::ClickStream;
use std::io::Write;
use thiserror::Error;

/// Binned coincidence counts with normalization metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationHistogram {
    pub bin_width_ps: i64,
    pub tau_min_ps: i64,
    pub counts: Vec<u64>,
    /// Total clicks in the start / stop streams the histogram was built from.
    pub n_start: u64,
    pub n_stop: u64,
    pub duration_ps: u64,
    /// g² per bin, present after normalization.
    pub normalized: Option<Vec<f64>>,
}

#[derive(Debug, Error)]
pub enum CorrError {
    #[error("bin width must be positive")]
    BadBinWidth,
    #[error("tau range [{0}, {1}) is empty or not divisible by the bin width")]
    BadRange(i64, i64),
    #[error("input stream is not sorted")]
    UnsortedInput,
    #[error("cannot normalize: {0} is zero")]
    ZeroRate(&'static str),
    #[error("window [{0}, {1}] lies outside the histogram range")]
    WindowOutOfRange(i64, i64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl CorrelationHistogram {
    /// Upper edge of the delay range.
    pub fn tau_max_ps(&self) -> i64 {
        self.tau_min_ps + self.bin_width_ps * self.counts.len() as i64
    }

    /// Center of bin `i`.
    pub fn bin_center_ps(&self, i: usize) -> f64 {
        self.tau_min_ps as f64 + (i as f64 + 0.5) * self.bin_width_ps as f64
    }

    /// Index of the bin containing delay `tau` (ps).
    pub fn bin_index(&self, tau_ps: i64) -> Option<usize> {
        if tau_ps < self.tau_min_ps || tau_ps >= self.tau_max_ps() {
            return None;
        }
        Some(((tau_ps - self.tau_min_ps) / self.bin_width_ps) as usize)
    }

    /// g² value of the bin containing `tau`, if normalized.
    pub fn g2_at(&self, tau_ps: i64) -> Option<f64> {
        let idx = self.bin_index(tau_ps)?;
        self.normalized.as_ref().map(|g| g[idx])
    }
}

fn check_sorted(stream: &ClickStream) -> Result<(), CorrError> {
    if stream.records.windows(2).any(|w| w[1] < w[0]) {
        return Err(CorrError::UnsortedInput);
    }
    Ok(())
}

fn validate_range(tau_min: i64, tau_max: i64, bin_width: i64) -> Result<usize, CorrError> {
    if bin_width <= 0 {
        return Err(CorrError::BadBinWidth);
    }
    if tau_max <= tau_min || (tau_max - tau_min) % bin_width != 0 {
        return Err(CorrError::BadRange(tau_min, tau_max));
    }
    Ok(((tau_max - tau_min) / bin_width) as usize)
}

/// Histogram of stop-minus-start delays for all (start, stop) click pairs
/// with delay in `[tau_min_ps, tau_max_ps)`.
pub fn cross_histogram(
    start_stream: &ClickStream,
    stop_stream: &ClickStream,
    tau_min_ps: i64,
    tau_max_ps: i64,
    bin_width_ps: i64,
) -> Result<CorrelationHistogram, CorrError> {
    check_sorted(start_stream)?;
    check_sorted(stop_stream)?;
    let n_bins = validate_range(tau_min_ps, tau_max_ps, bin_width_ps)?;
    let starts: Vec<i64> = start_stream.records.iter().map(|r| r.timestamp_ps as i64).collect();
    let stops: Vec<i64> = stop_stream.records.iter().map(|r| r.timestamp_ps as i64).collect();

    let mut counts = vec![0u64; n_bins];
    let mut lo = 0usize;
    for &s in &starts {
        // First stop with delay >= tau_min; lo only moves forward.
        while lo < stops.len() && stops[lo] - s < tau_min_ps {
            lo += 1;
        }
        for &t in &stops[lo..] {
            let delay = t - s;
            if delay >= tau_max_ps {
                break;
            }
            counts[((delay - tau_min_ps) / bin_width_ps) as usize] += 1;
        }
    }
    Ok(CorrelationHistogram {
        bin_width_ps,
        tau_min_ps,
        counts,
        n_start: starts.len() as u64,
        n_stop: stops.len() as u64,
        duration_ps: start_stream.duration_ps.max(stop_stream.duration_ps),
        normalized: None,
    })
}

/// Autocorrelation histogram of a single stream: all ordered click pairs
/// with delay in range, excluding the zero-delay pairing of each click with
/// itself. Ties between different records are counted.
pub fn auto_histogram(
    stream: &ClickStream,
    tau_min_ps: i64,
    tau_max_ps: i64,
    bin_width_ps: i64,
) -> Result<CorrelationHistogram, CorrError> {
    check_sorted(stream)?;
    let n_bins = validate_range(tau_min_ps, tau_max_ps, bin_width_ps)?;
    let times: Vec<i64> = stream.records.iter().map(|r| r.timestamp_ps as i64).collect();

    let mut counts = vec![0u64; n_bins];
    let mut lo = 0usize;
    for (i, &s) in times.iter().enumerate() {
        while lo < times.len() && times[lo] - s < tau_min_ps {
            lo += 1;
        }
        for (j, &t) in times.iter().enumerate().skip(lo) {
            let delay = t - s;
            if delay >= tau_max_ps {
                break;
            }
            if i == j {
                continue;
            }
            counts[((delay - tau_min_ps) / bin_width_ps) as usize] += 1;
        }
    }
    Ok(CorrelationHistogram {
        bin_width_ps,
        tau_min_ps,
        counts,
        n_start: times.len() as u64,
        n_stop: times.len() as u64,
        duration_ps: stream.duration_ps,
        normalized: None,
    })
}

/// Normalize a histogram to g² by the uncorrelated coincidence rate:
/// `g2[i] = counts[i] / (rate_start · rate_stop · bin_width · duration)`.
pub fn g2_normalize(histogram: &CorrelationHistogram) -> Result<CorrelationHistogram, CorrError> {
    if histogram.n_start == 0 {
        return Err(CorrError::ZeroRate("start count"));
    }
    if histogram.n_stop == 0 {
        return Err(CorrError::ZeroRate("stop count"));
    }
    if histogram.duration_ps == 0 {
        return Err(CorrError::ZeroRate("duration"));
    }
    let duration = histogram.duration_ps as f64;
    let denom = histogram.n_start as f64 * histogram.n_stop as f64 * histogram.bin_width_ps as f64
        / duration;
    let normalized = histogram.counts.iter().map(|&c| c as f64 / denom).collect();
    Ok(CorrelationHistogram {
        normalized: Some(normalized),
        ..histogram.clone()
    })
}

/// Sum of counts over the bins containing `[center - half_width,
/// center + half_width]`. A window narrower than one bin degenerates to the
/// single bin containing the center.
pub fn peak_area(
    histogram: &CorrelationHistogram,
    center_ps: i64,
    half_width_ps: i64,
) -> Result<u64, CorrError> {
    let lo = center_ps - half_width_ps;
    let hi = center_ps + half_width_ps;
    let (Some(lo_idx), Some(hi_idx)) = (histogram.bin_index(lo), histogram.bin_index(hi)) else {
        return Err(CorrError::WindowOutOfRange(lo, hi));
    };
    Ok(histogram.counts[lo_idx..=hi_idx].iter().sum())
}

/// Export as CSV with columns `tau_ps,counts,g2`; the g2 column is blank for
/// unnormalized histograms.
pub fn write_csv<W: Write>(histogram: &CorrelationHistogram, sink: &mut W) -> Result<(), CorrError> {
    writeln!(sink, "tau_ps,counts,g2")?;
    for (i, &c) in histogram.counts.iter().enumerate() {
        let tau = histogram.tau_min_ps + i as i64 * histogram.bin_width_ps;
        match &histogram.normalized {
            Some(g2) => writeln!(sink, "{},{},{}", tau, c, g2[i])?,
            None => writeln!(sink, "{},{},", tau, c)?,
        }
    }
    Ok(())
}

/// Brute-force O(n·m) pairer over raw timestamp lists; test oracle for the
/// sweep implementations.
pub fn brute_force_histogram(
    starts: &[u64],
    stops: &[u64],
    tau_min_ps: i64,
    tau_max_ps: i64,
    bin_width_ps: i64,
    exclude_same_index: bool,
) -> Result<Vec<u64>, CorrError> {
    let n_bins = validate_range(tau_min_ps, tau_max_ps, bin_width_ps)?;
    let mut counts = vec![0u64; n_bins];
    for (i, &s) in starts.iter().enumerate() {
        for (j, &t) in stops.iter().enumerate() {
            if exclude_same_index && i == j {
                continue;
            }
            let delay = t as i64 - s as i64;
            if delay >= tau_min_ps && delay < tau_max_ps {
                counts[((delay - tau_min_ps) / bin_width_ps) as usize] += 1;
            }
        }
    }
    Ok(counts)
}
