//! Stochastic quantum-trajectory engine for the coherently driven two-level
//! atom coupled to a single cavity mode, emitting time-tagged jump events on
//! the cavity-emission and free-space channels.
//!
//! The Hamiltonian is time independent in the drive rotating frame, so
//! between jumps the non-Hermitian evolution is applied exactly through a
//! cache of matrix-exponential propagators at power-of-two steps from 1 ps
//! up to the 512 ps walking step. Jumps are located by the norm-threshold
//! rule with a uniform random target and dyadic bisection down to the 1 ps
//! time-tag grid; the squared norm is non-increasing between jumps, which
//! makes the bisection exact.
//!
//! Internally everything is angular (rad/ps = 2π × the MHz inputs) and
//! timestamps are physical picoseconds. Reported channel rates are converted
//! back to events/s in the same ordinary-frequency convention as the
//! closed-form collection rate, i.e. raw click counts per second divided by
//! 2π; the summary carries the raw counts alongside.

pub mod linalg;
mod oracle;

pub use oracle::{steady_state_oracle, SteadyState};

use crate::physpar::{self, SystemParams};
use crate::rng::{derive_seed, rng_from_seed};
use crate::ttag::{ClickStream, TimeTagRecord};
use linalg::{expm, CMatrix};
use num_complex::Complex64;
use rand::Rng as _;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;
use thiserror::Error;

/// rad/ps per MHz of ordinary frequency.
pub(crate) const ANGULAR_PER_MHZ: f64 = 2.0 * PI * 1e-6;

/// events/s per (1/ps) of jump intensity, in the ordinary-frequency rate
/// convention of the closed-form collection rate.
pub(crate) const RATE_EVENTS_PER_S: f64 = 1e12 / (2.0 * PI);

/// Walking step of the propagator cache: 2^9 ps.
const COARSE_LOG2: u32 = 9;

/// Emission channel of a quantum jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum JumpChannel {
    CavityEmission,
    FreeSpace,
}

impl JumpChannel {
    pub fn ttag_channel(self) -> u16 {
        match self {
            JumpChannel::CavityEmission => 0,
            JumpChannel::FreeSpace => 1,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            JumpChannel::CavityEmission => "cavity emission",
            JumpChannel::FreeSpace => "free space",
        }
    }
}

/// One collapse channel: bare collapse matrix plus its rate prefactor
/// (rad/ps); the effective jump operator is √prefactor · matrix.
#[derive(Debug, Clone)]
pub struct JumpOperator {
    pub label: JumpChannel,
    pub matrix: CMatrix,
    pub rate_prefactor: f64,
}

/// The driven atom-cavity model on the truncated Fock space.
///
/// Basis ordering: index = atom·(n_max + 1) + n with atom ∈ {0 = ground,
/// 1 = excited} and n the photon number.
#[derive(Debug, Clone)]
pub struct Model {
    pub dimension: usize,
    /// Hamiltonian in the drive rotating frame (rad/ps).
    pub hamiltonian: CMatrix,
    pub jump_channels: Vec<JumpOperator>,
    pub n_max: usize,
    pub params: SystemParams,
}

/// One recorded quantum jump.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct JumpRecord {
    pub time_ps: u64,
    pub channel: JumpChannel,
    pub trajectory_id: u64,
}

#[derive(Debug, Error)]
pub enum McwfError {
    #[error("n_max must be at least 1, got {0}")]
    BadTruncation(usize),
    #[error("hamiltonian is not Hermitian: relative defect {defect}")]
    NonHermitian { defect: f64 },
    #[error("duration must be positive")]
    BadDuration,
    #[error("numerical failure at t = {t_ps} ps: {what}")]
    Numerical { t_ps: u64, what: &'static str },
    #[error("oracle dimension {dimension} exceeds the dense limit {max}")]
    DimensionTooLarge { dimension: usize, max: usize },
    #[error("steady state is degenerate: nullspace dimension {nullspace_dim}")]
    DegenerateSteadyState { nullspace_dim: usize },
    #[error("trajectory {index} failed: {source}")]
    Trajectory {
        index: u64,
        #[source]
        source: Box<McwfError>,
    },
    #[error("parameter error: {0}")]
    Param(#[from] physpar::ParamError),
}

impl Model {
    /// Basis index of |atom, n⟩.
    pub fn index(&self, atom: usize, n: usize) -> usize {
        atom * (self.n_max + 1) + n
    }

    pub fn validate(&self) -> Result<(), McwfError> {
        let defect = self.hamiltonian.hermiticity_defect();
        if defect > 1e-12 {
            return Err(McwfError::NonHermitian { defect });
        }
        for channel in &self.jump_channels {
            if channel.rate_prefactor.is_nan() || channel.rate_prefactor < 0.0 {
                return Err(McwfError::Numerical {
                    t_ps: 0,
                    what: "negative jump rate prefactor",
                });
            }
        }
        Ok(())
    }

    /// The non-Hermitian generator A = −i·H − ½·Σ c·M†M, so that between
    /// jumps ψ(t) = e^(A·t)·ψ(0).
    pub(crate) fn generator(&self) -> CMatrix {
        let n = self.dimension;
        let mut a = self.hamiltonian.scaled(Complex64::new(0.0, -1.0));
        for channel in &self.jump_channels {
            let mdm = channel.matrix.dagger().matmul(&channel.matrix);
            a = a.add(&mdm.scaled(Complex64::new(-0.5 * channel.rate_prefactor, 0.0)));
        }
        debug_assert_eq!(a.n, n);
        a
    }
}

/// Build the driven Jaynes-Cummings model
/// H = −Δa·σ⁺σ⁻ − Δc·a†a + g(a†σ⁻ + aσ⁺) + (Ω/2)(σ⁺ + σ⁻)
/// with collapse channels √(2κ)·a and √(2γ)·σ⁻.
pub fn build_model(params: &SystemParams, n_max: usize) -> Result<Model, McwfError> {
    if n_max < 1 {
        return Err(McwfError::BadTruncation(n_max));
    }
    params.validate()?;
    let fock = n_max + 1;
    let dimension = 2 * fock;
    let idx = |atom: usize, n: usize| atom * fock + n;

    let delta_a = params.delta_a * ANGULAR_PER_MHZ;
    let delta_c = params.delta_c * ANGULAR_PER_MHZ;
    let g = params.g * ANGULAR_PER_MHZ;
    let omega = params.omega * ANGULAR_PER_MHZ;
    let kappa = params.kappa * ANGULAR_PER_MHZ;
    let gamma = params.gamma * ANGULAR_PER_MHZ;

    let mut h = CMatrix::zeros(dimension);
    for atom in 0..2 {
        for n in 0..fock {
            let diag = -delta_a * atom as f64 - delta_c * n as f64;
            h.add_to(idx(atom, n), idx(atom, n), Complex64::new(diag, 0.0));
        }
    }
    for n in 0..fock {
        // Drive Ω/2 (σ⁺ + σ⁻).
        h.add_to(idx(1, n), idx(0, n), Complex64::new(omega / 2.0, 0.0));
        h.add_to(idx(0, n), idx(1, n), Complex64::new(omega / 2.0, 0.0));
    }
    for n in 0..fock - 1 {
        // g(a†σ⁻ + aσ⁺): |e, n⟩ ↔ |g, n+1⟩ with strength g√(n+1).
        let coupling = g * ((n + 1) as f64).sqrt();
        h.add_to(idx(0, n + 1), idx(1, n), Complex64::new(coupling, 0.0));
        h.add_to(idx(1, n), idx(0, n + 1), Complex64::new(coupling, 0.0));
    }

    let mut annihilate = CMatrix::zeros(dimension);
    for atom in 0..2 {
        for n in 1..fock {
            annihilate.set(idx(atom, n - 1), idx(atom, n), Complex64::new((n as f64).sqrt(), 0.0));
        }
    }
    let mut lower = CMatrix::zeros(dimension);
    for n in 0..fock {
        lower.set(idx(0, n), idx(1, n), Complex64::new(1.0, 0.0));
    }

    let model = Model {
        dimension,
        hamiltonian: h,
        jump_channels: vec![
            JumpOperator {
                label: JumpChannel::CavityEmission,
                matrix: annihilate,
                rate_prefactor: 2.0 * kappa,
            },
            JumpOperator {
                label: JumpChannel::FreeSpace,
                matrix: lower,
                rate_prefactor: 2.0 * gamma,
            },
        ],
        n_max,
        params: params.clone(),
    };
    model.validate()?;
    Ok(model)
}

/// Power-of-two propagator cache: cache[k] = e^(A · 2^k ps).
struct PropagatorCache {
    propagators: Vec<CMatrix>,
}

impl PropagatorCache {
    fn build(generator: &CMatrix) -> Self {
        let mut propagators = Vec::with_capacity(COARSE_LOG2 as usize + 1);
        let base = expm(generator);
        propagators.push(base);
        for k in 1..=COARSE_LOG2 as usize {
            let previous = &propagators[k - 1];
            propagators.push(previous.matmul(previous));
        }
        PropagatorCache { propagators }
    }

    #[inline]
    fn apply(&self, k: usize, state: &[Complex64], out: &mut [Complex64]) {
        self.propagators[k].matvec(state, out);
    }
}

fn norm_sqr(state: &[Complex64]) -> f64 {
    state.iter().map(|v| v.norm_sqr()).sum()
}

struct TrajectoryOutput {
    jumps: Vec<JumpRecord>,
    top_fock_time_avg: f64,
}

fn run_trajectory_inner(
    model: &Model,
    cache: &PropagatorCache,
    duration_ps: u64,
    seed: u64,
    trajectory_id: u64,
) -> Result<TrajectoryOutput, McwfError> {
    let dim = model.dimension;
    let fock = model.n_max + 1;
    let mut rng = rng_from_seed(seed);
    let mut psi = vec![Complex64::new(0.0, 0.0); dim];
    psi[0] = Complex64::new(1.0, 0.0);
    let mut scratch = vec![Complex64::new(0.0, 0.0); dim];
    let mut jump_scratch = vec![Complex64::new(0.0, 0.0); dim];

    let draw_target = |rng: &mut crate::rng::Rng| -> f64 {
        loop {
            let r = rng.gen::<f64>();
            if r > 0.0 {
                return r;
            }
        }
    };

    let mut jumps = Vec::new();
    let mut target = draw_target(&mut rng);
    let mut t: u64 = 0;
    let mut top_fock_weighted = 0.0f64;

    while t < duration_ps {
        let remaining = duration_ps - t;
        let k = (63 - remaining.leading_zeros()).min(COARSE_LOG2) as usize;
        let chunk = 1u64 << k;

        // Top-Fock occupancy estimate, sampled before each accepted chunk.
        let nsq = norm_sqr(&psi);
        if !nsq.is_finite() || nsq == 0.0 {
            return Err(McwfError::Numerical { t_ps: t, what: "state norm lost" });
        }
        let top: f64 = (0..2).map(|atom| psi[atom * fock + model.n_max].norm_sqr()).sum();

        cache.apply(k, &psi, &mut scratch);
        if norm_sqr(&scratch) >= target {
            std::mem::swap(&mut psi, &mut scratch);
            t += chunk;
            top_fock_weighted += top / nsq * chunk as f64;
            continue;
        }

        // The norm target is crossed inside (t, t + chunk]: dyadic bisection
        // down to 1 ps.
        for kk in (0..k).rev() {
            cache.apply(kk, &psi, &mut scratch);
            if norm_sqr(&scratch) >= target {
                std::mem::swap(&mut psi, &mut scratch);
                t += 1 << kk;
            }
        }
        cache.apply(0, &psi, &mut scratch);
        std::mem::swap(&mut psi, &mut scratch);
        t += 1;

        // Select the collapse channel with probability ∝ c·‖Mψ‖².
        let mut weights = [0.0f64; 8];
        let mut total = 0.0;
        for (i, channel) in model.jump_channels.iter().enumerate() {
            channel.matrix.matvec(&psi, &mut jump_scratch);
            let w = channel.rate_prefactor * norm_sqr(&jump_scratch);
            weights[i] = w;
            total += w;
        }
        if total.is_nan() || total <= 0.0 {
            return Err(McwfError::Numerical { t_ps: t, what: "vanishing jump weights" });
        }
        let mut pick = rng.gen::<f64>() * total;
        let mut selected = model.jump_channels.len() - 1;
        for (i, &w) in weights.iter().enumerate().take(model.jump_channels.len()) {
            if pick < w {
                selected = i;
                break;
            }
            pick -= w;
        }
        let channel = &model.jump_channels[selected];
        channel.matrix.matvec(&psi, &mut jump_scratch);
        let jump_norm = norm_sqr(&jump_scratch).sqrt();
        if jump_norm.is_nan() || jump_norm <= 0.0 {
            return Err(McwfError::Numerical { t_ps: t, what: "collapse annihilated the state" });
        }
        for (p, j) in psi.iter_mut().zip(&jump_scratch) {
            *p = j / jump_norm;
        }
        jumps.push(JumpRecord { time_ps: t, channel: channel.label, trajectory_id });
        target = draw_target(&mut rng);
    }

    Ok(TrajectoryOutput {
        jumps,
        top_fock_time_avg: top_fock_weighted / duration_ps as f64,
    })
}

/// Run one trajectory; deterministic for fixed (model, duration, seed).
pub fn run_trajectory(
    model: &Model,
    duration_ns: u64,
    seed: u64,
) -> Result<Vec<JumpRecord>, McwfError> {
    if duration_ns == 0 {
        return Err(McwfError::BadDuration);
    }
    model.validate()?;
    let cache = PropagatorCache::build(&model.generator());
    let output = run_trajectory_inner(model, &cache, duration_ns * 1000, seed, 0)?;
    Ok(output.jumps)
}

/// Per-channel counts, convention rates and truncation diagnostics of one
/// ensemble run.
#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub n_trajectories: u64,
    pub duration_ns_per_trajectory: u64,
    pub total_time_ns: u64,
    pub cavity_counts: u64,
    pub free_space_counts: u64,
    /// Rate in events/s, ordinary-frequency convention (raw counts per
    /// second divided by 2π), comparable to the closed-form collection rate.
    pub cavity_rate: f64,
    pub free_space_rate: f64,
    /// Time-averaged occupancy of the top Fock level; validates n_max.
    pub top_fock_occupancy: f64,
}

/// Ensemble output: raw jump records with trajectory ids, per-channel click
/// streams with trajectories laid out back to back along the time axis, and
/// summary statistics.
#[derive(Debug, Clone)]
pub struct EnsembleResult {
    pub jumps: Vec<JumpRecord>,
    pub cavity_stream: ClickStream,
    pub free_space_stream: ClickStream,
    pub summary: EnsembleSummary,
}

/// Run an ensemble of independent trajectories. Trajectory i derives its
/// seed from (base_seed, i), so results are schedule independent.
pub fn run_ensemble(
    model: &Model,
    n_traj: u64,
    duration_ns: u64,
    base_seed: u64,
) -> Result<EnsembleResult, McwfError> {
    if n_traj == 0 {
        return Err(McwfError::BadDuration);
    }
    if duration_ns == 0 {
        return Err(McwfError::BadDuration);
    }
    model.validate()?;
    let cache = PropagatorCache::build(&model.generator());
    let duration_ps = duration_ns * 1000;

    let outputs: Result<Vec<TrajectoryOutput>, McwfError> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            run_trajectory_inner(model, &cache, duration_ps, derive_seed(base_seed, i), i)
                .map_err(|e| McwfError::Trajectory { index: i, source: Box::new(e) })
        })
        .collect();
    let outputs = outputs?;

    let mut jumps = Vec::new();
    let mut cavity_records = Vec::new();
    let mut free_records = Vec::new();
    let mut top_fock_sum = 0.0;
    for (i, output) in outputs.iter().enumerate() {
        let offset = i as u64 * duration_ps;
        top_fock_sum += output.top_fock_time_avg;
        for jump in &output.jumps {
            jumps.push(*jump);
            let record = TimeTagRecord {
                timestamp_ps: offset + jump.time_ps,
                channel: jump.channel.ttag_channel(),
            };
            match jump.channel {
                JumpChannel::CavityEmission => cavity_records.push(record),
                JumpChannel::FreeSpace => free_records.push(record),
            }
        }
    }
    let total_time_ps = n_traj * duration_ps;
    let total_time_s = total_time_ps as f64 * 1e-12;
    let cavity_counts = cavity_records.len() as u64;
    let free_space_counts = free_records.len() as u64;

    let mut cavity_stream =
        ClickStream::from_records(cavity_records, total_time_ps, "mcwf ensemble");
    cavity_stream.channel_labels.insert(0, JumpChannel::CavityEmission.label().into());
    let mut free_space_stream =
        ClickStream::from_records(free_records, total_time_ps, "mcwf ensemble");
    free_space_stream.channel_labels.insert(1, JumpChannel::FreeSpace.label().into());

    Ok(EnsembleResult {
        jumps,
        cavity_stream,
        free_space_stream,
        summary: EnsembleSummary {
            n_trajectories: n_traj,
            duration_ns_per_trajectory: duration_ns,
            total_time_ns: n_traj * duration_ns,
            cavity_counts,
            free_space_counts,
            cavity_rate: cavity_counts as f64 / total_time_s / (2.0 * PI),
            free_space_rate: free_space_counts as f64 / total_time_s / (2.0 * PI),
            top_fock_occupancy: top_fock_sum / n_traj as f64,
        },
    })
}
