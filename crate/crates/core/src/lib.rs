//! Simulation and analysis toolkit for cavity-enhanced generation of
//! energy-time-entangled photon pairs from a driven two-level atom coupled to
//! a fast optical cavity.
//!
//! The crate is organized around the life cycle of an experiment at desk
//! scale:
//!
//! * [`physpar`] — physical parameters and closed-form rate analytics
//!   (saturation, cooperativity, Purcell broadening, collection and pair
//!   rates, detuning sweeps).
//! * [`mcwf`] — Monte Carlo wavefunction trajectories of the driven
//!   atom-cavity system, emitting time-tagged jump events, plus a dense
//!   steady-state oracle for cross-checks.
//! * [`cascade`] — analytic two-photon cascade pair source with exponential
//!   conditional wavepackets.
//! * [`ttag`] — time-tag records, click streams, bit-exact serialization and
//!   the detector model (efficiency, dark counts, jitter, dead time).
//! * [`corr`] — coincidence histograms, g²(τ) normalization and peak areas.
//! * [`franson`] — unbalanced Mach-Zehnder interferometer pair, three-peak
//!   coincidence structure and phase-dependent central-peak interference.
//! * [`bell`] — CHSH estimation from coincidence tables with Poisson error
//!   propagation.
//! * [`fit`] — small Levenberg-Marquardt fitter with the model set used by
//!   the analyses (exponential, damped cosine, sinusoid, rate vs detuning).

pub mod bell;
pub mod cascade;
pub mod corr;
pub mod fit;
pub mod franson;
pub mod mcwf;
pub mod physpar;
pub mod rng;
pub mod ttag;
