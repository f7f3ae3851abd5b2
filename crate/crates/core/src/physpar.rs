//! Physical parameters of the atom-cavity-drive system and every closed-form
//! rate quantity derived from them.
//!
//! Conventions: all frequencies and rates are ordinary frequencies (the
//! ω/2π values, in MHz) unless a function name says otherwise. Rate outputs
//! are converted to events per second by the ×10⁶ that takes "MHz" to "per
//! second" in this convention. Dimensionless quantities (saturation,
//! cooperativity) are convention independent.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

/// Errors from parameter validation and parameter-file parsing.
#[derive(Debug, Error)]
pub enum ParamError {
    #[error("parameter `{0}` must be finite")]
    NonFinite(&'static str),
    #[error("parameter `{0}` must be non-negative")]
    Negative(&'static str),
    #[error("parameter `{0}` must be strictly positive")]
    NonPositive(&'static str),
    #[error("parameter `{0}` must lie in [0, 1]")]
    OutOfUnitRange(&'static str),
    #[error("division by zero: `{0}` is zero")]
    DivisionByZero(&'static str),
    #[error("unknown key `{0}` in parameter file")]
    UnknownKey(String),
    #[error("missing key `{0}` in parameter file")]
    MissingKey(&'static str),
    #[error("key `{0}` is not a number")]
    NotANumber(String),
    #[error("parameter file is not a JSON object")]
    NotAnObject,
    #[error("failed to parse parameter file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("failed to read parameter file: {0}")]
    Io(#[from] std::io::Error),
}

/// All physical rates and detunings of the atom-cavity-drive system.
///
/// Frequencies are quoted as ω/2π in MHz. Detunings are signed,
/// drive minus atom / drive-relative cavity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Atom-cavity coupling g (MHz).
    pub g: f64,
    /// Cavity field decay rate κ (MHz).
    pub kappa: f64,
    /// Atomic dipole decay rate γ, half the natural linewidth (MHz).
    pub gamma: f64,
    /// Drive-atom detuning Δa (MHz, signed).
    pub delta_a: f64,
    /// Drive-cavity detuning Δc (MHz, signed).
    pub delta_c: f64,
    /// Rabi frequency Ω (MHz).
    pub omega: f64,
    /// Overall detection efficiency η (dimensionless).
    pub eta_total: f64,
    /// Cavity out-coupling efficiency (dimensionless).
    pub eta_fiber: f64,
    /// AC Stark shift bookkeeping value (MHz). Informational only.
    pub delta_ac: Option<f64>,
}

/// Central values of the modeled reference experiment, with one-sigma
/// uncertainties where quoted. Used by validation suites for tolerance
/// windows.
pub mod reference {
    pub const G_MHZ: f64 = 63.0;
    pub const G_SIGMA: f64 = 5.0;
    pub const KAPPA_MHZ: f64 = 164.0;
    pub const KAPPA_SIGMA: f64 = 5.0;
    pub const GAMMA_MHZ: f64 = 3.0;
    /// Magnitude of the red detuning of the drive from the atom.
    pub const DELTA_A_MHZ: f64 = 93.7;
    pub const DELTA_A_SIGMA: f64 = 0.9;
    pub const OMEGA_MHZ: f64 = 32.2;
    pub const OMEGA_SIGMA: f64 = 0.8;
    pub const ETA_TOTAL: f64 = 0.03;
    pub const ETA_FIBER: f64 = 0.4;
    pub const DELTA_AC_MHZ: f64 = 13.7;
    pub const COOPERATIVITY: f64 = 4.1;
    pub const COOPERATIVITY_SIGMA: f64 = 0.8;
    pub const SATURATION: f64 = 0.054;
    pub const SATURATION_SIGMA: f64 = 0.004;
}

impl SystemParams {
    /// Reference parameter set of the modeled experiment: drive red-detuned
    /// from the atom, cavity on resonance with the drive.
    pub fn reference() -> Self {
        SystemParams {
            g: reference::G_MHZ,
            kappa: reference::KAPPA_MHZ,
            gamma: reference::GAMMA_MHZ,
            delta_a: -reference::DELTA_A_MHZ,
            delta_c: 0.0,
            omega: reference::OMEGA_MHZ,
            eta_total: reference::ETA_TOTAL,
            eta_fiber: reference::ETA_FIBER,
            delta_ac: Some(reference::DELTA_AC_MHZ),
        }
    }

    /// Same parameters with a different drive-cavity detuning.
    pub fn with_delta_c(&self, delta_c: f64) -> Self {
        SystemParams { delta_c, ..self.clone() }
    }

    pub fn validate(&self) -> Result<(), ParamError> {
        let finite: [(&'static str, f64); 8] = [
            ("g", self.g),
            ("kappa", self.kappa),
            ("gamma", self.gamma),
            ("delta_a", self.delta_a),
            ("delta_c", self.delta_c),
            ("omega", self.omega),
            ("eta_total", self.eta_total),
            ("eta_fiber", self.eta_fiber),
        ];
        for (name, v) in finite {
            if !v.is_finite() {
                return Err(ParamError::NonFinite(name));
            }
        }
        for (name, v) in [("g", self.g), ("omega", self.omega)] {
            if v < 0.0 {
                return Err(ParamError::Negative(name));
            }
        }
        for (name, v) in [("kappa", self.kappa), ("gamma", self.gamma)] {
            if v <= 0.0 {
                return Err(ParamError::NonPositive(name));
            }
        }
        for (name, v) in [("eta_total", self.eta_total), ("eta_fiber", self.eta_fiber)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ParamError::OutOfUnitRange(name));
            }
        }
        Ok(())
    }

    /// Purcell-regime predicate: κ > g²/κ > γ. Violation is worth a warning,
    /// not an error; all formulas remain well defined outside the regime.
    pub fn is_purcell_regime(&self) -> bool {
        let g2_over_kappa = self.g * self.g / self.kappa;
        self.kappa > g2_over_kappa && g2_over_kappa > self.gamma
    }

    /// Parse the flat JSON parameter file. Keys: `g_mhz`, `kappa_mhz`,
    /// `gamma_mhz`, `delta_a_mhz`, `delta_c_mhz`, `omega_mhz`, `eta_total`,
    /// `eta_fiber`, `delta_ac_mhz` (all numbers, `delta_ac_mhz` optional).
    /// Unknown keys are rejected.
    pub fn from_json_str(text: &str) -> Result<Self, ParamError> {
        const KEYS: [&str; 9] = [
            "g_mhz",
            "kappa_mhz",
            "gamma_mhz",
            "delta_a_mhz",
            "delta_c_mhz",
            "omega_mhz",
            "eta_total",
            "eta_fiber",
            "delta_ac_mhz",
        ];
        let value: serde_json::Value = serde_json::from_str(text)?;
        let map = value.as_object().ok_or(ParamError::NotAnObject)?;
        for key in map.keys() {
            if !KEYS.contains(&key.as_str()) {
                return Err(ParamError::UnknownKey(key.clone()));
            }
        }
        let get = |key: &'static str| -> Result<f64, ParamError> {
            let v = map.get(key).ok_or(ParamError::MissingKey(key))?;
            v.as_f64().ok_or_else(|| ParamError::NotANumber(key.to_string()))
        };
        let delta_ac = match map.get("delta_ac_mhz") {
            None => None,
            Some(v) => {
                Some(v.as_f64().ok_or_else(|| ParamError::NotANumber("delta_ac_mhz".into()))?)
            }
        };
        let params = SystemParams {
            g: get("g_mhz")?,
            kappa: get("kappa_mhz")?,
            gamma: get("gamma_mhz")?,
            delta_a: get("delta_a_mhz")?,
            delta_c: get("delta_c_mhz")?,
            omega: get("omega_mhz")?,
            eta_total: get("eta_total")?,
            eta_fiber: get("eta_fiber")?,
            delta_ac,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn from_json_file(path: &std::path::Path) -> Result<Self, ParamError> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    /// Serialize to the same flat JSON schema accepted by `from_json_str`.
    pub fn to_json_value(&self) -> serde_json::Value {
        let mut map = BTreeMap::new();
        map.insert("g_mhz", self.g);
        map.insert("kappa_mhz", self.kappa);
        map.insert("gamma_mhz", self.gamma);
        map.insert("delta_a_mhz", self.delta_a);
        map.insert("delta_c_mhz", self.delta_c);
        map.insert("omega_mhz", self.omega);
        map.insert("eta_total", self.eta_total);
        map.insert("eta_fiber", self.eta_fiber);
        if let Some(dac) = self.delta_ac {
            map.insert("delta_ac_mhz", dac);
        }
        serde_json::to_value(map).expect("flat map serializes")
    }
}

/// Every closed-form quantity derived from one parameter set.
#[derive(Debug, Clone, Serialize)]
pub struct DerivedRates {
    /// On-resonance cooperativity C = g²/(2κγ).
    pub cooperativity: f64,
    /// Complex cooperativity C̃ at the parameter set's detunings.
    pub complex_cooperativity: Complex64,
    /// Purcell-broadened linewidth Γ at the parameter set's Δc (MHz).
    pub gamma_purcell: f64,
    /// Saturation parameter s, evaluated with Γ above.
    pub saturation: f64,
    /// Inelastic fraction s/(1+s).
    pub inelastic_fraction: f64,
    /// Cavity collection rate R_c (events/s).
    pub r_c: f64,
    /// Pair rate s·R_c/2 (pairs/s).
    pub pair_rate: f64,
    /// Detected pair rate (η²/4)·s·R_c (pairs/s).
    pub r_det2: f64,
    /// Generalized Rabi frequency Ω' = √(Ω² + Δa²) (MHz).
    pub omega_prime: f64,
}

/// One point of a cavity-detuning sweep.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DetuningPoint {
    pub delta_c: f64,
    /// Collection rate R_c (events/s).
    pub r_c: f64,
    /// Detected pair rate (pairs/s).
    pub r_det2: f64,
    /// Detuning-dependent Purcell-broadened linewidth (MHz).
    pub gamma_eff: f64,
}

/// Saturation parameter s = (2Ω²/Γ²)/(1 + (2Δa/Γ)²).
pub fn saturation(omega: f64, delta_a: f64, gamma_eff: f64) -> Result<f64, ParamError> {
    if !(omega.is_finite() && delta_a.is_finite() && gamma_eff.is_finite()) {
        return Err(ParamError::NonFinite("saturation input"));
    }
    if gamma_eff <= 0.0 {
        return Err(ParamError::NonPositive("gamma_eff"));
    }
    let on_res = 2.0 * omega * omega / (gamma_eff * gamma_eff);
    let detuning = 2.0 * delta_a / gamma_eff;
    Ok(on_res / (1.0 + detuning * detuning))
}

/// On-resonance cooperativity C = g²/(2κγ).
pub fn cooperativity(g: f64, kappa: f64, gamma: f64) -> Result<f64, ParamError> {
    if !(g.is_finite() && kappa.is_finite() && gamma.is_finite()) {
        return Err(ParamError::NonFinite("cooperativity input"));
    }
    if kappa <= 0.0 {
        return Err(ParamError::NonPositive("kappa"));
    }
    if gamma <= 0.0 {
        return Err(ParamError::NonPositive("gamma"));
    }
    Ok(g * g / (2.0 * kappa * gamma))
}

/// Complex cooperativity C̃ = g² / [2(κ + iΔc)(γ + iΔa)].
pub fn complex_cooperativity(params: &SystemParams) -> Complex64 {
    let num = Complex64::new(params.g * params.g, 0.0);
    let den = 2.0
        * Complex64::new(params.kappa, params.delta_c)
        * Complex64::new(params.gamma, params.delta_a);
    num / den
}

/// Purcell-broadened linewidth Γ = (2C + 1)·2γ with the real on-resonance
/// cooperativity (MHz).
pub fn purcell_gamma(params: &SystemParams) -> Result<f64, ParamError> {
    let c = cooperativity(params.g, params.kappa, params.gamma)?;
    Ok((2.0 * c + 1.0) * 2.0 * params.gamma)
}

/// Detuning-dependent Purcell-broadened linewidth (MHz).
///
/// Uses the broadening factor 2·Re(C̃) + 1 with C̃ evaluated at the emitted
/// line (atomic factor on resonance), which reduces to (2C + 1) at Δc = 0
/// and rolls off as a Lorentzian in Δc toward the free-space value 2γ.
pub fn effective_purcell_gamma(params: &SystemParams, delta_c: f64) -> Result<f64, ParamError> {
    let c = cooperativity(params.g, params.kappa, params.gamma)?;
    let kappa2 = params.kappa * params.kappa;
    let lorentz = kappa2 / (kappa2 + delta_c * delta_c);
    Ok((2.0 * c * lorentz + 1.0) * 2.0 * params.gamma)
}

/// Overall photon collection rate through the cavity emission,
/// R_c = (2κΩ²/g²)·|C̃|²/|1 + 2C̃|², in events/s.
pub fn collection_rate(params: &SystemParams) -> Result<f64, ParamError> {
    if params.g == 0.0 {
        return Err(ParamError::DivisionByZero("g"));
    }
    let ct = complex_cooperativity(params);
    let prefactor = 2.0 * params.kappa * params.omega * params.omega / (params.g * params.g);
    let num = ct.norm_sqr();
    let den = (Complex64::new(1.0, 0.0) + 2.0 * ct).norm_sqr();
    Ok(prefactor * num / den * 1e6)
}

/// Detected pair rate R_det² = (η²/4)·s·R_c in pairs/s, with s evaluated at
/// the detuning-dependent Purcell linewidth.
pub fn detected_pair_rate(params: &SystemParams) -> Result<f64, ParamError> {
    let eta = params.eta_total;
    if !(0.0..=1.0).contains(&eta) {
        return Err(ParamError::OutOfUnitRange("eta_total"));
    }
    let gamma_eff = effective_purcell_gamma(params, params.delta_c)?;
    let s = saturation(params.omega, params.delta_a, gamma_eff)?;
    let r_c = collection_rate(params)?;
    Ok(eta * eta / 4.0 * s * r_c)
}

/// Pair rate collected into the cavity out-coupling fiber,
/// (s·R_c/2)·eta_fiber², in pairs/s.
pub fn fiber_pair_rate(params: &SystemParams) -> Result<f64, ParamError> {
    let gamma_eff = effective_purcell_gamma(params, params.delta_c)?;
    let s = saturation(params.omega, params.delta_a, gamma_eff)?;
    let r_c = collection_rate(params)?;
    Ok(s * r_c / 2.0 * params.eta_fiber * params.eta_fiber)
}

/// Inelastic fraction s/(1+s) of the total scattering.
pub fn inelastic_fraction(s: f64) -> f64 {
    s / (1.0 + s)
}

/// Generalized Rabi frequency Ω' = √(Ω² + Δa²) (MHz).
pub fn rabi_sideband(omega: f64, delta_a: f64) -> f64 {
    omega.hypot(delta_a)
}

/// Free-space excited-state lifetime 1/(2π·2γ) in ns for γ in MHz.
pub fn free_space_lifetime_ns(gamma: f64) -> f64 {
    1e3 / (2.0 * PI * 2.0 * gamma)
}

/// All derived quantities for one parameter set.
pub fn derived_rates(params: &SystemParams) -> Result<DerivedRates, ParamError> {
    params.validate()?;
    let c = cooperativity(params.g, params.kappa, params.gamma)?;
    let ct = complex_cooperativity(params);
    let gamma_purcell = effective_purcell_gamma(params, params.delta_c)?;
    let s = saturation(params.omega, params.delta_a, gamma_purcell)?;
    let r_c = collection_rate(params)?;
    Ok(DerivedRates {
        cooperativity: c,
        complex_cooperativity: ct,
        gamma_purcell,
        saturation: s,
        inelastic_fraction: inelastic_fraction(s),
        r_c,
        pair_rate: s * r_c / 2.0,
        r_det2: params.eta_total * params.eta_total / 4.0 * s * r_c,
        omega_prime: rabi_sideband(params.omega, params.delta_a),
    })
}

/// Evaluate rates over a list of cavity detunings.
pub fn sweep_detuning(
    params: &SystemParams,
    delta_c_list: &[f64],
) -> Result<Vec<DetuningPoint>, ParamError> {
    if delta_c_list.is_empty() {
        return Err(ParamError::MissingKey("delta_c_list"));
    }
    delta_c_list
        .iter()
        .map(|&dc| {
            let p = params.with_delta_c(dc);
            let gamma_eff = effective_purcell_gamma(&p, dc)?;
            Ok(DetuningPoint {
                delta_c: dc,
                r_c: collection_rate(&p)?,
                r_det2: detected_pair_rate(&p)?,
                gamma_eff,
            })
        })
        .collect()
}
