//! Brute-force steady-state oracle: dense Liouvillian nullspace solve at
//! small truncation. Deliberately simple and slow; it is the independent
//! reference the trajectory engine is checked against.

use super::linalg::{null_pivot_count, solve, CMatrix};
use super::{JumpChannel, McwfError, Model, RATE_EVENTS_PER_S};
use num_complex::Complex64;
use serde::Serialize;

/// Hard cap on the Hilbert dimension of the dense solve.
pub const MAX_ORACLE_DIMENSION: usize = 64;

/// Steady-state expectation set.
#[derive(Debug, Clone, Serialize)]
pub struct SteadyState {
    /// Excited-state population.
    pub rho_ee: f64,
    /// Mean intracavity photon number ⟨a†a⟩.
    pub mean_photons: f64,
    /// Population of the top Fock level (both atomic states).
    pub top_fock_occupancy: f64,
    /// Channel rates in events/s, ordinary-frequency convention (matching
    /// the ensemble summary and the closed-form collection rate).
    pub channel_rates: Vec<(JumpChannel, f64)>,
    /// |tr(ρ) − 1| before the final normalization; a solver diagnostic.
    pub trace_residual: f64,
}

impl SteadyState {
    pub fn rate(&self, channel: JumpChannel) -> f64 {
        self.channel_rates
            .iter()
            .find(|(c, _)| *c == channel)
            .map(|&(_, r)| r)
            .unwrap_or(0.0)
    }
}

/// Row-major vectorization index of ρ[r][c].
#[inline]
fn vec_index(n: usize, r: usize, c: usize) -> usize {
    r * n + c
}

/// Dense Liouvillian in the row-major vectorization:
/// L = −i(H⊗I − I⊗Hᵀ) + Σ c·[M ⊗ M̄ − ½ (M†M)⊗I − ½ I⊗(M†M)ᵀ].
fn liouvillian(model: &Model) -> CMatrix {
    let n = model.dimension;
    let n2 = n * n;
    let mut l = CMatrix::zeros(n2);
    let h = &model.hamiltonian;
    let minus_i = Complex64::new(0.0, -1.0);

    // −i(Hρ − ρH).
    for r in 0..n {
        for c in 0..n {
            let row = vec_index(n, r, c);
            for k in 0..n {
                l.add_to(row, vec_index(n, k, c), minus_i * h.get(r, k));
                l.add_to(row, vec_index(n, r, k), -minus_i * h.get(k, c));
            }
        }
    }

    for channel in &model.jump_channels {
        let m = &channel.matrix;
        let mdm = m.dagger().matmul(m);
        let rate = Complex64::new(channel.rate_prefactor, 0.0);
        let half_rate = Complex64::new(0.5 * channel.rate_prefactor, 0.0);
        for r in 0..n {
            for c in 0..n {
                let row = vec_index(n, r, c);
                // c · M ρ M†.
                for k in 0..n {
                    let m_rk = m.get(r, k);
                    if m_rk == Complex64::new(0.0, 0.0) {
                        continue;
                    }
                    for q in 0..n {
                        let m_cq_conj = m.get(c, q).conj();
                        if m_cq_conj == Complex64::new(0.0, 0.0) {
                            continue;
                        }
                        l.add_to(row, vec_index(n, k, q), rate * m_rk * m_cq_conj);
                    }
                }
                // −(c/2)·{M†M, ρ}.
                for k in 0..n {
                    l.add_to(row, vec_index(n, k, c), -half_rate * mdm.get(r, k));
                    l.add_to(row, vec_index(n, r, k), -half_rate * mdm.get(k, c));
                }
            }
        }
    }
    l
}

/// Solve L·ρ = 0 with tr(ρ) = 1 by dense elimination.
///
/// The nullspace dimension is estimated first; a dimension above one is
/// reported as a degenerate steady state. The unique solution is then found
/// from the trace-augmented normal equations.
pub fn steady_state_oracle(model: &Model) -> Result<SteadyState, McwfError> {
    model.validate()?;
    let n = model.dimension;
    if n > MAX_ORACLE_DIMENSION {
        return Err(McwfError::DimensionTooLarge { dimension: n, max: MAX_ORACLE_DIMENSION });
    }
    let n2 = n * n;
    let l = liouvillian(model);

    let nulls = null_pivot_count(&l, 1e-10);
    if nulls > 1 {
        return Err(McwfError::DegenerateSteadyState { nullspace_dim: nulls });
    }

    // Trace preservation makes the diagonal rows of L linearly dependent;
    // replace the (0,0) row with the trace constraint and solve directly.
    let weight = l.norm_1().max(1.0);
    let mut a = l.clone();
    let constrained_row = vec_index(n, 0, 0);
    for col in 0..n2 {
        a.set(constrained_row, col, Complex64::new(0.0, 0.0));
    }
    for c in 0..n {
        a.set(constrained_row, vec_index(n, c, c), Complex64::new(weight, 0.0));
    }
    let mut b = vec![Complex64::new(0.0, 0.0); n2];
    b[constrained_row] = Complex64::new(weight, 0.0);
    let mut x = solve(&a, &b).ok_or(McwfError::Numerical {
        t_ps: 0,
        what: "steady-state solve is singular",
    })?;
    // One pass of iterative refinement.
    let mut residual = b.clone();
    let mut ax = vec![Complex64::new(0.0, 0.0); n2];
    a.matvec(&x, &mut ax);
    for (r, v) in residual.iter_mut().zip(&ax) {
        *r -= v;
    }
    if let Some(correction) = solve(&a, &residual) {
        for (xv, cv) in x.iter_mut().zip(&correction) {
            *xv += cv;
        }
    }

    // Hermitize and normalize.
    let mut rho = CMatrix::zeros(n);
    for r in 0..n {
        for c in 0..n {
            let v = (x[vec_index(n, r, c)] + x[vec_index(n, c, r)].conj()) * 0.5;
            rho.set(r, c, v);
        }
    }
    let trace: Complex64 = (0..n).map(|i| rho.get(i, i)).sum();
    let trace_residual = (trace - Complex64::new(1.0, 0.0)).norm();
    if trace.norm() < 1e-8 {
        return Err(McwfError::Numerical { t_ps: 0, what: "steady-state trace vanished" });
    }
    let rho = rho.scaled(Complex64::new(1.0, 0.0) / trace);

    let fock = model.n_max + 1;
    let population = |atom: usize, n_photons: usize| -> f64 {
        rho.get(atom * fock + n_photons, atom * fock + n_photons).re
    };
    let rho_ee: f64 = (0..fock).map(|np| population(1, np)).sum();
    let mean_photons: f64 =
        (0..2).flat_map(|s| (0..fock).map(move |np| np as f64 * population(s, np))).sum();
    let top_fock_occupancy: f64 = (0..2).map(|s| population(s, model.n_max)).sum();

    // Channel rate: c · tr(M†M ρ), converted to events/s.
    let channel_rates = model
        .jump_channels
        .iter()
        .map(|channel| {
            let mdm = channel.matrix.dagger().matmul(&channel.matrix);
            let product = mdm.matmul(&rho);
            let expectation: Complex64 = (0..n).map(|i| product.get(i, i)).sum();
            let rate = channel.rate_prefactor * expectation.re * RATE_EVENTS_PER_S;
            (channel.label, rate)
        })
        .collect();

    Ok(SteadyState {
        rho_ee,
        mean_photons,
        top_fock_occupancy,
        channel_rates,
        trace_residual,
    })
}

#[cfg(test)]
mod tests {
    use super::super::build_model;
    use super::*;
    use crate::physpar::{self, SystemParams};

    #[test]
    fn no_drive_gives_ground_state() {
        let params = SystemParams { omega: 0.0, ..SystemParams::reference() };
        let model = build_model(&params, 2).unwrap();
        let ss = steady_state_oracle(&model).unwrap();
        assert!(ss.rho_ee.abs() < 1e-12);
        assert!(ss.mean_photons.abs() < 1e-12);
        assert!(ss.rate(JumpChannel::CavityEmission).abs() < 1e-6);
        assert!(ss.trace_residual < 1e-10);
    }

    #[test]
    fn uncoupled_atom_matches_bloch_steady_state() {
        let params = SystemParams { g: 0.0, ..SystemParams::reference() };
        let model = build_model(&params, 1).unwrap();
        let ss = steady_state_oracle(&model).unwrap();
        // Closed-form two-level steady state at Γ = 2γ.
        let s0 = physpar::saturation(params.omega, params.delta_a, 2.0 * params.gamma).unwrap();
        let rho_ee_expected = s0 / 2.0 / (1.0 + s0);
        assert!(
            (ss.rho_ee - rho_ee_expected).abs() < 1e-8,
            "rho_ee {} vs {rho_ee_expected}",
            ss.rho_ee
        );
        // Free-space rate 2γ·ρee in the ordinary-frequency convention.
        let expected_rate = 2.0 * params.gamma * 1e6 * rho_ee_expected;
        let got = ss.rate(JumpChannel::FreeSpace);
        assert!((got / expected_rate - 1.0).abs() < 1e-6, "{got} vs {expected_rate}");
        assert!(ss.rate(JumpChannel::CavityEmission).abs() < 1e-9);
    }

    #[test]
    fn cavity_rate_matches_collection_rate_formula() {
        let params = SystemParams::reference();
        let model = build_model(&params, 2).unwrap();
        let ss = steady_state_oracle(&model).unwrap();
        let r_c = physpar::collection_rate(&params).unwrap();
        let got = ss.rate(JumpChannel::CavityEmission);
        // The weak-drive formula is exact to leading order in s ~ 0.05.
        assert!(
            (got / r_c - 1.0).abs() < 0.1,
            "oracle {got} vs closed form {r_c}"
        );
    }

    #[test]
    fn truncation_is_converged_at_reference_parameters() {
        let params = SystemParams::reference();
        let rate2 = steady_state_oracle(&build_model(&params, 2).unwrap())
            .unwrap()
            .rate(JumpChannel::CavityEmission);
        let rate3 = steady_state_oracle(&build_model(&params, 3).unwrap())
            .unwrap()
            .rate(JumpChannel::CavityEmission);
        assert!((rate3 / rate2 - 1.0).abs() < 0.01, "rates {rate2} vs {rate3}");
        let top = steady_state_oracle(&build_model(&params, 2).unwrap())
            .unwrap()
            .top_fock_occupancy;
        assert!(top < 1e-3, "top Fock occupancy {top}");
    }

    #[test]
    fn degenerate_nullspace_is_reported() {
        // No dissipation at all: every population distribution in the
        // eigenbasis is stationary.
        let params = SystemParams::reference();
        let mut model = build_model(&params, 1).unwrap();
        for channel in &mut model.jump_channels {
            channel.rate_prefactor = 0.0;
        }
        match steady_state_oracle(&model) {
            Err(McwfError::DegenerateSteadyState { nullspace_dim }) => {
                assert!(nullspace_dim > 1);
            }
            other => panic!("expected degenerate steady state, got {other:?}"),
        }
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let model = build_model(&SystemParams::reference(), 40).unwrap();
        assert!(matches!(
            steady_state_oracle(&model),
            Err(McwfError::DimensionTooLarge { dimension: 82, max: 64 })
        ));
    }
}
