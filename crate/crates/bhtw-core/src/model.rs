//! Chain parameters, phase-space state representations, Hamiltonians, and
//! equation-of-motion right-hand sides.
//!
//! Two coordinate systems describe the same chain of `L` sites:
//!
//! * canonical pairs `(P_j, Q_j)` — the representation every trajectory
//!   evolves in (regular at zero occupation);
//! * number-phase pairs `(I_j, phi_j)` with `P = sqrt(2I) sin(phi)`,
//!   `Q = sqrt(2I) cos(phi)` — diagnostic-only (the angle equation divides
//!   by `sqrt(I)`).
//!
//! The drift supports two chemical-potential conventions: the bare `mu` of
//! the classical equations of motion, and the shifted `mu_tilde = mu + U`
//! that the symmetric-ordering (Weyl-symbol) Hamiltonian produces. Ensemble
//! propagation always uses the shifted convention; the bare one is kept for
//! classical-limit comparisons. The shift is a global phase rotation that
//! cancels in equal-time occupation observables but not in cross-time terms,
//! so the distinction matters for the jump-correction accumulators.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Default ratio `c` in `J = c / t0` (time measured in units of `t0 = 1`).
pub const HOPPING_TIME_RATIO: f64 = 2.0e-4;

/// Which chemical potential enters the drift.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MuConvention {
    /// Bare `mu` — classical equations of motion.
    Bare,
    /// Shifted `mu_tilde = mu + U` — symmetric-ordering drift used for
    /// ensemble propagation.
    Shifted,
}

/// Operator-ordering convention for Hamiltonian evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Ordering {
    /// Bare `mu` in the quadratic term.
    Classical,
    /// `mu_tilde = mu + U` in the quadratic term (the quantity conserved by
    /// the propagation drift; used by run-time conservation monitors).
    Wigner,
}

/// Physical constants of one open Bose-Hubbard chain.
///
/// Fields are public for ergonomic literal construction in tests and
/// configuration code; call [`ChainParams::validate`] (or build through
/// [`ChainParams::new`] / [`ChainParams::from_ratios`]) before use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainParams {
    /// Site count `L`. Physical runs use `L >= 2`; a single site is allowed
    /// for analytic limit checks (all hopping terms are then absent).
    pub sites: usize,
    /// Hopping `J >= 0` in units of `1/t0`. Zero is allowed for integrable
    /// control runs.
    pub hopping: f64,
    /// On-site repulsion `U >= 0`.
    pub interaction: f64,
    /// Chemical potential `mu` (any sign).
    pub chemical_potential: f64,
    /// Effective Planck constant of the rescaled problem (default 1).
    pub hbar_eff: f64,
}

impl ChainParams {
    /// Validated constructor.
    pub fn new(
        sites: usize,
        hopping: f64,
        interaction: f64,
        chemical_potential: f64,
        hbar_eff: f64,
    ) -> Result<Self> {
        let params = ChainParams {
            sites,
            hopping,
            interaction,
            chemical_potential,
            hbar_eff,
        };
        params.validate()?;
        Ok(params)
    }

    /// Builds parameters from the conventional dimensionless ratios, with
    /// `J = HOPPING_TIME_RATIO / t0` and `hbar_eff = 1`.
    pub fn from_ratios(sites: usize, u_over_j: f64, mu_over_j: f64) -> Result<Self> {
        let j = HOPPING_TIME_RATIO;
        Self::new(sites, j, u_over_j * j, mu_over_j * j, 1.0)
    }

    /// Checks the parameter invariants.
    pub fn validate(&self) -> Result<()> {
        if self.sites == 0 {
            return Err(CoreError::InvalidParameter {
                name: "sites",
                reason: "chain must have at least one site".into(),
            });
        }
        for (name, value, lower) in [
            ("hopping", self.hopping, 0.0),
            ("interaction", self.interaction, 0.0),
        ] {
            if !value.is_finite() || value < lower {
                return Err(CoreError::InvalidParameter {
                    name,
                    reason: format!("must be finite and >= {lower}, got {value}"),
                });
            }
        }
        if !self.chemical_potential.is_finite() {
            return Err(CoreError::InvalidParameter {
                name: "chemical_potential",
                reason: format!("must be finite, got {}", self.chemical_potential),
            });
        }
        if !self.hbar_eff.is_finite() || self.hbar_eff <= 0.0 {
            return Err(CoreError::InvalidParameter {
                name: "hbar_eff",
                reason: format!("must be finite and > 0, got {}", self.hbar_eff),
            });
        }
        Ok(())
    }

    /// Shifted chemical potential `mu_tilde = mu + U`.
    pub fn mu_tilde(&self) -> f64 {
        self.chemical_potential + self.interaction
    }

    /// The chemical potential selected by a drift convention.
    pub fn mu_for(&self, convention: MuConvention) -> f64 {
        match convention {
            MuConvention::Bare => self.chemical_potential,
            MuConvention::Shifted => self.mu_tilde(),
        }
    }
}

/// One phase-space point: canonical momenta `P` and coordinates `Q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseState {
    pub p: Vec<f64>,
    pub q: Vec<f64>,
}

impl PhaseState {
    /// Zero state of `sites` sites.
    pub fn zero(sites: usize) -> Self {
        PhaseState {
            p: vec![0.0; sites],
            q: vec![0.0; sites],
        }
    }

    /// Builds from raw component vectors (must be equal length).
    pub fn from_parts(p: Vec<f64>, q: Vec<f64>) -> Result<Self> {
        if p.len() != q.len() {
            return Err(CoreError::ShapeMismatch {
                what: format!("P has {} components, Q has {}", p.len(), q.len()),
            });
        }
        Ok(PhaseState { p, q })
    }

    pub fn sites(&self) -> usize {
        self.p.len()
    }

    /// Total number `sum_j (P_j^2 + Q_j^2) / 2`.
    pub fn number(&self) -> f64 {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| 0.5 * (p * p + q * q))
            .sum()
    }

    /// Per-site occupations `I_j = (P_j^2 + Q_j^2) / 2`.
    pub fn occupations(&self) -> Vec<f64> {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| 0.5 * (p * p + q * q))
            .collect()
    }

    /// Converts to number-phase variables; angles in `[-pi, pi)`.
    pub fn to_number_phase(&self) -> NumberPhaseState {
        let occupation = self.occupations();
        let phase = self
            .p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| wrap_angle(p.atan2(q)))
            .collect();
        NumberPhaseState { occupation, phase }
    }

    pub(crate) fn check_dims(&self, params: &ChainParams) -> Result<()> {
        if self.sites() != params.sites {
            return Err(CoreError::ShapeMismatch {
                what: format!(
                    "state has {} sites, parameters expect {}",
                    self.sites(),
                    params.sites
                ),
            });
        }
        Ok(())
    }
}

/// Number-phase representation: occupations `I` and wrapped angles `phi`.
#[derive(Debug, Clone, PartialEq)]
pub struct NumberPhaseState {
    pub occupation: Vec<f64>,
    pub phase: Vec<f64>,
}

impl NumberPhaseState {
    pub fn sites(&self) -> usize {
        self.occupation.len()
    }

    /// Converts back to canonical variables.
    pub fn to_phase_state(&self) -> PhaseState {
        let p = self
            .occupation
            .iter()
            .zip(&self.phase)
            .map(|(&i, &phi)| (2.0 * i).sqrt() * phi.sin())
            .collect();
        let q = self
            .occupation
            .iter()
            .zip(&self.phase)
            .map(|(&i, &phi)| (2.0 * i).sqrt() * phi.cos())
            .collect();
        PhaseState { p, q }
    }
}

/// Wraps an angle into `[-pi, pi)`.
pub fn wrap_angle(x: f64) -> f64 {
    use std::f64::consts::PI;
    let wrapped = x - 2.0 * PI * ((x + PI) / (2.0 * PI)).floor();
    // Guard the half-open upper edge against floating-point rounding.
    if wrapped >= PI {
        -PI
    } else {
        wrapped
    }
}

/// Total chain energy under the requested ordering convention.
///
/// `H = sum_j [ -J (P_j P_{j+1} + Q_j Q_{j+1}) + (U/8)(P_j^2+Q_j^2)^2
///              - (mu_eff/2)(P_j^2+Q_j^2) ]`, open chain (the `j = L` edge
/// term of the hopping sum is absent).
pub fn hamiltonian(state: &PhaseState, params: &ChainParams, ordering: Ordering) -> Result<f64> {
    state.check_dims(params)?;
    let mu_eff = match ordering {
        Ordering::Classical => params.chemical_potential,
        Ordering::Wigner => params.mu_tilde(),
    };
    Ok(hamiltonian_raw(
        &state.p,
        &state.q,
        params.hopping,
        params.interaction,
        mu_eff,
    ))
}

/// Slice-level Hamiltonian kernel (no dimension checks); used by the
/// integrator's conservation monitor on its flat buffers.
pub fn hamiltonian_raw(p: &[f64], q: &[f64], hopping: f64, interaction: f64, mu_eff: f64) -> f64 {
    let l = p.len();
    let mut energy = 0.0;
    for j in 0..l {
        let r2 = p[j] * p[j] + q[j] * q[j];
        energy += 0.125 * interaction * r2 * r2 - 0.5 * mu_eff * r2;
        if j + 1 < l {
            energy -= hopping * (p[j] * p[j + 1] + q[j] * q[j + 1]);
        }
    }
    energy
}

/// Slice-level drift kernel (no dimension checks): writes
///
/// `dP_j = -J (Q_{j-1} + Q_{j+1}) + Q_j ((U/2)(P_j^2+Q_j^2) - mu_eff)`
/// `dQ_j =  J (P_{j-1} + P_{j+1}) - P_j ((U/2)(P_j^2+Q_j^2) - mu_eff)`
///
/// with missing neighbors at the open edges contributing zero. This is the
/// innermost loop of every trajectory; keep it allocation-free.
#[inline]
pub fn drift_into(
    p: &[f64],
    q: &[f64],
    hopping: f64,
    interaction: f64,
    mu_eff: f64,
    dp: &mut [f64],
    dq: &mut [f64],
) {
    let l = p.len();
    debug_assert!(q.len() == l && dp.len() == l && dq.len() == l);
    let u_half = 0.5 * interaction;
    for j in 0..l {
        let mut q_nb = 0.0;
        let mut p_nb = 0.0;
        if j > 0 {
            q_nb += q[j - 1];
            p_nb += p[j - 1];
        }
        if j + 1 < l {
            q_nb += q[j + 1];
            p_nb += p[j + 1];
        }
        let r2 = p[j] * p[j] + q[j] * q[j];
        let w = u_half * r2 - mu_eff;
        dp[j] = -hopping * q_nb + q[j] * w;
        dq[j] = hopping * p_nb - p[j] * w;
    }
}

/// Canonical-variable drift under the chosen chemical-potential convention.
pub fn drift_pq(
    state: &PhaseState,
    params: &ChainParams,
    convention: MuConvention,
) -> Result<(Vec<f64>, Vec<f64>)> {
    state.check_dims(params)?;
    let mut dp = vec![0.0; state.sites()];
    let mut dq = vec![0.0; state.sites()];
    drift_into(
        &state.p,
        &state.q,
        params.hopping,
        params.interaction,
        params.mu_for(convention),
        &mut dp,
        &mut dq,
    );
    Ok((dp, dq))
}

/// Number-phase drift:
///
/// `dI_j   = 2J ( sqrt(I_j I_{j-1}) sin(phi_{j-1} - phi_j)
///              + sqrt(I_j I_{j+1}) sin(phi_{j+1} - phi_j) )`
/// `dphi_j = -mu_eff + U I_j - J ( sqrt(I_{j-1}/I_j) cos(phi_j - phi_{j-1})
///                               + sqrt(I_{j+1}/I_j) cos(phi_j - phi_{j+1}) )`
///
/// Diagnostic-only: every occupation must be strictly positive because the
/// angle equation divides by `sqrt(I_j)`. `sum_j dI_j = 0` identically
/// (pairwise antisymmetric fluxes).
pub fn drift_numberphase(
    state: &NumberPhaseState,
    params: &ChainParams,
    convention: MuConvention,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if state.sites() != params.sites {
        return Err(CoreError::ShapeMismatch {
            what: format!(
                "state has {} sites, parameters expect {}",
                state.sites(),
                params.sites
            ),
        });
    }
    for (site, &i) in state.occupation.iter().enumerate() {
        if i <= 0.0 {
            return Err(CoreError::SingularOccupation { site, value: i });
        }
    }
    let l = state.sites();
    let (i, phi) = (&state.occupation, &state.phase);
    let (j_hop, u) = (params.hopping, params.interaction);
    let mu_eff = params.mu_for(convention);
    let mut di = vec![0.0; l];
    let mut dphi = vec![0.0; l];
    for n in 0..l {
        let mut flux = 0.0;
        let mut pull = 0.0;
        if n > 0 {
            flux += (i[n] * i[n - 1]).sqrt() * (phi[n - 1] - phi[n]).sin();
            pull += (i[n - 1] / i[n]).sqrt() * (phi[n] - phi[n - 1]).cos();
        }
        if n + 1 < l {
            flux += (i[n] * i[n + 1]).sqrt() * (phi[n + 1] - phi[n]).sin();
            pull += (i[n + 1] / i[n]).sqrt() * (phi[n] - phi[n + 1]).cos();
        }
        di[n] = 2.0 * j_hop * flux;
        dphi[n] = -mu_eff + u * i[n] - j_hop * pull;
    }
    Ok((di, dphi))
}

/// Per-site energy density
///
/// `h_j = -J (P_j P_{j+1} + Q_j Q_{j+1}) - (U/8)(P_j^2+Q_j^2)^2
///        - (mu/2)(P_j^2+Q_j^2)`
///
/// (edge hopping term absent at `j = L`). Note the quartic term enters with
/// the opposite sign relative to [`hamiltonian`]; the densities therefore sum
/// to the classical total minus twice the quartic part:
/// `sum_j h_j = H_classical - (U/4) sum_j (P_j^2+Q_j^2)^2`. Transport
/// diagnostics use `h_j` as-is; conservation monitors use [`hamiltonian`].
pub fn local_energy(state: &PhaseState, params: &ChainParams) -> Result<Vec<f64>> {
    state.check_dims(params)?;
    let l = state.sites();
    let (p, q) = (&state.p, &state.q);
    let mut h = vec![0.0; l];
    for j in 0..l {
        let r2 = p[j] * p[j] + q[j] * q[j];
        h[j] = -0.125 * params.interaction * r2 * r2
            - 0.5 * params.chemical_potential * r2;
        if j + 1 < l {
            h[j] -= params.hopping * (p[j] * p[j + 1] + q[j] * q[j + 1]);
        }
    }
    Ok(h)
}

/// Per-site tiling of the conserved propagation energy: same bond assignment
/// as [`local_energy`] but with the on-site quartic entering at `+U/8` and
/// the shifted chemical potential, so the site sum reproduces
/// [`hamiltonian_raw`] exactly and is constant along the flow. The headline
/// [`local_energy`] observable instead carries the opposite quartic sign and
/// the bare potential; its site sum differs from the conserved energy by
/// `U (N - sum_j I_j^2)`, which drifts whenever occupations spread.
pub fn local_energy_conserved_tiling(
    state: &PhaseState,
    params: &ChainParams,
) -> Result<Vec<f64>> {
    state.check_dims(params)?;
    let l = state.sites();
    let (p, q) = (&state.p, &state.q);
    let mu_eff = params.mu_tilde();
    let mut h = vec![0.0; l];
    for j in 0..l {
        let r2 = p[j] * p[j] + q[j] * q[j];
        h[j] = 0.125 * params.interaction * r2 * r2 - 0.5 * mu_eff * r2;
        if j + 1 < l {
            h[j] -= params.hopping * (p[j] * p[j + 1] + q[j] * q[j + 1]);
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_state(rng: &mut ChaCha8Rng, sites: usize) -> PhaseState {
        // Components of order one, away from zero occupation.
        let mut p = Vec::with_capacity(sites);
        let mut q = Vec::with_capacity(sites);
        for _ in 0..sites {
            loop {
                let pj: f64 = rng.random_range(-1.5..1.5);
                let qj: f64 = rng.random_range(-1.5..1.5);
                if pj * pj + qj * qj > 1e-2 {
                    p.push(pj);
                    q.push(qj);
                    break;
                }
            }
        }
        PhaseState { p, q }
    }

    fn test_params(sites: usize) -> ChainParams {
        ChainParams::new(sites, 0.7, 1.3, -0.4, 1.0).unwrap()
    }

    #[test]
    fn hamiltonian_zero_state_is_zero() {
        let params = test_params(6);
        let state = PhaseState::zero(6);
        assert_eq!(hamiltonian(&state, &params, Ordering::Classical).unwrap(), 0.0);
        assert_eq!(hamiltonian(&state, &params, Ordering::Wigner).unwrap(), 0.0);
    }

    #[test]
    fn hamiltonian_single_quartic_term() {
        // Single site, P = sqrt(2), Q = 0, U = 2, mu = 0, classical ordering:
        // only the quartic term survives, (U/8) * (P^2)^2 = (2/8) * 4 = 1.
        let params = ChainParams::new(1, 0.3, 2.0, 0.0, 1.0).unwrap();
        let state = PhaseState::from_parts(vec![2.0_f64.sqrt()], vec![0.0]).unwrap();
        assert_relative_eq!(
            hamiltonian(&state, &params, Ordering::Classical).unwrap(),
            1.0,
            max_relative = 1e-15
        );
    }

    #[test]
    fn hamiltonian_matches_number_phase_form() {
        // Cross-representation oracle: H = sum_j [(U/2) I_j^2 - mu I_j]
        //                                 - 2J sum_j sqrt(I_j I_{j+1}) cos(phi_j - phi_{j+1}).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for sites in [2usize, 5, 9] {
            let params = test_params(sites);
            for _ in 0..20 {
                let state = random_state(&mut rng, sites);
                let np = state.to_number_phase();
                let mut reference = 0.0;
                for j in 0..sites {
                    let i = np.occupation[j];
                    reference +=
                        0.5 * params.interaction * i * i - params.chemical_potential * i;
                    if j + 1 < sites {
                        reference -= 2.0
                            * params.hopping
                            * (i * np.occupation[j + 1]).sqrt()
                            * (np.phase[j] - np.phase[j + 1]).cos();
                    }
                }
                let direct = hamiltonian(&state, &params, Ordering::Classical).unwrap();
                assert_abs_diff_eq!(direct, reference, epsilon = 1e-10 * reference.abs().max(1.0));
            }
        }
    }

    #[test]
    fn drift_zero_state_is_zero() {
        let params = test_params(5);
        let (dp, dq) = drift_pq(&PhaseState::zero(5), &params, MuConvention::Shifted).unwrap();
        assert!(dp.iter().chain(&dq).all(|&x| x == 0.0));
    }

    #[test]
    fn drift_single_site_pure_rotation() {
        // Single site, P = sqrt(2), Q = 0, U = 0, effective mu = 1:
        // dP = 0 and dQ = sqrt(2) (rotation at the chemical-potential rate).
        let params = ChainParams::new(1, 0.0, 0.0, 1.0, 1.0).unwrap();
        let state = PhaseState::from_parts(vec![2.0_f64.sqrt()], vec![0.0]).unwrap();
        let (dp, dq) = drift_pq(&state, &params, MuConvention::Shifted).unwrap();
        assert_abs_diff_eq!(dp[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(dq[0], 2.0_f64.sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn drift_is_hamiltonian_flow() {
        // Finite-difference oracle: dP_j = +dH/dQ_j, dQ_j = -dH/dP_j for the
        // Wigner-ordered Hamiltonian (the drift's symplectic pairing).
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let sites = 7;
        let params = test_params(sites);
        let state = random_state(&mut rng, sites);
        let (dp, dq) = drift_pq(&state, &params, MuConvention::Shifted).unwrap();
        let eps = 1e-6;
        for j in 0..sites {
            let mut plus = state.clone();
            let mut minus = state.clone();
            plus.q[j] += eps;
            minus.q[j] -= eps;
            let dh_dq = (hamiltonian(&plus, &params, Ordering::Wigner).unwrap()
                - hamiltonian(&minus, &params, Ordering::Wigner).unwrap())
                / (2.0 * eps);
            assert_abs_diff_eq!(dp[j], dh_dq, epsilon = 1e-7);

            let mut plus = state.clone();
            let mut minus = state.clone();
            plus.p[j] += eps;
            minus.p[j] -= eps;
            let dh_dp = (hamiltonian(&plus, &params, Ordering::Wigner).unwrap()
                - hamiltonian(&minus, &params, Ordering::Wigner).unwrap())
                / (2.0 * eps);
            assert_abs_diff_eq!(dq[j], -dh_dp, epsilon = 1e-7);
        }
    }

    #[test]
    fn drifts_agree_across_representations() {
        // Chain-rule oracle: dI_j = P_j dP_j + Q_j dQ_j and
        // dphi_j = (Q_j dP_j - P_j dQ_j) / (2 I_j), compared against the
        // number-phase right-hand side on random nonsingular states.
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for &convention in &[MuConvention::Bare, MuConvention::Shifted] {
            for sites in [2usize, 6, 11] {
                let params = test_params(sites);
                for _ in 0..10 {
                    let state = random_state(&mut rng, sites);
                    let np = state.to_number_phase();
                    let (dp, dq) = drift_pq(&state, &params, convention).unwrap();
                    let (di, dphi) = drift_numberphase(&np, &params, convention).unwrap();
                    for j in 0..sites {
                        let di_chain = state.p[j] * dp[j] + state.q[j] * dq[j];
                        let dphi_chain = (state.q[j] * dp[j] - state.p[j] * dq[j])
                            / (2.0 * np.occupation[j]);
                        assert_relative_eq!(di[j], di_chain, max_relative = 1e-9, epsilon = 1e-12);
                        assert_relative_eq!(
                            dphi[j],
                            dphi_chain,
                            max_relative = 1e-9,
                            epsilon = 1e-12
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn numberphase_flux_conserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let params = test_params(8);
        let np = random_state(&mut rng, 8).to_number_phase();
        let (di, _) = drift_numberphase(&np, &params, MuConvention::Shifted).unwrap();
        let total: f64 = di.iter().sum();
        assert_abs_diff_eq!(total, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn numberphase_zero_hopping_freezes_occupations() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let params = ChainParams::new(6, 0.0, 1.3, -0.4, 1.0).unwrap();
        let np = random_state(&mut rng, 6).to_number_phase();
        let (di, _) = drift_numberphase(&np, &params, MuConvention::Shifted).unwrap();
        assert!(di.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn numberphase_uniform_state_is_stationary_in_occupation() {
        let params = test_params(5);
        let np = NumberPhaseState {
            occupation: vec![0.2; 5],
            phase: vec![0.7; 5],
        };
        let (di, _) = drift_numberphase(&np, &params, MuConvention::Shifted).unwrap();
        assert!(di.iter().all(|&x| x.abs() < 1e-15));
    }

    #[test]
    fn numberphase_gauge_shift_leaves_occupation_flux_unchanged() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let params = test_params(7);
        let np = random_state(&mut rng, 7).to_number_phase();
        let shifted = NumberPhaseState {
            occupation: np.occupation.clone(),
            phase: np.phase.iter().map(|&x| x + 0.913).collect(),
        };
        let (di_a, _) = drift_numberphase(&np, &params, MuConvention::Shifted).unwrap();
        let (di_b, _) = drift_numberphase(&shifted, &params, MuConvention::Shifted).unwrap();
        for (a, b) in di_a.iter().zip(&di_b) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn numberphase_rejects_empty_site() {
        let params = test_params(3);
        let np = NumberPhaseState {
            occupation: vec![0.4, 0.0, 0.6],
            phase: vec![0.0; 3],
        };
        let err = drift_numberphase(&np, &params, MuConvention::Shifted).unwrap_err();
        assert!(matches!(err, CoreError::SingularOccupation { site: 1, .. }));
    }

    #[test]
    fn local_energy_zero_state() {
        let params = test_params(4);
        let h = local_energy(&PhaseState::zero(4), &params).unwrap();
        assert!(h.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn local_energy_single_filled_site() {
        let params = test_params(5);
        let mut state = PhaseState::zero(5);
        state.q[2] = 2.0_f64.sqrt();
        let h = local_energy(&state, &params).unwrap();
        for (j, &hj) in h.iter().enumerate() {
            if j == 2 {
                // r2 = 2: h = -U/8 * 4 - mu/2 * 2 with U = 1.3, mu = -0.4.
                assert_relative_eq!(hj, -1.3 * 0.5 + 0.4, max_relative = 1e-14);
            } else {
                assert_eq!(hj, 0.0);
            }
        }
    }

    #[test]
    fn local_energy_sums_to_total_minus_twice_quartic() {
        // sum_j h_j = H_classical - (U/4) sum_j (P_j^2+Q_j^2)^2 exactly.
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for sites in [2usize, 7] {
            let params = test_params(sites);
            for _ in 0..20 {
                let state = random_state(&mut rng, sites);
                let total: f64 = local_energy(&state, &params).unwrap().iter().sum();
                let quartic: f64 = state
                    .p
                    .iter()
                    .zip(&state.q)
                    .map(|(&p, &q)| {
                        let r2 = p * p + q * q;
                        r2 * r2
                    })
                    .sum();
                let reference = hamiltonian(&state, &params, Ordering::Classical).unwrap()
                    - 0.25 * params.interaction * quartic;
                assert_abs_diff_eq!(total, reference, epsilon = 1e-10 * reference.abs().max(1.0));
            }
        }
    }

    #[test]
    fn number_phase_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let state = random_state(&mut rng, 9);
        let roundtrip = state.to_number_phase().to_phase_state();
        for j in 0..9 {
            assert_abs_diff_eq!(state.p[j], roundtrip.p[j], epsilon = 1e-12);
            assert_abs_diff_eq!(state.q[j], roundtrip.q[j], epsilon = 1e-12);
        }
    }

    #[test]
    fn wrap_angle_range_and_fixpoints() {
        assert_eq!(wrap_angle(0.0), 0.0);
        assert_abs_diff_eq!(wrap_angle(PI), -PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(-PI), -PI, epsilon = 1e-15);
        assert_abs_diff_eq!(wrap_angle(3.0 * PI), -PI, epsilon = 1e-12);
        assert_abs_diff_eq!(wrap_angle(2.5 * PI), 0.5 * PI, epsilon = 1e-12);
        for k in -20..20 {
            let x = 0.37 + 0.77 * k as f64;
            let w = wrap_angle(x);
            assert!((-PI..PI).contains(&w), "wrap_angle({x}) = {w} out of range");
            // Same point on the circle.
            assert_abs_diff_eq!((x - w).rem_euclid(2.0 * PI), 0.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn params_validation_rejects_bad_values() {
        assert!(ChainParams::new(0, 1.0, 1.0, 0.0, 1.0).is_err());
        assert!(ChainParams::new(4, -1.0, 1.0, 0.0, 1.0).is_err());
        assert!(ChainParams::new(4, 1.0, -0.1, 0.0, 1.0).is_err());
        assert!(ChainParams::new(4, 1.0, 1.0, f64::NAN, 1.0).is_err());
        assert!(ChainParams::new(4, 1.0, 1.0, 0.0, 0.0).is_err());
        let p = ChainParams::from_ratios(10, 5.0, 0.25).unwrap();
        assert_relative_eq!(p.hopping, HOPPING_TIME_RATIO);
        assert_relative_eq!(p.interaction, 5.0 * HOPPING_TIME_RATIO);
        assert_relative_eq!(p.chemical_potential, 0.25 * HOPPING_TIME_RATIO);
        assert_relative_eq!(p.mu_tilde() - p.chemical_potential, p.interaction);
    }
}
