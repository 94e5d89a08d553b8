//! Single-trajectory time evolution.
//!
//! A fixed-step fourth-order Runge-Kutta integrator advances one phase-space
//! trajectory under the shifted-potential drift, records states on a uniform
//! output grid, and accumulates the running time-integrals of every `P_k` and
//! `Q_k` (trapezoidal rule on internal steps) that the first-order correction
//! estimators contract against. Conservation of total number and of the
//! shifted-ordering energy is monitored at every output point.
//!
//! A fixed step (rather than adaptive stepping) keeps output grids uniform —
//! spectra, the spectral form factor, and cross-trajectory reductions all
//! need commensurate grids. The default `h = 0.1 t0` resolves the fastest
//! dynamical scale (periods are of order `1/J = 5000 t0` and longer) with
//! several orders of magnitude to spare; coarser steps remain well inside the
//! conservation tolerance and are used by long-horizon runs.
//!
//! The module also hosts the stochastic-jump evolution used by the reference
//! correction mode: weighted Gaussian displacements applied every
//! `jump_stride` internal steps, with per-event weights and Riemann-sum
//! accumulators collected in a [`JumpLedger`] (see [`evolve_with_langevin_jumps`]).

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{drift_into, hamiltonian_raw, ChainParams, PhaseState};

/// Fixed-step integrator configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    /// Internal step `h` in units of `t0`.
    pub step: f64,
    /// Total integration time; rounded up so the grid holds a whole number
    /// of output strides.
    pub t_final: f64,
    /// Internal steps per stored output sample.
    pub output_stride: usize,
    /// Allowed relative drift of total number and shifted-ordering energy.
    pub conservation_tol: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 0.1,
            t_final: 2.0e4,
            output_stride: 10,
            conservation_tol: 1e-6,
        }
    }
}

impl IntegratorConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.step.is_finite() || self.step <= 0.0 {
            return Err(CoreError::InvalidParameter {
                name: "step",
                reason: format!("must be finite and > 0, got {}", self.step),
            });
        }
        if !self.t_final.is_finite() || self.t_final < self.step {
            return Err(CoreError::InvalidParameter {
                name: "t_final",
                reason: format!("must be finite and >= step, got {}", self.t_final),
            });
        }
        if self.output_stride == 0 {
            return Err(CoreError::InvalidParameter {
                name: "output_stride",
                reason: "must be >= 1".into(),
            });
        }
        if !self.conservation_tol.is_finite() || self.conservation_tol <= 0.0 {
            return Err(CoreError::InvalidParameter {
                name: "conservation_tol",
                reason: format!("must be finite and > 0, got {}", self.conservation_tol),
            });
        }
        Ok(())
    }

    /// Total internal steps: `round(t_final / step)` rounded up to a whole
    /// number of output strides (so the last grid point is stored).
    pub fn total_steps(&self) -> usize {
        let raw = (self.t_final / self.step).round().max(1.0) as usize;
        raw.div_ceil(self.output_stride) * self.output_stride
    }

    /// Stored grid points, including `t = 0`.
    pub fn grid_len(&self) -> usize {
        self.total_steps() / self.output_stride + 1
    }

    /// Time of grid point `g`.
    pub fn grid_time(&self, g: usize) -> f64 {
        (g * self.output_stride) as f64 * self.step
    }
}

/// One recorded trajectory: states and correction accumulators on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub states: Vec<PhaseState>,
    /// `cumint_p[g][k] = integral of P_k from 0 to times[g]`.
    pub cumint_p: Vec<Vec<f64>>,
    /// `cumint_q[g][k] = integral of Q_k from 0 to times[g]`.
    pub cumint_q: Vec<Vec<f64>>,
}

impl TrajectoryRecord {
    pub fn grid_len(&self) -> usize {
        self.times.len()
    }
}

/// Streaming RK4 stepper with trapezoidal accumulators and a conservation
/// monitor. The ensemble driver folds observables directly from this state
/// without materializing a [`TrajectoryRecord`].
pub struct Stepper {
    hopping: f64,
    interaction: f64,
    mu_eff: f64,
    h: f64,
    tol: f64,
    steps_taken: u64,
    p: Vec<f64>,
    q: Vec<f64>,
    cum_p: Vec<f64>,
    cum_q: Vec<f64>,
    // Conserved references (rebased after stochastic jumps).
    number_ref: f64,
    energy_ref: f64,
    energy_scale: f64,
    // RK4 scratch.
    k_p: [Vec<f64>; 4],
    k_q: [Vec<f64>; 4],
    stage_p: Vec<f64>,
    stage_q: Vec<f64>,
}

impl Stepper {
    /// Propagation always uses the shifted chemical potential
    /// `mu_tilde = mu + U` (the symmetric-ordering drift).
    pub fn new(initial: &PhaseState, params: &ChainParams, cfg: &IntegratorConfig) -> Result<Self> {
        params.validate()?;
        cfg.validate()?;
        if initial.sites() != params.sites {
            return Err(CoreError::ShapeMismatch {
                what: format!(
                    "initial state has {} sites, parameters expect {}",
                    initial.sites(),
                    params.sites
                ),
            });
        }
        let l = params.sites;
        let mu_eff = params.mu_tilde();
        let number_ref = initial.number();
        let energy_ref = hamiltonian_raw(&initial.p, &initial.q, params.hopping, params.interaction, mu_eff);
        // Energy drift is measured relative to max(|E0|, a small fraction of
        // the characteristic energy scale) so ensembles whose energy happens
        // to cross zero are not tested against a vanishing denominator.
        let n_scale = number_ref.max(1.0);
        let energy_scale =
            1e-3 * (params.hopping + params.interaction + params.mu_tilde().abs()) * (n_scale + n_scale * n_scale);
        Ok(Stepper {
            hopping: params.hopping,
            interaction: params.interaction,
            mu_eff,
            h: cfg.step,
            tol: cfg.conservation_tol,
            steps_taken: 0,
            p: initial.p.clone(),
            q: initial.q.clone(),
            cum_p: vec![0.0; l],
            cum_q: vec![0.0; l],
            number_ref,
            energy_ref,
            energy_scale,
            k_p: std::array::from_fn(|_| vec![0.0; l]),
            k_q: std::array::from_fn(|_| vec![0.0; l]),
            stage_p: vec![0.0; l],
            stage_q: vec![0.0; l],
        })
    }

    pub fn time(&self) -> f64 {
        self.steps_taken as f64 * self.h
    }

    pub fn p(&self) -> &[f64] {
        &self.p
    }

    pub fn q(&self) -> &[f64] {
        &self.q
    }

    pub fn cumint_p(&self) -> &[f64] {
        &self.cum_p
    }

    pub fn cumint_q(&self) -> &[f64] {
        &self.cum_q
    }

    pub fn number(&self) -> f64 {
        self.p
            .iter()
            .zip(&self.q)
            .map(|(&p, &q)| 0.5 * (p * p + q * q))
            .sum()
    }

    pub fn energy(&self) -> f64 {
        hamiltonian_raw(&self.p, &self.q, self.hopping, self.interaction, self.mu_eff)
    }

    pub fn state(&self) -> PhaseState {
        PhaseState {
            p: self.p.clone(),
            q: self.q.clone(),
        }
    }

    /// One RK4 step plus trapezoid accumulation of the running integrals.
    pub fn step(&mut self) {
        let l = self.p.len();
        let (h, half) = (self.h, 0.5 * self.h);
        // Trapezoid: left endpoint.
        for j in 0..l {
            self.cum_p[j] += 0.5 * h * self.p[j];
            self.cum_q[j] += 0.5 * h * self.q[j];
        }
        // k1
        drift_into(&self.p, &self.q, self.hopping, self.interaction, self.mu_eff, &mut self.k_p[0], &mut self.k_q[0]);
        // k2
        for j in 0..l {
            self.stage_p[j] = self.p[j] + half * self.k_p[0][j];
            self.stage_q[j] = self.q[j] + half * self.k_q[0][j];
        }
        drift_into(&self.stage_p, &self.stage_q, self.hopping, self.interaction, self.mu_eff, &mut self.k_p[1], &mut self.k_q[1]);
        // k3
        for j in 0..l {
            self.stage_p[j] = self.p[j] + half * self.k_p[1][j];
            self.stage_q[j] = self.q[j] + half * self.k_q[1][j];
        }
        drift_into(&self.stage_p, &self.stage_q, self.hopping, self.interaction, self.mu_eff, &mut self.k_p[2], &mut self.k_q[2]);
        // k4
        for j in 0..l {
            self.stage_p[j] = self.p[j] + h * self.k_p[2][j];
            self.stage_q[j] = self.q[j] + h * self.k_q[2][j];
        }
        drift_into(&self.stage_p, &self.stage_q, self.hopping, self.interaction, self.mu_eff, &mut self.k_p[3], &mut self.k_q[3]);
        let sixth = h / 6.0;
        for j in 0..l {
            self.p[j] += sixth
                * (self.k_p[0][j] + 2.0 * self.k_p[1][j] + 2.0 * self.k_p[2][j] + self.k_p[3][j]);
            self.q[j] += sixth
                * (self.k_q[0][j] + 2.0 * self.k_q[1][j] + 2.0 * self.k_q[2][j] + self.k_q[3][j]);
        }
        // Trapezoid: right endpoint.
        for j in 0..l {
            self.cum_p[j] += 0.5 * h * self.p[j];
            self.cum_q[j] += 0.5 * h * self.q[j];
        }
        self.steps_taken += 1;
    }

    /// Verifies number and energy drift against the references; returns the
    /// first violated quantity. Called at output points.
    pub fn check_conservation(&self) -> Result<()> {
        let t = self.time();
        let number = self.number();
        let energy = self.energy();
        if !number.is_finite() || !energy.is_finite() {
            return Err(CoreError::NonFiniteState { t });
        }
        let n_drift = (number - self.number_ref).abs() / self.number_ref.max(f64::MIN_POSITIVE);
        if n_drift > self.tol {
            return Err(CoreError::ConservationViolated {
                quantity: "total number",
                drift: n_drift,
                tol: self.tol,
                t,
            });
        }
        let e_denom = self.energy_ref.abs().max(self.energy_scale).max(f64::MIN_POSITIVE);
        let e_drift = (energy - self.energy_ref).abs() / e_denom;
        if e_drift > self.tol {
            return Err(CoreError::ConservationViolated {
                quantity: "energy",
                drift: e_drift,
                tol: self.tol,
                t,
            });
        }
        Ok(())
    }

    /// NaN/overflow guard for trajectories whose conserved references are
    /// deliberately displaced (stochastic kicks) and so skip the full check.
    pub fn check_finite(&self) -> Result<()> {
        if self.p.iter().chain(&self.q).all(|v| v.is_finite()) {
            Ok(())
        } else {
            Err(CoreError::NonFiniteState { t: self.time() })
        }
    }

    /// Resets the conserved references to the current state. Called after a
    /// stochastic jump: the monitor guards the deterministic flow between
    /// jumps, not the jumps themselves (which displace number and energy by
    /// construction).
    pub fn rebase_conserved(&mut self) {
        self.number_ref = self.number();
        self.energy_ref = self.energy();
    }

    /// Applies one stochastic jump: per site draws `(R_k, S_k)` standard
    /// normal (in site order, `R` before `S`), accumulates the pre-jump
    /// Riemann sums `acc_p[k] += delta_tau * P_k`, `acc_q[k] += delta_tau * Q_k`
    /// and the weight kernel `sum_k (Q_k R_k + P_k S_k)(R_k^2 + S_k^2 - 4)`,
    /// then displaces `P_k += amplitude * R_k`, `Q_k += amplitude * S_k`.
    /// Returns the weight kernel. Conserved references are rebased.
    pub fn apply_jump(
        &mut self,
        amplitude: f64,
        delta_tau: f64,
        rng: &mut ChaCha8Rng,
        acc_p: &mut [f64],
        acc_q: &mut [f64],
    ) -> f64 {
        let l = self.p.len();
        debug_assert!(acc_p.len() == l && acc_q.len() == l);
        let mut kernel = 0.0;
        for j in 0..l {
            let r: f64 = rng.sample(StandardNormal);
            let s: f64 = rng.sample(StandardNormal);
            acc_p[j] += delta_tau * self.p[j];
            acc_q[j] += delta_tau * self.q[j];
            kernel += (self.q[j] * r + self.p[j] * s) * (r * r + s * s - 4.0);
            self.p[j] += amplitude * r;
            self.q[j] += amplitude * s;
        }
        self.rebase_conserved();
        kernel
    }
}

/// Integrates one trajectory and records it on the output grid.
pub fn evolve(
    initial: &PhaseState,
    params: &ChainParams,
    cfg: &IntegratorConfig,
) -> Result<TrajectoryRecord> {
    let mut stepper = Stepper::new(initial, params, cfg)?;
    let total = cfg.total_steps();
    let stride = cfg.output_stride;
    let grid = cfg.grid_len();
    let mut record = TrajectoryRecord {
        times: Vec::with_capacity(grid),
        states: Vec::with_capacity(grid),
        cumint_p: Vec::with_capacity(grid),
        cumint_q: Vec::with_capacity(grid),
    };
    push_snapshot(&mut record, &stepper);
    for s in 1..=total {
        stepper.step();
        if s % stride == 0 {
            stepper.check_conservation()?;
            push_snapshot(&mut record, &stepper);
        }
    }
    Ok(record)
}

fn push_snapshot(record: &mut TrajectoryRecord, stepper: &Stepper) {
    record.times.push(stepper.time());
    record.states.push(stepper.state());
    record.cumint_p.push(stepper.cumint_p().to_vec());
    record.cumint_q.push(stepper.cumint_q().to_vec());
}

/// One recorded jump event.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpEvent {
    pub time: f64,
    /// `w_A = (U / (8 hbar_eff)) * 2 pi * sum_k (Q_k R_k + P_k S_k)(R_k^2 + S_k^2 - 4)`
    /// evaluated on the pre-jump state.
    pub weight: f64,
}

/// Jump bookkeeping for one stochastic trajectory: per-event weights plus the
/// per-site Riemann accumulators `sum_{tau_A <= t} delta_tau * P_k(tau_A^-)`
/// (pre-jump values) stored at every output grid point. The accumulators are
/// the jump-grid discretization of the cumulative integrals that the
/// integrated correction mode computes by trapezoid.
#[derive(Debug, Clone, PartialEq)]
pub struct JumpLedger {
    pub delta_tau: f64,
    pub jump_scale: f64,
    pub events: Vec<JumpEvent>,
    /// `sum_p[g][k]`, aligned with the record's grid.
    pub sum_p: Vec<Vec<f64>>,
    pub sum_q: Vec<Vec<f64>>,
}

/// Default multiplier on the jump displacement amplitude.
///
/// The displacement per site and event is
/// `jump_scale * cbrt(U * delta_tau / (8 hbar_eff))` times a standard normal:
/// the cube root carries the third-moment budget of the cubic-derivative
/// generator per jump interval (and vanishes with `U`, so the zero-coupling
/// evolution is exactly jump-free). The bare cube-root amplitude accumulates
/// kick variance `t * delta_tau^{-1/3} * (U/8hbar)^{2/3}` along a trajectory,
/// which at the default jump interval overwhelms the dynamics well inside the
/// observation window; the default scale keeps the accumulated displacement a
/// small perturbation there while leaving the correction estimator — whose
/// expectation is amplitude-independent at first order — unchanged.
pub const DEFAULT_JUMP_SCALE: f64 = 0.1;

/// Integrates one trajectory with stochastic jumps every `jump_stride`
/// internal steps (`delta_tau = jump_stride * h`), recording displaced states
/// and the jump ledger. At a step that is both a jump time and an output
/// point the jump is applied first, so stored states are post-jump.
pub fn evolve_with_langevin_jumps(
    initial: &PhaseState,
    params: &ChainParams,
    cfg: &IntegratorConfig,
    jump_stride: usize,
    seed: u64,
) -> Result<(TrajectoryRecord, JumpLedger)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    evolve_with_langevin_jumps_rng(initial, params, cfg, jump_stride, DEFAULT_JUMP_SCALE, &mut rng)
}

/// [`evolve_with_langevin_jumps`] with explicit amplitude scale and RNG (the
/// ensemble driver passes per-trajectory jump streams).
pub fn evolve_with_langevin_jumps_rng(
    initial: &PhaseState,
    params: &ChainParams,
    cfg: &IntegratorConfig,
    jump_stride: usize,
    jump_scale: f64,
    rng: &mut ChaCha8Rng,
) -> Result<(TrajectoryRecord, JumpLedger)> {
    if jump_stride == 0 {
        return Err(CoreError::InvalidParameter {
            name: "jump_stride",
            reason: "must be >= 1".into(),
        });
    }
    if !jump_scale.is_finite() || jump_scale < 0.0 {
        return Err(CoreError::InvalidParameter {
            name: "jump_scale",
            reason: format!("must be finite and >= 0, got {jump_scale}"),
        });
    }
    let mut stepper = Stepper::new(initial, params, cfg)?;
    let l = params.sites;
    let delta_tau = jump_stride as f64 * cfg.step;
    let amplitude = jump_scale * (params.interaction * delta_tau / (8.0 * params.hbar_eff)).cbrt();
    let weight_prefactor =
        params.interaction / (8.0 * params.hbar_eff) * 2.0 * std::f64::consts::PI;
    let total = cfg.total_steps();
    let stride = cfg.output_stride;
    let grid = cfg.grid_len();
    let mut record = TrajectoryRecord {
        times: Vec::with_capacity(grid),
        states: Vec::with_capacity(grid),
        cumint_p: Vec::with_capacity(grid),
        cumint_q: Vec::with_capacity(grid),
    };
    let mut ledger = JumpLedger {
        delta_tau,
        jump_scale,
        events: Vec::with_capacity(total / jump_stride),
        sum_p: Vec::with_capacity(grid),
        sum_q: Vec::with_capacity(grid),
    };
    let mut acc_p = vec![0.0; l];
    let mut acc_q = vec![0.0; l];
    push_snapshot(&mut record, &stepper);
    ledger.sum_p.push(acc_p.clone());
    ledger.sum_q.push(acc_q.clone());
    for s in 1..=total {
        stepper.step();
        if s % jump_stride == 0 {
            let kernel = stepper.apply_jump(amplitude, delta_tau, rng, &mut acc_p, &mut acc_q);
            ledger.events.push(JumpEvent {
                time: stepper.time(),
                weight: weight_prefactor * kernel,
            });
        }
        if s % stride == 0 {
            stepper.check_conservation()?;
            push_snapshot(&mut record, &stepper);
            ledger.sum_p.push(acc_p.clone());
            ledger.sum_q.push(acc_q.clone());
        }
    }
    Ok((record, ledger))
}

/// Closed-form Gaussian integrals of the jump kernel, evaluated by
/// Gauss–Hermite quadrature — the validation constants for the cubic-noise
/// moments. All integrals are over the unnormalized measure
/// `exp(-(R^2+S^2)/2) dR dS`.
pub mod kernel {
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    /// 6-point Gauss–Hermite nodes (weight `exp(-x^2)`), positive half.
    const GH_NODES: [f64; 3] = [
        0.436077411927616508679,
        1.335849074013696949715,
        2.350604973674492222834,
    ];
    const GH_WEIGHTS: [f64; 3] = [
        0.724629595224392524092,
        0.157067320322856643916,
        0.004530009905508845841,
    ];

    /// `integral of f(R, S) exp(-(R^2+S^2)/2) dR dS`, exact for polynomial
    /// `f` up to degree 11 per variable.
    pub fn gaussian_integral_2d(f: impl Fn(f64, f64) -> f64) -> f64 {
        let sqrt2 = std::f64::consts::SQRT_2;
        let mut nodes = [0.0; 6];
        let mut weights = [0.0; 6];
        for i in 0..3 {
            nodes[i] = -GH_NODES[i] * sqrt2;
            nodes[i + 3] = GH_NODES[i] * sqrt2;
            weights[i] = GH_WEIGHTS[i];
            weights[i + 3] = GH_WEIGHTS[i];
        }
        let mut total = 0.0;
        for (a, &wa) in weights.iter().enumerate() {
            for (b, &wb) in weights.iter().enumerate() {
                total += wa * wb * f(nodes[a], nodes[b]);
            }
        }
        // Substitution R = sqrt(2) x, S = sqrt(2) y gives the Jacobian 2.
        2.0 * total
    }

    /// `integral R^4 (R^2 + S^2 - 4)` — evaluates to `12 pi`.
    pub fn fourth_moment_integral() -> f64 {
        gaussian_integral_2d(|r, s| r.powi(4) * (r * r + s * s - 4.0))
    }

    /// `integral R (R^2 + S^2 - 4)` — vanishes (odd moment).
    pub fn first_moment_integral() -> f64 {
        gaussian_integral_2d(|r, s| r * (r * r + s * s - 4.0))
    }

    /// `integral R^2 (R^2 + S^2 - 4)` — vanishes (`3 + 1 - 4`).
    pub fn second_moment_integral() -> f64 {
        gaussian_integral_2d(|r, s| r * r * (r * r + s * s - 4.0))
    }

    /// Monte-Carlo mean and standard error of `g(R, S)` under independent
    /// standard normals (for the stochastic-sampling validation examples).
    pub fn mc_moment(g: impl Fn(f64, f64) -> f64, draws: usize, seed: u64) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..draws {
            let r: f64 = rng.sample(StandardNormal);
            let s: f64 = rng.sample(StandardNormal);
            let v = g(r, s);
            sum += v;
            sum_sq += v * v;
        }
        let mean = sum / draws as f64;
        let var = (sum_sq / draws as f64 - mean * mean).max(0.0);
        (mean, (var / draws as f64).sqrt())
    }
}

/// Trajectory dump formats (CSV and a compact binary layout).
pub mod dump {
    use super::TrajectoryRecord;
    use crate::error::{CoreError, Result};
    use crate::model::PhaseState;
    use std::io::{Read, Write};

    /// Magic bytes of the binary trajectory format.
    pub const MAGIC: &[u8; 4] = b"BHTW";
    /// Current binary format version.
    pub const VERSION: u32 = 1;

    /// CSV dump: header `t,P_1..P_L,Q_1..Q_L`, 17 significant digits.
    pub fn write_csv(record: &TrajectoryRecord, out: &mut impl Write) -> std::io::Result<()> {
        let l = record.states.first().map_or(0, |s| s.sites());
        let mut header = String::from("t");
        for j in 1..=l {
            header.push_str(&format!(",P_{j}"));
        }
        for j in 1..=l {
            header.push_str(&format!(",Q_{j}"));
        }
        writeln!(out, "{header}")?;
        for (g, &t) in record.times.iter().enumerate() {
            let mut row = format!("{t:.17e}");
            for &p in &record.states[g].p {
                row.push_str(&format!(",{p:.17e}"));
            }
            for &q in &record.states[g].q {
                row.push_str(&format!(",{q:.17e}"));
            }
            writeln!(out, "{row}")?;
        }
        Ok(())
    }

    /// Binary dump: 16-byte header (magic, version, site count, grid length,
    /// little-endian u32s after the magic) followed by grid rows of
    /// `t, P_1..P_L, Q_1..Q_L` as little-endian f64.
    pub fn write_binary(record: &TrajectoryRecord, out: &mut impl Write) -> std::io::Result<()> {
        let l = record.states.first().map_or(0, |s| s.sites()) as u32;
        let grid = record.times.len() as u32;
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&l.to_le_bytes())?;
        out.write_all(&grid.to_le_bytes())?;
        for (g, &t) in record.times.iter().enumerate() {
            out.write_all(&t.to_le_bytes())?;
            for &p in &record.states[g].p {
                out.write_all(&p.to_le_bytes())?;
            }
            for &q in &record.states[g].q {
                out.write_all(&q.to_le_bytes())?;
            }
        }
        Ok(())
    }

    /// Reads a binary dump back (states only; the running integrals are not
    /// part of the dump format).
    pub fn read_binary(input: &mut impl Read) -> Result<TrajectoryRecord> {
        let io_err = |e: std::io::Error| CoreError::InvalidParameter {
            name: "binary_dump",
            reason: format!("read failed: {e}"),
        };
        let mut header = [0u8; 16];
        input.read_exact(&mut header).map_err(io_err)?;
        if &header[0..4] != MAGIC {
            return Err(CoreError::InvalidParameter {
                name: "binary_dump",
                reason: "bad magic bytes".into(),
            });
        }
        let version = u32::from_le_bytes(header[4..8].try_into().unwrap());
        if version != VERSION {
            return Err(CoreError::InvalidParameter {
                name: "binary_dump",
                reason: format!("unsupported version {version}"),
            });
        }
        let l = u32::from_le_bytes(header[8..12].try_into().unwrap()) as usize;
        let grid = u32::from_le_bytes(header[12..16].try_into().unwrap()) as usize;
        let mut times = Vec::with_capacity(grid);
        let mut states = Vec::with_capacity(grid);
        let mut buf = vec![0u8; 8 * (1 + 2 * l)];
        for _ in 0..grid {
            input.read_exact(&mut buf).map_err(io_err)?;
            let read_f64 = |i: usize| {
                f64::from_le_bytes(buf[8 * i..8 * (i + 1)].try_into().unwrap())
            };
            times.push(read_f64(0));
            let p: Vec<f64> = (0..l).map(|j| read_f64(1 + j)).collect();
            let q: Vec<f64> = (0..l).map(|j| read_f64(1 + l + j)).collect();
            states.push(PhaseState { p, q });
        }
        Ok(TrajectoryRecord {
            times,
            states,
            cumint_p: Vec::new(),
            cumint_q: Vec::new(),
        })
    }
}
