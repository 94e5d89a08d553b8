//! Chaos diagnostics: finite-time Lyapunov spectra from tangent-space
//! co-integration, power spectra of scalar signals, a spectral form factor
//! over ensemble energies, and the instantaneous eigenmode decomposition of
//! the hopping network along a trajectory.

use nalgebra::DMatrix;
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::analysis::{fit_exponent, ScalingFit};
use crate::error::{CoreError, Result};
use crate::integrate::{IntegratorConfig, TrajectoryRecord};
use crate::model::{drift_into, hamiltonian_raw, ChainParams, PhaseState};
use crate::observables::{mixing_entropy, ScalarSeries};
use crate::wigner::{sample, CoherentStateSpec};

// ---------------------------------------------------------------------------
// Finite-time Lyapunov exponents
// ---------------------------------------------------------------------------

/// Finite-time Lyapunov spectrum of one trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FtleResult {
    /// All `2 L` exponents in units of `1/t0`, sorted descending.
    pub exponents: Vec<f64>,
    /// Sum of the positive exponents (entropy-rate estimate).
    pub positive_sum: f64,
    /// Time horizon the exponents were averaged over.
    pub t_final: f64,
    /// Number of QR renormalizations performed.
    pub renormalizations: usize,
}

impl FtleResult {
    /// Largest exponent.
    pub fn max_exponent(&self) -> f64 {
        self.exponents[0]
    }
}

/// Applies the drift Jacobian at `(p, q)` to one tangent vector `v`
/// (layout: `L` momentum components then `L` coordinate components).
///
/// Row blocks, with `w_j = (U/2)(P_j^2+Q_j^2) - mu_eff`:
///
/// `dP_j' = -J (vQ_{j-1} + vQ_{j+1}) + w_j vQ_j + U Q_j (P_j vP_j + Q_j vQ_j)`
/// `dQ_j' =  J (vP_{j-1} + vP_{j+1}) - w_j vP_j - U P_j (P_j vP_j + Q_j vQ_j)`
fn jacobian_apply(
    p: &[f64],
    q: &[f64],
    hopping: f64,
    interaction: f64,
    mu_eff: f64,
    v: &[f64],
    out: &mut [f64],
) {
    let l = p.len();
    let (vp, vq) = v.split_at(l);
    let (op, oq) = out.split_at_mut(l);
    for j in 0..l {
        let mut vq_nb = 0.0;
        let mut vp_nb = 0.0;
        if j > 0 {
            vq_nb += vq[j - 1];
            vp_nb += vp[j - 1];
        }
        if j + 1 < l {
            vq_nb += vq[j + 1];
            vp_nb += vp[j + 1];
        }
        let r2 = p[j] * p[j] + q[j] * q[j];
        let w = 0.5 * interaction * r2 - mu_eff;
        let radial = interaction * (p[j] * vp[j] + q[j] * vq[j]);
        op[j] = -hopping * vq_nb + w * vq[j] + q[j] * radial;
        oq[j] = hopping * vp_nb - w * vp[j] - p[j] * radial;
    }
}

/// One orthonormalization pass of modified Gram-Schmidt over `vectors`,
/// returning the diagonal norms. Two passes give orthonormality to roundoff.
fn mgs_pass(vectors: &mut [Vec<f64>]) -> Vec<f64> {
    let k = vectors.len();
    let mut norms = vec![0.0; k];
    for i in 0..k {
        for prev in 0..i {
            let proj: f64 = vectors[i]
                .iter()
                .zip(&vectors[prev])
                .map(|(a, b)| a * b)
                .sum();
            let (head, tail) = vectors.split_at_mut(i);
            for (x, y) in tail[0].iter_mut().zip(&head[prev]) {
                *x -= proj * y;
            }
        }
        let norm = vectors[i].iter().map(|x| x * x).sum::<f64>().sqrt();
        norms[i] = norm;
        if norm > 0.0 {
            for x in &mut vectors[i] {
                *x /= norm;
            }
        }
    }
    norms
}

/// Orthonormalizes the tangent frame (two Gram-Schmidt passes), accumulates
/// the log stretch factors, and verifies the result is orthonormal.
fn renormalize_frame(vectors: &mut [Vec<f64>], log_stretches: &mut [f64], t: f64) -> Result<()> {
    let norms = mgs_pass(vectors);
    for (i, &norm) in norms.iter().enumerate() {
        if !norm.is_finite() {
            return Err(CoreError::NonFiniteState { t });
        }
        if norm < 1e-150 {
            return Err(CoreError::DegenerateNormalization {
                what: format!("tangent vector {i} collapsed (norm {norm:.3e}) at t = {t}"),
            });
        }
        log_stretches[i] += norm.ln();
    }
    // Second pass scrubs the O(eps * condition) residue of the first; its
    // stretch factors are ~1 but belong in the ledger all the same.
    let norms = mgs_pass(vectors);
    for (i, &norm) in norms.iter().enumerate() {
        log_stretches[i] += norm.ln();
    }
    let k = vectors.len();
    for i in 0..k {
        for j in 0..=i {
            let dot: f64 = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| a * b)
                .sum();
            let target = if i == j { 1.0 } else { 0.0 };
            if (dot - target).abs() > 1e-10 {
                return Err(CoreError::DegenerateNormalization {
                    what: format!(
                        "tangent frame failed orthonormality after renormalization at t = {t} \
                         (<v{i}, v{j}> = {dot:.3e})"
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Computes the full finite-time Lyapunov spectrum of the trajectory started
/// at `initial`, co-integrating `2 L` tangent vectors with the analytic drift
/// Jacobian inside the same fourth-order stepper used for state propagation,
/// with QR renormalization every `renorm_stride` steps.
///
/// The drift uses the shifted chemical potential (the same flow the ensemble
/// engine integrates), so these exponents characterize exactly the dynamics
/// that produces the transport observables. Exponents are time averages over
/// `cfg.t_final`; for a volume-preserving flow their sum vanishes up to
/// integration error, which is a useful external check on the returned
/// spectrum.
pub fn ftle(
    initial: &PhaseState,
    params: &ChainParams,
    cfg: &IntegratorConfig,
    renorm_stride: usize,
) -> Result<FtleResult> {
    params.validate()?;
    initial.check_dims(params)?;
    cfg.validate()?;
    if renorm_stride == 0 {
        return Err(CoreError::InvalidParameter {
            name: "renorm_stride",
            reason: "renormalization stride must be at least 1".into(),
        });
    }
    let l = params.sites;
    let dim = 2 * l;
    let h = cfg.step;
    let steps = cfg.total_steps();
    let mu_eff = params.mu_tilde();
    let (j_hop, u) = (params.hopping, params.interaction);

    let mut p = initial.p.clone();
    let mut q = initial.q.clone();
    let n0 = initial.number();
    let e0 = hamiltonian_raw(&p, &q, j_hop, u, mu_eff);

    // Tangent frame starts as the identity.
    let mut frame: Vec<Vec<f64>> = (0..dim)
        .map(|i| {
            let mut v = vec![0.0; dim];
            v[i] = 1.0;
            v
        })
        .collect();
    let mut log_stretches = vec![0.0; dim];
    let mut renormalizations = 0;

    // Stage buffers: positions (kept so the tangent stages can evaluate the
    // Jacobian at the same points), state derivatives, tangent derivatives.
    let zeros_l = || [vec![0.0; l], vec![0.0; l], vec![0.0; l], vec![0.0; l]];
    let mut stage_p = zeros_l();
    let mut stage_q = zeros_l();
    let mut kp = zeros_l();
    let mut kq = zeros_l();
    let mut stage_in = vec![0.0; dim];
    let mut kv = [
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
        vec![0.0; dim],
    ];

    for step in 0..steps {
        let t = step as f64 * h;
        stage_p[0].copy_from_slice(&p);
        stage_q[0].copy_from_slice(&q);
        drift_into(&stage_p[0], &stage_q[0], j_hop, u, mu_eff, &mut kp[0], &mut kq[0]);
        for (s, coeff) in [(1usize, 0.5 * h), (2, 0.5 * h), (3, h)] {
            for j in 0..l {
                stage_p[s][j] = p[j] + coeff * kp[s - 1][j];
                stage_q[s][j] = q[j] + coeff * kq[s - 1][j];
            }
            let (sp, sq) = (&stage_p[s], &stage_q[s]);
            drift_into(sp, sq, j_hop, u, mu_eff, &mut kp[s], &mut kq[s]);
        }
        // Tangent stages: K_s = Df(y_s) (V + c_s K_{s-1}).
        for v in &mut frame {
            jacobian_apply(&stage_p[0], &stage_q[0], j_hop, u, mu_eff, v, &mut kv[0]);
            for (s, coeff) in [(1usize, 0.5 * h), (2, 0.5 * h), (3, h)] {
                for i in 0..dim {
                    stage_in[i] = v[i] + coeff * kv[s - 1][i];
                }
                jacobian_apply(&stage_p[s], &stage_q[s], j_hop, u, mu_eff, &stage_in, &mut kv[s]);
            }
            for i in 0..dim {
                v[i] += h / 6.0 * (kv[0][i] + 2.0 * kv[1][i] + 2.0 * kv[2][i] + kv[3][i]);
            }
        }
        for j in 0..l {
            p[j] += h / 6.0 * (kp[0][j] + 2.0 * kp[1][j] + 2.0 * kp[2][j] + kp[3][j]);
            q[j] += h / 6.0 * (kq[0][j] + 2.0 * kq[1][j] + 2.0 * kq[2][j] + kq[3][j]);
        }
        if (step + 1) % renorm_stride == 0 {
            renormalize_frame(&mut frame, &mut log_stretches, t + h)?;
            renormalizations += 1;
            if p.iter().chain(q.iter()).any(|x| !x.is_finite()) {
                return Err(CoreError::NonFiniteState { t: t + h });
            }
        }
    }
    let t_final = steps as f64 * h;
    if steps % renorm_stride != 0 {
        renormalize_frame(&mut frame, &mut log_stretches, t_final)?;
        renormalizations += 1;
    }
    // Conservation check on the base trajectory, mirroring the ensemble
    // stepper's convention.
    let n1: f64 = p
        .iter()
        .zip(&q)
        .map(|(a, b)| 0.5 * (a * a + b * b))
        .sum();
    let number_drift = (n1 - n0).abs() / n0.max(1e-12);
    if number_drift > cfg.conservation_tol {
        return Err(CoreError::ConservationViolated {
            quantity: "total number",
            drift: number_drift,
            tol: cfg.conservation_tol,
            t: t_final,
        });
    }
    let e1 = hamiltonian_raw(&p, &q, j_hop, u, mu_eff);
    let n_scale = n0.max(1.0);
    let e_floor = 1e-3 * (j_hop + u + mu_eff.abs()) * (n_scale + n_scale * n_scale);
    let energy_drift = (e1 - e0).abs() / e0.abs().max(e_floor);
    if energy_drift > cfg.conservation_tol {
        return Err(CoreError::ConservationViolated {
            quantity: "energy",
            drift: energy_drift,
            tol: cfg.conservation_tol,
            t: t_final,
        });
    }

    let mut exponents: Vec<f64> = log_stretches.iter().map(|s| s / t_final).collect();
    exponents.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let positive_sum = exponents.iter().filter(|&&x| x > 0.0).sum();
    Ok(FtleResult {
        exponents,
        positive_sum,
        t_final,
        renormalizations,
    })
}

// ---------------------------------------------------------------------------
// Power spectra
// ---------------------------------------------------------------------------

/// Taper applied before the discrete Fourier transform.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectralWindow {
    /// Rectangular (no taper).
    None,
    /// Hann taper `w_k = 0.5 (1 - cos(2 pi k / (N-1)))`.
    Hann,
}

/// One-sided periodogram of a uniformly sampled scalar signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerSpectrum {
    /// Angular frequencies `omega_k = 2 pi k / (N dt)`, `k = 0 ..= N/2`.
    pub frequencies: Vec<f64>,
    /// `|X_k|^2 / N` of the mean-subtracted, tapered signal.
    pub power: Vec<f64>,
    pub window: SpectralWindow,
}

impl PowerSpectrum {
    /// Writes `omega,power` CSV with full precision.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "omega,power")?;
        for (f, p) in self.frequencies.iter().zip(&self.power) {
            writeln!(out, "{f:.17e},{p:.17e}")?;
        }
        Ok(())
    }
}

/// Computes the one-sided periodogram of `values` sampled at `times`.
///
/// Requires at least 256 samples on a uniform grid (spacing constant to a
/// relative `1e-9`). The mean is subtracted before tapering so the DC bin
/// carries no signal.
pub fn power_spectrum(
    times: &[f64],
    values: &[f64],
    window: SpectralWindow,
) -> Result<PowerSpectrum> {
    let n = times.len();
    if values.len() != n {
        return Err(CoreError::ShapeMismatch {
            what: format!("{n} times vs {} values in power spectrum", values.len()),
        });
    }
    if n < 256 {
        return Err(CoreError::InvalidParameter {
            name: "signal",
            reason: format!("need at least 256 samples for a spectrum, got {n}"),
        });
    }
    let dt = (times[n - 1] - times[0]) / (n - 1) as f64;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(CoreError::InvalidParameter {
            name: "times",
            reason: format!("grid spacing {dt} is not positive"),
        });
    }
    for k in 1..n {
        let step = times[k] - times[k - 1];
        if (step - dt).abs() > 1e-9 * dt.max(1.0) {
            return Err(CoreError::InvalidParameter {
                name: "times",
                reason: format!(
                    "grid is not uniform: spacing {step} at index {k} vs mean {dt}"
                ),
            });
        }
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = values
        .iter()
        .enumerate()
        .map(|(k, &v)| {
            let taper = match window {
                SpectralWindow::None => 1.0,
                SpectralWindow::Hann => {
                    0.5 * (1.0
                        - (2.0 * std::f64::consts::PI * k as f64 / (n - 1) as f64).cos())
                }
            };
            Complex::new((v - mean) * taper, 0.0)
        })
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let half = n / 2;
    let norm = 1.0 / n as f64;
    let frequencies = (0..=half)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / (n as f64 * dt))
        .collect();
    let power = buf[..=half].iter().map(|x| x.norm_sqr() * norm).collect();
    Ok(PowerSpectrum {
        frequencies,
        power,
        window,
    })
}

/// Default frequency band for slope fits on a periodogram: the lowest five
/// bins (DC and leakage-dominated neighbors) and the top 10% (near-Nyquist)
/// are excluded, and one decade centered on the geometric midpoint of what
/// remains is returned, clamped to the admissible range.
pub fn default_fit_band(spectrum: &PowerSpectrum) -> Result<(f64, f64)> {
    let m = spectrum.frequencies.len();
    let lo_idx = 5;
    let hi_idx = (0.9 * m as f64).floor() as usize;
    if hi_idx <= lo_idx + 8 {
        return Err(CoreError::FitRejected {
            reason: format!("spectrum with {m} bins leaves no usable fit band"),
        });
    }
    let f_lo = spectrum.frequencies[lo_idx];
    let f_hi = spectrum.frequencies[hi_idx - 1];
    let mid = (f_lo * f_hi).sqrt();
    let half_decade = 10.0f64.sqrt();
    Ok(((mid / half_decade).max(f_lo), (mid * half_decade).min(f_hi)))
}

/// Log-log slope of the periodogram over [`default_fit_band`].
pub fn spectrum_slope(spectrum: &PowerSpectrum) -> Result<ScalingFit> {
    let band = default_fit_band(spectrum)?;
    fit_exponent(&spectrum.frequencies, &spectrum.power, band)
}

// ---------------------------------------------------------------------------
// Spectral form factor
// ---------------------------------------------------------------------------

/// `K(t) = |sum_m exp(-i E_m t)|^2 / M^2` for the given energy list.
pub fn sff_from_energies(energies: &[f64], times: &[f64]) -> Result<ScalarSeries> {
    if energies.is_empty() {
        return Err(CoreError::InvalidParameter {
            name: "energies",
            reason: "spectral form factor needs at least one energy".into(),
        });
    }
    let m = energies.len() as f64;
    let values = times
        .iter()
        .map(|&t| {
            let (mut c, mut s) = (0.0, 0.0);
            for &e in energies {
                let phase = e * t;
                c += phase.cos();
                s += phase.sin();
            }
            (c * c + s * s) / (m * m)
        })
        .collect();
    Ok(ScalarSeries {
        times: times.to_vec(),
        values,
        label: "sff".into(),
    })
}

/// Samples `count` initial states from `spec` (the same per-trajectory RNG
/// streams the ensemble engine uses for `seed`), evaluates their conserved
/// chain energies, and returns the spectral form factor on `times`.
pub fn sff(
    spec: &CoherentStateSpec,
    params: &ChainParams,
    count: usize,
    seed: u64,
    times: &[f64],
) -> Result<ScalarSeries> {
    params.validate()?;
    let states = sample(spec, count, seed)?;
    let energies: Vec<f64> = states
        .iter()
        .map(|state| {
            state.check_dims(params).map(|_| {
                hamiltonian_raw(
                    &state.p,
                    &state.q,
                    params.hopping,
                    params.interaction,
                    params.mu_tilde(),
                )
            })
        })
        .collect::<Result<_>>()?;
    sff_from_energies(&energies, times)
}

// ---------------------------------------------------------------------------
// Instantaneous eigenmode decomposition
// ---------------------------------------------------------------------------

/// A mode-tracking discontinuity: the best-overlap match for a mode dropped
/// to or below the crossing threshold, indicating an avoided crossing or a
/// genuine reordering of the instantaneous spectrum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossingEvent {
    pub time: f64,
    /// Tracked mode slot (index into the ordered mode arrays).
    pub mode: usize,
    /// `|<u_prev, u_new>|` of the accepted match.
    pub overlap: f64,
}

/// Trajectory-resolved eigenmode decomposition of the instantaneous hopping
/// network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlphaSeries {
    pub times: Vec<f64>,
    /// `|alpha_n|^2` per grid point; modes ordered by eigenvalue at the first
    /// grid point and by eigenvector continuity afterwards. Each row sums to 1.
    pub mode_weights: Vec<Vec<f64>>,
    /// Instantaneous mode frequencies in the same ordering.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Mixing entropy of the mode-weight distribution per grid point.
    pub entropy: Vec<f64>,
    /// Continuity breaks detected by the overlap tracker.
    pub crossings: Vec<CrossingEvent>,
}

/// Threshold below which a best-overlap match is flagged as a crossing.
pub const CROSSING_OVERLAP_THRESHOLD: f64 = 0.9;

/// Decomposes each recorded state onto the eigenmodes of its instantaneous
/// linearized hopping network.
///
/// The amplitudes `a_j = sqrt(I_j)` (normalized by the conserved total, so
/// the weights always sum to one) couple through a tridiagonal mode matrix
/// with bond strengths `J sin(phi_{j+1} - phi_j)`; conjugating by the
/// alternating quarter-phase diagonal makes the matrix real symmetric with
/// zero diagonal, which forces the eigenvalues into exact `+-` pairs and
/// makes the paired mode weights identical — both properties are surfaced
/// (and tested) as invariants of the returned series. Modes are matched
/// across grid points by eigenvector overlap; matches at or below
/// [`CROSSING_OVERLAP_THRESHOLD`] are recorded as [`CrossingEvent`]s.
pub fn alpha_transform(record: &TrajectoryRecord, params: &ChainParams) -> Result<AlphaSeries> {
    params.validate()?;
    let l = params.sites;
    if l < 2 {
        return Err(CoreError::InvalidParameter {
            name: "sites",
            reason: "the eigenmode decomposition needs at least two sites".into(),
        });
    }
    if record.states.is_empty() || record.states.len() != record.times.len() {
        return Err(CoreError::ShapeMismatch {
            what: format!(
                "{} states vs {} times in trajectory record",
                record.states.len(),
                record.times.len()
            ),
        });
    }
    let grid = record.times.len();
    let mut mode_weights = Vec::with_capacity(grid);
    let mut eigenvalues = Vec::with_capacity(grid);
    let mut entropy = Vec::with_capacity(grid);
    let mut crossings = Vec::new();
    // Columns of the previous ordered eigenvector matrix, for continuity.
    let mut prev_vectors: Option<DMatrix<f64>> = None;

    for (g, state) in record.states.iter().enumerate() {
        state.check_dims(params)?;
        let t = record.times[g];
        let total: f64 = state.number();
        if !(total.is_finite() && total > 0.0) {
            return Err(CoreError::DegenerateNormalization {
                what: format!("total occupation {total:.3e} at t = {t} cannot normalize modes"),
            });
        }
        // Normalized amplitudes and phases.
        let amp: Vec<f64> = (0..l)
            .map(|j| {
                let i_j = 0.5 * (state.p[j] * state.p[j] + state.q[j] * state.q[j]);
                (i_j / total).sqrt()
            })
            .collect();
        let phase: Vec<f64> = (0..l).map(|j| state.p[j].atan2(state.q[j])).collect();
        // Real symmetric tridiagonal mode matrix: zero diagonal, off-diagonal
        // b_j = J sin(phi_{j+1} - phi_j).
        let mut mat = DMatrix::<f64>::zeros(l, l);
        for j in 0..l - 1 {
            let b = params.hopping * (phase[j + 1] - phase[j]).sin();
            mat[(j, j + 1)] = b;
            mat[(j + 1, j)] = b;
        }
        let eig = mat.symmetric_eigen();
        // Order modes: ascending eigenvalue at the first grid point, best
        // eigenvector overlap with the previous frame afterwards.
        let order: Vec<usize> = match &prev_vectors {
            Option::None => {
                let mut idx: Vec<usize> = (0..l).collect();
                idx.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
                idx
            }
            Some(prev) => {
                let mut taken = vec![false; l];
                let mut idx = Vec::with_capacity(l);
                for slot in 0..l {
                    let prev_col = prev.column(slot);
                    let mut best = (0usize, 0.0f64, 0.0f64); // (index, |dot|, dot)
                    for cand in 0..l {
                        if taken[cand] {
                            continue;
                        }
                        let dot: f64 = eig.eigenvectors.column(cand).dot(&prev_col);
                        if dot.abs() > best.1 {
                            best = (cand, dot.abs(), dot);
                        }
                    }
                    taken[best.0] = true;
                    if best.1 <= CROSSING_OVERLAP_THRESHOLD {
                        crossings.push(CrossingEvent {
                            time: t,
                            mode: slot,
                            overlap: best.1,
                        });
                    }
                    idx.push(best.0);
                }
                idx
            }
        };
        // Build the ordered eigenvector matrix with sign continuity.
        let mut ordered = DMatrix::<f64>::zeros(l, l);
        let mut vals = Vec::with_capacity(l);
        for (slot, &cand) in order.iter().enumerate() {
            let mut col = eig.eigenvectors.column(cand).clone_owned();
            if let Some(prev) = &prev_vectors {
                if col.dot(&prev.column(slot)) < 0.0 {
                    col.neg_mut();
                }
            }
            ordered.set_column(slot, &col);
            vals.push(eig.eigenvalues[cand]);
        }
        // alpha_n = sum_j i^j u_{jn} a_j, split into real (j even) and
        // imaginary (j odd) parts with alternating signs.
        let weights: Vec<f64> = (0..l)
            .map(|n| {
                let col = ordered.column(n);
                let (mut re, mut im) = (0.0, 0.0);
                for j in 0..l {
                    let term = col[j] * amp[j];
                    match j % 4 {
                        0 => re += term,
                        1 => im += term,
                        2 => re -= term,
                        _ => im -= term,
                    }
                }
                re * re + im * im
            })
            .collect();
        entropy.push(mixing_entropy(&weights)?);
        mode_weights.push(weights);
        eigenvalues.push(vals);
        prev_vectors = Some(ordered);
    }
    Ok(AlphaSeries {
        times: record.times.clone(),
        mode_weights,
        eigenvalues,
        entropy,
        crossings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::integrate::evolve;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn chaotic_params() -> ChainParams {
        ChainParams::new(4, 0.9, 2.2, 0.0, 1.0).unwrap()
    }

    fn chaotic_state() -> PhaseState {
        PhaseState::from_parts(
            vec![0.3, -0.7, 0.5, 0.1],
            vec![1.1, 0.2, -0.6, 0.8],
        )
        .unwrap()
    }

    #[test]
    fn integrable_rotors_have_much_smaller_exponents_than_the_coupled_chain() {
        let cfg = IntegratorConfig {
            step: 0.01,
            t_final: 400.0,
            output_stride: 100,
            conservation_tol: 1e-5,
        };
        let rotor_params = ChainParams::new(4, 0.0, 2.2, 0.3, 1.0).unwrap();
        let rotor = ftle(&chaotic_state(), &rotor_params, &cfg, 20).unwrap();
        let chaotic = ftle(&chaotic_state(), &chaotic_params(), &cfg, 20).unwrap();
        assert!(
            chaotic.max_exponent() > 0.05,
            "coupled chain should be chaotic, got {}",
            chaotic.max_exponent()
        );
        assert!(
            rotor.max_exponent() <= 0.1 * chaotic.max_exponent(),
            "rotor {} vs chaotic {}",
            rotor.max_exponent(),
            chaotic.max_exponent()
        );
    }

    #[test]
    fn spectrum_pairs_and_sums_to_zero_for_the_volume_preserving_flow() {
        let cfg = IntegratorConfig {
            step: 0.005,
            t_final: 2000.0,
            output_stride: 100,
            conservation_tol: 1e-5,
        };
        let result = ftle(&chaotic_state(), &chaotic_params(), &cfg, 10).unwrap();
        let exp = &result.exponents;
        let dim = exp.len();
        assert_eq!(dim, 8);
        let max = exp[0].abs().max(exp[dim - 1].abs());
        assert!(max > 0.0);
        let sum: f64 = exp.iter().sum();
        assert!(
            sum.abs() <= 1e-3 * max,
            "exponent sum {sum:.3e} vs max {max:.3e}"
        );
        for i in 0..dim / 2 {
            let pairing = exp[i] + exp[dim - 1 - i];
            assert!(
                pairing.abs() <= 0.05 * max,
                "pair {i}: {} + {} = {pairing:.3e}",
                exp[i],
                exp[dim - 1 - i]
            );
        }
        // Sorted descending.
        for w in exp.windows(2) {
            assert!(w[0] >= w[1]);
        }
        assert!(result.positive_sum >= result.exponents[0]);
    }

    #[test]
    fn tangent_growth_matches_direct_two_trajectory_divergence() {
        let params = chaotic_params();
        let t_final = 80.0;
        let cfg = IntegratorConfig {
            step: 0.005,
            t_final,
            output_stride: 40,
            conservation_tol: 1e-5,
        };
        let base = chaotic_state();
        let mut shifted = base.clone();
        let delta = 1e-10;
        shifted.p[1] += delta;
        let rec_a = evolve(&base, &params, &cfg).unwrap();
        let rec_b = evolve(&shifted, &params, &cfg).unwrap();
        // Fit ln |separation| against t on a window clear of the initial
        // transient and of saturation.
        let (mut sx, mut sy, mut sxx, mut sxy, mut n) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (g, &t) in rec_a.times.iter().enumerate() {
            if !(10.0..=70.0).contains(&t) {
                continue;
            }
            let (sa, sb) = (&rec_a.states[g], &rec_b.states[g]);
            let dist2: f64 = sa
                .p
                .iter()
                .zip(&sb.p)
                .chain(sa.q.iter().zip(&sb.q))
                .map(|(x, y)| (x - y) * (x - y))
                .sum();
            let y = dist2.sqrt().ln();
            sx += t;
            sy += y;
            sxx += t * t;
            sxy += t * y;
            n += 1.0;
        }
        let divergence_rate = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        let result = ftle(&base, &params, &cfg, 10).unwrap();
        let lambda = result.max_exponent();
        assert!(
            (divergence_rate - lambda).abs() <= 0.2 * lambda,
            "two-trajectory rate {divergence_rate} vs tangent exponent {lambda}"
        );
    }

    #[test]
    fn ftle_rejects_invalid_configuration() {
        let cfg = IntegratorConfig {
            step: 0.01,
            t_final: 1.0,
            output_stride: 1,
            conservation_tol: 1e-6,
        };
        assert!(matches!(
            ftle(&chaotic_state(), &chaotic_params(), &cfg, 0),
            Err(CoreError::InvalidParameter { .. })
        ));
        let wrong = PhaseState::from_parts(vec![0.0; 3], vec![0.0; 3]).unwrap();
        assert!(ftle(&wrong, &chaotic_params(), &cfg, 5).is_err());
    }

    #[test]
    fn bin_centered_sinusoid_concentrates_in_its_bin() {
        let n = 1024;
        let dt = 0.5;
        let k0 = 37;
        let omega = 2.0 * std::f64::consts::PI * k0 as f64 / (n as f64 * dt);
        let times: Vec<f64> = (0..n).map(|k| k as f64 * dt).collect();
        let values: Vec<f64> = times.iter().map(|&t| 1.3 * (omega * t + 0.7).sin()).collect();
        for window in [SpectralWindow::None, SpectralWindow::Hann] {
            let spec = power_spectrum(&times, &values, window).unwrap();
            assert_abs_diff_eq!(spec.frequencies[k0], omega, epsilon = 1e-12);
            let peak = spec.power[k0];
            let background = spec
                .power
                .iter()
                .enumerate()
                .filter(|(k, _)| (*k as isize - k0 as isize).unsigned_abs() > 1)
                .map(|(_, &p)| p)
                .fold(0.0f64, f64::max);
            assert!(
                peak >= 1e3 * background,
                "{window:?}: peak {peak:.3e} vs background {background:.3e}"
            );
        }
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        use rand::prelude::*;
        use rand_distr::StandardNormal;
        let n = 4096;
        let times: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let mut mean_power: Vec<f64> = Vec::new();
        let mut freqs = Vec::new();
        let realizations = 16;
        for r in 0..realizations {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100 + r);
            let values: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
            let spec = power_spectrum(&times, &values, SpectralWindow::None).unwrap();
            if mean_power.is_empty() {
                mean_power = vec![0.0; spec.power.len()];
                freqs = spec.frequencies.clone();
            }
            for (acc, p) in mean_power.iter_mut().zip(&spec.power) {
                *acc += p / realizations as f64;
            }
        }
        let averaged = PowerSpectrum {
            frequencies: freqs,
            power: mean_power,
            window: SpectralWindow::None,
        };
        let fit = spectrum_slope(&averaged).unwrap();
        assert!(
            fit.slope.abs() < 0.1,
            "white noise slope {} +- {}",
            fit.slope,
            fit.stderr
        );
    }

    #[test]
    fn random_walk_spectrum_falls_as_the_inverse_square() {
        use rand::prelude::*;
        use rand_distr::StandardNormal;
        let n = 4096;
        let times: Vec<f64> = (0..n).map(|k| k as f64).collect();
        let mut mean_power: Vec<f64> = Vec::new();
        let mut freqs = Vec::new();
        let realizations = 16;
        for r in 0..realizations {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(300 + r);
            let mut walk = 0.0;
            let values: Vec<f64> = (0..n)
                .map(|_| {
                    walk += rng.sample::<f64, _>(StandardNormal);
                    walk
                })
                .collect();
            let spec = power_spectrum(&times, &values, SpectralWindow::Hann).unwrap();
            if mean_power.is_empty() {
                mean_power = vec![0.0; spec.power.len()];
                freqs = spec.frequencies.clone();
            }
            for (acc, p) in mean_power.iter_mut().zip(&spec.power) {
                *acc += p / realizations as f64;
            }
        }
        let averaged = PowerSpectrum {
            frequencies: freqs,
            power: mean_power,
            window: SpectralWindow::Hann,
        };
        let fit = spectrum_slope(&averaged).unwrap();
        assert!(
            (fit.slope + 2.0).abs() <= 0.2,
            "random walk slope {} +- {}",
            fit.slope,
            fit.stderr
        );
    }

    #[test]
    fn spectra_reject_short_or_nonuniform_grids() {
        let times: Vec<f64> = (0..100).map(|k| k as f64).collect();
        let values = vec![1.0; 100];
        assert!(power_spectrum(&times, &values, SpectralWindow::None).is_err());
        let mut jittered: Vec<f64> = (0..512).map(|k| k as f64).collect();
        jittered[300] += 0.01;
        let values = vec![1.0; 512];
        assert!(power_spectrum(&jittered, &values, SpectralWindow::None).is_err());
    }

    #[test]
    fn form_factor_limits_match_closed_forms() {
        let times: Vec<f64> = (0..50).map(|k| 0.3 * k as f64).collect();
        // t = 0 is exactly 1; identical energies keep it there forever.
        let flat = sff_from_energies(&[0.7; 12], &times).unwrap();
        assert_eq!(flat.values[0], 1.0);
        for v in &flat.values {
            assert_abs_diff_eq!(*v, 1.0, epsilon = 1e-12);
        }
        // Two levels beat as cos^2(dE t / 2).
        let (e1, e2) = (0.9, 1.7);
        let two = sff_from_energies(&[e1, e2], &times).unwrap();
        for (t, v) in two.times.iter().zip(&two.values) {
            let expected = (0.5 * (e2 - e1) * t).cos().powi(2);
            assert_abs_diff_eq!(*v, expected, epsilon = 1e-12);
        }
        assert!(sff_from_energies(&[], &times).is_err());
    }

    #[test]
    fn sampled_form_factor_is_deterministic_and_starts_at_one() {
        let params = ChainParams::from_ratios(4, 2.0, 0.0).unwrap();
        let spec = crate::wigner::build_spec(
            &crate::wigner::InitialConditionPreset::SingleSite { site: 1 },
            &params,
        )
        .unwrap();
        let times: Vec<f64> = (0..32).map(|k| 50.0 * k as f64).collect();
        let a = sff(&spec, &params, 64, 11, &times).unwrap();
        let b = sff(&spec, &params, 64, 11, &times).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.values[0], 1.0);
        assert!(a.values.iter().all(|&v| (0.0..=1.0 + 1e-12).contains(&v)));
        // A different seed draws different energies.
        let c = sff(&spec, &params, 64, 12, &times).unwrap();
        assert_ne!(a.values, c.values);
    }

    /// State with occupation 1/2 per site and the given phases.
    fn phased_state(phases: &[f64]) -> PhaseState {
        PhaseState::from_parts(
            phases.iter().map(|f| f.sin()).collect(),
            phases.iter().map(|f| f.cos()).collect(),
        )
        .unwrap()
    }

    fn record_of(states: Vec<PhaseState>) -> TrajectoryRecord {
        let grid = states.len();
        let l = states[0].sites();
        TrajectoryRecord {
            times: (0..grid).map(|g| g as f64).collect(),
            states,
            cumint_p: vec![vec![0.0; l]; grid],
            cumint_q: vec![vec![0.0; l]; grid],
        }
    }

    #[test]
    fn two_site_mode_frequencies_are_plus_minus_the_bond_strength() {
        let params = ChainParams::new(2, 0.37, 0.0, 0.0, 1.0).unwrap();
        // Quarter-turn phase difference: bond strength J sin(pi/2) = J.
        let record = record_of(vec![phased_state(&[0.0, std::f64::consts::FRAC_PI_2])]);
        let series = alpha_transform(&record, &params).unwrap();
        assert_abs_diff_eq!(series.eigenvalues[0][0], -0.37, epsilon = 1e-12);
        assert_abs_diff_eq!(series.eigenvalues[0][1], 0.37, epsilon = 1e-12);
        // Symmetric state: both modes carry weight 1/2; the entropy follows
        // the crate's per-site normalization, ln(2)/2 at the uniform point.
        assert_abs_diff_eq!(series.mode_weights[0][0], 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(series.mode_weights[0][1], 0.5, epsilon = 1e-12);
        assert_relative_eq!(
            series.entropy[0],
            crate::observables::mixing_entropy_bound(2),
            epsilon = 1e-10
        );
    }

    #[test]
    fn mode_weights_are_normalized_and_exactly_paired() {
        for l in [7usize, 8] {
            let params = ChainParams::new(l, 0.8, 1.0, 0.2, 1.0).unwrap();
            // A deterministic, unnormalized, fully generic state.
            let p: Vec<f64> = (0..l).map(|j| (1.7 * j as f64 + 0.3).sin() * (0.5 + 0.1 * j as f64)).collect();
            let q: Vec<f64> = (0..l).map(|j| (0.9 * j as f64 - 0.2).cos() * (0.8 + 0.05 * j as f64)).collect();
            let record = record_of(vec![PhaseState::from_parts(p, q).unwrap()]);
            let series = alpha_transform(&record, &params).unwrap();
            let weights = &series.mode_weights[0];
            let vals = &series.eigenvalues[0];
            let total: f64 = weights.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
            let max_val = vals.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
            for k in 0..l / 2 {
                // Eigenvalues mirror to +- pairs, and the paired modes carry
                // identical weight (exact consequence of the zero diagonal).
                assert_abs_diff_eq!(vals[k] + vals[l - 1 - k], 0.0, epsilon = 1e-8 * max_val);
                assert_abs_diff_eq!(weights[k], weights[l - 1 - k], epsilon = 1e-6);
            }
            if l % 2 == 1 {
                assert_abs_diff_eq!(vals[l / 2], 0.0, epsilon = 1e-8 * max_val);
            }
        }
    }

    #[test]
    fn mode_tracking_is_quiet_under_continuity_and_flags_reorderings() {
        let params = ChainParams::new(4, 1.0, 0.0, 0.0, 1.0).unwrap();
        let dimers_outer = phased_state(&[
            0.0,
            std::f64::consts::FRAC_PI_2,
            std::f64::consts::FRAC_PI_2 + 0.02,
            std::f64::consts::PI + 0.02,
        ]);
        // Slow phase drift: no crossings expected.
        let drifted = phased_state(&[
            0.01,
            std::f64::consts::FRAC_PI_2 + 0.02,
            std::f64::consts::FRAC_PI_2 + 0.05,
            std::f64::consts::PI + 0.04,
        ]);
        let smooth = alpha_transform(&record_of(vec![dimers_outer.clone(), drifted]), &params).unwrap();
        assert!(
            smooth.crossings.is_empty(),
            "unexpected crossings: {:?}",
            smooth.crossings
        );
        // Abrupt rewiring of the bond pattern: strong bonds move from the
        // outer pairs to the middle, eigenvectors reorganize, and the
        // tracker must flag it.
        let dimers_inner = phased_state(&[
            0.0,
            0.02,
            std::f64::consts::FRAC_PI_2 + 0.02,
            std::f64::consts::FRAC_PI_2 + 0.04,
        ]);
        let broken = alpha_transform(&record_of(vec![dimers_outer, dimers_inner]), &params).unwrap();
        assert!(
            !broken.crossings.is_empty(),
            "rewired bond pattern should trigger the crossing tracker"
        );
        for event in &broken.crossings {
            assert_eq!(event.time, 1.0);
            assert!(event.overlap <= CROSSING_OVERLAP_THRESHOLD);
        }
    }

    #[test]
    fn propagated_trajectory_keeps_unit_mode_weight_on_the_grid() {
        let params = ChainParams::from_ratios(6, 1.0, 0.0).unwrap();
        let spec = crate::wigner::build_spec(
            &crate::wigner::InitialConditionPreset::SingleSite { site: 2 },
            &params,
        )
        .unwrap();
        let state = crate::wigner::sample(&spec, 1, 7).unwrap().remove(0);
        let cfg = IntegratorConfig {
            step: 1.0,
            t_final: 2000.0,
            output_stride: 100,
            conservation_tol: 1e-6,
        };
        let record = evolve(&state, &params, &cfg).unwrap();
        let series = alpha_transform(&record, &params).unwrap();
        assert_eq!(series.mode_weights.len(), record.times.len());
        let bound = crate::observables::mixing_entropy_bound(params.sites);
        for (weights, entropy) in series.mode_weights.iter().zip(&series.entropy) {
            let total: f64 = weights.iter().sum();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
            assert!(*entropy >= 0.0 && *entropy <= bound + 1e-12);
        }
    }
}
