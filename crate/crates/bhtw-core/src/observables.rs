//! Derived diagnostics built on moment series and recorded trajectories:
//! correlation transport distance, mixing entropy, integrated temporal
//! variance, and per-site energy statistics.
//!
//! Everything here is pure post-processing over immutable inputs.

use serde::{Deserialize, Serialize};

use crate::ensemble::{dispersion, MomentSeries};
use crate::error::{CoreError, Result};
use crate::integrate::TrajectoryRecord;
use crate::model::{local_energy, local_energy_conserved_tiling, ChainParams};

/// A labeled scalar time series on a run's output grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalarSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub label: String,
}

impl ScalarSeries {
    /// Writes `t,value` CSV with full precision.
    pub fn write_csv(&self, out: &mut impl std::io::Write) -> std::io::Result<()> {
        writeln!(out, "t,{}", self.label)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            writeln!(out, "{t:.17e},{v:.17e}")?;
        }
        Ok(())
    }
}

/// Correlation transport distance
/// `l(t) = sum_n sum_{l >= 1, n+l <= L} l * D_{n,n+l}(t)` over in-chain
/// pairs, with `D` the corrected connected pair correlator. A distance-
/// weighted sum of every two-point function in the chain — the canonical
/// strongly nonlocal transport probe. Requires full pair scope.
pub fn ctd(series: &MomentSeries) -> Result<ScalarSeries> {
    let l = series.sites;
    let grid = series.grid_len();
    let mut values = vec![0.0; grid];
    for m in 0..l {
        for n in (m + 1)..l {
            let weight = (n - m) as f64;
            let d = dispersion(m, n, series)?;
            for (v, dg) in values.iter_mut().zip(&d) {
                *v += weight * dg;
            }
        }
    }
    Ok(ScalarSeries {
        times: series.times.clone(),
        values,
        label: "ctd".into(),
    })
}

/// Mixing entropy of a normalized occupation profile:
/// `S = -(1/L) sum_n I_n ln I_n` with `0 ln 0 := 0`, natural logarithm.
///
/// The input is renormalized to unit sum first (callers promise the sum is
/// already 1 within 1e-6; renormalizing makes the bound
/// `S <= ln(L)/L` strict rather than approximate). Entries more negative
/// than `-1e-9` are a domain error; tiny negative roundoff is clamped.
pub fn mixing_entropy(occupations: &[f64]) -> Result<f64> {
    let l = occupations.len();
    if l == 0 {
        return Err(CoreError::ShapeMismatch {
            what: "mixing entropy of an empty profile".into(),
        });
    }
    let mut clamped = Vec::with_capacity(l);
    for (site, &v) in occupations.iter().enumerate() {
        if v < -1e-9 {
            return Err(CoreError::EntropyDomain { site, value: v });
        }
        clamped.push(v.max(0.0));
    }
    let sum: f64 = clamped.iter().sum();
    if sum <= f64::MIN_POSITIVE {
        return Err(CoreError::DegenerateNormalization {
            what: "occupation profile sums to zero".into(),
        });
    }
    let mut s = 0.0;
    for &v in &clamped {
        let x = v / sum;
        if x > 0.0 {
            s -= x * x.ln();
        }
    }
    Ok(s / l as f64)
}

/// Upper bound of the mixing entropy: `ln(L)/L`, attained by the uniform
/// profile.
pub fn mixing_entropy_bound(sites: usize) -> f64 {
    (sites as f64).ln() / sites as f64
}

/// Mixing entropy of the mean occupation profile at every grid point, after
/// subtracting the `hbar_eff/2` vacuum offset from each site (negative
/// remainders clamp to zero). Without the subtraction the vacuum noise floor
/// alone pins the profile near uniform and the entropy near its bound,
/// drowning the signal of the actual particle distribution.
pub fn occupation_entropy_series(series: &MomentSeries) -> Result<ScalarSeries> {
    let offset = 0.5 * series.hbar_eff;
    let mut values = Vec::with_capacity(series.grid_len());
    let mut profile = vec![0.0; series.sites];
    for g in 0..series.grid_len() {
        for (n, slot) in profile.iter_mut().enumerate() {
            *slot = (series.mean_i[g][n] - offset).max(0.0);
        }
        values.push(mixing_entropy(&profile)?);
    }
    Ok(ScalarSeries {
        times: series.times.clone(),
        values,
        label: "mixing_entropy".into(),
    })
}

/// Which per-site signal the temporal variance integrates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalSignal {
    /// The corrected connected diagonal dispersion `D_nn(t)` (the formula as
    /// printed; note it subtracts a mean density from a dispersion).
    Dispersion,
    /// The vacuum-subtracted mean occupation `E[I_n(t)] - hbar_eff/2`
    /// (the physically natural reading).
    Occupation,
}

/// Integrated temporal fluctuation of the per-site signal:
/// `var_t = (1/t_f) sum_n integral_0^{t_f} (X_n(t') - N/L)^2 dt' / D_nn(t_f)`
/// (each site's integral normalized by its own final dispersion), evaluated
/// by trapezoid on the grid up to the last grid point `<= t_final`. `N` is
/// the total vacuum-subtracted number at `t = 0` (unity for the rescaled
/// presets). Small values mean the signal holds steady at the homogeneous
/// level over the whole window.
pub fn temporal_variance(
    series: &MomentSeries,
    signal: TemporalSignal,
    t_final: f64,
) -> Result<f64> {
    let grid = series.grid_len();
    let times = &series.times;
    if grid < 2 {
        return Err(CoreError::InvalidParameter {
            name: "series",
            reason: "temporal variance needs at least two grid points".into(),
        });
    }
    let eps = 1e-9 * t_final.abs().max(1.0);
    if t_final < times[1] - eps || t_final > times[grid - 1] + eps {
        return Err(CoreError::InvalidParameter {
            name: "t_final",
            reason: format!(
                "must lie within the grid [{}, {}], got {t_final}",
                times[1],
                times[grid - 1]
            ),
        });
    }
    let g_f = (0..grid).rev().find(|&g| times[g] <= t_final + eps).unwrap();
    let t_f = times[g_f];
    let l = series.sites;
    let offset = 0.5 * series.hbar_eff;
    // Total vacuum-subtracted number at t = 0 sets the homogeneous target.
    let total: f64 = (0..l).map(|n| series.mean_i[0][n] - offset).sum();
    let target = total / l as f64;

    let mut var = 0.0;
    for n in 0..l {
        let d = dispersion(n, n, series)?;
        let d_final = d[g_f];
        if d_final.abs() <= f64::MIN_POSITIVE {
            return Err(CoreError::DegenerateNormalization {
                what: format!("final dispersion at site {n} is zero"),
            });
        }
        let x = |g: usize| -> f64 {
            match signal {
                TemporalSignal::Dispersion => d[g],
                TemporalSignal::Occupation => series.mean_i[g][n] - offset,
            }
        };
        let mut integral = 0.0;
        for g in 1..=g_f {
            let f0 = (x(g - 1) - target).powi(2);
            let f1 = (x(g) - target).powi(2);
            integral += 0.5 * (times[g] - times[g - 1]) * (f0 + f1);
        }
        var += integral / d_final;
    }
    Ok(var / t_f)
}

/// Ensemble statistics of a per-site trajectory observable.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteSeriesStats {
    pub times: Vec<f64>,
    /// `[grid][site]` ensemble mean.
    pub mean: Vec<Vec<f64>>,
    /// `[grid][site]` connected variance across the ensemble.
    pub dispersion: Vec<Vec<f64>>,
}

/// Which per-site energy density [`local_energy_series`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalEnergyVariant {
    /// The headline observable: bond energy minus `U/8` quartic minus bare-mu
    /// half-occupation. Its site sum is NOT conserved (it differs from the
    /// propagation energy by `U (N - sum I^2)`, which drifts as occupations
    /// spread); its transport scaling family is what matters.
    AsPrinted,
    /// Conserved tiling: `+U/8` quartic with the shifted potential; the site
    /// sum equals the conserved propagation energy at every instant.
    ConservedTiling,
}

/// Ensemble mean and dispersion of the per-site energy over recorded
/// trajectories. All records must share one grid.
pub fn local_energy_series(
    trajectories: &[TrajectoryRecord],
    params: &ChainParams,
    variant: LocalEnergyVariant,
) -> Result<SiteSeriesStats> {
    let first = trajectories.first().ok_or_else(|| CoreError::InvalidParameter {
        name: "trajectories",
        reason: "need at least one recorded trajectory".into(),
    })?;
    let grid = first.grid_len();
    let l = params.sites;
    let mut sum = vec![vec![0.0; l]; grid];
    let mut sum_sq = vec![vec![0.0; l]; grid];
    for record in trajectories {
        if record.grid_len() != grid || record.times != first.times {
            return Err(CoreError::ShapeMismatch {
                what: "trajectory records use different output grids".into(),
            });
        }
        for (g, state) in record.states.iter().enumerate() {
            let h = match variant {
                LocalEnergyVariant::AsPrinted => local_energy(state, params)?,
                LocalEnergyVariant::ConservedTiling => {
                    local_energy_conserved_tiling(state, params)?
                }
            };
            for n in 0..l {
                sum[g][n] += h[n];
                sum_sq[g][n] += h[n] * h[n];
            }
        }
    }
    let inv = 1.0 / trajectories.len() as f64;
    let mut mean = vec![vec![0.0; l]; grid];
    let mut disp = vec![vec![0.0; l]; grid];
    for g in 0..grid {
        for n in 0..l {
            let m = sum[g][n] * inv;
            mean[g][n] = m;
            disp[g][n] = (sum_sq[g][n] * inv - m * m).max(0.0);
        }
    }
    Ok(SiteSeriesStats {
        times: first.times.clone(),
        mean,
        dispersion: disp,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::PairScope;
    use crate::integrate::{evolve, IntegratorConfig};
    use crate::model::PhaseState;
    use crate::wigner::{build_spec, sample_one, sampling_rng, InitialConditionPreset};
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Builds a synthetic full-scope series from prescribed per-grid mean
    /// occupations, connected classical correlations `c[m][n]`, correction
    /// vector `g`, and prefactor.
    fn synthetic_series(
        times: Vec<f64>,
        mean_i: Vec<Vec<f64>>,
        connected: Vec<Vec<Vec<f64>>>,
        jump_g: Vec<Vec<f64>>,
        prefactor: f64,
    ) -> MomentSeries {
        let l = mean_i[0].len();
        let grid = times.len();
        let mut mean_ii = vec![vec![0.0; l * (l + 1) / 2]; grid];
        for g in 0..grid {
            let mut idx = 0;
            for m in 0..l {
                for n in m..l {
                    mean_ii[g][idx] = connected[g][m][n] + mean_i[g][m] * mean_i[g][n];
                    idx += 1;
                }
            }
        }
        MomentSeries {
            times,
            sites: l,
            ensemble_size: 2,
            scope: PairScope::Full,
            stderr_i: vec![vec![0.0; l]; grid],
            jump_g_stderr: vec![vec![0.0; l]; grid],
            mean_i,
            mean_ii,
            jump_g,
            correction_prefactor: prefactor,
            hbar_eff: 1.0,
        }
    }

    #[test]
    fn ctd_matches_a_hand_summed_three_site_case() {
        // Connected matrix: d01 = 0.1, d02 = 0.2, d12 = -0.05; correction
        // vector g = [0.01, -0.02, 0.03] with prefactor 2. Pair corrections:
        // c01 = 2(g0+g1) = -0.02, c02 = 2(g0+g2) = 0.08, c12 = 2(g1+g2) = 0.02.
        // l(t) = 1*(0.1 - 0.02) + 2*(0.2 + 0.08) + 1*(-0.05 + 0.02) = 0.61.
        let connected = vec![vec![
            vec![0.0, 0.1, 0.2],
            vec![0.1, 0.0, -0.05],
            vec![0.2, -0.05, 0.0],
        ]];
        let series = synthetic_series(
            vec![0.0],
            vec![vec![0.5, 0.7, 0.6]],
            connected,
            vec![vec![0.01, -0.02, 0.03]],
            2.0,
        );
        let l = ctd(&series).unwrap();
        assert_abs_diff_eq!(l.values[0], 0.61, epsilon = 1e-12);
    }

    #[test]
    fn ctd_vanishes_for_uncorrelated_profiles_and_is_linear() {
        let zero = vec![vec![vec![0.0; 3]; 3]; 1];
        let series = synthetic_series(
            vec![0.0],
            vec![vec![0.4, 0.3, 0.3]],
            zero.clone(),
            vec![vec![0.0; 3]],
            5.0,
        );
        assert_eq!(ctd(&series).unwrap().values[0], 0.0);

        // Linearity in the correlator matrix: l(A + B) = l(A) + l(B).
        let a = vec![vec![
            vec![0.0, 0.3, -0.1],
            vec![0.3, 0.0, 0.2],
            vec![-0.1, 0.2, 0.0],
        ]];
        let b = vec![vec![
            vec![0.0, -0.05, 0.15],
            vec![-0.05, 0.0, 0.1],
            vec![0.15, 0.1, 0.0],
        ]];
        let mut ab = a.clone();
        for m in 0..3 {
            for n in 0..3 {
                ab[0][m][n] += b[0][m][n];
            }
        }
        let mk = |c: Vec<Vec<Vec<f64>>>| {
            synthetic_series(
                vec![0.0],
                vec![vec![0.5, 0.5, 0.5]],
                c,
                vec![vec![0.0; 3]],
                0.0,
            )
        };
        let la = ctd(&mk(a)).unwrap().values[0];
        let lb = ctd(&mk(b)).unwrap().values[0];
        let lab = ctd(&mk(ab)).unwrap().values[0];
        assert_abs_diff_eq!(lab, la + lb, epsilon = 1e-12);
    }

    #[test]
    fn mixing_entropy_closed_forms() {
        // Uniform profile attains the bound ln(L)/L.
        let uniform = vec![0.1; 10];
        assert_relative_eq!(
            mixing_entropy(&uniform).unwrap(),
            10f64.ln() / 10.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            mixing_entropy_bound(10),
            0.23025850929940458,
            max_relative = 1e-12
        );
        // Delta profile: zero entropy.
        let mut delta = vec![0.0; 10];
        delta[4] = 1.0;
        assert_eq!(mixing_entropy(&delta).unwrap(), 0.0);
        // Two sites sharing half each in a 10-chain: ln(2)/10.
        let mut two = vec![0.0; 10];
        two[2] = 0.5;
        two[7] = 0.5;
        assert_relative_eq!(
            mixing_entropy(&two).unwrap(),
            2f64.ln() / 10.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn mixing_entropy_renormalizes_clamps_and_rejects() {
        // Unnormalized input is scaled to unit sum.
        assert_relative_eq!(
            mixing_entropy(&[0.2, 0.2]).unwrap(),
            mixing_entropy(&[0.5, 0.5]).unwrap(),
            max_relative = 1e-12
        );
        // Tiny negative roundoff is clamped.
        assert!(mixing_entropy(&[1.0, -1e-10]).is_ok());
        // Genuinely negative input is a domain error.
        match mixing_entropy(&[1.0, -1e-3]).unwrap_err() {
            CoreError::EntropyDomain { site, .. } => assert_eq!(site, 1),
            other => panic!("expected entropy domain error, got {other:?}"),
        }
        // All-zero profile cannot be normalized.
        assert!(mixing_entropy(&[0.0, 0.0]).is_err());
    }

    #[test]
    fn mixing_entropy_never_exceeds_the_bound() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(12);
        for l in [2usize, 5, 17, 40] {
            let bound = mixing_entropy_bound(l);
            for _ in 0..200 {
                let profile: Vec<f64> = (0..l).map(|_| rng.random::<f64>()).collect();
                let s = mixing_entropy(&profile).unwrap();
                assert!(s >= 0.0 && s <= bound + 1e-12, "S = {s} vs bound {bound}");
            }
        }
    }

    #[test]
    fn temporal_variance_matches_the_sine_oracle() {
        // X_0 = 1/2 + a sin(wt), X_1 = 1/2 - a sin(wt) (mean occupations
        // offset by the vacuum 0.5); constant diagonal dispersion d.
        // Over whole periods each site integrates a^2 t_f / 2, so
        // var_t = a^2 / d.
        let a = 0.05;
        let d = 0.25;
        let omega = 2.0 * std::f64::consts::PI / 100.0;
        let t_f = 1000.0;
        let steps = 2000usize;
        let times: Vec<f64> = (0..=steps).map(|k| t_f * k as f64 / steps as f64).collect();
        let mut mean_i = Vec::with_capacity(times.len());
        let mut connected = Vec::with_capacity(times.len());
        for &t in &times {
            let s = a * (omega * t).sin();
            mean_i.push(vec![1.0 + s, 1.0 - s]);
            connected.push(vec![vec![d, 0.0], vec![0.0, d]]);
        }
        let grid = times.len();
        let series = synthetic_series(
            times,
            mean_i,
            connected,
            vec![vec![0.0; 2]; grid],
            0.0,
        );
        let var = temporal_variance(&series, TemporalSignal::Occupation, t_f).unwrap();
        assert_relative_eq!(var, a * a / d, max_relative = 1e-4);

        // Constant signal at the homogeneous level: exactly zero.
        let flat = synthetic_series(
            vec![0.0, 10.0, 20.0],
            vec![vec![1.0, 1.0]; 3],
            vec![vec![vec![d, 0.0], vec![0.0, d]]; 3],
            vec![vec![0.0; 2]; 3],
            0.0,
        );
        assert_eq!(
            temporal_variance(&flat, TemporalSignal::Occupation, 20.0).unwrap(),
            0.0
        );

        // Degenerate final dispersion is an error.
        let degenerate = synthetic_series(
            vec![0.0, 10.0],
            vec![vec![1.0, 1.0]; 2],
            vec![vec![vec![0.0; 2]; 2]; 2],
            vec![vec![0.0; 2]; 2],
            0.0,
        );
        assert!(matches!(
            temporal_variance(&degenerate, TemporalSignal::Dispersion, 10.0),
            Err(CoreError::DegenerateNormalization { .. })
        ));
    }

    #[test]
    fn occupation_entropy_subtracts_the_vacuum_offset() {
        // Mean occupations hbar/2 everywhere except one site holding the
        // whole particle: after the vacuum subtraction the profile is a
        // delta, so S = 0; without it S would sit near the bound.
        let l = 10;
        let mut mean = vec![0.5; l];
        mean[3] += 1.0;
        let series = synthetic_series(
            vec![0.0],
            vec![mean],
            vec![vec![vec![0.0; l]; l]],
            vec![vec![0.0; l]],
            0.0,
        );
        let s = occupation_entropy_series(&series).unwrap();
        assert_abs_diff_eq!(s.values[0], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn stationary_zero_coupling_energy_series_is_constant() {
        // J = 0 freezes occupations; on-site energies depend only on I, so
        // every variant is constant in time for any single trajectory.
        let params = ChainParams::new(4, 0.0, 1.5, 0.3, 1.0).unwrap();
        let initial = PhaseState::from_parts(
            vec![0.6, -0.2, 0.8, 0.1],
            vec![0.9, 1.1, -0.4, 0.7],
        )
        .unwrap();
        let cfg = IntegratorConfig {
            step: 0.01,
            t_final: 20.0,
            output_stride: 100,
            conservation_tol: 1e-7,
        };
        let record = evolve(&initial, &params, &cfg).unwrap();
        for variant in [LocalEnergyVariant::AsPrinted, LocalEnergyVariant::ConservedTiling] {
            let stats = local_energy_series(std::slice::from_ref(&record), &params, variant)
                .unwrap();
            for g in 0..stats.times.len() {
                for n in 0..4 {
                    assert_abs_diff_eq!(stats.mean[g][n], stats.mean[0][n], epsilon = 1e-9);
                    assert_abs_diff_eq!(stats.dispersion[g][n], 0.0, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn conserved_tiling_sums_to_a_constant_but_the_printed_form_drifts() {
        // Physical couplings, strongly interacting so the two variants
        // genuinely differ along the flow.
        let params = ChainParams::from_ratios(6, 8.0, 0.0).unwrap();
        let spec = build_spec(&InitialConditionPreset::SingleSite { site: 2 }, &params).unwrap();
        let cfg = IntegratorConfig {
            step: 1.0,
            t_final: 2.0e4,
            output_stride: 500,
            conservation_tol: 1e-6,
        };
        let records: Vec<_> = (0..8)
            .map(|i| {
                let mut rng = sampling_rng(31, i);
                evolve(&sample_one(&spec, &mut rng), &params, &cfg).unwrap()
            })
            .collect();
        let tiled =
            local_energy_series(&records, &params, LocalEnergyVariant::ConservedTiling).unwrap();
        let printed =
            local_energy_series(&records, &params, LocalEnergyVariant::AsPrinted).unwrap();
        let total = |stats: &SiteSeriesStats, g: usize| -> f64 { stats.mean[g].iter().sum() };
        let t0 = total(&tiled, 0);
        let scale = t0.abs().max(1e-12);
        let mut max_drift_tiled: f64 = 0.0;
        let mut max_drift_printed: f64 = 0.0;
        for g in 0..tiled.times.len() {
            max_drift_tiled = max_drift_tiled.max(((total(&tiled, g) - t0) / scale).abs());
            max_drift_printed =
                max_drift_printed.max(((total(&printed, g) - total(&printed, 0)) / scale).abs());
        }
        assert!(
            max_drift_tiled < 1e-6,
            "conserved tiling drifted by {max_drift_tiled:.3e}"
        );
        assert!(
            max_drift_printed > 100.0 * max_drift_tiled,
            "printed form should drift on transport scales, got {max_drift_printed:.3e}"
        );
    }

    #[test]
    fn mismatched_record_grids_are_rejected() {
        let params = ChainParams::from_ratios(3, 1.0, 0.0).unwrap();
        let spec = build_spec(&InitialConditionPreset::SingleSite { site: 1 }, &params).unwrap();
        let mk = |t_final: f64| {
            let mut rng = sampling_rng(1, 0);
            let cfg = IntegratorConfig {
                step: 1.0,
                t_final,
                output_stride: 2,
                conservation_tol: 1e-6,
            };
            evolve(&sample_one(&spec, &mut rng), &params, &cfg).unwrap()
        };
        let records = vec![mk(10.0), mk(20.0)];
        assert!(local_energy_series(&records, &params, LocalEnergyVariant::AsPrinted).is_err());
        assert!(local_energy_series(&[], &params, LocalEnergyVariant::AsPrinted).is_err());
    }
}
