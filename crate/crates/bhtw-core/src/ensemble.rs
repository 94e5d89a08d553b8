//! Ensemble averaging of occupation moments with first-order corrections.
//!
//! A run draws `count` initial states from a coherent-state Wigner
//! distribution, integrates each trajectory, and accumulates on the output
//! grid:
//!
//! * `mean_i[g][n]` — the classical one-point average `E[I_n(t)]`;
//! * `mean_ii` — classical two-point averages `E[I_m I_n]` (full symmetric
//!   matrix or diagonal only, see [`PairScope`]);
//! * `jump_g[g][n]` — the correction vector `E[g_n(t)]` with
//!   `g_n = P_n(t) * sum_k int_0^t Q_k + Q_n(t) * sum_k int_0^t P_k`.
//!
//! The first-order correction to `E[I_m I_n]` is assembled from the vector as
//! `jump_corr(m, n) = prefactor * (E[g_m] + E[g_n])` with
//! `prefactor = 3 pi U / (4 hbar_eff)` — the whole `L x L` correction matrix
//! from one `L`-vector per grid point. One-point functions carry no
//! first-order correction; corrections enter only through pair quantities
//! ([`dispersion`] and the [`MomentSeries::jump_corr`] accessor).
//!
//! Correction estimators come in two flavors selected by [`Corrections`]:
//! `Integrated` contracts the endpoint state against the trapezoid
//! cumulative integrals of the same deterministic trajectory (the production
//! mode), while `Langevin` evaluates the same contraction on a stochastically
//! kicked twin trajectory, with the cumulative integrals replaced by
//! jump-grid Riemann sums over pre-kick values. Both modes share the
//! classical trajectory sample per index (common random numbers), so all
//! classical moments are bit-identical across modes at a fixed master seed;
//! only the correction channel differs.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::exec::{block_fold_reduce, ExecPolicy};
use crate::integrate::{IntegratorConfig, Stepper, DEFAULT_JUMP_SCALE};
use crate::model::ChainParams;
use crate::wigner::{jump_rng, sample_one, sampling_rng, renormalize_to_unit_number, CoherentStateSpec};

/// First-order correction mode for an ensemble run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Corrections {
    /// Classical averages only; the correction channel stays zero.
    None,
    /// Deterministic cumulative-integral estimator (production mode).
    Integrated,
    /// Stochastic-kick estimator: jumps every `jump_stride` internal steps,
    /// displacement amplitude `jump_scale * cbrt(U * delta_tau / (8 hbar))`.
    Langevin { jump_stride: usize, jump_scale: f64 },
}

impl Corrections {
    /// Stochastic mode at the default jump interval (ten internal steps) and
    /// default amplitude scale.
    pub fn langevin_default() -> Self {
        Corrections::Langevin {
            jump_stride: 10,
            jump_scale: DEFAULT_JUMP_SCALE,
        }
    }
}

/// Which pair moments an ensemble run accumulates. `Full` stores the packed
/// symmetric `L x L` matrix per grid point; `Diagonal` stores only
/// `E[I_n^2]`, which long-horizon site-dispersion runs need, at `2/(L+1)` of
/// the memory. Reduction memory scales with `ceil(count / 64)` block
/// partials, so prefer `Diagonal` for large chains on dense grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairScope {
    Full,
    Diagonal,
}

/// Tuning knobs beyond the core run signature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleOptions {
    pub scope: PairScope,
    pub policy: ExecPolicy,
    /// Project every sample onto the constant-number shell before evolving.
    pub renormalize: bool,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            scope: PairScope::Full,
            policy: ExecPolicy::default(),
            renormalize: false,
        }
    }
}

/// Packed upper-triangle index for the symmetric pair matrix.
#[inline]
fn pair_index(l: usize, m: usize, n: usize) -> usize {
    let (a, b) = if m <= n { (m, n) } else { (n, m) };
    a * (2 * l - a + 1) / 2 + (b - a)
}

fn pair_len(l: usize, scope: PairScope) -> usize {
    match scope {
        PairScope::Full => l * (l + 1) / 2,
        PairScope::Diagonal => l,
    }
}

/// Ensemble-averaged moment series on the output grid.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentSeries {
    pub times: Vec<f64>,
    pub sites: usize,
    pub ensemble_size: usize,
    pub scope: PairScope,
    /// `E[I_n(t)]`, `[grid][site]`. Never carries corrections.
    pub mean_i: Vec<Vec<f64>>,
    /// Classical `E[I_m I_n]`: packed upper triangle (`Full`) or diagonal.
    pub mean_ii: Vec<Vec<f64>>,
    /// Correction vector `E[g_n(t)]`, `[grid][site]`; zero for `None` mode.
    pub jump_g: Vec<Vec<f64>>,
    /// Standard error of `jump_g` across the ensemble.
    pub jump_g_stderr: Vec<Vec<f64>>,
    /// Standard error of `mean_i`: `sqrt((E[I^2] - E[I]^2) / count)`.
    pub stderr_i: Vec<Vec<f64>>,
    /// `3 pi U / (4 hbar_eff)`; multiplies `E[g_m] + E[g_n]` in [`Self::jump_corr`].
    pub correction_prefactor: f64,
    /// Effective Planck constant of the run (downstream diagnostics subtract
    /// the `hbar_eff / 2` vacuum offset from mean occupations).
    pub hbar_eff: f64,
}

impl MomentSeries {
    pub fn grid_len(&self) -> usize {
        self.times.len()
    }

    /// Classical `E[I_m I_n]` at grid point `g`.
    pub fn mean_ii_at(&self, g: usize, m: usize, n: usize) -> Result<f64> {
        self.check_pair(m, n)?;
        match self.scope {
            PairScope::Full => Ok(self.mean_ii[g][pair_index(self.sites, m, n)]),
            PairScope::Diagonal => Ok(self.mean_ii[g][m]),
        }
    }

    /// First-order correction to `E[I_m I_n]` at grid point `g`.
    pub fn jump_corr(&self, g: usize, m: usize, n: usize) -> Result<f64> {
        self.check_pair(m, n)?;
        Ok(self.correction_prefactor * (self.jump_g[g][m] + self.jump_g[g][n]))
    }

    /// Corrected `E[I_m I_n]` at grid point `g`.
    pub fn corrected_ii(&self, g: usize, m: usize, n: usize) -> Result<f64> {
        Ok(self.mean_ii_at(g, m, n)? + self.jump_corr(g, m, n)?)
    }

    fn check_pair(&self, m: usize, n: usize) -> Result<()> {
        if m >= self.sites || n >= self.sites {
            return Err(CoreError::ShapeMismatch {
                what: format!("pair ({m}, {n}) out of range for {} sites", self.sites),
            });
        }
        if self.scope == PairScope::Diagonal && m != n {
            return Err(CoreError::ShapeMismatch {
                what: format!(
                    "pair ({m}, {n}) requested from a diagonal-scope series"
                ),
            });
        }
        Ok(())
    }
}

/// Connected, corrected pair dispersion
/// `D_mn(t) = E[I_m I_n] + jump_corr - E[I_m] E[I_n]` over the whole grid.
pub fn dispersion(m: usize, n: usize, series: &MomentSeries) -> Result<Vec<f64>> {
    (0..series.grid_len())
        .map(|g| {
            Ok(series.corrected_ii(g, m, n)?
                - series.mean_i[g][m] * series.mean_i[g][n])
        })
        .collect()
}

/// Running sums for one reduction block.
struct MomentAccum {
    sum_i: Vec<Vec<f64>>,
    sum_ii: Vec<Vec<f64>>,
    sum_g: Vec<Vec<f64>>,
    sum_g_sq: Vec<Vec<f64>>,
}

impl MomentAccum {
    fn new(grid: usize, l: usize, scope: PairScope) -> Self {
        MomentAccum {
            sum_i: vec![vec![0.0; l]; grid],
            sum_ii: vec![vec![0.0; pair_len(l, scope)]; grid],
            sum_g: vec![vec![0.0; l]; grid],
            sum_g_sq: vec![vec![0.0; l]; grid],
        }
    }

    fn merge(mut self, other: Self) -> Self {
        let add = |a: &mut Vec<Vec<f64>>, b: &Vec<Vec<f64>>| {
            for (ra, rb) in a.iter_mut().zip(b) {
                for (x, y) in ra.iter_mut().zip(rb) {
                    *x += *y;
                }
            }
        };
        add(&mut self.sum_i, &other.sum_i);
        add(&mut self.sum_ii, &other.sum_ii);
        add(&mut self.sum_g, &other.sum_g);
        add(&mut self.sum_g_sq, &other.sum_g_sq);
        self
    }

    /// Accumulates one grid point from the classical state `(p, q)` and the
    /// correction contraction sources `(src_p, src_q, int_p_sum, int_q_sum)`
    /// (endpoint state and chain-summed integrals of the estimator's
    /// trajectory; `None` mode passes zeros via `with_g = false`).
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        g: usize,
        scope: PairScope,
        p: &[f64],
        q: &[f64],
        with_g: bool,
        src_p: &[f64],
        src_q: &[f64],
        int_p_sum: f64,
        int_q_sum: f64,
        occ: &mut [f64],
    ) {
        let l = p.len();
        for n in 0..l {
            occ[n] = 0.5 * (p[n] * p[n] + q[n] * q[n]);
        }
        let row_i = &mut self.sum_i[g];
        for n in 0..l {
            row_i[n] += occ[n];
        }
        let row_ii = &mut self.sum_ii[g];
        match scope {
            PairScope::Full => {
                let mut idx = 0;
                for m in 0..l {
                    let im = occ[m];
                    for n in m..l {
                        row_ii[idx] += im * occ[n];
                        idx += 1;
                    }
                }
            }
            PairScope::Diagonal => {
                for n in 0..l {
                    row_ii[n] += occ[n] * occ[n];
                }
            }
        }
        if with_g {
            let row_g = &mut self.sum_g[g];
            let row_g_sq = &mut self.sum_g_sq[g];
            for n in 0..l {
                let gn = src_p[n] * int_q_sum + src_q[n] * int_p_sum;
                row_g[n] += gn;
                row_g_sq[n] += gn * gn;
            }
        }
    }
}

/// Runs a full ensemble with default options (full pair scope, default
/// execution policy, no shell renormalization).
///
/// Trajectory `i` draws its initial state from RNG stream `2 i` and its jump
/// noise (stochastic mode) from stream `2 i + 1` of the master seed, so
/// ensembles are reproducible and extending `count` preserves the common
/// prefix. Any trajectory failure aborts the run and reports the failing
/// index.
pub fn run_ensemble(
    spec: &CoherentStateSpec,
    params: &ChainParams,
    cfg: &IntegratorConfig,
    count: usize,
    seed: u64,
    corrections: Corrections,
) -> Result<MomentSeries> {
    run_ensemble_with(spec, params, cfg, count, seed, corrections, EnsembleOptions::default())
}

/// [`run_ensemble`] with explicit [`EnsembleOptions`].
#[allow(clippy::too_many_arguments)]
pub fn run_ensemble_with(
    spec: &CoherentStateSpec,
    params: &ChainParams,
    cfg: &IntegratorConfig,
    count: usize,
    seed: u64,
    corrections: Corrections,
    options: EnsembleOptions,
) -> Result<MomentSeries> {
    params.validate()?;
    cfg.validate()?;
    spec.validate()?;
    if spec.sites() != params.sites {
        return Err(CoreError::ShapeMismatch {
            what: format!(
                "initial spec has {} sites, parameters expect {}",
                spec.sites(),
                params.sites
            ),
        });
    }
    if count < 2 {
        return Err(CoreError::InvalidParameter {
            name: "count",
            reason: format!("ensemble needs at least 2 trajectories, got {count}"),
        });
    }
    if let Corrections::Langevin { jump_stride, jump_scale } = corrections {
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
    }

    let l = params.sites;
    let grid = cfg.grid_len();
    let scope = options.scope;

    let fold = |accum: &mut MomentAccum, index: usize| -> Result<()> {
        fold_trajectory(accum, index, spec, params, cfg, corrections, options, seed)
            .map_err(|e| CoreError::TrajectoryFailed {
                index,
                source: Box::new(e),
            })
    };
    let accum = block_fold_reduce(
        count,
        options.policy,
        || MomentAccum::new(grid, l, scope),
        fold,
        MomentAccum::merge,
    )?;

    // Finalize: divide sums, form standard errors.
    let inv = 1.0 / count as f64;
    let mut mean_i = vec![vec![0.0; l]; grid];
    let mut stderr_i = vec![vec![0.0; l]; grid];
    let mut mean_ii = vec![vec![0.0; pair_len(l, scope)]; grid];
    let mut jump_g = vec![vec![0.0; l]; grid];
    let mut jump_g_stderr = vec![vec![0.0; l]; grid];
    for g in 0..grid {
        for n in 0..l {
            mean_i[g][n] = accum.sum_i[g][n] * inv;
        }
        for (k, v) in accum.sum_ii[g].iter().enumerate() {
            mean_ii[g][k] = v * inv;
        }
        for n in 0..l {
            let ii = match scope {
                PairScope::Full => mean_ii[g][pair_index(l, n, n)],
                PairScope::Diagonal => mean_ii[g][n],
            };
            stderr_i[g][n] = ((ii - mean_i[g][n] * mean_i[g][n]).max(0.0) * inv).sqrt();
            let gm = accum.sum_g[g][n] * inv;
            jump_g[g][n] = gm;
            jump_g_stderr[g][n] =
                ((accum.sum_g_sq[g][n] * inv - gm * gm).max(0.0) * inv).sqrt();
        }
    }
    let correction_prefactor = match corrections {
        Corrections::None => 0.0,
        _ => 3.0 * std::f64::consts::PI * params.interaction / (4.0 * params.hbar_eff),
    };
    Ok(MomentSeries {
        times: (0..grid).map(|g| cfg.grid_time(g)).collect(),
        sites: l,
        ensemble_size: count,
        scope,
        mean_i,
        mean_ii,
        jump_g,
        jump_g_stderr,
        stderr_i,
        correction_prefactor,
        hbar_eff: params.hbar_eff,
    })
}

/// Integrates trajectory `index` and folds its grid samples into `accum`.
#[allow(clippy::too_many_arguments)]
fn fold_trajectory(
    accum: &mut MomentAccum,
    index: usize,
    spec: &CoherentStateSpec,
    params: &ChainParams,
    cfg: &IntegratorConfig,
    corrections: Corrections,
    options: EnsembleOptions,
    seed: u64,
) -> Result<()> {
    let l = params.sites;
    let mut rng = sampling_rng(seed, index as u64);
    let mut initial = sample_one(spec, &mut rng);
    if options.renormalize {
        renormalize_to_unit_number(&mut initial);
    }
    let total = cfg.total_steps();
    let stride = cfg.output_stride;
    let mut occ = vec![0.0; l];
    let zeros = vec![0.0; l];

    match corrections {
        Corrections::None | Corrections::Integrated => {
            let with_g = matches!(corrections, Corrections::Integrated);
            let mut stepper = Stepper::new(&initial, params, cfg)?;
            let push = |accum: &mut MomentAccum, g: usize, st: &Stepper, occ: &mut [f64]| {
                let (ips, iqs) = if with_g {
                    (
                        st.cumint_p().iter().sum::<f64>(),
                        st.cumint_q().iter().sum::<f64>(),
                    )
                } else {
                    (0.0, 0.0)
                };
                accum.push(
                    g,
                    options.scope,
                    st.p(),
                    st.q(),
                    with_g,
                    if with_g { st.p() } else { &zeros },
                    if with_g { st.q() } else { &zeros },
                    ips,
                    iqs,
                    occ,
                );
            };
            push(accum, 0, &stepper, &mut occ);
            let mut g = 1;
            for s in 1..=total {
                stepper.step();
                if s % stride == 0 {
                    stepper.check_conservation()?;
                    push(accum, g, &stepper, &mut occ);
                    g += 1;
                }
            }
        }
        Corrections::Langevin { jump_stride, jump_scale } => {
            // Classical twin carries all classical moments; the kicked twin
            // carries only the correction contraction. Shared initial state
            // (common random numbers) makes classical moments bit-identical
            // with the other modes at the same master seed.
            let mut classical = Stepper::new(&initial, params, cfg)?;
            let mut kicked = Stepper::new(&initial, params, cfg)?;
            let mut jrng = jump_rng(seed, index as u64);
            let delta_tau = jump_stride as f64 * cfg.step;
            let amplitude =
                jump_scale * (params.interaction * delta_tau / (8.0 * params.hbar_eff)).cbrt();
            let mut acc_p = vec![0.0; l];
            let mut acc_q = vec![0.0; l];
            let push = |accum: &mut MomentAccum,
                            g: usize,
                            cl: &Stepper,
                            kk: &Stepper,
                            acc_p: &[f64],
                            acc_q: &[f64],
                            occ: &mut [f64]| {
                accum.push(
                    g,
                    options.scope,
                    cl.p(),
                    cl.q(),
                    true,
                    kk.p(),
                    kk.q(),
                    acc_p.iter().sum::<f64>(),
                    acc_q.iter().sum::<f64>(),
                    occ,
                );
            };
            push(accum, 0, &classical, &kicked, &acc_p, &acc_q, &mut occ);
            let mut g = 1;
            for s in 1..=total {
                classical.step();
                kicked.step();
                if s % jump_stride == 0 {
                    kicked.apply_jump(amplitude, delta_tau, &mut jrng, &mut acc_p, &mut acc_q);
                }
                if s % stride == 0 {
                    classical.check_conservation()?;
                    kicked.check_finite()?;
                    push(accum, g, &classical, &kicked, &acc_p, &acc_q, &mut occ);
                    g += 1;
                }
            }
        }
    }
    Ok(())
}

/// Writes the per-site series as long-format CSV:
/// `t,site,mean_I,stderr_I,dispersion,jump_g` with the connected corrected
/// diagonal dispersion in column five.
pub fn write_site_series_csv(
    series: &MomentSeries,
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(out, "t,site,mean_I,stderr_I,dispersion,jump_g")?;
    for g in 0..series.grid_len() {
        for n in 0..series.sites {
            let d = series
                .corrected_ii(g, n, n)
                .map(|ii| ii - series.mean_i[g][n] * series.mean_i[g][n])
                .unwrap_or(f64::NAN);
            writeln!(
                out,
                "{:.17e},{},{:.17e},{:.17e},{:.17e},{:.17e}",
                series.times[g],
                n + 1,
                series.mean_i[g][n],
                series.stderr_i[g][n],
                d,
                series.jump_g[g][n],
            )?;
        }
    }
    Ok(())
}

/// Writes selected corrected connected pair dispersions as long-format CSV:
/// `t,m,n,dispersion`. Sites are 1-based in the file.
pub fn write_pair_series_csv(
    series: &MomentSeries,
    pairs: &[(usize, usize)],
    out: &mut impl std::io::Write,
) -> std::io::Result<()> {
    writeln!(out, "t,m,n,dispersion")?;
    let mut columns = Vec::with_capacity(pairs.len());
    for &(m, n) in pairs {
        let d = dispersion(m, n, series).map_err(std::io::Error::other)?;
        columns.push(d);
    }
    for g in 0..series.grid_len() {
        for (k, &(m, n)) in pairs.iter().enumerate() {
            writeln!(
                out,
                "{:.17e},{},{},{:.17e}",
                series.times[g],
                m + 1,
                n + 1,
                columns[k][g],
            )?;
        }
    }
    Ok(())
}
