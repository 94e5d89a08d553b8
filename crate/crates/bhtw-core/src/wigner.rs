//! Initial-state construction and sampling.
//!
//! The ensemble's initial conditions sample a Gaussian phase-space
//! distribution (a coherent state): every component `P_j`, `Q_j` is an
//! independent normal variable with configurable center and width. Default
//! widths are `1/sqrt(2)` per component, so every site carries a vacuum
//! occupation of `(sigma_P^2 + sigma_Q^2)/2 = 1/2` on top of the coherent
//! centers, and the centers themselves are normalized to total number 1.
//!
//! Sampling is deterministic: trajectory `i` draws from an independent
//! counter-based RNG stream derived from the master seed (stream `2*i`;
//! odd streams are reserved for jump noise), so ensembles are reproducible
//! bit-for-bit regardless of how trajectories are partitioned over workers.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::model::{ChainParams, PhaseState};

/// Default per-component Gaussian width `1/sqrt(2)`.
pub const DEFAULT_WIDTH: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Gaussian initial-state specification: per-site centers and global widths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentStateSpec {
    pub mean_p: Vec<f64>,
    pub mean_q: Vec<f64>,
    pub sigma_p: f64,
    pub sigma_q: f64,
}

impl CoherentStateSpec {
    pub fn sites(&self) -> usize {
        self.mean_p.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.mean_p.len() != self.mean_q.len() {
            return Err(CoreError::ShapeMismatch {
                what: format!(
                    "mean_P has {} components, mean_Q has {}",
                    self.mean_p.len(),
                    self.mean_q.len()
                ),
            });
        }
        for (name, sigma) in [("sigma_p", self.sigma_p), ("sigma_q", self.sigma_q)] {
            if !sigma.is_finite() || sigma <= 0.0 {
                return Err(CoreError::InvalidParameter {
                    name,
                    reason: format!("width must be finite and > 0, got {sigma}"),
                });
            }
        }
        if !self
            .mean_p
            .iter()
            .chain(&self.mean_q)
            .all(|x| x.is_finite())
        {
            return Err(CoreError::InvalidParameter {
                name: "mean",
                reason: "all centers must be finite".into(),
            });
        }
        Ok(())
    }

    /// Expected total number of the sampled distribution:
    /// `sum_j (mean_P_j^2 + mean_Q_j^2)/2 + L (sigma_P^2 + sigma_Q^2)/2`.
    pub fn implied_number(&self) -> f64 {
        let centers: f64 = self
            .mean_p
            .iter()
            .zip(&self.mean_q)
            .map(|(&p, &q)| 0.5 * (p * p + q * q))
            .sum();
        centers + self.sites() as f64 * 0.5 * (self.sigma_p * self.sigma_p + self.sigma_q * self.sigma_q)
    }

    /// Expected occupation of one site: center part plus vacuum width.
    pub fn implied_occupation(&self, site: usize) -> f64 {
        0.5 * (self.mean_p[site] * self.mean_p[site] + self.mean_q[site] * self.mean_q[site])
            + 0.5 * (self.sigma_p * self.sigma_p + self.sigma_q * self.sigma_q)
    }
}

/// Families of initial occupation profiles. Site indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum InitialConditionPreset {
    /// All coherent amplitude on one site.
    SingleSite { site: usize },
    /// Amplitude split over several sites with the given positive ratios
    /// (normalized internally so the total number is 1).
    MultiSite { sites: Vec<usize>, ratios: Vec<f64> },
    /// Random occupation profile over all sites, drawn once from a symmetric
    /// Dirichlet distribution (normalized i.i.d. exponentials), so each site
    /// carries `1/L` in expectation. The draw is fixed by `profile_seed`.
    UniformRandom { profile_seed: u64 },
}

impl InitialConditionPreset {
    /// Homogeneous profile: every site filled equally (`I_j = 1/L`).
    pub fn uniform_equal(sites: usize) -> Self {
        InitialConditionPreset::MultiSite {
            sites: (0..sites).collect(),
            ratios: vec![1.0; sites],
        }
    }
}

/// Builds the Gaussian spec for a preset with center phase 0 on every filled
/// site (`mean_P = 0`, `mean_Q = sqrt(2 I0)`), default widths.
pub fn build_spec(preset: &InitialConditionPreset, params: &ChainParams) -> Result<CoherentStateSpec> {
    build_spec_with(preset, params, 0.0, DEFAULT_WIDTH, DEFAULT_WIDTH)
}

/// [`build_spec`] with configurable center phase and widths. A filled site
/// with target occupation `I0` gets `mean_P = sqrt(2 I0) sin(phase)`,
/// `mean_Q = sqrt(2 I0) cos(phase)`.
pub fn build_spec_with(
    preset: &InitialConditionPreset,
    params: &ChainParams,
    center_phase: f64,
    sigma_p: f64,
    sigma_q: f64,
) -> Result<CoherentStateSpec> {
    let l = params.sites;
    let occupations = preset_occupations(preset, l)?;
    let mut mean_p = vec![0.0; l];
    let mut mean_q = vec![0.0; l];
    for (site, &i0) in occupations.iter().enumerate() {
        if i0 > 0.0 {
            let amplitude = (2.0 * i0).sqrt();
            mean_p[site] = amplitude * center_phase.sin();
            mean_q[site] = amplitude * center_phase.cos();
        }
    }
    let spec = CoherentStateSpec {
        mean_p,
        mean_q,
        sigma_p,
        sigma_q,
    };
    spec.validate()?;
    Ok(spec)
}

/// Target center occupations of a preset (sum exactly 1).
pub fn preset_occupations(preset: &InitialConditionPreset, sites: usize) -> Result<Vec<f64>> {
    match preset {
        InitialConditionPreset::SingleSite { site } => {
            if *site >= sites {
                return Err(CoreError::InvalidParameter {
                    name: "preset.site",
                    reason: format!("site index {site} out of range for {sites} sites"),
                });
            }
            let mut occ = vec![0.0; sites];
            occ[*site] = 1.0;
            Ok(occ)
        }
        InitialConditionPreset::MultiSite {
            sites: filled,
            ratios,
        } => {
            if filled.is_empty() {
                return Err(CoreError::InvalidParameter {
                    name: "preset.sites",
                    reason: "multi-site preset needs at least one filled site".into(),
                });
            }
            if filled.len() != ratios.len() {
                return Err(CoreError::ShapeMismatch {
                    what: format!(
                        "{} filled sites but {} ratios",
                        filled.len(),
                        ratios.len()
                    ),
                });
            }
            let mut occ = vec![0.0; sites];
            let total: f64 = ratios.iter().sum();
            if !(total.is_finite() && total > 0.0) || ratios.iter().any(|&r| r <= 0.0) {
                return Err(CoreError::InvalidParameter {
                    name: "preset.ratios",
                    reason: "ratios must be positive and finite".into(),
                });
            }
            for (&site, &ratio) in filled.iter().zip(ratios) {
                if site >= sites {
                    return Err(CoreError::InvalidParameter {
                        name: "preset.sites",
                        reason: format!("site index {site} out of range for {sites} sites"),
                    });
                }
                if occ[site] != 0.0 {
                    return Err(CoreError::InvalidParameter {
                        name: "preset.sites",
                        reason: format!("site index {site} listed twice"),
                    });
                }
                occ[site] = ratio / total;
            }
            Ok(occ)
        }
        InitialConditionPreset::UniformRandom { profile_seed } => {
            // Symmetric Dirichlet via normalized exponentials.
            let mut rng = ChaCha8Rng::seed_from_u64(*profile_seed);
            let draws: Vec<f64> = (0..sites)
                .map(|_| {
                    let u: f64 = rng.random::<f64>();
                    -(1.0 - u).ln()
                })
                .collect();
            let total: f64 = draws.iter().sum();
            Ok(draws.into_iter().map(|x| x / total).collect())
        }
    }
}

/// The RNG stream for the initial sample of trajectory `index` under a given
/// master seed. Odd streams (`2*index + 1`) are reserved for jump noise.
pub fn sampling_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index);
    rng
}

/// Jump-noise generator for trajectory `index`: the odd streams of the same
/// master seed (initial sampling takes the even ones), so stochastic kicks
/// are independent of the initial draw and reproducible per trajectory.
pub fn jump_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2 * index + 1);
    rng
}

/// Draws one state from the spec. Component order is pinned (site by site,
/// `P_j` then `Q_j`) — part of the reproducibility contract.
pub fn sample_one(spec: &CoherentStateSpec, rng: &mut ChaCha8Rng) -> PhaseState {
    let l = spec.sites();
    let mut p = Vec::with_capacity(l);
    let mut q = Vec::with_capacity(l);
    for j in 0..l {
        let gp: f64 = rng.sample(StandardNormal);
        let gq: f64 = rng.sample(StandardNormal);
        p.push(spec.mean_p[j] + spec.sigma_p * gp);
        q.push(spec.mean_q[j] + spec.sigma_q * gq);
    }
    PhaseState { p, q }
}

/// Draws `count` independent states, one RNG stream per state.
pub fn sample(spec: &CoherentStateSpec, count: usize, seed: u64) -> Result<Vec<PhaseState>> {
    sample_with(spec, count, seed, false)
}

/// [`sample`] with an optional rescaling of every draw onto the unit-number
/// shell `sum_j I_j = 1` (off by default: the vacuum width is part of the
/// sampled distribution and rescaling distorts the Gaussian moments).
pub fn sample_with(
    spec: &CoherentStateSpec,
    count: usize,
    seed: u64,
    renormalize_number: bool,
) -> Result<Vec<PhaseState>> {
    spec.validate()?;
    if count == 0 {
        return Err(CoreError::InvalidParameter {
            name: "count",
            reason: "need at least one sample".into(),
        });
    }
    let mut states = Vec::with_capacity(count);
    for i in 0..count {
        let mut rng = sampling_rng(seed, i as u64);
        let mut state = sample_one(spec, &mut rng);
        if renormalize_number {
            renormalize_to_unit_number(&mut state);
        }
        states.push(state);
    }
    Ok(states)
}

/// Rescales a state onto the `sum_j I_j = 1` shell.
pub fn renormalize_to_unit_number(state: &mut PhaseState) {
    let n = state.number();
    if n > 0.0 {
        let scale = (1.0 / n).sqrt();
        for x in state.p.iter_mut().chain(state.q.iter_mut()) {
            *x *= scale;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn params(sites: usize) -> ChainParams {
        ChainParams::from_ratios(sites, 1.0, 0.0).unwrap()
    }

    #[test]
    fn single_site_spec_matches_closed_form() {
        // All amplitude on the third site (index 2):
        // mean_Q = (0, 0, sqrt(2), 0, ...), mean_P = 0, default widths.
        let spec = build_spec(
            &InitialConditionPreset::SingleSite { site: 2 },
            &params(10),
        )
        .unwrap();
        for j in 0..10 {
            assert_eq!(spec.mean_p[j], 0.0);
            if j == 2 {
                assert_relative_eq!(spec.mean_q[j], 2.0_f64.sqrt(), max_relative = 1e-15);
            } else {
                assert_eq!(spec.mean_q[j], 0.0);
            }
        }
        assert_relative_eq!(spec.sigma_p, DEFAULT_WIDTH);
        assert_relative_eq!(spec.sigma_q, DEFAULT_WIDTH);
        // Implied number: centers (1) + vacuum (L * 1/2).
        assert_relative_eq!(spec.implied_number(), 1.0 + 5.0, max_relative = 1e-14);
    }

    #[test]
    fn irrational_two_site_ratios() {
        // Sites 2 and 4 (third and fifth) with ratio sqrt(2):1 split
        // I_2 = sqrt(2)/(1+sqrt(2)), I_4 = 1/(1+sqrt(2)).
        let r = 2.0_f64.sqrt();
        let spec = build_spec(
            &InitialConditionPreset::MultiSite {
                sites: vec![2, 4],
                ratios: vec![r, 1.0],
            },
            &params(10),
        )
        .unwrap();
        let i2 = 0.5 * (spec.mean_p[2].powi(2) + spec.mean_q[2].powi(2));
        let i4 = 0.5 * (spec.mean_p[4].powi(2) + spec.mean_q[4].powi(2));
        assert_relative_eq!(i2, r / (1.0 + r), max_relative = 1e-14);
        assert_relative_eq!(i4, 1.0 / (1.0 + r), max_relative = 1e-14);
    }

    #[test]
    fn uniform_random_profile_sums_to_one_and_is_symmetric_in_expectation() {
        let l = 10;
        // Every single draw is a valid profile.
        for seed in 0..50u64 {
            let occ = preset_occupations(
                &InitialConditionPreset::UniformRandom { profile_seed: seed },
                l,
            )
            .unwrap();
            assert_relative_eq!(occ.iter().sum::<f64>(), 1.0, max_relative = 1e-12);
            assert!(occ.iter().all(|&x| x > 0.0));
        }
        // Expectation of each site's occupation over many profile draws is
        // 1/L (Dirichlet symmetry); stderr of the mean at 4000 draws is
        // about sigma/sqrt(4000) ~ 0.0014, test at 5 sigma.
        let draws = 4000;
        let mut mean = vec![0.0; l];
        for seed in 0..draws {
            let occ = preset_occupations(
                &InitialConditionPreset::UniformRandom {
                    profile_seed: 1000 + seed as u64,
                },
                l,
            )
            .unwrap();
            for (m, o) in mean.iter_mut().zip(&occ) {
                *m += o / draws as f64;
            }
        }
        for &m in &mean {
            assert_abs_diff_eq!(m, 0.1, epsilon = 0.007);
        }
    }

    #[test]
    fn uniform_equal_helper_fills_all_sites_equally() {
        let occ =
            preset_occupations(&InitialConditionPreset::uniform_equal(8), 8).unwrap();
        for &o in &occ {
            assert_relative_eq!(o, 0.125, max_relative = 1e-14);
        }
    }

    #[test]
    fn degenerate_widths_collapse_onto_centers() {
        let mut spec = build_spec(
            &InitialConditionPreset::SingleSite { site: 1 },
            &params(4),
        )
        .unwrap();
        spec.sigma_p = 1e-9;
        spec.sigma_q = 1e-9;
        for state in sample(&spec, 200, 7).unwrap() {
            for j in 0..4 {
                assert_abs_diff_eq!(state.p[j], spec.mean_p[j], epsilon = 1e-6);
                assert_abs_diff_eq!(state.q[j], spec.mean_q[j], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn sample_moments_match_spec() {
        // 1e5 samples: means within 4 standard errors, variances within 5%,
        // mean occupations within 3% of center + vacuum.
        let spec = build_spec(
            &InitialConditionPreset::SingleSite { site: 2 },
            &params(6),
        )
        .unwrap();
        let count = 100_000;
        let states = sample(&spec, count, 12345).unwrap();
        let se = DEFAULT_WIDTH / (count as f64).sqrt();
        for j in 0..6 {
            let mean_p: f64 = states.iter().map(|s| s.p[j]).sum::<f64>() / count as f64;
            let mean_q: f64 = states.iter().map(|s| s.q[j]).sum::<f64>() / count as f64;
            assert_abs_diff_eq!(mean_p, spec.mean_p[j], epsilon = 4.0 * se);
            assert_abs_diff_eq!(mean_q, spec.mean_q[j], epsilon = 4.0 * se);
            let var_p: f64 = states
                .iter()
                .map(|s| (s.p[j] - mean_p).powi(2))
                .sum::<f64>()
                / (count - 1) as f64;
            assert_relative_eq!(var_p, 0.5, max_relative = 0.05);
            let mean_i: f64 = states
                .iter()
                .map(|s| 0.5 * (s.p[j] * s.p[j] + s.q[j] * s.q[j]))
                .sum::<f64>()
                / count as f64;
            assert_relative_eq!(mean_i, spec.implied_occupation(j), max_relative = 0.03);
        }
    }

    #[test]
    fn sampling_is_reproducible_and_stream_indexed() {
        let spec = build_spec(
            &InitialConditionPreset::SingleSite { site: 0 },
            &params(3),
        )
        .unwrap();
        let a = sample(&spec, 16, 99).unwrap();
        let b = sample(&spec, 16, 99).unwrap();
        assert_eq!(a, b);
        // A shorter run is a prefix of a longer one (per-trajectory streams).
        let c = sample(&spec, 4, 99).unwrap();
        assert_eq!(&a[..4], &c[..]);
        // Different seeds decorrelate.
        let d = sample(&spec, 16, 100).unwrap();
        assert_ne!(a, d);
    }

    #[test]
    fn renormalized_samples_sit_on_unit_shell() {
        let spec = build_spec(
            &InitialConditionPreset::uniform_equal(5),
            &params(5),
        )
        .unwrap();
        for state in sample_with(&spec, 64, 5, true).unwrap() {
            assert_relative_eq!(state.number(), 1.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn invalid_presets_are_rejected() {
        let p = params(4);
        assert!(build_spec(&InitialConditionPreset::SingleSite { site: 4 }, &p).is_err());
        assert!(build_spec(
            &InitialConditionPreset::MultiSite {
                sites: vec![],
                ratios: vec![]
            },
            &p
        )
        .is_err());
        assert!(build_spec(
            &InitialConditionPreset::MultiSite {
                sites: vec![0, 0],
                ratios: vec![1.0, 1.0]
            },
            &p
        )
        .is_err());
        assert!(build_spec(
            &InitialConditionPreset::MultiSite {
                sites: vec![0, 1],
                ratios: vec![1.0, -1.0]
            },
            &p
        )
        .is_err());
        assert!(build_spec(
            &InitialConditionPreset::MultiSite {
                sites: vec![0, 1],
                ratios: vec![1.0]
            },
            &p
        )
        .is_err());
    }
}
