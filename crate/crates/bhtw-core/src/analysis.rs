//! Scaling-law extraction: log-log exponent fits, crossover detection
//! between growth regimes, and the deterministic early-time cascade oracle.

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};
use crate::integrate::{evolve, IntegratorConfig};
use crate::model::{ChainParams, PhaseState};
use crate::wigner::InitialConditionPreset;

/// Result of one power-law fit `v ~ t^slope` on a log-log window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    /// `[t_lo, t_hi]` actually used.
    pub window: (f64, f64),
    pub slope: f64,
    /// Standard error of the slope (ordinary least squares).
    pub stderr: f64,
    pub r_squared: f64,
    /// Grid points inside the window.
    pub points: usize,
    /// Exponent this fit is judged against, if any.
    pub target_exponent: Option<f64>,
    /// `|slope - target| <= tolerance`, set by [`ScalingFit::judged`].
    pub verdict: Option<bool>,
}

impl ScalingFit {
    /// Attaches a target exponent and pass/fail verdict at `tolerance`.
    pub fn judged(mut self, target: f64, tolerance: f64) -> Self {
        self.target_exponent = Some(target);
        self.verdict = Some((self.slope - target).abs() <= tolerance);
        self
    }
}

/// Ordinary least squares of `ln v` against `ln t` over grid points with
/// `window.0 <= t <= window.1`. Needs at least 8 such points, all with
/// strictly positive values (and the window must sit at positive times).
pub fn fit_exponent(times: &[f64], values: &[f64], window: (f64, f64)) -> Result<ScalingFit> {
    if times.len() != values.len() {
        return Err(CoreError::ShapeMismatch {
            what: format!(
                "{} times vs {} values in exponent fit",
                times.len(),
                values.len()
            ),
        });
    }
    let (lo, hi) = window;
    if !(lo > 0.0 && lo < hi && hi.is_finite()) {
        return Err(CoreError::InvalidParameter {
            name: "window",
            reason: format!("need 0 < t_lo < t_hi, got [{lo}, {hi}]"),
        });
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (&t, &v) in times.iter().zip(values) {
        if t >= lo && t <= hi {
            if v <= 0.0 {
                return Err(CoreError::FitRejected {
                    reason: format!("nonpositive value {v:.3e} at t = {t} inside the fit window"),
                });
            }
            xs.push(t.ln());
            ys.push(v.ln());
        }
    }
    let n = xs.len();
    if n < 8 {
        return Err(CoreError::FitRejected {
            reason: format!("only {n} grid points inside [{lo}, {hi}], need at least 8"),
        });
    }
    let nf = n as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let dx = x - x_mean;
        let dy = y - y_mean;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx <= 0.0 {
        return Err(CoreError::FitRejected {
            reason: "all window points share one time; no slope is identifiable".into(),
        });
    }
    let slope = sxy / sxx;
    let ssr = (syy - slope * sxy).max(0.0);
    let stderr = if n > 2 {
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - ssr / syy } else { 1.0 };
    Ok(ScalingFit {
        window,
        slope,
        stderr,
        r_squared,
        points: n,
        target_exponent: None,
        verdict: None,
    })
}

/// Sliding-window slope profile plus the detected settling time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossoverResult {
    /// First profile time from which the windowed slope stays within the
    /// band around the late exponent for a full e-fold; `None` when no such
    /// stable late regime exists (a valid outcome).
    pub crossover: Option<f64>,
    /// Window centers of the slope profile.
    pub profile_times: Vec<f64>,
    /// Windowed log-log slopes at those centers.
    pub profile_slopes: Vec<f64>,
}

/// Tuning for [`detect_crossover`]. Defaults: slope windows span one e-fold
/// (`+-0.5` in `ln t` around the center), the late band is `+-0.2`, and the
/// slope must hold the band for one e-fold of centers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossoverConfig {
    pub window_half_efolds: f64,
    pub band: f64,
    pub hold_efolds: f64,
}

impl Default for CrossoverConfig {
    fn default() -> Self {
        CrossoverConfig {
            window_half_efolds: 0.5,
            band: 0.2,
            hold_efolds: 1.0,
        }
    }
}

/// Locates the settling of a growth law onto the late exponent.
///
/// A slope profile is computed by fitting one e-fold windows centered on
/// every admissible grid point; the crossover estimate is the first center
/// from which all centers within the next `hold_efolds` e-fold stay inside
/// `late_exponent +- band`, provided some earlier center showed a slope near
/// `early_exponent` (within `2.5 * band`) — otherwise the series never
/// exhibited the early regime and `None` is returned, as it is when no
/// stable late window exists.
pub fn detect_crossover(
    times: &[f64],
    values: &[f64],
    early_exponent: f64,
    late_exponent: f64,
    cfg: CrossoverConfig,
) -> Result<CrossoverResult> {
    let half = cfg.window_half_efolds;
    let mut profile_times = Vec::new();
    let mut profile_slopes = Vec::new();
    for &tc in times {
        if tc <= 0.0 {
            continue;
        }
        let window = (tc * (-half).exp(), tc * half.exp());
        if window.0 < times[0].max(f64::MIN_POSITIVE) || window.1 > *times.last().unwrap() {
            continue;
        }
        match fit_exponent(times, values, window) {
            Ok(fit) => {
                profile_times.push(tc);
                profile_slopes.push(fit.slope);
            }
            Err(CoreError::FitRejected { .. }) => continue,
            Err(other) => return Err(other),
        }
    }
    if profile_times.is_empty() {
        return Err(CoreError::FitRejected {
            reason: "no window admits a slope estimate; series too short".into(),
        });
    }
    let in_band = |s: f64| (s - late_exponent).abs() <= cfg.band;
    let near_early = |s: f64| (s - early_exponent).abs() <= 2.5 * cfg.band;
    let mut crossover = None;
    for (k, (&tc, &slope)) in profile_times.iter().zip(&profile_slopes).enumerate() {
        if !in_band(slope) {
            continue;
        }
        if !profile_slopes[..k].iter().any(|&s| near_early(s)) {
            continue;
        }
        let hold_end = tc * cfg.hold_efolds.exp();
        let held = profile_times
            .iter()
            .zip(&profile_slopes)
            .skip(k)
            .take_while(|(&t, _)| t <= hold_end)
            .all(|(_, &s)| in_band(s));
        let window_reaches = profile_times.last().copied().unwrap_or(tc) >= hold_end;
        if held && window_reaches {
            crossover = Some(tc);
            break;
        }
    }
    Ok(CrossoverResult {
        crossover,
        profile_times,
        profile_slopes,
    })
}

/// One early-time cascade verdict: site offset from the filled center and
/// the fitted growth exponent (target `2 |offset|`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EarlyTimeReport {
    /// Fit of the filled site itself (target: no growth).
    pub center: ScalingFit,
    /// `(offset, fit)` for populated neighbors, offsets `-3..=3` except 0.
    pub offsets: Vec<(isize, ScalingFit)>,
    /// Seeding occupation used on the empty sites.
    pub seeding: f64,
}

/// Deterministic early-time cascade check: one classical trajectory from the
/// wavepacket center (unit occupation, zero phases, empty sites seeded with
/// `epsilon = 1e-8`), with `I_{n +- l}(t)` fitted against the predicted
/// `t^{2l}` ladder on early windows and the filled site checked for absence
/// of growth.
pub fn early_time_oracle(
    params: &ChainParams,
    preset: &InitialConditionPreset,
) -> Result<EarlyTimeReport> {
    early_time_oracle_with_seeding(params, preset, 1e-8)
}

/// [`early_time_oracle`] with an explicit seeding occupation (sensitivity
/// studies use `1e-6` and `1e-10`).
pub fn early_time_oracle_with_seeding(
    params: &ChainParams,
    preset: &InitialConditionPreset,
    seeding: f64,
) -> Result<EarlyTimeReport> {
    let center = match preset {
        InitialConditionPreset::SingleSite { site } => *site,
        _ => {
            return Err(CoreError::InvalidParameter {
                name: "preset",
                reason: "the early-time oracle needs a single filled site".into(),
            })
        }
    };
    params.validate()?;
    if center >= params.sites {
        return Err(CoreError::InvalidParameter {
            name: "preset",
            reason: format!("site {center} out of range for {} sites", params.sites),
        });
    }
    if !(seeding > 0.0 && seeding < 1e-3) {
        return Err(CoreError::InvalidParameter {
            name: "seeding",
            reason: format!("need 0 < seeding < 1e-3, got {seeding}"),
        });
    }
    let l = params.sites;
    let mut q = vec![(2.0 * seeding).sqrt(); l];
    q[center] = 2.0f64.sqrt();
    let initial = PhaseState::from_parts(vec![0.0; l], q)?;
    // Hopping sets the cascade clock: level l grows as (J t)^{2l} / (l!)^2,
    // so windows sit where that term has cleanly outrun the seeding but
    // (J t)^2 corrections are still small. The defaults below assume the
    // standard J t0 = 2e-4; scale windows by the actual hopping.
    let clock = crate::model::HOPPING_TIME_RATIO / params.hopping;
    let t_final = 2200.0 * clock;
    let cfg = IntegratorConfig {
        step: 0.25 * clock,
        t_final,
        output_stride: 4,
        conservation_tol: 1e-6,
    };
    let record = evolve(&initial, params, &cfg)?;
    let times = &record.times;
    let series = |site: usize| -> Vec<f64> {
        record
            .states
            .iter()
            .map(|s| 0.5 * (s.p[site] * s.p[site] + s.q[site] * s.q[site]))
            .collect()
    };
    // Window starts are set by when each level's secular growth has outrun
    // both the seeding floor and the interference cross-term with the seed
    // amplitude (even levels grow in the seed's quadrature and pass through a
    // destructive dip first); the ends stay below the hopping saturation
    // scale 1/J where the perturbative ladder bends over.
    let window_for = |offset_abs: usize| -> (f64, f64) {
        match offset_abs {
            1 => (50.0 * clock, 500.0 * clock),
            2 => (450.0 * clock, 1400.0 * clock),
            _ => (900.0 * clock, 1800.0 * clock),
        }
    };
    let mut offsets = Vec::new();
    for offset in [-3isize, -2, -1, 1, 2, 3] {
        let site = center as isize + offset;
        if site < 0 || site >= l as isize {
            continue;
        }
        let values = series(site as usize);
        let fit = fit_exponent(times, &values, window_for(offset.unsigned_abs()))?;
        offsets.push((offset, fit));
    }
    let center_fit = fit_exponent(times, &series(center), window_for(1))?;
    Ok(EarlyTimeReport {
        center: center_fit,
        offsets,
        seeding,
    })
}
