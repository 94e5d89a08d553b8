//! The `validate` subcommand: fast self-checks of the numeric foundations.
//!
//! Each check prints one line (`ok — name: detail` / `FAIL — name: detail`).
//! Any failure makes the command exit with the numeric error code. The whole
//! battery runs in well under a second.

use std::f64::consts::PI;
use std::path::Path;

use serde::Serialize;

use bhtw_core::ensemble::{run_ensemble_with, Corrections, EnsembleOptions, PairScope};
use bhtw_core::exec::ExecPolicy;
use bhtw_core::integrate::{evolve, kernel, IntegratorConfig};
use bhtw_core::model::{ChainParams, HOPPING_TIME_RATIO};
use bhtw_core::wigner::{build_spec, sample, CoherentStateSpec, InitialConditionPreset, DEFAULT_WIDTH};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult {
        name,
        passed,
        detail,
    }
}

/// Runs every check, printing one line per check. Returns the full list.
pub fn run_checks() -> Vec<CheckResult> {
    let mut results = Vec::new();

    // Quadrature normalization: the Gaussian weight integrates to 2 pi.
    let norm = kernel::gaussian_integral_2d(|_, _| 1.0);
    let rel = (norm - 2.0 * PI).abs() / (2.0 * PI);
    results.push(check(
        "quadrature normalization",
        rel <= 1e-12,
        format!("integral of 1 = {norm:.15} (relative error {rel:.2e})"),
    ));

    // Fourth-moment kernel integral equals 12 pi.
    let fourth = kernel::fourth_moment_integral();
    let rel = (fourth - 12.0 * PI).abs() / (12.0 * PI);
    results.push(check(
        "fourth-moment kernel",
        rel <= 1e-6,
        format!("{fourth:.12} vs 12 pi (relative error {rel:.2e})"),
    ));

    // First and second moment kernels vanish.
    let first = kernel::first_moment_integral();
    results.push(check(
        "first-moment kernel",
        first.abs() <= 1e-10,
        format!("|{first:.3e}| <= 1e-10"),
    ));
    let second = kernel::second_moment_integral();
    results.push(check(
        "second-moment kernel",
        second.abs() <= 1e-10,
        format!("|{second:.3e}| <= 1e-10"),
    ));

    // The stochastic estimate of the fourth moment agrees with quadrature
    // (expectation under the normalized Gaussian is 12 pi / 2 pi = 6).
    let (mc_mean, mc_err) = kernel::mc_moment(
        |r, s| r.powi(4) * (r * r + s * s - 4.0),
        200_000,
        7,
    );
    let dev = (mc_mean - 6.0).abs();
    results.push(check(
        "stochastic kernel sampling",
        mc_err > 0.0 && dev <= 6.0 * mc_err,
        format!("{mc_mean:.4} +/- {mc_err:.4} vs 6 (deviation {:.1} sigma)", dev / mc_err),
    ));

    // Hopping sets the fundamental clock.
    match ChainParams::from_ratios(4, 1.0, 0.0) {
        Ok(params) => {
            let ok = (params.hopping - HOPPING_TIME_RATIO).abs() <= 1e-15
                && (params.interaction - HOPPING_TIME_RATIO).abs() <= 1e-15;
            results.push(check(
                "coupling normalization",
                ok,
                format!(
                    "J = {:.6e}, U/J = {:.3} at unit ratio",
                    params.hopping,
                    params.interaction / params.hopping
                ),
            ));
        }
        Err(err) => results.push(check("coupling normalization", false, err.to_string())),
    }

    // Vacuum sampling reproduces the symmetric-ordering occupation offset:
    // E[I] = hbar/2 = 0.5 and Var[I] = 0.25 per site.
    results.push(vacuum_moment_check());

    // Sequential and parallel reductions agree bitwise.
    results.push(reduction_equivalence_check());

    // A medium-length trajectory holds number and energy to the drift bound.
    results.push(conservation_check());

    results
}

fn vacuum_moment_check() -> CheckResult {
    let name = "vacuum sampling moments";
    let l = 4;
    let spec = CoherentStateSpec {
        mean_p: vec![0.0; l],
        mean_q: vec![0.0; l],
        sigma_p: DEFAULT_WIDTH,
        sigma_q: DEFAULT_WIDTH,
    };
    let states = match sample(&spec, 4096, 5) {
        Ok(states) => states,
        Err(err) => return check(name, false, err.to_string()),
    };
    let count = states.len() as f64;
    let mut worst_mean = 0.0f64;
    let mut worst_var = 0.0f64;
    for n in 0..l {
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for state in &states {
            let i = 0.5 * (state.p[n] * state.p[n] + state.q[n] * state.q[n]);
            sum += i;
            sum_sq += i * i;
        }
        let mean = sum / count;
        let var = sum_sq / count - mean * mean;
        worst_mean = worst_mean.max((mean - 0.5).abs());
        worst_var = worst_var.max((var - 0.25).abs());
    }
    // 4096 samples put the standard error near 0.004; 0.03 is ~7 sigma.
    check(
        name,
        worst_mean <= 0.03 && worst_var <= 0.03,
        format!("max |E[I] - 0.5| = {worst_mean:.4}, max |Var[I] - 0.25| = {worst_var:.4}"),
    )
}

fn reduction_equivalence_check() -> CheckResult {
    let name = "reduction order independence";
    let run = |policy: ExecPolicy| -> std::result::Result<_, bhtw_core::error::CoreError> {
        let params = ChainParams::from_ratios(4, 1.0, 0.05)?;
        let preset = InitialConditionPreset::SingleSite { site: 1 };
        let spec = build_spec(&preset, &params)?;
        let cfg = IntegratorConfig {
            step: 0.5,
            t_final: 100.0,
            output_stride: 10,
            conservation_tol: 1e-6,
        };
        // 130 trajectories cross two full reduction blocks plus a remainder.
        run_ensemble_with(
            &spec,
            &params,
            &cfg,
            130,
            11,
            Corrections::Integrated,
            EnsembleOptions {
                scope: PairScope::Full,
                policy,
                renormalize: false,
            },
        )
    };
    let sequential = match run(ExecPolicy::Sequential) {
        Ok(series) => series,
        Err(err) => return check(name, false, err.to_string()),
    };
    let parallel = match run(ExecPolicy::Parallel) {
        Ok(series) => series,
        Err(err) => return check(name, false, err.to_string()),
    };
    let identical = sequential.mean_i == parallel.mean_i
        && sequential.mean_ii == parallel.mean_ii
        && sequential.jump_g == parallel.jump_g;
    check(
        name,
        identical,
        if identical {
            "sequential and parallel moments are bit-identical".into()
        } else {
            "sequential and parallel moments differ".into()
        },
    )
}

fn conservation_check() -> CheckResult {
    let name = "conservation drift";
    let result: std::result::Result<(), bhtw_core::error::CoreError> = (|| {
        let params = ChainParams::from_ratios(6, 1.0, 0.05)?;
        let preset = InitialConditionPreset::SingleSite { site: 2 };
        let spec = build_spec(&preset, &params)?;
        let state = sample(&spec, 1, 3)?.pop().expect("one sample");
        let cfg = IntegratorConfig {
            step: 1.0,
            t_final: 5000.0,
            output_stride: 50,
            conservation_tol: 1e-6,
        };
        evolve(&state, &params, &cfg)?;
        Ok(())
    })();
    match result {
        Ok(()) => check(
            name,
            true,
            "number and energy drift stayed within 1e-6 over t = 5e3".into(),
        ),
        Err(err) => check(name, false, err.to_string()),
    }
}

/// Prints results, optionally writes a JSON report, returns an error when
/// any check failed.
pub fn execute_validate(out: Option<&Path>) -> Result<()> {
    let results = run_checks();
    for r in &results {
        let tag = if r.passed { "ok  " } else { "FAIL" };
        println!("{tag} — {}: {}", r.name, r.detail);
    }
    if let Some(path) = out {
        let value = serde_json::json!({
            "checks": results,
            "failed": results.iter().filter(|r| !r.passed).count(),
        });
        let mut text = serde_json::to_string_pretty(&value)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|err| {
            CliError::invalid(format!("cannot write {}: {err}", path.display()))
        })?;
    }
    let failed = results.iter().filter(|r| !r.passed).count();
    if failed > 0 {
        return Err(CliError::Numeric(format!(
            "{failed} of {} validation checks failed",
            results.len()
        )));
    }
    println!("all {} checks passed", results.len());
    Ok(())
}
