//! The `run` subcommand: execute one configured ensemble into a directory.
//!
//! Layout of a completed run directory:
//!
//! ```text
//! manifest.json              hashed settings + completion flag (written last)
//! moments.csv                t,site,mean_I,stderr_I,dispersion,jump_g
//! pairs.csv                  t,m,n,dispersion (full pair scope only, thinned grid)
//! ftle.csv                   exponent_index,exponent (ftle section only)
//! observables/entropy.csv    t,mixing_entropy
//! observables/ctd.csv        t,ctd (full pair scope only)
//! observables/spectrum.csv   omega,site,power (spectrum section only)
//! observables/sff.csv        t,sff (sff section only)
//! fits.json                  all derived fits and diagnostics
//! summary.csv                one row of headline numbers, content hash first
//! ```
//!
//! Re-running into a directory whose manifest is complete with the same
//! content hash is a no-op; a complete directory with a different hash is
//! refused. Derived diagnostics that fail (for example a fit window with no
//! usable points) are recorded in `fits.json` with their reason instead of
//! failing the run — the simulation data is still written. Failures of the
//! simulation itself abort with a numeric error.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use bhtw_core::analysis::{detect_crossover, fit_exponent, CrossoverConfig, ScalingFit};
use bhtw_core::chaos::{ftle, power_spectrum, sff, spectrum_slope, PowerSpectrum};
use bhtw_core::ensemble::{
    dispersion, run_ensemble_with, write_site_series_csv, EnsembleOptions, MomentSeries,
    PairScope,
};
use bhtw_core::exec::ExecPolicy;
use bhtw_core::integrate::{evolve, IntegratorConfig};
use bhtw_core::model::PhaseState;
use bhtw_core::observables::{
    ctd, mixing_entropy_bound, occupation_entropy_series, temporal_variance, ScalarSeries,
    TemporalSignal,
};
use bhtw_core::wigner::sample;

use crate::config::RunConfig;
use crate::error::{CliError, Result};
use crate::manifest::{read_manifest, unix_now, write_manifest, ManifestCore, RunManifest};

/// Maximum number of time rows `pairs.csv` keeps (full pair tables on dense
/// grids get large; in-memory fits always use the full grid).
const PAIR_CSV_MAX_ROWS: usize = 257;

/// Columns of `summary.csv`, in order. Absent diagnostics leave their cell
/// empty.
pub const SUMMARY_COLUMNS: [&str; 14] = [
    "content_hash",
    "var_t_dispersion",
    "var_t_occupation",
    "ftle_max",
    "ftle_positive_sum",
    "crossover_time",
    "late_slope",
    "ctd_slope",
    "spectrum_slope",
    "entropy_initial",
    "entropy_final",
    "entropy_bound",
    "sff_min_time",
    "sff_min_value",
];

/// How `execute_run` left the directory.
#[derive(Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub content_hash: String,
    /// True when the directory already held this exact run.
    pub reused: bool,
}

/// Root directory for auto-named outputs (`BHTW_OUTPUT_ROOT`, default
/// `./runs`).
pub fn output_root() -> PathBuf {
    match std::env::var_os("BHTW_OUTPUT_ROOT") {
        Some(root) => PathBuf::from(root),
        None => PathBuf::from("runs"),
    }
}

/// Resolves the worker count: explicit flag first, then `BHTW_WORKERS`, then
/// unset (library default). Zero and unparsable values are validation
/// errors.
pub fn resolve_workers(flag: Option<usize>) -> Result<Option<usize>> {
    let value = match flag {
        Some(n) => Some(n),
        None => match std::env::var("BHTW_WORKERS") {
            Ok(text) => Some(text.parse::<usize>().map_err(|_| {
                CliError::invalid(format!("BHTW_WORKERS must be a positive integer, got {text:?}"))
            })?),
            Err(std::env::VarError::NotPresent) => None,
            Err(err) => return Err(CliError::invalid(format!("BHTW_WORKERS: {err}"))),
        },
    };
    if value == Some(0) {
        return Err(CliError::invalid("worker count must be at least 1"));
    }
    Ok(value)
}

/// Maps a worker count onto an execution policy for a single run. More than
/// one worker sizes the global thread pool once per process (best effort —
/// later calls cannot shrink it).
pub fn policy_for_workers(workers: Option<usize>) -> ExecPolicy {
    match workers {
        Some(1) => ExecPolicy::Sequential,
        Some(n) => {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            ExecPolicy::Parallel
        }
        None => ExecPolicy::default(),
    }
}

/// Runs `cfg` into `out` (or an auto-named directory under the output root).
pub fn execute_run(
    cfg: &RunConfig,
    out: Option<&Path>,
    workers: Option<usize>,
) -> Result<RunOutcome> {
    let core = ManifestCore::from_config(cfg)?;
    let policy = policy_for_workers(workers);
    let hash = core.content_hash();
    let dir = match out {
        Some(path) => path.to_path_buf(),
        None => output_root().join(format!("run_{}", &hash[..12])),
    };
    execute_run_at(core, &dir, policy)
}

/// Runs an already-resolved manifest core into a specific directory.
pub fn execute_run_at(core: ManifestCore, dir: &Path, policy: ExecPolicy) -> Result<RunOutcome> {
    let hash = core.content_hash();
    if let Some(existing) = read_manifest(dir)? {
        if existing.completed {
            if existing.content_hash == hash {
                return Ok(RunOutcome {
                    dir: dir.to_path_buf(),
                    content_hash: hash,
                    reused: true,
                });
            }
            return Err(CliError::invalid(format!(
                "directory {} holds a different completed run (hash {}… vs requested {}…); \
                 pick a fresh directory",
                dir.display(),
                &existing.content_hash[..12],
                &hash[..12]
            )));
        }
        // An incomplete manifest marks a crashed or interrupted run; the
        // directory is ours to overwrite.
    }

    std::fs::create_dir_all(dir.join("observables"))
        .map_err(|err| CliError::invalid(format!("cannot create {}: {err}", dir.display())))?;
    let started = Instant::now();
    let mut manifest = RunManifest::new(core);
    debug_assert_eq!(manifest.content_hash, hash);
    write_manifest(dir, &manifest)?;

    let core = &manifest.core;
    let spec = bhtw_core::wigner::build_spec_with(
        &core.preset,
        &core.params,
        core.center_phase,
        core.sigma_p,
        core.sigma_q,
    )?;
    let options = EnsembleOptions {
        scope: core.pair_scope,
        policy,
        renormalize: core.renormalize_number,
    };
    let series = run_ensemble_with(
        &spec,
        &core.params,
        &core.integrator,
        core.trajectories,
        core.seed,
        core.corrections,
        options,
    )?;

    write_moments_csv(dir, &series)?;
    if core.pair_scope == PairScope::Full {
        write_pairs_csv(dir, &series)?;
    }

    let mut fits = serde_json::Map::new();
    let mut summary = SummaryRow::new(&hash);

    // Per-site dispersion growth fits over the configured window.
    let window = (core.fit_window_ln.0.exp(), core.fit_window_ln.1.exp());
    fits.insert(
        "dispersion_growth".into(),
        dispersion_growth_fits(&series, window),
    );

    // Site-averaged growth: late slope, optional crossover detection.
    let (late_value, crossover_value) = site_average_diagnostics(&series, core, &mut summary);
    fits.insert("site_average_growth".into(), late_value);
    if let Some(value) = crossover_value {
        fits.insert("crossover".into(), value);
    }

    // Central-tendency distance of the dispersion profile (full scope only).
    fits.insert(
        "ctd".into(),
        ctd_diagnostic(dir, &series, &mut summary)?,
    );

    // Mixing entropy of the mean occupation profile.
    fits.insert(
        "mixing_entropy".into(),
        entropy_diagnostic(dir, &series, core.params.sites, &mut summary)?,
    );

    // Integrated temporal fluctuation, both signal conventions.
    fits.insert(
        "temporal_variance".into(),
        temporal_variance_diagnostic(&series, &mut summary),
    );

    if let Some(section) = &core.spectrum {
        fits.insert(
            "spectrum".into(),
            spectrum_diagnostic(dir, core, section, &mut summary)?,
        );
    }
    if let Some(section) = &core.ftle {
        fits.insert(
            "ftle".into(),
            ftle_diagnostic(dir, core, &spec, section, &mut summary)?,
        );
    }
    if let Some(section) = &core.sff {
        fits.insert(
            "sff".into(),
            sff_diagnostic(dir, core, &spec, section, &mut summary)?,
        );
    }

    write_json(&dir.join("fits.json"), &serde_json::Value::Object(fits))?;
    summary.write(&dir.join("summary.csv"))?;

    manifest.completed = true;
    manifest.created_unix_seconds = unix_now();
    manifest.elapsed_seconds = started.elapsed().as_secs_f64();
    write_manifest(dir, &manifest)?;
    Ok(RunOutcome {
        dir: dir.to_path_buf(),
        content_hash: hash,
        reused: false,
    })
}

// ---------------------------------------------------------------------------
// summary.csv

struct SummaryRow {
    values: Vec<(&'static str, Option<f64>)>,
    hash: String,
}

impl SummaryRow {
    fn new(hash: &str) -> Self {
        SummaryRow {
            values: SUMMARY_COLUMNS[1..].iter().map(|&c| (c, None)).collect(),
            hash: hash.to_string(),
        }
    }

    fn set(&mut self, column: &str, value: f64) {
        let slot = self
            .values
            .iter_mut()
            .find(|(name, _)| *name == column)
            .unwrap_or_else(|| panic!("unknown summary column {column}"));
        slot.1 = Some(value);
    }

    fn write(&self, path: &Path) -> Result<()> {
        let mut text = SUMMARY_COLUMNS.join(",");
        text.push('\n');
        text.push_str(&self.hash);
        for (_, value) in &self.values {
            text.push(',');
            if let Some(v) = value {
                text.push_str(&format!("{v:.17e}"));
            }
        }
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|err| CliError::invalid(format!("cannot write {}: {err}", path.display())))?;
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// CSV writers

fn create_file(path: &Path) -> Result<std::io::BufWriter<std::fs::File>> {
    let file = std::fs::File::create(path)
        .map_err(|err| CliError::invalid(format!("cannot write {}: {err}", path.display())))?;
    Ok(std::io::BufWriter::new(file))
}

fn write_moments_csv(dir: &Path, series: &MomentSeries) -> Result<()> {
    let mut out = create_file(&dir.join("moments.csv"))?;
    write_site_series_csv(series, &mut out)?;
    out.flush()?;
    Ok(())
}

/// All ordered pairs `m <= n` on a thinned time grid (at most
/// [`PAIR_CSV_MAX_ROWS`] rows, first and last grid point always included).
fn write_pairs_csv(dir: &Path, series: &MomentSeries) -> Result<()> {
    let l = series.sites;
    let grid = series.grid_len();
    let stride = grid.div_ceil(PAIR_CSV_MAX_ROWS).max(1);
    let mut pairs = Vec::with_capacity(l * (l + 1) / 2);
    for m in 0..l {
        for n in m..l {
            pairs.push((m, n, dispersion(m, n, series)?));
        }
    }
    let mut out = create_file(&dir.join("pairs.csv"))?;
    writeln!(out, "t,m,n,dispersion")?;
    let mut g = 0;
    while g < grid {
        for (m, n, d) in &pairs {
            writeln!(
                out,
                "{:.17e},{},{},{:.17e}",
                series.times[g],
                m + 1,
                n + 1,
                d[g]
            )?;
        }
        if g + stride >= grid && g != grid - 1 {
            g = grid - 1; // always keep the final time row
        } else {
            g += stride;
        }
    }
    out.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)
        .map_err(|err| CliError::invalid(format!("cannot write {}: {err}", path.display())))?;
    Ok(())
}

fn write_scalar_csv(path: &Path, series: &ScalarSeries) -> Result<()> {
    let mut out = create_file(path)?;
    series.write_csv(&mut out)?;
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// fit serialization

fn fit_json(fit: &ScalingFit) -> serde_json::Value {
    serde_json::json!({
        "slope": fit.slope,
        "stderr": fit.stderr,
        "r_squared": fit.r_squared,
        "window": [fit.window.0, fit.window.1],
        "points": fit.points,
    })
}

fn error_json(err: &impl std::fmt::Display) -> serde_json::Value {
    serde_json::json!({ "error": err.to_string() })
}

// ---------------------------------------------------------------------------
// diagnostics

/// Growth of the corrected diagonal dispersion above its initial value.
fn diagonal_growth(series: &MomentSeries, site: usize) -> Result<Vec<f64>> {
    let d = dispersion(site, site, series)?;
    Ok(d.iter().map(|&v| v - d[0]).collect())
}

fn dispersion_growth_fits(series: &MomentSeries, window: (f64, f64)) -> serde_json::Value {
    let mut rows = Vec::with_capacity(series.sites);
    for n in 0..series.sites {
        let entry = match diagonal_growth(series, n) {
            Ok(growth) => match fit_exponent(&series.times[1..], &growth[1..], window) {
                Ok(fit) => {
                    let mut value = fit_json(&fit);
                    value["site"] = serde_json::json!(n + 1);
                    value
                }
                Err(err) => serde_json::json!({ "site": n + 1, "error": err.to_string() }),
            },
            Err(err) => serde_json::json!({ "site": n + 1, "error": err.to_string() }),
        };
        rows.push(entry);
    }
    serde_json::Value::Array(rows)
}

/// Late-window slope of the site-averaged dispersion growth, plus crossover
/// detection when the section is configured. Returns
/// `(site_average_growth value, crossover value)`.
fn site_average_diagnostics(
    series: &MomentSeries,
    core: &ManifestCore,
    summary: &mut SummaryRow,
) -> (serde_json::Value, Option<serde_json::Value>) {
    let l = series.sites;
    let grid = series.grid_len();
    let mut mean_growth = vec![0.0; grid];
    for n in 0..l {
        match diagonal_growth(series, n) {
            Ok(growth) => {
                for (slot, v) in mean_growth.iter_mut().zip(&growth) {
                    *slot += v / l as f64;
                }
            }
            Err(err) => return (error_json(&err), None),
        }
    }
    let times = &series.times[1..];
    let values = &mean_growth[1..];

    // Late window: the last 1.5 e-folds of the grid.
    let t_final = *series.times.last().unwrap();
    let late_window = (t_final / 1.5f64.exp(), t_final * (1.0 + 1e-12));
    let late = fit_exponent(times, values, late_window);
    if let Ok(fit) = &late {
        summary.set("late_slope", fit.slope);
    }
    let late_value = match &late {
        Ok(fit) => {
            let mut value = fit_json(fit);
            value["window_role"] = serde_json::json!("late");
            value
        }
        Err(err) => error_json(err),
    };

    let crossover_value = core.crossover.map(|section| {
        match detect_crossover(
            times,
            values,
            section.early_exponent,
            section.late_exponent,
            CrossoverConfig::default(),
        ) {
            Ok(result) => {
                if let Some(t_c) = result.crossover {
                    summary.set("crossover_time", t_c);
                }
                serde_json::json!({
                    "crossover_time": result.crossover,
                    "early_exponent": section.early_exponent,
                    "late_exponent": section.late_exponent,
                    "profile_times": result.profile_times,
                    "profile_slopes": result.profile_slopes,
                })
            }
            Err(err) => error_json(&err),
        }
    });
    (late_value, crossover_value)
}

fn ctd_diagnostic(
    dir: &Path,
    series: &MomentSeries,
    summary: &mut SummaryRow,
) -> Result<serde_json::Value> {
    if series.scope != PairScope::Full {
        return Ok(serde_json::json!({
            "error": "central-tendency distance needs full pair scope"
        }));
    }
    match ctd(series) {
        Ok(scalar) => {
            write_scalar_csv(&dir.join("observables/ctd.csv"), &scalar)?;
            // The early ballistic regime of the distance measure sits well
            // inside the default window used elsewhere.
            let window = (3.0f64.exp(), 6.5f64.exp());
            let growth: Vec<f64> = scalar.values.iter().map(|&v| v - scalar.values[0]).collect();
            let fit = fit_exponent(&scalar.times[1..], &growth[1..], window);
            if let Ok(f) = &fit {
                summary.set("ctd_slope", f.slope);
            }
            Ok(match fit {
                Ok(f) => fit_json(&f),
                Err(err) => error_json(&err),
            })
        }
        Err(err) => Ok(error_json(&err)),
    }
}

fn entropy_diagnostic(
    dir: &Path,
    series: &MomentSeries,
    sites: usize,
    summary: &mut SummaryRow,
) -> Result<serde_json::Value> {
    match occupation_entropy_series(series) {
        Ok(scalar) => {
            write_scalar_csv(&dir.join("observables/entropy.csv"), &scalar)?;
            let initial = scalar.values[0];
            let last = *scalar.values.last().unwrap();
            let max = scalar.values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let bound = mixing_entropy_bound(sites);
            summary.set("entropy_initial", initial);
            summary.set("entropy_final", last);
            summary.set("entropy_bound", bound);
            Ok(serde_json::json!({
                "initial": initial,
                "final": last,
                "max": max,
                "bound": bound,
                "bound_exceeded": max > bound + 1e-12,
            }))
        }
        Err(err) => Ok(error_json(&err)),
    }
}

fn temporal_variance_diagnostic(
    series: &MomentSeries,
    summary: &mut SummaryRow,
) -> serde_json::Value {
    let t_final = *series.times.last().unwrap();
    let mut value = serde_json::Map::new();
    for (signal, name, column) in [
        (TemporalSignal::Dispersion, "dispersion", "var_t_dispersion"),
        (TemporalSignal::Occupation, "occupation", "var_t_occupation"),
    ] {
        match temporal_variance(series, signal, t_final) {
            Ok(v) => {
                summary.set(column, v);
                value.insert(name.into(), serde_json::json!(v));
            }
            Err(err) => {
                value.insert(name.into(), error_json(&err));
            }
        }
    }
    serde_json::Value::Object(value)
}

/// Periodograms of single-trajectory occupation series, one per requested
/// site, written in long form and summarized by the median mid-band slope.
fn spectrum_diagnostic(
    dir: &Path,
    core: &ManifestCore,
    section: &crate::config::SpectrumSection,
    summary: &mut SummaryRow,
) -> Result<serde_json::Value> {
    let spec = bhtw_core::wigner::build_spec_with(
        &core.preset,
        &core.params,
        core.center_phase,
        core.sigma_p,
        core.sigma_q,
    )?;
    // Re-draw the requested ensemble member with the run's own sampling
    // streams (index i uses stream 2 i of the master seed).
    let index = section.trajectory_index as usize;
    let mut states = sample(&spec, index + 1, core.seed)?;
    let state = states.pop().expect("sample returns requested count");
    let record = match evolve(&state, &core.params, &core.integrator) {
        Ok(record) => record,
        Err(err) => return Ok(error_json(&err)),
    };
    let sites: Vec<usize> = match &section.sites {
        Some(list) => list.clone(),
        None => (0..core.params.sites).collect(),
    };
    let occupations = |site: usize| -> Vec<f64> {
        record
            .states
            .iter()
            .map(|s| 0.5 * (s.p[site] * s.p[site] + s.q[site] * s.q[site]))
            .collect()
    };

    let mut spectra: Vec<(usize, PowerSpectrum)> = Vec::with_capacity(sites.len());
    for &site in &sites {
        match power_spectrum(&record.times, &occupations(site), section.window) {
            Ok(spectrum) => spectra.push((site, spectrum)),
            Err(err) => return Ok(error_json(&err)),
        }
    }

    let mut out = create_file(&dir.join("observables/spectrum.csv"))?;
    writeln!(out, "omega,site,power")?;
    for (site, spectrum) in &spectra {
        for (w, p) in spectrum.frequencies.iter().zip(&spectrum.power) {
            writeln!(out, "{w:.17e},{},{p:.17e}", site + 1)?;
        }
    }
    out.flush()?;

    let mut rows = Vec::with_capacity(spectra.len());
    let mut slopes = Vec::new();
    for (site, spectrum) in &spectra {
        match spectrum_slope(spectrum) {
            Ok(fit) => {
                slopes.push(fit.slope);
                let mut value = fit_json(&fit);
                value["site"] = serde_json::json!(site + 1);
                rows.push(value);
            }
            Err(err) => rows.push(serde_json::json!({
                "site": site + 1,
                "error": err.to_string(),
            })),
        }
    }
    let median = median_of(&mut slopes);
    if let Some(m) = median {
        summary.set("spectrum_slope", m);
    }
    Ok(serde_json::json!({
        "trajectory_index": section.trajectory_index,
        "window": section.window,
        "per_site": rows,
        "median_slope": median,
    }))
}

fn median_of(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Finite-time Lyapunov spectrum of the deterministic trajectory started at
/// the preset center.
fn ftle_diagnostic(
    dir: &Path,
    core: &ManifestCore,
    spec: &bhtw_core::wigner::CoherentStateSpec,
    section: &crate::config::FtleSection,
    summary: &mut SummaryRow,
) -> Result<serde_json::Value> {
    let initial = PhaseState::from_parts(spec.mean_p.clone(), spec.mean_q.clone())?;
    let cfg = IntegratorConfig {
        step: section.step,
        t_final: section.t_final,
        output_stride: 1,
        conservation_tol: core.integrator.conservation_tol,
    };
    match ftle(&initial, &core.params, &cfg, section.renorm_stride) {
        Ok(result) => {
            let mut out = create_file(&dir.join("ftle.csv"))?;
            writeln!(out, "exponent_index,exponent")?;
            for (i, lambda) in result.exponents.iter().enumerate() {
                writeln!(out, "{i},{lambda:.17e}")?;
            }
            out.flush()?;
            summary.set("ftle_max", result.max_exponent());
            summary.set("ftle_positive_sum", result.positive_sum);
            Ok(serde_json::json!({
                "max": result.max_exponent(),
                "positive_sum": result.positive_sum,
                "t_final": result.t_final,
                "renormalizations": result.renormalizations,
                "exponent_count": result.exponents.len(),
            }))
        }
        Err(err) => Ok(error_json(&err)),
    }
}

/// Spectral form factor over the sampled initial energies, on `t = 0` plus a
/// geometric grid.
fn sff_diagnostic(
    dir: &Path,
    core: &ManifestCore,
    spec: &bhtw_core::wigner::CoherentStateSpec,
    section: &crate::config::SffSection,
    summary: &mut SummaryRow,
) -> Result<serde_json::Value> {
    let mut times = Vec::with_capacity(section.points + 1);
    times.push(0.0);
    let ratio = (section.t_max / section.t_min).powf(1.0 / (section.points as f64 - 1.0));
    for k in 0..section.points {
        times.push(section.t_min * ratio.powi(k as i32));
    }
    match sff(spec, &core.params, section.count, core.seed, &times) {
        Ok(scalar) => {
            write_scalar_csv(&dir.join("observables/sff.csv"), &scalar)?;
            let (mut min_t, mut min_v) = (f64::NAN, f64::INFINITY);
            for (&t, &v) in scalar.times.iter().zip(&scalar.values).skip(1) {
                if v < min_v {
                    min_v = v;
                    min_t = t;
                }
            }
            summary.set("sff_min_time", min_t);
            summary.set("sff_min_value", min_v);
            Ok(serde_json::json!({
                "value_at_zero": scalar.values[0],
                "min_time": min_t,
                "min_value": min_v,
                "dip_ratio": 1.0 / min_v,
                "samples": section.count,
            }))
        }
        Err(err) => Ok(error_json(&err)),
    }
}
