//! Run manifests: the canonical record of what a run directory contains.
//!
//! [`ManifestCore`] holds every field that affects any output byte, in a
//! fixed serialization order; its SHA-256 over the canonical JSON is the
//! run's content hash. Two runs with equal hashes produce identical CSVs.
//! Wall-clock metadata lives outside the hashed core.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use bhtw_core::ensemble::{Corrections, PairScope};
use bhtw_core::integrate::IntegratorConfig;
use bhtw_core::model::ChainParams;
use bhtw_core::wigner::InitialConditionPreset;

use crate::config::{CrossoverSection, FtleSection, RunConfig, SffSection, SpectrumSection};
use crate::error::{CliError, Result};

/// Name of the manifest file inside a run directory.
pub const MANIFEST_FILE: &str = "manifest.json";

/// Every output-affecting field of a run, resolved to core types.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestCore {
    /// Version of the toolkit that wrote the directory.
    pub artifact_version: String,
    /// Resolved chain parameters (absolute couplings, not ratios).
    pub params: ChainParams,
    pub preset: InitialConditionPreset,
    pub center_phase: f64,
    pub sigma_p: f64,
    pub sigma_q: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub corrections: Corrections,
    pub integrator: IntegratorConfig,
    pub pair_scope: PairScope,
    pub renormalize_number: bool,
    pub fit_window_ln: (f64, f64),
    pub spectrum: Option<SpectrumSection>,
    pub ftle: Option<FtleSection>,
    pub crossover: Option<CrossoverSection>,
    pub sff: Option<SffSection>,
}

impl ManifestCore {
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let resolved = cfg.resolve()?;
        Ok(ManifestCore {
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            params: resolved.params,
            preset: resolved.preset,
            center_phase: cfg.center_phase,
            sigma_p: resolved.sigma_p,
            sigma_q: resolved.sigma_q,
            trajectories: cfg.trajectories,
            seed: cfg.seed,
            corrections: cfg.corrections,
            integrator: cfg.integrator.clone(),
            pair_scope: cfg.pair_scope,
            renormalize_number: cfg.renormalize_number,
            fit_window_ln: cfg.fit_window_ln,
            spectrum: cfg.spectrum.clone(),
            ftle: cfg.ftle,
            crossover: cfg.crossover,
            sff: cfg.sff,
        })
    }

    /// Hex SHA-256 of the canonical JSON serialization. Struct field order is
    /// fixed at compile time and floats print as shortest round-trip, so the
    /// digest is stable across processes and platforms.
    pub fn content_hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("manifest core serializes");
        let digest = Sha256::digest(&bytes);
        let mut hex = String::with_capacity(64);
        for byte in digest {
            use std::fmt::Write;
            write!(hex, "{byte:02x}").expect("hex digits write");
        }
        hex
    }
}

/// The on-disk manifest: hashed core plus unhashed provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    #[serde(flatten)]
    pub core: ManifestCore,
    pub content_hash: String,
    pub created_unix_seconds: u64,
    pub elapsed_seconds: f64,
    pub completed: bool,
}

impl RunManifest {
    pub fn new(core: ManifestCore) -> Self {
        let content_hash = core.content_hash();
        RunManifest {
            core,
            content_hash,
            created_unix_seconds: unix_now(),
            elapsed_seconds: 0.0,
            completed: false,
        }
    }
}

pub fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

/// Reads the manifest inside `dir`, if one exists. An unparsable manifest is
/// a validation error: the tool refuses to guess about a directory it cannot
/// interpret.
pub fn read_manifest(dir: &Path) -> Result<Option<RunManifest>> {
    let path = dir.join(MANIFEST_FILE);
    if !path.exists() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(&path)
        .map_err(|err| CliError::invalid(format!("cannot read {}: {err}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text).map_err(|err| {
        CliError::invalid(format!(
            "directory {} holds an unreadable manifest ({err}); refusing to reuse it",
            dir.display()
        ))
    })?;
    Ok(Some(manifest))
}

pub fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let path = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(manifest)?;
    text.push('\n');
    std::fs::write(&path, text)
        .map_err(|err| CliError::invalid(format!("cannot write {}: {err}", path.display())))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_run_config;

    fn config(seed: u64) -> RunConfig {
        let text = serde_json::json!({
            "sites": 6,
            "u_over_j": 0.5,
            "mu_over_j": 0.0,
            "preset": {"kind": "single_site", "site": 2},
            "trajectories": 16,
            "seed": seed
        })
        .to_string();
        parse_run_config(&text).unwrap()
    }

    #[test]
    fn hash_is_deterministic_and_seed_sensitive() {
        let a = ManifestCore::from_config(&config(0)).unwrap();
        let b = ManifestCore::from_config(&config(0)).unwrap();
        let c = ManifestCore::from_config(&config(1)).unwrap();
        assert_eq!(a.content_hash(), b.content_hash());
        assert_ne!(a.content_hash(), c.content_hash());
        assert_eq!(a.content_hash().len(), 64);
    }

    #[test]
    fn hash_covers_every_section() {
        let base = config(0);
        let hash = |cfg: &RunConfig| ManifestCore::from_config(cfg).unwrap().content_hash();
        let reference = hash(&base);

        let mut m = base.clone();
        m.corrections = Corrections::None;
        assert_ne!(hash(&m), reference);

        let mut m = base.clone();
        m.pair_scope = PairScope::Diagonal;
        assert_ne!(hash(&m), reference);

        let mut m = base.clone();
        m.fit_window_ln = (3.0, 7.0);
        assert_ne!(hash(&m), reference);

        let mut m = base.clone();
        m.ftle = Some(crate::config::FtleSection::default());
        assert_ne!(hash(&m), reference);

        let mut m = base.clone();
        m.integrator.step = 0.5;
        assert_ne!(hash(&m), reference);
    }

    #[test]
    fn manifest_roundtrips_through_disk() {
        let dir = tempfile::tempdir().unwrap();
        let core = ManifestCore::from_config(&config(3)).unwrap();
        let mut manifest = RunManifest::new(core);
        manifest.completed = true;
        manifest.elapsed_seconds = 1.25;
        write_manifest(dir.path(), &manifest).unwrap();
        let back = read_manifest(dir.path()).unwrap().unwrap();
        assert_eq!(back, manifest);
        assert!(read_manifest(&dir.path().join("nope")).unwrap().is_none());
    }

    #[test]
    fn corrupt_manifest_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join(MANIFEST_FILE), b"{not json").unwrap();
        let err = read_manifest(dir.path()).unwrap_err();
        assert!(err.to_string().contains("unreadable"), "{err}");
    }
}
