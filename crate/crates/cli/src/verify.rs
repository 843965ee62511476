//! Re-runs a recorded experiment and compares artifact hashes.

use std::path::Path;

use crate::artifacts::{load_model, parse_manifest_json, run_experiment, RunStatus, MANIFEST_FILE};
use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Verification {
    pub checked: usize,
    pub config_hash: String,
}

/// Re-runs the config stored in `dir` into a scratch directory and checks
/// that every file listed in the manifest comes out byte-identical.
pub fn verify(dir: impl AsRef<Path>) -> Result<Verification> {
    let dir = dir.as_ref();
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.is_file() {
        return Err(CliError::MissingArtifacts {
            dir: dir.display().to_string(),
            missing: vec![MANIFEST_FILE.to_owned()],
        });
    }
    let manifest = parse_manifest_json(&std::fs::read_to_string(manifest_path)?)?;
    if manifest.status != RunStatus::Ok {
        return Err(CliError::Verification(format!(
            "recorded run did not finish: {}",
            manifest.error.as_deref().unwrap_or("no error recorded")
        )));
    }
    let cfg = load_model(dir)?.experiment_config()?;
    let scratch = tempfile::tempdir()?;
    let rerun = run_experiment(&cfg, scratch.path())?;
    if rerun.manifest.config_hash != manifest.config_hash {
        return Err(CliError::Verification(format!(
            "config hash {} differs from recorded {}",
            rerun.manifest.config_hash, manifest.config_hash
        )));
    }
    let mut mismatched = Vec::new();
    for (name, hash) in &manifest.files {
        let on_disk = std::fs::read(dir.join(name)).map(|b| crate::artifacts::sha256_hex(&b));
        let fresh = rerun.manifest.files.get(name);
        if on_disk.as_ref().ok() != Some(hash) || fresh != Some(hash) {
            mismatched.push(name.clone());
        }
    }
    if rerun.manifest.files.len() != manifest.files.len() {
        mismatched.push(format!(
            "file count {} vs recorded {}",
            rerun.manifest.files.len(),
            manifest.files.len()
        ));
    }
    if !mismatched.is_empty() {
        return Err(CliError::Verification(format!("differing artifacts: {}", mismatched.join(", "))));
    }
    Ok(Verification {
        checked: manifest.files.len(),
        config_hash: manifest.config_hash,
    })
}
