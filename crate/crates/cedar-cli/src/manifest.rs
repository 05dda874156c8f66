//! Solve manifest: grid, parameters, stability and bound diagnostics, and
//! checksums of every emitted CSV. The manifest is deterministic; wall-clock
//! timings go to a separate run log that is not part of the artifact set.

use std::collections::BTreeMap;
use std::path::Path;

use anyhow::{bail, Context, Result};
use cedar_core::{CflReport, GridSpec, ModelParams};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const RUN_LOG_FILE: &str = "run_log.json";
pub const XI_POST_FILE: &str = "xi_post.csv";
pub const U_PRE_FILE: &str = "u_pre.csv";
pub const XI_PRE_FILE: &str = "xi_pre.csv";

/// Envelope check of the solved pre-default log-field against the
/// post-default one.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SandwichCheck {
    /// Envelope gap `(Delta / hP) * adjustment`, recomputed from the model.
    pub gap_constant: f64,
    /// Largest `u_pre - u_post` over stored nodes (must stay <= tol).
    pub max_upper_violation: f64,
    /// Largest `(u_post - gap) - u_pre` over stored nodes (must stay <= tol).
    pub max_lower_violation: f64,
    pub tol: f64,
    pub pass: bool,
}

/// Agreement of the pre-default log-field with `ln xi_post` when the
/// default intensity vanishes.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ReductionCheck {
    pub max_abs_diff: f64,
    pub tol: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub model: ModelParams,
    pub grid: GridSpec,
    pub dz: f64,
    pub dt: f64,
    pub cfl: CflReport,
    pub gradient_cap: f64,
    pub saturation_fraction: f64,
    pub sandwich: SandwichCheck,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub hp_zero_reduction: Option<ReductionCheck>,
    /// File name -> SHA-256 of the emitted CSVs.
    pub files: BTreeMap<String, String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes =
        std::fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))?;
        Ok(())
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .with_context(|| format!("cannot read {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("invalid {}", path.display()))
    }

    /// Recomputes the checksum of every listed file and fails on the first
    /// mismatch.
    pub fn verify_checksums(&self, dir: &Path) -> Result<()> {
        for (name, want) in &self.files {
            let got = sha256_file(&dir.join(name))?;
            if &got != want {
                bail!("checksum mismatch for {name}: manifest {want}, file {got}");
            }
        }
        Ok(())
    }
}
