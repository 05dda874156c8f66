//! The solve and simulate pipeline stages: run the solvers, write CSVs and
//! the manifest, load artifacts back, run the wealth Monte Carlo.

use std::fs;
use std::io::BufReader;
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use cedar_core::market::default_terms;
use cedar_core::sim::{mc_expected_utility, simulate_wealth, write_paths_csv};
use cedar_core::{pde, FieldGrid, GridSpec, ModelParams, SimConfig, ValueFunction};

use crate::config::RunConfig;
use crate::manifest::{
    sha256_file, Manifest, ReductionCheck, SandwichCheck, MANIFEST_FILE, RUN_LOG_FILE, U_PRE_FILE,
    XI_POST_FILE, XI_PRE_FILE,
};

/// Tolerance of the manifest sandwich check.
pub const SANDWICH_TOL: f64 = 1e-3;
/// Tolerance of the manifest `hP = 0` reduction check.
pub const REDUCTION_TOL: f64 = 1e-6;

/// In-memory result of a solve: both fields plus the log-field.
pub struct SolveArtifacts {
    pub params: ModelParams,
    pub spec: GridSpec,
    pub xi_post: FieldGrid,
    pub u_pre: FieldGrid,
    pub xi_pre: FieldGrid,
    pub manifest: Manifest,
}

impl SolveArtifacts {
    pub fn value_function(&self) -> Result<ValueFunction> {
        ValueFunction::new(
            self.params.clone(),
            self.xi_post.clone(),
            self.xi_pre.clone(),
        )
        .map_err(Into::into)
    }
}

/// Envelope check of `u_pre` against `ln xi_post` over all stored nodes.
pub fn sandwich_check(
    params: &ModelParams,
    xi_post: &FieldGrid,
    u_pre: &FieldGrid,
    tol: f64,
) -> SandwichCheck {
    let gap = if params.h_p > 0.0 {
        params.delta_ratio / params.h_p * default_terms(params).adjustment
    } else {
        0.0
    };
    let mut max_upper = f64::NEG_INFINITY;
    let mut max_lower = f64::NEG_INFINITY;
    for k in 0..u_pre.n_cols() {
        for i in 0..u_pre.spec().n_space {
            let du = u_pre.at(k, i) - xi_post.at(k, i).ln();
            max_upper = max_upper.max(du);
            max_lower = max_lower.max(-gap - du);
        }
    }
    SandwichCheck {
        gap_constant: gap,
        max_upper_violation: max_upper,
        max_lower_violation: max_lower,
        tol,
        pass: max_upper <= tol && max_lower <= tol,
    }
}

/// Runs the solvers for a configuration and writes `xi_post.csv`,
/// `u_pre.csv`, `xi_pre.csv` plus the manifest into `dir`.
pub fn run_solve(cfg: &RunConfig, dir: &Path) -> Result<SolveArtifacts> {
    let started = Instant::now();
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let params = cfg.model.clone();
    let spec = cfg.spec();

    let cfl = pde::check_cfl(&params, &spec)?;
    if cfl.marginal {
        log::warn!(
            "CFL ratio {:.3} exceeds 0.5: the explicit scheme is within its \
             stability region but close to the edge",
            cfl.ratio
        );
    }

    let xi_post = pde::solve_post_default(&params, &spec)?;
    let pre = pde::solve_pre_default(&params, &spec, &xi_post, pde::DEFAULT_GRADIENT_CAP)?;
    let sandwich = sandwich_check(&params, &xi_post, &pre.u, SANDWICH_TOL);

    let hp_zero_reduction = if params.h_p == 0.0 {
        let diff = pre.u.max_abs_diff(&xi_post.map(f64::ln)?)?;
        Some(ReductionCheck {
            max_abs_diff: diff,
            tol: REDUCTION_TOL,
            pass: diff <= REDUCTION_TOL,
        })
    } else {
        None
    };

    let mut files = std::collections::BTreeMap::new();
    for (name, field) in [
        (XI_POST_FILE, &xi_post),
        (U_PRE_FILE, &pre.u),
        (XI_PRE_FILE, &pre.xi),
    ] {
        let path = dir.join(name);
        let mut buf = Vec::new();
        field.write_csv(&mut buf)?;
        fs::write(&path, &buf).with_context(|| format!("cannot write {}", path.display()))?;
        files.insert(name.to_string(), crate::manifest::sha256_hex(&buf));
    }

    let manifest = Manifest {
        model: params.clone(),
        grid: spec,
        dz: spec.dz(),
        dt: spec.dt(),
        cfl,
        gradient_cap: pre.gradient_cap,
        saturation_fraction: pre.saturation_fraction,
        sandwich,
        hp_zero_reduction,
        files,
    };
    manifest.write(dir)?;

    let log = serde_json::json!({ "runtime_seconds": started.elapsed().as_secs_f64() });
    fs::write(dir.join(RUN_LOG_FILE), log.to_string() + "\n")?;

    Ok(SolveArtifacts {
        params,
        spec,
        xi_post,
        u_pre: pre.u,
        xi_pre: pre.xi,
        manifest,
    })
}

/// Loads previously solved artifacts from `dir`, verifying the manifest
/// checksums and node coordinates.
pub fn load_artifacts(dir: &Path) -> Result<SolveArtifacts> {
    let manifest_path = dir.join(MANIFEST_FILE);
    if !manifest_path.exists() {
        bail!(
            "missing artifact {}: run `cedar solve` first",
            manifest_path.display()
        );
    }
    let manifest = Manifest::read(dir)?;
    for name in [XI_POST_FILE, U_PRE_FILE, XI_PRE_FILE] {
        if !dir.join(name).exists() {
            bail!("missing artifact {name} in {}", dir.display());
        }
    }
    manifest.verify_checksums(dir)?;

    let spec = manifest.grid;
    let stored = spec.stored_time_indices();
    let read = |name: &str| -> Result<FieldGrid> {
        let file = fs::File::open(dir.join(name))?;
        FieldGrid::read_csv(spec, stored.clone(), BufReader::new(file))
            .with_context(|| format!("cannot parse {name}"))
    };
    Ok(SolveArtifacts {
        params: manifest.model.clone(),
        spec,
        xi_post: read(XI_POST_FILE)?,
        u_pre: read(U_PRE_FILE)?,
        xi_pre: read(XI_PRE_FILE)?,
        manifest,
    })
}

/// Validates checksums of any artifacts already present in `dir`. Returns
/// false when none exist yet.
pub fn validate_existing_artifacts(dir: &Path) -> Result<bool> {
    if !dir.join(MANIFEST_FILE).exists() {
        return Ok(false);
    }
    let manifest = Manifest::read(dir)?;
    manifest.verify_checksums(dir)?;
    Ok(true)
}

/// Number of paths recorded to `paths.csv` by the simulate stage.
const RECORDED_PATHS: usize = 100;

/// Runs the wealth Monte Carlo under the optimal strategy from the solved
/// fields: writes `utility.json` and `paths.csv` into `dir`.
pub fn run_simulate(cfg: &RunConfig, dir: &Path) -> Result<()> {
    let artifacts = load_artifacts(dir)?;
    let vf = artifacts.value_function()?;
    let pair = vf.strategy_pair();

    let estimate = mc_expected_utility(&artifacts.params, &cfg.sim, &pair, 0.0, 0.0)?;
    let path = dir.join("utility.json");
    fs::write(&path, serde_json::to_string_pretty(&estimate)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;

    let record_cfg = SimConfig {
        n_paths: cfg.sim.n_paths.min(RECORDED_PATHS),
        ..cfg.sim
    };
    let paths = simulate_wealth(&artifacts.params, &record_cfg, &pair, 0.0, 0.0)?;
    let mut buf = Vec::new();
    write_paths_csv(&paths, &mut buf)?;
    fs::write(dir.join("paths.csv"), &buf)?;

    log::info!(
        "expected utility {} +- {} ({} paths, seed {})",
        estimate.estimate,
        estimate.stderr,
        estimate.n_paths,
        estimate.seed
    );
    Ok(())
}

/// Byte-compares two artifact directories, ignoring the run log. Used by the
/// determinism check.
pub fn dirs_byte_identical(a: &Path, b: &Path) -> Result<Vec<String>> {
    fn listing(dir: &Path) -> Result<Vec<String>> {
        let mut names = Vec::new();
        for entry in fs::read_dir(dir)? {
            let entry = entry?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if entry.file_type()?.is_file() && name != RUN_LOG_FILE {
                names.push(name);
            }
        }
        names.sort();
        Ok(names)
    }
    let la = listing(a)?;
    let lb = listing(b)?;
    let mut mismatches = Vec::new();
    if la != lb {
        mismatches.push(format!("file sets differ: {la:?} vs {lb:?}"));
        return Ok(mismatches);
    }
    for name in &la {
        if sha256_file(&a.join(name))? != sha256_file(&b.join(name))? {
            mismatches.push(name.clone());
        }
    }
    Ok(mismatches)
}
