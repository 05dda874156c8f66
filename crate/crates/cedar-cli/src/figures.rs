//! Figure-data emitters. Each figure is a CSV; plotting is left to the
//! consumer.
//!
//! * fig1, fig4 - value surfaces `t,y,V_pre,V_post` at `z = 0`
//! * fig2       - strategy surfaces `t,z,l,m,a` on the stored grid
//! * fig3       - bond position vs factor, `z,invDelta,zeta,m`, sweeping the
//!                default risk premium (one re-solve per premium) and the
//!                loss rate (a closed-form rescale)
//! * fig5       - coincident-field bond position `ln(1/Delta)/(alpha zeta)`
//!                over premium and loss-rate sweeps, `invDelta,zeta,m`
//! * fig6       - retention sweeps `t,alpha,theta,a` on a ten-year horizon
//! * fig7       - stock sweeps `t,alpha,z,l` on the Scott volatility grid

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use cedar_core::{pde, strategy};

use crate::config::{FigureId, RunConfig};
use crate::pipeline::{load_artifacts, SolveArtifacts};

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

const ALPHA_SWEEP: [f64; 5] = [0.02, 0.05, 0.1, 0.2, 0.5];
const THETA_SWEEP: [f64; 5] = [0.1, 0.25, 0.5, 0.75, 1.0];
const ZETA_SWEEP_FIG3: [f64; 3] = [0.2, 0.4, 0.8];
const INV_DELTA_SWEEP_FIG3: [f64; 4] = [1.0, 2.0, 4.0, 8.0];

/// Emits the requested figures into `dir`. Figures 1-4 require solve
/// artifacts in the same directory.
pub fn run_figures(cfg: &RunConfig, which: &[FigureId], dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let artifacts = if which.iter().any(|f| f.needs_artifacts()) {
        Some(load_artifacts(dir).context("figures fig1..fig4 need solve artifacts")?)
    } else {
        None
    };
    for &fig in which {
        let csv = match fig {
            FigureId::Fig1 | FigureId::Fig4 => value_surfaces(artifacts.as_ref().unwrap())?,
            FigureId::Fig2 => strategy_surfaces(artifacts.as_ref().unwrap())?,
            FigureId::Fig3 => bond_vs_factor(cfg, artifacts.as_ref().unwrap())?,
            FigureId::Fig5 => bond_sensitivity(),
            FigureId::Fig6 => retention_sweeps(),
            FigureId::Fig7 => stock_sweeps(),
        };
        let path = dir.join(fig.file_name());
        fs::write(&path, csv).with_context(|| format!("cannot write {}", path.display()))?;
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn value_surfaces(artifacts: &SolveArtifacts) -> Result<String> {
    let vf = artifacts.value_function()?;
    let t = linspace(0.0, artifacts.params.horizon, 51);
    let y = linspace(0.0, 10.0, 51);
    let mut buf = Vec::new();
    strategy::write_value_csv(&vf, &t, &y, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is ascii"))
}

fn strategy_surfaces(artifacts: &SolveArtifacts) -> Result<String> {
    let vf = artifacts.value_function()?;
    let mut buf = Vec::new();
    strategy::write_strategy_csv(&vf, &mut buf)?;
    Ok(String::from_utf8(buf).expect("csv is ascii"))
}

/// Bond position at `t = 0` as a function of the factor, for several
/// default-risk premia (`1/Delta`) and loss rates. The field depends on the
/// premium but not on the loss rate, so each premium costs one solve and the
/// loss rate enters as the `1/zeta` factor.
fn bond_vs_factor(cfg: &RunConfig, artifacts: &SolveArtifacts) -> Result<String> {
    let spec = artifacts.spec;
    let mut out = String::from("z,invDelta,zeta,m\n");
    for &inv_delta in &INV_DELTA_SWEEP_FIG3 {
        let mut params = cfg.model.clone();
        params.delta_ratio = 1.0 / inv_delta;
        params.credit_spread = params.h_p / params.delta_ratio * params.zeta;
        let xi_post = pde::solve_post_default(&params, &spec)?;
        let pre = pde::solve_pre_default(&params, &spec, &xi_post, pde::DEFAULT_GRADIENT_CAP)?;
        let disc = params.discount(0.0);
        for i in 0..spec.n_space {
            let du = pre.u.at(0, i) - xi_post.at(0, i).ln();
            let numerator = du + inv_delta.ln();
            for &zeta in &ZETA_SWEEP_FIG3 {
                let m = numerator / (params.alpha * zeta) * disc;
                out.push_str(&format!("{},{},{},{}\n", spec.z(i), inv_delta, zeta, m));
            }
        }
    }
    Ok(out)
}

/// Coincident-field bond position `m = ln(1/Delta) / (alpha zeta)` with
/// `alpha = 0.5`, over `1/Delta` in `[1, 10]` and `zeta` in `[0.1, 1]`.
/// Independent of the reinsurance loading. At `1/Delta = 1` the position
/// vanishes: no premium, no bond.
fn bond_sensitivity() -> String {
    let alpha = 0.5;
    let mut out = String::from("invDelta,zeta,m\n");
    for &inv_delta in linspace(1.0, 10.0, 37).iter() {
        for k in 1..=10 {
            let zeta = k as f64 / 10.0;
            let m = inv_delta.ln() / (alpha * zeta);
            out.push_str(&format!("{inv_delta},{zeta},{m}\n"));
        }
    }
    out
}

/// Retention level over a ten-year horizon for several risk aversions and
/// reinsurer loadings.
fn retention_sweeps() -> String {
    let (horizon, r) = (10.0, 0.04);
    let mut out = String::from("t,alpha,theta,a\n");
    for &t in linspace(0.0, horizon, 101).iter() {
        for &alpha in &ALPHA_SWEEP {
            for &theta in &THETA_SWEEP {
                let a = (1.0 + theta).ln() / alpha * (-r * (horizon - t)).exp();
                out.push_str(&format!("{t},{alpha},{theta},{a}\n"));
            }
        }
    }
    out
}

/// Stock position over a ten-year horizon on the ten-node factor grid
/// `z_i = -2 + (i - 1) * 4/9`, Scott volatility, for several risk aversions.
fn stock_sweeps() -> String {
    let (horizon, r, mu) = (10.0, 0.04, 0.3);
    let mut out = String::from("t,alpha,z,l\n");
    for &t in linspace(0.0, horizon, 101).iter() {
        for &alpha in &ALPHA_SWEEP {
            for i in 0..10 {
                let z = -2.0 + i as f64 * (4.0 / 9.0);
                let l = (mu - r) / (alpha * (2.0 * z).exp()) * (-r * (horizon - t)).exp();
                out.push_str(&format!("{t},{alpha},{z},{l}\n"));
            }
        }
    }
    out
}

