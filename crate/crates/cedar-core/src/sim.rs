//! Monte Carlo engine for the factor, claims, default and wealth dynamics.
//!
//! Per-path randomness comes from counter-based stream splitting: path `i`
//! draws from ChaCha stream `i` of a key derived from the seed, so results
//! are reproducible independently of the number of worker threads and of the
//! total path count. Antithetic pairs share a stream and negate the Gaussian
//! draws only; jump times and sizes are identical within a pair.
//!
//! Claim arrivals and the default time are sampled exactly (exponential
//! gaps) and applied at their exact arrival instants between Euler nodes;
//! control lookups use the left limit of the state, respecting
//! predictability.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::io::Write;

use crate::error::{Error, Result};
use crate::market::{self, ModelParams};

/// Monte Carlo run configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    /// Seed; together with the configuration it fully determines all
    /// randomness.
    pub seed: u64,
    #[serde(rename = "nPaths")]
    pub n_paths: usize,
    /// Euler step. Must not exceed `T / 100`.
    #[serde(rename = "dtSim")]
    pub dt_sim: f64,
    /// Use antithetic variates (requires an even path count).
    pub antithetic: bool,
}

impl SimConfig {
    pub fn validate(&self, horizon: f64) -> Result<()> {
        if self.n_paths < 1 {
            return Err(Error::InvalidParams("nPaths must be >= 1".into()));
        }
        if !(self.dt_sim > 0.0) || self.dt_sim > horizon / 100.0 {
            return Err(Error::InvalidParams(format!(
                "dtSim must lie in (0, T/100], got {}",
                self.dt_sim
            )));
        }
        if self.antithetic && self.n_paths % 2 != 0 {
            return Err(Error::InvalidParams(
                "antithetic variates require an even nPaths".into(),
            ));
        }
        Ok(())
    }

    fn steps(&self, span: f64) -> usize {
        ((span / self.dt_sim).ceil() as usize).max(1)
    }
}

/// Feedback controls looked up along a simulated path.
pub trait Controls: Sync {
    /// Stock position at `(t, z)` in the given default state.
    fn stock(&self, t: f64, z: f64, defaulted: bool) -> f64;
    /// Bond position at `(t, z)`; only consulted before default.
    fn bond(&self, t: f64, z: f64) -> f64;
    /// Retention level at `t` in the given default state.
    fn retention(&self, t: f64, defaulted: bool) -> f64;
}

/// State-independent controls; used by degenerate scenarios and tests.
#[derive(Debug, Clone, Copy)]
pub struct ConstControls {
    pub stock: f64,
    pub bond: f64,
    pub retention: f64,
}

impl Controls for ConstControls {
    fn stock(&self, _t: f64, _z: f64, _defaulted: bool) -> f64 {
        self.stock
    }
    fn bond(&self, _t: f64, _z: f64) -> f64 {
        self.bond
    }
    fn retention(&self, _t: f64, _defaulted: bool) -> f64 {
        self.retention
    }
}

/// One sampled trajectory. Jump instants appear twice in the row vectors,
/// first with the pre-jump value, then with the post-jump one, so the
/// default indicator is right-continuous.
#[derive(Debug, Clone, PartialEq)]
pub struct SimPath {
    pub times: Vec<f64>,
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub h: Vec<u8>,
    pub claim_times: Vec<f64>,
    /// Raw claim sizes drawn from the severity distribution.
    pub claim_sizes: Vec<f64>,
    /// Sizes actually borne by the insurer, `min(X_i, a(T_i))`.
    pub claim_applied: Vec<f64>,
    pub default_time: Option<f64>,
}

/// Monte Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub estimate: f64,
    pub stderr: f64,
    #[serde(rename = "nPaths")]
    pub n_paths: usize,
    pub seed: u64,
}

struct PathRng {
    rng: ChaCha12Rng,
    negate: bool,
}

impl PathRng {
    fn new(seed: u64, path: usize, antithetic: bool) -> Self {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&seed.to_le_bytes());
        let mut rng = ChaCha12Rng::from_seed(key);
        let (stream, negate) = if antithetic {
            ((path / 2) as u64, path % 2 == 1)
        } else {
            (path as u64, false)
        };
        rng.set_stream(stream);
        PathRng { rng, negate }
    }

    fn normal(&mut self) -> f64 {
        let g: f64 = StandardNormal.sample(&mut self.rng);
        if self.negate {
            -g
        } else {
            g
        }
    }

    /// Exponential with the given rate; infinite when the rate is zero.
    fn exp(&mut self, rate: f64) -> f64 {
        if rate <= 0.0 {
            return f64::INFINITY;
        }
        let e: f64 = Exp1.sample(&mut self.rng);
        e / rate
    }
}

/// Deterministic mean and standard error. Antithetic samples are reduced to
/// pair means first.
fn summarize(values: &[f64], antithetic: bool) -> (f64, f64) {
    let reduced: Vec<f64> = if antithetic {
        values
            .chunks_exact(2)
            .map(|p| 0.5 * (p[0] + p[1]))
            .collect()
    } else {
        values.to_vec()
    };
    let n = reduced.len();
    let mean = reduced.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = reduced.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Simulated factor trajectories on the uniform Euler grid.
#[derive(Debug, Clone)]
pub struct FactorPaths {
    pub times: Vec<f64>,
    pub paths: Vec<Vec<f64>>,
}

fn factor_step(params: &ModelParams, z: f64, dt: f64, sqrt_dt: f64, eps: f64) -> f64 {
    z + params.g(z) * dt + params.beta * sqrt_dt * eps
}

/// Euler-Maruyama trajectories of `dZ = g(Z) dt + beta dW`.
pub fn simulate_factor(params: &ModelParams, cfg: &SimConfig, z0: f64) -> Result<FactorPaths> {
    cfg.validate(params.horizon)?;
    let n = cfg.steps(params.horizon);
    let dt = params.horizon / n as f64;
    let sqrt_dt = dt.sqrt();
    let times: Vec<f64> = (0..=n)
        .map(|k| if k == n { params.horizon } else { k as f64 * dt })
        .collect();
    let paths: Vec<Vec<f64>> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(cfg.seed, p, cfg.antithetic);
            let mut z = z0;
            let mut out = Vec::with_capacity(n + 1);
            out.push(z);
            for _ in 0..n {
                z = factor_step(params, z, dt, sqrt_dt, rng.normal());
                out.push(z);
            }
            out
        })
        .collect();
    Ok(FactorPaths { times, paths })
}

/// Terminal factor samples only; memory stays flat in the path count.
pub fn factor_terminal_samples(
    params: &ModelParams,
    cfg: &SimConfig,
    z0: f64,
) -> Result<Vec<f64>> {
    cfg.validate(params.horizon)?;
    let n = cfg.steps(params.horizon);
    let dt = params.horizon / n as f64;
    let sqrt_dt = dt.sqrt();
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(cfg.seed, p, cfg.antithetic);
            let mut z = z0;
            for _ in 0..n {
                z = factor_step(params, z, dt, sqrt_dt, rng.normal());
            }
            z
        })
        .collect())
}

/// Default times, `None` when no default occurs within the horizon. The
/// default time is the first draw of each path stream, matching the draw
/// order of the wealth simulator.
pub fn simulate_default(params: &ModelParams, cfg: &SimConfig) -> Result<Vec<Option<f64>>> {
    cfg.validate(params.horizon)?;
    Ok((0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(cfg.seed, p, cfg.antithetic);
            let tau = rng.exp(params.h_p);
            (tau <= params.horizon).then_some(tau)
        })
        .collect())
}

struct PathOutcome {
    terminal_wealth: f64,
    path: Option<SimPath>,
}

fn run_wealth_path<C: Controls>(
    params: &ModelParams,
    controls: &C,
    y0: f64,
    z0: f64,
    n: usize,
    rng: &mut PathRng,
    record: bool,
    path_index: usize,
) -> Result<PathOutcome> {
    let horizon = params.horizon;
    let dt = horizon / n as f64;

    // Jump schedule first, in a fixed draw order: default time, then claim
    // arrival gaps and sizes.
    let tau = rng.exp(params.h_p);
    let mut claim_times = Vec::new();
    let mut claim_sizes = Vec::new();
    let mut s = rng.exp(params.lambda_claims);
    while s < horizon {
        claim_times.push(s);
        claim_sizes.push(rng.exp(params.b));
        s += rng.exp(params.lambda_claims);
    }

    let mut rec = if record {
        Some(SimPath {
            times: vec![0.0],
            z: vec![z0],
            y: vec![y0],
            h: vec![0],
            claim_times: claim_times.clone(),
            claim_sizes: claim_sizes.clone(),
            claim_applied: Vec::with_capacity(claim_times.len()),
            default_time: (tau <= horizon).then_some(tau),
        })
    } else {
        None
    };

    let bond_drift = params.effective_bond_drift();
    let mut t = 0.0_f64;
    let mut z = z0;
    let mut y = y0;
    let mut defaulted = false;
    let mut next_claim = 0usize;
    let mut k = 1usize; // next Euler node

    while t < horizon {
        let t_euler = if k >= n { horizon } else { k as f64 * dt };
        let mut t_next = t_euler;
        if next_claim < claim_times.len() && claim_times[next_claim] < t_next {
            t_next = claim_times[next_claim];
        }
        if !defaulted && tau < t_next {
            t_next = tau;
        }

        // Continuous part over [t, t_next): coefficients frozen at the left
        // endpoint (predictable lookups).
        let step = t_next - t;
        if step > 0.0 {
            let l = controls.stock(t, z, defaulted);
            let m = if defaulted { 0.0 } else { controls.bond(t, z) };
            let a = controls.retention(t, defaulted);
            let premium = market::premium_rate(params, a)?;
            let drift = params.r * y
                + (params.mu(z) - params.r) * l
                + premium
                + if defaulted { 0.0 } else { m * bond_drift };
            let sqrt_step = step.sqrt();
            let eps_w = rng.normal();
            let eps_z = rng.normal();
            y += drift * step + l * params.sigma(z) * sqrt_step * eps_w;
            z = factor_step(params, z, step, sqrt_step, eps_z);
            if !y.is_finite() || !z.is_finite() {
                return Err(Error::Numerical {
                    op: "simulate_wealth",
                    i: path_index,
                    j: k,
                    msg: format!("state left the finite range at t = {t_next}: y = {y}, z = {z}"),
                });
            }
        }
        t = t_next;
        if let Some(r) = rec.as_mut() {
            r.times.push(t);
            r.z.push(z);
            r.y.push(y);
            r.h.push(defaulted as u8);
        }

        // Jumps scheduled exactly at t: claims first, then default.
        while next_claim < claim_times.len() && claim_times[next_claim] <= t {
            let a = controls.retention(t, defaulted);
            let applied = claim_sizes[next_claim].min(a);
            y -= applied;
            if let Some(r) = rec.as_mut() {
                r.claim_applied.push(applied);
                r.times.push(t);
                r.z.push(z);
                r.y.push(y);
                r.h.push(defaulted as u8);
            }
            next_claim += 1;
        }
        if !defaulted && tau <= t {
            let m = controls.bond(t, z);
            y -= m * params.zeta;
            defaulted = true;
            if let Some(r) = rec.as_mut() {
                r.times.push(t);
                r.z.push(z);
                r.y.push(y);
                r.h.push(1);
            }
        }
        if t >= t_euler {
            k += 1;
        }
    }

    Ok(PathOutcome {
        terminal_wealth: y,
        path: rec,
    })
}

/// Simulates wealth paths under the given controls, recording the full
/// trajectories. Memory grows with `nPaths * steps`; use
/// [`mc_expected_utility`] when only the terminal functional is needed.
pub fn simulate_wealth<C: Controls>(
    params: &ModelParams,
    cfg: &SimConfig,
    controls: &C,
    y0: f64,
    z0: f64,
) -> Result<Vec<SimPath>> {
    cfg.validate(params.horizon)?;
    let n = cfg.steps(params.horizon);
    (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(cfg.seed, p, cfg.antithetic);
            run_wealth_path(params, controls, y0, z0, n, &mut rng, true, p)
                .map(|o| o.path.expect("recording was requested"))
        })
        .collect()
}

/// Estimates the expected terminal utility `E[-exp(-alpha Y_T)]` under the
/// given controls.
pub fn mc_expected_utility<C: Controls>(
    params: &ModelParams,
    cfg: &SimConfig,
    controls: &C,
    y0: f64,
    z0: f64,
) -> Result<Estimate> {
    cfg.validate(params.horizon)?;
    let n = cfg.steps(params.horizon);
    let utilities: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(cfg.seed, p, cfg.antithetic);
            run_wealth_path(params, controls, y0, z0, n, &mut rng, false, p)
                .map(|o| -(-params.alpha * o.terminal_wealth).exp())
        })
        .collect::<Result<_>>()?;
    let (estimate, stderr) = summarize(&utilities, cfg.antithetic);
    Ok(Estimate {
        estimate,
        stderr,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
    })
}

/// Feynman-Kac estimate of the post-default field:
/// `E[exp(-int_t^T h(s, Z_s) ds) | Z_t = z]`, with the time integral taken
/// by the trapezoid rule along each Euler path.
pub fn feynman_kac(params: &ModelParams, cfg: &SimConfig, t: f64, z: f64) -> Result<Estimate> {
    cfg.validate(params.horizon)?;
    if !(0.0..=params.horizon).contains(&t) {
        return Err(Error::Domain {
            op: "feynman_kac",
            msg: format!("t = {t} outside [0, {}]", params.horizon),
        });
    }
    let span = params.horizon - t;
    if span == 0.0 {
        return Ok(Estimate {
            estimate: 1.0,
            stderr: 0.0,
            n_paths: cfg.n_paths,
            seed: cfg.seed,
        });
    }
    let n = cfg.steps(span);
    let dt = span / n as f64;
    let sqrt_dt = dt.sqrt();
    // time part of the killing coefficient precomputed on the Euler nodes
    let mut f_nodes = Vec::with_capacity(n + 1);
    for k in 0..=n {
        let tk = if k == n { params.horizon } else { t + k as f64 * dt };
        f_nodes.push(market::potential_t_part(params, tk)?);
    }

    let values: Vec<f64> = (0..cfg.n_paths)
        .into_par_iter()
        .map(|p| {
            let mut rng = PathRng::new(cfg.seed, p, cfg.antithetic);
            let mut zc = z;
            let mut h_prev = f_nodes[0] + market::potential_z_part(params, zc);
            let mut acc = 0.0;
            for k in 1..=n {
                zc = factor_step(params, zc, dt, sqrt_dt, rng.normal());
                let h = f_nodes[k] + market::potential_z_part(params, zc);
                acc += 0.5 * (h_prev + h) * dt;
                h_prev = h;
            }
            (-acc).exp()
        })
        .collect();
    let (estimate, stderr) = summarize(&values, cfg.antithetic);
    Ok(Estimate {
        estimate,
        stderr,
        n_paths: cfg.n_paths,
        seed: cfg.seed,
    })
}

/// Writes recorded paths as CSV `path,t,Z,Y,H`, path-major, rows in time
/// order. Deterministic output.
pub fn write_paths_csv<W: Write>(paths: &[SimPath], mut w: W) -> std::io::Result<()> {
    writeln!(w, "path,t,Z,Y,H")?;
    for (p, path) in paths.iter().enumerate() {
        for k in 0..path.times.len() {
            writeln!(
                w,
                "{},{},{},{},{}",
                p, path.times[k], path.z[k], path.y[k], path.h[k]
            )?;
        }
    }
    Ok(())
}
