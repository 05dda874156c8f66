//! Value functions and optimal strategy surfaces assembled from the solved
//! fields, plus the qualitative monotonicity report.
//!
//! With exponential utility the value function factorizes as
//! `V(t, y, z, H) = -xi(t, z) exp(-alpha y e^{r (T - t)})` where `xi` is the
//! post-default field for `H = 1` and the pre-default field for `H = 0`.
//! The optimal controls are wealth-independent: the stock and retention
//! components are closed forms, the bond component reads both fields.

use std::io::Write;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::grid::FieldGrid;
use crate::market::{self, ModelParams};
use crate::sim::Controls;

/// Violations up to this size still count as a pass in the monotonicity
/// report; several figure-level claims hold only up to grid tolerance.
pub const MONOTONICITY_TOL: f64 = 1e-6;

/// Pre/post-default value function backed by the two solved fields.
#[derive(Debug, Clone)]
pub struct ValueFunction {
    params: ModelParams,
    xi_post: Arc<FieldGrid>,
    xi_pre: Arc<FieldGrid>,
}

/// One strategy sample `(l, m, a)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Strategy {
    /// Amount invested in the stock.
    pub stock: f64,
    /// Amount invested in the corporate bond (0 after default).
    pub bond: f64,
    /// Excess-of-loss retention level.
    pub retention: f64,
}

impl ValueFunction {
    pub fn new(params: ModelParams, xi_post: FieldGrid, xi_pre: FieldGrid) -> Result<Self> {
        if xi_post.spec() != xi_pre.spec()
            || xi_post.stored_time_indices() != xi_pre.stored_time_indices()
        {
            return Err(Error::GridMismatch(
                "pre- and post-default fields live on different grids".into(),
            ));
        }
        if xi_post.spec().horizon != params.horizon {
            return Err(Error::GridMismatch(
                "field horizon differs from model horizon".into(),
            ));
        }
        Ok(ValueFunction {
            params,
            xi_post: Arc::new(xi_post),
            xi_pre: Arc::new(xi_pre),
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn xi_post(&self) -> &FieldGrid {
        &self.xi_post
    }

    pub fn xi_pre(&self) -> &FieldGrid {
        &self.xi_pre
    }

    fn field(&self, defaulted: bool) -> &FieldGrid {
        if defaulted {
            &self.xi_post
        } else {
            &self.xi_pre
        }
    }

    /// Value `V(t, y, z, H) = -xi(t, z) exp(-alpha y e^{r (T - t)})`;
    /// negative everywhere and strictly increasing in `y`.
    pub fn value(&self, t: f64, y: f64, z: f64, defaulted: bool) -> Result<f64> {
        let xi = self.field(defaulted).interpolate(t, z)?;
        let growth = (self.params.r * (self.params.horizon - t)).exp();
        Ok(-xi * (-self.params.alpha * y * growth).exp())
    }

    /// Optimal `(l, m, a)` at `(t, z)`; the bond component is zero after
    /// default.
    pub fn strategy_at(&self, t: f64, z: f64, defaulted: bool) -> Result<Strategy> {
        let stock = market::optimal_stock(&self.params, t, z)?;
        let retention = market::optimal_retention(&self.params, t);
        let bond = if defaulted {
            0.0
        } else {
            let pre = self.xi_pre.interpolate(t, z)?;
            let post = self.xi_post.interpolate(t, z)?;
            market::optimal_bond(&self.params, t, pre, post)?
        };
        Ok(Strategy {
            stock,
            bond,
            retention,
        })
    }

    /// Strategy surface for one default state.
    pub fn surface(&self, defaulted: bool) -> StrategySurface {
        StrategySurface {
            params: self.params.clone(),
            xi_pre: Arc::clone(&self.xi_pre),
            xi_post: Arc::clone(&self.xi_post),
            defaulted,
            stock_scale: 1.0,
            bond_scale: 1.0,
            retention_scale: 1.0,
        }
    }

    /// Pre/post-default surface pair for the wealth simulator.
    pub fn strategy_pair(&self) -> StrategyPair {
        StrategyPair {
            pre: self.surface(false),
            post: self.surface(true),
        }
    }

    /// Runs the qualitative claims on deterministic probe grids.
    pub fn monotonicity_report(&self) -> MonotonicityReport {
        monotonicity_report(self)
    }
}

/// The optimal feedback controls as functions of `(t, z)`, with optional
/// componentwise scaling used by the strategy tournaments.
#[derive(Debug, Clone)]
pub struct StrategySurface {
    params: ModelParams,
    xi_pre: Arc<FieldGrid>,
    xi_post: Arc<FieldGrid>,
    /// When set, the bond component is identically zero.
    pub defaulted: bool,
    stock_scale: f64,
    bond_scale: f64,
    retention_scale: f64,
}

impl StrategySurface {
    /// Stock position `l(t, z)`.
    #[inline]
    pub fn stock(&self, t: f64, z: f64) -> f64 {
        let s = self.params.sigma(z);
        self.stock_scale * (self.params.mu(z) - self.params.r)
            / (self.params.alpha * s * s)
            * self.params.discount(t)
    }

    /// Bond position `m(t, z)`; zero in the defaulted state.
    #[inline]
    pub fn bond(&self, t: f64, z: f64) -> f64 {
        if self.defaulted {
            return 0.0;
        }
        let pre = self.xi_pre.sample(t, z);
        let post = self.xi_post.sample(t, z);
        let num = pre.ln() - post.ln() + (1.0 / self.params.delta_ratio).ln();
        self.bond_scale * num / (self.params.alpha * self.params.zeta) * self.params.discount(t)
    }

    /// Retention level `a(t)`.
    #[inline]
    pub fn retention(&self, t: f64) -> f64 {
        self.retention_scale * market::optimal_retention(&self.params, t)
    }
}

/// Pre- and post-default surfaces used jointly along a simulated path.
#[derive(Debug, Clone)]
pub struct StrategyPair {
    pub pre: StrategySurface,
    pub post: StrategySurface,
}

impl StrategyPair {
    /// Componentwise-scaled copy (perturbed strategies for tournaments).
    pub fn scaled(&self, stock: f64, bond: f64, retention: f64) -> StrategyPair {
        let scale = |s: &StrategySurface| StrategySurface {
            stock_scale: s.stock_scale * stock,
            bond_scale: s.bond_scale * bond,
            retention_scale: s.retention_scale * retention,
            ..s.clone()
        };
        StrategyPair {
            pre: scale(&self.pre),
            post: scale(&self.post),
        }
    }
}

impl Controls for StrategyPair {
    fn stock(&self, t: f64, z: f64, defaulted: bool) -> f64 {
        if defaulted {
            self.post.stock(t, z)
        } else {
            self.pre.stock(t, z)
        }
    }

    fn bond(&self, t: f64, z: f64) -> f64 {
        self.pre.bond(t, z)
    }

    fn retention(&self, t: f64, defaulted: bool) -> f64 {
        if defaulted {
            self.post.retention(t)
        } else {
            self.pre.retention(t)
        }
    }
}

/// Result of one qualitative claim.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ClaimCheck {
    pub name: &'static str,
    pub pass: bool,
    /// Largest observed violation (0 when the claim holds everywhere).
    pub worst_violation: f64,
}

/// Pass/fail per qualitative claim with worst violation magnitudes.
#[derive(Debug, Clone, serde::Serialize)]
pub struct MonotonicityReport {
    pub claims: Vec<ClaimCheck>,
}

impl MonotonicityReport {
    pub fn all_pass(&self) -> bool {
        self.claims.iter().all(|c| c.pass)
    }

    pub fn claim(&self, name: &str) -> Option<&ClaimCheck> {
        self.claims.iter().find(|c| c.name == name)
    }
}

fn claim(name: &'static str, worst_violation: f64) -> ClaimCheck {
    ClaimCheck {
        name,
        pass: worst_violation <= MONOTONICITY_TOL,
        worst_violation,
    }
}

fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64)
        .collect()
}

fn monotonicity_report(vf: &ValueFunction) -> MonotonicityReport {
    let p = vf.params();
    let d = vf.xi_post.spec().d;
    let t_probe = linspace(0.0, p.horizon, 41);
    let z_probe = linspace(-d, d, 21);
    let mut claims = Vec::new();

    // (i) V(., y, z, H) nonincreasing in t at y = 1, z = 0
    let mut worst = 0.0f64;
    for &defaulted in &[false, true] {
        let mut prev = vf.value(t_probe[0], 1.0, 0.0, defaulted).unwrap();
        for &t in &t_probe[1..] {
            let v = vf.value(t, 1.0, 0.0, defaulted).unwrap();
            worst = worst.max(v - prev);
            prev = v;
        }
    }
    claims.push(claim("value_nonincreasing_in_t", worst));

    // (ii) V increasing in y
    let mut worst = 0.0f64;
    for &defaulted in &[false, true] {
        for &t in &[0.0, 0.5 * p.horizon, p.horizon] {
            for &z in &[-1.0, 0.0, 1.0] {
                let ys = linspace(-2.0, 10.0, 25);
                let mut prev = vf.value(t, ys[0], z, defaulted).unwrap();
                for &y in &ys[1..] {
                    let v = vf.value(t, y, z, defaulted).unwrap();
                    worst = worst.max(prev - v);
                    prev = v;
                }
            }
        }
    }
    claims.push(claim("value_increasing_in_y", worst));

    // (iii) V_pre >= V_post pointwise, i.e. xi_pre <= xi_post on the grid
    let mut worst = 0.0f64;
    for k in 0..vf.xi_pre.n_cols() {
        for i in 0..vf.xi_pre.spec().n_space {
            worst = worst.max(vf.xi_pre.at(k, i) - vf.xi_post.at(k, i));
        }
    }
    claims.push(claim("pre_default_value_dominates", worst));

    // (iv) a*(t) increasing in t
    let mut worst = 0.0f64;
    let mut prev = market::optimal_retention(p, t_probe[0]);
    for &t in &t_probe[1..] {
        let a = market::optimal_retention(p, t);
        worst = worst.max(prev - a);
        prev = a;
    }
    claims.push(claim("retention_increasing_in_t", worst));

    // (v) l*(t, z) decreasing in z and increasing in t
    let mut worst = 0.0f64;
    for &t in &t_probe {
        let mut prev = market::optimal_stock(p, t, z_probe[0]).unwrap();
        for &z in &z_probe[1..] {
            let l = market::optimal_stock(p, t, z).unwrap();
            worst = worst.max(l - prev);
            prev = l;
        }
    }
    for &z in &z_probe {
        let mut prev = market::optimal_stock(p, t_probe[0], z).unwrap();
        for &t in &t_probe[1..] {
            let l = market::optimal_stock(p, t, z).unwrap();
            worst = worst.max(prev - l);
            prev = l;
        }
    }
    claims.push(claim("stock_decreasing_in_z_increasing_in_t", worst));

    // (vi) m* within its envelopes on the stored grid
    let mut worst = 0.0f64;
    let spec = vf.xi_pre.spec();
    for (k, &j) in vf.xi_pre.stored_time_indices().iter().enumerate() {
        let t = spec.t(j);
        let (lo, hi) = market::bond_bounds(p, t);
        for i in 0..spec.n_space {
            let m = market::optimal_bond(p, t, vf.xi_pre.at(k, i), vf.xi_post.at(k, i)).unwrap();
            worst = worst.max(lo - m).max(m - hi);
        }
    }
    claims.push(claim("bond_within_envelopes", worst));

    // (vii) a* and l* halve when alpha doubles
    let mut p2 = p.clone();
    p2.alpha = 2.0 * p.alpha;
    let mut worst = 0.0f64;
    for &t in &t_probe {
        let a = market::optimal_retention(p, t);
        let a2 = market::optimal_retention(&p2, t);
        worst = worst.max((2.0 * a2 - a).abs());
        for &z in &[-1.0, 0.0, 1.0] {
            let l = market::optimal_stock(p, t, z).unwrap();
            let l2 = market::optimal_stock(&p2, t, z).unwrap();
            worst = worst.max((2.0 * l2 - l).abs());
        }
    }
    claims.push(claim("controls_halve_when_alpha_doubles", worst));

    MonotonicityReport { claims }
}

/// Writes the pre-default strategy surface as CSV `t,z,l,m,a` over the
/// stored grid, time outer ascending, space inner ascending.
pub fn write_strategy_csv<W: Write>(vf: &ValueFunction, mut w: W) -> Result<()> {
    let spec = *vf.xi_pre.spec();
    writeln!(w, "t,z,l,m,a").map_err(|e| Error::Csv(e.to_string()))?;
    for (k, &j) in vf.xi_pre.stored_time_indices().iter().enumerate() {
        let t = spec.t(j);
        let a = market::optimal_retention(vf.params(), t);
        for i in 0..spec.n_space {
            let z = spec.z(i);
            let l = market::optimal_stock(vf.params(), t, z)?;
            let m = market::optimal_bond(vf.params(), t, vf.xi_pre.at(k, i), vf.xi_post.at(k, i))?;
            writeln!(w, "{t},{z},{l},{m},{a}").map_err(|e| Error::Csv(e.to_string()))?;
        }
    }
    Ok(())
}

/// Writes value surfaces at `z = 0` as CSV `t,y,V_pre,V_post` over the given
/// probe grids.
pub fn write_value_csv<W: Write>(
    vf: &ValueFunction,
    t_values: &[f64],
    y_values: &[f64],
    mut w: W,
) -> Result<()> {
    writeln!(w, "t,y,V_pre,V_post").map_err(|e| Error::Csv(e.to_string()))?;
    for &t in t_values {
        for &y in y_values {
            let pre = vf.value(t, y, 0.0, false)?;
            let post = vf.value(t, y, 0.0, true)?;
            writeln!(w, "{t},{y},{pre},{post}").map_err(|e| Error::Csv(e.to_string()))?;
        }
    }
    Ok(())
}
