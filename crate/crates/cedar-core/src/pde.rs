//! Explicit finite-difference solvers for the post-default linear field
//! equation and the pre-default semilinear one.
//!
//! Post-default, the field `xi(t, z)` solves the terminal-value problem
//!
//! ```text
//! 0 = xi_t + 1/2 beta^2 xi_zz + g(z) xi_z - h(t, z) xi,    xi(T, .) = 1,
//! ```
//!
//! marched backward with central differences in space and the killing
//! coefficient evaluated at the current time level. Pre-default, the
//! log-field `u = ln xi` picks up a quadratic gradient and a zeroth-order
//! term:
//!
//! ```text
//! 0 = u_t + 1/2 beta^2 (u_zz + u_z^2) + g(z) u_z - (hP/Delta) u - M(t, z),
//! ```
//!
//! with `M = h + I - (hP/Delta) ln xi_post`. The gradient is capped at a
//! configurable level before squaring; the cap is inactive once the solution
//! is in its converged regime, which the doubling check in the verification
//! suite confirms. Both problems share the artificial boundary values
//! (1 for xi fields, 0 for u fields) on `z = +-d`.

use crate::error::{Error, Result};
use crate::grid::{FieldGrid, GridSpec};
use crate::market::{self, ModelParams};

/// Default gradient cap for the pre-default solve.
pub const DEFAULT_GRADIENT_CAP: f64 = 1e3;

/// Fraction of gradient-capped interior nodes above which the solver warns.
const SATURATION_WARN_FRACTION: f64 = 0.01;

/// Stability diagnostic for the explicit scheme.
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
pub struct CflReport {
    /// Diffusion ratio `dt beta^2 / dz^2`.
    pub ratio: f64,
    /// Supremum of |h| over the space-time grid.
    pub coef_sup: f64,
    /// `dt (beta^2 / dz^2 + coef_sup)`; must stay below 1 so the
    /// self-weight of each node remains positive.
    pub self_weight_load: f64,
    pub dt: f64,
    pub dz: f64,
    /// Set when the diffusion ratio exceeds 0.5: legal but close to the
    /// stability edge.
    pub marginal: bool,
}

/// Precomputed coefficient tables for the backward march: the killing
/// coefficient splits as `h(t, z) = f(t) + h3(z)`.
struct CoefTable {
    f_t: Vec<f64>,
    h3_z: Vec<f64>,
    g_z: Vec<f64>,
}

fn build_coef_table(params: &ModelParams, spec: &GridSpec) -> Result<CoefTable> {
    let mut f_t = Vec::with_capacity(spec.n_time);
    for j in 0..spec.n_time {
        f_t.push(market::potential_t_part(params, spec.t(j))?);
    }
    let mut h3_z = Vec::with_capacity(spec.n_space);
    let mut g_z = Vec::with_capacity(spec.n_space);
    for i in 0..spec.n_space {
        let z = spec.z(i);
        h3_z.push(market::potential_z_part(params, z));
        g_z.push(params.g(z));
    }
    Ok(CoefTable { f_t, h3_z, g_z })
}

fn check_spec(params: &ModelParams, spec: &GridSpec) -> Result<()> {
    if spec.horizon != params.horizon {
        return Err(Error::GridMismatch(format!(
            "grid horizon {} differs from model horizon {}",
            spec.horizon, params.horizon
        )));
    }
    Ok(())
}

/// Verifies the stability requirements of the explicit scheme: the diffusion
/// ratio `dt beta^2 / dz^2` must be below 1 and the node self-weight
/// `1 - dt (beta^2/dz^2 + h)` must stay positive for every coefficient value
/// on the grid. Violations are hard errors.
pub fn check_cfl(params: &ModelParams, spec: &GridSpec) -> Result<CflReport> {
    check_spec(params, spec)?;
    let table = build_coef_table(params, spec)?;
    Ok(check_cfl_with(params, spec, &table)?.0)
}

fn check_cfl_with<'a>(
    params: &ModelParams,
    spec: &GridSpec,
    table: &'a CoefTable,
) -> Result<(CflReport, &'a CoefTable)> {
    let dt = spec.dt();
    let dz = spec.dz();
    let ratio = dt * params.beta * params.beta / (dz * dz);

    let fold_minmax = |v: &[f64]| {
        v.iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
                (lo.min(x), hi.max(x))
            })
    };
    let (f_lo, f_hi) = fold_minmax(&table.f_t);
    let (h3_lo, h3_hi) = fold_minmax(&table.h3_z);
    // h = f(t) + h3(z) attains its range on the extreme combinations
    let coef_sup = (f_hi + h3_hi).abs().max((f_lo + h3_lo).abs());
    let self_weight_load = dt * (params.beta * params.beta / (dz * dz) + coef_sup);

    let report = CflReport {
        ratio,
        coef_sup,
        self_weight_load,
        dt,
        dz,
        marginal: ratio > 0.5,
    };
    if !(ratio < 1.0) {
        return Err(Error::Cfl {
            ratio,
            msg: format!("dt*beta^2/dz^2 = {ratio} must be < 1"),
        });
    }
    if !(self_weight_load < 1.0) {
        return Err(Error::Cfl {
            ratio,
            msg: format!(
                "dt*(beta^2/dz^2 + sup|h|) = {self_weight_load} must be < 1 \
                 to keep node self-weights positive"
            ),
        });
    }
    Ok((report, table))
}

/// One backward step of the linear scheme, from time level `t_j` (values in
/// `cur`) to `t_{j-1}` (written into `next`). `f_j` is the time part of the
/// killing coefficient at `t_j`; `shift` adds a constant to it.
#[allow(clippy::too_many_arguments)]
fn linear_step(
    cur: &[f64],
    next: &mut [f64],
    table: &CoefTable,
    f_j: f64,
    dt: f64,
    c_diff: f64,
    c_adv: f64,
    j: usize,
) -> Result<()> {
    let n = cur.len();
    for i in 1..n - 1 {
        let diff = cur[i + 1] - 2.0 * cur[i] + cur[i - 1];
        let adv = cur[i + 1] - cur[i - 1];
        let h = f_j + table.h3_z[i];
        let v = cur[i] + c_diff * diff + c_adv * table.g_z[i] * adv - dt * h * cur[i];
        if !v.is_finite() || v <= 0.0 {
            return Err(Error::Numerical {
                op: "solve_post_default",
                i,
                j: j - 1,
                msg: format!("field value {v} left (0, inf)"),
            });
        }
        next[i] = v;
    }
    next[0] = 1.0;
    next[n - 1] = 1.0;
    Ok(())
}

struct ColumnRecorder {
    stored: Vec<usize>,
    columns: Vec<Vec<f64>>, // recorded in backward order
    next_pos: isize,        // index into `stored` expected next
}

impl ColumnRecorder {
    fn new(spec: &GridSpec) -> Self {
        let stored = spec.stored_time_indices();
        let next_pos = stored.len() as isize - 1;
        ColumnRecorder {
            stored,
            columns: Vec::new(),
            next_pos,
        }
    }

    fn offer(&mut self, j: usize, col: &[f64]) {
        if self.next_pos >= 0 && self.stored[self.next_pos as usize] == j {
            self.columns.push(col.to_vec());
            self.next_pos -= 1;
        }
    }

    fn into_field(mut self, spec: GridSpec) -> Result<FieldGrid> {
        self.columns.reverse();
        let values = self.columns.concat();
        FieldGrid::from_columns(spec, self.stored, values)
    }
}

/// Step-size constants shared by every march so that the linear field
/// advances bit-identically wherever it is computed.
fn march_coefs(params: &ModelParams, spec: &GridSpec) -> (f64, f64, f64) {
    let dt = spec.dt();
    let dz = spec.dz();
    let c_diff = dt * 0.5 * params.beta * params.beta / (dz * dz);
    let c_adv = dt / (2.0 * dz);
    (dt, c_diff, c_adv)
}

fn march_linear(
    params: &ModelParams,
    spec: &GridSpec,
    table: &CoefTable,
    shift: f64,
) -> Result<FieldGrid> {
    let n = spec.n_space;
    let (dt, c_diff, c_adv) = march_coefs(params, spec);

    let mut cur = vec![1.0; n];
    let mut next = vec![0.0; n];
    let mut rec = ColumnRecorder::new(spec);
    rec.offer(spec.n_time - 1, &cur);

    for j in (1..spec.n_time).rev() {
        linear_step(&cur, &mut next, table, table.f_t[j] + shift, dt, c_diff, c_adv, j)?;
        std::mem::swap(&mut cur, &mut next);
        rec.offer(j - 1, &cur);
    }
    rec.into_field(*spec)
}

/// Solves the post-default field equation backward from the terminal
/// condition `xi(T, .) = 1`, boundary rows pinned to 1. The result is
/// strictly positive everywhere; a nonpositive or non-finite value during
/// the march aborts with its node location.
pub fn solve_post_default(params: &ModelParams, spec: &GridSpec) -> Result<FieldGrid> {
    check_spec(params, spec)?;
    let table = build_coef_table(params, spec)?;
    check_cfl_with(params, spec, &table)?;
    march_linear(params, spec, &table, 0.0)
}

/// Diagnostic variant of [`solve_post_default`] with the killing coefficient
/// shifted by a constant `c0`; used to verify linearity of the scheme
/// (the interior solution scales by `exp(-c0 (T - t))`).
pub fn solve_post_default_with_shift(
    params: &ModelParams,
    spec: &GridSpec,
    c0: f64,
) -> Result<FieldGrid> {
    check_spec(params, spec)?;
    let table = build_coef_table(params, spec)?;
    check_cfl_with(params, spec, &table)?;
    march_linear(params, spec, &table, c0)
}

/// Result of the pre-default solve.
#[derive(Debug, Clone)]
pub struct PreDefaultSolution {
    /// Log-field `u` (zero terminal and boundary values).
    pub u: FieldGrid,
    /// Field `xi = exp(u)`, strictly positive by construction.
    pub xi: FieldGrid,
    /// Gradient cap used.
    pub gradient_cap: f64,
    /// Fraction of interior node updates where the gradient cap was active.
    pub saturation_fraction: f64,
}

/// Solves the pre-default log-field equation backward from `u(T, .) = 0`,
/// boundary rows pinned to 0, and returns both `u` and `xi = exp(u)`.
///
/// `xi_post` must come from [`solve_post_default`] on the same grid and
/// parameters; the solver re-marches the linear field in lockstep (it needs
/// `ln xi_post` at every time level, not only at stored columns) and
/// cross-checks the stored columns bit-for-bit.
///
/// If the gradient cap is active on more than 1% of interior node updates a
/// warning is logged; rerun with a larger cap.
pub fn solve_pre_default(
    params: &ModelParams,
    spec: &GridSpec,
    xi_post: &FieldGrid,
    gradient_cap: f64,
) -> Result<PreDefaultSolution> {
    check_spec(params, spec)?;
    if !(gradient_cap > 0.0) {
        return Err(Error::Domain {
            op: "solve_pre_default",
            msg: format!("gradient cap must be > 0, got {gradient_cap}"),
        });
    }
    if xi_post.spec() != spec
        || xi_post.stored_time_indices() != spec.stored_time_indices().as_slice()
    {
        return Err(Error::GridMismatch(
            "xi_post does not live on the requested grid".into(),
        ));
    }

    let table = build_coef_table(params, spec)?;
    check_cfl_with(params, spec, &table)?;

    let n = spec.n_space;
    let (dt, c_diff, c_adv) = march_coefs(params, spec);
    let half_beta2 = 0.5 * params.beta * params.beta;
    let inv_2dz = 1.0 / (2.0 * spec.dz());
    let terms = market::default_terms(params);
    let h_q = terms.risk_neutral_intensity;

    let mut xi_cur: Vec<f64> = vec![1.0; n];
    let mut xi_next: Vec<f64> = vec![0.0; n];
    let mut u_cur: Vec<f64> = vec![0.0; n];
    let mut u_next: Vec<f64> = vec![0.0; n];

    let mut u_rec = ColumnRecorder::new(spec);
    u_rec.offer(spec.n_time - 1, &u_cur);
    let mut check_pos = xi_post.stored_time_indices().len() - 1;

    let mut saturated: u64 = 0;
    let mut updates: u64 = 0;

    for j in (1..spec.n_time).rev() {
        let f_j = table.f_t[j];
        for i in 1..n - 1 {
            let du = (u_cur[i + 1] - u_cur[i - 1]) * inv_2dz;
            let capped = du.abs().min(gradient_cap);
            if du.abs() > gradient_cap {
                saturated += 1;
            }
            let d2u = u_cur[i + 1] - 2.0 * u_cur[i] + u_cur[i - 1];
            let m = f_j + table.h3_z[i] + terms.adjustment - h_q * xi_cur[i].ln();
            let v = u_cur[i]
                + c_diff * d2u
                + dt * (half_beta2 * capped * capped + table.g_z[i] * du - h_q * u_cur[i] - m);
            if !v.is_finite() {
                return Err(Error::Numerical {
                    op: "solve_pre_default",
                    i,
                    j: j - 1,
                    msg: format!("log-field value {v} is not finite"),
                });
            }
            u_next[i] = v;
        }
        u_next[0] = 0.0;
        u_next[n - 1] = 0.0;
        updates += (n - 2) as u64;

        linear_step(&xi_cur, &mut xi_next, &table, f_j, dt, c_diff, c_adv, j)?;
        std::mem::swap(&mut xi_cur, &mut xi_next);
        std::mem::swap(&mut u_cur, &mut u_next);

        let stored = xi_post.stored_time_indices();
        if check_pos > 0 && stored[check_pos - 1] == j - 1 {
            check_pos -= 1;
            if xi_post.column(check_pos) != xi_cur.as_slice() {
                return Err(Error::GridMismatch(format!(
                    "xi_post disagrees with a fresh post-default march at time index {} \
                     (was it produced by solve_post_default with these parameters?)",
                    j - 1
                )));
            }
        }
        u_rec.offer(j - 1, &u_cur);
    }

    let saturation_fraction = if updates > 0 {
        saturated as f64 / updates as f64
    } else {
        0.0
    };
    if saturation_fraction > SATURATION_WARN_FRACTION {
        log::warn!(
            "gradient cap {gradient_cap} active on {:.2}% of interior updates; \
             rerun with a larger cap",
            100.0 * saturation_fraction
        );
    }

    let u = u_rec.into_field(*spec)?;
    let xi = u.map(f64::exp)?;
    Ok(PreDefaultSolution {
        u,
        xi,
        gradient_cap,
        saturation_fraction,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{reference_params, GKind, ModelParams, SigmaKind};
    use approx::assert_relative_eq;

    fn ode_params(lambda: f64) -> ModelParams {
        // beta = 0, g = 0: the scheme degenerates to one ODE per node.
        ModelParams::new_unchecked(
            0.04,
            0.3,
            SigmaKind::Const(1.0),
            GKind::Ou { rate: 0.0, mean: 0.0 },
            0.0,
            lambda,
            2.0,
            7.0 / 3.0,
            8.0 / 3.0,
            0.02,
            5.0,
            0.25,
            0.25,
            0.4,
        )
        .unwrap()
    }

    /// Adaptive Simpson quadrature, the test-side oracle.
    fn simpson<F: Fn(f64) -> f64 + Copy>(f: F, a: f64, b: f64, tol: f64) -> f64 {
        fn s<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> f64 {
            (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
        }
        fn rec<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
            let m = 0.5 * (a + b);
            let left = s(f, a, m);
            let right = s(f, m, b);
            if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                rec(f, a, m, left, 0.5 * tol, depth - 1)
                    + rec(f, m, b, right, 0.5 * tol, depth - 1)
            }
        }
        let whole = s(&f, a, b);
        rec(&f, a, b, whole, tol, 40)
    }

    #[test]
    fn cfl_reference_grid() {
        let p = reference_params();
        let spec = GridSpec::new(2.0, 401, 50001, 5.0).unwrap();
        let rep = check_cfl(&p, &spec).unwrap();
        assert_eq!(rep.dt, 1e-4);
        assert_eq!(rep.dz, 0.01);
        assert_relative_eq!(rep.ratio, 0.09, max_relative = 1e-14);
        assert!(!rep.marginal);
        assert!(rep.self_weight_load < 1.0);
    }

    #[test]
    fn cfl_rejects_coarse_time_step() {
        // beta = 0.3, dt = 1e-2, dz = 1e-2 gives ratio 9
        let p = reference_params();
        let spec = GridSpec::new(2.0, 401, 501, 5.0).unwrap();
        match check_cfl(&p, &spec) {
            Err(Error::Cfl { ratio, .. }) => assert_relative_eq!(ratio, 9.0, max_relative = 1e-12),
            other => panic!("expected CFL error, got {other:?}"),
        }
    }

    #[test]
    fn cfl_ode_mode_passes() {
        let p = ode_params(3.0);
        let spec = GridSpec::new(2.0, 401, 501, 5.0).unwrap();
        let rep = check_cfl(&p, &spec).unwrap();
        assert_eq!(rep.ratio, 0.0);
    }

    #[test]
    fn zero_potential_keeps_field_at_one() {
        // mu = r and lambda = 0 make h vanish identically.
        let mut p = ode_params(0.0);
        p.mu0 = p.r;
        p.beta = 0.3;
        p.g_kind = GKind::Ou { rate: 0.1, mean: 1.0 };
        let spec = GridSpec::new(2.0, 101, 2001, 5.0).unwrap();
        let xi = solve_post_default(&p, &spec).unwrap();
        for k in 0..xi.n_cols() {
            for i in 0..spec.n_space {
                assert_eq!(xi.at(k, i), 1.0, "node ({k}, {i})");
            }
        }
    }

    #[test]
    fn ode_mode_matches_quadrature() {
        // beta = 0, g = 0, space-independent h: interior nodes follow
        // xi(t) = exp(-int_t^T h(s) ds) up to O(dt).
        let p = ode_params(3.0);
        let spec = GridSpec::new(2.0, 21, 50001, 5.0).unwrap();
        let xi = solve_post_default(&p, &spec).unwrap();
        let h = |s: f64| market::potential(&p, s, 0.0).unwrap();
        for (k, &j) in xi.stored_time_indices().iter().enumerate().step_by(100) {
            let t = spec.t(j);
            let exact = (-simpson(|s| h(s), t, p.horizon, 1e-12)).exp();
            for i in (1..spec.n_space - 1).step_by(7) {
                assert_relative_eq!(xi.at(k, i), exact, max_relative = 1e-3);
            }
        }
    }

    #[test]
    fn march_aborts_on_blowup_with_location() {
        // Pure advection with beta = 0 and strong g is outside the scheme's
        // stability region; the march must fail with a located error rather
        // than return garbage.
        let mut p = ode_params(3.0);
        p.g_kind = GKind::Ou { rate: 80.0, mean: 0.0 };
        let spec = GridSpec::new(2.0, 41, 201, 5.0).unwrap();
        match solve_post_default(&p, &spec) {
            Err(Error::Numerical { op, .. }) => assert_eq!(op, "solve_post_default"),
            other => panic!("expected numerical abort, got {other:?}"),
        }
    }

    #[test]
    fn post_default_linearity_in_potential_shift() {
        // Adding a constant c0 to h multiplies interior values by
        // exp(-c0 (T - t)) away from the boundary contamination.
        let p = reference_params();
        let spec = GridSpec::with_stride(2.0, 201, 12501, 5.0, 50).unwrap();
        let base = solve_post_default(&p, &spec).unwrap();
        let c0 = 0.15;
        let shifted = solve_post_default_with_shift(&p, &spec, c0).unwrap();
        let center = spec.n_space / 2;
        for (k, &j) in base.stored_time_indices().iter().enumerate() {
            let t = spec.t(j);
            let factor = (-c0 * (p.horizon - t)).exp();
            for di in -10i64..=10 {
                let i = (center as i64 + di) as usize;
                let want = base.at(k, i) * factor;
                let got = shifted.at(k, i);
                assert!(
                    (got - want).abs() / want.abs() < 1e-2,
                    "t={t} i={i}: got {got}, want {want}"
                );
            }
        }
    }

    #[test]
    fn pre_default_terminal_and_boundaries_exact() {
        let p = reference_params();
        let spec = GridSpec::with_stride(2.0, 101, 5001, 5.0, 100).unwrap();
        let xi_post = solve_post_default(&p, &spec).unwrap();
        let sol = solve_pre_default(&p, &spec, &xi_post, DEFAULT_GRADIENT_CAP).unwrap();

        // terminal columns bit-exact
        assert!(xi_post.terminal_column().iter().all(|&v| v == 1.0));
        assert!(sol.u.terminal_column().iter().all(|&v| v == 0.0));
        assert!(sol.xi.terminal_column().iter().all(|&v| v == 1.0));
        // boundaries
        for k in 0..sol.u.n_cols() {
            assert_eq!(sol.u.at(k, 0), 0.0);
            assert_eq!(sol.u.at(k, spec.n_space - 1), 0.0);
            assert_eq!(sol.xi.at(k, 0), 1.0);
            assert_eq!(xi_post.at(k, 0), 1.0);
        }
        // positivity
        for k in 0..sol.xi.n_cols() {
            assert!(sol.xi.column(k).iter().all(|&v| v > 0.0));
            assert!(xi_post.column(k).iter().all(|&v| v > 0.0));
        }
        assert_eq!(sol.saturation_fraction, 0.0);
    }

    #[test]
    fn pre_default_rejects_foreign_field() {
        let p = reference_params();
        let spec = GridSpec::with_stride(2.0, 101, 5001, 5.0, 100).unwrap();
        let fake = FieldGrid::constant(spec, 0.9);
        assert!(solve_pre_default(&p, &spec, &fake, 1e3).is_err());

        let other_spec = GridSpec::with_stride(2.0, 51, 5001, 5.0, 100).unwrap();
        let xi_other = solve_post_default(&p, &other_spec).unwrap();
        assert!(solve_pre_default(&p, &spec, &xi_other, 1e3).is_err());
    }

    #[test]
    fn pre_default_rejects_bad_cap() {
        let p = reference_params();
        let spec = GridSpec::with_stride(2.0, 101, 5001, 5.0, 100).unwrap();
        let xi_post = solve_post_default(&p, &spec).unwrap();
        assert!(solve_pre_default(&p, &spec, &xi_post, 0.0).is_err());
        assert!(solve_pre_default(&p, &spec, &xi_post, -1.0).is_err());
    }

    #[test]
    fn tiny_gradient_cap_saturates_and_changes_solution() {
        let p = reference_params();
        let spec = GridSpec::with_stride(2.0, 101, 5001, 5.0, 100).unwrap();
        let xi_post = solve_post_default(&p, &spec).unwrap();
        let loose = solve_pre_default(&p, &spec, &xi_post, 1e3).unwrap();
        let tight = solve_pre_default(&p, &spec, &xi_post, 1e-3).unwrap();
        assert!(tight.saturation_fraction > SATURATION_WARN_FRACTION);
        assert!(loose.u.max_abs_diff(&tight.u).unwrap() > 1e-6);
    }
}
