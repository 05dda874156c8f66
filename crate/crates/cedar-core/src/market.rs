//! Market and insurance model: every constant of the problem plus the
//! closed-form scalar functions that the PDE coefficients and the optimal
//! controls are built from.
//!
//! The insurer earns premium at the expected-value-principle rate, cedes the
//! part of each claim above the retention level `a` to a reinsurer, and
//! invests in a risk-free account, a stochastic-volatility stock
//! `dS = S (mu dt + sigma(Z) dW1)` and a defaultable corporate bond with
//! loss rate `zeta` and real-world default intensity `hP`. Utility is
//! exponential, `U(y) = -exp(-alpha y)`.

use std::fmt;
use std::sync::Arc;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Below this distance from the removable singularity of the claim integral
/// the closed form loses all precision and a Taylor expansion is used.
const SINGULARITY_EPS: f64 = 1e-8;

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Volatility function selector: `sigma(z)`.
#[derive(Clone)]
pub enum SigmaKind {
    /// Scott model, `sigma(z) = exp(z)`.
    Scott,
    /// Constant volatility (flattens the factor dependence).
    Const(f64),
    /// User-supplied bounded positive function. Not serializable.
    Custom(ScalarFn),
}

impl SigmaKind {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            SigmaKind::Scott => z.exp(),
            SigmaKind::Const(s) => *s,
            SigmaKind::Custom(f) => f(z),
        }
    }
}

impl fmt::Debug for SigmaKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SigmaKind::Scott => write!(f, "Scott"),
            SigmaKind::Const(s) => write!(f, "Const({s})"),
            SigmaKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// Factor drift selector: `g(z)`.
#[derive(Clone)]
pub enum GKind {
    /// Mean-reverting Ornstein-Uhlenbeck drift `g(z) = rate * (mean - z)`.
    Ou { rate: f64, mean: f64 },
    /// User-supplied Lipschitz bounded function. Not serializable.
    Custom(ScalarFn),
}

impl GKind {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            GKind::Ou { rate, mean } => rate * (mean - z),
            GKind::Custom(f) => f(z),
        }
    }
}

impl fmt::Debug for GKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GKind::Ou { rate, mean } => write!(f, "Ou {{ rate: {rate}, mean: {mean} }}"),
            GKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// All model constants. Immutable after construction; every operation on it
/// is a pure function, safe to share across threads.
#[derive(Debug, Clone)]
pub struct ModelParams {
    /// Risk-free rate (constant).
    pub r: f64,
    /// Stock drift constant.
    pub mu0: f64,
    /// Volatility function.
    pub sigma_kind: SigmaKind,
    /// Factor drift function.
    pub g_kind: GKind,
    /// Factor diffusion coefficient.
    pub beta: f64,
    /// Stock/factor correlation; the model is solved for `rho = 0` only.
    pub rho: f64,
    /// Poisson claim intensity (claims per unit time).
    pub lambda_claims: f64,
    /// Exponential claim-size rate; mean claim is `1/b`.
    pub b: f64,
    /// Insurer safety loading.
    pub eta: f64,
    /// Reinsurer safety loading.
    pub theta: f64,
    /// Absolute risk aversion of `U(y) = -exp(-alpha y)`.
    pub alpha: f64,
    /// Horizon, in time units.
    pub horizon: f64,
    /// Real-world default intensity.
    pub h_p: f64,
    /// Reciprocal of the default risk premium, in `(0, 1]`;
    /// the risk-neutral intensity is `hP / Delta`.
    pub delta_ratio: f64,
    /// Bond loss rate at default, in `(0, 1]`.
    pub zeta: f64,
    /// Credit spread `delta = (hP / Delta) * zeta`; stored because it enters
    /// the bond and wealth drifts directly.
    pub credit_spread: f64,
}

impl ModelParams {
    /// Builds and fully validates a parameter set. The credit spread is
    /// derived as `(hP / Delta) * zeta`.
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        r: f64,
        mu0: f64,
        sigma_kind: SigmaKind,
        g_kind: GKind,
        beta: f64,
        lambda_claims: f64,
        b: f64,
        eta: f64,
        theta: f64,
        alpha: f64,
        horizon: f64,
        h_p: f64,
        delta_ratio: f64,
        zeta: f64,
    ) -> Result<Self> {
        let p = Self::new_unchecked(
            r,
            mu0,
            sigma_kind,
            g_kind,
            beta,
            lambda_claims,
            b,
            eta,
            theta,
            alpha,
            horizon,
            h_p,
            delta_ratio,
            zeta,
        )?;
        p.validate_strict()?;
        Ok(p)
    }

    /// Builds a parameter set checking only the hard numeric requirements
    /// (positivity, ranges, the horizon condition). Skips the economic
    /// inequalities `theta > eta > 0`, `lambda > 0` and `beta != 0`, which
    /// several degenerate test scenarios (pure-ODE mode, no claims) relax.
    #[allow(clippy::too_many_arguments)]
    pub fn new_unchecked(
        r: f64,
        mu0: f64,
        sigma_kind: SigmaKind,
        g_kind: GKind,
        beta: f64,
        lambda_claims: f64,
        b: f64,
        eta: f64,
        theta: f64,
        alpha: f64,
        horizon: f64,
        h_p: f64,
        delta_ratio: f64,
        zeta: f64,
    ) -> Result<Self> {
        let credit_spread = h_p / delta_ratio * zeta;
        let p = ModelParams {
            r,
            mu0,
            sigma_kind,
            g_kind,
            beta,
            rho: 0.0,
            lambda_claims,
            b,
            eta,
            theta,
            alpha,
            horizon,
            h_p,
            delta_ratio,
            zeta,
            credit_spread,
        };
        p.validate_hard()?;
        Ok(p)
    }

    fn validate_hard(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return bad("alpha must be > 0");
        }
        if !self.b.is_finite() || self.b <= 0.0 {
            return bad("b must be > 0");
        }
        if !self.horizon.is_finite() || self.horizon <= 0.0 {
            return bad("T must be > 0");
        }
        if !(self.delta_ratio > 0.0 && self.delta_ratio <= 1.0) {
            return bad("Delta must lie in (0, 1]");
        }
        if !(self.zeta > 0.0 && self.zeta <= 1.0) {
            return bad("zeta must lie in (0, 1]");
        }
        if !self.h_p.is_finite() || self.h_p < 0.0 {
            return bad("hP must be >= 0");
        }
        if self.lambda_claims < 0.0 {
            return bad("lambda must be >= 0");
        }
        if self.r < 0.0 {
            return bad("r must be >= 0");
        }
        // Horizon condition T < ln(b/alpha)/r, stated here in the form that
        // also covers r = 0: every claim integral needs alpha e^{rT} < b.
        if self.alpha * (self.r * self.horizon).exp() >= self.b {
            return bad("horizon condition violated: alpha * exp(r T) must be < b");
        }
        Ok(())
    }

    fn validate_strict(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParams(m.to_string()));
        if !(self.theta > self.eta && self.eta > 0.0) {
            return bad("safety loadings must satisfy theta > eta > 0");
        }
        if self.lambda_claims <= 0.0 {
            return bad("lambda must be > 0");
        }
        if self.beta == 0.0 {
            return bad("beta must be nonzero");
        }
        if self.rho != 0.0 {
            return bad("rho must be 0 (the solved model is uncorrelated)");
        }
        Ok(())
    }

    /// Stock drift `mu(z)` (constant in the Scott setting).
    #[inline]
    pub fn mu(&self, _z: f64) -> f64 {
        self.mu0
    }

    /// Volatility `sigma(z)`.
    #[inline]
    pub fn sigma(&self, z: f64) -> f64 {
        self.sigma_kind.eval(z)
    }

    /// Factor drift `g(z)`.
    #[inline]
    pub fn g(&self, z: f64) -> f64 {
        self.g_kind.eval(z)
    }

    /// Mean claim size `1/b`.
    #[inline]
    pub fn mean_claim(&self) -> f64 {
        1.0 / self.b
    }

    /// Discount factor `exp(-r (T - t))`.
    #[inline]
    pub fn discount(&self, t: f64) -> f64 {
        (-self.r * (self.horizon - t)).exp()
    }

    /// Risk-neutral default intensity `hP / Delta`.
    #[inline]
    pub fn h_q(&self) -> f64 {
        self.h_p / self.delta_ratio
    }

    /// Continuous bond drift coefficient as it appears in the wealth
    /// dynamics once the default-martingale compensator is expanded:
    /// `delta (1 - Delta) + zeta hP`. Algebraically equal to the credit
    /// spread `delta` itself.
    #[inline]
    pub fn effective_bond_drift(&self) -> f64 {
        self.credit_spread * (1.0 - self.delta_ratio) + self.zeta * self.h_p
    }
}

/// Claim-size survival function `Fbar(x) = exp(-b x)`.
pub fn survival(params: &ModelParams, x: f64) -> Result<f64> {
    if !(x >= 0.0) {
        return Err(Error::Domain {
            op: "survival",
            msg: format!("claim size must be >= 0, got {x}"),
        });
    }
    Ok((-params.b * x).exp())
}

/// Net premium rate under the expected-value principle with excess-of-loss
/// retention `a`:
///
/// `c(a) = (eta - theta) lambda / b + (1 + theta) lambda (1 - exp(-b a)) / b`.
///
/// Strictly increasing in `a`, with limit `(1 + eta) lambda / b`.
pub fn premium_rate(params: &ModelParams, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::Domain {
            op: "premium_rate",
            msg: format!("retention must be >= 0, got {a}"),
        });
    }
    let mu_inf = params.mean_claim();
    let partial = (1.0 - (-params.b * a).exp()) / params.b;
    Ok((params.eta - params.theta) * params.lambda_claims * mu_inf
        + (1.0 + params.theta) * params.lambda_claims * partial)
}

/// Exponentially weighted claim integral
/// `psi(t, a) = int_0^a exp(q x) Fbar(x) dx` with `q = alpha exp(r (T - t))`.
///
/// Closed form `(1 - exp(-(b - q) a)) / (b - q)`; near the removable
/// singularity `b = q` a three-term Taylor expansion is used instead.
pub fn claim_exp_integral(params: &ModelParams, t: f64, a: f64) -> Result<f64> {
    if !(a >= 0.0) {
        return Err(Error::Domain {
            op: "claim_exp_integral",
            msg: format!("retention must be >= 0, got {a}"),
        });
    }
    let q = params.alpha * (params.r * (params.horizon - t)).exp();
    let eps = params.b - q;
    if eps <= 0.0 && eps.abs() >= SINGULARITY_EPS {
        return Err(Error::Domain {
            op: "claim_exp_integral",
            msg: format!(
                "q = alpha exp(r(T-t)) = {q} >= b = {}: horizon condition violated",
                params.b
            ),
        });
    }
    if eps.abs() < SINGULARITY_EPS {
        // (1 - exp(-eps a)) / eps = a (1 - eps a / 2 + (eps a)^2 / 6 + ...)
        let ea = eps * a;
        return Ok(a * (1.0 - ea / 2.0 + ea * ea / 6.0));
    }
    Ok((1.0 - (-eps * a).exp()) / eps)
}

/// Optimal excess-of-loss retention `a*(t) = ln(1 + theta) exp(-r (T - t)) / alpha`.
pub fn optimal_retention(params: &ModelParams, t: f64) -> f64 {
    (1.0 + params.theta).ln() / params.alpha * params.discount(t)
}

/// Optimal stock position
/// `l*(t, z) = (mu(z) - r) exp(-r (T - t)) / (alpha sigma^2(z))`.
///
/// The same expression is optimal before and after default.
pub fn optimal_stock(params: &ModelParams, t: f64, z: f64) -> Result<f64> {
    let s = params.sigma(z);
    if s == 0.0 {
        return Err(Error::Domain {
            op: "optimal_stock",
            msg: format!("sigma(z) = 0 at z = {z}"),
        });
    }
    Ok((params.mu(z) - params.r) / (params.alpha * s * s) * params.discount(t))
}

/// Optimal pre-default bond position
/// `m*(t, z) = (ln xi_pre - ln xi_post + ln(1/Delta)) exp(-r (T - t)) / (alpha zeta)`.
///
/// Post-default the bond is not traded and `m* = 0`.
pub fn optimal_bond(params: &ModelParams, t: f64, xi_pre: f64, xi_post: f64) -> Result<f64> {
    if !(xi_pre > 0.0) || !(xi_post > 0.0) {
        return Err(Error::Domain {
            op: "optimal_bond",
            msg: format!("field values must be > 0, got xi_pre={xi_pre}, xi_post={xi_post}"),
        });
    }
    let num = xi_pre.ln() - xi_post.ln() + (1.0 / params.delta_ratio).ln();
    Ok(num / (params.alpha * params.zeta) * params.discount(t))
}

/// Lower and upper envelopes of the optimal bond position at time `t`:
/// `[(1 - Delta), ln(1/Delta)] * exp(-r (T - t)) / (alpha zeta)`.
pub fn bond_bounds(params: &ModelParams, t: f64) -> (f64, f64) {
    let scale = params.discount(t) / (params.alpha * params.zeta);
    (
        (1.0 - params.delta_ratio) * scale,
        (1.0 / params.delta_ratio).ln() * scale,
    )
}

/// Zeroth-order (killing) coefficient of the post-default field equation,
/// `h(t, z) = h1(t) - h2(t) + h3(z)` with
///
/// * `h1 = c(a*(t)) alpha exp(r (T - t))` (premium part at the optimal retention),
/// * `h2 = lambda alpha exp(r (T - t)) psi(t, a*(t))` (claim part),
/// * `h3 = (mu(z) - r)^2 / (2 sigma^2(z))` (market-price-of-risk part, >= 0).
pub fn potential(params: &ModelParams, t: f64, z: f64) -> Result<f64> {
    Ok(potential_t_part(params, t)? + potential_z_part(params, z))
}

/// Time-dependent part `h1(t) - h2(t)` of the killing coefficient.
pub fn potential_t_part(params: &ModelParams, t: f64) -> Result<f64> {
    let a = optimal_retention(params, t);
    let growth = params.alpha * (params.r * (params.horizon - t)).exp();
    let h1 = premium_rate(params, a)? * growth;
    let h2 = params.lambda_claims * growth * claim_exp_integral(params, t, a)?;
    Ok(h1 - h2)
}

/// Space-dependent part `h3(z) = (mu(z) - r)^2 / (2 sigma^2(z))`.
pub fn potential_z_part(params: &ModelParams, z: f64) -> f64 {
    let s = params.sigma(z);
    let excess = params.mu(z) - params.r;
    excess * excess / (2.0 * s * s)
}

/// Constants induced by the default risk premium.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DefaultTerms {
    /// Nonnegative constant `(1 - 1/Delta + ln(1/Delta)/Delta) hP` that
    /// shifts the pre-default killing coefficient; zero when `Delta = 1`.
    pub adjustment: f64,
    /// Risk-neutral default intensity `hP / Delta`.
    pub risk_neutral_intensity: f64,
}

/// Computes the default-risk constants entering the pre-default equation.
pub fn default_terms(params: &ModelParams) -> DefaultTerms {
    let inv = 1.0 / params.delta_ratio;
    DefaultTerms {
        adjustment: (1.0 - inv + inv * inv.ln()) * params.h_p,
        risk_neutral_intensity: params.h_q(),
    }
}

// ---------------------------------------------------------------------------
// JSON form. Field names are part of the on-disk contract; unknown keys are
// rejected. Custom coefficient functions cannot be serialized.
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum SigmaKindRepr {
    Scott,
    Const(f64),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum GKindRepr {
    Ou { rate: f64, mean: f64 },
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelParamsRepr {
    r: f64,
    mu0: f64,
    sigma_kind: SigmaKindRepr,
    g_kind: GKindRepr,
    beta: f64,
    rho: f64,
    lambda_claims: f64,
    b: f64,
    eta: f64,
    theta: f64,
    alpha: f64,
    #[serde(rename = "T")]
    horizon: f64,
    #[serde(rename = "hP")]
    h_p: f64,
    #[serde(rename = "Delta")]
    delta_ratio: f64,
    zeta: f64,
    #[serde(rename = "creditSpread")]
    credit_spread: f64,
}

impl Serialize for ModelParams {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let sigma_kind = match &self.sigma_kind {
            SigmaKind::Scott => SigmaKindRepr::Scott,
            SigmaKind::Const(s) => SigmaKindRepr::Const(*s),
            SigmaKind::Custom(_) => {
                return Err(serde::ser::Error::custom(
                    "custom volatility functions are not serializable",
                ))
            }
        };
        let g_kind = match &self.g_kind {
            GKind::Ou { rate, mean } => GKindRepr::Ou {
                rate: *rate,
                mean: *mean,
            },
            GKind::Custom(_) => {
                return Err(serde::ser::Error::custom(
                    "custom factor drift functions are not serializable",
                ))
            }
        };
        ModelParamsRepr {
            r: self.r,
            mu0: self.mu0,
            sigma_kind,
            g_kind,
            beta: self.beta,
            rho: self.rho,
            lambda_claims: self.lambda_claims,
            b: self.b,
            eta: self.eta,
            theta: self.theta,
            alpha: self.alpha,
            horizon: self.horizon,
            h_p: self.h_p,
            delta_ratio: self.delta_ratio,
            zeta: self.zeta,
            credit_spread: self.credit_spread,
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ModelParams {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let repr = ModelParamsRepr::deserialize(deserializer)?;
        if repr.rho != 0.0 {
            return Err(D::Error::custom("rho must be 0"));
        }
        let sigma_kind = match repr.sigma_kind {
            SigmaKindRepr::Scott => SigmaKind::Scott,
            SigmaKindRepr::Const(s) => SigmaKind::Const(s),
        };
        let g_kind = match repr.g_kind {
            GKindRepr::Ou { rate, mean } => GKind::Ou { rate, mean },
        };
        let p = ModelParams::new(
            repr.r,
            repr.mu0,
            sigma_kind,
            g_kind,
            repr.beta,
            repr.lambda_claims,
            repr.b,
            repr.eta,
            repr.theta,
            repr.alpha,
            repr.horizon,
            repr.h_p,
            repr.delta_ratio,
            repr.zeta,
        )
        .map_err(D::Error::custom)?;
        if repr.credit_spread != p.credit_spread {
            return Err(D::Error::custom(format!(
                "creditSpread must equal (hP/Delta)*zeta = {} exactly, got {}",
                p.credit_spread, repr.credit_spread
            )));
        }
        Ok(p)
    }
}

/// The parameter set of the reference configuration used throughout the
/// tests: Scott volatility, OU factor with rate 0.1 and mean 1, exponential
/// claims with rate 2.
pub fn reference_params() -> ModelParams {
    ModelParams::new(
        0.04,
        0.3,
        SigmaKind::Scott,
        GKind::Ou {
            rate: 0.1,
            mean: 1.0,
        },
        0.3,
        3.0,
        2.0,
        7.0 / 3.0,
        8.0 / 3.0,
        0.02,
        5.0,
        0.25,
        0.25,
        0.4,
    )
    .expect("reference parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    /// Plain trapezoid rule, the independent oracle for the closed forms.
    fn trapezoid<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, n: usize) -> f64 {
        let h = (hi - lo) / n as f64;
        let mut acc = 0.5 * (f(lo) + f(hi));
        for k in 1..n {
            acc += f(lo + k as f64 * h);
        }
        acc * h
    }

    /// Composite Simpson rule for the longer integration ranges where the
    /// trapezoid rule cannot reach the asserted accuracy.
    fn simpson<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, half_panels: usize) -> f64 {
        let n = 2 * half_panels;
        let h = (hi - lo) / n as f64;
        let mut acc = f(lo) + f(hi);
        for k in 1..n {
            let w = if k % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(lo + k as f64 * h);
        }
        acc * h / 3.0
    }

    fn degenerate(theta: f64, eta: f64, lambda: f64) -> ModelParams {
        ModelParams::new_unchecked(
            0.04,
            0.3,
            SigmaKind::Scott,
            GKind::Ou {
                rate: 0.1,
                mean: 1.0,
            },
            0.3,
            lambda,
            2.0,
            eta,
            theta,
            0.02,
            5.0,
            0.25,
            0.25,
            0.4,
        )
        .unwrap()
    }

    #[test]
    fn survival_values() {
        let p = reference_params();
        assert_eq!(survival(&p, 0.0).unwrap(), 1.0);
        assert_relative_eq!(
            survival(&p, 0.5).unwrap(),
            0.36787944117144233,
            max_relative = 1e-15
        );
        // monotone decreasing to 0
        let mut prev = 1.0;
        for k in 1..=40 {
            let s = survival(&p, k as f64).unwrap();
            assert!(s < prev);
            prev = s;
        }
        assert!(prev < 1e-30);
        assert!(survival(&p, -0.1).is_err());
    }

    #[test]
    fn premium_rate_reference_values() {
        let p = reference_params();
        assert_relative_eq!(premium_rate(&p, 0.0).unwrap(), -0.5, max_relative = 1e-15);
        // a -> infinity limit (1 + eta) lambda / b = 5
        assert_relative_eq!(
            premium_rate(&p, 100.0 / p.b).unwrap(),
            5.0,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            premium_rate(&p, 10.0 / p.b).unwrap(),
            4.999750300386307,
            max_relative = 1e-14
        );
        assert!(premium_rate(&p, -1.0).is_err());
    }

    #[test]
    fn premium_rate_monotone_and_bounded() {
        let p = reference_params();
        let cap = (1.0 + p.eta) * p.lambda_claims * p.mean_claim();
        let mut prev = premium_rate(&p, 0.0).unwrap();
        for k in 1..=200 {
            let c = premium_rate(&p, k as f64 * 0.05).unwrap();
            assert!(c >= prev);
            assert!(c <= cap + 1e-12);
            prev = c;
        }
    }

    #[test]
    fn premium_rate_equal_loadings() {
        let p = degenerate(1.0, 1.0, 3.0);
        assert_eq!(premium_rate(&p, 0.0).unwrap(), 0.0);
    }

    #[test]
    fn premium_rate_matches_quadrature() {
        let p = reference_params();
        for &a in &[0.1, 0.7, 2.3] {
            let quad = (p.eta - p.theta) * p.lambda_claims * p.mean_claim()
                + (1.0 + p.theta)
                    * p.lambda_claims
                    * simpson(|x| (-p.b * x).exp(), 0.0, a, 10_000);
            assert_relative_eq!(premium_rate(&p, a).unwrap(), quad, max_relative = 1e-12);
        }
    }

    #[test]
    fn claim_exp_integral_closed_form() {
        // q = alpha e^{r(T-t)} = 1 at r = 0, alpha = 1; b = 2.
        let p = ModelParams::new_unchecked(
            0.0,
            0.3,
            SigmaKind::Scott,
            GKind::Ou {
                rate: 0.1,
                mean: 1.0,
            },
            0.3,
            3.0,
            2.0,
            7.0 / 3.0,
            8.0 / 3.0,
            1.0,
            5.0,
            0.25,
            0.25,
            0.4,
        )
        .unwrap();
        assert_eq!(claim_exp_integral(&p, 0.0, 0.0).unwrap(), 0.0);
        let a = std::f64::consts::LN_2;
        let v = claim_exp_integral(&p, 0.0, a).unwrap();
        assert_relative_eq!(v, 0.5, max_relative = 1e-14);
        // independent quadrature of exp(q x) exp(-b x)
        let quad = trapezoid(|x| (x).exp() * (-2.0 * x).exp(), 0.0, a, 10_000);
        assert_relative_eq!(v, quad, max_relative = 1e-8);
    }

    #[test]
    fn claim_exp_integral_removable_singularity() {
        // b = q exactly: integrand is 1, integral is a.
        let p = ModelParams::new_unchecked(
            0.0,
            0.3,
            SigmaKind::Scott,
            GKind::Ou {
                rate: 0.1,
                mean: 1.0,
            },
            0.3,
            3.0,
            2.0 + 1e-12,
            7.0 / 3.0,
            8.0 / 3.0,
            2.0,
            5.0,
            0.25,
            0.25,
            0.4,
        )
        .unwrap();
        assert_abs_diff_eq!(claim_exp_integral(&p, 0.0, 1.0).unwrap(), 1.0, epsilon = 1e-11);
    }

    #[test]
    fn claim_exp_integral_rejects_violated_horizon() {
        let p = degenerate(8.0 / 3.0, 7.0 / 3.0, 3.0);
        // t far below 0 pushes q = alpha e^{r(T-t)} above b
        assert!(claim_exp_integral(&p, -200.0, 1.0).is_err());
    }

    #[test]
    fn claim_exp_integral_quadrature_sweep() {
        // 20 seeded (t, a) pairs against the trapezoid oracle at 1e4 points.
        let p = ModelParams::new_unchecked(
            0.1,
            0.3,
            SigmaKind::Scott,
            GKind::Ou {
                rate: 0.1,
                mean: 1.0,
            },
            0.3,
            3.0,
            2.0,
            7.0 / 3.0,
            8.0 / 3.0,
            0.5,
            2.0,
            0.25,
            0.25,
            0.4,
        )
        .unwrap();
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(7);
        for _ in 0..20 {
            let t = rng.gen_range(0.0..p.horizon);
            let a = rng.gen_range(0.05..1.0);
            let q = p.alpha * (p.r * (p.horizon - t)).exp();
            let quad = trapezoid(|x| (q * x).exp() * (-p.b * x).exp(), 0.0, a, 10_000);
            assert_relative_eq!(
                claim_exp_integral(&p, t, a).unwrap(),
                quad,
                max_relative = 1e-8
            );
        }
    }

    #[test]
    fn optimal_retention_reference_values() {
        let p = reference_params();
        assert_relative_eq!(
            optimal_retention(&p, p.horizon),
            64.96414920651304,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            optimal_retention(&p, 0.0),
            53.1881468029188,
            max_relative = 1e-14
        );
        // theta = 0 retains nothing
        let p0 = degenerate(0.0, 0.0, 3.0);
        assert_eq!(optimal_retention(&p0, 0.0), 0.0);
        assert_eq!(optimal_retention(&p0, p0.horizon), 0.0);
    }

    #[test]
    fn optimal_stock_reference_values() {
        let p = reference_params();
        assert_relative_eq!(
            optimal_stock(&p, p.horizon, 0.0).unwrap(),
            13.0,
            max_relative = 1e-14
        );
        assert_relative_eq!(
            optimal_stock(&p, p.horizon, 1.0).unwrap(),
            1.759358682075965,
            max_relative = 1e-14
        );
        // zero excess return
        let mut pz = p.clone();
        pz.mu0 = pz.r;
        assert_eq!(optimal_stock(&pz, 0.0, 0.7).unwrap(), 0.0);
        // sigma = 0 rejected
        let mut ps = p;
        ps.sigma_kind = SigmaKind::Const(0.0);
        assert!(optimal_stock(&ps, 0.0, 0.0).is_err());
    }

    #[test]
    fn optimal_bond_reference_values() {
        // coincident fields at Delta = 1 mean no bond position
        let p1 = ModelParams::new_unchecked(
            0.04,
            0.3,
            SigmaKind::Scott,
            GKind::Ou {
                rate: 0.1,
                mean: 1.0,
            },
            0.3,
            3.0,
            2.0,
            7.0 / 3.0,
            8.0 / 3.0,
            0.02,
            5.0,
            0.25,
            1.0,
            0.4,
        )
        .unwrap();
        assert_eq!(optimal_bond(&p1, 1.0, 0.8, 0.8).unwrap(), 0.0);

        // coincident-field regime with alpha = 0.5, zeta = 0.4, Delta = 0.25
        let p3 = ModelParams::new_unchecked(
            0.04,
            0.3,
            SigmaKind::Scott,
            GKind::Ou {
                rate: 0.1,
                mean: 1.0,
            },
            0.3,
            3.0,
            2.0,
            7.0 / 3.0,
            8.0 / 3.0,
            0.5,
            5.0,
            0.25,
            0.25,
            0.4,
        )
        .unwrap();
        assert_relative_eq!(
            optimal_bond(&p3, p3.horizon, 0.8, 0.8).unwrap(),
            6.931471805599453,
            max_relative = 1e-14
        );

        let p = reference_params();
        let (lo, up) = bond_bounds(&p, p.horizon);
        assert_relative_eq!(lo, 93.75, max_relative = 1e-14);
        assert_relative_eq!(up, 173.28679513998634, max_relative = 1e-14);
        assert!(optimal_bond(&p, 0.0, 0.0, 1.0).is_err());
        assert!(optimal_bond(&p, 0.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn discount_scaling_law() {
        // a*, l*, m* all scale as exp(-r (T - t)).
        let p = reference_params();
        for &t in &[0.0, 1.3, 2.5, 4.9] {
            let s = p.discount(t);
            assert_relative_eq!(
                optimal_retention(&p, t),
                optimal_retention(&p, p.horizon) * s,
                max_relative = 1e-14
            );
            assert_relative_eq!(
                optimal_stock(&p, t, 0.4).unwrap(),
                optimal_stock(&p, p.horizon, 0.4).unwrap() * s,
                max_relative = 1e-14
            );
            assert_relative_eq!(
                optimal_bond(&p, t, 0.7, 0.9).unwrap(),
                optimal_bond(&p, p.horizon, 0.7, 0.9).unwrap() * s,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn retention_scales_inversely_with_alpha() {
        let p = reference_params();
        for &scale in &[0.5, 2.0, 10.0] {
            let mut p2 = p.clone();
            p2.alpha = p.alpha * scale;
            assert_relative_eq!(
                optimal_retention(&p2, 1.0) * p2.alpha,
                optimal_retention(&p, 1.0) * p.alpha,
                max_relative = 1e-14
            );
        }
    }

    #[test]
    fn potential_reference_values() {
        let p = reference_params();
        let t = p.horizon;
        // components at (T, 0), cross-checked by quadrature of psi
        let a = optimal_retention(&p, t);
        let psi_quad = simpson(
            |x| (p.alpha * x).exp() * (-p.b * x).exp(),
            0.0,
            a,
            200_000,
        );
        let h2 = p.lambda_claims * p.alpha * psi_quad;
        assert_relative_eq!(h2, 0.030303030303030304, max_relative = 1e-8);
        assert_relative_eq!(
            potential(&p, t, 0.0).unwrap(),
            0.1034969696969697,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            potential(&p, 0.0, 0.0).unwrap(),
            0.11884511171372242,
            max_relative = 1e-12
        );
    }

    #[test]
    fn potential_degenerate_cases() {
        // mu = r and lambda = 0 make every term vanish
        let mut p = degenerate(8.0 / 3.0, 7.0 / 3.0, 0.0);
        p.mu0 = p.r;
        assert_eq!(potential(&p, 2.0, 0.3).unwrap(), 0.0);
        // lambda = 0 reduces to h3 exactly
        let p = degenerate(8.0 / 3.0, 7.0 / 3.0, 0.0);
        for &(t, z) in &[(0.0, -1.0), (2.5, 0.0), (5.0, 1.7)] {
            assert_eq!(
                potential(&p, t, z).unwrap(),
                potential_z_part(&p, z),
                "t={t} z={z}"
            );
        }
    }

    #[test]
    fn potential_lower_bound() {
        // h >= (eta - theta) lambda mu_inf alpha e^{r(T-t)} - h2, term by term.
        let p = reference_params();
        for k in 0..=20 {
            let t = p.horizon * k as f64 / 20.0;
            let growth = p.alpha * (p.r * (p.horizon - t)).exp();
            let a = optimal_retention(&p, t);
            let h2 = p.lambda_claims * growth * claim_exp_integral(&p, t, a).unwrap();
            let floor =
                (p.eta - p.theta) * p.lambda_claims * p.mean_claim() * growth - h2;
            for j in 0..=8 {
                let z = -2.0 + 0.5 * j as f64;
                assert!(potential(&p, t, z).unwrap() >= floor - 1e-12);
            }
        }
    }

    #[test]
    fn default_terms_values() {
        let p = reference_params();
        let dt = default_terms(&p);
        assert_relative_eq!(dt.adjustment, 0.6362943611198906, max_relative = 1e-15);
        assert_eq!(dt.risk_neutral_intensity, 1.0);

        let mut p1 = p.clone();
        p1.delta_ratio = 1.0;
        assert_eq!(default_terms(&p1).adjustment, 0.0);

        let mut p0 = p;
        p0.h_p = 0.0;
        let d0 = default_terms(&p0);
        assert_eq!(d0.adjustment, 0.0);
        assert_eq!(d0.risk_neutral_intensity, 0.0);
    }

    #[test]
    fn effective_bond_drift_equals_credit_spread() {
        let p = reference_params();
        assert_relative_eq!(
            p.effective_bond_drift(),
            p.credit_spread,
            max_relative = 1e-15
        );
    }

    #[test]
    fn validation_rejects_bad_params() {
        let ok = reference_params();
        let mk = |f: &dyn Fn(&mut ModelParams)| {
            let mut p = ok.clone();
            f(&mut p);
            ModelParams::new(
                p.r,
                p.mu0,
                p.sigma_kind.clone(),
                p.g_kind.clone(),
                p.beta,
                p.lambda_claims,
                p.b,
                p.eta,
                p.theta,
                p.alpha,
                p.horizon,
                p.h_p,
                p.delta_ratio,
                p.zeta,
            )
        };
        assert!(mk(&|p| p.theta = p.eta).is_err());
        assert!(mk(&|p| p.eta = 0.0).is_err());
        assert!(mk(&|p| p.alpha = 0.0).is_err());
        assert!(mk(&|p| p.b = -2.0).is_err());
        assert!(mk(&|p| p.lambda_claims = 0.0).is_err());
        assert!(mk(&|p| p.beta = 0.0).is_err());
        assert!(mk(&|p| p.delta_ratio = 0.0).is_err());
        assert!(mk(&|p| p.delta_ratio = 1.5).is_err());
        assert!(mk(&|p| p.zeta = 0.0).is_err());
        assert!(mk(&|p| p.h_p = -0.1).is_err());
        // horizon condition: T too long for alpha e^{rT} < b
        assert!(mk(&|p| p.horizon = 120.0).is_err());
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            // the default-risk adjustment is nonnegative on all of (0, 1]
            #[test]
            fn adjustment_nonnegative(delta in 1e-6f64..=1.0) {
                let mut p = reference_params();
                p.delta_ratio = delta;
                prop_assert!(default_terms(&p).adjustment >= 0.0);
            }

            // lower bond envelope never exceeds the upper one
            #[test]
            fn bond_envelopes_ordered(delta in 1e-6f64..=1.0, t in 0.0f64..=5.0) {
                let mut p = reference_params();
                p.delta_ratio = delta;
                let (lo, hi) = bond_bounds(&p, t);
                prop_assert!(lo <= hi, "lo {lo} hi {hi}");
            }

            // premium is nondecreasing in the retention level
            #[test]
            fn premium_nondecreasing(a in 0.0f64..10.0, da in 0.0f64..5.0) {
                let p = reference_params();
                let c1 = premium_rate(&p, a).unwrap();
                let c2 = premium_rate(&p, a + da).unwrap();
                prop_assert!(c2 >= c1 - 1e-12);
            }
        }
    }

    #[test]
    fn json_round_trip_and_unknown_keys() {
        let p = reference_params();
        let s = serde_json::to_string(&p).unwrap();
        let q: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(p.r, q.r);
        assert_eq!(p.credit_spread, q.credit_spread);
        assert_eq!(p.horizon, q.horizon);

        let with_unknown = s.replace("\"r\":", "\"bogus\":1,\"r\":");
        assert!(serde_json::from_str::<ModelParams>(&with_unknown).is_err());

        let bad_spread = s.replace(
            &format!("\"creditSpread\":{}", p.credit_spread),
            "\"creditSpread\":0.7",
        );
        assert!(serde_json::from_str::<ModelParams>(&bad_spread).is_err());

        // custom functions refuse to serialize
        let mut pc = reference_params();
        pc.sigma_kind = SigmaKind::Custom(Arc::new(|z: f64| 1.0 + z * z));
        assert!(serde_json::to_string(&pc).is_err());
    }
}
