//! Closed forms: γ, the critical restitution, the Mellin transform of the
//! impact velocity, the moment frontier, the tail index η(c), the regime
//! classification and the mixed-wall moment sum.

use std::f64::consts::PI;

use serde::Serialize;

use crate::boundary::BoundarySpec;
use crate::error::{Error, Result};
use crate::stable::StableParams;

/// Relative tolerance under which `c` is considered equal to `c_crit`
/// (or θ to 1).
pub const CRITICAL_REL_TOL: f64 = 1e-5;

const ROOT_TOL: f64 = 1e-10;
const BRACKET_EPS: f64 = 1e-12;

/// `γ = α(1−ρ)/(1+α)`.
pub fn gamma_of(alpha: f64, rho: f64) -> Result<f64> {
    Ok(StableParams::new(alpha, rho)?.gamma())
}

fn c_crit_from_gamma(gamma: f64) -> Result<f64> {
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(Error::domain(format!(
            "gamma must lie in (0, 1), got {gamma}"
        )));
    }
    Ok((-PI / (PI * gamma).tan()).exp())
}

/// `c_crit = exp(−π cot(πγ))`.
pub fn c_crit_of(alpha: f64, rho: f64) -> Result<f64> {
    c_crit_from_gamma(gamma_of(alpha, rho)?)
}

/// `E[|ℓ₁|^{ν−1}] = sin(πγν) / sin(πν(1−γ))`, `+∞` at and beyond the pole
/// `ν = 1/(1−γ)`.
pub fn mellin_ell(alpha: f64, rho: f64, nu: f64) -> Result<f64> {
    let gamma = gamma_of(alpha, rho)?;
    mellin_from_gamma(gamma, nu)
}

pub(crate) fn mellin_from_gamma(gamma: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::domain(format!(
            "Mellin argument must be positive, got {nu}"
        )));
    }
    if nu >= 1.0 / (1.0 - gamma) {
        return Ok(f64::INFINITY);
    }
    if nu == 1.0 {
        return Ok(1.0);
    }
    Ok((PI * gamma * nu).sin() / (PI * nu * (1.0 - gamma)).sin())
}

/// `E[ln|ℓ₁|] = π cot(πγ)`, the derivative of the Mellin transform at ν = 1.
pub fn log_moment_ell(alpha: f64, rho: f64) -> Result<f64> {
    let gamma = gamma_of(alpha, rho)?;
    Ok(PI / (PI * gamma).tan())
}

/// Moment frontier `η = (1−ρ)/(1+αρ)`.
pub fn moment_threshold(alpha: f64, rho: f64) -> f64 {
    (1.0 - rho) / (1.0 + alpha * rho)
}

/// Root of `c^{αη} E[|ℓ₁|^{αη}] = 1` on `(0, η)` for `0 < c < c_crit`.
pub fn eta_c_solve(alpha: f64, rho: f64, c: f64) -> Result<f64> {
    let params = StableParams::new(alpha, rho)?;
    let crit = c_crit_from_gamma(params.gamma())?;
    if !(c > 0.0) {
        return Err(Error::domain(format!(
            "restitution must be positive, got {c}"
        )));
    }
    if c >= crit {
        return Err(Error::domain(format!(
            "no tail root for c = {c} >= c_crit = {crit}"
        )));
    }
    let f = |eta: f64| cramer_function(&params, c, 1.0, eta);
    bisect(f, BRACKET_EPS, params.eta() - BRACKET_EPS, ROOT_TOL)
}

/// `p c^{αλ} E[|ℓ₁|^{αλ}] − 1` via the closed-form Mellin transform.
pub(crate) fn cramer_function(params: &StableParams, c: f64, p: f64, lambda: f64) -> f64 {
    let a = params.alpha();
    let m = mellin_from_gamma(params.gamma(), a * lambda + 1.0).unwrap_or(f64::INFINITY);
    p * (a * lambda * c.ln()).exp() * m - 1.0
}

/// Bisection on a sign-changing bracket.
pub(crate) fn bisect<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo.signum() == fhi.signum() {
        return Err(Error::Numerical(format!(
            "bracket [{lo}, {hi}] does not straddle a root ({flo}, {fhi})"
        )));
    }
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Impacts accumulate: `τ∞ < ∞` a.s.
    Sticky,
    /// `τ∞ = ∞` with linear growth of `ln τ_n`.
    NonSticky,
    /// Boundary case (`c = c_crit` or `θ = 1`): `τ∞ = ∞`, sub-linear growth.
    Critical,
}

/// `{λ > 0 : E[τ∞^λ] < ∞} = (0, upper)`; empty when the regime is not sticky.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentFrontier {
    pub upper: Option<f64>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub c_crit: f64,
    pub predicted_rate: Option<f64>,
    pub moment_frontier: MomentFrontier,
    pub eta_c: Option<f64>,
}

impl RegimeReport {
    pub fn sticky(&self) -> bool {
        self.regime == Regime::Sticky
    }
}

fn near(a: f64, b: f64) -> bool {
    (a - b).abs() <= CRITICAL_REL_TOL * b.abs()
}

/// Predicted disposition of the wall model.
pub fn classify_regime(spec: &BoundarySpec, params: &StableParams) -> RegimeReport {
    let alpha = params.alpha();
    let eta = params.eta();
    let c_crit = c_crit_from_gamma(params.gamma()).expect("gamma in (0,1) for admissible params");
    let none = |what: &str| MomentFrontier {
        upper: None,
        description: format!("tau_inf is infinite ({what}); no positive moment"),
    };

    if spec.p == 1.0 {
        let c = spec.c;
        if near(c, c_crit) {
            return RegimeReport {
                regime: Regime::Critical,
                c_crit,
                predicted_rate: None,
                moment_frontier: none("c = c_crit"),
                eta_c: None,
            };
        }
        if c < c_crit {
            let eta_c = if c > 0.0 {
                eta_c_solve(alpha, params.rho(), c).ok()
            } else {
                None
            };
            // c = 0: absorbed at the first impact, frontier set by tau_1 alone.
            let upper = eta_c.unwrap_or(eta);
            return RegimeReport {
                regime: Regime::Sticky,
                c_crit,
                predicted_rate: None,
                moment_frontier: MomentFrontier {
                    upper: Some(upper),
                    description: format!(
                        "E[tau_inf^lambda] < inf iff lambda < {upper} (c^(alpha lambda) E|l|^(alpha lambda) < 1)"
                    ),
                },
                eta_c,
            };
        }
        let rate = alpha * (PI / (PI * params.gamma()).tan() + c.ln());
        return RegimeReport {
            regime: Regime::NonSticky,
            c_crit,
            predicted_rate: Some(rate),
            moment_frontier: none("c > c_crit"),
            eta_c: None,
        };
    }

    let theta = spec.theta;
    if near(theta, 1.0) {
        return RegimeReport {
            regime: Regime::Critical,
            c_crit,
            predicted_rate: None,
            moment_frontier: none("theta = 1"),
            eta_c: None,
        };
    }
    if theta > 1.0 {
        return RegimeReport {
            regime: Regime::NonSticky,
            c_crit,
            predicted_rate: Some(alpha * theta.ln()),
            moment_frontier: none("theta > 1"),
            eta_c: None,
        };
    }
    let upper = if spec.p == 0.0 || spec.c == 0.0 {
        eta
    } else {
        let f = |l: f64| cramer_function(params, spec.c, spec.p, l);
        bisect(f, BRACKET_EPS, eta - BRACKET_EPS, ROOT_TOL).unwrap_or(eta)
    };
    let description = if spec.p == 0.0 {
        format!("E[tau_inf^lambda] < inf iff lambda < {upper} = (1-rho)/(1+alpha rho)")
    } else {
        format!("E[tau_inf^lambda] < inf iff lambda < {upper} (p c^(alpha lambda) E|l|^(alpha lambda) < 1)")
    };
    RegimeReport {
        regime: Regime::Sticky,
        c_crit,
        predicted_rate: None,
        moment_frontier: MomentFrontier {
            upper: Some(upper),
            description,
        },
        eta_c: None,
    }
}

/// `(e^{m x} − 1)/(e^x − 1)` without cancellation near `x = 0`.
fn geometric_ratio(m: f64, x: f64) -> f64 {
    if x.abs() < 1e-8 {
        // m + m(m−1)x/2 + O(x²)
        return m + 0.5 * m * (m - 1.0) * x;
    }
    (m * x).exp_m1() / x.exp_m1()
}

/// Closed form of `Σ_{k=1}^n E[θ^{αλ g_k} M_{g_k}^{αλ} Π_{i=g_k+1}^k c^{αλ}|ℓ_i|^{αλ}]`
/// for the mixed wall.
///
/// `c_mellin_term = c^{αλ} E[|ℓ₁|^{αλ}]`, `m_u0 = E[U₀^{αλ}]`,
/// `m_m = E[M₁^{αλ}]`; the moments are inputs so the algebra can be checked
/// against arbitrary synthetic laws.
#[allow(clippy::too_many_arguments)]
pub fn sumgn_closed_form(
    n: usize,
    alpha: f64,
    lambda: f64,
    p: f64,
    theta: f64,
    c_mellin_term: f64,
    m_u0: f64,
    m_m: f64,
) -> Result<f64> {
    if n < 1 {
        return Err(Error::domain("n must be at least 1"));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
    }
    if !(theta > 0.0) || theta == 1.0 {
        return Err(Error::domain(format!(
            "theta must be positive and != 1, got {theta}"
        )));
    }
    if !(lambda > 0.0) || !(alpha > 0.0) {
        return Err(Error::domain("alpha and lambda must be positive"));
    }
    let x = alpha * lambda * theta.ln();
    let theta_al = x.exp();
    let mut total = m_u0 * c_mellin_term.powi(n as i32) * p.powi(n as i32 - 1);
    for i in 1..n {
        let weight = c_mellin_term.powi(i as i32) * p.powi(i as i32 - 1);
        let geo = theta_al * geometric_ratio((n - i) as f64, x);
        total += weight * (m_u0 + (1.0 - p) * m_m * geo);
    }
    Ok(total)
}
