//! Strictly α-stable driver in the (α, ρ) parameterization.
//!
//! The characteristic exponent is `Ψ(λ) = −(iλ)^α e^{−iπαρ sgn λ}` on the
//! principal branch, which expands to
//! `−|λ|^α cos(πα(ρ−½)) (1 − i tan(πα(ρ−½)) sgn λ)`. That is the classical
//! S1 law with scale `σ^α = cos(πα(ρ−½))` and skewness `β` solving
//! `β tan(πα/2) = tan(πα(ρ−½))`, and it is sampled exactly with the
//! Chambers–Mallows–Stuck transform.

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

use crate::error::{Error, Result};

const PARAM_EPS: f64 = 1e-12;

/// Immutable description of the driving stable process.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StableParams {
    alpha: f64,
    rho: f64,
    beta_asym: f64,
    gamma: f64,
    sigma_scale: f64,
}

impl StableParams {
    /// Validate `(α, ρ)` and derive the sampling parameterization.
    pub fn new(alpha: f64, rho: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha <= 2.0) {
            return Err(Error::domain(format!(
                "alpha must lie in (0, 2], got {alpha}"
            )));
        }
        if !(rho > 0.0 && rho < 1.0) {
            return Err(Error::domain(format!("rho must lie in (0, 1), got {rho}")));
        }
        if alpha == 2.0 && (rho - 0.5).abs() > PARAM_EPS {
            return Err(Error::domain(format!(
                "alpha = 2 forces rho = 1/2, got {rho}"
            )));
        }
        if (alpha - 1.0).abs() < PARAM_EPS && (rho - 0.5).abs() > PARAM_EPS {
            return Err(Error::Unsupported(format!(
                "asymmetric alpha = 1 (rho = {rho}) has a logarithmic exponent correction"
            )));
        }
        if alpha > 1.0 {
            let (lo, hi) = (1.0 - 1.0 / alpha, 1.0 / alpha);
            if rho < lo - PARAM_EPS || rho > hi + PARAM_EPS {
                return Err(Error::domain(format!(
                    "alpha = {alpha} requires rho in [{lo}, {hi}], got {rho}"
                )));
            }
        }
        let alpha = if (alpha - 1.0).abs() < PARAM_EPS {
            1.0
        } else {
            alpha
        };
        let rho = if alpha == 1.0 || alpha == 2.0 {
            0.5
        } else {
            rho
        };

        let skew_angle = PI * alpha * (rho - 0.5);
        let cos_skew = skew_angle.cos();
        if cos_skew <= 0.0 {
            return Err(Error::domain(format!(
                "Re Psi must be negative; cos(pi alpha (rho - 1/2)) = {cos_skew}"
            )));
        }
        let beta_asym = if alpha == 1.0 || alpha == 2.0 {
            0.0
        } else {
            (skew_angle.tan() / (FRAC_PI_2 * alpha).tan()).clamp(-1.0, 1.0)
        };
        Ok(StableParams {
            alpha,
            rho,
            beta_asym,
            gamma: alpha * (1.0 - rho) / (1.0 + alpha),
            sigma_scale: cos_skew.powf(1.0 / alpha),
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    /// Classical skewness parameter β.
    pub fn beta_asym(&self) -> f64 {
        self.beta_asym
    }

    /// `γ = α(1−ρ)/(1+α)`.
    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Scale σ of the S1 parameterization.
    pub fn sigma_scale(&self) -> f64 {
        self.sigma_scale
    }

    pub fn is_gaussian(&self) -> bool {
        self.alpha == 2.0
    }

    pub fn is_symmetric(&self) -> bool {
        (self.rho - 0.5).abs() < PARAM_EPS
    }

    /// `(1−ρ)/(1+αρ)`: moment frontier of the first passage time.
    pub fn eta(&self) -> f64 {
        (1.0 - self.rho) / (1.0 + self.alpha * self.rho)
    }

    /// Characteristic exponent `Ψ(λ) = ln E[e^{iλL₁}]`.
    pub fn psi(&self, lambda: f64) -> Complex64 {
        if lambda == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let skew_angle = PI * self.alpha * (self.rho - 0.5);
        let modulus = lambda.abs().powf(self.alpha);
        Complex64::new(
            -modulus * skew_angle.cos(),
            modulus * skew_angle.sin() * lambda.signum(),
        )
    }

    /// One draw of `L₁`.
    pub fn sample_unit<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        if self.alpha == 2.0 {
            let z: f64 = StandardNormal.sample(rng);
            return std::f64::consts::SQRT_2 * z;
        }
        // V uniform on (−π/2, π/2), W standard exponential.
        let v = PI * (rng.random::<f64>() - 0.5);
        if self.alpha == 1.0 {
            return v.tan();
        }
        let w: f64 = Exp1.sample(rng);
        let a = self.alpha;
        let shift = PI * (self.rho - 0.5);
        let arg = a * (v + shift);
        arg.sin() / v.cos().powf(1.0 / a) * ((v - arg).cos() / w).powf((1.0 - a) / a)
    }

    /// Increment of the driver over a duration `dt`: `dt^{1/α} L₁` in law.
    pub fn sample_increment<R: Rng + ?Sized>(&self, dt: f64, rng: &mut R) -> f64 {
        if self.alpha == 2.0 {
            let z: f64 = StandardNormal.sample(rng);
            return (2.0 * dt).sqrt() * z;
        }
        dt.powf(1.0 / self.alpha) * self.sample_unit(rng)
    }
}

/// Convenience alias mirroring the parameter map.
pub fn map_params(alpha: f64, rho: f64) -> Result<StableParams> {
    StableParams::new(alpha, rho)
}

/// Largest deviation between the empirical characteristic function of `n`
/// draws of `L₁` and `exp(Ψ(λ))` over the given frequencies.
pub fn verify_characteristic_function<R: Rng + ?Sized>(
    params: &StableParams,
    lambdas: &[f64],
    n: usize,
    rng: &mut R,
) -> Result<f64> {
    if lambdas.is_empty() {
        return Err(Error::domain("no frequencies supplied"));
    }
    if lambdas.iter().any(|l| *l == 0.0 || !l.is_finite()) {
        return Err(Error::domain("frequencies must be finite and nonzero"));
    }
    if n == 0 {
        return Err(Error::domain("sample count must be positive"));
    }
    let mut sums = vec![Complex64::new(0.0, 0.0); lambdas.len()];
    for _ in 0..n {
        let x = params.sample_unit(rng);
        for (s, &l) in sums.iter_mut().zip(lambdas) {
            let (sin, cos) = (l * x).sin_cos();
            *s += Complex64::new(cos, sin);
        }
    }
    Ok(sums
        .iter()
        .zip(lambdas)
        .map(|(s, &l)| (s / n as f64 - params.psi(l).exp()).norm())
        .fold(0.0, f64::max))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats;

    #[test]
    fn gaussian_mapping() {
        let p = StableParams::new(2.0, 0.5).unwrap();
        assert!((p.gamma() - 1.0 / 3.0).abs() < 1e-15);
        assert!((p.sigma_scale() - 1.0).abs() < 1e-15);
        assert!((p.psi(1.0).exp().norm() - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn gamma_direct_evaluations() {
        let p = StableParams::new(1.5, 0.5).unwrap();
        assert!((p.gamma() - 0.3).abs() < 1e-15);
        // below the band 1 − 1/α = 1/3
        assert!(matches!(
            StableParams::new(1.5, 1.0 / 6.0),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn skewness_identity_holds() {
        for &(a, r) in &[(1.5, 0.6), (0.8, 0.7), (0.5, 0.2), (1.2, 0.4)] {
            let p = StableParams::new(a, r).unwrap();
            let lhs = p.beta_asym() * (PI * a / 2.0).tan();
            let rhs = (PI * a * (r - 0.5)).tan();
            assert!((lhs - rhs).abs() < 1e-12, "{a} {r}");
            assert!((p.sigma_scale().powf(a) - (PI * a * (r - 0.5)).cos()).abs() < 1e-12);
        }
    }

    #[test]
    fn real_part_of_exponent_is_negative() {
        let p = StableParams::new(0.8, 0.7).unwrap();
        let expected = -(0.8 * PI * 0.2).cos();
        assert!((p.psi(1.0).re - expected).abs() < 1e-15);
        assert!(p.psi(1.0).re < 0.0);
        for &l in &[-3.0, -0.1, 0.2, 5.0] {
            assert!(p.psi(l).re < 0.0);
        }
    }

    #[test]
    fn rejects_inadmissible_parameters() {
        assert!(matches!(StableParams::new(2.0, 0.4), Err(Error::Domain(_))));
        assert!(matches!(StableParams::new(1.5, 0.1), Err(Error::Domain(_))));
        assert!(matches!(
            StableParams::new(1.0, 0.3),
            Err(Error::Unsupported(_))
        ));
        assert!(matches!(StableParams::new(2.5, 0.5), Err(Error::Domain(_))));
        assert!(matches!(StableParams::new(1.5, 1.0), Err(Error::Domain(_))));
        assert!(StableParams::new(1.5, 1.0 / 1.5).is_ok());
        assert!(StableParams::new(1.0, 0.5).is_ok());
    }

    #[test]
    fn gaussian_moments() {
        let p = StableParams::new(2.0, 0.5).unwrap();
        let mut rng = stream(11, 0);
        let xs: Vec<f64> = (0..1_000_000)
            .map(|_| p.sample_increment(1.0, &mut rng))
            .collect();
        let m = stats::mean(&xs);
        let v = stats::variance(&xs);
        assert!(m.abs() < 0.01, "mean {m}");
        assert!((v / 2.0 - 1.0).abs() < 0.01, "variance {v}");
    }

    #[test]
    fn positivity_frequency_matches_rho() {
        let p = StableParams::new(1.5, 0.6).unwrap();
        let mut rng = stream(12, 0);
        let n = 1_000_000;
        let pos = (0..n).filter(|_| p.sample_unit(&mut rng) >= 0.0).count();
        let freq = pos as f64 / n as f64;
        assert!((freq - 0.6).abs() < 0.005, "freq {freq}");
    }

    #[test]
    fn scaling_in_distribution() {
        for &(a, r, dt) in &[(1.5, 0.6, 0.3), (0.8, 0.7, 5.0), (2.0, 0.5, 0.01)] {
            let p = StableParams::new(a, r).unwrap();
            let mut r1 = stream(13, 0);
            let mut r2 = stream(13, 1);
            let direct: Vec<f64> = (0..100_000)
                .map(|_| p.sample_increment(dt, &mut r1))
                .collect();
            let scaled: Vec<f64> = (0..100_000)
                .map(|_| dt.powf(1.0 / a) * p.sample_increment(1.0, &mut r2))
                .collect();
            let d = stats::ks_distance(&direct, &scaled);
            assert!(d < 0.01, "alpha {a}: ks {d}");
        }
    }

    #[test]
    fn characteristic_function_matches_exponent() {
        let p = StableParams::new(1.5, 0.5).unwrap();
        let mut rng = stream(14, 0);
        let dev = verify_characteristic_function(
            &p,
            &[-2.0, -1.0, -0.5, 0.5, 1.0, 2.0],
            1_000_000,
            &mut rng,
        )
        .unwrap();
        assert!(dev < 5e-3, "deviation {dev}");

        let skewed = StableParams::new(0.8, 0.7).unwrap();
        let dev =
            verify_characteristic_function(&skewed, &[-1.0, 1.0, 2.5], 200_000, &mut rng).unwrap();
        assert!(dev < 1e-2, "deviation {dev}");
        let cauchy = StableParams::new(1.0, 0.5).unwrap();
        let dev = verify_characteristic_function(&cauchy, &[-1.0, 0.7], 200_000, &mut rng).unwrap();
        assert!(dev < 1e-2, "deviation {dev}");
    }

    #[test]
    fn characteristic_check_rejects_empty_frequencies() {
        let p = StableParams::new(1.5, 0.5).unwrap();
        let mut rng = stream(15, 0);
        assert!(matches!(
            verify_characteristic_function(&p, &[], 10_000, &mut rng),
            Err(Error::Domain(_))
        ));
    }
}
