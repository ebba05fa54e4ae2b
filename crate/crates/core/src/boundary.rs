//! Wall parameters and the laws of the diffusive and initial speeds.

use rand::Rng;

use crate::error::{Error, Result};

/// Law of a positive speed (diffusive re-emission `M_n` or initial `U₀`).
#[derive(Debug, Clone, PartialEq)]
pub enum SpeedLaw {
    /// Density `(v/Θ) e^{−v²/(2Θ)}` on `v ≥ 0`: a thermal wall at temperature Θ.
    Maxwellian {
        temperature: f64,
    },
    PointMass(f64),
    /// Uniform draw from a finite table of positive values.
    Table(Vec<f64>),
}

impl SpeedLaw {
    pub fn maxwellian(temperature: f64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::domain(format!(
                "Maxwellian temperature must be positive, got {temperature}"
            )));
        }
        Ok(SpeedLaw::Maxwellian { temperature })
    }

    fn validate(&self) -> Result<()> {
        match self {
            SpeedLaw::Maxwellian { temperature } => {
                SpeedLaw::maxwellian(*temperature)?;
            }
            SpeedLaw::PointMass(v) => {
                if !(*v > 0.0 && v.is_finite()) {
                    return Err(Error::domain(
                        "point-mass speed must be positive (P(M = 0) = 0)",
                    ));
                }
            }
            SpeedLaw::Table(vs) => {
                if vs.is_empty() || vs.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
                    return Err(Error::domain(
                        "speed table must be non-empty with positive entries",
                    ));
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            SpeedLaw::Maxwellian { temperature } => sample_maxwellian_unchecked(*temperature, rng),
            SpeedLaw::PointMass(v) => *v,
            SpeedLaw::Table(vs) => vs[rng.random_range(0..vs.len())],
        }
    }

    /// `P(M ≤ v)`.
    pub fn cdf(&self, v: f64) -> f64 {
        if v <= 0.0 {
            return 0.0;
        }
        match self {
            SpeedLaw::Maxwellian { temperature } => -(-v * v / (2.0 * temperature)).exp_m1(),
            SpeedLaw::PointMass(m) => {
                if v >= *m {
                    1.0
                } else {
                    0.0
                }
            }
            SpeedLaw::Table(vs) => vs.iter().filter(|x| **x <= v).count() as f64 / vs.len() as f64,
        }
    }

    /// `E[M^s]`, exact for the built-in laws.
    pub fn moment(&self, s: f64) -> f64 {
        match self {
            // Rayleigh with scale √Θ: E[M^s] = (2Θ)^{s/2} Γ(1 + s/2)
            SpeedLaw::Maxwellian { temperature } => {
                (2.0 * temperature).powf(s / 2.0) * gamma_fn(1.0 + s / 2.0)
            }
            SpeedLaw::PointMass(m) => m.powf(s),
            SpeedLaw::Table(vs) => vs.iter().map(|v| v.powf(s)).sum::<f64>() / vs.len() as f64,
        }
    }
}

/// Lanczos approximation (g = 7, n = 9), accurate to ~1e-15 for x > 0.
fn gamma_fn(x: f64) -> f64 {
    const G: f64 = 7.0;
    const COEF: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return std::f64::consts::PI / ((std::f64::consts::PI * x).sin() * gamma_fn(1.0 - x));
    }
    let x = x - 1.0;
    let mut a = COEF[0];
    let t = x + G + 0.5;
    for (i, c) in COEF.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    (2.0 * std::f64::consts::PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * a
}

/// Exact inverse-transform draw from the Maxwellian wall law.
pub fn sample_maxwellian<R: Rng + ?Sized>(temperature: f64, rng: &mut R) -> Result<f64> {
    SpeedLaw::maxwellian(temperature)?;
    Ok(sample_maxwellian_unchecked(temperature, rng))
}

fn sample_maxwellian_unchecked<R: Rng + ?Sized>(temperature: f64, rng: &mut R) -> f64 {
    // 1 − U lies in (0, 1], so the log is finite and the draw is never 0
    let u: f64 = 1.0 - rng.random::<f64>();
    (-2.0 * temperature * u.ln()).sqrt().max(f64::MIN_POSITIVE)
}

/// `m(u) = e^{−u²/(2Θ)}/Θ`, so that `P(M ∈ du) = u m(u) du`.
pub fn maxwellian_m(temperature: f64, u: f64) -> f64 {
    (-u * u / (2.0 * temperature)).exp() / temperature
}

/// Wall interaction: elastic with probability `p` (restitution `c`),
/// otherwise diffusive with speed `θⁿ M_n`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySpec {
    pub p: f64,
    pub c: f64,
    pub theta: f64,
    pub m_law: SpeedLaw,
    pub u0_law: SpeedLaw,
}

impl BoundarySpec {
    pub fn new(p: f64, c: f64, theta: f64, m_law: SpeedLaw, u0_law: SpeedLaw) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::domain(format!("p must lie in [0, 1], got {p}")));
        }
        if !(c >= 0.0 && c.is_finite()) {
            return Err(Error::domain(format!(
                "c must be a nonnegative real, got {c}"
            )));
        }
        if !(theta > 0.0 && theta.is_finite()) {
            return Err(Error::domain(format!(
                "theta must be positive, got {theta}"
            )));
        }
        m_law.validate()?;
        u0_law.validate()?;
        Ok(BoundarySpec {
            p,
            c,
            theta,
            m_law,
            u0_law,
        })
    }

    /// Pure elastic wall started at `U₀ = 1`.
    pub fn elastic(c: f64) -> Result<Self> {
        BoundarySpec::new(
            1.0,
            c,
            1.0,
            SpeedLaw::maxwellian(1.0)?,
            SpeedLaw::PointMass(1.0),
        )
    }

    /// Pure diffusive wall with Maxwellian re-emission at temperature Θ = 1.
    pub fn diffusive(theta: f64) -> Result<Self> {
        BoundarySpec::new(
            0.0,
            0.0,
            theta,
            SpeedLaw::maxwellian(1.0)?,
            SpeedLaw::PointMass(1.0),
        )
    }

    /// Restart speed after impact `n` with pre-impact velocity `u_pre ≤ 0`.
    pub fn restart_velocity(&self, n: usize, u_pre: f64, elastic: bool, m: f64) -> f64 {
        if elastic {
            self.c * u_pre.abs()
        } else {
            self.theta.powi(n as i32) * m
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn maxwellian_mean_and_positivity() {
        let mut rng = stream(21, 0);
        let n = 1_000_000;
        let mut sum = 0.0;
        for _ in 0..n {
            let v = sample_maxwellian(1.0, &mut rng).unwrap();
            assert!(v > 0.0);
            sum += v;
        }
        let mean = sum / n as f64;
        let exact = (std::f64::consts::PI / 2.0).sqrt();
        assert!(((mean - exact) / exact).abs() < 0.005, "{mean}");
        assert!(matches!(
            sample_maxwellian(0.0, &mut rng),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn maxwellian_density_integrates_to_one() {
        // ∫ u m(u) du by the midpoint rule
        let h = 1e-4;
        let total: f64 = (0..200_000)
            .map(|i| {
                let u = (i as f64 + 0.5) * h;
                u * maxwellian_m(2.0, u) * h
            })
            .sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert!((SpeedLaw::maxwellian(2.0).unwrap().cdf(1e6) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moments_are_finite_and_exact() {
        let law = SpeedLaw::maxwellian(1.0).unwrap();
        assert!((law.moment(1.0) - (std::f64::consts::PI / 2.0).sqrt()).abs() < 1e-12);
        assert!((law.moment(2.0) - 2.0).abs() < 1e-12);
        for &s in &[0.5, 1.5, 2.0, 4.0] {
            assert!(law.moment(s).is_finite());
        }
        assert!((gamma_fn(0.5) - std::f64::consts::PI.sqrt()).abs() < 1e-13);
    }

    #[test]
    fn spec_validation() {
        let m = SpeedLaw::maxwellian(1.0).unwrap();
        let u0 = SpeedLaw::PointMass(1.0);
        assert!(BoundarySpec::new(1.2, 0.5, 1.0, m.clone(), u0.clone()).is_err());
        assert!(BoundarySpec::new(0.5, -0.1, 1.0, m.clone(), u0.clone()).is_err());
        assert!(BoundarySpec::new(0.5, 0.1, 0.0, m.clone(), u0.clone()).is_err());
        assert!(BoundarySpec::new(0.5, 0.1, 1.0, SpeedLaw::PointMass(0.0), u0.clone()).is_err());
        let s = BoundarySpec::new(0.5, 0.3, 0.5, m, u0).unwrap();
        assert_eq!(s.restart_velocity(3, -2.0, true, 7.0), 0.6);
        assert_eq!(s.restart_velocity(3, -2.0, false, 8.0), 1.0);
    }
}
