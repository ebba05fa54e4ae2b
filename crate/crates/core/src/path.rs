//! Path-level simulation of the free pair `(X, U) = (x + ∫U, u + L)` and of
//! the confined process with its wall interactions.
//!
//! Each step holds the velocity piecewise constant so that `X` is piecewise
//! linear and the in-step crossing time is exact given the step. The Gaussian
//! driver samples the exact joint law of `(ΔU, ∫ΔU)` on the grid; the jump
//! drivers place the whole step increment at a uniform time inside the step.
//!
//! Steps are refined geometrically near the wall and coarsened away from it.
//! All step sizes are expressed relative to the scale of the current
//! excursion, so an excursion from `(0, v)` is the `(v^α, v)`-rescaling of
//! one from `(0, 1)` step for step.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::boundary::BoundarySpec;
use crate::engine::BounceRecord;
use crate::error::{Error, Result};
use crate::rng;
use crate::stable::StableParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PathConfig {
    /// Initial step, relative to the excursion time scale.
    pub dt_base: f64,
    /// Refinement floor, relative to the local time scale.
    pub dt_min: f64,
    pub refine_factor: f64,
    /// Censoring time for a single excursion.
    pub horizon_cap: f64,
    pub near_wall_band: f64,
    /// Restart speeds below this are declared numerically absorbed.
    pub absorb_floor: f64,
    /// Step budget per excursion; exceeding it discards the replica.
    pub max_steps: u64,
}

impl Default for PathConfig {
    fn default() -> Self {
        PathConfig {
            dt_base: 1e-2,
            dt_min: 1e-6,
            refine_factor: 2.0,
            horizon_cap: 1e30,
            near_wall_band: 4.0,
            absorb_floor: 1e-12,
            max_steps: 50_000_000,
        }
    }
}

impl PathConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !positive(self.dt_base) || !positive(self.dt_min) || self.dt_min > self.dt_base {
            return Err(Error::domain("need 0 < dt_min <= dt_base"));
        }
        if !(self.refine_factor > 1.0 && self.refine_factor.is_finite()) {
            return Err(Error::domain("refine_factor must exceed 1"));
        }
        if !positive(self.horizon_cap) || !positive(self.near_wall_band) {
            return Err(Error::domain(
                "horizon_cap and near_wall_band must be positive and finite",
            ));
        }
        if !(self.absorb_floor >= 0.0) || self.max_steps == 0 {
            return Err(Error::domain(
                "absorb_floor must be nonnegative and max_steps positive",
            ));
        }
        Ok(())
    }
}

/// Normalised first passage from `(0, 1)`: `ξ = τ₁` and `ℓ = U_{τ₁⁻}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExcursionSample {
    pub xi: f64,
    pub ell: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Excursion {
    Crossed(ExcursionSample),
    Censored { horizon: f64 },
}

impl Excursion {
    pub fn sample(&self) -> Option<ExcursionSample> {
        match self {
            Excursion::Crossed(s) => Some(*s),
            Excursion::Censored { .. } => None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum FlightEnd {
    Crossed { time: f64, velocity: f64 },
    Horizon,
}

/// Time scale of an excursion started from `(x, u)`.
fn excursion_scale(alpha: f64, x: f64, u: f64) -> f64 {
    let s = u.abs().powf(alpha).max(x.powf(alpha / (1.0 + alpha)));
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Free flight from `(x0, u0)` in local time until `X` reaches 0 or `t_limit`.
#[allow(clippy::too_many_arguments)]
fn free_flight<R: Rng + ?Sized>(
    params: &StableParams,
    cfg: &PathConfig,
    x0: f64,
    u0: f64,
    scale: f64,
    t_limit: f64,
    rng: &mut R,
    mut observe: Option<&mut dyn FnMut(f64, f64, f64)>,
) -> Result<FlightEnd> {
    let alpha = params.alpha();
    let gaussian = params.is_gaussian();
    let pow = 1.0 + 1.0 / alpha;
    let band = cfg.near_wall_band;
    let factor = cfg.refine_factor;
    let need = |u: f64, d: f64| band * (u.abs() * d).max(d.powf(pow));

    let (mut t, mut x, mut u) = (0.0f64, x0, u0);
    let mut dt = cfg.dt_base * scale;
    let mut steps = 0u64;
    loop {
        if t >= t_limit {
            return Ok(FlightEnd::Horizon);
        }
        steps += 1;
        if steps > cfg.max_steps {
            return Err(Error::Numerical(format!(
                "step budget exhausted at t = {t}, x = {x}, u = {u}"
            )));
        }
        let floor = (cfg.dt_min * scale.max(u.abs().powf(alpha))).max(64.0 * f64::EPSILON * t);
        if x < need(u, dt) {
            while dt > floor && x < need(u, dt) {
                dt /= factor;
            }
            dt = dt.max(floor);
        } else if x >= need(u, dt * factor) {
            dt *= factor;
        }
        let h = dt.min(t_limit - t);

        if gaussian {
            // exact (ΔU, ∫ΔU) pair: Var ΔU = 2h, Var ∫ = 2h³/3, Cov = h²
            let z1: f64 = StandardNormal.sample(rng);
            let z2: f64 = StandardNormal.sample(rng);
            let du = (2.0 * h).sqrt() * z1;
            let dint = h.powf(1.5) * (z1 * std::f64::consts::FRAC_1_SQRT_2 + z2 / 6f64.sqrt());
            let x1 = x + u * h + dint;
            let u1 = u + du;
            if !(x1.is_finite() && u1.is_finite()) {
                return Err(Error::Numerical("state overflow".into()));
            }
            if x1 <= 0.0 {
                let frac = if x > 0.0 { x / (x - x1) } else { 0.0 };
                let mut velocity = u + frac * du;
                if velocity >= 0.0 {
                    velocity = (x1 - x) / h;
                }
                return Ok(FlightEnd::Crossed {
                    time: t + frac * h,
                    velocity,
                });
            }
            if let Some(obs) = observe.as_mut() {
                obs(t + h, x1, u1);
            }
            t += h;
            x = x1;
            u = u1;
        } else {
            let jump = params.sample_increment(h, rng);
            let s = h * rng.random::<f64>();
            if u < 0.0 && x + u * s <= 0.0 {
                return Ok(FlightEnd::Crossed {
                    time: t + x / -u,
                    velocity: u,
                });
            }
            let xs = x + u * s;
            let u1 = u + jump;
            let x1 = xs + u1 * (h - s);
            if !(x1.is_finite() && u1.is_finite()) {
                return Err(Error::Numerical("state overflow".into()));
            }
            if x1 <= 0.0 {
                return Ok(FlightEnd::Crossed {
                    time: t + s + xs / -u1,
                    velocity: u1,
                });
            }
            if let Some(obs) = observe.as_mut() {
                obs(t + h, x1, u1);
            }
            t += h;
            x = x1;
            u = u1;
        }
    }
}

/// First passage of `X` to 0 from `(x0, u0)`, censored at `horizon`.
pub fn simulate_first_passage<R: Rng + ?Sized>(
    params: &StableParams,
    cfg: &PathConfig,
    x0: f64,
    u0: f64,
    horizon: f64,
    rng: &mut R,
) -> Result<Excursion> {
    if !(x0 > 0.0 || (x0 == 0.0 && u0 > 0.0)) {
        return Err(Error::domain(format!(
            "start ({x0}, {u0}) must satisfy x > 0, or x = 0 and u > 0"
        )));
    }
    let scale = excursion_scale(params.alpha(), x0, u0);
    match free_flight(params, cfg, x0, u0, scale, horizon, rng, None)? {
        FlightEnd::Crossed { time, velocity } => Ok(Excursion::Crossed(ExcursionSample {
            xi: time,
            ell: velocity.min(-f64::MIN_POSITIVE),
        })),
        FlightEnd::Horizon => Ok(Excursion::Censored { horizon }),
    }
}

/// One normalised excursion from `(0, 1)`, censored at `cfg.horizon_cap`.
pub fn simulate_excursion<R: Rng + ?Sized>(
    params: &StableParams,
    cfg: &PathConfig,
    rng: &mut R,
) -> Result<Excursion> {
    simulate_first_passage(params, cfg, 0.0, 1.0, cfg.horizon_cap, rng)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathPoint {
    pub t: f64,
    pub x: f64,
    pub u: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PathEnd {
    Horizon,
    /// The requested number of impacts was reached.
    BounceLimit,
    /// The restart speed fell below `absorb_floor` at this time.
    NumericallyAbsorbed {
        time: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfinedPath {
    pub trajectory: Vec<PathPoint>,
    pub bounces: Vec<BounceRecord>,
    pub end: PathEnd,
}

/// Event-driven simulation of the confined process on `[0, horizon]`.
///
/// When `report_dt` is set, the state is recorded at the first step end past
/// each multiple of `report_dt`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_confined_path<R: Rng + ?Sized>(
    x0: f64,
    u0: f64,
    params: &StableParams,
    boundary: &BoundarySpec,
    cfg: &PathConfig,
    horizon: f64,
    report_dt: Option<f64>,
    rng: &mut R,
) -> Result<ConfinedPath> {
    confined(
        x0,
        u0,
        params,
        boundary,
        cfg,
        horizon,
        usize::MAX,
        report_dt,
        rng,
    )
}

/// The first `n` impacts of the confined process started at `(0, u0)`,
/// censored at `cfg.horizon_cap`.
pub fn simulate_impacts<R: Rng + ?Sized>(
    u0: f64,
    params: &StableParams,
    boundary: &BoundarySpec,
    cfg: &PathConfig,
    n: usize,
    rng: &mut R,
) -> Result<ConfinedPath> {
    confined(
        0.0,
        u0,
        params,
        boundary,
        cfg,
        cfg.horizon_cap,
        n,
        None,
        rng,
    )
}

#[allow(clippy::too_many_arguments)]
fn confined<R: Rng + ?Sized>(
    x0: f64,
    u0: f64,
    params: &StableParams,
    boundary: &BoundarySpec,
    cfg: &PathConfig,
    horizon: f64,
    max_bounces: usize,
    report_dt: Option<f64>,
    rng: &mut R,
) -> Result<ConfinedPath> {
    if !(x0 > 0.0 || (x0 == 0.0 && u0 > 0.0)) || !x0.is_finite() || !u0.is_finite() {
        return Err(Error::domain(format!(
            "start ({x0}, {u0}) must satisfy x > 0, or x = 0 and u > 0"
        )));
    }
    if !(horizon > 0.0) || horizon > cfg.horizon_cap {
        return Err(Error::domain(format!(
            "horizon must lie in (0, horizon_cap = {}]",
            cfg.horizon_cap
        )));
    }
    let alpha = params.alpha();
    let mut trajectory = Vec::new();
    let mut next_report = 0.0;
    if let Some(step) = report_dt {
        if !(step > 0.0) {
            return Err(Error::domain("report_dt must be positive"));
        }
        trajectory.push(PathPoint {
            t: 0.0,
            x: x0,
            u: u0,
        });
        next_report = step;
    }

    let mut bounces = Vec::new();
    let (mut t_base, mut x, mut u) = (0.0f64, x0, u0);
    let mut last_diffusive = 0usize;
    loop {
        let scale = excursion_scale(alpha, x, u);
        let end = {
            let mut record = |t: f64, x: f64, u: f64| {
                if let Some(step) = report_dt {
                    let abs_t = t_base + t;
                    while abs_t >= next_report && next_report <= horizon {
                        trajectory.push(PathPoint { t: abs_t, x, u });
                        next_report += step;
                    }
                }
            };
            let obs: Option<&mut dyn FnMut(f64, f64, f64)> = if report_dt.is_some() {
                Some(&mut record)
            } else {
                None
            };
            free_flight(params, cfg, x, u, scale, horizon - t_base, rng, obs)?
        };
        match end {
            FlightEnd::Horizon => {
                return Ok(ConfinedPath {
                    trajectory,
                    bounces,
                    end: PathEnd::Horizon,
                })
            }
            FlightEnd::Crossed { time, velocity } => {
                let tau = t_base + time;
                let n = bounces.len() + 1;
                let elastic = rng.random::<f64>() < boundary.p;
                let m = if elastic {
                    0.0
                } else {
                    boundary.m_law.sample(rng)
                };
                let u_pre = velocity.min(-f64::MIN_POSITIVE);
                let v = boundary.restart_velocity(n, u_pre, elastic, m);
                bounces.push(BounceRecord {
                    n,
                    tau_n: tau,
                    u_pre,
                    v_restart: v,
                    beta_n: elastic,
                    g_n: last_diffusive,
                    ln_tau: tau.ln(),
                    ln_v: v.ln(),
                });
                if !elastic {
                    last_diffusive = n;
                }
                if v < cfg.absorb_floor || v == 0.0 {
                    return Ok(ConfinedPath {
                        trajectory,
                        bounces,
                        end: PathEnd::NumericallyAbsorbed { time: tau },
                    });
                }
                if bounces.len() >= max_bounces {
                    return Ok(ConfinedPath {
                        trajectory,
                        bounces,
                        end: PathEnd::BounceLimit,
                    });
                }
                t_base = tau;
                x = 0.0;
                u = v;
            }
        }
    }
}

/// Provenance of a harvested pool.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolProvenance {
    pub alpha: f64,
    pub rho: f64,
    pub seed: u64,
    pub cfg: PathConfig,
    /// Replicas attempted, including censored and discarded ones.
    pub attempted: u64,
    pub censored: u64,
    pub discarded: u64,
}

impl PoolProvenance {
    pub fn censored_fraction(&self) -> f64 {
        self.censored as f64 / self.attempted.max(1) as f64
    }
}

/// i.i.d. `(ξ, ℓ)` samples from `(0, 1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pool {
    pub samples: Vec<ExcursionSample>,
    pub provenance: PoolProvenance,
}

impl Pool {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn params(&self) -> Result<StableParams> {
        StableParams::new(self.provenance.alpha, self.provenance.rho)
    }

    pub fn xis(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.xi).collect()
    }

    pub fn ells(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.ell).collect()
    }

    /// The first `n` samples as a pool of its own.
    pub fn truncated(&self, n: usize) -> Pool {
        Pool {
            samples: self.samples[..n.min(self.samples.len())].to_vec(),
            provenance: self.provenance.clone(),
        }
    }
}

/// Harvest exactly `count` uncensored excursions. Replica `i` uses stream
/// `(seed, i)`; censored or discarded replicas are tallied and replaced by
/// further indices, so the output does not depend on the worker count.
pub fn harvest_pool(
    params: &StableParams,
    cfg: &PathConfig,
    count: usize,
    seed: u64,
) -> Result<Pool> {
    if count == 0 {
        return Err(Error::domain("pool count must be at least 1"));
    }
    cfg.validate()?;
    let mut samples = Vec::with_capacity(count);
    let (mut censored, mut discarded) = (0u64, 0u64);
    let mut next = 0u64;
    while samples.len() < count {
        let missing = (count - samples.len()) as u64;
        let batch: Vec<Result<Excursion>> = (next..next + missing)
            .into_par_iter()
            .map(|i| simulate_excursion(params, cfg, &mut rng::stream(seed, i)))
            .collect();
        next += missing;
        for outcome in batch {
            match outcome {
                Ok(Excursion::Crossed(s)) => samples.push(s),
                Ok(Excursion::Censored { .. }) => censored += 1,
                Err(Error::Numerical(_)) => discarded += 1,
                Err(e) => return Err(e),
            }
        }
        if next > 100 * count as u64 + 1000 {
            return Err(Error::Numerical(format!(
                "only {} of {count} excursions completed",
                samples.len()
            )));
        }
    }
    Ok(Pool {
        samples,
        provenance: PoolProvenance {
            alpha: params.alpha(),
            rho: params.rho(),
            seed,
            cfg: cfg.clone(),
            attempted: next,
            censored,
            discarded,
        },
    })
}
