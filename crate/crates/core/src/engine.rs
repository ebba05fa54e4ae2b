//! Boundary-event recursion driven by pooled `(ξ, ℓ)` samples.
//!
//! By scaling, an excursion restarted at speed `V` has law `(V^α ξ, V ℓ)`, so
//! the sequence `(τ_n, V_n)` can be advanced without re-simulating paths.
//! Chains are kept in log space: `τ_n` and `V_n` leave the range of `f64`
//! within a few hundred bounces in the growing regimes.

use std::collections::HashMap;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::boundary::BoundarySpec;
use crate::error::{Error, Result};
use crate::path::{ExcursionSample, Pool};
use crate::rng;
use crate::stable::StableParams;
use crate::stats::{self, log_add_exp, Z95};

/// One boundary event. `ln_tau` and `ln_v` are authoritative; `tau_n` and
/// `v_restart` may saturate to `inf` or `0` for long chains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BounceRecord {
    pub n: usize,
    pub tau_n: f64,
    pub u_pre: f64,
    pub v_restart: f64,
    /// `true` for an elastic impact.
    pub beta_n: bool,
    pub g_n: usize,
    pub ln_tau: f64,
    pub ln_v: f64,
}

impl BounceRecord {
    /// The state before the first impact: `τ₀ = 0`, `V₀ = U₀`.
    pub fn initial(u0: f64) -> Self {
        BounceRecord {
            n: 0,
            tau_n: 0.0,
            u_pre: 0.0,
            v_restart: u0,
            beta_n: true,
            g_n: 0,
            ln_tau: f64::NEG_INFINITY,
            ln_v: u0.ln(),
        }
    }

    pub fn is_absorbed(&self) -> bool {
        self.ln_v == f64::NEG_INFINITY
    }
}

/// Advance the recursion by one impact.
///
/// A zero restart speed means the chain is already absorbed: the returned
/// record repeats `τ` with `u_pre = 0`.
pub fn step_bounce(
    prev: &BounceRecord,
    spec: &BoundarySpec,
    alpha: f64,
    draw: ExcursionSample,
    elastic: bool,
    m: f64,
) -> BounceRecord {
    step_log(
        prev,
        spec,
        alpha,
        draw.xi.ln(),
        draw.ell.abs().ln(),
        elastic,
        m,
    )
}

fn step_log(
    prev: &BounceRecord,
    spec: &BoundarySpec,
    alpha: f64,
    ln_xi: f64,
    ln_abs_ell: f64,
    elastic: bool,
    m: f64,
) -> BounceRecord {
    let n = prev.n + 1;
    let g_n = if prev.n >= 1 && !prev.beta_n {
        prev.n
    } else {
        prev.g_n
    };
    if prev.is_absorbed() {
        return BounceRecord {
            n,
            tau_n: prev.tau_n,
            u_pre: 0.0,
            v_restart: 0.0,
            beta_n: elastic,
            g_n,
            ln_tau: prev.ln_tau,
            ln_v: f64::NEG_INFINITY,
        };
    }
    let ln_tau = log_add_exp(prev.ln_tau, alpha * prev.ln_v + ln_xi);
    let ln_u = prev.ln_v + ln_abs_ell;
    let ln_v = if elastic {
        spec.c.ln() + ln_u
    } else {
        n as f64 * spec.theta.ln() + m.ln()
    };
    BounceRecord {
        n,
        tau_n: ln_tau.exp(),
        u_pre: -ln_u.exp(),
        v_restart: ln_v.exp(),
        beta_n: elastic,
        g_n,
        ln_tau,
        ln_v,
    }
}

/// How chains draw from the pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PoolPolicy {
    /// Without replacement while the pool lasts, then with replacement.
    #[default]
    Auto,
    /// Without replacement; running out is an error.
    Never,
    Always,
}

/// Uniform draws without replacement, materialising only touched positions.
struct LazyShuffle {
    len: usize,
    drawn: usize,
    swaps: HashMap<usize, usize>,
}

impl LazyShuffle {
    fn new(len: usize) -> Self {
        LazyShuffle {
            len,
            drawn: 0,
            swaps: HashMap::new(),
        }
    }

    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Option<usize> {
        if self.drawn == self.len {
            return None;
        }
        let j = rng.random_range(self.drawn..self.len);
        let at_j = *self.swaps.get(&j).unwrap_or(&j);
        let at_head = *self.swaps.get(&self.drawn).unwrap_or(&self.drawn);
        self.swaps.insert(j, at_head);
        self.drawn += 1;
        Some(at_j)
    }
}

struct PoolCursor {
    shuffle: LazyShuffle,
    policy: PoolPolicy,
    replaced: bool,
}

impl PoolCursor {
    fn new(len: usize, policy: PoolPolicy) -> Self {
        PoolCursor {
            shuffle: LazyShuffle::new(len),
            policy,
            replaced: false,
        }
    }

    fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<usize> {
        if self.policy == PoolPolicy::Always {
            self.replaced = true;
            return Ok(rng.random_range(0..self.shuffle.len));
        }
        match self.shuffle.next(rng) {
            Some(i) => Ok(i),
            None if self.policy == PoolPolicy::Auto => {
                self.replaced = true;
                Ok(rng.random_range(0..self.shuffle.len))
            }
            None => Err(Error::PoolExhausted {
                needed: self.shuffle.len + 1,
                available: self.shuffle.len,
            }),
        }
    }
}

/// A simulated chain of impacts.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub records: Vec<BounceRecord>,
    /// Some pool draws were made with replacement.
    pub with_replacement: bool,
    pub absorbed: bool,
}

impl Chain {
    pub fn ln_taus(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.ln_tau).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VerdictKind {
    Absorbed,
    Diverging,
    Undecided,
}

/// Outcome of [`ExcursionEngine::tau_infinity`]. For `Absorbed` the
/// estimate is `τ∞`; for `Diverging` it is the slope of `ln τ_n`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Verdict {
    pub verdict: VerdictKind,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Number of trailing bounces used by the final test.
    pub window: usize,
    pub n_used: usize,
}

impl Verdict {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("verdict serialises")
    }
}

/// Smallest trailing window the certification tests use.
pub const MIN_WINDOW: usize = 50;

/// Pool-driven simulator of the impact recursion.
#[derive(Debug, Clone)]
pub struct ExcursionEngine<'a> {
    params: StableParams,
    spec: BoundarySpec,
    pool: &'a Pool,
    ln_xi: Vec<f64>,
    ln_abs_ell: Vec<f64>,
    policy: PoolPolicy,
    /// Fractional order used by the tail envelope, and `E[ξ^λ]` on the pool.
    tail_lambda: f64,
    tail_moment: f64,
}

impl<'a> ExcursionEngine<'a> {
    pub fn new(spec: &BoundarySpec, params: &StableParams, pool: &'a Pool) -> Result<Self> {
        if pool.is_empty() {
            return Err(Error::InsufficientData("empty pool".into()));
        }
        let pp = &pool.provenance;
        if (pp.alpha - params.alpha()).abs() > 1e-12 || (pp.rho - params.rho()).abs() > 1e-12 {
            return Err(Error::domain(format!(
                "pool was harvested for (alpha, rho) = ({}, {}), not ({}, {})",
                pp.alpha,
                pp.rho,
                params.alpha(),
                params.rho()
            )));
        }
        let ln_xi: Vec<f64> = pool.samples.iter().map(|s| s.xi.ln()).collect();
        let ln_abs_ell = pool.samples.iter().map(|s| s.ell.abs().ln()).collect();
        let tail_lambda = params.eta() / 2.0;
        let tail_moment = stats::mean(
            &ln_xi
                .iter()
                .map(|l| (tail_lambda * l).exp())
                .collect::<Vec<_>>(),
        );
        Ok(ExcursionEngine {
            params: *params,
            spec: spec.clone(),
            pool,
            ln_xi,
            ln_abs_ell,
            policy: PoolPolicy::Auto,
            tail_lambda,
            tail_moment,
        })
    }

    pub fn with_policy(mut self, policy: PoolPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn spec(&self) -> &BoundarySpec {
        &self.spec
    }

    pub fn params(&self) -> &StableParams {
        &self.params
    }

    pub fn pool(&self) -> &Pool {
        self.pool
    }

    fn step<R: Rng + ?Sized>(
        &self,
        prev: &BounceRecord,
        cursor: &mut PoolCursor,
        rng: &mut R,
    ) -> Result<BounceRecord> {
        let i = cursor.next(rng)?;
        let elastic = rng.random::<f64>() < self.spec.p;
        let m = if elastic {
            0.0
        } else {
            self.spec.m_law.sample(rng)
        };
        Ok(step_log(
            prev,
            &self.spec,
            self.params.alpha(),
            self.ln_xi[i],
            self.ln_abs_ell[i],
            elastic,
            m,
        ))
    }

    fn check_draws(&self, n_max: usize) -> Result<()> {
        if self.policy == PoolPolicy::Never && n_max > self.pool.len() {
            return Err(Error::PoolExhausted {
                needed: n_max,
                available: self.pool.len(),
            });
        }
        Ok(())
    }

    /// Chain of at most `n_max` impacts; stops early once `V_n = 0`.
    pub fn run_chain<R: Rng + ?Sized>(&self, n_max: usize, rng: &mut R) -> Result<Chain> {
        self.check_draws(n_max)?;
        let mut cursor = PoolCursor::new(self.pool.len(), self.policy);
        let mut prev = BounceRecord::initial(self.spec.u0_law.sample(rng));
        let mut records = Vec::with_capacity(n_max);
        while records.len() < n_max {
            let rec = self.step(&prev, &mut cursor, rng)?;
            records.push(rec);
            prev = rec;
            if rec.is_absorbed() {
                break;
            }
        }
        Ok(Chain {
            records,
            with_replacement: cursor.replaced,
            absorbed: prev.is_absorbed(),
        })
    }

    /// `chains` independent chains; chain `i` uses stream `(seed, i)`.
    pub fn run_chains(&self, n_max: usize, chains: usize, seed: u64) -> Result<Vec<Chain>> {
        (0..chains as u64)
            .into_par_iter()
            .map(|i| self.run_chain(n_max, &mut rng::stream(seed, i)))
            .collect()
    }

    /// Decide whether `τ∞` is finite.
    ///
    /// Tests run at `n = 100, 200, 400, …` and at `n_max`, on the increments
    /// of `ln V` over the trailing half of the chain. A negative drift at 3σ
    /// plus a fractional-moment envelope of the remaining sum below
    /// `tolerance` gives `Absorbed`; a positive drift at 3σ gives `Diverging`.
    pub fn tau_infinity<R: Rng + ?Sized>(
        &self,
        tolerance: f64,
        n_max: usize,
        rng: &mut R,
    ) -> Result<Verdict> {
        if !(tolerance > 0.0) {
            return Err(Error::domain("tolerance must be positive"));
        }
        self.check_draws(n_max)?;
        let alpha = self.params.alpha();
        let lambda = self.tail_lambda;
        let mut cursor = PoolCursor::new(self.pool.len(), self.policy);
        let mut prev = BounceRecord::initial(self.spec.u0_law.sample(rng));
        let mut ln_v = vec![prev.ln_v];
        let mut ln_tau = vec![prev.ln_tau];
        let mut checkpoint = 2 * MIN_WINDOW;
        while prev.n < n_max {
            prev = self.step(&prev, &mut cursor, rng)?;
            ln_v.push(prev.ln_v);
            ln_tau.push(prev.ln_tau);
            let n = prev.n;
            if prev.is_absorbed() {
                return Ok(Verdict {
                    verdict: VerdictKind::Absorbed,
                    estimate: prev.tau_n,
                    ci_low: prev.tau_n,
                    ci_high: prev.tau_n,
                    window: 0,
                    n_used: n,
                });
            }
            if n != checkpoint && n != n_max {
                continue;
            }
            checkpoint *= 2;
            let window = (n / 2).max(MIN_WINDOW.min(n));
            let incs: Vec<f64> = ln_v[n + 1 - window..=n]
                .windows(2)
                .map(|w| w[1] - w[0])
                .collect();
            if incs.len() < 2 {
                continue;
            }
            let (drift, se) = stats::mean_se(&incs);
            if drift + 3.0 * se < 0.0 {
                // E[Σ_{k≥n} ξ_{k+1}^λ V_k^{αλ}] under the envelope V_k ≤ V_n e^{(k−n) d}
                let d_up = drift + 3.0 * se;
                let bound = self.tail_moment * (alpha * lambda * prev.ln_v).exp()
                    / -(alpha * lambda * d_up).exp_m1();
                let slack = bound.powf(1.0 / lambda);
                if slack <= tolerance {
                    return Ok(Verdict {
                        verdict: VerdictKind::Absorbed,
                        estimate: prev.tau_n,
                        ci_low: prev.tau_n,
                        ci_high: prev.tau_n + slack,
                        window,
                        n_used: n,
                    });
                }
            } else if drift - 3.0 * se > 0.0 {
                let xs: Vec<f64> = (n + 1 - window..=n).map(|k| k as f64).collect();
                let fit = stats::fit_line(&xs, &ln_tau[n + 1 - window..=n]);
                return Ok(Verdict {
                    verdict: VerdictKind::Diverging,
                    estimate: fit.slope,
                    ci_low: fit.slope - Z95 * fit.slope_se,
                    ci_high: fit.slope + Z95 * fit.slope_se,
                    window,
                    n_used: n,
                });
            }
        }
        Ok(Verdict {
            verdict: VerdictKind::Undecided,
            estimate: f64::NAN,
            ci_low: f64::NAN,
            ci_high: f64::NAN,
            window: (prev.n / 2).max(MIN_WINDOW.min(prev.n)),
            n_used: prev.n,
        })
    }

    /// Verdicts for `replicas` independent chains, stream `(seed, i)` each.
    pub fn tau_infinity_batch(
        &self,
        tolerance: f64,
        n_max: usize,
        replicas: usize,
        seed: u64,
    ) -> Result<Vec<Verdict>> {
        (0..replicas as u64)
            .into_par_iter()
            .map(|i| self.tau_infinity(tolerance, n_max, &mut rng::stream(seed, i)))
            .collect()
    }
}

/// Free-function form of [`ExcursionEngine::run_chain`].
pub fn run_chain<R: Rng + ?Sized>(
    spec: &BoundarySpec,
    params: &StableParams,
    pool: &Pool,
    n_max: usize,
    rng: &mut R,
) -> Result<Chain> {
    ExcursionEngine::new(spec, params, pool)?.run_chain(n_max, rng)
}

/// Free-function form of [`ExcursionEngine::tau_infinity`].
pub fn tau_infinity<R: Rng + ?Sized>(
    spec: &BoundarySpec,
    params: &StableParams,
    pool: &Pool,
    tolerance: f64,
    n_max: usize,
    rng: &mut R,
) -> Result<Verdict> {
    ExcursionEngine::new(spec, params, pool)?.tau_infinity(tolerance, n_max, rng)
}

/// `P(g_k = l)`: `p^{k−1}` at `l = 0`, `(1−p) p^{k−l−1}` for `1 ≤ l ≤ k−1`.
pub fn g_law(p: f64, k: usize) -> Vec<f64> {
    let mut law = vec![0.0; k.max(1)];
    if k == 0 {
        return law;
    }
    law[0] = p.powi(k as i32 - 1);
    for (l, slot) in law.iter_mut().enumerate().skip(1) {
        *slot = (1.0 - p) * p.powi((k - l - 1) as i32);
    }
    law
}

#[derive(Debug, Clone, PartialEq)]
pub struct GLawReport {
    /// Empirical frequencies of `g_k = 0, …, k−1`.
    pub histogram: Vec<f64>,
    pub exact: Vec<f64>,
    pub tv: f64,
}

/// Histogram of `g_k` over independent Bernoulli impact sequences, compared
/// with the closed-form law in total variation.
pub fn empirical_g_law(
    spec: &BoundarySpec,
    k: usize,
    replicas: usize,
    seed: u64,
) -> Result<GLawReport> {
    let p = spec.p;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("g-law needs 0 < p < 1, got {p}")));
    }
    if k == 0 || replicas == 0 {
        return Err(Error::domain("k and replicas must be positive"));
    }
    let counts = (0..replicas as u64)
        .into_par_iter()
        .fold(
            || vec![0u64; k],
            |mut acc, i| {
                let mut rng = rng::stream(seed, i);
                let mut g = 0;
                for j in 1..k {
                    if rng.random::<f64>() >= p {
                        g = j;
                    }
                }
                acc[g] += 1;
                acc
            },
        )
        .reduce(
            || vec![0u64; k],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let histogram: Vec<f64> = counts.iter().map(|&c| c as f64 / replicas as f64).collect();
    let exact = g_law(p, k);
    let tv = 0.5
        * histogram
            .iter()
            .zip(&exact)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(GLawReport {
        histogram,
        exact,
        tv,
    })
}

/// CSV rows `n,tau_n,u_pre,v_restart,beta_n,g_n` for a chain.
pub fn chain_csv(chain: &Chain) -> String {
    let mut out = String::from("n,tau_n,u_pre,v_restart,beta_n,g_n\n");
    for r in &chain.records {
        out.push_str(&format!(
            "{},{:.16e},{:.16e},{:.16e},{},{}\n",
            r.n, r.tau_n, r.u_pre, r.v_restart, r.beta_n as u8, r.g_n
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::c_crit_of;
    use crate::boundary::SpeedLaw;
    use crate::path::{PathConfig, PoolProvenance};
    use crate::rng::stream;
    use rand_distr::{Distribution, Exp1};

    /// Synthetic pool with `ξ ~ Exp(1)` and `|ℓ|` log-normal.
    fn synthetic_pool(n: usize, mu: f64, sd: f64) -> Pool {
        let mut rng = stream(41, 0);
        let samples = (0..n)
            .map(|_| {
                let xi: f64 = Exp1.sample(&mut rng);
                let z: f64 = rand_distr::StandardNormal.sample(&mut rng);
                ExcursionSample {
                    xi: xi.max(1e-300),
                    ell: -(mu + sd * z).exp(),
                }
            })
            .collect();
        Pool {
            samples,
            provenance: PoolProvenance {
                alpha: 2.0,
                rho: 0.5,
                seed: 41,
                cfg: PathConfig::default(),
                attempted: n as u64,
                censored: 0,
                discarded: 0,
            },
        }
    }

    fn gauss() -> StableParams {
        StableParams::new(2.0, 0.5).unwrap()
    }

    #[test]
    fn step_bounce_follows_the_recursion() {
        let spec = BoundarySpec::new(
            0.5,
            0.4,
            0.5,
            SpeedLaw::PointMass(3.0),
            SpeedLaw::PointMass(2.0),
        )
        .unwrap();
        let s0 = BounceRecord::initial(2.0);
        let draw = ExcursionSample { xi: 0.5, ell: -1.5 };
        let r1 = step_bounce(&s0, &spec, 2.0, draw, true, 0.0);
        assert_eq!(r1.n, 1);
        assert!((r1.tau_n - 4.0 * 0.5).abs() < 1e-12);
        assert!((r1.u_pre + 3.0).abs() < 1e-12);
        assert!((r1.v_restart - 1.2).abs() < 1e-12);
        assert_eq!(r1.g_n, 0);
        let r2 = step_bounce(&r1, &spec, 2.0, draw, false, 3.0);
        assert!((r2.v_restart - 0.25 * 3.0).abs() < 1e-12);
        assert!((r2.tau_n - (2.0 + 1.44 * 0.5)).abs() < 1e-12);
        assert_eq!(r2.g_n, 0);
        let r3 = step_bounce(&r2, &spec, 2.0, draw, true, 0.0);
        assert_eq!(r3.g_n, 2);
    }

    #[test]
    fn zero_restart_halts() {
        let spec = BoundarySpec::elastic(0.0).unwrap();
        let s0 = BounceRecord::initial(1.0);
        let r1 = step_bounce(
            &s0,
            &spec,
            2.0,
            ExcursionSample { xi: 1.0, ell: -1.0 },
            true,
            0.0,
        );
        assert_eq!(r1.v_restart, 0.0);
        let r2 = step_bounce(
            &r1,
            &spec,
            2.0,
            ExcursionSample { xi: 1.0, ell: -1.0 },
            true,
            0.0,
        );
        assert_eq!(r2.tau_n, r1.tau_n);
        assert_eq!(r2.u_pre, 0.0);

        let pool = synthetic_pool(100, 0.0, 1.0);
        let chain = run_chain(&spec, &gauss(), &pool, 50, &mut stream(1, 0)).unwrap();
        assert_eq!(chain.records.len(), 1);
        assert!(chain.absorbed);
    }

    #[test]
    fn elastic_restart_is_a_product() {
        let spec = BoundarySpec::elastic(0.7).unwrap();
        let pool = synthetic_pool(1000, 0.0, 0.5);
        let engine = ExcursionEngine::new(&spec, &gauss(), &pool).unwrap();
        let chain = engine.run_chain(30, &mut stream(2, 0)).unwrap();
        // V_n / V_{n-1} = c |ℓ_n| = c |u_pre,n| / V_{n-1}
        let mut v = 1.0f64;
        for r in &chain.records {
            let ratio = r.v_restart / v;
            assert!((ratio - 0.7 * r.u_pre.abs() / v).abs() < 1e-9 * ratio.max(1.0));
            v = r.v_restart;
        }
    }

    #[test]
    fn diffusive_restart_uses_global_index() {
        let spec = BoundarySpec::new(
            0.0,
            0.0,
            2.0,
            SpeedLaw::PointMass(1.5),
            SpeedLaw::PointMass(1.0),
        )
        .unwrap();
        let pool = synthetic_pool(1000, 0.0, 0.5);
        let chain = run_chain(&spec, &gauss(), &pool, 20, &mut stream(3, 0)).unwrap();
        for r in &chain.records {
            assert!((r.ln_v - (r.n as f64 * 2f64.ln() + 1.5f64.ln())).abs() < 1e-12);
            assert_eq!(r.g_n, r.n - 1);
        }
    }

    #[test]
    fn single_step_chain_matches_step_bounce() {
        let spec = BoundarySpec::elastic(0.5).unwrap();
        let pool = synthetic_pool(10, 0.0, 0.5);
        let chain = run_chain(&spec, &gauss(), &pool, 1, &mut stream(4, 0)).unwrap();
        assert_eq!(chain.records.len(), 1);
        let r = chain.records[0];
        let s = pool
            .samples
            .iter()
            .find(|s| (s.ell.abs() - r.u_pre.abs()).abs() < 1e-12)
            .expect("draw comes from the pool");
        let expect = step_bounce(&BounceRecord::initial(1.0), &spec, 2.0, *s, true, 0.0);
        assert!((expect.tau_n - r.tau_n).abs() < 1e-12);
    }

    #[test]
    fn pool_policy() {
        let spec = BoundarySpec::elastic(1.0).unwrap();
        let pool = synthetic_pool(10, 0.0, 0.5);
        let engine = ExcursionEngine::new(&spec, &gauss(), &pool).unwrap();
        let c = engine.run_chain(10, &mut stream(5, 0)).unwrap();
        assert!(!c.with_replacement);
        // without replacement each pool row is used exactly once
        let mut prev_v = 1.0;
        let mut used = Vec::new();
        for r in &c.records {
            let ell = r.u_pre / prev_v;
            let idx = pool
                .samples
                .iter()
                .position(|s| (s.ell - ell).abs() < 1e-9 * s.ell.abs())
                .unwrap();
            used.push(idx);
            prev_v = r.v_restart;
        }
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 10);
        let c = engine.run_chain(25, &mut stream(5, 0)).unwrap();
        assert!(c.with_replacement);
        let strict = engine.clone().with_policy(PoolPolicy::Never);
        assert!(matches!(
            strict.run_chain(25, &mut stream(5, 0)),
            Err(Error::PoolExhausted { .. })
        ));
    }

    #[test]
    fn lazy_shuffle_is_a_permutation() {
        let mut s = LazyShuffle::new(1000);
        let mut rng = stream(6, 0);
        let mut seen = vec![false; 1000];
        while let Some(i) = s.next(&mut rng) {
            assert!(!seen[i]);
            seen[i] = true;
        }
        assert!(seen.iter().all(|&b| b));
    }

    #[test]
    fn verdicts_on_synthetic_walks() {
        // ln(c|ℓ|) has mean ln c + mu: choose mu so drifts are ∓1
        let pool = synthetic_pool(20_000, 0.0, 1.0);
        let down = BoundarySpec::elastic((-1.0f64).exp()).unwrap();
        let e = ExcursionEngine::new(&down, &gauss(), &pool).unwrap();
        let v = e.tau_infinity(1e-6, 5000, &mut stream(7, 0)).unwrap();
        assert_eq!(v.verdict, VerdictKind::Absorbed);
        assert!(v.estimate.is_finite() && v.ci_high >= v.estimate);

        let up = BoundarySpec::elastic(1f64.exp()).unwrap();
        let e = ExcursionEngine::new(&up, &gauss(), &pool).unwrap();
        let v = e.tau_infinity(1e-6, 5000, &mut stream(8, 0)).unwrap();
        assert_eq!(v.verdict, VerdictKind::Diverging);
        // ln τ grows like α × drift
        assert!((v.estimate - 2.0).abs() < 0.5, "{}", v.estimate);
        assert!(v.to_json().contains("\"verdict\":\"diverging\""));
    }

    #[test]
    fn g_law_exact_values() {
        let l = g_law(0.5, 3);
        assert_eq!(l, vec![0.25, 0.25, 0.5]);
        let l = g_law(0.9, 2);
        assert!((l[0] - 0.9).abs() < 1e-15 && (l[1] - 0.1).abs() < 1e-15);
        for &p in &[0.1, 0.5, 0.9] {
            assert!((g_law(p, 7).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn g_law_rejects_trivial_p() {
        let spec = BoundarySpec::elastic(0.5).unwrap();
        assert!(matches!(
            empirical_g_law(&spec, 3, 1000, 1),
            Err(Error::Domain(_))
        ));
        let spec = BoundarySpec::diffusive(1.0).unwrap();
        assert!(matches!(
            empirical_g_law(&spec, 3, 1000, 1),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mismatched_pool_is_rejected() {
        let pool = synthetic_pool(10, 0.0, 1.0);
        let p = StableParams::new(1.5, 0.5).unwrap();
        assert!(ExcursionEngine::new(&BoundarySpec::elastic(1.0).unwrap(), &p, &pool).is_err());
        let _ = c_crit_of(2.0, 0.5).unwrap();
    }

    #[test]
    fn chain_csv_layout() {
        let spec = BoundarySpec::elastic(0.5).unwrap();
        let pool = synthetic_pool(10, 0.0, 0.5);
        let chain = run_chain(&spec, &gauss(), &pool, 3, &mut stream(9, 0)).unwrap();
        let csv = chain_csv(&chain);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "n,tau_n,u_pre,v_restart,beta_n,g_n");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("1,"));
    }
}
