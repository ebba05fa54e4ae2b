//! Estimators confronting simulated samples with the closed forms.

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::Chain;
use crate::error::{Error, Result};
use crate::path::{simulate_first_passage, Excursion, PathConfig, Pool};
use crate::rng;
use crate::stable::StableParams;
use crate::stats::{self, Z95};

/// Bootstrap resamples used when the plug-in variance is infinite.
pub const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Machine-readable estimate with a 95% interval.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub name: String,
    pub estimate: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
    pub method: String,
    pub flags: Vec<String>,
}

impl EstimateReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("report serialises")
    }

    pub fn contains(&self, x: f64) -> bool {
        self.ci_low <= x && x <= self.ci_high
    }
}

/// `E|ℓ|^{ν−1}` on the pool with a 95% interval.
///
/// The CLT interval is used when `E|ℓ|^{2(ν−1)}` is finite, i.e. when
/// `2ν − 1` lies inside the Mellin window; otherwise a percentile bootstrap.
pub fn empirical_mellin(pool: &Pool, nu: f64, seed: u64) -> Result<EstimateReport> {
    let params = pool.params()?;
    let pole = 1.0 / (1.0 - params.gamma());
    if !(nu > 0.0) || nu >= pole {
        return Err(Error::domain(format!(
            "nu = {nu} outside the moment window (0, {pole})"
        )));
    }
    if pool.is_empty() {
        return Err(Error::InsufficientData("empty pool".into()));
    }
    let name = format!("mellin(nu={nu})");
    let n = pool.len();
    if nu == 1.0 {
        return Ok(EstimateReport {
            name,
            estimate: 1.0,
            ci_low: 1.0,
            ci_high: 1.0,
            n,
            method: "exact".into(),
            flags: vec![],
        });
    }
    let xs: Vec<f64> = pool
        .samples
        .iter()
        .map(|s| s.ell.abs().powf(nu - 1.0))
        .collect();
    let second = 2.0 * nu - 1.0;
    let finite_variance = second > 0.0 && second < pole;
    let (m, se) = stats::mean_se(&xs);
    if finite_variance {
        Ok(EstimateReport {
            name,
            estimate: m,
            ci_low: m - Z95 * se,
            ci_high: m + Z95 * se,
            n,
            method: "clt".into(),
            flags: vec![],
        })
    } else {
        let (lo, hi) = stats::bootstrap_mean_ci(&xs, BOOTSTRAP_RESAMPLES, 0.95, seed);
        Ok(EstimateReport {
            name,
            estimate: m,
            ci_low: lo,
            ci_high: hi,
            n,
            method: "bootstrap".into(),
            flags: vec!["infinite_variance".into()],
        })
    }
}

/// Mean over chains of the least-squares slope of `ln τ_n` against `n` on
/// the trailing `window` impacts.
pub fn log_rate_estimator(chains: &[Chain], window: usize) -> Result<EstimateReport> {
    if window < 2 {
        return Err(Error::domain("window must be at least 2"));
    }
    if chains.is_empty() {
        return Err(Error::InsufficientData("no chains".into()));
    }
    let mut slopes = Vec::with_capacity(chains.len());
    for (i, c) in chains.iter().enumerate() {
        let len = c.records.len();
        if len < window {
            return Err(Error::InsufficientData(format!(
                "chain {i} has {len} impacts, window is {window}"
            )));
        }
        let tail = &c.records[len - window..];
        let xs: Vec<f64> = tail.iter().map(|r| r.n as f64).collect();
        let ys: Vec<f64> = tail.iter().map(|r| r.ln_tau).collect();
        if ys.iter().any(|y| !y.is_finite()) {
            return Err(Error::Numerical(format!(
                "chain {i} has a non-finite ln tau"
            )));
        }
        slopes.push(stats::fit_line(&xs, &ys).slope);
    }
    let (m, se) = stats::mean_se(&slopes);
    let mut flags = vec![];
    if chains.iter().any(|c| c.with_replacement) {
        flags.push("pool_reused".into());
    }
    Ok(EstimateReport {
        name: "log_rate".into(),
        estimate: m,
        ci_low: m - Z95 * se,
        ci_high: m + Z95 * se,
        n: chains.len(),
        method: format!("ols_trailing_{window}"),
        flags,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HillReport {
    pub report: EstimateReport,
    /// `(k, η̂_k)` over a geometric grid of `k`.
    pub stability: Vec<(usize, f64)>,
}

impl HillReport {
    pub fn stability_csv(&self) -> String {
        let mut out = String::from("k,eta_hat\n");
        for (k, e) in &self.stability {
            out.push_str(&format!("{k},{e:.10e}\n"));
        }
        out
    }
}

fn hill_sorted_desc(desc: &[f64], k: usize) -> f64 {
    let lk = desc[k].ln();
    let s: f64 = desc[..k].iter().map(|x| x.ln() - lk).sum();
    k as f64 / s
}

/// Hill estimate of the tail index from the top `k` order statistics
/// (default `⌊n^{2/3}⌋`). Non-finite and non-positive samples are dropped.
pub fn hill_tail_index(samples: &[f64], k: Option<usize>) -> Result<HillReport> {
    let mut desc: Vec<f64> = samples
        .iter()
        .copied()
        .filter(|x| *x > 0.0 && x.is_finite())
        .collect();
    let n = desc.len();
    let k = k.unwrap_or_else(|| (n as f64).powf(2.0 / 3.0).floor() as usize);
    if k < 10 || k > n / 2 {
        return Err(Error::domain(format!(
            "need 10 <= k <= n/2, got k = {k}, n = {n}"
        )));
    }
    desc.sort_by(|a, b| b.total_cmp(a));
    let eta = hill_sorted_desc(&desc, k);
    let half = Z95 * eta / (k as f64).sqrt();
    let mut stability = Vec::new();
    let mut kk = 10usize;
    while kk <= n / 2 {
        stability.push((kk, hill_sorted_desc(&desc, kk)));
        kk = ((kk as f64) * 1.25).ceil() as usize;
    }
    let mut flags = vec![];
    if n < samples.len() {
        flags.push(format!("dropped_{}", samples.len() - n));
    }
    Ok(HillReport {
        report: EstimateReport {
            name: "hill_tail_index".into(),
            estimate: eta,
            ci_low: eta - half,
            ci_high: eta + half,
            n,
            method: format!("hill_k{k}"),
            flags,
        },
        stability,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PersistenceReport {
    pub report: EstimateReport,
    /// `(t, P(τ₁ > t))` on the requested grid.
    pub survival: Vec<(f64, f64)>,
    pub discarded: usize,
}

impl PersistenceReport {
    pub fn survival_csv(&self) -> String {
        let mut out = String::from("t,survival\n");
        for (t, s) in &self.survival {
            out.push_str(&format!("{t:.10e},{s:.10e}\n"));
        }
        out
    }
}

/// Log-spaced grid of `points` times on `[t_min, t_max]`.
pub fn log_grid(t_min: f64, t_max: f64, points: usize) -> Vec<f64> {
    if points < 2 {
        return vec![t_min];
    }
    let (a, b) = (t_min.ln(), t_max.ln());
    (0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect()
}

fn survival_on_grid(sorted_times: &[f64], grid: &[f64]) -> Vec<f64> {
    let n = sorted_times.len() as f64;
    grid.iter()
        .map(|t| {
            let below = sorted_times.partition_point(|x| x <= t);
            (sorted_times.len() - below) as f64 / n
        })
        .collect()
}

fn log_slope(grid: &[f64], surv: &[f64]) -> f64 {
    let xs: Vec<f64> = grid.iter().map(|t| t.ln()).collect();
    let ys: Vec<f64> = surv.iter().map(|s| s.ln()).collect();
    stats::fit_line(&xs, &ys).slope
}

/// Slope of `ln P(τ₁ > t)` against `ln t` from one set of replicas started
/// at `start`, each censored at the last grid time.
pub fn persistence_slope(
    params: &StableParams,
    cfg: &PathConfig,
    start: (f64, f64),
    t_grid: &[f64],
    replicas: usize,
    seed: u64,
) -> Result<PersistenceReport> {
    let (x0, u0) = start;
    if !((x0 == 0.0 && u0 > 0.0) || (x0 > 0.0 && u0 >= 0.0)) {
        return Err(Error::domain(format!(
            "start ({x0}, {u0}) must have x, u >= 0 and not both zero"
        )));
    }
    if t_grid.len() < 2 {
        return Err(Error::InsufficientData(
            "time grid needs at least two points".into(),
        ));
    }
    if t_grid.windows(2).any(|w| !(w[1] > w[0])) || !(t_grid[0] > 0.0) {
        return Err(Error::domain("time grid must be positive and increasing"));
    }
    let t_max = *t_grid.last().unwrap();
    let outcomes: Vec<Result<Excursion>> = (0..replicas as u64)
        .into_par_iter()
        .map(|i| simulate_first_passage(params, cfg, x0, u0, t_max, &mut rng::stream(seed, i)))
        .collect();
    let mut times = Vec::with_capacity(replicas);
    let mut discarded = 0;
    for o in outcomes {
        match o {
            Ok(Excursion::Crossed(s)) => times.push(s.xi),
            Ok(Excursion::Censored { .. }) => times.push(f64::INFINITY),
            Err(Error::Numerical(_)) => discarded += 1,
            Err(e) => return Err(e),
        }
    }
    stats::sort_f64(&mut times);
    let survivors = times.iter().filter(|t| **t > t_max).count();
    if survivors < 100 {
        return Err(Error::InsufficientData(format!(
            "{survivors} survivors at t_max = {t_max}, need 100"
        )));
    }
    let surv = survival_on_grid(&times, t_grid);
    let slope = log_slope(t_grid, &surv);

    // bootstrap over replicas
    let n = times.len();
    let mut boot: Vec<f64> = (0..200u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = rng::stream(rng::child_seed(seed, 0xB007), r);
            let mut res: Vec<f64> = (0..n).map(|_| times[rng.random_range(0..n)]).collect();
            stats::sort_f64(&mut res);
            log_slope(t_grid, &survival_on_grid(&res, t_grid))
        })
        .collect();
    stats::sort_f64(&mut boot);
    let mut flags = vec![];
    if discarded > 0 {
        flags.push(format!("discarded_{discarded}"));
    }
    Ok(PersistenceReport {
        report: EstimateReport {
            name: "persistence_slope".into(),
            estimate: slope,
            ci_low: stats::quantile_sorted(&boot, 0.025),
            ci_high: stats::quantile_sorted(&boot, 0.975),
            n,
            method: "ols_log_survival_bootstrap".into(),
            flags,
        },
        survival: t_grid.iter().copied().zip(surv).collect(),
        discarded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum MomentTrend {
    Stabilizing,
    Growing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub lambda: f64,
    /// Running mean of `ξ^{−λ}` at dyadic sample sizes, in pool order.
    pub running: Vec<(usize, f64)>,
    /// Growth of the median block mean per doubling of the block size,
    /// fitted over the largest dyadic block sizes and taken as a median over
    /// shuffles.
    pub block_ratio: f64,
    pub trend: MomentTrend,
}

/// Ratio above which the block means are read as growing.
pub const GROWTH_THRESHOLD: f64 = 1.05;
const PROBE_SHUFFLES: u64 = 64;

/// Running means of `ξ^{−λ}`; an infinite moment shows up as a typical
/// block mean that keeps increasing with block size.
pub fn negative_moment_probe(xis: &[f64], lambdas: &[f64], seed: u64) -> Result<Vec<ProbeRow>> {
    let n = xis.len();
    if n < 64 {
        return Err(Error::InsufficientData(format!(
            "probe needs at least 64 samples, got {n}"
        )));
    }
    if xis.iter().any(|x| !(*x > 0.0)) {
        return Err(Error::domain("xi samples must be positive"));
    }
    lambdas
        .iter()
        .enumerate()
        .map(|(j, &lambda)| {
            let vals: Vec<f64> = xis.iter().map(|x| x.powf(-lambda)).collect();
            let mut running = Vec::new();
            let mut sum = 0.0;
            let mut next = 1usize;
            for (i, v) in vals.iter().enumerate() {
                sum += v;
                if i + 1 == next || i + 1 == n {
                    running.push((i + 1, sum / (i + 1) as f64));
                    next *= 2;
                }
            }
            let j_max = ((n / 16) as f64).log2().floor() as u32;
            let j_min = j_max.saturating_sub(6).max(1).min(j_max.saturating_sub(1));
            let mut ratios: Vec<f64> = (0..PROBE_SHUFFLES)
                .into_par_iter()
                .map(|r| {
                    let mut v = vals.clone();
                    v.shuffle(&mut rng::stream(rng::child_seed(seed, j as u64), r));
                    let (mut xs, mut ys) = (vec![], vec![]);
                    for jj in j_min..=j_max {
                        let m = 1usize << jj;
                        let mut means: Vec<f64> = v.chunks_exact(m).map(stats::mean).collect();
                        stats::sort_f64(&mut means);
                        xs.push(jj as f64);
                        ys.push(stats::quantile_sorted(&means, 0.5).log2());
                    }
                    stats::fit_line(&xs, &ys).slope.exp2()
                })
                .collect();
            stats::sort_f64(&mut ratios);
            let block_ratio = stats::quantile_sorted(&ratios, 0.5);
            let trend = if block_ratio > GROWTH_THRESHOLD {
                MomentTrend::Growing
            } else {
                MomentTrend::Stabilizing
            };
            Ok(ProbeRow {
                lambda,
                running,
                block_ratio,
                trend,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::boundary::BoundarySpec;
    use crate::engine::ExcursionEngine;
    use crate::path::{ExcursionSample, PoolProvenance};
    use crate::rng::stream;

    fn pareto(n: usize, index: f64, seed: u64) -> Vec<f64> {
        let mut r = stream(seed, 0);
        (0..n)
            .map(|_| (1.0 - r.random::<f64>()).powf(-1.0 / index))
            .collect()
    }

    fn pool_from(ells: &[f64]) -> Pool {
        Pool {
            samples: ells
                .iter()
                .map(|&ell| ExcursionSample { xi: 1.0, ell })
                .collect(),
            provenance: PoolProvenance {
                alpha: 2.0,
                rho: 0.5,
                seed: 0,
                cfg: PathConfig::default(),
                attempted: ells.len() as u64,
                censored: 0,
                discarded: 0,
            },
        }
    }

    #[test]
    fn hill_recovers_pareto_index() {
        let xs = pareto(100_000, 2.0, 51);
        let h = hill_tail_index(&xs, None).unwrap();
        assert!(
            (h.report.estimate - 2.0).abs() < 0.1,
            "{}",
            h.report.estimate
        );
        assert!(!h.stability.is_empty());
        assert!(h.stability_csv().starts_with("k,eta_hat\n10,"));
    }

    #[test]
    fn hill_rejects_bad_k() {
        let xs = pareto(100, 2.0, 52);
        assert!(matches!(
            hill_tail_index(&xs, Some(5)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            hill_tail_index(&xs, Some(60)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn mellin_edge_cases() {
        let pool = pool_from(&[-0.5, -1.0, -2.0, -4.0]);
        let r = empirical_mellin(&pool, 1.0, 1).unwrap();
        assert_eq!((r.estimate, r.ci_low, r.ci_high), (1.0, 1.0, 1.0));
        // the window for (2, 1/2) is (0, 3/2)
        assert!(matches!(
            empirical_mellin(&pool, 1.5, 1),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            empirical_mellin(&pool, 0.0, 1),
            Err(Error::Domain(_))
        ));
        let r = empirical_mellin(&pool, 1.25, 1).unwrap();
        assert_eq!(r.method, "bootstrap");
        assert_eq!(r.flags, vec!["infinite_variance".to_string()]);
        let r = empirical_mellin(&pool, 0.9, 1).unwrap();
        assert_eq!(r.method, "clt");
        let direct: f64 = [0.5f64, 1.0, 2.0, 4.0]
            .iter()
            .map(|x| x.powf(-0.1))
            .sum::<f64>()
            / 4.0;
        assert!((r.estimate - direct).abs() < 1e-14);
        assert!(r.to_json().starts_with("{\"name\":\"mellin(nu=0.9)\""));
    }

    #[test]
    fn constant_chain_has_zero_slope() {
        use crate::engine::{BounceRecord, Chain};
        let records: Vec<BounceRecord> = (1..=20)
            .map(|n| BounceRecord {
                n,
                tau_n: 5.0,
                u_pre: -1.0,
                v_restart: 1.0,
                beta_n: true,
                g_n: 0,
                ln_tau: 5f64.ln(),
                ln_v: 0.0,
            })
            .collect();
        let chain = Chain {
            records,
            with_replacement: false,
            absorbed: false,
        };
        let r = log_rate_estimator(&[chain.clone(), chain], 10).unwrap();
        assert_eq!(r.estimate, 0.0);
        assert!(matches!(
            log_rate_estimator(&[], 10),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn log_rate_needs_window() {
        let pool = pool_from(&[-1.0; 10]);
        let spec = BoundarySpec::elastic(2.0).unwrap();
        let p = StableParams::new(2.0, 0.5).unwrap();
        let e = ExcursionEngine::new(&spec, &p, &pool).unwrap();
        let chains = e.run_chains(5, 3, 1).unwrap();
        assert!(matches!(
            log_rate_estimator(&chains, 10),
            Err(Error::InsufficientData(_))
        ));
        // V_n = 2^n, ξ = 1: ln τ_n → 2n ln 2 + const
        let chains = e.run_chains(10, 3, 1).unwrap();
        let r = log_rate_estimator(&chains, 5).unwrap();
        assert!(
            (r.estimate - 2.0 * 2f64.ln()).abs() < 0.01,
            "{}",
            r.estimate
        );
    }

    #[test]
    fn persistence_grid_errors() {
        let p = StableParams::new(2.0, 0.5).unwrap();
        let cfg = PathConfig::default();
        assert!(matches!(
            persistence_slope(&p, &cfg, (0.0, 1.0), &[10.0], 100, 1),
            Err(Error::InsufficientData(_))
        ));
        assert!(matches!(
            persistence_slope(&p, &cfg, (0.0, 0.0), &[1.0, 10.0], 100, 1),
            Err(Error::Domain(_))
        ));
        // 50 replicas can never leave 100 survivors
        assert!(matches!(
            persistence_slope(&p, &cfg, (0.0, 1.0), &[1.0, 10.0], 50, 1),
            Err(Error::InsufficientData(_))
        ));
    }

    #[test]
    fn probe_on_synthetic_uniforms() {
        // ξ uniform on (0,1): E ξ^{−λ} < ∞ iff λ < 1
        let mut r = stream(53, 0);
        let xs: Vec<f64> = (0..100_000).map(|_| 1.0 - r.random::<f64>()).collect();
        let rows = negative_moment_probe(&xs, &[0.0, 0.5, 1.2], 3).unwrap();
        assert!(rows[0].running.iter().all(|(_, m)| *m == 1.0));
        assert_eq!(rows[0].trend, MomentTrend::Stabilizing);
        assert_eq!(rows[1].trend, MomentTrend::Stabilizing);
        assert_eq!(
            rows[2].trend,
            MomentTrend::Growing,
            "{:?}",
            rows.iter().map(|r| r.block_ratio).collect::<Vec<_>>()
        );
        assert_eq!(rows[1].running.last().unwrap().0, 100_000);
    }

    #[test]
    fn log_grid_spans_endpoints() {
        let g = log_grid(1.0, 100.0, 5);
        assert!((g[0] - 1.0).abs() < 1e-12 && (g[4] - 100.0).abs() < 1e-9);
        assert!((g[2] - 10.0).abs() < 1e-9);
    }
}
