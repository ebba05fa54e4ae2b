//! Empirical boundary traces: histograms of incoming and outgoing impact
//! velocities over time, the binned boundary relation, and the summability
//! of `P(τ_n ≤ T)`.

use rayon::prelude::*;
use serde::Serialize;

use crate::analytics::c_crit_of;
use crate::boundary::BoundarySpec;
use crate::engine::ExcursionEngine;
use crate::error::{Error, Result};
use crate::path::{simulate_confined_path, PathConfig};
use crate::rng;
use crate::stable::StableParams;

pub use crate::boundary::{maxwellian_m, sample_maxwellian};

/// Binning of `[0, T] × [0, ∞)`: uniform in time; in speed one bin
/// `[0, u_min)`, geometric bins up to `u_max`, one overflow bin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceBins {
    pub t_bins: usize,
    pub u_bins: usize,
    pub u_min: f64,
    pub u_max: f64,
}

impl Default for TraceBins {
    fn default() -> Self {
        TraceBins {
            t_bins: 10,
            u_bins: 32,
            u_min: 1e-3,
            u_max: 1e2,
        }
    }
}

impl TraceBins {
    fn validate(&self) -> Result<()> {
        if self.t_bins == 0 || self.u_bins < 3 {
            return Err(Error::domain("need t_bins >= 1 and u_bins >= 3"));
        }
        if !(self.u_min > 0.0 && self.u_max > self.u_min && self.u_max.is_finite()) {
            return Err(Error::domain("need 0 < u_min < u_max < inf"));
        }
        Ok(())
    }

    fn u_edges(&self) -> Vec<f64> {
        let inner = self.u_bins - 2;
        let mut e = vec![0.0];
        let r = (self.u_max / self.u_min).ln() / inner as f64;
        for i in 0..=inner {
            e.push(self.u_min * (r * i as f64).exp());
        }
        *e.last_mut().unwrap() = self.u_max;
        e.push(f64::INFINITY);
        e
    }
}

fn bin_of(edges: &[f64], v: f64) -> usize {
    let nb = edges.len() - 1;
    edges
        .partition_point(|e| *e <= v)
        .saturating_sub(1)
        .min(nb - 1)
}

/// Counts of impacts per `(time bin, speed bin)`; masses are counts divided
/// by the number of replicas.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceHistogram {
    pub horizon: f64,
    /// Driver of the simulated paths.
    pub alpha: f64,
    pub rho: f64,
    pub t_edges: Vec<f64>,
    pub u_edges: Vec<f64>,
    /// `|U_{τ_n⁻}|` of each impact.
    pub counts_in: Vec<Vec<u64>>,
    /// `U_{τ_n}` of each impact, including zero restarts.
    pub counts_out: Vec<Vec<u64>>,
    pub total_events: u64,
    pub replicas: u64,
    pub discarded: u64,
}

impl TraceHistogram {
    fn empty(horizon: f64, params: &StableParams, bins: &TraceBins) -> Self {
        let t_edges = (0..=bins.t_bins)
            .map(|i| horizon * i as f64 / bins.t_bins as f64)
            .collect();
        let u_edges = bins.u_edges();
        let row = vec![0u64; bins.u_bins];
        TraceHistogram {
            horizon,
            alpha: params.alpha(),
            rho: params.rho(),
            t_edges,
            u_edges,
            counts_in: vec![row.clone(); bins.t_bins],
            counts_out: vec![row; bins.t_bins],
            total_events: 0,
            replicas: 0,
            discarded: 0,
        }
    }

    fn merge(mut self, other: TraceHistogram) -> Self {
        for (a, b) in self.counts_in.iter_mut().zip(&other.counts_in) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        for (a, b) in self.counts_out.iter_mut().zip(&other.counts_out) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
        self.total_events += other.total_events;
        self.replicas += other.replicas;
        self.discarded += other.discarded;
        self
    }

    fn record(&mut self, tau: f64, u_in: f64, u_out: f64) {
        let nt = self.t_edges.len() - 1;
        let t = ((tau / self.horizon * nt as f64) as usize).min(nt - 1);
        let i = bin_of(&self.u_edges, u_in);
        let o = bin_of(&self.u_edges, u_out);
        self.counts_in[t][i] += 1;
        self.counts_out[t][o] += 1;
        self.total_events += 1;
    }

    pub fn mass_in(&self, t: usize, u: usize) -> f64 {
        self.counts_in[t][u] as f64 / self.replicas.max(1) as f64
    }

    pub fn mass_out(&self, t: usize, u: usize) -> f64 {
        self.counts_out[t][u] as f64 / self.replicas.max(1) as f64
    }

    pub fn total_mass_in(&self) -> f64 {
        self.counts_in.iter().flatten().sum::<u64>() as f64 / self.replicas.max(1) as f64
    }

    pub fn total_mass_out(&self) -> f64 {
        self.counts_out.iter().flatten().sum::<u64>() as f64 / self.replicas.max(1) as f64
    }

    /// Outgoing speed marginal over all time bins, as probabilities.
    pub fn out_marginal(&self) -> Vec<f64> {
        let nu = self.u_edges.len() - 1;
        let mut m = vec![0.0; nu];
        for row in &self.counts_out {
            for (a, c) in m.iter_mut().zip(row) {
                *a += *c as f64;
            }
        }
        let total: f64 = m.iter().sum();
        if total > 0.0 {
            m.iter_mut().for_each(|x| *x /= total);
        }
        m
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!(
            "# trace v1; T={}; bins={}x{}; events={}; replicas={}\n",
            self.horizon,
            self.t_edges.len() - 1,
            self.u_edges.len() - 1,
            self.total_events,
            self.replicas
        );
        out.push_str("t_bin,u_bin,mass_in,mass_out\n");
        for t in 0..self.t_edges.len() - 1 {
            for u in 0..self.u_edges.len() - 1 {
                out.push_str(&format!(
                    "{t},{u},{:.10e},{:.10e}\n",
                    self.mass_in(t, u),
                    self.mass_out(t, u)
                ));
            }
        }
        out
    }
}

/// Histogram every impact of `replicas` confined paths on `[0, T]`.
/// Replica `i` uses stream `(seed, i)`.
#[allow(clippy::too_many_arguments)]
pub fn build_trace(
    spec: &BoundarySpec,
    params: &StableParams,
    cfg: &PathConfig,
    horizon: f64,
    replicas: usize,
    bins: &TraceBins,
    seed: u64,
) -> Result<TraceHistogram> {
    bins.validate()?;
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::domain("horizon must be positive and finite"));
    }
    if replicas < 1000 {
        return Err(Error::domain(format!(
            "need at least 1000 replicas, got {replicas}"
        )));
    }
    let hist = (0..replicas as u64)
        .into_par_iter()
        .map(|i| -> Result<TraceHistogram> {
            let mut h = TraceHistogram::empty(horizon, params, bins);
            h.replicas = 1;
            let mut rng = rng::stream(seed, i);
            let u0 = spec.u0_law.sample(&mut rng);
            match simulate_confined_path(0.0, u0, params, spec, cfg, horizon, None, &mut rng) {
                Ok(path) => {
                    for b in &path.bounces {
                        h.record(b.tau_n, b.u_pre.abs(), b.v_restart);
                    }
                }
                Err(Error::Numerical(_)) => h.discarded = 1,
                Err(e) => return Err(e),
            }
            Ok(h)
        })
        .try_reduce(
            || TraceHistogram::empty(horizon, params, bins),
            |a, b| Ok(a.merge(b)),
        )?;
    Ok(hist)
}

/// Weighting of the two re-emission terms in the binned relation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WeightConvention {
    /// Elastic term weighted by `p`, diffusive term by `1 − p`, as in the
    /// particle model.
    Model,
    /// Elastic term weighted by `1 − p`, diffusive term by `p`.
    Swapped,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RelationReport {
    pub convention: WeightConvention,
    /// Mass-weighted mean over time bins of the total-variation distance.
    pub score: f64,
    pub per_time_bin: Vec<f64>,
    pub flags: Vec<String>,
}

/// Fraction of a source speed bin that lands in `[t_lo, t_hi)` after the
/// map `u ↦ c u`. The first bin is taken uniform, the others log-uniform.
fn transfer_fraction(src_lo: f64, src_hi: f64, c: f64, t_lo: f64, t_hi: f64) -> f64 {
    if c == 0.0 {
        return if t_lo == 0.0 { 1.0 } else { 0.0 };
    }
    if src_lo == 0.0 {
        let (a, b) = (0.0f64, c * src_hi);
        let ov = (b.min(t_hi) - a.max(t_lo)).max(0.0);
        return ov / (b - a);
    }
    // overflow bin: spread over one decade
    let hi = if src_hi.is_finite() {
        src_hi
    } else {
        src_lo * 10.0
    };
    let (a, b) = ((c * src_lo).ln(), (c * hi).ln());
    let lo_t = if t_lo > 0.0 {
        t_lo.ln()
    } else {
        f64::NEG_INFINITY
    };
    let hi_t = t_hi.ln();
    let ov = (b.min(hi_t) - a.max(lo_t)).max(0.0);
    ov / (b - a)
}

/// Binned check of the boundary relation: outgoing mass per time bin versus
/// the elastic image of the incoming mass plus re-emission of the incoming
/// flux with the wall law.
pub fn check_boundary_relation(
    h: &TraceHistogram,
    spec: &BoundarySpec,
    convention: WeightConvention,
) -> Result<RelationReport> {
    let nt = h.t_edges.len().saturating_sub(1);
    let nu = h.u_edges.len().saturating_sub(1);
    if nt == 0
        || nu == 0
        || h.counts_in.len() != nt
        || h.counts_out.len() != nt
        || h.counts_in
            .iter()
            .chain(&h.counts_out)
            .any(|r| r.len() != nu)
    {
        return Err(Error::domain("histogram shape does not match its edges"));
    }
    if h.rho != 0.5 {
        return Err(Error::domain(format!(
            "boundary relation needs a symmetric driver, got rho = {}",
            h.rho
        )));
    }
    let (w_el, w_diff) = match convention {
        WeightConvention::Model => (spec.p, 1.0 - spec.p),
        WeightConvention::Swapped => (1.0 - spec.p, spec.p),
    };
    if w_el > 0.0 && spec.c == 0.0 {
        return Err(Error::domain("elastic term needs c > 0"));
    }
    let mut flags = vec![];
    if spec.theta != 1.0 {
        flags.push("theta_not_one".to_string());
    }
    if h.total_events == 0 {
        flags.push("Empty".to_string());
        return Ok(RelationReport {
            convention,
            score: 0.0,
            per_time_bin: vec![0.0; nt],
            flags,
        });
    }
    let edges = &h.u_edges;
    let law: Vec<f64> = (0..nu)
        .map(|b| spec.m_law.cdf(edges[b + 1]) - spec.m_law.cdf(edges[b]))
        .collect();
    let transfer: Vec<Vec<f64>> = (0..nu)
        .map(|j| {
            (0..nu)
                .map(|b| transfer_fraction(edges[j], edges[j + 1], spec.c, edges[b], edges[b + 1]))
                .collect()
        })
        .collect();
    let mut per = vec![0.0; nt];
    let (mut num, mut den) = (0.0, 0.0);
    for (t, score) in per.iter_mut().enumerate() {
        let incoming: Vec<f64> = h.counts_in[t].iter().map(|&c| c as f64).collect();
        let flux: f64 = incoming.iter().sum();
        let obs: Vec<f64> = h.counts_out[t].iter().map(|&c| c as f64).collect();
        let mass: f64 = obs.iter().sum();
        if mass == 0.0 {
            continue;
        }
        let mut pred = vec![0.0; nu];
        for (j, inc) in incoming.iter().enumerate() {
            if *inc == 0.0 {
                continue;
            }
            for b in 0..nu {
                pred[b] += w_el * inc * transfer[j][b];
            }
        }
        for b in 0..nu {
            pred[b] += w_diff * flux * law[b];
        }
        let ps: f64 = pred.iter().sum();
        let tv = if ps > 0.0 {
            0.5 * pred
                .iter()
                .zip(&obs)
                .map(|(p, o)| (p / ps - o / mass).abs())
                .sum::<f64>()
        } else {
            1.0
        };
        *score = tv;
        num += tv * mass;
        den += mass;
    }
    Ok(RelationReport {
        convention,
        score: num / den,
        per_time_bin: per,
        flags,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct P2Report {
    /// `P(τ_n ≤ T)` for `n = 1, …, n_max`.
    pub probabilities: Vec<f64>,
    pub partial_sums: Vec<f64>,
    /// Pooled ratio `P(τ_{n+1} ≤ T) / P(τ_n ≤ T)` with its standard error,
    /// absent when `n_max = 1`.
    pub ratio: Option<f64>,
    pub ratio_se: Option<f64>,
    pub replicas: usize,
}

/// Minimum count at level `n` for it to enter the ratio fit.
pub const P2_MIN_COUNT: u64 = 30;

/// Replica estimates of `P(τ_n ≤ T)` from the impact recursion.
pub fn p2_summability(
    engine: &ExcursionEngine<'_>,
    horizon: f64,
    n_max: usize,
    replicas: usize,
    seed: u64,
) -> Result<P2Report> {
    let params = engine.params();
    let spec = engine.spec();
    if !params.is_symmetric() {
        return Err(Error::domain(format!(
            "summability check needs a symmetric driver, got rho = {}",
            params.rho()
        )));
    }
    if spec.p == 1.0 && spec.c <= c_crit_of(params.alpha(), params.rho())? {
        return Err(Error::domain("p = 1 needs c > c_crit"));
    }
    if n_max == 0 || replicas == 0 || !(horizon > 0.0) {
        return Err(Error::domain("need n_max, replicas >= 1 and T > 0"));
    }
    let ln_t = horizon.ln();
    let counts = (0..replicas as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<u64>> {
            let chain = engine.run_chain(n_max, &mut rng::stream(seed, i))?;
            let mut c = vec![0u64; n_max];
            for (k, r) in chain.records.iter().enumerate() {
                if r.ln_tau > ln_t {
                    break;
                }
                c[k] = 1;
            }
            if chain.absorbed && chain.records.last().is_some_and(|r| r.ln_tau <= ln_t) {
                c.iter_mut().skip(chain.records.len()).for_each(|x| *x = 1);
            }
            Ok(c)
        })
        .try_reduce(
            || vec![0u64; n_max],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;
    let probabilities: Vec<f64> = counts.iter().map(|&c| c as f64 / replicas as f64).collect();
    let partial_sums = probabilities
        .iter()
        .scan(0.0, |s, p| {
            *s += p;
            Some(*s)
        })
        .collect();
    let (ratio, ratio_se) = if n_max == 1 {
        (None, None)
    } else {
        let (mut num, mut den) = (0u64, 0u64);
        for k in 0..n_max - 1 {
            if counts[k] >= P2_MIN_COUNT {
                num += counts[k + 1];
                den += counts[k];
            }
        }
        if den == 0 {
            return Err(Error::InsufficientData(format!(
                "no level reaches {P2_MIN_COUNT} replicas with tau_n <= T"
            )));
        }
        let r = num as f64 / den as f64;
        (Some(r), Some((r * (1.0 - r) / den as f64).sqrt()))
    };
    Ok(P2Report {
        probabilities,
        partial_sums,
        ratio,
        ratio_se,
        replicas,
    })
}
