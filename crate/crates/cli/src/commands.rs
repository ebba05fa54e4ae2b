use std::io::{self, Write};
use std::path::Path;

use langevin_wall::analytics::{
    c_crit_of, classify_regime, eta_c_solve, log_moment_ell, mellin_ell, sumgn_closed_form, Regime,
};
use langevin_wall::engine::{empirical_g_law, ExcursionEngine, VerdictKind};
use langevin_wall::estimators::{
    empirical_mellin, hill_tail_index, log_grid, log_rate_estimator, persistence_slope,
};
use langevin_wall::path::{harvest_pool, simulate_first_passage, Excursion, PathConfig, Pool};
use langevin_wall::pool_io::{read_pool, write_pool};
use langevin_wall::rng::{child_seed, stream};
use langevin_wall::stats::{ks_distance, mean_se, quantile_sorted, sort_f64};
use langevin_wall::trace::{build_trace, check_boundary_relation, TraceBins, WeightConvention};
use langevin_wall::{BoundarySpec, SpeedLaw, StableParams};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::output::Run;
use crate::{
    Common, Failure, HarvestArgs, MellinArgs, PersistenceArgs, PoolSource, RateArgs, RegimeArgs,
    TailArgs, TraceArgs, VerifyArgs, Wall,
};

fn config_of<T: Serialize>(args: &T) -> Value {
    serde_json::to_value(args).expect("arguments serialise")
}

fn start(
    command: &'static str,
    common: &Common,
    workers: usize,
    config: Value,
) -> Result<Run, Failure> {
    Run::new(command, common.seed, workers, &common.out_dir, config)
}

fn params(c: &Common) -> Result<StableParams, Failure> {
    Ok(StableParams::new(c.alpha, c.rho)?)
}

fn path_config(c: &Common) -> Result<PathConfig, Failure> {
    let defaults = PathConfig::default();
    let cfg = PathConfig {
        dt_base: c.dt_base,
        dt_min: c.dt_base * defaults.dt_min / defaults.dt_base,
        ..defaults
    };
    cfg.validate()?;
    Ok(cfg)
}

fn wall(w: &Wall) -> Result<BoundarySpec, Failure> {
    let law = SpeedLaw::maxwellian(w.maxwell_theta)?;
    Ok(BoundarySpec::new(w.p, w.c, w.theta, law.clone(), law)?)
}

/// The pool named by `--pool`, or a fresh one seeded from the run seed.
fn pool(src: &PoolSource, c: &Common) -> Result<Pool, Failure> {
    let params = params(c)?;
    match &src.pool {
        Some(path) => {
            let pool = read_pool(path)?;
            let (a, r) = (pool.provenance.alpha, pool.provenance.rho);
            if a != params.alpha() || r != params.rho() {
                return Err(Failure::Usage(format!(
                    "pool {} was harvested at alpha={a}, rho={r}; pass matching --alpha/--rho",
                    path.display()
                )));
            }
            Ok(pool)
        }
        None => Ok(harvest_pool(
            &params,
            &path_config(c)?,
            src.pool_size,
            child_seed(c.seed, 1),
        )?),
    }
}

fn pool_summary(pool: &Pool, src: &PoolSource) -> Value {
    json!({
        "source": src.pool.as_ref().map_or("harvested".to_string(), |p| p.display().to_string()),
        "size": pool.len(),
        "seed": pool.provenance.seed,
        "censored": pool.provenance.censored,
        "discarded": pool.provenance.discarded,
    })
}

/// Writes to stdout, ignoring a closed pipe.
fn say(text: &str) {
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn emit(doc: &Value) {
    say(&serde_json::to_string_pretty(doc).expect("json value serialises"));
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    sort_f64(&mut v);
    Some(quantile_sorted(&v, 0.5))
}

pub fn harvest(a: &HarvestArgs, workers: usize) -> Result<(), Failure> {
    let run = start("harvest", &a.common, workers, config_of(a))?;
    if a.count == 0 {
        return Err(Failure::Usage("--count must be at least 1".into()));
    }
    let params = params(&a.common)?;
    let pool = harvest_pool(&params, &path_config(&a.common)?, a.count, a.common.seed)?;
    let name = a.name.clone().unwrap_or_else(|| {
        format!(
            "pool_alpha{}_rho{}_seed{}.csv",
            a.common.alpha, a.common.rho, a.common.seed
        )
    });
    if Path::new(&name).components().count() != 1 {
        return Err(Failure::Usage(format!(
            "--name must be a plain file name, got {name}"
        )));
    }
    write_pool(&pool, &run.path(&name))?;
    emit(&json!({
        "provenance": run.provenance(),
        "file": run.path(&name).display().to_string(),
        "count": pool.len(),
        "attempted": pool.provenance.attempted,
        "censored": pool.provenance.censored,
        "discarded": pool.provenance.discarded,
        "censored_fraction": pool.provenance.censored_fraction(),
    }));
    Ok(())
}

pub fn regime(a: &RegimeArgs, workers: usize) -> Result<(), Failure> {
    let run = start("regime", &a.common, workers, config_of(a))?;
    let params = params(&a.common)?;
    let spec = wall(&a.wall)?;
    let predicted = classify_regime(&spec, &params);
    let pool = pool(&a.pool, &a.common)?;
    let engine = ExcursionEngine::new(&spec, &params, &pool)?;
    let verdicts = engine.tau_infinity_batch(
        a.tolerance,
        a.n_max,
        a.replicas,
        child_seed(a.common.seed, 2),
    )?;
    let count = |k| verdicts.iter().filter(|v| v.verdict == k).count();
    let (absorbed, diverging, undecided) = (
        count(VerdictKind::Absorbed),
        count(VerdictKind::Diverging),
        count(VerdictKind::Undecided),
    );
    let majority = [
        (absorbed, VerdictKind::Absorbed),
        (diverging, VerdictKind::Diverging),
        (undecided, VerdictKind::Undecided),
    ]
    .into_iter()
    .max_by_key(|(n, _)| *n)
    .map(|(_, k)| k)
    .expect("three entries");
    let estimates = |k| {
        median(
            verdicts
                .iter()
                .filter(|v| v.verdict == k)
                .map(|v| v.estimate)
                .collect(),
        )
    };
    let agrees = matches!(
        (predicted.regime, majority),
        (Regime::Sticky, VerdictKind::Absorbed)
            | (Regime::NonSticky, VerdictKind::Diverging)
            | (Regime::Critical, VerdictKind::Undecided)
    );
    let doc = run.write_json(
        "regime.json",
        json!({
            "predicted": predicted,
            "critical": predicted.regime == Regime::Critical,
            "empirical": {
                "absorbed": absorbed,
                "diverging": diverging,
                "undecided": undecided,
                "majority": majority,
                "median_tau_inf": estimates(VerdictKind::Absorbed),
                "median_rate": estimates(VerdictKind::Diverging),
            },
            "agrees": agrees,
            "pool": pool_summary(&pool, &a.pool),
        }),
    )?;
    emit(&doc);
    Ok(())
}

struct Check {
    name: &'static str,
    pass: bool,
    detail: String,
}

/// Law-based sum over every last-diffusive index, for the closed-form check.
#[allow(clippy::too_many_arguments)]
fn sumgn_by_law(
    n: usize,
    alpha: f64,
    lambda: f64,
    p: f64,
    theta: f64,
    cm: f64,
    mu: f64,
    mm: f64,
) -> f64 {
    let ta = theta.powf(alpha * lambda);
    let mut total = 0.0;
    for k in 1..=n {
        total += p.powi(k as i32 - 1) * mu * cm.powi(k as i32);
        for l in 1..k {
            total += (1.0 - p)
                * p.powi((k - l - 1) as i32)
                * ta.powi(l as i32)
                * mm
                * cm.powi((k - l) as i32);
        }
    }
    total
}

pub fn verify(a: &VerifyArgs, workers: usize) -> Result<(), Failure> {
    let run = start("verify", &a.common, workers, config_of(a))?;
    let params = params(&a.common)?;
    let (alpha, rho) = (params.alpha(), params.rho());
    // domain problems surface before any simulation
    let exact_mellin =
        a.nu.iter()
            .map(|&nu| mellin_ell(alpha, rho, nu).map(|m| (nu, m)))
            .collect::<Result<Vec<_>, _>>()?;
    let pool = pool(&a.pool, &a.common)?;
    let mut checks = vec![];

    let bad = pool
        .samples
        .iter()
        .filter(|s| !(s.xi > 0.0 && s.ell < 0.0))
        .count();
    checks.push(Check {
        name: "signs",
        pass: bad == 0,
        detail: format!("{bad} of {} samples with xi <= 0 or ell >= 0", pool.len()),
    });

    let frac = pool.provenance.censored_fraction();
    checks.push(Check {
        name: "censoring",
        pass: frac < 1e-3,
        detail: format!("censored fraction {frac:.2e}"),
    });

    let unit = empirical_mellin(&pool, 1.0, a.common.seed)?.estimate;
    checks.push(Check {
        name: "mellin nu=1",
        pass: unit == 1.0,
        detail: format!("{unit}"),
    });
    for &(nu, exact) in &exact_mellin {
        let est = empirical_mellin(&pool, nu, child_seed(a.common.seed, 3))?.estimate;
        let rel = ((est - exact) / exact).abs();
        checks.push(Check {
            name: "mellin",
            pass: rel < 0.05,
            detail: format!("nu={nu}: {est:.5} vs {exact:.5} (rel {rel:.2e})"),
        });
    }

    let logs: Vec<f64> = pool.ells().iter().map(|l| l.abs().ln()).collect();
    let (m, se) = mean_se(&logs);
    let target = log_moment_ell(alpha, rho)?;
    let rel = ((m - target) / target).abs();
    checks.push(Check {
        name: "log-moment",
        pass: rel < 0.03,
        detail: format!("E ln|ell| {m:.5} vs {target:.5} (rel {rel:.2e})"),
    });

    let cc = c_crit_of(alpha, rho)?;
    let below = (0.5 * cc).ln() + m;
    let above = (2.0 * cc).ln() + m;
    checks.push(Check {
        name: "drift dichotomy",
        pass: below + 3.0 * se < 0.0 && above - 3.0 * se > 0.0,
        detail: format!("drift {below:.4} at c_crit/2, {above:.4} at 2 c_crit (se {se:.4})"),
    });

    let h = 1e-5;
    let fd = (mellin_ell(alpha, rho, 1.0 + h)? - mellin_ell(alpha, rho, 1.0 - h)?) / (2.0 * h);
    let rel = ((fd + cc.ln()) / cc.ln()).abs();
    checks.push(Check {
        name: "mellin slope",
        pass: rel < 1e-6,
        detail: format!("derivative at 1: {fd:.8} vs {:.8}", -cc.ln()),
    });

    let etas = (1..=20)
        .map(|i| eta_c_solve(alpha, rho, cc * i as f64 / 21.0))
        .collect::<Result<Vec<_>, _>>()?;
    checks.push(Check {
        name: "eta(c) monotone",
        pass: etas.windows(2).all(|w| w[1] < w[0]),
        detail: format!("eta(c) from {:.4} to {:.4} on 20 points", etas[0], etas[19]),
    });

    let glaw = empirical_g_law(
        &BoundarySpec::new(
            0.5,
            0.5,
            1.0,
            SpeedLaw::PointMass(1.0),
            SpeedLaw::PointMass(1.0),
        )?,
        5,
        100_000,
        child_seed(a.common.seed, 4),
    )?;
    checks.push(Check {
        name: "g-law",
        pass: glaw.tv < 0.01,
        detail: format!("TV {:.5}", glaw.tv),
    });

    let vectors = [
        (2.0, 0.10, 0.5, 0.5, 0.7, 1.3, 2.1),
        (1.5, 0.05, 0.8, 0.9, 0.95, 1.0, 1.0),
        (0.7, 0.30, 0.1, 3.0, 0.3, 2.2, 5.0),
    ];
    let mut worst: f64 = 0.0;
    for &(al, l, p, th, cm, mu, mm) in &vectors {
        for n in 1..=10 {
            let closed = sumgn_closed_form(n, al, l, p, th, cm, mu, mm)?;
            let oracle = sumgn_by_law(n, al, l, p, th, cm, mu, mm);
            worst = worst.max(((closed - oracle) / oracle).abs());
        }
    }
    checks.push(Check {
        name: "sum-g",
        pass: worst < 1e-12,
        detail: format!("max relative error {worst:.2e}"),
    });

    if a.scaling_samples > 0 {
        let v = 2.0;
        let cfg = pool.provenance.cfg.clone();
        let seed = child_seed(a.common.seed, 5);
        let direct: Vec<f64> = (0..a.scaling_samples as u64)
            .into_par_iter()
            .map(|i| {
                simulate_first_passage(&params, &cfg, 0.0, v, cfg.horizon_cap, &mut stream(seed, i))
            })
            .collect::<Result<Vec<_>, _>>()?
            .into_iter()
            .filter_map(|e| match e {
                Excursion::Crossed(s) => Some(s.ell),
                Excursion::Censored { .. } => None,
            })
            .collect();
        let scaled: Vec<f64> = pool.ells().iter().map(|l| v * l).collect();
        let d = ks_distance(&direct, &scaled);
        let tol = 0.02f64.max(
            1.63 * ((direct.len() + scaled.len()) as f64 / (direct.len() * scaled.len()) as f64)
                .sqrt(),
        );
        checks.push(Check {
            name: "scaling",
            pass: d < tol,
            detail: format!(
                "KS {d:.4} (limit {tol:.4}) between direct (0,2) starts and the rescaled pool"
            ),
        });
    }

    for c in &checks {
        say(&format!(
            "{} {}: {}",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        ));
    }
    let all = checks.iter().all(|c| c.pass);
    run.write_json(
        "verify.json",
        json!({
            "passed": all,
            "pool": pool_summary(&pool, &a.pool),
            "checks": checks.iter().map(|c| json!({"name": c.name, "pass": c.pass, "detail": c.detail})).collect::<Vec<_>>(),
        }),
    )?;
    if all {
        Ok(())
    } else {
        Err(Failure::Verify)
    }
}

pub fn rate(a: &RateArgs, workers: usize) -> Result<(), Failure> {
    let run = start("rate", &a.common, workers, config_of(a))?;
    let params = params(&a.common)?;
    let spec = wall(&a.wall)?;
    let predicted = classify_regime(&spec, &params);
    let pool = pool(&a.pool, &a.common)?;
    let engine = ExcursionEngine::new(&spec, &params, &pool)?;
    let chains = engine.run_chains(a.n_max, a.chains, child_seed(a.common.seed, 2))?;
    let window = a.window.unwrap_or(a.n_max / 2);
    let est = log_rate_estimator(&chains, window)?;
    let mut csv = String::from("n,mean_ln_tau\n");
    for n in 0..a.n_max {
        let vals: Vec<f64> = chains
            .iter()
            .filter_map(|c| c.records.get(n).map(|r| r.ln_tau))
            .collect();
        if vals.is_empty() {
            break;
        }
        csv.push_str(&format!(
            "{},{:.10e}\n",
            n + 1,
            vals.iter().sum::<f64>() / vals.len() as f64
        ));
    }
    run.write_csv("rate.csv", &csv)?;
    let doc = run.write_json(
        "rate.json",
        json!({
            "estimate": est,
            "predicted_rate": predicted.predicted_rate,
            "regime": predicted.regime,
            "pool": pool_summary(&pool, &a.pool),
        }),
    )?;
    emit(&doc);
    Ok(())
}

pub fn tail(a: &TailArgs, workers: usize) -> Result<(), Failure> {
    let run = start("tail", &a.common, workers, config_of(a))?;
    let params = params(&a.common)?;
    let spec = wall(&a.wall)?;
    let predicted = classify_regime(&spec, &params);
    let pool = pool(&a.pool, &a.common)?;
    let engine = ExcursionEngine::new(&spec, &params, &pool)?;
    let verdicts = engine.tau_infinity_batch(
        a.tolerance,
        a.n_max,
        a.replicas,
        child_seed(a.common.seed, 2),
    )?;
    let taus: Vec<f64> = verdicts
        .iter()
        .filter(|v| v.verdict == VerdictKind::Absorbed)
        .map(|v| v.estimate)
        .collect();
    let hill = hill_tail_index(&taus, a.k)?;
    run.write_csv("tail_stability.csv", &hill.stability_csv())?;
    let doc = run.write_json(
        "tail.json",
        json!({
            "estimate": hill.report,
            "predicted_index": predicted.moment_frontier.upper,
            "regime": predicted.regime,
            "absorbed": taus.len(),
            "replicas": a.replicas,
            "pool": pool_summary(&pool, &a.pool),
        }),
    )?;
    emit(&doc);
    Ok(())
}

pub fn persistence(a: &PersistenceArgs, workers: usize) -> Result<(), Failure> {
    let run = start("persistence", &a.common, workers, config_of(a))?;
    let params = params(&a.common)?;
    if !(a.tmin > 0.0 && a.tmax > a.tmin) {
        return Err(Failure::Usage("need 0 < tmin < tmax".into()));
    }
    let grid = log_grid(a.tmin, a.tmax, a.points);
    let r = persistence_slope(
        &params,
        &path_config(&a.common)?,
        (a.x0, a.u0),
        &grid,
        a.replicas,
        a.common.seed,
    )?;
    run.write_csv("persistence_survival.csv", &r.survival_csv())?;
    let doc = run.write_json(
        "persistence.json",
        json!({
            "estimate": r.report,
            "predicted_slope": -params.eta(),
            "discarded": r.discarded,
        }),
    )?;
    emit(&doc);
    Ok(())
}

pub fn trace(a: &TraceArgs, workers: usize) -> Result<(), Failure> {
    let run = start("trace", &a.common, workers, config_of(a))?;
    let params = params(&a.common)?;
    let spec = wall(&a.wall)?;
    let bins = TraceBins {
        t_bins: a.t_bins,
        u_bins: a.u_bins,
        ..TraceBins::default()
    };
    let h = build_trace(
        &spec,
        &params,
        &path_config(&a.common)?,
        a.horizon,
        a.replicas,
        &bins,
        a.common.seed,
    )?;
    let csv = h.to_csv();
    let (first, rest) = csv.split_once('\n').expect("trace csv has a header");
    run.write("trace.csv", &format!("{first}\n{}{rest}", run.header()))?;
    let relation = if params.is_symmetric() {
        let model = check_boundary_relation(&h, &spec, WeightConvention::Model)?;
        let swapped = check_boundary_relation(&h, &spec, WeightConvention::Swapped)?;
        let better = if model.score <= swapped.score {
            model.convention
        } else {
            swapped.convention
        };
        json!({ "model": model, "swapped": swapped, "supported": better })
    } else {
        json!({ "skipped": "the boundary relation is only checked for symmetric drivers (rho = 1/2)" })
    };
    let doc = run.write_json(
        "trace.json",
        json!({
            "events": h.total_events,
            "replicas": h.replicas,
            "discarded": h.discarded,
            "relation": relation,
        }),
    )?;
    emit(&doc);
    Ok(())
}

pub fn mellin(a: &MellinArgs, workers: usize) -> Result<(), Failure> {
    let run = start("mellin", &a.common, workers, config_of(a))?;
    let params = params(&a.common)?;
    for &nu in &a.nu {
        mellin_ell(params.alpha(), params.rho(), nu)?;
    }
    let pool = pool(&a.pool, &a.common)?;
    let mut rows = vec![];
    let mut csv = String::from("nu,estimate,ci_low,ci_high,exact\n");
    for &nu in &a.nu {
        let est = empirical_mellin(&pool, nu, a.common.seed)?;
        let exact = mellin_ell(params.alpha(), params.rho(), nu)?;
        csv.push_str(&format!(
            "{nu},{:.10e},{:.10e},{:.10e},{exact:.10e}\n",
            est.estimate, est.ci_low, est.ci_high
        ));
        rows.push(json!({ "nu": nu, "exact": exact, "estimate": est }));
    }
    run.write_csv("mellin.csv", &csv)?;
    let doc = run.write_json(
        "mellin.json",
        json!({ "moments": rows, "pool": pool_summary(&pool, &a.pool) }),
    )?;
    emit(&doc);
    Ok(())
}
