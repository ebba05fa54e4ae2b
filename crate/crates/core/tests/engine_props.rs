use std::sync::OnceLock;

use langevin_wall::analytics::{c_crit_of, classify_regime, Regime};
use langevin_wall::engine::{step_bounce, BounceRecord, ExcursionEngine, VerdictKind};
use langevin_wall::path::{harvest_pool, ExcursionSample, PathConfig, Pool};
use langevin_wall::stats::{mean_se, quantile_sorted, sort_f64};
use langevin_wall::{BoundarySpec, StableParams};
use proptest::prelude::*;

fn gauss() -> StableParams {
    StableParams::new(2.0, 0.5).unwrap()
}

fn pool() -> &'static Pool {
    static POOL: OnceLock<Pool> = OnceLock::new();
    POOL.get_or_init(|| harvest_pool(&gauss(), &PathConfig::default(), 40_000, 77).unwrap())
}

fn median(mut v: Vec<f64>) -> f64 {
    sort_f64(&mut v);
    quantile_sorted(&v, 0.5)
}

#[test]
fn elastic_drift_sign_flips_at_critical_restitution() {
    let cc = c_crit_of(2.0, 0.5).unwrap();
    let log_ell: Vec<f64> = pool().ells().iter().map(|l| l.abs().ln()).collect();
    let (m, se) = mean_se(&log_ell);
    for factor in [0.5, 0.8, 1.25, 2.0] {
        let drift = (factor * cc).ln() + m;
        if factor < 1.0 {
            assert!(
                drift + 3.0 * se < 0.0,
                "c = {factor} c_crit: drift {drift} se {se}"
            );
        } else {
            assert!(
                drift - 3.0 * se > 0.0,
                "c = {factor} c_crit: drift {drift} se {se}"
            );
        }
    }
}

#[test]
fn diffusive_partial_sums_settle_only_below_unit_theta() {
    let params = gauss();
    let run = |theta: f64, seed| {
        let spec = BoundarySpec::diffusive(theta).unwrap();
        let engine = ExcursionEngine::new(&spec, &params, pool()).unwrap();
        engine.run_chains(2_000, 100, seed).unwrap()
    };
    for chain in run(0.8, 1) {
        let r = &chain.records;
        let change = (r[1_999].ln_tau - r[199].ln_tau).abs();
        assert!(change < 1e-9, "theta 0.8 still moving: {change}");
    }
    let growth = |theta, seed| {
        median(
            run(theta, seed)
                .iter()
                .map(|c| c.records[1_999].ln_tau - c.records[199].ln_tau)
                .collect(),
        )
    };
    let at_one = growth(1.0, 2);
    assert!(at_one > 3f64.ln(), "theta 1: median log growth {at_one}");
    let above = growth(1.25, 3);
    let linear = 1800.0 * 2.0 * 1.25f64.ln();
    assert!(
        (above - linear).abs() < 0.1 * linear,
        "theta 1.25: {above} vs {linear}"
    );
}

#[test]
fn critical_elastic_growth_is_sublinear() {
    let cc = c_crit_of(2.0, 0.5).unwrap();
    let spec = BoundarySpec::elastic(cc).unwrap();
    let engine = ExcursionEngine::new(&spec, &gauss(), pool()).unwrap();
    let chains = engine.run_chains(10_000, 200, 11).unwrap();
    let stat = |n: usize, lambda: f64| {
        median(
            chains
                .iter()
                .map(|c| c.records[n - 1].ln_tau / (n as f64).powf(1.0 / lambda))
                .collect(),
        )
    };
    for lambda in [1.0, 1.5] {
        let (s3, s4) = (stat(1_000, lambda), stat(10_000, lambda));
        assert!(s4 < s3, "lambda {lambda}: {s3} -> {s4}");
    }
    // off-critical walls keep this bounded away from 0
    let s4 = stat(10_000, 1.0);
    assert!(s4 < 0.05, "ln tau_n / n at 1e4: {s4}");
}

#[test]
fn unit_theta_growth_is_below_any_slower_power() {
    let spec = BoundarySpec::diffusive(1.0).unwrap();
    let engine = ExcursionEngine::new(&spec, &gauss(), pool()).unwrap();
    let chains = engine.run_chains(10_000, 200, 12).unwrap();
    // eta = 1/4 here; any lambda < eta gives tau_n / n^(1/lambda) -> 0.
    let lambda = 0.2;
    let stat = |n: usize| {
        median(
            chains
                .iter()
                .map(|c| (c.records[n - 1].ln_tau - (n as f64).ln() / lambda).exp())
                .collect(),
        )
    };
    let (s3, s4) = (stat(1_000), stat(10_000));
    assert!(s4 < s3, "{s3} -> {s4}");
    assert!(s4 < 1e-2, "statistic at 1e4: {s4}");
}

#[test]
fn predicted_regime_matches_verdicts() {
    let params = gauss();
    let cc = c_crit_of(2.0, 0.5).unwrap();
    let grid = [
        BoundarySpec::elastic(0.5 * cc).unwrap(),
        BoundarySpec::elastic(2.0 * cc).unwrap(),
        BoundarySpec::elastic(cc).unwrap(),
        BoundarySpec::diffusive(0.5).unwrap(),
        BoundarySpec::diffusive(2.0).unwrap(),
    ];
    for (i, spec) in grid.iter().enumerate() {
        let predicted = classify_regime(spec, &params).regime;
        let engine = ExcursionEngine::new(spec, &params, pool()).unwrap();
        let verdicts = engine
            .tau_infinity_batch(1e-6, 10_000, 200, 20 + i as u64)
            .unwrap();
        let share = |k| verdicts.iter().filter(|v| v.verdict == k).count() as f64 / 200.0;
        let (want, floor) = match predicted {
            Regime::Sticky => (VerdictKind::Absorbed, 0.95),
            Regime::NonSticky => (VerdictKind::Diverging, 0.95),
            Regime::Critical => (VerdictKind::Undecided, 0.85),
        };
        assert!(
            share(want) >= floor,
            "{spec:?}: {predicted:?} but share {}",
            share(want)
        );
    }
}

#[test]
fn chains_are_seed_deterministic() {
    let spec = BoundarySpec::new(
        0.5,
        0.7,
        0.9,
        langevin_wall::SpeedLaw::maxwellian(1.0).unwrap(),
        langevin_wall::SpeedLaw::maxwellian(1.0).unwrap(),
    )
    .unwrap();
    let engine = ExcursionEngine::new(&spec, &gauss(), pool()).unwrap();
    let a = engine.run_chains(300, 16, 5).unwrap();
    let b = engine.run_chains(300, 16, 5).unwrap();
    assert_eq!(a, b);
    let c = engine.run_chains(300, 16, 6).unwrap();
    assert_ne!(a, c);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn impact_times_never_decrease(
        xi in 1e-6f64..1e6,
        ell in -1e3f64..-1e-6,
        u0 in 1e-3f64..10.0,
        c in 0.0f64..3.0,
        theta in 0.1f64..3.0,
        elastic in any::<bool>(),
        m in 1e-3f64..10.0,
        steps in 1usize..6,
    ) {
        let spec = BoundarySpec::new(
            0.5,
            c,
            theta,
            langevin_wall::SpeedLaw::maxwellian(1.0).unwrap(),
            langevin_wall::SpeedLaw::maxwellian(1.0).unwrap(),
        )
        .unwrap();
        let draw = ExcursionSample { xi, ell };
        let mut rec = BounceRecord::initial(u0);
        for _ in 0..steps {
            let next = step_bounce(&rec, &spec, 2.0, draw, elastic, m);
            prop_assert!(next.tau_n >= rec.tau_n);
            prop_assert_eq!(next.n, rec.n + 1);
            prop_assert!(next.v_restart >= 0.0);
            prop_assert!(next.g_n <= next.n);
            rec = next;
        }
    }
}
