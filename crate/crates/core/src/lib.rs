//! Stable Langevin particles confined to a half-line by an absorbing,
//! elastic or diffusive wall.
//!
//! The crate samples the stable driver, simulates free and confined paths,
//! iterates the impact recursion on pooled excursions, and compares the
//! Monte Carlo output with the closed-form constants of the model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analytics;
pub mod boundary;
pub mod engine;
pub mod error;
pub mod estimators;
pub mod path;
pub mod pool_io;
pub mod rng;
pub mod stable;
pub mod stats;
pub mod trace;

pub use analytics::{
    c_crit_of, classify_regime, eta_c_solve, gamma_of, mellin_ell, moment_threshold,
    sumgn_closed_form, Regime, RegimeReport,
};
pub use boundary::{BoundarySpec, SpeedLaw};
pub use engine::{
    empirical_g_law, run_chain, step_bounce, tau_infinity, BounceRecord, Chain, ExcursionEngine,
    PoolPolicy, Verdict, VerdictKind,
};
pub use error::{Error, Result};
pub use path::{
    harvest_pool, simulate_confined_path, simulate_excursion, simulate_first_passage,
    simulate_impacts, Excursion, ExcursionSample, PathConfig, Pool,
};
pub use stable::{map_params, verify_characteristic_function, StableParams};
pub use trace::sample_maxwellian;
