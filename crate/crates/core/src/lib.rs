//! Traffic and pricing equilibria for mobile collaborative Internet access,
//! where users tether each other's cellular downlinks over local Wi-Fi and
//! operators price both access and tethering.
//!
//! The solvers are generic over the scalar type through [`Real`]; the
//! `*64` aliases below fix it to `f64`, which is what the CLI uses.

pub mod benchmarks;
pub mod cooperative;
pub mod error;
pub mod experiment;
pub mod flow;
pub mod market;
pub mod numeric;
pub mod outcome;
pub mod price_competition;
pub mod quantity_competition;
pub mod scalar;
pub mod scenario;
pub mod transport;
pub mod upm;
pub mod utility;

pub use benchmarks::{compare_schemes, compare_schemes_with, solve_ntp, write_comparison_csv, CompareOptions, ComparisonRow};
pub use cooperative::{check_corollary2, solve_ft, solve_ropm, solve_swm, CoopResult};
pub use error::{Error, Result};
pub use experiment::{emit_results, run_experiment, ExperimentConfig, ExperimentResults, OutputFormat, Sweep, SweepParameter};
pub use outcome::{Diagnostics, EquilibriumOutcome, Scheme};
pub use price_competition::{
    classify_2x2_region, classify_regime, market_clearing_price, multi_operator_pce, single_operator_pce,
    threshold_downlink, verify_pce, MarketRegime, PceOutcome, PceRegime, ProbeOptions, ProbeReport, Region2x2,
};
pub use quantity_competition::{
    aggregate_cost, competitive_scheme, find_qce, phi_n, quantity_outcome, smoothed_cost, QceOptions, QuantityProfile,
};
pub use scalar::Real;
pub use scenario::{sample_scenario, Scenario, ScenarioConfig, TruncNormalSpec, User, WifiEnergy};
pub use upm::{demand_shortcut, min_cost_route, solve_upm, HybridPriceMatrix, TrafficSolution};
pub use utility::UtilityFunction;

pub type Scenario64 = Scenario<f64>;
pub type UtilityFunction64 = UtilityFunction<f64>;
pub type HybridPriceMatrix64 = HybridPriceMatrix<f64>;
pub type TrafficSolution64 = TrafficSolution<f64>;
pub type EquilibriumOutcome64 = EquilibriumOutcome<f64>;
pub type CoopResult64 = CoopResult<f64>;
pub type PceOutcome64 = PceOutcome<f64>;
pub type QuantityProfile64 = QuantityProfile<f64>;

/// Dense per-(client, gateway) matrix, indexed `[client][gateway]`.
pub type Matrix<T> = Vec<Vec<T>>;
