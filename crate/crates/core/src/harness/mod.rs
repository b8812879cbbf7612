//! Configuration loading, sweeps, brute-force oracles and CSV output.

pub mod config;
pub mod frontier;
pub mod oracle;
pub mod sweep;

pub use config::{load_config, load_scenario, parse_config, EpsGrid, Pipeline, RunConfig, SweepSpec};
pub use frontier::{pareto_filter, read_csv, region_contains, write_csv, ParetoPoint};
pub use oracle::{run_check, Check, OracleReport};
pub use sweep::{multi_user_point, single_pair_point, sweep_multi_user, sweep_single_pair};
