//! Experiment harness: TOML configuration, seeded scenario draws, parallel
//! sweeps with paired scenarios across schemes, and CSV output.

pub mod config;
pub mod scenario;
pub mod sweep;

pub use config::{dbm_to_watts, ExperimentConfig, SweepPoint, SweepVariable};
pub use scenario::{derived_seed, generate_scenario};
pub use sweep::{
    read_records, run_scheme, run_sweep, run_sweep_with_threads, write_records, write_summary, SchemeRun, SweepRecord,
    CSV_HEADER,
};
