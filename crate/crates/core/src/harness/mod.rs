//! Experiment specs, seeded sweeps and result files.
//!
//! Trial `t` at axis point `i` draws its signatures, scenario, noise and
//! sampler stream from `derive_seed(seed, [i, t, tag])`, so a result depends
//! only on the spec and not on thread count or scheduling.

mod config;
mod output;
mod sweep;

pub use config::{load_spec, parse_spec, ExperimentSpec, ReceiverKind, SweepAxis};
pub use output::{json_path, read_csv, to_csv, write_results, CSV_HEADER};
pub use sweep::{
    n0_for_effective_snr, run_ber_sweep, run_mse_sweep, run_sweep, ConvergenceRecord, ResultRow, SweepResult,
};
