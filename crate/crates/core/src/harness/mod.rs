//! Benchmark harness: traces, certification, sample sizes, sweeps and the
//! command-line front end.

pub mod certify;
pub mod cli;
pub mod sample_sizes;
pub mod sweep;
pub mod trace;

pub use certify::{certify, StationarityCertificate};
pub use cli::{run_cli, run_cli_with};
pub use sample_sizes::{sample_sizes, sample_sizes_at, SampleSizes};
pub use sweep::{run_sweep, SweepSpec, SweepSummary};
pub use trace::{RunTrace, TraceRow, CSV_HEADER};
