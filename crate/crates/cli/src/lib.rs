//! Pipeline behind the `cardbench` binary.

pub mod config;
pub mod pipeline;
pub mod report;

pub use config::{derive_seed, RunConfig};
pub use pipeline::{
    cmd_bench, cmd_explain, cmd_gen, cmd_inspect, cmd_synth, cmd_truecards, load_inputs, InputError, InvariantViolation,
};
pub use report::{BenchmarkReport, Timings};
