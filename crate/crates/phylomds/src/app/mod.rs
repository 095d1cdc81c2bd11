//! Application layer: run configuration, on-disk formats, and the command
//! bodies the `phylomds` binary dispatches to.

pub mod commands;
pub mod config;
pub mod formats;

pub use commands::{
    cmd_benchmark, cmd_cv, cmd_effective_distance, cmd_fit, cmd_simulate, BenchmarkArgs,
    EffectiveDistanceArgs,
};
pub use config::RunConfig;
pub use formats::{
    read_distance_csv, read_fold_plan, read_snapshots, write_distance_csv, write_fold_plan,
    write_snapshots, Snapshot,
};
