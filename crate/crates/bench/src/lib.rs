//! Experiment harness: workload generation, trace-driven cache measurement
//! and CSV output for the chronoarray structure.

pub mod driver;
pub mod experiments;
pub mod fit;
pub mod frozen;
pub mod row;
pub mod workload;

pub use driver::{CheckMode, Meter};
pub use experiments::{run_experiment, Check, Experiment, Outcome, RunConfig};
pub use row::{emit_csv, write_csv, ExperimentRow};
pub use workload::{gen_workload, Op, Workload, WorkloadKind};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Core(#[from] chronoarray::Error),
    #[error("workload: {0}")]
    Workload(String),
    #[error("invariant violated after op {op}: {detail}")]
    Invariant { op: u64, detail: String },
    #[error("unknown experiment {0:?}")]
    UnknownExperiment(String),
    #[error("configuration: {0}")]
    Config(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, BenchError>;
