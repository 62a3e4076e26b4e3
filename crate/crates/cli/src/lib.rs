//! Benchmark harness: runs scripted agents over task packs through an
//! environment pool, emits reports, and calibrates difficulty strata.

pub mod bench;
pub mod calibrate;
pub mod report;

use thiserror::Error;

pub use bench::{run_benchmark, RunConfig};
pub use calibrate::{calibrate, calibrate_csv, table_from_report, Calibration, TableRow};
pub use report::{emit_report, load_report, summarize, ReportFile, SummaryLine};

/// Failures of the harness itself. Task failures are never errors; they
/// are rows in the report.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid pack: {0}")]
    PackInvalid(String),
    #[error("pool unreachable: {0}")]
    PoolUnreachable(String),
    #[error(transparent)]
    Pool(#[from] mgk_pool::PoolError),
    #[error("agent: {0}")]
    Agent(#[from] mgk_core::script::ScriptError),
    #[error("malformed table: {0}")]
    MalformedTable(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Other(String),
}
