//! Deterministic discrete-event simulator of a near-memory key/value lookup
//! accelerator, its host CPU and its memory system.
//!
//! The crate is layered bottom-up:
//!
//! * [`simkernel`]: event queue, clocks, rate-limited links.
//! * [`kvstore`]: the open-addressing hash table the accelerator walks.
//! * [`workload`]: query batches with uniform or zipfian repeats.
//! * [`memmodel`]: fixed-latency and cube-like memory backends.
//! * [`accel`]: the lookup pipeline.
//! * [`host`]: CPU timing and multi-accelerator dispatch.
//! * [`harness`]: configuration, experiments, CSV and plot output.

pub mod accel;
pub mod harness;
pub mod host;
pub mod kvstore;
pub mod memmodel;
pub mod simkernel;
pub mod system;
pub mod workload;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Sim(simkernel::SimError),
    #[error(transparent)]
    Table(#[from] kvstore::TableError),
    #[error(transparent)]
    Workload(#[from] workload::WorkloadError),
    #[error(transparent)]
    Mem(#[from] memmodel::MemError),
    #[error(transparent)]
    Accel(#[from] accel::AccelError),
    #[error(transparent)]
    Trace(#[from] harness::trace::TraceError),
    #[error("config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("reference mismatch: {0}")]
    KeyMismatch(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl From<simkernel::SimError> for Error {
    fn from(e: simkernel::SimError) -> Self {
        match e {
            simkernel::SimError::Component { id, at, source } => match source.downcast::<memmodel::MemError>() {
                Ok(mem) => Error::Mem(*mem),
                Err(source) => Error::Sim(simkernel::SimError::Component { id, at, source }),
            },
            other => Error::Sim(other),
        }
    }
}

impl Error {
    /// True for errors caused by bad input rather than a failed run.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config { .. } | Error::Trace(_) | Error::Accel(_) | Error::Mem(memmodel::MemError::Config(_)))
    }
}
