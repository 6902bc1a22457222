//! Config-driven experiment harness: dataset generation, training, evaluation and reports.

pub mod config;
pub mod output;
pub mod pipeline;

pub use config::{DataConfig, EvalConfig, ExperimentConfig, StateSplit};
pub use pipeline::{CorrelationReport, DensityDump, EvalReport, Experiment, SiteReport};

use tgms_core::Error;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_GUARD: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Process exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Guard(_) | Error::Qsim(_) | Error::Povm(_) => EXIT_GUARD,
        Error::Numerical(_) | Error::Ad(_) | Error::Predict(_) => EXIT_NUMERICAL,
        Error::Io(_) | Error::Json(_) => EXIT_IO,
    }
}
