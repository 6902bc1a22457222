pub mod autodiff;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod povm;
pub mod predict;
pub mod qsim;
pub mod registry;
pub mod seeds;
pub mod strategy;
pub mod tasks;
pub mod tgms;

pub use error::{Error, Result};
