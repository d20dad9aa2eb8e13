pub mod bsde;
pub mod config;
pub mod error;
pub mod experiment;
pub mod hedging;
pub mod io;
pub mod market;
pub mod mean_variance;
pub mod open_loop;
pub mod operator;
pub mod process;
pub mod regression;
pub mod stats;
pub mod verify;

pub use error::{Error, Result};
pub use operator::{EquilibriumOperator, Provenance};
pub use process::Process;
