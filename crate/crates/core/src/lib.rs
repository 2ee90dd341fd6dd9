pub mod cli;
pub mod dataset;
pub mod diagnostics;
pub mod error;
pub mod estimation;
pub mod hypothesis;
pub mod linkfn;
pub mod orders;
pub mod qp;
pub mod rng;
pub mod synth;
pub mod universe;

pub use error::{Error, Result};
