pub mod arch;
pub mod autograd;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod losses;
pub mod nn;
pub mod quality;
pub mod signal;
pub mod train;

pub use error::{Error, Result};
