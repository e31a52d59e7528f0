//! File formats, the `eegdir` command line and its verification suite, on
//! top of the `eegdir-core` numerics.

mod binio;
pub mod cli;
pub mod commands;
pub mod csvio;
pub mod edck;
pub mod edir;
mod error;
pub mod fsio;
pub mod verify;

pub use commands::run;
pub use error::{Error, FormatError, Result};
