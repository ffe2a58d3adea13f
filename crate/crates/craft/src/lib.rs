//! File formats, JSON reports and the `craft` command-line driver built on
//! [`craft_core`].

pub mod commands;
pub mod config;
pub mod error;
pub mod formats;
pub mod report;

pub use error::{CraftError, FormatError};
