//! File formats, experiment drivers and the command line for
//! [`searchbid_core`].
//!
//! * [`ingest`] reads scraped search pages, sales and keyword tables and
//!   joins them into estimation panels.
//! * [`config`] is the flat run configuration.
//! * [`sweep`] runs each scenario in parallel and produces tables.
//! * [`output`] writes the tables, the normalized configuration and a
//!   manifest.
//! * [`cli`] is the `searchbid` binary.

pub mod cli;
pub mod config;
mod error;
pub mod ingest;
pub mod output;
pub mod sweep;

pub use error::{Error, Result};
pub use searchbid_core as core;
