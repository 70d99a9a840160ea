//! Library side of the `bpa` command-line tool: feature-file I/O, benchmark
//! configs, run reports and the command implementations.

pub mod commands;
pub mod config;
pub mod error;
pub mod features;
pub mod report;
