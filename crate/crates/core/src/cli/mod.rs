//! Command-line plumbing: scenarios, runs, sweeps and file formats.

pub mod files;
pub mod run;
pub mod scenario;
pub mod sweep;
