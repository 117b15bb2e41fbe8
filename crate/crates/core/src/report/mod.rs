//! Configuration, orchestration and report files behind the command-line
//! tool.

pub mod config;
pub mod emit;
pub mod run;
pub mod svg;

pub use config::{Overrides, RunConfig};
pub use run::{run, Command, RunManifest, RunSummary};
