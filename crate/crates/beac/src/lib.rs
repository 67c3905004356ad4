//! File formats, dataset directories, parallel pipelines and the command-line
//! front end for [`beac_core`].

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod error;
pub mod fseq;
pub mod manifest;
pub mod output;
pub mod pipeline;

pub use error::{CliError, ExitKind};
