//! File formats, corpus handling, the training loop and the command-line
//! commands around `artextend-core`.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod error;
pub mod export;
pub mod metrics;
pub mod trainer;

pub use error::{Error, Result};
