//! Synthetic scenes, point-cloud files, the end-to-end registration pipeline,
//! a RANSAC baseline and the benchmark runner behind the `igasa` binary.

pub mod config;
pub mod error;
pub mod fmt;
pub mod io;
pub mod pipeline;
pub mod ransac;
pub mod scene;
pub mod suite;

pub use error::{BenchError, Result};
