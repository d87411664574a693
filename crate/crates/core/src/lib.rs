//! Staged semantic object mapping for multi-robot search.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod base;
pub mod comms;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod model;
pub mod operator;
pub mod pipeline;
pub mod raster;
pub mod reconcile;
pub mod sim;

pub use config::{PipelineConfig, RunConfig, ScenarioConfig};
pub use error::{ConfigError, Error, Result};
pub use model::*;
