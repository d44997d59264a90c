//! Batch front-end of the pricing engine: TOML job configs in, JSON reports
//! and CSV tables out.

// `!(x > 0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod json;
pub mod run;
pub mod verify;

pub use config::{parse_config, parse_config_str, ConfigError, JobConfig};
pub use run::{parse_ladder, run_job, write_outputs, Command, Outcome};
