//! Library surface of the `mtpinn` command-line driver.
//!
//! The binary is a thin argument parser; all command logic lives here so
//! integration tests can call it in process.

pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{cmd_backtest, cmd_eval, cmd_simulate_feed, cmd_train};
