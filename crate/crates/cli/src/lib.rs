//! Library surface of the experiment driver, reused by the binary and by the
//! acceptance suite.

pub mod commands;
pub mod config;
pub mod output;
