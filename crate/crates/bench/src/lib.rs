//! Benchmark harness for the cache-diversion control stack: scenario
//! configuration, array presets, and the command implementations behind the
//! `hacache-bench` binary.

pub mod commands;
pub mod config;
pub mod presets;
