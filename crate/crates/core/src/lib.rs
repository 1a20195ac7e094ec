//! Bandwidth planning and runtime cache-diversion control for heterogeneous
//! SSD arrays fronted by an SSD read cache.
//!
//! Striping hands every member drive an equal share of the request stream, so
//! a mixed array runs at the pace of its slowest drive. The crates here model
//! that effect, plan how much of each drive's traffic the cache should absorb,
//! and adjust the absorption online from bandwidth telemetry alone:
//!
//! * [`model`] — shared domain types and the closed-form steady-state solver
//!   that turns per-drive diversion ratios into the bandwidths the striping
//!   constraints force.
//! * [`planner`] — water-filling computation of optimal diversion ratios,
//!   plus brute-force oracles used to certify it.
//! * [`controller`] — valve estimation, the two-phase runtime adjustment
//!   loop, shard-based cache capacity regulation, and the single-valve
//!   hill-climbing baseline.
//! * [`analytic`] — a noiseless measurement environment backed by the
//!   steady-state solver, for fast controller experiments.
//! * [`simkit`] — a deterministic request-level discrete-event simulator of
//!   the full array (striping, shard cache, valves, bounded dispatch window).

pub mod analytic;
pub mod controller;
pub mod model;
pub mod planner;
pub mod simkit;
