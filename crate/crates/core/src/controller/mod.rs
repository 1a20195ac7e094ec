//! Runtime valve control: estimation, the two-phase adjustment loop, cache
//! capacity regulation, the full execution flow, and the single-valve
//! hill-climbing baseline.
//!
//! Everything here talks to a [`MeasurementEnv`], so the same controller can
//! drive either the analytic solver or the event simulator. The environment
//! applies a valve configuration, runs one telemetry cycle, and reports the
//! bandwidths it observed; the controller never assumes it knows device
//! limits up front.

mod capacity;
mod control_loop;
mod nhc;
mod two_phase;

pub use capacity::{regulate_capacity, RegulationOutcome};
pub use control_loop::{ControlLoop, LoopReport};
pub use nhc::{nhc_optimize, NhcReport};
pub use two_phase::{PassOutcome, TwoPhaseReport, ValveController};

use thiserror::Error;

use crate::model::{ModelError, ValveConfig};

#[derive(Debug, Error)]
pub enum EnvError {
    #[error("environment does not support {0}")]
    Unsupported(&'static str),
    #[error("measurement failed: {0}")]
    Failed(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("invalid input: {0}")]
    Domain(String),
    #[error("invalid controller parameters: {0}")]
    BadParams(String),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// One telemetry cycle's view of the array, per backend drive.
#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    /// Bandwidth each backend drive itself sustained (MB/s).
    pub backend: Vec<f64>,
    /// Bandwidth the cache served on behalf of each drive (MB/s).
    pub cache_served: Vec<f64>,
    /// Physical cache hit rate observed per drive.
    pub hit_rates: Vec<f64>,
    /// System aggregate bandwidth (MB/s).
    pub aggregate: f64,
    /// Requests observed during the cycle; zero means an idle window.
    pub requests: u64,
}

impl Telemetry {
    /// Logical bandwidth of one drive: own backend plus cache-served share.
    pub fn logical(&self, drive: usize) -> f64 {
        self.backend[drive] + self.cache_served[drive]
    }

    /// Mean logical level across drives. Striping keeps the per-drive levels
    /// equal in steady state, so this is the robust scalar to target.
    pub fn mean_level(&self) -> f64 {
        if self.backend.is_empty() {
            return 0.0;
        }
        (0..self.backend.len()).map(|i| self.logical(i)).sum::<f64>() / self.backend.len() as f64
    }
}

/// Shard ownership and hit counters, for capacity regulation.
#[derive(Debug, Clone, PartialEq)]
pub struct ShardStats {
    /// Owning backend drive of each shard, indexed by shard id.
    pub owner: Vec<usize>,
    /// Hits each shard has absorbed since the stats were last reset.
    pub hits: Vec<u64>,
}

impl ShardStats {
    pub fn quota(&self, drives: usize) -> Vec<usize> {
        let mut q = vec![0usize; drives];
        for &o in &self.owner {
            q[o] += 1;
        }
        q
    }

    pub fn owner_hits(&self, drives: usize) -> Vec<u64> {
        let mut h = vec![0u64; drives];
        for (&o, &hits) in self.owner.iter().zip(&self.hits) {
            h[o] += hits;
        }
        h
    }

    /// Shard ids owned by `drive`, with their hit counts.
    pub fn shards_of(&self, drive: usize) -> Vec<(usize, u64)> {
        self.owner
            .iter()
            .enumerate()
            .filter(|(_, &o)| o == drive)
            .map(|(id, _)| (id, self.hits[id]))
            .collect()
    }
}

/// Reassignment of one shard to a new owning drive.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ShardMove {
    pub shard: usize,
    pub to: usize,
}

/// Where the controller currently is in the execution flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    WarmUp,
    Phase1,
    Phase2,
    CapacityEval,
    Stable,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::WarmUp => "warmup",
            Phase::Phase1 => "phase1",
            Phase::Phase2 => "phase2",
            Phase::CapacityEval => "capacity",
            Phase::Stable => "stable",
        }
    }
}

/// What a trace row records about the cycle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordKind {
    /// Telemetry gathered without changing valves.
    Observe,
    /// A candidate configuration under evaluation.
    Probe,
    /// A probe accepted as the new operating point.
    Commit,
    /// Recovery measurement after rejecting a probe.
    Rollback,
}

impl RecordKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RecordKind::Observe => "observe",
            RecordKind::Probe => "probe",
            RecordKind::Commit => "commit",
            RecordKind::Rollback => "rollback",
        }
    }
}

/// One row of the controller trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: u64,
    pub phase: Phase,
    pub kind: RecordKind,
    pub valves: Vec<f64>,
    pub backend: Vec<f64>,
    pub aggregate: f64,
    pub quota: Vec<usize>,
}

/// An environment the controller can steer: apply a valve configuration, run
/// one telemetry cycle, and report what happened.
///
/// Implementations must present cycle-atomic telemetry; under a stationary
/// workload, two cycles at the same configuration should agree on aggregate
/// bandwidth to within the controller's configured noise bound.
pub trait MeasurementEnv {
    fn drives(&self) -> usize;

    /// Apply `valves`, run one cycle, and report it.
    fn measure(&mut self, valves: &ValveConfig) -> Result<Telemetry, EnvError>;

    /// Shard ownership and hit counters, if this environment has a
    /// shard-managed cache.
    fn shard_stats(&self) -> Option<ShardStats> {
        None
    }

    /// Current per-drive shard quotas, if shard-managed.
    fn quotas(&self) -> Option<Vec<usize>> {
        None
    }

    /// Reassign shards to new owners, invalidating their contents.
    fn move_shards(&mut self, _moves: &[ShardMove]) -> Result<(), EnvError> {
        Err(EnvError::Unsupported("shard reassignment"))
    }
}

/// Tuning knobs for the controller. Defaults follow the prototype settings;
/// scale the step sizes down for desk-scale topologies.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerParams {
    /// Expected backend bandwidth increment per probe in the backend-filling
    /// phase (MB/s).
    pub backend_step: f64,
    /// Total cache bandwidth increment per probe in the cache-spreading
    /// phase (MB/s); each drive's level target rises by `cache_step / N`.
    pub cache_step: f64,
    /// Valve values below this mark a drive's cache capacity as surplus.
    pub p_threshold: f64,
    /// Number of cache shards.
    pub shard_count: usize,
    /// Shards reclaimed from each surplus drive per regulation pass.
    pub reclaim_shards: usize,
    /// Relative telemetry noise the controller tolerates before treating a
    /// bandwidth change as real.
    pub noise_bound: f64,
    /// Consecutive stable cycles required to leave warm-up.
    pub hit_stable_cycles: usize,
    /// Valve changes smaller than this count as "no modification".
    pub valve_epsilon: f64,
}

impl ControllerParams {
    /// Prototype defaults for an array of `drives` backends.
    pub fn for_drives(drives: usize) -> Self {
        Self {
            backend_step: 1000.0,
            cache_step: 100.0 * drives as f64,
            p_threshold: 0.9,
            shard_count: 256,
            reclaim_shards: 8,
            noise_bound: 0.01,
            hit_stable_cycles: 3,
            valve_epsilon: 1e-9,
        }
    }

    pub fn validate(&self) -> Result<(), ControllerError> {
        if !(self.p_threshold > 0.0 && self.p_threshold < 1.0) {
            return Err(ControllerError::BadParams(format!(
                "p_threshold {} outside (0, 1)",
                self.p_threshold
            )));
        }
        if self.reclaim_shards > self.shard_count {
            return Err(ControllerError::BadParams(format!(
                "reclaim_shards {} exceeds shard_count {}",
                self.reclaim_shards, self.shard_count
            )));
        }
        if !(self.backend_step > 0.0) || !(self.cache_step > 0.0) {
            return Err(ControllerError::BadParams(
                "bandwidth steps must be positive".into(),
            ));
        }
        if !(self.noise_bound >= 0.0) {
            return Err(ControllerError::BadParams(
                "noise_bound must be non-negative".into(),
            ));
        }
        if self.hit_stable_cycles == 0 {
            return Err(ControllerError::BadParams(
                "hit_stable_cycles must be at least 1".into(),
            ));
        }
        Ok(())
    }
}

/// Back-calculate the valve value that makes a drive sustain `backend` MB/s
/// of its own while its logical level sits at `level`.
///
/// The implied diversion ratio is `1 - backend/level`; dividing by the hit
/// rate converts it to a valve value, clamped into `[0, 1]`. A zero hit rate
/// resolves by continuity: no diversion is possible, so the valve saturates
/// to 0 when the drive already covers the level and 1 otherwise.
pub fn estimate_valve(level: f64, backend: f64, hit_rate: f64) -> Result<f64, ControllerError> {
    if !(level > 0.0) || !level.is_finite() {
        return Err(ControllerError::Domain(format!(
            "logical level {level} must be positive"
        )));
    }
    if !(backend >= 0.0) || !backend.is_finite() {
        return Err(ControllerError::Domain(format!(
            "backend bandwidth {backend} must be non-negative"
        )));
    }
    if !(0.0..=1.0).contains(&hit_rate) {
        return Err(ControllerError::Domain(format!(
            "hit rate {hit_rate} outside [0, 1]"
        )));
    }
    let ratio = 1.0 - backend / level;
    if hit_rate == 0.0 {
        return Ok(if ratio <= 0.0 { 0.0 } else { 1.0 });
    }
    Ok((ratio / hit_rate).clamp(0.0, 1.0))
}
