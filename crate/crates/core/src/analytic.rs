//! Noiseless measurement environment backed by the steady-state solver.
//!
//! Useful for fast controller experiments: the "measurement" of a valve
//! configuration is just the solved steady state for the implied diversion
//! ratios. Hit rates are either fixed, or derived from shard quotas so that
//! capacity regulation can be exercised without the event simulator.

use crate::controller::{EnvError, MeasurementEnv, ShardMove, ShardStats, Telemetry};
use crate::model::{effective_diversion, steady_state_solve, HitProfile, ModelError, ValveConfig};

/// Hit rates proportional to shard quota: a drive owning `q` shards hits at
/// `min(1, q * hit_per_shard)`. Matches a uniform workload, where resident
/// bytes translate linearly into hit rate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuotaHitModel {
    pub hit_per_shard: f64,
}

#[derive(Debug, Clone)]
pub struct AnalyticEnv {
    backend_caps: Vec<f64>,
    cache_cap: f64,
    hit_rates: Vec<f64>,
    shard_owner: Vec<usize>,
    shard_weights: Vec<f64>,
    quota_model: Option<QuotaHitModel>,
}

impl AnalyticEnv {
    /// Fixed hit rates, no shard bookkeeping.
    pub fn new(
        backend_caps: Vec<f64>,
        cache_cap: f64,
        hit_rates: Vec<f64>,
    ) -> Result<Self, ModelError> {
        if hit_rates.len() != backend_caps.len() {
            return Err(ModelError::LengthMismatch {
                left: hit_rates.len(),
                right: backend_caps.len(),
            });
        }
        HitProfile::new(hit_rates.clone())?;
        Ok(Self {
            backend_caps,
            cache_cap,
            hit_rates,
            shard_owner: Vec::new(),
            shard_weights: Vec::new(),
            quota_model: None,
        })
    }

    /// Same hit rate everywhere.
    pub fn with_uniform_hits(
        backend_caps: Vec<f64>,
        cache_cap: f64,
        hit_rate: f64,
    ) -> Result<Self, ModelError> {
        let n = backend_caps.len();
        Self::new(backend_caps, cache_cap, vec![hit_rate; n])
    }

    /// Shard-managed variant: hit rates follow quotas, shards start spread
    /// round-robin across drives.
    pub fn with_quota_model(
        backend_caps: Vec<f64>,
        cache_cap: f64,
        shard_count: usize,
        model: QuotaHitModel,
    ) -> Result<Self, ModelError> {
        let n = backend_caps.len();
        let mut env = Self::new(backend_caps, cache_cap, vec![0.0; n])?;
        env.shard_owner = (0..shard_count).map(|s| s % n).collect();
        env.shard_weights = vec![1.0; shard_count];
        env.quota_model = Some(model);
        Ok(env)
    }

    /// Override per-shard hit weights (defaults are uniform). Weights shape
    /// the contribution ratios regulation sees, not the hit rates.
    pub fn set_shard_weights(&mut self, weights: Vec<f64>) {
        assert_eq!(weights.len(), self.shard_owner.len());
        self.shard_weights = weights;
    }

    pub fn backend_caps(&self) -> &[f64] {
        &self.backend_caps
    }

    pub fn cache_cap(&self) -> f64 {
        self.cache_cap
    }

    fn current_hits(&self) -> Vec<f64> {
        // A cache with no bandwidth serves nothing, so it hits nothing.
        if self.cache_cap <= 0.0 {
            return vec![0.0; self.backend_caps.len()];
        }
        match self.quota_model {
            Some(model) => {
                let mut quota = vec![0usize; self.backend_caps.len()];
                for &o in &self.shard_owner {
                    quota[o] += 1;
                }
                quota
                    .iter()
                    .map(|&q| (q as f64 * model.hit_per_shard).min(1.0))
                    .collect()
            }
            None => self.hit_rates.clone(),
        }
    }
}

impl MeasurementEnv for AnalyticEnv {
    fn drives(&self) -> usize {
        self.backend_caps.len()
    }

    fn measure(&mut self, valves: &ValveConfig) -> Result<Telemetry, EnvError> {
        let hits = self.current_hits();
        let profile = HitProfile::new(hits.clone()).map_err(EnvError::Model)?;
        let ratios = effective_diversion(valves, &profile).map_err(EnvError::Model)?;
        let state = steady_state_solve(&ratios, &self.backend_caps, self.cache_cap)
            .map_err(EnvError::Model)?;
        Ok(Telemetry {
            backend: state.backend,
            cache_served: state.cache_served,
            hit_rates: hits,
            aggregate: state.aggregate,
            requests: 1_000_000,
        })
    }

    fn shard_stats(&self) -> Option<ShardStats> {
        if self.quota_model.is_none() {
            return None;
        }
        let hits = self
            .shard_weights
            .iter()
            .map(|&w| (w * 1e6).round().max(0.0) as u64)
            .collect();
        Some(ShardStats {
            owner: self.shard_owner.clone(),
            hits,
        })
    }

    fn quotas(&self) -> Option<Vec<usize>> {
        if self.quota_model.is_none() {
            return None;
        }
        let mut quota = vec![0usize; self.backend_caps.len()];
        for &o in &self.shard_owner {
            quota[o] += 1;
        }
        Some(quota)
    }

    fn move_shards(&mut self, moves: &[ShardMove]) -> Result<(), EnvError> {
        if self.quota_model.is_none() {
            return Err(EnvError::Unsupported("shard reassignment"));
        }
        for m in moves {
            if m.shard >= self.shard_owner.len() || m.to >= self.backend_caps.len() {
                return Err(EnvError::Failed(format!(
                    "shard move {:?} out of range",
                    m
                )));
            }
            self.shard_owner[m.shard] = m.to;
        }
        Ok(())
    }
}
