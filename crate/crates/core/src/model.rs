//! Shared domain types and the analytic steady-state bandwidth solver.
//!
//! All bandwidths are in MB/s (10^6 bytes per second); conversions to GiB/s
//! happen only at display time. Types here are immutable values and the
//! operations are pure functions.

use std::collections::BTreeMap;

use thiserror::Error;

/// Relative slack used when checking budget-style invariants.
pub const REL_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("device {id}: bandwidth table is empty")]
    EmptyBandwidthTable { id: String },
    #[error("device {id}: bandwidth {value} MB/s at block size {block_size} is not positive")]
    NonPositiveBandwidth {
        id: String,
        block_size: u64,
        value: f64,
    },
    #[error("device {id}: no profiled bandwidth for block size {block_size}")]
    UnknownBlockSize { id: String, block_size: u64 },
    #[error("topology needs at least two backend drives, got {0}")]
    TooFewBackends(usize),
    #[error("stripe unit {0} must be a power of two of at least 4096 bytes")]
    BadStripeUnit(u64),
    #[error("{what} {value} outside [0, 1]")]
    OutOfUnitRange { what: &'static str, value: f64 },
    #[error("length mismatch: {left} values vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("diversion ratio {0} outside [0, 1]")]
    BadDiversionRatio(f64),
    #[error("backend bandwidth cap {0} MB/s is not positive")]
    BadBackendCap(f64),
    #[error("cache bandwidth cap {0} MB/s is negative")]
    BadCacheCap(f64),
    #[error("no backend drives given")]
    NoBackends,
}

/// A physical drive's peak read bandwidth as a function of block size.
///
/// Lookups for unprofiled block sizes fail explicitly; bandwidth varies
/// non-uniformly with granularity, so interpolating would invent data.
#[derive(Debug, Clone, PartialEq)]
pub struct DeviceProfile {
    id: String,
    bandwidth_table: BTreeMap<u64, f64>,
}

impl DeviceProfile {
    pub fn new(
        id: impl Into<String>,
        entries: impl IntoIterator<Item = (u64, f64)>,
    ) -> Result<Self, ModelError> {
        let id = id.into();
        let bandwidth_table: BTreeMap<u64, f64> = entries.into_iter().collect();
        if bandwidth_table.is_empty() {
            return Err(ModelError::EmptyBandwidthTable { id });
        }
        for (&block_size, &value) in &bandwidth_table {
            if !(value > 0.0) || !value.is_finite() {
                return Err(ModelError::NonPositiveBandwidth {
                    id,
                    block_size,
                    value,
                });
            }
        }
        Ok(Self {
            id,
            bandwidth_table,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    /// Peak bandwidth in MB/s at the given block size.
    pub fn bandwidth(&self, block_size: u64) -> Result<f64, ModelError> {
        self.bandwidth_table
            .get(&block_size)
            .copied()
            .ok_or_else(|| ModelError::UnknownBlockSize {
                id: self.id.clone(),
                block_size,
            })
    }

    pub fn block_sizes(&self) -> impl Iterator<Item = u64> + '_ {
        self.bandwidth_table.keys().copied()
    }
}

/// A cache-fronted array: ordered backend drives plus one cache device.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayTopology {
    pub backends: Vec<DeviceProfile>,
    pub cache: DeviceProfile,
    pub stripe_unit: u64,
}

impl ArrayTopology {
    pub fn new(
        backends: Vec<DeviceProfile>,
        cache: DeviceProfile,
        stripe_unit: u64,
    ) -> Result<Self, ModelError> {
        if backends.len() < 2 {
            return Err(ModelError::TooFewBackends(backends.len()));
        }
        if stripe_unit < 4096 || !stripe_unit.is_power_of_two() {
            return Err(ModelError::BadStripeUnit(stripe_unit));
        }
        Ok(Self {
            backends,
            cache,
            stripe_unit,
        })
    }

    pub fn drive_count(&self) -> usize {
        self.backends.len()
    }

    /// Per-backend peak bandwidths at the given block size, in drive order.
    pub fn backend_caps(&self, block_size: u64) -> Result<Vec<f64>, ModelError> {
        self.backends
            .iter()
            .map(|d| d.bandwidth(block_size))
            .collect()
    }

    pub fn cache_cap(&self, block_size: u64) -> Result<f64, ModelError> {
        self.cache.bandwidth(block_size)
    }
}

fn check_unit_range(what: &'static str, values: &[f64]) -> Result<(), ModelError> {
    for &v in values {
        if !(0.0..=1.0).contains(&v) || !v.is_finite() {
            return Err(ModelError::OutOfUnitRange { what, value: v });
        }
    }
    Ok(())
}

/// Per-drive valve values: the probability that a cache hit for that drive is
/// served by the cache rather than forwarded to the backend.
#[derive(Debug, Clone, PartialEq)]
pub struct ValveConfig {
    values: Vec<f64>,
}

impl ValveConfig {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        check_unit_range("valve value", &values)?;
        Ok(Self { values })
    }

    /// All drives share the same valve value.
    pub fn uniform(drives: usize, value: f64) -> Result<Self, ModelError> {
        Self::new(vec![value; drives])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, drive: usize) -> f64 {
        self.values[drive]
    }

    pub fn set(&mut self, drive: usize, value: f64) -> Result<(), ModelError> {
        if !(0.0..=1.0).contains(&value) || !value.is_finite() {
            return Err(ModelError::OutOfUnitRange {
                what: "valve value",
                value,
            });
        }
        self.values[drive] = value;
        Ok(())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Per-drive physical cache hit rates.
#[derive(Debug, Clone, PartialEq)]
pub struct HitProfile {
    values: Vec<f64>,
}

impl HitProfile {
    pub fn new(values: Vec<f64>) -> Result<Self, ModelError> {
        check_unit_range("hit rate", &values)?;
        Ok(Self { values })
    }

    pub fn uniform(drives: usize, value: f64) -> Result<Self, ModelError> {
        Self::new(vec![value; drives])
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, drive: usize) -> f64 {
        self.values[drive]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }
}

/// Steady-state bandwidths forced by the striping constraints.
///
/// Invariants (up to floating-point slack): `backend[i] + cache_served[i] ==
/// level` for every drive, `cache_served` sums to at most the cache cap, each
/// `backend[i]` stays within `[0, cap_i]`, and `aggregate == drives * level`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyState {
    /// Bandwidth each backend drive sustains itself.
    pub backend: Vec<f64>,
    /// Bandwidth the cache serves on behalf of each drive.
    pub cache_served: Vec<f64>,
    /// Common logical bandwidth per member drive.
    pub level: f64,
    /// System aggregate bandwidth.
    pub aggregate: f64,
}

/// Per-drive effective diversion: the fraction of a drive's logical traffic
/// the cache ends up serving, i.e. hit rate times valve value.
pub fn effective_diversion(
    valves: &ValveConfig,
    hits: &HitProfile,
) -> Result<Vec<f64>, ModelError> {
    if valves.len() != hits.len() {
        return Err(ModelError::LengthMismatch {
            left: valves.len(),
            right: hits.len(),
        });
    }
    Ok(valves
        .as_slice()
        .iter()
        .zip(hits.as_slice())
        .map(|(p, h)| p * h)
        .collect())
}

/// Solve for the bandwidths a fully loaded array settles into under fixed
/// diversion ratios.
///
/// Striping forces every drive to the same logical level `T`; the cache must
/// fund `ratio_i * T` for each drive and each backend sustains the remainder.
/// The largest feasible level is therefore
/// `min(min_i cap_i / (1 - ratio_i), cache_cap / sum(ratios))`, with either
/// term dropping out when its denominator is zero.
pub fn steady_state_solve(
    ratios: &[f64],
    backend_caps: &[f64],
    cache_cap: f64,
) -> Result<SteadyState, ModelError> {
    if ratios.len() != backend_caps.len() {
        return Err(ModelError::LengthMismatch {
            left: ratios.len(),
            right: backend_caps.len(),
        });
    }
    if backend_caps.is_empty() {
        return Err(ModelError::NoBackends);
    }
    for &r in ratios {
        if !(0.0..=1.0).contains(&r) || !r.is_finite() {
            return Err(ModelError::BadDiversionRatio(r));
        }
    }
    for &cap in backend_caps {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(ModelError::BadBackendCap(cap));
        }
    }
    if cache_cap < 0.0 || !cache_cap.is_finite() {
        return Err(ModelError::BadCacheCap(cache_cap));
    }

    let mut level = f64::INFINITY;
    for (&r, &cap) in ratios.iter().zip(backend_caps) {
        // A fully diverted drive puts no backend bound on the level.
        if r < 1.0 {
            level = level.min(cap / (1.0 - r));
        }
    }
    let ratio_sum: f64 = ratios.iter().sum();
    if ratio_sum > 0.0 {
        level = level.min(cache_cap / ratio_sum);
    }
    debug_assert!(level.is_finite());

    let backend: Vec<f64> = ratios.iter().map(|&r| (1.0 - r) * level).collect();
    let cache_served: Vec<f64> = ratios.iter().map(|&r| r * level).collect();
    let aggregate = level * backend_caps.len() as f64;
    Ok(SteadyState {
        backend,
        cache_served,
        level,
        aggregate,
    })
}

/// Sum of all backend peaks plus the cache peak: the hard upper bound on
/// aggregate bandwidth. Utilization figures are measured against this.
pub fn aggregate_bound(backend_caps: &[f64], cache_cap: f64) -> f64 {
    backend_caps.iter().sum::<f64>() + cache_cap
}

#[cfg(test)]
mod tests {
    use super::*;

    fn solve(ratios: &[f64], caps: &[f64], cache: f64) -> SteadyState {
        steady_state_solve(ratios, caps, cache).unwrap()
    }

    #[test]
    fn device_profile_rejects_empty_and_nonpositive() {
        assert!(matches!(
            DeviceProfile::new("x", []),
            Err(ModelError::EmptyBandwidthTable { .. })
        ));
        assert!(matches!(
            DeviceProfile::new("x", [(4096, 0.0)]),
            Err(ModelError::NonPositiveBandwidth { .. })
        ));
    }

    #[test]
    fn device_profile_lookup_is_exact_only() {
        let d = DeviceProfile::new("a", [(4096, 1800.0), (131072, 3500.0)]).unwrap();
        assert_eq!(d.bandwidth(4096).unwrap(), 1800.0);
        assert!(matches!(
            d.bandwidth(8192),
            Err(ModelError::UnknownBlockSize { .. })
        ));
    }

    #[test]
    fn topology_validation() {
        let d = DeviceProfile::new("a", [(4096, 1800.0)]).unwrap();
        assert!(matches!(
            ArrayTopology::new(vec![d.clone()], d.clone(), 131072),
            Err(ModelError::TooFewBackends(1))
        ));
        assert!(matches!(
            ArrayTopology::new(vec![d.clone(), d.clone()], d.clone(), 4095),
            Err(ModelError::BadStripeUnit(4095))
        ));
        assert!(matches!(
            ArrayTopology::new(vec![d.clone(), d.clone()], d.clone(), 12288),
            Err(ModelError::BadStripeUnit(12288))
        ));
        assert!(ArrayTopology::new(vec![d.clone(), d.clone()], d, 131072).is_ok());
    }

    #[test]
    fn effective_diversion_examples() {
        let p = ValveConfig::new(vec![1.0, 1.0]).unwrap();
        let h = HitProfile::new(vec![0.25, 0.25]).unwrap();
        assert_eq!(effective_diversion(&p, &h).unwrap(), vec![0.25, 0.25]);

        let p = ValveConfig::uniform(4, 0.0).unwrap();
        let h = HitProfile::new(vec![0.9, 0.1, 0.5, 1.0]).unwrap();
        assert_eq!(effective_diversion(&p, &h).unwrap(), vec![0.0; 4]);

        let p = ValveConfig::new(vec![0.5, 0.8]).unwrap();
        let h = HitProfile::new(vec![0.95, 0.5]).unwrap();
        let rho = effective_diversion(&p, &h).unwrap();
        assert!((rho[0] - 0.475).abs() < 1e-15);
        assert!((rho[1] - 0.4).abs() < 1e-15);
    }

    #[test]
    fn effective_diversion_length_mismatch() {
        let p = ValveConfig::uniform(3, 0.5).unwrap();
        let h = HitProfile::uniform(4, 0.5).unwrap();
        assert!(matches!(
            effective_diversion(&p, &h),
            Err(ModelError::LengthMismatch { left: 3, right: 4 })
        ));
    }

    #[test]
    fn solve_matches_worked_example() {
        // Cache cap 4 over caps {2,3,3,5} with ratios {0.5,0.25,0.25,0}
        // settles at level 4.
        let s = solve(&[0.5, 0.25, 0.25, 0.0], &[2.0, 3.0, 3.0, 5.0], 4.0);
        assert_eq!(s.level, 4.0);
        assert_eq!(s.backend, vec![2.0, 3.0, 3.0, 4.0]);
        assert_eq!(s.cache_served, vec![2.0, 1.0, 1.0, 0.0]);
        assert_eq!(s.aggregate, 16.0);
    }

    #[test]
    fn solve_no_diversion_anchors_to_slowest() {
        let s = solve(&[0.0; 4], &[2.0, 3.0, 3.0, 5.0], 4.0);
        assert_eq!(s.level, 2.0);
        assert_eq!(s.aggregate, 8.0);
    }

    #[test]
    fn solve_cache_limited() {
        let s = solve(&[0.5; 4], &[10.0; 4], 4.0);
        assert_eq!(s.level, 2.0);
        assert_eq!(s.aggregate, 8.0);
    }

    #[test]
    fn solve_full_diversion_is_degenerate_but_valid() {
        let s = solve(&[1.0, 0.0], &[5.0, 5.0], 6.0);
        // The fully diverted drive serves nothing; level is capped by the
        // other drive's backend and the cache budget.
        assert_eq!(s.backend[0], 0.0);
        assert_eq!(s.level, 5.0);
        assert!(s.cache_served.iter().sum::<f64>() <= 6.0 + 1e-12);
    }

    #[test]
    fn solve_rejects_bad_inputs() {
        assert!(matches!(
            steady_state_solve(&[1.5], &[1.0], 0.0),
            Err(ModelError::BadDiversionRatio(_))
        ));
        assert!(matches!(
            steady_state_solve(&[], &[], 0.0),
            Err(ModelError::NoBackends)
        ));
        assert!(matches!(
            steady_state_solve(&[0.0], &[0.0], 0.0),
            Err(ModelError::BadBackendCap(_))
        ));
        assert!(matches!(
            steady_state_solve(&[0.0], &[1.0], -1.0),
            Err(ModelError::BadCacheCap(_))
        ));
        assert!(matches!(
            steady_state_solve(&[0.0, 0.0], &[1.0], 0.0),
            Err(ModelError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn aggregate_bound_examples() {
        assert_eq!(
            aggregate_bound(&[1800.0, 1800.0, 1800.0, 6350.0], 7000.0),
            18750.0
        );
        assert_eq!(aggregate_bound(&[], 0.0), 0.0);
        assert_eq!(
            aggregate_bound(&[3500.0, 3500.0, 3500.0, 7100.0], 7100.0),
            24700.0
        );
    }
}
