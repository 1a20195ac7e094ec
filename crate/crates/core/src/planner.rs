//! Optimal diversion-ratio planning via water filling, with brute-force
//! oracles used to certify the closed-form result.
//!
//! The planner answers: given per-drive bandwidth caps and a cache bandwidth
//! budget, what share of each drive's logical traffic should the cache absorb
//! so the array-wide aggregate is maximized? Pouring the cache budget over
//! the slowest drives first raises the common logical level until either the
//! budget runs out or the next-faster drive is reached.

use thiserror::Error;

use crate::model::{steady_state_solve, ModelError};

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("no backend drives given")]
    NoBackends,
    #[error("backend bandwidth cap {0} MB/s is not positive")]
    BadBackendCap(f64),
    #[error("cache bandwidth cap {0} MB/s is negative")]
    BadCacheCap(f64),
    #[error("grid step {0} outside (0, 0.1]")]
    BadGridStep(f64),
    #[error("search space of {points} grid points exceeds cap {cap}")]
    SearchTooLarge { points: u128, cap: u128 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-drive diversion ratios plus the logical water level they establish.
#[derive(Debug, Clone, PartialEq)]
pub struct DiversionPlan {
    /// Fraction of each drive's logical traffic the cache should serve, in
    /// the caller's original drive order.
    pub ratios: Vec<f64>,
    /// Optimal common logical bandwidth per member drive (MB/s).
    pub level: f64,
    /// Number of drives that receive cache bandwidth (ratio > 0).
    pub covered: usize,
}

impl DiversionPlan {
    /// Aggregate bandwidth the plan achieves: drives * level.
    pub fn aggregate(&self) -> f64 {
        self.level * self.ratios.len() as f64
    }

    /// Cache bandwidth the plan consumes.
    pub fn cache_used(&self) -> f64 {
        self.ratios.iter().sum::<f64>() * self.level
    }
}

fn validate_caps(backend_caps: &[f64], cache_cap: f64) -> Result<(), PlanError> {
    if backend_caps.is_empty() {
        return Err(PlanError::NoBackends);
    }
    for &cap in backend_caps {
        if !(cap > 0.0) || !cap.is_finite() {
            return Err(PlanError::BadBackendCap(cap));
        }
    }
    if cache_cap < 0.0 || !cache_cap.is_finite() {
        return Err(PlanError::BadCacheCap(cache_cap));
    }
    Ok(())
}

/// Compute the optimal diversion ratios for the given bandwidth caps.
///
/// Walks the caps in ascending order, at each step assuming the cache budget
/// is spread over the `k` slowest drives, and stops once the implied level no
/// longer reaches the next drive. Each drive's ratio is then whatever tops it
/// up from its own cap to the level. Ties between equal caps are broken by
/// original index so plans are deterministic.
pub fn plan_optimal(backend_caps: &[f64], cache_cap: f64) -> Result<DiversionPlan, PlanError> {
    validate_caps(backend_caps, cache_cap)?;
    let n = backend_caps.len();

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| backend_caps[a].total_cmp(&backend_caps[b]).then(a.cmp(&b)));

    let mut level = f64::NAN;
    let mut cap_sum = 0.0;
    for k in 1..=n {
        cap_sum += backend_caps[order[k - 1]];
        let candidate = (cache_cap + cap_sum) / k as f64;
        if k == n || candidate <= backend_caps[order[k]] {
            level = candidate;
            break;
        }
    }
    debug_assert!(level.is_finite());

    let ratios: Vec<f64> = backend_caps
        .iter()
        .map(|&cap| (1.0 - cap / level).max(0.0))
        .collect();
    let covered = ratios.iter().filter(|&&r| r > 0.0).count();
    Ok(DiversionPlan {
        ratios,
        level,
        covered,
    })
}

/// Certification oracle: search the logical level directly on a grid.
///
/// For a fixed level `T`, the cheapest feasible ratios are
/// `max(0, 1 - cap_i/T)`, so feasibility reduces to
/// `sum_i max(0, T - cap_i) <= cache_cap` and the level is the only free
/// variable. The grid is scanned from the top; the first feasible point wins,
/// which also makes the result the least-cache tie-break among grid optima.
/// The absolute step is `grid_step * min(caps)`, so the returned aggregate is
/// within `drives * level * grid_step` of the true optimum.
pub fn brute_force_plan(
    backend_caps: &[f64],
    cache_cap: f64,
    grid_step: f64,
) -> Result<DiversionPlan, PlanError> {
    validate_caps(backend_caps, cache_cap)?;
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(PlanError::BadGridStep(grid_step));
    }
    let n = backend_caps.len();
    let floor = backend_caps.iter().cloned().fold(f64::INFINITY, f64::min);
    let ceiling = (cache_cap + backend_caps.iter().sum::<f64>()) / n as f64;
    let step = grid_step * floor;

    let feasible = |level: f64| {
        backend_caps
            .iter()
            .map(|&cap| (level - cap).max(0.0))
            .sum::<f64>()
            <= cache_cap
    };

    let mut level = floor;
    if ceiling > floor {
        let steps_up = ((ceiling - floor) / step).floor() as u64;
        for j in (0..=steps_up).rev() {
            let candidate = floor + j as f64 * step;
            if feasible(candidate) {
                level = candidate;
                break;
            }
        }
    }

    let ratios: Vec<f64> = backend_caps
        .iter()
        .map(|&cap| (1.0 - cap / level).max(0.0))
        .collect();
    let covered = ratios.iter().filter(|&&r| r > 0.0).count();
    Ok(DiversionPlan {
        ratios,
        level,
        covered,
    })
}

/// Full grid enumeration over ratio vectors, for cross-checking the 1-D
/// oracle on small arrays.
///
/// Every ratio vector on the grid is pushed through the steady-state solver;
/// the vector with the largest aggregate wins, ties broken by the smallest
/// total diversion. Cost grows as `(1/grid_step + 1)^drives`, so the search
/// refuses to run past `cap` grid points.
pub fn brute_force_plan_full(
    backend_caps: &[f64],
    cache_cap: f64,
    grid_step: f64,
    cap: u128,
) -> Result<DiversionPlan, PlanError> {
    validate_caps(backend_caps, cache_cap)?;
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(PlanError::BadGridStep(grid_step));
    }
    let n = backend_caps.len();
    let per_axis = (1.0 / grid_step).round() as u128 + 1;
    let points = per_axis
        .checked_pow(n as u32)
        .ok_or(PlanError::SearchTooLarge {
            points: u128::MAX,
            cap,
        })?;
    if points > cap {
        return Err(PlanError::SearchTooLarge { points, cap });
    }

    let mut best: Option<(f64, f64, Vec<f64>)> = None; // (aggregate, ratio sum, ratios)
    let mut ratios = vec![0.0f64; n];
    let mut index = vec![0u32; n];
    let last_axis = per_axis as u32 - 1;
    loop {
        for (r, &i) in ratios.iter_mut().zip(&index) {
            *r = (i as f64 * grid_step).min(1.0);
        }
        let state = steady_state_solve(&ratios, backend_caps, cache_cap)?;
        let sum: f64 = ratios.iter().sum();
        let better = match &best {
            None => true,
            Some((agg, rsum, _)) => {
                state.aggregate > *agg || (state.aggregate == *agg && sum < *rsum)
            }
        };
        if better {
            best = Some((state.aggregate, sum, ratios.clone()));
        }

        // odometer increment
        let mut axis = 0;
        loop {
            if axis == n {
                let (aggregate, _, ratios) = best.unwrap();
                let covered = ratios.iter().filter(|&&r| r > 0.0).count();
                return Ok(DiversionPlan {
                    level: aggregate / n as f64,
                    ratios,
                    covered,
                });
            }
            if index[axis] < last_axis {
                index[axis] += 1;
                break;
            }
            index[axis] = 0;
            axis += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(actual: f64, expected: f64, tol: f64) {
        assert!(
            (actual - expected).abs() <= tol,
            "expected {expected}, got {actual}"
        );
    }

    #[test]
    fn deficient_cache_worked_example() {
        let plan = plan_optimal(&[2.0, 3.0, 3.0, 5.0], 4.0).unwrap();
        assert_eq!(plan.level, 4.0);
        assert_eq!(plan.ratios, vec![0.5, 0.25, 0.25, 0.0]);
        assert_eq!(plan.covered, 3);
        assert_eq!(plan.aggregate(), 16.0);
    }

    #[test]
    fn ample_cache_worked_example() {
        let plan = plan_optimal(&[2.0, 3.0, 3.0, 5.0], 11.0).unwrap();
        assert_eq!(plan.level, 6.0);
        assert_close(plan.ratios[0], 2.0 / 3.0, 1e-12);
        assert_close(plan.ratios[1], 0.5, 1e-12);
        assert_close(plan.ratios[2], 0.5, 1e-12);
        assert_close(plan.ratios[3], 1.0 / 6.0, 1e-12);
        assert_eq!(plan.covered, 4);
    }

    #[test]
    fn homogeneous_no_cache_is_degenerate() {
        let plan = plan_optimal(&[7.0; 4], 0.0).unwrap();
        assert_eq!(plan.level, 7.0);
        assert_eq!(plan.ratios, vec![0.0; 4]);
        assert_eq!(plan.covered, 0);
    }

    #[test]
    fn table_preset_ratios() {
        // Three slow 128KB drives plus one fast, cache matching the fast.
        let plan = plan_optimal(&[3500.0, 3500.0, 3500.0, 7100.0], 7100.0).unwrap();
        for i in 0..3 {
            assert_close(plan.ratios[i], 0.40, 0.015);
        }
        assert_eq!(plan.ratios[3], 0.0);

        // One slow 4KB drive plus three fast.
        let plan = plan_optimal(&[1800.0, 6350.0, 6350.0, 6350.0], 7000.0).unwrap();
        assert_eq!(plan.level, 6962.5);
        assert_close(plan.ratios[0], 0.7415, 0.001);
        for i in 1..4 {
            assert_close(plan.ratios[i], 0.0880, 0.001);
        }
    }

    #[test]
    fn empty_caps_rejected() {
        assert_eq!(plan_optimal(&[], 1.0), Err(PlanError::NoBackends));
    }

    #[test]
    fn brute_force_matches_worked_examples() {
        let plan = brute_force_plan(&[2.0, 3.0, 3.0, 5.0], 4.0, 0.01).unwrap();
        assert!((plan.aggregate() - 16.0).abs() <= 4.0 * 4.0 * 0.01);

        let plan = brute_force_plan(&[5.0, 5.0], 0.0, 0.01).unwrap();
        assert_eq!(plan.ratios, vec![0.0, 0.0]);
        assert_eq!(plan.aggregate(), 10.0);

        let plan = brute_force_plan(&[2.0, 3.0, 3.0, 5.0], 11.0, 0.01).unwrap();
        assert!((plan.aggregate() - 24.0).abs() <= 4.0 * 6.0 * 0.01);
    }

    #[test]
    fn full_enumeration_agrees_with_level_grid() {
        let caps = [2.0, 3.0, 4.0];
        let cache = 3.5;
        let fine = brute_force_plan(&caps, cache, 0.01).unwrap();
        let full = brute_force_plan_full(&caps, cache, 0.05, 20_000_000).unwrap();
        let tol = 3.0 * fine.level * (0.05 + 0.01) * 3.0;
        assert!(
            (fine.aggregate() - full.aggregate()).abs() <= tol,
            "1-D {} vs N-D {}",
            fine.aggregate(),
            full.aggregate()
        );
    }

    #[test]
    fn full_enumeration_refuses_oversized_search() {
        let err = brute_force_plan_full(&[1.0; 4], 1.0, 0.01, 1_000_000).unwrap_err();
        assert!(matches!(err, PlanError::SearchTooLarge { .. }));
    }
}
