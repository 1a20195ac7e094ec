//! Cache capacity regulation: move shard quota from drives that barely use
//! their cache share to drives whose valves are pinned open.
//!
//! A valve stuck at 1 means the drive wants more diversion than its hit rate
//! supports — it is short on cache capacity. A valve below the threshold
//! leaves headroom, so some of that drive's shards can be taken away, unless
//! the shards in question carry so many hits that losing them would push the
//! valve past 1. Drives that ever received capacity are never reclaimed from,
//! which keeps quota flowing one way and bounds the number of regulation
//! passes.

use crate::model::ValveConfig;

use super::{ControllerParams, ShardMove, ShardStats};

const FULL_VALVE: f64 = 1.0 - 1e-9;

/// What one regulation pass decided.
#[derive(Debug, Clone, PartialEq)]
pub struct RegulationOutcome {
    /// Shard reassignments to perform; empty means hold the allocation.
    pub moves: Vec<ShardMove>,
    /// Drives short on cache capacity (valve pinned at 1).
    pub needy: Vec<usize>,
    /// Drives eligible to give up capacity.
    pub surplus: Vec<usize>,
    /// Surplus drives spared because their cheapest shards still carry too
    /// many hits.
    pub skipped: Vec<usize>,
}

impl RegulationOutcome {
    fn hold(needy: Vec<usize>, surplus: Vec<usize>) -> Self {
        Self {
            moves: Vec::new(),
            needy,
            surplus,
            skipped: Vec::new(),
        }
    }

    /// Drives that gain shards under this outcome.
    pub fn recipients(&self) -> Vec<usize> {
        let mut r: Vec<usize> = self.moves.iter().map(|m| m.to).collect();
        r.sort_unstable();
        r.dedup();
        r
    }

    /// Drives that lose shards under this outcome.
    pub fn donors(&self, stats: &ShardStats) -> Vec<usize> {
        let mut d: Vec<usize> = self.moves.iter().map(|m| stats.owner[m.shard]).collect();
        d.sort_unstable();
        d.dedup();
        d
    }
}

/// Decide one capacity regulation pass.
///
/// Needy drives are those with valves at 1; surplus drives have valves below
/// the threshold, still own shards, and have not previously received
/// capacity. Each surplus drive offers its lowest-hit shards, up to the
/// reclamation granularity, unless their combined hit contribution plus the
/// drive's valve exceeds 1 (reclaiming would leave the drive short). The
/// pooled shards are split evenly across needy drives, remainder round-robin
/// by ascending drive index.
pub fn regulate_capacity(
    valves: &ValveConfig,
    stats: &ShardStats,
    params: &ControllerParams,
    received_capacity: &[bool],
) -> RegulationOutcome {
    let drives = valves.len();
    let quota = stats.quota(drives);
    let owner_hits = stats.owner_hits(drives);

    let needy: Vec<usize> = (0..drives).filter(|&d| valves.get(d) >= FULL_VALVE).collect();
    let surplus: Vec<usize> = (0..drives)
        .filter(|&d| {
            valves.get(d) < params.p_threshold && !received_capacity[d] && quota[d] > 0
        })
        .collect();
    if needy.is_empty() || surplus.is_empty() {
        return RegulationOutcome::hold(needy, surplus);
    }

    let mut pool: Vec<usize> = Vec::new();
    let mut skipped = Vec::new();
    for &drive in &surplus {
        let mut shards = stats.shards_of(drive);
        shards.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
        let take = params.reclaim_shards.min(shards.len());
        let candidates = &shards[..take];
        let candidate_hits: u64 = candidates.iter().map(|&(_, h)| h).sum();
        let contribution = if owner_hits[drive] == 0 {
            0.0
        } else {
            candidate_hits as f64 / owner_hits[drive] as f64
        };
        if contribution + valves.get(drive) > 1.0 {
            skipped.push(drive);
            continue;
        }
        pool.extend(candidates.iter().map(|&(id, _)| id));
    }

    if pool.is_empty() {
        let mut outcome = RegulationOutcome::hold(needy, surplus);
        outcome.skipped = skipped;
        return outcome;
    }

    let share = pool.len() / needy.len();
    let remainder = pool.len() % needy.len();
    let mut moves = Vec::with_capacity(pool.len());
    let mut next = 0usize;
    for (rank, &drive) in needy.iter().enumerate() {
        let count = share + usize::from(rank < remainder);
        for _ in 0..count {
            moves.push(ShardMove {
                shard: pool[next],
                to: drive,
            });
            next += 1;
        }
    }
    debug_assert_eq!(next, pool.len());

    RegulationOutcome {
        moves,
        needy,
        surplus,
        skipped,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ValveConfig;

    fn params() -> ControllerParams {
        let mut p = ControllerParams::for_drives(4);
        p.shard_count = 16;
        p.reclaim_shards = 2;
        p
    }

    fn even_stats(drives: usize, shards: usize, hits_per_shard: u64) -> ShardStats {
        ShardStats {
            owner: (0..shards).map(|s| s % drives).collect(),
            hits: vec![hits_per_shard; shards],
        }
    }

    #[test]
    fn moves_quota_from_surplus_to_needy() {
        // Two drives pinned open, two idle valves.
        let valves = ValveConfig::new(vec![1.0, 1.0, 0.02, 0.0]).unwrap();
        let stats = even_stats(4, 16, 10);
        let outcome = regulate_capacity(&valves, &stats, &params(), &[false; 4]);
        assert_eq!(outcome.needy, vec![0, 1]);
        assert_eq!(outcome.surplus, vec![2, 3]);
        assert_eq!(outcome.moves.len(), 4);
        assert_eq!(outcome.recipients(), vec![0, 1]);
        assert_eq!(outcome.donors(&stats), vec![2, 3]);
        // even split: two shards each
        let to_first = outcome.moves.iter().filter(|m| m.to == 0).count();
        assert_eq!(to_first, 2);
    }

    #[test]
    fn no_needy_is_a_hold() {
        let valves = ValveConfig::new(vec![0.5, 0.5, 0.1, 0.1]).unwrap();
        let stats = even_stats(4, 16, 10);
        let outcome = regulate_capacity(&valves, &stats, &params(), &[false; 4]);
        assert!(outcome.moves.is_empty());
        assert!(outcome.needy.is_empty());
    }

    #[test]
    fn no_surplus_is_a_hold() {
        let valves = ValveConfig::new(vec![1.0, 1.0, 0.95, 0.95]).unwrap();
        let stats = even_stats(4, 16, 10);
        let outcome = regulate_capacity(&valves, &stats, &params(), &[false; 4]);
        assert!(outcome.moves.is_empty());
        assert!(outcome.surplus.is_empty());
    }

    #[test]
    fn received_capacity_is_protected() {
        let valves = ValveConfig::new(vec![1.0, 0.1, 0.1, 0.1]).unwrap();
        let stats = even_stats(4, 16, 10);
        let received = [false, true, true, false];
        let outcome = regulate_capacity(&valves, &stats, &params(), &received);
        assert_eq!(outcome.surplus, vec![3]);
        assert!(outcome.moves.iter().all(|m| stats.owner[m.shard] == 3));
    }

    #[test]
    fn hot_shards_block_reclamation() {
        // Drive 2's shards carry half its hits each; with its valve at 0.6
        // the contribution check (0.5 + 0.6 > 1) spares it.
        let valves = ValveConfig::new(vec![1.0, 0.6, 0.0, 1.0]).unwrap();
        let mut p = params();
        p.reclaim_shards = 1;
        let stats = ShardStats {
            owner: vec![0, 0, 1, 1, 2, 2, 3, 3],
            hits: vec![10, 10, 50, 50, 0, 0, 10, 10],
        };
        let outcome = regulate_capacity(&valves, &stats, &p, &[false; 4]);
        assert_eq!(outcome.skipped, vec![1]);
        assert!(outcome.moves.iter().all(|m| stats.owner[m.shard] == 2));
    }

    #[test]
    fn remainder_goes_round_robin_by_index() {
        // Three needy drives, one surplus drive giving 2 shards: drives 0 and
        // 1 get one each, drive 2 gets none.
        let valves = ValveConfig::new(vec![1.0, 1.0, 1.0, 0.0]).unwrap();
        let stats = even_stats(4, 16, 1);
        let outcome = regulate_capacity(&valves, &stats, &params(), &[false; 4]);
        assert_eq!(outcome.moves.len(), 2);
        assert_eq!(outcome.moves[0].to, 0);
        assert_eq!(outcome.moves[1].to, 1);
    }

    #[test]
    fn lowest_hit_shards_go_first() {
        let valves = ValveConfig::new(vec![1.0, 0.0]).unwrap();
        let mut p = params();
        p.reclaim_shards = 2;
        let stats = ShardStats {
            owner: vec![0, 1, 1, 1, 1],
            hits: vec![0, 40, 5, 30, 1],
        };
        let outcome = regulate_capacity(&valves, &stats, &p, &[false; 2]);
        let mut moved: Vec<usize> = outcome.moves.iter().map(|m| m.shard).collect();
        moved.sort_unstable();
        assert_eq!(moved, vec![2, 4]);
    }
}
