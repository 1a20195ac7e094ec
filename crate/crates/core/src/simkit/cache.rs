//! Shard-partitioned cache with per-owner FIFO replacement.
//!
//! The cache is split into fixed-size shards, each owned by exactly one
//! backend drive and holding only blocks that stripe to that drive. A drive's
//! quota is the number of shards it owns; regulation moves whole shards
//! between owners, dropping their contents. Within one owner's shard set,
//! replacement is a single FIFO over all its blocks: no admission filter, no
//! refresh on hit.

use std::collections::{HashMap, HashSet, VecDeque};

use super::SimError;

/// Where a dispatched request ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Route {
    /// Cache hit served by the cache device.
    CacheHitServed,
    /// Cache hit forwarded to the backend by the valve.
    CacheHitForwarded,
    /// Not cached; served by the backend and admitted.
    Miss,
}

#[derive(Debug, Clone)]
pub struct CacheState {
    shard_cap: usize,
    shard_owner: Vec<usize>,
    shard_blocks: Vec<HashSet<u64>>,
    /// Window hit counter per shard, reset by telemetry sampling.
    shard_hits: Vec<u64>,
    /// Cumulative hit counter per shard, reset when shards move.
    shard_hits_total: Vec<u64>,
    owner_shards: Vec<Vec<u32>>,
    /// Owner shards that still have free slots, used during fill.
    owner_open: Vec<Vec<u32>>,
    /// Per-owner insertion order: (block, shard).
    owner_fifo: Vec<VecDeque<(u64, u32)>>,
    index: HashMap<u64, u32>,
}

impl CacheState {
    /// `capacity_blocks` is rounded down to a whole number of blocks per
    /// shard; a capacity smaller than one block per shard is rejected.
    pub fn new(
        drives: usize,
        shard_count: usize,
        capacity_blocks: u64,
    ) -> Result<Self, SimError> {
        if shard_count == 0 {
            return Err(SimError::BadConfig("shard count must be positive".into()));
        }
        let shard_cap = (capacity_blocks / shard_count as u64) as usize;
        if shard_cap == 0 {
            return Err(SimError::BadConfig(format!(
                "cache of {capacity_blocks} blocks cannot fill {shard_count} shards"
            )));
        }
        let shard_owner: Vec<usize> = (0..shard_count).map(|s| s % drives).collect();
        let mut owner_shards = vec![Vec::new(); drives];
        let mut owner_open = vec![Vec::new(); drives];
        for (shard, &owner) in shard_owner.iter().enumerate() {
            owner_shards[owner].push(shard as u32);
            owner_open[owner].push(shard as u32);
        }
        Ok(Self {
            shard_cap,
            shard_owner,
            shard_blocks: vec![HashSet::new(); shard_count],
            shard_hits: vec![0; shard_count],
            shard_hits_total: vec![0; shard_count],
            owner_shards,
            owner_open,
            owner_fifo: vec![VecDeque::new(); drives],
            index: HashMap::new(),
        })
    }

    pub fn shard_count(&self) -> usize {
        self.shard_owner.len()
    }

    pub fn shard_cap(&self) -> usize {
        self.shard_cap
    }

    pub fn quota(&self) -> Vec<usize> {
        self.owner_shards.iter().map(Vec::len).collect()
    }

    pub fn shard_owner(&self) -> &[usize] {
        &self.shard_owner
    }

    pub fn shard_hits_total(&self) -> &[u64] {
        &self.shard_hits_total
    }

    pub fn resident_blocks(&self, owner: usize) -> usize {
        self.owner_fifo[owner].len()
    }

    /// Take and reset the per-shard window hit counters.
    pub fn take_window_hits(&mut self) -> Vec<u64> {
        std::mem::replace(&mut self.shard_hits, vec![0; self.shard_owner.len()])
    }

    /// Look up a block. On a hit, counts it against the holding shard.
    pub fn lookup(&mut self, block: u64) -> bool {
        match self.index.get(&block) {
            Some(&shard) => {
                self.shard_hits[shard as usize] += 1;
                self.shard_hits_total[shard as usize] += 1;
                true
            }
            None => false,
        }
    }

    /// Admit a missed block for its owning drive, evicting the owner's
    /// oldest block when its shard set is full. No-op for owners without
    /// capacity.
    pub fn admit(&mut self, owner: usize, block: u64) {
        debug_assert!(!self.index.contains_key(&block));
        let capacity = self.owner_shards[owner].len() * self.shard_cap;
        if capacity == 0 {
            return;
        }
        let shard = if self.owner_fifo[owner].len() < capacity {
            // Fill phase: place into any owner shard with room.
            let &shard = self.owner_open[owner].last().expect("open shard exists");
            if self.shard_blocks[shard as usize].len() + 1 >= self.shard_cap {
                self.owner_open[owner].pop();
            }
            shard
        } else {
            let (old_block, old_shard) = self.owner_fifo[owner]
                .pop_front()
                .expect("full owner has resident blocks");
            self.index.remove(&old_block);
            self.shard_blocks[old_shard as usize].remove(&old_block);
            old_shard
        };
        self.shard_blocks[shard as usize].insert(block);
        self.index.insert(block, shard);
        self.owner_fifo[owner].push_back((block, shard));
    }

    /// Reassign shards to new owners. Contents of every moved shard are
    /// invalidated and all cumulative hit counters reset, so the next
    /// regulation pass judges the new layout on fresh numbers.
    pub fn move_shards(&mut self, moves: &[(usize, usize)]) -> Result<(), SimError> {
        for &(shard, to) in moves {
            if shard >= self.shard_owner.len() || to >= self.owner_shards.len() {
                return Err(SimError::BadConfig(format!(
                    "shard move ({shard} -> {to}) out of range"
                )));
            }
            let from = self.shard_owner[shard];
            if from == to {
                continue;
            }
            for block in self.shard_blocks[shard].drain() {
                self.index.remove(&block);
            }
            let shard32 = shard as u32;
            self.owner_fifo[from].retain(|&(_, s)| s != shard32);
            self.owner_shards[from].retain(|&s| s != shard32);
            self.owner_open[from].retain(|&s| s != shard32);
            self.shard_owner[shard] = to;
            self.owner_shards[to].push(shard32);
            self.owner_open[to].push(shard32);
        }
        self.shard_hits_total = vec![0; self.shard_owner.len()];
        Ok(())
    }

    #[cfg(test)]
    fn check_invariants(&self) {
        let mut seen = HashSet::new();
        for (shard, blocks) in self.shard_blocks.iter().enumerate() {
            assert!(blocks.len() <= self.shard_cap);
            for &b in blocks {
                assert!(seen.insert(b), "block {b} in two shards");
                assert_eq!(self.index.get(&b), Some(&(shard as u32)));
            }
        }
        assert_eq!(seen.len(), self.index.len());
        for (owner, fifo) in self.owner_fifo.iter().enumerate() {
            for &(block, shard) in fifo {
                assert_eq!(self.shard_owner[shard as usize], owner);
                assert!(self.shard_blocks[shard as usize].contains(&block));
            }
        }
    }
}
