//! Deterministic request-level discrete-event simulator.
//!
//! A fixed window of outstanding requests (threads x queue depth) is kept in
//! flight; every completion admits the next generated request, which reroutes
//! through the cache valves and lands on a device queue. Devices serve FIFO
//! at their profiled rate, one request at a time. This reproduces the
//! blocking that cripples heterogeneous arrays: slow drives soak up the whole
//! window while fast drives idle. Identical configuration and seed give
//! bit-identical traces.

mod cache;
mod striping;
mod workload;

pub use cache::{CacheState, Route};
pub use striping::{map_block_to_drive, Striping};
pub use workload::{AccessPattern, BlockSampler, IndexPermutation, WorkloadSpec};

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::controller::{EnvError, MeasurementEnv, ShardMove, ShardStats, Telemetry};
use crate::model::ValveConfig;

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    BadConfig(String),
    #[error("block {block} outside io range of {total} blocks")]
    BlockOutOfRange { block: u64, total: u64 },
}

/// Everything needed to build one simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Peak bandwidth of each backend drive at the workload block size, MB/s.
    pub backend_rates: Vec<f64>,
    /// Peak bandwidth of the cache device, MB/s.
    pub cache_rate: f64,
    pub stripe_unit: u64,
    pub workload: WorkloadSpec,
    /// Cache capacity in bytes; zero disables the cache entirely.
    pub cache_bytes: u64,
    pub shard_count: usize,
}

/// Aggregated counters for one telemetry window.
#[derive(Debug, Clone, PartialEq)]
pub struct TelemetrySample {
    /// Window length in simulated seconds.
    pub window: f64,
    /// Bytes each backend drive served itself.
    pub backend_bytes: Vec<u64>,
    /// Bytes the cache device served on behalf of each drive.
    pub cache_bytes: Vec<u64>,
    /// Cache lookups that hit, per owning drive.
    pub hits: Vec<u64>,
    /// Cache lookups that missed, per owning drive.
    pub misses: Vec<u64>,
    /// Per-shard hits during the window.
    pub shard_hits: Vec<u64>,
    /// Time-averaged share of queued requests sitting at each backend drive.
    pub queued_share: Vec<f64>,
    /// Share of generated requests whose stripe target was each drive.
    pub arrival_share: Vec<f64>,
    /// Requests completed during the window.
    pub completed: u64,
}

impl TelemetrySample {
    pub fn total_bytes(&self) -> u64 {
        self.backend_bytes.iter().sum::<u64>() + self.cache_bytes.iter().sum::<u64>()
    }

    pub fn hit_rates(&self) -> Vec<f64> {
        self.hits
            .iter()
            .zip(&self.misses)
            .map(|(&h, &m)| {
                let lookups = h + m;
                if lookups == 0 {
                    0.0
                } else {
                    h as f64 / lookups as f64
                }
            })
            .collect()
    }

    pub fn csv_header(drives: usize) -> String {
        let mut cols = vec!["window_s".to_string()];
        let per_drive = |name: &str| (0..drives).map(move |i| format!("{name}_{i}")).collect::<Vec<_>>();
        cols.extend(per_drive("backend_mbs"));
        cols.extend(per_drive("cache_mbs"));
        cols.extend(per_drive("hits"));
        cols.extend(per_drive("misses"));
        cols.extend(per_drive("queued_share"));
        cols.extend(per_drive("arrival_share"));
        cols.push("completed".to_string());
        cols.join(",")
    }

    pub fn csv_row(&self) -> String {
        let mut cols = vec![format!("{:.6}", self.window)];
        let mbs = |bytes: u64| format!("{:.6}", bytes as f64 / 1e6 / self.window);
        cols.extend(self.backend_bytes.iter().map(|&b| mbs(b)));
        cols.extend(self.cache_bytes.iter().map(|&b| mbs(b)));
        cols.extend(self.hits.iter().map(|h| h.to_string()));
        cols.extend(self.misses.iter().map(|m| m.to_string()));
        cols.extend(self.queued_share.iter().map(|q| format!("{q:.6}")));
        cols.extend(self.arrival_share.iter().map(|a| format!("{a:.6}")));
        cols.push(self.completed.to_string());
        cols.join(",")
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    time: f64,
    seq: u64,
    device: usize,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.time == other.time && self.seq == other.seq
    }
}
impl Eq for Event {}
impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        // reversed: BinaryHeap is a max-heap, we want earliest-first
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone)]
struct Device {
    seconds_per_request: f64,
    queue: VecDeque<usize>,
    in_service: Option<usize>,
    bytes: u64,
    queue_len: usize,
    queue_area: f64,
    last_change: f64,
}

impl Device {
    fn new(rate_mbs: f64, block_size: u64) -> Self {
        Self {
            seconds_per_request: block_size as f64 / (rate_mbs * 1e6),
            queue: VecDeque::new(),
            in_service: None,
            bytes: 0,
            queue_len: 0,
            queue_area: 0.0,
            last_change: 0.0,
        }
    }

    fn integrate(&mut self, now: f64) {
        self.queue_area += self.queue_len as f64 * (now - self.last_change);
        self.last_change = now;
    }
}

pub struct Simulator {
    block_size: u64,
    striping: Striping,
    sampler: BlockSampler,
    rng: ChaCha8Rng,
    valves: Vec<f64>,
    cache: Option<CacheState>,
    /// Backend devices first, cache device last (when enabled).
    devices: Vec<Device>,
    cache_device: Option<usize>,
    events: BinaryHeap<Event>,
    seq: u64,
    now: f64,
    // window counters
    cache_bytes: Vec<u64>,
    hits: Vec<u64>,
    misses: Vec<u64>,
    arrivals: Vec<u64>,
    completed_window: u64,
    // lifetime counters
    generated: u64,
    completed: u64,
}

impl Simulator {
    pub fn new(config: SimConfig) -> Result<Self, SimError> {
        let drives = config.backend_rates.len();
        if drives < 2 {
            return Err(SimError::BadConfig(format!(
                "need at least 2 backend drives, got {drives}"
            )));
        }
        for &r in &config.backend_rates {
            if !(r > 0.0) || !r.is_finite() {
                return Err(SimError::BadConfig(format!(
                    "backend rate {r} MB/s is not positive"
                )));
            }
        }
        config.workload.validate()?;
        let striping = Striping::new(
            drives,
            config.stripe_unit,
            config.workload.block_size,
            config.workload.io_range,
        )?;
        let block_size = config.workload.block_size;

        let cache_enabled = config.cache_bytes > 0 && config.cache_rate > 0.0;
        let cache = if cache_enabled {
            Some(CacheState::new(
                drives,
                config.shard_count,
                config.cache_bytes / block_size,
            )?)
        } else {
            None
        };

        let mut devices: Vec<Device> = config
            .backend_rates
            .iter()
            .map(|&r| Device::new(r, block_size))
            .collect();
        let cache_device = if cache_enabled {
            if !config.cache_rate.is_finite() {
                return Err(SimError::BadConfig("cache rate must be finite".into()));
            }
            devices.push(Device::new(config.cache_rate, block_size));
            Some(drives)
        } else {
            None
        };

        let sampler = BlockSampler::new(&config.workload)?;
        let mut sim = Self {
            block_size,
            striping,
            sampler,
            rng: ChaCha8Rng::seed_from_u64(config.workload.seed),
            valves: vec![1.0; drives],
            cache,
            devices,
            cache_device,
            events: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            cache_bytes: vec![0; drives],
            hits: vec![0; drives],
            misses: vec![0; drives],
            arrivals: vec![0; drives],
            completed_window: 0,
            generated: 0,
            completed: 0,
        };
        let slots = config.workload.window_slots();
        if sim.sampler.total_blocks() > 0 {
            for _ in 0..slots {
                sim.generate();
            }
        }
        Ok(sim)
    }

    pub fn drives(&self) -> usize {
        self.striping.drives()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn generated(&self) -> u64 {
        self.generated
    }

    pub fn completed(&self) -> u64 {
        self.completed
    }

    pub fn cache(&self) -> Option<&CacheState> {
        self.cache.as_ref()
    }

    pub fn set_valves(&mut self, valves: &ValveConfig) {
        debug_assert_eq!(valves.len(), self.drives());
        self.valves.copy_from_slice(valves.as_slice());
    }

    /// Route one generated request through the cache and onto a device
    /// queue. Returns how it was routed.
    fn dispatch(&mut self, block: u64, owner: usize) -> Route {
        let route = match self.cache.as_mut() {
            Some(cache) => {
                if cache.lookup(block) {
                    self.hits[owner] += 1;
                    if self.rng.random::<f64>() < self.valves[owner] {
                        Route::CacheHitServed
                    } else {
                        Route::CacheHitForwarded
                    }
                } else {
                    self.misses[owner] += 1;
                    cache.admit(owner, block);
                    Route::Miss
                }
            }
            None => {
                self.misses[owner] += 1;
                Route::Miss
            }
        };
        let device = match route {
            Route::CacheHitServed => self.cache_device.expect("cache device present"),
            _ => owner,
        };
        self.enqueue(device, owner);
        route
    }

    fn generate(&mut self) {
        let block = self.sampler.next_block(&mut self.rng);
        let owner = self.striping.drive_of(block).expect("sampled in range");
        self.arrivals[owner] += 1;
        self.generated += 1;
        self.dispatch(block, owner);
    }

    fn enqueue(&mut self, device: usize, owner: usize) {
        let now = self.now;
        let dev = &mut self.devices[device];
        dev.integrate(now);
        dev.queue_len += 1;
        dev.queue.push_back(owner);
        self.start_service(device);
    }

    fn start_service(&mut self, device: usize) {
        let dev = &mut self.devices[device];
        if dev.in_service.is_some() {
            return;
        }
        let Some(owner) = dev.queue.pop_front() else {
            return;
        };
        dev.in_service = Some(owner);
        let time = self.now + dev.seconds_per_request;
        self.seq += 1;
        self.events.push(Event {
            time,
            seq: self.seq,
            device,
        });
    }

    /// Process completions up to `until` simulated seconds.
    pub fn advance(&mut self, until: f64) -> u64 {
        let mut processed = 0;
        while let Some(&next) = self.events.peek() {
            if next.time > until {
                break;
            }
            self.events.pop();
            self.now = next.time;
            let device = next.device;
            let owner = {
                let dev = &mut self.devices[device];
                dev.integrate(next.time);
                dev.queue_len -= 1;
                dev.bytes += self.block_size;
                dev.in_service.take().expect("completion without service")
            };
            if Some(device) == self.cache_device {
                self.cache_bytes[owner] += self.block_size;
            }
            self.completed += 1;
            self.completed_window += 1;
            self.start_service(device);
            // The freed slot admits the next request immediately.
            self.generate();
            processed += 1;
        }
        for dev in &mut self.devices {
            dev.integrate(until);
        }
        self.now = until;
        processed
    }

    /// Advance one telemetry window and aggregate its counters.
    pub fn measure_cycle(&mut self, window: f64) -> TelemetrySample {
        debug_assert!(window > 0.0);
        let drives = self.drives();
        for dev in &mut self.devices {
            dev.bytes = 0;
            dev.queue_area = 0.0;
            dev.last_change = self.now;
        }
        self.cache_bytes = vec![0; drives];
        self.hits = vec![0; drives];
        self.misses = vec![0; drives];
        self.arrivals = vec![0; drives];
        self.completed_window = 0;
        if let Some(cache) = self.cache.as_mut() {
            cache.take_window_hits();
        }

        self.advance(self.now + window);

        let area_total: f64 = self.devices.iter().map(|d| d.queue_area).sum();
        let queued_share = self.devices[..drives]
            .iter()
            .map(|d| {
                if area_total > 0.0 {
                    d.queue_area / area_total
                } else {
                    0.0
                }
            })
            .collect();
        let arrivals_total: u64 = self.arrivals.iter().sum();
        let arrival_share = self
            .arrivals
            .iter()
            .map(|&a| {
                if arrivals_total > 0 {
                    a as f64 / arrivals_total as f64
                } else {
                    0.0
                }
            })
            .collect();
        let shard_hits = match self.cache.as_mut() {
            Some(cache) => cache.take_window_hits(),
            None => Vec::new(),
        };
        TelemetrySample {
            window,
            backend_bytes: self.devices[..drives].iter().map(|d| d.bytes).collect(),
            cache_bytes: self.cache_bytes.clone(),
            hits: self.hits.clone(),
            misses: self.misses.clone(),
            shard_hits,
            queued_share,
            arrival_share,
            completed: self.completed_window,
        }
    }

    pub fn move_shards(&mut self, moves: &[(usize, usize)]) -> Result<(), SimError> {
        match self.cache.as_mut() {
            Some(cache) => cache.move_shards(moves),
            None => Err(SimError::BadConfig("no cache to regulate".into())),
        }
    }
}

/// Adapter exposing a [`Simulator`] as a [`MeasurementEnv`]: one measurement
/// is one telemetry window.
pub struct SimEnv {
    sim: Simulator,
    window: f64,
}

impl SimEnv {
    pub fn new(config: SimConfig, window: f64) -> Result<Self, SimError> {
        if !(window > 0.0) {
            return Err(SimError::BadConfig(format!(
                "window {window} must be positive"
            )));
        }
        Ok(Self {
            sim: Simulator::new(config)?,
            window,
        })
    }

    pub fn simulator(&self) -> &Simulator {
        &self.sim
    }

    pub fn simulator_mut(&mut self) -> &mut Simulator {
        &mut self.sim
    }

    pub fn window(&self) -> f64 {
        self.window
    }

    pub fn sample_to_telemetry(&self, sample: &TelemetrySample) -> Telemetry {
        let to_mbs = |bytes: u64| bytes as f64 / 1e6 / sample.window;
        let backend: Vec<f64> = sample.backend_bytes.iter().map(|&b| to_mbs(b)).collect();
        let cache_served: Vec<f64> = sample.cache_bytes.iter().map(|&b| to_mbs(b)).collect();
        let aggregate = backend.iter().sum::<f64>() + cache_served.iter().sum::<f64>();
        Telemetry {
            backend,
            cache_served,
            hit_rates: sample.hit_rates(),
            aggregate,
            requests: sample.completed,
        }
    }
}

impl MeasurementEnv for SimEnv {
    fn drives(&self) -> usize {
        self.sim.drives()
    }

    fn measure(&mut self, valves: &ValveConfig) -> Result<Telemetry, EnvError> {
        if valves.len() != self.sim.drives() {
            return Err(EnvError::Failed(format!(
                "{} valves for {} drives",
                valves.len(),
                self.sim.drives()
            )));
        }
        self.sim.set_valves(valves);
        let sample = self.sim.measure_cycle(self.window);
        Ok(self.sample_to_telemetry(&sample))
    }

    fn shard_stats(&self) -> Option<ShardStats> {
        let cache = self.sim.cache()?;
        Some(ShardStats {
            owner: cache.shard_owner().to_vec(),
            hits: cache.shard_hits_total().to_vec(),
        })
    }

    fn quotas(&self) -> Option<Vec<usize>> {
        Some(self.sim.cache()?.quota())
    }

    fn move_shards(&mut self, moves: &[ShardMove]) -> Result<(), EnvError> {
        let pairs: Vec<(usize, usize)> = moves.iter().map(|m| (m.shard, m.to)).collect();
        self.sim
            .move_shards(&pairs)
            .map_err(|e| EnvError::Failed(e.to_string()))
    }
}
