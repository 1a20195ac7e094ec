//! Scenario configuration: a flat `key = value` document, every key also
//! exposed as a CLI flag that overrides the file.

use std::fmt::Write as _;

use anyhow::{anyhow, bail, Context, Result};
use hacache_core::controller::ControllerParams;
use hacache_core::model::DeviceProfile;
use hacache_core::simkit::{AccessPattern, SimConfig, WorkloadSpec};

use crate::presets::{preset_backends, ssd_c, PRESET_NAMES};

pub const VALID_KEYS: [&str; 23] = [
    "topology",
    "backends",
    "cache_bw",
    "block_size",
    "pattern",
    "hot_space_frac",
    "hot_access_frac",
    "cache_frac",
    "cache_bytes",
    "io_range",
    "stripe_unit",
    "seed",
    "max_cycles",
    "delta_b",
    "delta_c",
    "p_thres",
    "shard_count",
    "delta_q",
    "nhc_step",
    "window_ms",
    "threads",
    "qd",
    "initial_p",
];
// additional tuning keys kept out of the headline list
pub const EXTRA_KEYS: [&str; 4] = ["noise_bound", "hit_rate", "samples", "capacity_points"];

#[derive(Debug, Clone, PartialEq)]
pub enum Topology {
    Preset(String),
    Custom { backends: Vec<f64>, cache_bw: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PatternKind {
    Uniform,
    Hotspot,
    Sequential,
}

impl PatternKind {
    pub fn as_str(self) -> &'static str {
        match self {
            PatternKind::Uniform => "uniform",
            PatternKind::Hotspot => "hotspot",
            PatternKind::Sequential => "sequential",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "uniform" | "uniform_random" => Ok(PatternKind::Uniform),
            "hotspot" => Ok(PatternKind::Hotspot),
            "sequential" => Ok(PatternKind::Sequential),
            other => bail!("unknown pattern '{other}' (uniform, hotspot, sequential)"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CacheCapacity {
    /// Fraction of the io range.
    Frac(f64),
    Bytes(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub topology: Topology,
    pub block_size: u64,
    pub pattern: PatternKind,
    pub hot_space_frac: f64,
    pub hot_access_frac: f64,
    pub cache_capacity: CacheCapacity,
    pub io_range: u64,
    pub stripe_unit: u64,
    pub seed: u64,
    pub max_cycles: u64,
    /// Backend probe increment; the prototype default when unset.
    pub delta_b: Option<f64>,
    /// Cache probe increment; 100 MB/s per drive when unset.
    pub delta_c: Option<f64>,
    pub p_thres: f64,
    pub shard_count: usize,
    pub delta_q: usize,
    pub nhc_step: f64,
    pub window_ms: f64,
    pub threads: usize,
    pub qd: usize,
    pub initial_p: f64,
    pub noise_bound: f64,
    /// Assumed hit rate for analytic sweeps.
    pub hit_rate: f64,
    /// Initial-valve samples for the convergence sweep.
    pub samples: usize,
    /// Capacity sweep points, in percent of the io range.
    pub capacity_points: Vec<f64>,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            topology: Topology::Preset("3A-1B".to_string()),
            block_size: 4096,
            pattern: PatternKind::Hotspot,
            hot_space_frac: 0.05,
            hot_access_frac: 0.95,
            cache_capacity: CacheCapacity::Frac(0.1),
            // Large enough that the hot set stripes evenly across drives
            // and cache generations turn over slowly relative to windows.
            io_range: 32 << 30,
            stripe_unit: 131072,
            seed: 42,
            max_cycles: 10_000,
            delta_b: None,
            delta_c: None,
            p_thres: 0.9,
            shard_count: 256,
            delta_q: 8,
            nhc_step: 0.05,
            window_ms: 100.0,
            threads: 16,
            qd: 64,
            initial_p: 1.0,
            noise_bound: 0.01,
            hit_rate: 0.95,
            samples: 10_000,
            capacity_points: vec![
                1.0, 2.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 90.0,
                100.0,
            ],
        }
    }
}

impl ScenarioConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = Self::default();
        let mut backends: Option<Vec<f64>> = None;
        let mut cache_bw: Option<f64> = None;
        let mut topology_name: Option<String> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected 'key = value'", lineno + 1))?;
            let key = key.trim();
            let value = value.trim();
            let ctx = |what: &str| format!("line {}: bad {what} '{value}'", lineno + 1);
            match key {
                "topology" => topology_name = Some(value.to_string()),
                "backends" => {
                    let rates = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .with_context(|| ctx("backends"))?;
                    backends = Some(rates);
                }
                "cache_bw" => cache_bw = Some(value.parse().with_context(|| ctx("cache_bw"))?),
                "block_size" => {
                    config.block_size = value.parse().with_context(|| ctx("block_size"))?
                }
                "pattern" => config.pattern = PatternKind::parse(value)?,
                "hot_space_frac" => {
                    config.hot_space_frac = value.parse().with_context(|| ctx("hot_space_frac"))?
                }
                "hot_access_frac" => {
                    config.hot_access_frac =
                        value.parse().with_context(|| ctx("hot_access_frac"))?
                }
                "cache_frac" => {
                    config.cache_capacity =
                        CacheCapacity::Frac(value.parse().with_context(|| ctx("cache_frac"))?)
                }
                "cache_bytes" => {
                    config.cache_capacity =
                        CacheCapacity::Bytes(value.parse().with_context(|| ctx("cache_bytes"))?)
                }
                "io_range" => config.io_range = value.parse().with_context(|| ctx("io_range"))?,
                "stripe_unit" => {
                    config.stripe_unit = value.parse().with_context(|| ctx("stripe_unit"))?
                }
                "seed" => config.seed = value.parse().with_context(|| ctx("seed"))?,
                "max_cycles" => {
                    config.max_cycles = value.parse().with_context(|| ctx("max_cycles"))?
                }
                "delta_b" => config.delta_b = Some(value.parse().with_context(|| ctx("delta_b"))?),
                "delta_c" => config.delta_c = Some(value.parse().with_context(|| ctx("delta_c"))?),
                "p_thres" => config.p_thres = value.parse().with_context(|| ctx("p_thres"))?,
                "shard_count" => {
                    config.shard_count = value.parse().with_context(|| ctx("shard_count"))?
                }
                "delta_q" => config.delta_q = value.parse().with_context(|| ctx("delta_q"))?,
                "nhc_step" => config.nhc_step = value.parse().with_context(|| ctx("nhc_step"))?,
                "window_ms" => {
                    config.window_ms = value.parse().with_context(|| ctx("window_ms"))?
                }
                "threads" => config.threads = value.parse().with_context(|| ctx("threads"))?,
                "qd" => config.qd = value.parse().with_context(|| ctx("qd"))?,
                "initial_p" => {
                    config.initial_p = value.parse().with_context(|| ctx("initial_p"))?
                }
                "noise_bound" => {
                    config.noise_bound = value.parse().with_context(|| ctx("noise_bound"))?
                }
                "hit_rate" => config.hit_rate = value.parse().with_context(|| ctx("hit_rate"))?,
                "samples" => config.samples = value.parse().with_context(|| ctx("samples"))?,
                "capacity_points" => {
                    config.capacity_points = value
                        .split(',')
                        .map(|v| v.trim().parse::<f64>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .with_context(|| ctx("capacity_points"))?
                }
                other => bail!(
                    "line {}: unknown key '{other}' (valid: {}, {})",
                    lineno + 1,
                    VALID_KEYS.join(", "),
                    EXTRA_KEYS.join(", ")
                ),
            }
        }

        config.topology = match (topology_name.as_deref(), backends, cache_bw) {
            (Some("custom"), Some(backends), Some(cache_bw)) => {
                Topology::Custom { backends, cache_bw }
            }
            (Some("custom"), _, _) => {
                bail!("topology = custom needs both 'backends' and 'cache_bw'")
            }
            (Some(name), None, None) => Topology::Preset(name.to_string()),
            (Some(_), _, _) => bail!("'backends'/'cache_bw' only apply to topology = custom"),
            (None, Some(backends), Some(cache_bw)) => Topology::Custom { backends, cache_bw },
            (None, None, None) => config.topology,
            (None, _, _) => bail!("'backends' and 'cache_bw' must be given together"),
        };
        config.validate()?;
        Ok(config)
    }

    /// Canonical `key = value` form; parsing it reproduces the config.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        match &self.topology {
            Topology::Preset(name) => {
                writeln!(out, "topology = {name}").unwrap();
            }
            Topology::Custom { backends, cache_bw } => {
                writeln!(out, "topology = custom").unwrap();
                let rates: Vec<String> = backends.iter().map(|r| format!("{r}")).collect();
                writeln!(out, "backends = {}", rates.join(",")).unwrap();
                writeln!(out, "cache_bw = {cache_bw}").unwrap();
            }
        }
        writeln!(out, "block_size = {}", self.block_size).unwrap();
        writeln!(out, "pattern = {}", self.pattern.as_str()).unwrap();
        writeln!(out, "hot_space_frac = {}", self.hot_space_frac).unwrap();
        writeln!(out, "hot_access_frac = {}", self.hot_access_frac).unwrap();
        match self.cache_capacity {
            CacheCapacity::Frac(f) => writeln!(out, "cache_frac = {f}").unwrap(),
            CacheCapacity::Bytes(b) => writeln!(out, "cache_bytes = {b}").unwrap(),
        }
        writeln!(out, "io_range = {}", self.io_range).unwrap();
        writeln!(out, "stripe_unit = {}", self.stripe_unit).unwrap();
        writeln!(out, "seed = {}", self.seed).unwrap();
        writeln!(out, "max_cycles = {}", self.max_cycles).unwrap();
        if let Some(delta_b) = self.delta_b {
            writeln!(out, "delta_b = {delta_b}").unwrap();
        }
        if let Some(delta_c) = self.delta_c {
            writeln!(out, "delta_c = {delta_c}").unwrap();
        }
        writeln!(out, "p_thres = {}", self.p_thres).unwrap();
        writeln!(out, "shard_count = {}", self.shard_count).unwrap();
        writeln!(out, "delta_q = {}", self.delta_q).unwrap();
        writeln!(out, "nhc_step = {}", self.nhc_step).unwrap();
        writeln!(out, "window_ms = {}", self.window_ms).unwrap();
        writeln!(out, "threads = {}", self.threads).unwrap();
        writeln!(out, "qd = {}", self.qd).unwrap();
        writeln!(out, "initial_p = {}", self.initial_p).unwrap();
        writeln!(out, "noise_bound = {}", self.noise_bound).unwrap();
        writeln!(out, "hit_rate = {}", self.hit_rate).unwrap();
        writeln!(out, "samples = {}", self.samples).unwrap();
        let points: Vec<String> = self.capacity_points.iter().map(|p| format!("{p}")).collect();
        writeln!(out, "capacity_points = {}", points.join(",")).unwrap();
        out
    }

    pub fn validate(&self) -> Result<()> {
        if let Topology::Preset(name) = &self.topology {
            if !PRESET_NAMES.contains(&name.as_str()) {
                bail!(
                    "unknown topology preset '{name}' (valid: {}, or 'custom')",
                    PRESET_NAMES.join(", ")
                );
            }
        }
        if self.block_size == 0 || self.io_range % self.block_size != 0 {
            bail!(
                "block_size {} must divide io_range {}",
                self.block_size,
                self.io_range
            );
        }
        if !(self.initial_p >= 0.0 && self.initial_p <= 1.0) {
            bail!("initial_p {} outside [0, 1]", self.initial_p);
        }
        if !(self.hit_rate >= 0.0 && self.hit_rate <= 1.0) {
            bail!("hit_rate {} outside [0, 1]", self.hit_rate);
        }
        if !(self.window_ms > 0.0) {
            bail!("window_ms must be positive");
        }
        for &p in &self.capacity_points {
            if !(p > 0.0 && p <= 100.0) {
                bail!("capacity point {p} outside (0, 100]");
            }
        }
        Ok(())
    }

    /// Backend peaks in MB/s at this config's block size, in drive order.
    pub fn backend_caps(&self) -> Result<Vec<f64>> {
        match &self.topology {
            Topology::Preset(name) => {
                let drives = preset_backends(name)
                    .ok_or_else(|| anyhow!("unknown topology preset '{name}'"))?;
                drives
                    .iter()
                    .map(|d| {
                        d.bandwidth(self.block_size)
                            .map_err(|e| anyhow!("{e} (profiled sizes: 4096, 131072)"))
                    })
                    .collect()
            }
            Topology::Custom { backends, .. } => Ok(backends.clone()),
        }
    }

    pub fn cache_cap(&self) -> Result<f64> {
        match &self.topology {
            Topology::Preset(_) => ssd_c()
                .bandwidth(self.block_size)
                .map_err(|e| anyhow!("{e} (profiled sizes: 4096, 131072)")),
            Topology::Custom { cache_bw, .. } => Ok(*cache_bw),
        }
    }

    pub fn topology_label(&self) -> String {
        match &self.topology {
            Topology::Preset(name) => name.clone(),
            Topology::Custom { backends, .. } => format!("custom-{}", backends.len()),
        }
    }

    pub fn cache_bytes(&self) -> u64 {
        match self.cache_capacity {
            CacheCapacity::Frac(f) => (self.io_range as f64 * f) as u64,
            CacheCapacity::Bytes(b) => b,
        }
    }

    pub fn controller_params(&self) -> Result<ControllerParams> {
        let drives = self.backend_caps()?.len();
        let mut params = ControllerParams::for_drives(drives);
        if let Some(delta_b) = self.delta_b {
            params.backend_step = delta_b;
        }
        if let Some(delta_c) = self.delta_c {
            params.cache_step = delta_c;
        } else {
            params.cache_step = 100.0 * drives as f64;
        }
        params.p_threshold = self.p_thres;
        params.shard_count = self.shard_count;
        params.reclaim_shards = self.delta_q;
        params.noise_bound = self.noise_bound;
        Ok(params)
    }

    pub fn workload(&self) -> WorkloadSpec {
        let pattern = match self.pattern {
            PatternKind::Uniform => AccessPattern::UniformRandom,
            PatternKind::Sequential => AccessPattern::Sequential,
            PatternKind::Hotspot => AccessPattern::Hotspot {
                space_frac: self.hot_space_frac,
                access_frac: self.hot_access_frac,
            },
        };
        WorkloadSpec {
            block_size: self.block_size,
            io_range: self.io_range,
            pattern,
            threads: self.threads,
            queue_depth: self.qd,
            seed: self.seed,
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig> {
        Ok(SimConfig {
            backend_rates: self.backend_caps()?,
            cache_rate: self.cache_cap()?,
            stripe_unit: self.stripe_unit,
            workload: self.workload(),
            cache_bytes: self.cache_bytes(),
            shard_count: self.shard_count,
        })
    }

    pub fn window_secs(&self) -> f64 {
        self.window_ms / 1000.0
    }

    /// Custom topologies as device profiles, for code paths that want them.
    pub fn backend_profiles(&self) -> Result<Vec<DeviceProfile>> {
        match &self.topology {
            Topology::Preset(name) => {
                preset_backends(name).ok_or_else(|| anyhow!("unknown preset '{name}'"))
            }
            Topology::Custom { backends, .. } => backends
                .iter()
                .enumerate()
                .map(|(i, &rate)| {
                    DeviceProfile::new(format!("drive{i}"), [(self.block_size, rate)])
                        .map_err(|e| anyhow!("{e}"))
                })
                .collect(),
        }
    }
}
