use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hacache_bench::commands::{
    cmd_compare, cmd_plan, cmd_run, cmd_sweep_capacity, cmd_sweep_valves, ControllerKind,
};
use hacache_bench::config::{CacheCapacity, PatternKind, ScenarioConfig, Topology};

const EXIT_CONFIG: u8 = 2;
const EXIT_NOT_CONVERGED: u8 = 3;

/// Benchmark harness for cache-fronted heterogeneous SSD arrays: plan
/// optimal diversion ratios, run the adaptive controller against the event
/// simulator, compare it with the single-valve baseline, and sweep
/// sensitivity curves. All scenario keys can come from a config file
/// (key = value lines) and every one can be overridden by a flag.
#[derive(Parser)]
#[command(name = "hacache-bench", version, max_term_width = 100)]
struct Cli {
    /// Scenario config file (key = value lines, # comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Write the command's CSV artifact here instead of standard output.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Emit only the CSV artifact, no prose.
    #[arg(long, global = true)]
    quiet: bool,

    /// Disable cache capacity regulation.
    #[arg(long, global = true)]
    no_regulation: bool,

    /// Which controller drives the run.
    #[arg(long, global = true, value_enum, default_value_t = ControllerArg::Hacache)]
    controller: ControllerArg,

    #[command(flatten)]
    overrides: Overrides,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ControllerArg {
    Hacache,
    Nhc,
}

#[derive(Args)]
struct Overrides {
    /// Topology preset (4A, 3A-1B, 2A-2B, 1A-3B, 4B) or "custom".
    #[arg(long, global = true)]
    topology: Option<String>,
    /// Backend peak bandwidths in MB/s for a custom topology, comma-separated.
    #[arg(long, global = true)]
    backends: Option<String>,
    /// Cache device peak bandwidth in MB/s for a custom topology.
    #[arg(long, global = true)]
    cache_bw: Option<f64>,
    /// Request size in bytes (presets are profiled at 4096 and 131072).
    #[arg(long, global = true)]
    block_size: Option<u64>,
    /// Access pattern: uniform, hotspot, or sequential.
    #[arg(long, global = true)]
    pattern: Option<String>,
    #[arg(long, global = true)]
    hot_space_frac: Option<f64>,
    #[arg(long, global = true)]
    hot_access_frac: Option<f64>,
    /// Cache capacity as a fraction of the io range.
    #[arg(long, global = true)]
    cache_frac: Option<f64>,
    /// Cache capacity in bytes (overrides cache_frac).
    #[arg(long, global = true)]
    cache_bytes: Option<u64>,
    /// Logical address space in bytes.
    #[arg(long, global = true)]
    io_range: Option<u64>,
    #[arg(long, global = true)]
    stripe_unit: Option<u64>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Telemetry-cycle budget per run.
    #[arg(long, global = true)]
    max_cycles: Option<u64>,
    /// Backend probe increment in MB/s.
    #[arg(long, global = true)]
    delta_b: Option<f64>,
    /// Cache probe increment in MB/s.
    #[arg(long, global = true)]
    delta_c: Option<f64>,
    /// Surplus-capacity valve threshold.
    #[arg(long, global = true)]
    p_thres: Option<f64>,
    #[arg(long, global = true)]
    shard_count: Option<usize>,
    /// Shards reclaimed per surplus drive per regulation pass.
    #[arg(long, global = true)]
    delta_q: Option<usize>,
    /// Hill-climb step for the baseline controller.
    #[arg(long, global = true)]
    nhc_step: Option<f64>,
    /// Telemetry window in milliseconds.
    #[arg(long, global = true)]
    window_ms: Option<f64>,
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Queue depth per thread.
    #[arg(long, global = true)]
    qd: Option<usize>,
    /// Initial valve value on every drive.
    #[arg(long, global = true)]
    initial_p: Option<f64>,
    /// Relative telemetry noise the controller tolerates.
    #[arg(long, global = true)]
    noise_bound: Option<f64>,
    /// Assumed hit rate for analytic sweeps.
    #[arg(long, global = true)]
    hit_rate: Option<f64>,
    /// Initial-valve samples for sweep-valves.
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Capacity sweep points in percent, comma-separated.
    #[arg(long, global = true)]
    capacity_points: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Compute optimal diversion ratios for the configured topology.
    Plan,
    /// Run the selected controller against the event simulator.
    Run,
    /// Run both controllers on identical workloads and report the gap.
    Compare,
    /// Distribution of convergence cycles over random initial valves.
    SweepValves,
    /// Regulation-iteration curve over cache capacity.
    SweepCapacity,
}

impl Overrides {
    fn apply(&self, config: &mut ScenarioConfig) -> Result<()> {
        if let Some(backends) = &self.backends {
            let rates = backends
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .context("bad --backends list")?;
            let cache_bw = self
                .cache_bw
                .or(match &config.topology {
                    Topology::Custom { cache_bw, .. } => Some(*cache_bw),
                    Topology::Preset(_) => None,
                })
                .context("--backends needs --cache-bw")?;
            config.topology = Topology::Custom {
                backends: rates,
                cache_bw,
            };
        } else if let Some(name) = &self.topology {
            if name != "custom" {
                config.topology = Topology::Preset(name.clone());
            }
        }
        if let Some(v) = self.block_size {
            config.block_size = v;
        }
        if let Some(p) = &self.pattern {
            config.pattern = PatternKind::parse(p)?;
        }
        if let Some(v) = self.hot_space_frac {
            config.hot_space_frac = v;
        }
        if let Some(v) = self.hot_access_frac {
            config.hot_access_frac = v;
        }
        if let Some(v) = self.cache_frac {
            config.cache_capacity = CacheCapacity::Frac(v);
        }
        if let Some(v) = self.cache_bytes {
            config.cache_capacity = CacheCapacity::Bytes(v);
        }
        if let Some(v) = self.io_range {
            config.io_range = v;
        }
        if let Some(v) = self.stripe_unit {
            config.stripe_unit = v;
        }
        if let Some(v) = self.seed {
            config.seed = v;
        }
        if let Some(v) = self.max_cycles {
            config.max_cycles = v;
        }
        if let Some(v) = self.delta_b {
            config.delta_b = Some(v);
        }
        if let Some(v) = self.delta_c {
            config.delta_c = Some(v);
        }
        if let Some(v) = self.p_thres {
            config.p_thres = v;
        }
        if let Some(v) = self.shard_count {
            config.shard_count = v;
        }
        if let Some(v) = self.delta_q {
            config.delta_q = v;
        }
        if let Some(v) = self.nhc_step {
            config.nhc_step = v;
        }
        if let Some(v) = self.window_ms {
            config.window_ms = v;
        }
        if let Some(v) = self.threads {
            config.threads = v;
        }
        if let Some(v) = self.qd {
            config.qd = v;
        }
        if let Some(v) = self.initial_p {
            config.initial_p = v;
        }
        if let Some(v) = self.noise_bound {
            config.noise_bound = v;
        }
        if let Some(v) = self.hit_rate {
            config.hit_rate = v;
        }
        if let Some(v) = self.samples {
            config.samples = v;
        }
        if let Some(points) = &self.capacity_points {
            config.capacity_points = points
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .context("bad --capacity-points list")?;
        }
        config.validate()
    }
}

fn load_config(cli: &Cli) -> Result<ScenarioConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("cannot read config {}", path.display()))?;
            ScenarioConfig::parse(&text)?
        }
        None => ScenarioConfig::default(),
    };
    cli.overrides.apply(&mut config)?;
    Ok(config)
}

struct Rendered {
    prose: String,
    csv: String,
    converged: bool,
}

fn execute(cli: &Cli, config: &ScenarioConfig) -> Result<Rendered> {
    let regulate = !cli.no_regulation;
    let controller = match cli.controller {
        ControllerArg::Hacache => ControllerKind::HaCache,
        ControllerArg::Nhc => ControllerKind::Nhc,
    };
    Ok(match cli.command {
        Command::Plan => {
            let out = cmd_plan(config)?;
            Rendered {
                prose: out.prose,
                csv: out.csv,
                converged: true,
            }
        }
        Command::Run => {
            let out = cmd_run(config, controller, regulate)?;
            Rendered {
                prose: format!("{}{}", out.prose, out.summary_csv),
                csv: out.trace_csv,
                converged: out.summary.converged,
            }
        }
        Command::Compare => {
            let out = cmd_compare(config, regulate)?;
            let converged = out.ours.converged && out.baseline.converged;
            Rendered {
                prose: out.prose,
                csv: out.csv,
                converged,
            }
        }
        Command::SweepValves => {
            let out = cmd_sweep_valves(config)?;
            Rendered {
                prose: out.prose,
                csv: out.csv,
                converged: out.all_converged,
            }
        }
        Command::SweepCapacity => {
            let out = cmd_sweep_capacity(config, regulate)?;
            Rendered {
                prose: out.prose,
                csv: out.csv,
                converged: out.all_converged,
            }
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let config = match load_config(&cli) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("config error: {err:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let rendered = match execute(&cli, &config) {
        Ok(rendered) => rendered,
        Err(err) => {
            eprintln!("error: {err:#}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };

    if !cli.quiet {
        print!("{}", rendered.prose);
    }
    match &cli.out {
        Some(path) => {
            if let Err(err) = fs::write(path, rendered.csv.as_bytes()) {
                eprintln!("cannot write {}: {err}", path.display());
                return ExitCode::FAILURE;
            }
        }
        None => print!("{}", rendered.csv),
    }
    if !rendered.converged {
        return ExitCode::from(EXIT_NOT_CONVERGED);
    }
    ExitCode::SUCCESS
}
