//! Command implementations, returning structured results plus rendered CSV
//! so the binary and the test suites share one code path.

use std::fmt::Write as _;

use anyhow::{anyhow, Result};
use hacache_core::analytic::AnalyticEnv;
use hacache_core::controller::{
    nhc_optimize, ControlLoop, CycleRecord, EnvError, MeasurementEnv, ShardMove, ShardStats,
    Telemetry, ValveController,
};
use hacache_core::model::{aggregate_bound, ValveConfig};
use hacache_core::planner::plan_optimal;
use hacache_core::simkit::SimEnv;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{CacheCapacity, PatternKind, ScenarioConfig};

/// Extra windows measured at the converged operating point for summaries.
const SUMMARY_WINDOWS: u64 = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ControllerKind {
    HaCache,
    Nhc,
}

impl ControllerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ControllerKind::HaCache => "hacache",
            ControllerKind::Nhc => "nhc",
        }
    }
}

fn fmt_mbs(v: f64) -> String {
    format!("{v:.3}")
}

fn fmt_frac(v: f64) -> String {
    format!("{v:.6}")
}

fn trace_header(drives: usize) -> String {
    let mut cols = vec!["cycle".to_string(), "phase".to_string()];
    cols.extend((0..drives).map(|i| format!("p_{i}")));
    cols.extend((0..drives).map(|i| format!("b_{i}")));
    cols.push("s_mbs".to_string());
    cols.extend((0..drives).map(|i| format!("quota_{i}")));
    cols.join(",")
}

fn trace_row(record: &CycleRecord, drives: usize) -> String {
    let mut cols = vec![record.cycle.to_string(), record.phase.as_str().to_string()];
    cols.extend(record.valves.iter().map(|&p| fmt_frac(p)));
    cols.extend(record.backend.iter().map(|&b| fmt_mbs(b)));
    cols.push(fmt_mbs(record.aggregate));
    if record.quota.is_empty() {
        cols.extend((0..drives).map(|_| "0".to_string()));
    } else {
        cols.extend(record.quota.iter().map(|q| q.to_string()));
    }
    cols.join(",")
}

fn render_trace(records: &[CycleRecord], drives: usize) -> String {
    let mut out = trace_header(drives);
    out.push('\n');
    for record in records {
        out.push_str(&trace_row(record, drives));
        out.push('\n');
    }
    out
}

// ---------------------------------------------------------------------------
// plan

#[derive(Debug, Clone)]
pub struct PlanOutput {
    pub level: f64,
    pub ratios: Vec<f64>,
    pub cache_used: f64,
    pub bound: f64,
    pub utilization: f64,
    pub csv: String,
    pub prose: String,
}

pub fn cmd_plan(config: &ScenarioConfig) -> Result<PlanOutput> {
    let caps = config.backend_caps()?;
    let cache_cap = config.cache_cap()?;
    let plan = plan_optimal(&caps, cache_cap).map_err(|e| anyhow!("{e}"))?;
    let bound = aggregate_bound(&caps, cache_cap);
    let utilization = plan.aggregate() / bound;

    let mut csv = String::from("drive,cap_mbs,ratio,backend_mbs,cache_mbs\n");
    for (i, (&cap, &ratio)) in caps.iter().zip(&plan.ratios).enumerate() {
        writeln!(
            csv,
            "{i},{},{},{},{}",
            fmt_mbs(cap),
            fmt_frac(ratio),
            fmt_mbs((1.0 - ratio) * plan.level),
            fmt_mbs(ratio * plan.level),
        )
        .unwrap();
    }

    let ratios_pct: Vec<String> = plan
        .ratios
        .iter()
        .map(|r| format!("{:.1}%", r * 100.0))
        .collect();
    let prose = format!(
        "topology {} at {} B blocks\n\
         optimal level     {} MB/s per drive\n\
         diversion ratios  {{{}}}\n\
         cache consumed    {} of {} MB/s\n\
         aggregate         {} MB/s of bound {} ({:.1}% utilization)\n",
        config.topology_label(),
        config.block_size,
        fmt_mbs(plan.level),
        ratios_pct.join(", "),
        fmt_mbs(plan.cache_used()),
        fmt_mbs(cache_cap),
        fmt_mbs(plan.aggregate()),
        fmt_mbs(bound),
        utilization * 100.0,
    );

    Ok(PlanOutput {
        level: plan.level,
        cache_used: plan.cache_used(),
        ratios: plan.ratios,
        bound,
        utilization,
        csv,
        prose,
    })
}

// ---------------------------------------------------------------------------
// run

/// Wraps an environment and records one trace row per measurement; used for
/// the baseline controller, which has no trace of its own.
struct RecordingEnv<'a, E: MeasurementEnv> {
    inner: &'a mut E,
    phase: &'static str,
    cycle: u64,
    rows: Vec<String>,
}

impl<'a, E: MeasurementEnv> RecordingEnv<'a, E> {
    fn new(inner: &'a mut E) -> Self {
        Self {
            inner,
            phase: "warmup",
            cycle: 0,
            rows: Vec::new(),
        }
    }

    fn set_phase(&mut self, phase: &'static str) {
        self.phase = phase;
    }

    fn into_trace(self, drives: usize) -> String {
        let mut out = trace_header(drives);
        out.push('\n');
        for row in self.rows {
            out.push_str(&row);
            out.push('\n');
        }
        out
    }
}

impl<E: MeasurementEnv> MeasurementEnv for RecordingEnv<'_, E> {
    fn drives(&self) -> usize {
        self.inner.drives()
    }

    fn measure(&mut self, valves: &ValveConfig) -> Result<Telemetry, EnvError> {
        let tele = self.inner.measure(valves)?;
        self.cycle += 1;
        let drives = tele.backend.len();
        let mut cols = vec![self.cycle.to_string(), self.phase.to_string()];
        cols.extend(valves.as_slice().iter().map(|&p| fmt_frac(p)));
        cols.extend(tele.backend.iter().map(|&b| fmt_mbs(b)));
        cols.push(fmt_mbs(tele.aggregate));
        match self.inner.quotas() {
            Some(quota) => cols.extend(quota.iter().map(|q| q.to_string())),
            None => cols.extend((0..drives).map(|_| "0".to_string())),
        }
        self.rows.push(cols.join(","));
        Ok(tele)
    }

    fn shard_stats(&self) -> Option<ShardStats> {
        self.inner.shard_stats()
    }

    fn quotas(&self) -> Option<Vec<usize>> {
        self.inner.quotas()
    }

    fn move_shards(&mut self, moves: &[ShardMove]) -> Result<(), EnvError> {
        self.inner.move_shards(moves)
    }
}

#[derive(Debug, Clone)]
pub struct RunSummary {
    pub controller: ControllerKind,
    pub final_mbs: f64,
    pub bound_mbs: f64,
    pub utilization: f64,
    pub hit_rates: Vec<f64>,
    pub converged: bool,
    pub cycles: u64,
    pub iterations: u64,
    pub regulation_epochs: u64,
    pub final_valves: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub trace_csv: String,
    pub summary_csv: String,
    pub prose: String,
}

fn summary_csv(summary: &RunSummary, config: &ScenarioConfig) -> String {
    let drives = summary.hit_rates.len();
    let mut header = vec![
        "controller".to_string(),
        "topology".to_string(),
        "block_size".to_string(),
        "seed".to_string(),
        "final_mbs".to_string(),
        "bound_mbs".to_string(),
        "utilization".to_string(),
        "converged".to_string(),
        "cycles".to_string(),
        "iterations".to_string(),
        "regulation_epochs".to_string(),
    ];
    header.extend((0..drives).map(|i| format!("hit_{i}")));
    let mut row = vec![
        summary.controller.as_str().to_string(),
        config.topology_label(),
        config.block_size.to_string(),
        config.seed.to_string(),
        fmt_mbs(summary.final_mbs),
        fmt_mbs(summary.bound_mbs),
        fmt_frac(summary.utilization),
        summary.converged.to_string(),
        summary.cycles.to_string(),
        summary.iterations.to_string(),
        summary.regulation_epochs.to_string(),
    ];
    row.extend(summary.hit_rates.iter().map(|&h| fmt_frac(h)));
    format!("{}\n{}\n", header.join(","), row.join(","))
}

fn run_prose(summary: &RunSummary) -> String {
    let hits: Vec<String> = summary
        .hit_rates
        .iter()
        .map(|h| format!("{:.3}", h))
        .collect();
    format!(
        "controller        {}\n\
         final aggregate   {} MB/s of bound {} ({:.1}% utilization)\n\
         hit rates         [{}]\n\
         converged         {} ({} cycles, {} iterations, {} regulation epochs)\n",
        summary.controller.as_str(),
        fmt_mbs(summary.final_mbs),
        fmt_mbs(summary.bound_mbs),
        summary.utilization * 100.0,
        hits.join(", "),
        summary.converged,
        summary.cycles,
        summary.iterations,
        summary.regulation_epochs,
    )
}

pub fn cmd_run(
    config: &ScenarioConfig,
    controller: ControllerKind,
    regulate: bool,
) -> Result<RunOutput> {
    let caps = config.backend_caps()?;
    let drives = caps.len();
    let bound = aggregate_bound(&caps, config.cache_cap()?);
    let mut env = SimEnv::new(config.sim_config()?, config.window_secs())?;
    let params = config.controller_params()?;
    let initial = ValveConfig::uniform(drives, config.initial_p).map_err(|e| anyhow!("{e}"))?;

    match controller {
        ControllerKind::HaCache => {
            let mut lp = ControlLoop::new(&mut env, params, initial, regulate)?;
            let report = lp.run(config.max_cycles)?;
            let final_mbs = lp.controller_mut().measure_mean(SUMMARY_WINDOWS)?;
            let hit_rates = lp
                .controller()
                .latest()
                .map(|t| t.hit_rates.clone())
                .unwrap_or_default();
            let records = lp.take_trace();
            let summary = RunSummary {
                controller,
                final_mbs,
                bound_mbs: bound,
                utilization: final_mbs / bound,
                hit_rates,
                converged: report.converged,
                cycles: report.cycles + SUMMARY_WINDOWS,
                iterations: report.iterations,
                regulation_epochs: report.regulation_epochs,
                final_valves: report.valves,
            };
            Ok(RunOutput {
                summary_csv: summary_csv(&summary, config),
                prose: run_prose(&summary),
                trace_csv: render_trace(&records, drives),
                summary,
            })
        }
        ControllerKind::Nhc => {
            let mut recording = RecordingEnv::new(&mut env);
            {
                let mut warm =
                    ValveController::new(&mut recording, params, initial.clone())?;
                warm.warm_up(config.max_cycles)?;
            }
            recording.set_phase("nhc");
            let report = nhc_optimize(
                &mut recording,
                config.nhc_step,
                config.initial_p,
                config.max_cycles / 9 + 1,
                3,
            )?;
            recording.set_phase("stable");
            let valves =
                ValveConfig::uniform(drives, report.valve).map_err(|e| anyhow!("{e}"))?;
            let mut total = 0.0;
            let mut hit_rates = Vec::new();
            for _ in 0..SUMMARY_WINDOWS {
                let tele = recording.measure(&valves)?;
                total += tele.aggregate;
                hit_rates = tele.hit_rates;
            }
            let final_mbs = total / SUMMARY_WINDOWS as f64;
            let cycles = recording.cycle;
            let summary = RunSummary {
                controller,
                final_mbs,
                bound_mbs: bound,
                utilization: final_mbs / bound,
                hit_rates,
                converged: report.converged,
                cycles,
                iterations: 1,
                regulation_epochs: 0,
                final_valves: vec![report.valve; drives],
            };
            Ok(RunOutput {
                summary_csv: summary_csv(&summary, config),
                prose: run_prose(&summary),
                trace_csv: recording.into_trace(drives),
                summary,
            })
        }
    }
}

// ---------------------------------------------------------------------------
// compare

#[derive(Debug, Clone)]
pub struct CompareOutput {
    pub ours: RunSummary,
    pub baseline: RunSummary,
    /// Utilization gap in percentage points of the aggregate bound.
    pub gain_points: f64,
    /// Relative bandwidth gain.
    pub gain_ratio: f64,
    pub csv: String,
    pub prose: String,
}

pub fn cmd_compare(config: &ScenarioConfig, regulate: bool) -> Result<CompareOutput> {
    let ours = cmd_run(config, ControllerKind::HaCache, regulate)?.summary;
    let baseline = cmd_run(config, ControllerKind::Nhc, regulate)?.summary;
    let gain_points = (ours.utilization - baseline.utilization) * 100.0;
    let gain_ratio = if baseline.final_mbs > 0.0 {
        ours.final_mbs / baseline.final_mbs - 1.0
    } else {
        0.0
    };

    let mut csv = String::from(
        "controller,final_mbs,bound_mbs,utilization,converged,cycles\n",
    );
    for summary in [&ours, &baseline] {
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            summary.controller.as_str(),
            fmt_mbs(summary.final_mbs),
            fmt_mbs(summary.bound_mbs),
            fmt_frac(summary.utilization),
            summary.converged,
            summary.cycles,
        )
        .unwrap();
    }

    let prose = format!(
        "{}\n{}\ngain over baseline: {:+.1} utilization points ({:+.1}% bandwidth)\n",
        run_prose(&ours),
        run_prose(&baseline),
        gain_points,
        gain_ratio * 100.0
    );
    Ok(CompareOutput {
        ours,
        baseline,
        gain_points,
        gain_ratio,
        csv,
        prose,
    })
}

// ---------------------------------------------------------------------------
// sweep-valves

#[derive(Debug, Clone)]
pub struct SweepValvesOutput {
    pub cycles: Vec<u64>,
    pub mean_cycles: f64,
    pub max_cycles: u64,
    pub all_converged: bool,
    pub csv: String,
    pub prose: String,
}

/// Evenly stratified random starts: each dimension is a shuffled set of
/// one-per-stratum samples.
fn latin_hypercube(dims: usize, samples: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let columns: Vec<Vec<f64>> = (0..dims)
        .map(|_| {
            let mut values: Vec<f64> = (0..samples)
                .map(|j| (j as f64 + rng.random::<f64>()) / samples as f64)
                .collect();
            for i in (1..values.len()).rev() {
                let k = rng.random_range(0..=i);
                values.swap(i, k);
            }
            values
        })
        .collect();
    (0..samples)
        .map(|j| (0..dims).map(|d| columns[d][j]).collect())
        .collect()
}

fn corner_vectors(dims: usize) -> Vec<Vec<f64>> {
    (0..1usize << dims)
        .map(|bits| {
            (0..dims)
                .map(|d| if bits & (1 << d) != 0 { 1.0 } else { 0.0 })
                .collect()
        })
        .collect()
}

/// Convergence-cycle distribution over random initial valve vectors, on the
/// analytic model at the configured hit rate. The full 0.01 grid over the
/// valve space is out of reach (101^drives points), so stratified samples
/// plus all corner vectors stand in for it.
pub fn cmd_sweep_valves(config: &ScenarioConfig) -> Result<SweepValvesOutput> {
    let caps = config.backend_caps()?;
    let drives = caps.len();
    let cache_cap = config.cache_cap()?;
    let mut params = config.controller_params()?;
    params.noise_bound = 0.0; // the analytic environment is exact

    let mut starts = latin_hypercube(drives, config.samples, config.seed);
    starts.extend(corner_vectors(drives));

    let mut csv = String::from("sample,kind,");
    csv.push_str(
        &(0..drives)
            .map(|i| format!("p0_{i}"))
            .collect::<Vec<_>>()
            .join(","),
    );
    csv.push_str(",cycles,converged,final_mbs\n");

    let mut cycles = Vec::with_capacity(starts.len());
    let mut all_converged = true;
    for (index, start) in starts.iter().enumerate() {
        let kind = if index < config.samples { "lhs" } else { "corner" };
        let mut env = AnalyticEnv::with_uniform_hits(caps.clone(), cache_cap, config.hit_rate)
            .map_err(|e| anyhow!("{e}"))?;
        let initial = ValveConfig::new(start.clone()).map_err(|e| anyhow!("{e}"))?;
        let mut ctl = ValveController::new(&mut env, params.clone(), initial)?;
        let report = ctl.run_two_phase(config.max_cycles)?;
        all_converged &= report.converged;
        cycles.push(report.cycles);
        let p0: Vec<String> = start.iter().map(|&p| fmt_frac(p)).collect();
        writeln!(
            csv,
            "{index},{kind},{},{},{},{}",
            p0.join(","),
            report.cycles,
            report.converged,
            fmt_mbs(report.aggregate),
        )
        .unwrap();
    }

    let mean_cycles = cycles.iter().sum::<u64>() as f64 / cycles.len() as f64;
    let max_cycles = cycles.iter().copied().max().unwrap_or(0);
    let prose = format!(
        "topology {}: {} starts ({} stratified + {} corners)\n\
         mean convergence  {:.2} cycles\n\
         max convergence   {} cycles ({:.2}x the mean)\n\
         all converged     {}\n",
        config.topology_label(),
        starts.len(),
        config.samples,
        1usize << drives,
        mean_cycles,
        max_cycles,
        max_cycles as f64 / mean_cycles,
        all_converged,
    );

    Ok(SweepValvesOutput {
        cycles,
        mean_cycles,
        max_cycles,
        all_converged,
        csv,
        prose,
    })
}

// ---------------------------------------------------------------------------
// sweep-capacity

#[derive(Debug, Clone)]
pub struct CapacityPoint {
    pub capacity_pct: f64,
    pub iterations: u64,
    pub regulation_epochs: u64,
    pub converged: bool,
    pub final_mbs: f64,
    pub utilization: f64,
}

#[derive(Debug, Clone)]
pub struct SweepCapacityOutput {
    pub points: Vec<CapacityPoint>,
    pub max_regulation_epochs: u64,
    pub all_converged: bool,
    pub csv: String,
    pub prose: String,
}

/// Regulation-iteration curve over cache capacity, on the simulator with a
/// uniform workload (the pattern that makes hit rate track capacity).
/// `iterations` counts warm-up plus valve-adjustment rounds; the reported
/// convergence metric counts only rounds that executed a regulation decision.
pub fn cmd_sweep_capacity(config: &ScenarioConfig, regulate: bool) -> Result<SweepCapacityOutput> {
    let caps = config.backend_caps()?;
    let drives = caps.len();
    let bound = aggregate_bound(&caps, config.cache_cap()?);
    let mut csv = String::from(
        "capacity_pct,iterations,regulation_epochs,converged,final_mbs,utilization\n",
    );
    let mut points = Vec::new();
    for &pct in &config.capacity_points {
        let mut point_config = config.clone();
        point_config.pattern = PatternKind::Uniform;
        point_config.cache_capacity = CacheCapacity::Frac(pct / 100.0);
        let mut env = SimEnv::new(point_config.sim_config()?, point_config.window_secs())?;
        let params = point_config.controller_params()?;
        let initial =
            ValveConfig::uniform(drives, point_config.initial_p).map_err(|e| anyhow!("{e}"))?;
        let mut lp = ControlLoop::new(&mut env, params, initial, regulate)?;
        let report = lp.run(point_config.max_cycles)?;
        let final_mbs = lp.controller_mut().measure_mean(SUMMARY_WINDOWS)?;
        let point = CapacityPoint {
            capacity_pct: pct,
            iterations: report.iterations,
            regulation_epochs: report.regulation_epochs,
            converged: report.converged,
            final_mbs,
            utilization: final_mbs / bound,
        };
        writeln!(
            csv,
            "{},{},{},{},{},{}",
            fmt_frac(pct),
            point.iterations,
            point.regulation_epochs,
            point.converged,
            fmt_mbs(point.final_mbs),
            fmt_frac(point.utilization),
        )
        .unwrap();
        points.push(point);
    }

    let max_regulation_epochs = points.iter().map(|p| p.regulation_epochs).max().unwrap_or(0);
    let all_converged = points.iter().all(|p| p.converged);
    let prose = format!(
        "topology {}: {} capacity points\n\
         max regulation epochs  {}\n\
         all converged          {}\n",
        config.topology_label(),
        points.len(),
        max_regulation_epochs,
        all_converged,
    );

    Ok(SweepCapacityOutput {
        points,
        max_regulation_epochs,
        all_converged,
        csv,
        prose,
    })
}
