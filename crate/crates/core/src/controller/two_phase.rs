//! The two-phase dynamic valve adjustment strategy.
//!
//! Phase 1 walks the drives one by one and tries to replace cache bandwidth
//! with idle backend bandwidth: it re-estimates the drive's valve for a
//! backend target one step higher and keeps the new valve while the drive's
//! logical level holds. Phase 2 spreads idle cache bandwidth evenly: it
//! raises the common level target by one cache step and re-estimates every
//! valve synchronously, keeping the new configuration while the aggregate
//! improves. The phases alternate until a full alternation changes nothing.

use std::collections::VecDeque;

use crate::model::ValveConfig;

use super::{
    estimate_valve, ControllerError, ControllerParams, CycleRecord, MeasurementEnv, Phase,
    RecordKind, Telemetry,
};

/// Outcome of one phase pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PassOutcome {
    /// Probes accepted as new operating points.
    pub commits: usize,
    /// Valve modifications of any kind, including rollback re-estimates.
    pub changes: usize,
    /// The cycle budget ran out mid-pass.
    pub exhausted: bool,
}

/// Result of running the alternation to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhaseReport {
    pub converged: bool,
    /// Telemetry cycles consumed by this call.
    pub cycles: u64,
    pub alternations: u64,
    /// Aggregate bandwidth at the final operating point.
    pub aggregate: f64,
}

/// Drives a [`MeasurementEnv`] through valve adjustment, recording one trace
/// row per telemetry cycle. Single-owner: one controller instance per
/// environment.
pub struct ValveController<'a, E: MeasurementEnv + ?Sized> {
    env: &'a mut E,
    params: ControllerParams,
    valves: ValveConfig,
    latest: Option<Telemetry>,
    hit_history: VecDeque<Vec<f64>>,
    cycle: u64,
    phase: Phase,
    trace: Vec<CycleRecord>,
}

impl<'a, E: MeasurementEnv + ?Sized> ValveController<'a, E> {
    pub fn new(
        env: &'a mut E,
        params: ControllerParams,
        initial: ValveConfig,
    ) -> Result<Self, ControllerError> {
        params.validate()?;
        if initial.len() != env.drives() {
            return Err(ControllerError::BadParams(format!(
                "{} valves for {} drives",
                initial.len(),
                env.drives()
            )));
        }
        Ok(Self {
            env,
            params,
            valves: initial,
            latest: None,
            hit_history: VecDeque::new(),
            cycle: 0,
            phase: Phase::WarmUp,
            trace: Vec::new(),
        })
    }

    pub fn params(&self) -> &ControllerParams {
        &self.params
    }

    pub fn valves(&self) -> &ValveConfig {
        &self.valves
    }

    pub fn latest(&self) -> Option<&Telemetry> {
        self.latest.as_ref()
    }

    pub fn cycles(&self) -> u64 {
        self.cycle
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn trace(&self) -> &[CycleRecord] {
        &self.trace
    }

    pub fn take_trace(&mut self) -> Vec<CycleRecord> {
        std::mem::take(&mut self.trace)
    }

    pub fn env_mut(&mut self) -> &mut E {
        self.env
    }

    pub(super) fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub(super) fn shard_stats(&self) -> Option<super::ShardStats> {
        self.env.shard_stats()
    }

    pub fn quotas(&self) -> Option<Vec<usize>> {
        self.env.quotas()
    }

    pub(super) fn apply_shard_moves(
        &mut self,
        moves: &[super::ShardMove],
    ) -> Result<(), ControllerError> {
        self.env.move_shards(moves)?;
        Ok(())
    }

    pub(super) fn observe_as(&mut self, kind: RecordKind) -> Result<(), ControllerError> {
        self.observe(kind)
    }

    /// Hit rates smoothed over the recent stability window; falls back to the
    /// latest sample when history is short.
    pub fn smoothed_hits(&self) -> Vec<f64> {
        let n = self.valves.len();
        if self.hit_history.is_empty() {
            return vec![0.0; n];
        }
        let mut acc = vec![0.0; n];
        for sample in &self.hit_history {
            for (a, &h) in acc.iter_mut().zip(sample) {
                *a += h;
            }
        }
        let count = self.hit_history.len() as f64;
        acc.iter_mut().for_each(|a| *a /= count);
        acc
    }

    fn record(&mut self, kind: RecordKind, valves: &ValveConfig, tele: &Telemetry) {
        let quota = self.env.quotas().unwrap_or_default();
        self.trace.push(CycleRecord {
            cycle: self.cycle,
            phase: self.phase,
            kind,
            valves: valves.as_slice().to_vec(),
            backend: tele.backend.clone(),
            aggregate: tele.aggregate,
            quota,
        });
    }

    /// Run one telemetry cycle under `valves` without committing them.
    fn sample(
        &mut self,
        valves: &ValveConfig,
        kind: RecordKind,
    ) -> Result<Telemetry, ControllerError> {
        let tele = self.env.measure(valves)?;
        self.cycle += 1;
        if tele.requests > 0 {
            self.hit_history.push_back(tele.hit_rates.clone());
            while self.hit_history.len() > self.params.hit_stable_cycles {
                self.hit_history.pop_front();
            }
        }
        self.record(kind, valves, &tele);
        Ok(tele)
    }

    /// Run one cycle under the committed valves and store it as current.
    fn observe(&mut self, kind: RecordKind) -> Result<(), ControllerError> {
        let valves = self.valves.clone();
        let tele = self.sample(&valves, kind)?;
        self.latest = Some(tele);
        Ok(())
    }

    fn ensure_telemetry(&mut self) -> Result<(), ControllerError> {
        if self.latest.is_none() {
            self.observe(RecordKind::Observe)?;
        }
        Ok(())
    }

    fn noise_floor(&self) -> f64 {
        // Exact environments still need an ulp-scale guard on comparisons.
        self.params.noise_bound.max(1e-12)
    }

    fn commit_margin(&self) -> f64 {
        // An improvement must clear half the noise bound to count as real;
        // exact environments accept any strict improvement.
        self.params.noise_bound * 0.5
    }

    /// Smallest valve change on a drive that has an observable bandwidth
    /// effect: a shift of `dp` moves `dp * hit * level` MB/s, so anything
    /// under `noise_bound / hit` is indistinguishable from measurement
    /// noise. A drive that never hits cannot be affected by its valve at
    /// all.
    fn valve_eps(&self, hit_rate: f64) -> f64 {
        if hit_rate <= 0.0 {
            return f64::INFINITY;
        }
        self.params.valve_epsilon.max(self.params.noise_bound / hit_rate)
    }

    /// Watch hit rates until they stay put for the configured streak, or the
    /// budget runs out. Stability is judged on the smoothed rates: raw
    /// window rates carry sampling noise on the same scale as the bound.
    /// Consecutive windows alone cannot see a slow fill (a large cache warms
    /// over many windows, each step tiny), so the rates must also match a
    /// baseline from several windows back. Idle cycles never count.
    pub fn warm_up(&mut self, cycle_budget: u64) -> Result<bool, ControllerError> {
        self.phase = Phase::WarmUp;
        let ceiling = self.cycle.saturating_add(cycle_budget);
        let mut history: VecDeque<Vec<f64>> = VecDeque::new();
        let baseline_gap = 3 * self.params.hit_stable_cycles;
        let mut streak = 0usize;
        // Changes smaller than the relative noise bound, or in the weeds
        // where relative comparison is meaningless, count as stable.
        let noise_bound = self.params.noise_bound;
        let abs_floor = noise_bound * 0.5;
        let close = move |now: &[f64], then: &[f64]| {
            now.iter()
                .zip(then)
                .all(|(&h, &p)| (h - p).abs() <= (noise_bound * p).max(abs_floor))
        };
        while self.cycle < ceiling {
            self.observe(RecordKind::Observe)?;
            let tele = self.latest.as_ref().unwrap();
            if tele.requests == 0 {
                history.clear();
                streak = 0;
                continue;
            }
            let hits = self.smoothed_hits();
            if history.len() > baseline_gap {
                history.pop_front();
            }
            if let (Some(prev), Some(base)) = (history.back(), history.front()) {
                if close(&hits, prev) && (history.len() <= 1 || close(&hits, base)) {
                    streak += 1;
                } else {
                    streak = 0;
                }
                if streak >= self.params.hit_stable_cycles && history.len() > baseline_gap / 2 {
                    return Ok(true);
                }
            }
            history.push_back(hits);
        }
        Ok(false)
    }

    /// Phase 1: for each drive in order, repeatedly aim its backend one step
    /// higher and keep the re-estimated valve while the drive's logical level
    /// holds; on a level drop (or when the estimate stops moving) re-estimate
    /// from the probe's measured backend and move on.
    pub fn phase1_sweep(&mut self, ceiling: u64) -> Result<PassOutcome, ControllerError> {
        self.ensure_telemetry()?;
        self.phase = Phase::Phase1;
        let mut outcome = PassOutcome {
            commits: 0,
            changes: 0,
            exhausted: false,
        };
        let drives = self.valves.len();

        'drives: for drive in 0..drives {
            loop {
                let hits = self.smoothed_hits();
                let eps = self.valve_eps(hits[drive]);
                let current = self.latest.as_ref().unwrap();
                let level = current.logical(drive);
                if level <= 0.0 {
                    // Nothing flows through this drive; no basis to adjust.
                    continue 'drives;
                }
                let backend_now = current.backend[drive];
                let target = estimate_valve(
                    level,
                    backend_now + self.params.backend_step,
                    hits[drive],
                )?;

                if (target - self.valves.get(drive)).abs() <= eps {
                    // The probe would not modify the valve; re-estimate from
                    // the current state and stop adjusting this drive.
                    let revert = estimate_valve(level, backend_now, hits[drive])?;
                    if (revert - self.valves.get(drive)).abs() > eps {
                        self.valves.set(drive, revert)?;
                        outcome.changes += 1;
                        if self.cycle >= ceiling {
                            outcome.exhausted = true;
                            return Ok(outcome);
                        }
                        self.observe(RecordKind::Rollback)?;
                    }
                    continue 'drives;
                }

                if self.cycle >= ceiling {
                    outcome.exhausted = true;
                    return Ok(outcome);
                }
                let mut probe_valves = self.valves.clone();
                probe_valves.set(drive, target)?;
                let probe = self.sample(&probe_valves, RecordKind::Probe)?;

                let dropped = probe.logical(drive) < level * (1.0 - self.noise_floor());
                if dropped {
                    // Overshot the drive's capacity: back-calculate the valve
                    // from the bandwidth the probe actually measured, at the
                    // pre-probe level. The pre-probe telemetry stays current
                    // unless the valve actually moved.
                    let revert = estimate_valve(level, probe.backend[drive], hits[drive])?;
                    if (revert - self.valves.get(drive)).abs() > eps {
                        self.valves.set(drive, revert)?;
                        outcome.changes += 1;
                        if self.cycle >= ceiling {
                            outcome.exhausted = true;
                            return Ok(outcome);
                        }
                        self.observe(RecordKind::Rollback)?;
                    }
                    continue 'drives;
                }

                self.valves = probe_valves;
                self.latest = Some(probe);
                outcome.commits += 1;
                outcome.changes += 1;
                // mark the accepted probe in the trace
                if let Some(last) = self.trace.last_mut() {
                    last.kind = RecordKind::Commit;
                }
            }
        }
        Ok(outcome)
    }

    /// Phase 2: raise every drive's logical level target by one cache step
    /// spread over all drives, re-estimate every valve synchronously, and
    /// keep the new configuration only while the aggregate strictly
    /// improves. Committing on equal aggregates would let unreachable level
    /// targets pump valves open for no gain, which phase 1 would then spend
    /// cycles undoing.
    ///
    /// Each drive's target is its own measured level plus the shared
    /// increment. Striping keeps the levels equal in the ideal case, where
    /// this matches a single common target exactly; under measured skew it
    /// keeps the spread pointed at the drives as they actually run.
    pub fn phase2_sweep(&mut self, ceiling: u64) -> Result<PassOutcome, ControllerError> {
        self.ensure_telemetry()?;
        self.phase = Phase::Phase2;
        let mut outcome = PassOutcome {
            commits: 0,
            changes: 0,
            exhausted: false,
        };
        let drives = self.valves.len();
        let step = self.params.cache_step / drives as f64;

        loop {
            let hits = self.smoothed_hits();
            let current = self.latest.as_ref().unwrap();
            let aggregate = current.aggregate;
            let mut probe_valves = self.valves.clone();
            for drive in 0..drives {
                let target_level = current.logical(drive) + step;
                if target_level <= 0.0 {
                    return Ok(outcome);
                }
                let p = estimate_valve(target_level, current.backend[drive], hits[drive])?;
                probe_valves.set(drive, p)?;
            }

            let unchanged = (0..drives).all(|drive| {
                (probe_valves.get(drive) - self.valves.get(drive)).abs()
                    <= self.valve_eps(hits[drive])
            });
            if unchanged {
                return Ok(outcome);
            }

            if self.cycle >= ceiling {
                outcome.exhausted = true;
                return Ok(outcome);
            }
            let probe = self.sample(&probe_valves, RecordKind::Probe)?;
            if probe.aggregate <= aggregate * (1.0 + self.commit_margin()) {
                // No improvement: stay at the previous configuration, whose
                // telemetry is still current.
                return Ok(outcome);
            }
            self.valves = probe_valves;
            self.latest = Some(probe);
            outcome.commits += 1;
            outcome.changes += 1;
            if let Some(last) = self.trace.last_mut() {
                last.kind = RecordKind::Commit;
            }
        }
    }

    /// Alternate the two phases until a full alternation modifies nothing or
    /// the cycle budget runs out. Returns the best configuration found either
    /// way; `converged` distinguishes the cases.
    pub fn run_two_phase(&mut self, cycle_budget: u64) -> Result<TwoPhaseReport, ControllerError> {
        let start = self.cycle;
        let ceiling = start.saturating_add(cycle_budget);
        self.ensure_telemetry()?;
        let mut alternations = 0u64;
        let mut converged = false;
        loop {
            let first = self.phase1_sweep(ceiling)?;
            if first.exhausted {
                break;
            }
            let second = self.phase2_sweep(ceiling)?;
            alternations += 1;
            if second.exhausted {
                break;
            }
            if first.changes == 0 && second.changes == 0 {
                converged = true;
                break;
            }
        }
        Ok(TwoPhaseReport {
            converged,
            cycles: self.cycle - start,
            alternations,
            aggregate: self.latest.as_ref().map_or(0.0, |t| t.aggregate),
        })
    }

    /// Mean aggregate over `windows` extra cycles at the current operating
    /// point. Warm-up and adjustment cycles never pollute this figure.
    pub fn measure_mean(&mut self, windows: u64) -> Result<f64, ControllerError> {
        let mut acc = 0.0;
        for _ in 0..windows.max(1) {
            self.observe(RecordKind::Observe)?;
            acc += self.latest.as_ref().unwrap().aggregate;
        }
        Ok(acc / windows.max(1) as f64)
    }
}
