//! The complete execution flow: warm up, adjust valves, evaluate capacity,
//! regulate, refill, repeat until stable.

use crate::model::ValveConfig;

use super::{
    regulate_capacity, ControllerError, ControllerParams, CycleRecord, MeasurementEnv, Phase,
    RecordKind, ValveController,
};

/// Summary of one full control-loop run.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopReport {
    /// The loop reached a stable allocation within budget.
    pub converged: bool,
    /// Telemetry cycles consumed.
    pub cycles: u64,
    /// Warm-up + valve-adjustment rounds executed.
    pub iterations: u64,
    /// Rounds that actually moved shards.
    pub regulation_epochs: u64,
    /// Phase the controller ended in.
    pub phase: Phase,
    /// Aggregate bandwidth at the final operating point.
    pub aggregate: f64,
    pub hit_rates: Vec<f64>,
    pub valves: Vec<f64>,
    pub quotas: Vec<usize>,
}

/// Owns a [`ValveController`] plus the regulation state that persists across
/// warm-up rounds: which drives have received capacity (and so are protected
/// from reclamation for the rest of the run).
pub struct ControlLoop<'a, E: MeasurementEnv + ?Sized> {
    controller: ValveController<'a, E>,
    received_capacity: Vec<bool>,
    regulate: bool,
    regulation_epochs: u64,
    iterations: u64,
}

impl<'a, E: MeasurementEnv + ?Sized> ControlLoop<'a, E> {
    pub fn new(
        env: &'a mut E,
        params: ControllerParams,
        initial: ValveConfig,
        regulate: bool,
    ) -> Result<Self, ControllerError> {
        let drives = initial.len();
        let controller = ValveController::new(env, params, initial)?;
        Ok(Self {
            controller,
            received_capacity: vec![false; drives],
            regulate,
            regulation_epochs: 0,
            iterations: 0,
        })
    }

    pub fn controller(&self) -> &ValveController<'a, E> {
        &self.controller
    }

    pub fn controller_mut(&mut self) -> &mut ValveController<'a, E> {
        &mut self.controller
    }

    pub fn take_trace(&mut self) -> Vec<CycleRecord> {
        self.controller.take_trace()
    }

    pub fn received_capacity(&self) -> &[bool] {
        &self.received_capacity
    }

    /// Run the flow until stable or the cycle budget runs out.
    ///
    /// Each round: warm up until hit rates settle, run the two-phase valve
    /// adjustment, then evaluate capacity. If some drive's valve is pinned
    /// open and another has reclaimable surplus, shards move, their contents
    /// are invalidated, and the loop re-enters warm-up to refill; otherwise
    /// the allocation holds and the controller is stable.
    pub fn run(&mut self, cycle_budget: u64) -> Result<LoopReport, ControllerError> {
        let start = self.controller.cycles();
        let ceiling = start.saturating_add(cycle_budget);
        let mut converged = false;

        loop {
            let remaining = ceiling.saturating_sub(self.controller.cycles());
            if !self.controller.warm_up(remaining)? {
                break;
            }
            let remaining = ceiling.saturating_sub(self.controller.cycles());
            let adjustment = self.controller.run_two_phase(remaining)?;
            self.iterations += 1;
            if !adjustment.converged {
                break;
            }

            if !self.regulate {
                converged = true;
                break;
            }
            self.controller.set_phase(Phase::CapacityEval);
            let Some(stats) = self.controller.shard_stats() else {
                // No shard-managed cache to regulate.
                converged = true;
                break;
            };
            let outcome = regulate_capacity(
                self.controller.valves(),
                &stats,
                self.controller.params(),
                &self.received_capacity,
            );
            if outcome.moves.is_empty() {
                converged = true;
                break;
            }
            for drive in outcome.recipients() {
                self.received_capacity[drive] = true;
            }
            self.controller.apply_shard_moves(&outcome.moves)?;
            self.regulation_epochs += 1;
            // Transferred contents are gone; refill before readjusting.
        }

        if converged {
            self.controller.set_phase(Phase::Stable);
        }
        Ok(self.report(converged, start))
    }

    /// After reaching stability, keep watching the workload: observe quietly
    /// and re-run one alternation every `probe_interval` cycles so drift gets
    /// picked up. Runs until the extra budget is spent.
    pub fn track(
        &mut self,
        cycle_budget: u64,
        probe_interval: u64,
    ) -> Result<LoopReport, ControllerError> {
        let start = self.controller.cycles();
        let ceiling = start.saturating_add(cycle_budget);
        let interval = probe_interval.max(1);
        while self.controller.cycles() < ceiling {
            self.controller.set_phase(Phase::Stable);
            for _ in 0..interval.min(ceiling - self.controller.cycles()) {
                self.controller.observe_as(RecordKind::Observe)?;
            }
            if self.controller.cycles() >= ceiling {
                break;
            }
            let remaining = ceiling.saturating_sub(self.controller.cycles());
            self.controller.run_two_phase(remaining)?;
        }
        self.controller.set_phase(Phase::Stable);
        Ok(self.report(true, start))
    }

    fn report(&mut self, converged: bool, start: u64) -> LoopReport {
        let latest = self.controller.latest();
        let (aggregate, hit_rates) = match latest {
            Some(t) => (t.aggregate, t.hit_rates.clone()),
            None => (0.0, Vec::new()),
        };
        LoopReport {
            converged,
            cycles: self.controller.cycles() - start,
            iterations: self.iterations,
            regulation_epochs: self.regulation_epochs,
            phase: self.controller.phase(),
            aggregate,
            hit_rates,
            valves: self.controller.valves().as_slice().to_vec(),
            quotas: self.controller.quotas().unwrap_or_default(),
        }
    }
}

