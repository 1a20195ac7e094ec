//! Single-valve hill-climbing baseline: one global valve value applied to
//! every drive, tuned by probing one step down and one step up and moving to
//! whichever measurement wins. Ties prefer the smaller valve (less cache
//! dependence), so a useless cache walks the valve all the way shut.

use crate::model::ValveConfig;

use super::{ControllerError, MeasurementEnv};

#[derive(Debug, Clone, PartialEq)]
pub struct NhcReport {
    /// Converged global valve value.
    pub valve: f64,
    /// Aggregate bandwidth measured at the final valve.
    pub aggregate: f64,
    /// Telemetry cycles consumed.
    pub cycles: u64,
    /// Neither neighbor improved on the final valve.
    pub converged: bool,
    /// `(valve, aggregate)` of every accepted step, starting point included.
    pub trajectory: Vec<(f64, f64)>,
}

/// Hill-climb a single global valve value on `env`.
///
/// Each iteration measures one step below and one step above the current
/// valve and moves to the best of the three; it stops when staying put wins.
/// Probes are sustained over `probe_windows` telemetry cycles and averaged,
/// so one noisy window cannot end the search early.
pub fn nhc_optimize<E: MeasurementEnv + ?Sized>(
    env: &mut E,
    step: f64,
    start: f64,
    max_iters: u64,
    probe_windows: u64,
) -> Result<NhcReport, ControllerError> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(ControllerError::Domain(format!(
            "hill-climb step {step} outside (0, 0.5]"
        )));
    }
    if !(0.0..=1.0).contains(&start) {
        return Err(ControllerError::Domain(format!(
            "start valve {start} outside [0, 1]"
        )));
    }
    let windows = probe_windows.max(1);
    let drives = env.drives();
    let mut measure = |p: f64, cycles: &mut u64| -> Result<f64, ControllerError> {
        let valves = ValveConfig::uniform(drives, p)?;
        let mut total = 0.0;
        for _ in 0..windows {
            total += env.measure(&valves)?.aggregate;
        }
        *cycles += windows;
        Ok(total / windows as f64)
    };

    let mut cycles = 0u64;
    let mut valve = start;
    let mut aggregate = 0.0;
    let mut trajectory = Vec::new();
    let mut converged = false;

    for _ in 0..max_iters {
        // All three candidates are measured fresh each iteration; under a
        // drifting hit rate a cached center score would become a phantom
        // peak the search can never leave.
        let below = (valve - step).max(0.0);
        let above = (valve + step).min(1.0);
        let agg_below = if below < valve {
            Some(measure(below, &mut cycles)?)
        } else {
            None
        };
        aggregate = measure(valve, &mut cycles)?;
        let agg_above = if above > valve {
            Some(measure(above, &mut cycles)?)
        } else {
            None
        };
        trajectory.push((valve, aggregate));

        // Smaller valve wins ties against the current point; the current
        // point wins ties against the larger valve.
        let down_wins =
            agg_below.is_some_and(|b| b >= aggregate && b >= agg_above.unwrap_or(f64::MIN));
        if down_wins {
            valve = below;
        } else if agg_above.is_some_and(|a| a > aggregate) {
            valve = above;
        } else {
            converged = true;
            break;
        }
    }

    // Leave the environment running at the chosen valve.
    aggregate = measure(valve, &mut cycles)?;
    trajectory.push((valve, aggregate));
    Ok(NhcReport {
        valve,
        aggregate,
        cycles,
        converged,
        trajectory,
    })
}
