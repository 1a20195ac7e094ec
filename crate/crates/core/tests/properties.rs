//! Randomized property suites for the module invariants: solver feasibility
//! and monotonicity, planner optimality against brute force, controller
//! clamping and convergence, baseline dominance, and simulator determinism,
//! conservation, striping uniformity, and solver agreement.

use hacache_core::analytic::AnalyticEnv;
use hacache_core::controller::{
    estimate_valve, nhc_optimize, ControllerParams, MeasurementEnv, RecordKind, ValveController,
};
use hacache_core::model::{steady_state_solve, ValveConfig};
use hacache_core::planner::{brute_force_plan, plan_optimal};
use hacache_core::simkit::{
    AccessPattern, BlockSampler, SimConfig, Simulator, Striping, WorkloadSpec,
};
use proptest::prelude::*;

fn caps_strategy(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1.0f64..10.0, 1..=max_n)
}

fn ratio_vec(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..=1.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Solved states satisfy every steady-state constraint.
    #[test]
    fn solver_output_is_always_feasible(
        caps in caps_strategy(6),
        ratio_seed in prop::collection::vec(0.0f64..=1.0, 6),
        cache in 0.0f64..40.0,
    ) {
        let n = caps.len();
        let ratios = &ratio_seed[..n];
        let state = steady_state_solve(ratios, &caps, cache).unwrap();
        let level = state.level;
        prop_assert!(level.is_finite() && level >= 0.0);
        let mut served = 0.0;
        for i in 0..n {
            let logical = state.backend[i] + state.cache_served[i];
            prop_assert!((logical - level).abs() <= 1e-9 * level.max(1.0));
            prop_assert!(state.backend[i] >= -1e-12);
            prop_assert!(state.backend[i] <= caps[i] * (1.0 + 1e-9));
            served += state.cache_served[i];
        }
        prop_assert!(served <= cache + 1e-9 * cache.max(1.0));
        prop_assert!((state.aggregate - level * n as f64).abs() <= 1e-9 * state.aggregate.max(1.0));
    }

    /// Opening one drive's diversion wider never lowers the level while the
    /// cache budget is not the binding constraint.
    #[test]
    fn wider_diversion_never_hurts_until_cache_binds(
        caps in caps_strategy(5),
        ratio_seed in prop::collection::vec(0.0f64..0.95, 5),
        cache in 0.0f64..40.0,
        pick in 0usize..5,
        bump in 0.0f64..0.5,
    ) {
        let n = caps.len();
        let ratios = &ratio_seed[..n];
        let before = steady_state_solve(ratios, &caps, cache).unwrap();
        let mut wider = ratios.to_vec();
        let drive = pick % n;
        wider[drive] = (wider[drive] + bump).min(1.0);
        let after = steady_state_solve(&wider, &caps, cache).unwrap();
        let ratio_sum: f64 = wider.iter().sum();
        let cache_binds = ratio_sum > 0.0 && cache / ratio_sum <= after.level * (1.0 + 1e-12);
        if !cache_binds {
            prop_assert!(
                after.level >= before.level - 1e-9 * before.level.max(1.0),
                "level fell from {} to {}", before.level, after.level
            );
        }
    }

    /// No diversion and equal caps pin the level at exactly the cap.
    #[test]
    fn homogeneous_idle_cache_is_exact(
        cap in 1.0f64..100.0,
        n in 1usize..8,
        cache in 0.0f64..50.0,
    ) {
        let state = steady_state_solve(&vec![0.0; n], &vec![cap; n], cache).unwrap();
        prop_assert_eq!(state.level, cap);
    }

    /// For fixed ratios the solver's level matches the largest feasible
    /// level on a fine grid.
    #[test]
    fn solver_matches_level_grid_search(
        caps in caps_strategy(3),
        ratio_seed in prop::collection::vec(0.0f64..=1.0, 3),
        cache in 0.0f64..30.0,
    ) {
        let n = caps.len();
        let ratios = &ratio_seed[..n];
        let state = steady_state_solve(ratios, &caps, cache).unwrap();
        let step = 0.01;
        let upper = caps.iter().fold(0.0f64, |a, &b| a.max(b)) + cache + step;
        let feasible = |level: f64| {
            ratios.iter().zip(&caps).all(|(&r, &cap)| (1.0 - r) * level <= cap + 1e-12)
                && level * ratios.iter().sum::<f64>() <= cache + 1e-12
        };
        let mut best = 0.0;
        let mut level = 0.0;
        while level <= upper {
            if feasible(level) {
                best = level;
            }
            level += step;
        }
        prop_assert!(
            (state.level - best).abs() <= step + 1e-9,
            "solver level {} vs grid {}", state.level, best
        );
    }

    /// The water-filling plan is within one grid step of exhaustive search.
    #[test]
    fn plan_matches_brute_force(
        caps in caps_strategy(4),
        cache_frac in 0.0f64..2.0,
    ) {
        let cache = cache_frac * caps.iter().sum::<f64>();
        let plan = plan_optimal(&caps, cache).unwrap();
        let oracle = brute_force_plan(&caps, cache, 0.01).unwrap();
        let tolerance = caps.len() as f64 * plan.level * 0.01;
        prop_assert!(
            (plan.aggregate() - oracle.aggregate()).abs() <= tolerance + 1e-9,
            "plan {} vs oracle {}", plan.aggregate(), oracle.aggregate()
        );
        prop_assert!(plan.aggregate() >= oracle.aggregate() - 1e-9);
    }

    /// Raising the planned level by any amount breaks feasibility.
    #[test]
    fn planned_level_is_maximal(
        caps in caps_strategy(5),
        cache_frac in 0.0f64..2.0,
    ) {
        let cache = cache_frac * caps.iter().sum::<f64>();
        let plan = plan_optimal(&caps, cache).unwrap();
        let epsilon = 1e-6 * plan.level;
        let demand: f64 = caps
            .iter()
            .map(|&cap| (plan.level + epsilon - cap).max(0.0))
            .sum();
        prop_assert!(
            demand > cache + 0.4 * epsilon,
            "level {} not maximal: demand {demand} within budget {cache}", plan.level
        );
    }

    /// Whenever the plan diverts anything, it consumes the cache exactly.
    #[test]
    fn plan_exhausts_cache_or_diverts_nothing(
        caps in caps_strategy(5),
        cache_frac in 0.0f64..2.0,
    ) {
        let cache = cache_frac * caps.iter().sum::<f64>();
        let plan = plan_optimal(&caps, cache).unwrap();
        if plan.covered > 0 {
            prop_assert!(
                (plan.cache_used() - cache).abs() <= 1e-9 * cache.max(1.0),
                "cache used {} of {cache}", plan.cache_used()
            );
        } else {
            prop_assert!(plan.ratios.iter().all(|&r| r == 0.0));
        }
    }

    /// Permuting the caps permutes the ratios identically.
    #[test]
    fn plan_is_permutation_equivariant(
        caps in caps_strategy(6),
        cache in 0.0f64..40.0,
        rotation in 0usize..6,
    ) {
        let n = caps.len();
        let plan = plan_optimal(&caps, cache).unwrap();
        let rotated: Vec<f64> = (0..n).map(|i| caps[(i + rotation) % n]).collect();
        let plan_rotated = plan_optimal(&rotated, cache).unwrap();
        prop_assert!((plan.level - plan_rotated.level).abs() <= 1e-12 * plan.level.max(1.0));
        for i in 0..n {
            let expected = plan.ratios[(i + rotation) % n];
            prop_assert!((plan_rotated.ratios[i] - expected).abs() <= 1e-12);
        }
    }

    /// Valve estimation always lands in the unit interval.
    #[test]
    fn valve_estimates_are_clamped(
        level in 1e-6f64..1e9,
        backend in 0.0f64..2e9,
        hit in 0.0f64..=1.0,
    ) {
        let p = estimate_valve(level, backend, hit).unwrap();
        prop_assert!((0.0..=1.0).contains(&p));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// With perfect hit rates, the adjustment loop converges from any start
    /// to within one step of the planned optimum. The backend step is sized
    /// at drives x cache_step, the worst-case spread tax.
    #[test]
    fn two_phase_converges_within_one_step(
        caps in prop::collection::vec(1.0f64..10.0, 4),
        cache in 0.0f64..20.0,
        start in prop::collection::vec(0.0f64..=1.0, 4),
    ) {
        let optimum = plan_optimal(&caps, cache).unwrap().aggregate();
        let mut params = ControllerParams::for_drives(4);
        params.backend_step = 0.8;
        params.cache_step = 0.2;
        params.noise_bound = 0.0;
        let tolerance = params.backend_step.max(params.cache_step);
        let mut env = AnalyticEnv::with_uniform_hits(caps, cache, 1.0).unwrap();
        let initial = ValveConfig::new(start).unwrap();
        let mut ctl = ValveController::new(&mut env, params, initial).unwrap();
        let report = ctl.run_two_phase(20_000).unwrap();
        prop_assert!(report.converged);
        prop_assert!(
            optimum - report.aggregate <= tolerance + 1e-9,
            "converged {} vs optimum {optimum}", report.aggregate
        );
    }

    /// Committed aggregates never decrease on a stationary noiseless run,
    /// and valves stay in range so diversion never exceeds the hit rate.
    #[test]
    fn commits_monotone_and_valves_clamped(
        caps in prop::collection::vec(1.0f64..10.0, 4),
        cache in 0.0f64..20.0,
        hit in 0.05f64..=1.0,
        start in prop::collection::vec(0.0f64..=1.0, 4),
    ) {
        let mut params = ControllerParams::for_drives(4);
        params.backend_step = 0.5;
        params.cache_step = 0.5;
        params.noise_bound = 0.0;
        let mut env = AnalyticEnv::with_uniform_hits(caps, cache, hit).unwrap();
        let initial = ValveConfig::new(start).unwrap();
        let mut ctl = ValveController::new(&mut env, params, initial).unwrap();
        ctl.run_two_phase(20_000).unwrap();
        let mut last = f64::NEG_INFINITY;
        for record in ctl.trace() {
            for &p in &record.valves {
                prop_assert!((0.0..=1.0).contains(&p));
            }
            if record.kind == RecordKind::Commit {
                prop_assert!(record.aggregate >= last - 1e-9);
                last = record.aggregate;
            }
        }
    }

    /// The single-valve baseline never loses to leaving the cache unused.
    #[test]
    fn nhc_dominates_do_nothing(
        caps in prop::collection::vec(1.0f64..10.0, 2..=5),
        cache in 0.0f64..20.0,
        hit in 0.0f64..=1.0,
        start in 0.0f64..=1.0,
    ) {
        let n = caps.len();
        let mut env = AnalyticEnv::with_uniform_hits(caps, cache, hit).unwrap();
        let baseline = env
            .measure(&ValveConfig::uniform(n, 0.0).unwrap())
            .unwrap()
            .aggregate;
        let report = nhc_optimize(&mut env, 0.05, start, 500, 1).unwrap();
        prop_assert!(report.aggregate >= baseline - 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Arrival shares stay within one percent of uniform for every pattern,
    /// because striping interleaves blocks regardless of how accesses skew.
    /// The range must be large enough that the hot set itself has no
    /// meaningful per-drive composition skew (here ~100k hot blocks).
    #[test]
    fn striping_shares_stay_uniform(
        seed in any::<u64>(),
        drives in 2usize..=6,
        hotspot in any::<bool>(),
    ) {
        let spec = WorkloadSpec {
            block_size: 4096,
            io_range: 8 * 1024 * 1024 * 1024,
            pattern: if hotspot {
                AccessPattern::Hotspot { space_frac: 0.05, access_frac: 0.95 }
            } else {
                AccessPattern::UniformRandom
            },
            threads: 1,
            queue_depth: 1,
            seed,
        };
        let striping = Striping::new(drives, 131072, 4096, spec.io_range).unwrap();
        let mut sampler = BlockSampler::new(&spec).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(seed);
        let mut counts = vec![0u64; drives];
        let draws = 100_000;
        for _ in 0..draws {
            let block = sampler.next_block(&mut rng);
            counts[striping.drive_of(block).unwrap()] += 1;
        }
        let expected = 1.0 / drives as f64;
        for (drive, &count) in counts.iter().enumerate() {
            let share = count as f64 / draws as f64;
            prop_assert!(
                (share - expected).abs() < 0.01,
                "drive {drive} share {share}, expected about {expected}"
            );
        }
    }
}

fn small_sim_config(seed: u64, hotspot: bool, valve_bits: u8) -> (SimConfig, ValveConfig) {
    let pattern = if hotspot {
        AccessPattern::Hotspot {
            space_frac: 0.05,
            access_frac: 0.95,
        }
    } else {
        AccessPattern::UniformRandom
    };
    let config = SimConfig {
        backend_rates: vec![15.0, 25.0, 35.0, 50.0],
        cache_rate: 45.0,
        stripe_unit: 131072,
        workload: WorkloadSpec {
            block_size: 4096,
            io_range: 32 * 1024 * 1024,
            pattern,
            threads: 8,
            queue_depth: 16,
            seed,
        },
        cache_bytes: 8 * 1024 * 1024,
        shard_count: 32,
    };
    let valves = ValveConfig::new(
        (0..4)
            .map(|i| if valve_bits & (1 << i) != 0 { 0.8 } else { 0.2 })
            .collect(),
    )
    .unwrap();
    (config, valves)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Identical configuration and seed replay to bit-identical telemetry.
    #[test]
    fn simulation_replays_bit_identically(
        seed in any::<u64>(),
        hotspot in any::<bool>(),
        valve_bits in any::<u8>(),
    ) {
        let run = || {
            let (config, valves) = small_sim_config(seed, hotspot, valve_bits);
            let mut sim = Simulator::new(config).unwrap();
            sim.set_valves(&valves);
            (0..3).map(|_| sim.measure_cycle(0.1)).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }

    /// Every generated request is served exactly once, by the cache or by
    /// its mapped backend drive.
    #[test]
    fn requests_conserved(
        seed in any::<u64>(),
        hotspot in any::<bool>(),
        valve_bits in any::<u8>(),
    ) {
        let (config, valves) = small_sim_config(seed, hotspot, valve_bits);
        let slots = config.workload.window_slots() as u64;
        let mut sim = Simulator::new(config).unwrap();
        sim.set_valves(&valves);
        let mut bytes = 0u64;
        for _ in 0..4 {
            bytes += sim.measure_cycle(0.25).total_bytes();
        }
        prop_assert_eq!(sim.generated(), sim.completed() + slots);
        prop_assert_eq!(bytes, sim.completed() * 4096);
    }

    /// The saturated simulator lands within five percent of the solver's
    /// prediction for the measured hit rates.
    #[test]
    fn simulator_tracks_solver(
        seed in any::<u64>(),
        valve_bits in any::<u8>(),
    ) {
        let (config, valves) = small_sim_config(seed, false, valve_bits);
        let rates = config.backend_rates.clone();
        let cache_rate = config.cache_rate;
        let mut sim = Simulator::new(config).unwrap();
        sim.set_valves(&valves);
        sim.measure_cycle(12.0); // saturate and fill the cache
        let sample = sim.measure_cycle(8.0);
        let hits = sample.hit_rates();
        let ratios: Vec<f64> = valves
            .as_slice()
            .iter()
            .zip(&hits)
            .map(|(p, h)| p * h)
            .collect();
        let predicted = steady_state_solve(&ratios, &rates, cache_rate).unwrap();
        let total = sample.total_bytes() as f64 / 1e6 / sample.window;
        prop_assert!(
            (total - predicted.aggregate).abs() / predicted.aggregate < 0.05,
            "simulated {total} vs predicted {}", predicted.aggregate
        );
    }
}
