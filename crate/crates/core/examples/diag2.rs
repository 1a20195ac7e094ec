use hacache_core::model::ValveConfig;
use hacache_core::simkit::{AccessPattern, SimConfig, Simulator, WorkloadSpec};

fn main() {
    let config = SimConfig {
        backend_rates: vec![20.0, 30.0, 30.0, 50.0],
        cache_rate: 45.0,
        stripe_unit: 131072,
        workload: WorkloadSpec {
            block_size: 4096,
            io_range: 64 * 1024 * 1024,
            pattern: AccessPattern::Hotspot { space_frac: 0.05, access_frac: 0.95 },
            threads: 16,
            queue_depth: 64,
            seed: 21,
        },
        cache_bytes: 6710886,
        shard_count: 256,
    };
    let mut sim = Simulator::new(config).unwrap();
    sim.set_valves(&ValveConfig::uniform(4, 0.0).unwrap());
    sim.measure_cycle(5.0);
    for w in 0..6 {
        let s = sim.measure_cycle(1.0);
        let b: Vec<String> = s.backend_bytes.iter().map(|&x| format!("{:.1}", x as f64 / 1e6)).collect();
        let arr: Vec<String> = s.arrival_share.iter().map(|a| format!("{:.4}", a)).collect();
        let q: Vec<String> = s.queued_share.iter().map(|a| format!("{:.3}", a)).collect();
        println!(
            "w{w}: b=[{}] total={:.2} arrivals=[{}] queued=[{}] h={:?}",
            b.join(","),
            s.total_bytes() as f64 / 1e6,
            arr.join(","),
            q.join(","),
            s.hit_rates().iter().map(|h| (h * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
    }
}
