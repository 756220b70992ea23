//! Pure-function GPU planning over supplied device snapshots: memory
//! estimation, allocation strategies, parallelism selection, and alerts.
//!
//! ```bash
//! cargo run -p kestrel --example gpu_planning
//! ```

use kestrel::gpuplan::{
    allocate, classify_alert, estimate_mem, pipeline_efficiency, select_parallelism,
    suggest_degradation, synthetic_cluster, AllocationStrategy, ModelSpec,
};

fn main() {
    let gb = 1_000_000_000u64;
    let spec = ModelSpec {
        params: 1_500_000_000,
        precision_bits: 16,
        seq_len: 1,
        batch: 1,
        training: false,
        layers: 28,
    };
    println!("1.5B model at fp16 needs ~{:.1} GB", estimate_mem(&spec) as f64 / gb as f64);

    let devices = synthetic_cluster(8, 24 * gb);
    for strategy in [
        AllocationStrategy::Greedy,
        AllocationStrategy::Balanced,
        AllocationStrategy::Priority,
        AllocationStrategy::Optimize(2),
    ] {
        let chosen = allocate(estimate_mem(&spec), &devices, strategy).unwrap();
        println!("{strategy:?} -> devices {chosen:?}");
    }

    // Bigger models force multi-device strategies.
    let base = ModelSpec { layers: 32, ..spec };
    for params in [2u64, 7, 20, 120] {
        let big = ModelSpec { params: params * 1_000_000_000, ..base };
        match select_parallelism(&big, &devices, false) {
            Ok(plan) => println!("{params:>4}B -> {:?} on {:?}", plan.strategy, plan.devices),
            Err(e) => {
                println!("{params:>4}B -> infeasible ({e}); ladder: {:?}", suggest_degradation(&big, &devices))
            }
        }
    }

    println!("\npipeline efficiency m=8,k=4: {:.3}", pipeline_efficiency(8, 4));

    let mut hot = devices[0].clone();
    hot.temp = 88.0;
    println!("device at 88C classifies {:?}", classify_alert(&hot));
    hot.temp = 78.0;
    println!("device at 78C classifies {:?}", classify_alert(&hot));
}
