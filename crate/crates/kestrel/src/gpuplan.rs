//! Pure-function GPU planning over caller-supplied device snapshots:
//! memory estimation, four allocation strategies, parallelism-strategy
//! selection, pipeline efficiency, alert classification, and the
//! degradation ladder as advice. Nothing here talks to a driver.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GpuPlanError {
    #[error("no device can satisfy {required} bytes (largest available {largest})")]
    NoFeasibleDevice { required: u64, largest: u64 },
    #[error("no set of {count} devices can each hold {per_device} bytes")]
    NoFeasibleSet { count: usize, per_device: u64 },
    #[error("device list is empty")]
    NoDevices,
}

/// A point-in-time view of one device. `node_id` groups devices that share
/// a node; distance is 0 within a node and 1 across nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceSnapshot {
    pub index: usize,
    pub total_mem: u64,
    pub used_mem: u64,
    pub util_pct: f64,
    pub power: f64,
    pub power_max: f64,
    pub temp: f64,
    pub node_id: u32,
}

impl DeviceSnapshot {
    pub fn available(&self) -> u64 {
        self.total_mem.saturating_sub(self.used_mem)
    }
}

/// Model parameters for memory estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    /// Parameter count.
    pub params: u64,
    /// Weight precision in bits: 32, 16, 8, or 4.
    pub precision_bits: u32,
    /// Sequence length.
    pub seq_len: u64,
    /// Batch size.
    pub batch: u64,
    /// Training includes the gradient term.
    pub training: bool,
    /// Layer count, used by pipeline-stage divisibility checks.
    pub layers: u64,
}

/// Memory estimate in bytes:
/// weights `|M|*p/8`, activations `2*|M|*L*B*2`, KV cache `|M|*L*2`, and
/// gradients `4*|M|` when training. Deliberately conservative.
pub fn estimate_mem(spec: &ModelSpec) -> u64 {
    let m = spec.params as u128;
    let l = spec.seq_len as u128;
    let b = spec.batch as u128;
    let weights = m * spec.precision_bits as u128 / 8;
    let activations = 2 * m * l * b * 2;
    let kv_cache = m * l * 2;
    let gradients = if spec.training { m * 4 } else { 0 };
    (weights + activations + kv_cache + gradients).min(u64::MAX as u128) as u64
}

/// Allocation strategies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AllocationStrategy {
    /// First device (in scan order) with enough free memory.
    Greedy,
    /// Feasible device with the lowest used memory.
    Balanced,
    /// `k` feasible devices minimizing total pairwise distance.
    Optimize(usize),
    /// Feasible device maximizing `A_i/max_j A_j - 0.3 * T_i/100`.
    Priority,
}

const PRIORITY_LAMBDA: f64 = 0.3;
const UTIL_MAX: f64 = 100.0;

fn distance(a: &DeviceSnapshot, b: &DeviceSnapshot) -> u32 {
    u32::from(a.node_id != b.node_id)
}

/// Choose devices for a request of `req_bytes` under a strategy. Multi-
/// device strategies require every chosen device to hold an even share.
pub fn allocate(
    req_bytes: u64,
    devices: &[DeviceSnapshot],
    strategy: AllocationStrategy,
) -> Result<Vec<usize>, GpuPlanError> {
    if devices.is_empty() {
        return Err(GpuPlanError::NoDevices);
    }
    let largest = devices.iter().map(DeviceSnapshot::available).max().unwrap_or(0);
    let feasible = |d: &DeviceSnapshot| d.available() >= req_bytes;
    match strategy {
        AllocationStrategy::Greedy => devices
            .iter()
            .find(|d| feasible(d))
            .map(|d| vec![d.index])
            .ok_or(GpuPlanError::NoFeasibleDevice { required: req_bytes, largest }),
        AllocationStrategy::Balanced => devices
            .iter()
            .filter(|d| feasible(d))
            .min_by(|a, b| a.used_mem.cmp(&b.used_mem))
            .map(|d| vec![d.index])
            .ok_or(GpuPlanError::NoFeasibleDevice { required: req_bytes, largest }),
        AllocationStrategy::Priority => {
            let max_avail = devices.iter().map(DeviceSnapshot::available).max().unwrap_or(0).max(1);
            devices
                .iter()
                .filter(|d| feasible(d))
                .max_by(|a, b| {
                    let score = |d: &DeviceSnapshot| {
                        d.available() as f64 / max_avail as f64
                            - PRIORITY_LAMBDA * d.util_pct / UTIL_MAX
                    };
                    score(a).total_cmp(&score(b))
                })
                .map(|d| vec![d.index])
                .ok_or(GpuPlanError::NoFeasibleDevice { required: req_bytes, largest })
        }
        AllocationStrategy::Optimize(k) => {
            let k = k.max(1);
            let per_device = req_bytes.div_ceil(k as u64);
            let candidates: Vec<&DeviceSnapshot> =
                devices.iter().filter(|d| d.available() >= per_device).collect();
            if candidates.len() < k {
                return Err(GpuPlanError::NoFeasibleSet { count: k, per_device });
            }
            // Small device counts: enumerate k-combinations outright.
            let mut best: Option<(u32, Vec<usize>)> = None;
            let mut picks = vec![0usize; k];
            fn walk(
                candidates: &[&DeviceSnapshot],
                k: usize,
                start: usize,
                depth: usize,
                picks: &mut Vec<usize>,
                best: &mut Option<(u32, Vec<usize>)>,
            ) {
                if depth == k {
                    let mut cost = 0;
                    for i in 0..k {
                        for j in i + 1..k {
                            cost += distance(candidates[picks[i]], candidates[picks[j]]);
                        }
                    }
                    let indices: Vec<usize> = picks.iter().map(|&p| candidates[p].index).collect();
                    let better = best.as_ref().map(|(c, _)| cost < *c).unwrap_or(true);
                    if better {
                        *best = Some((cost, indices));
                    }
                    return;
                }
                for next in start..candidates.len() {
                    picks[depth] = next;
                    walk(candidates, k, next + 1, depth + 1, picks, best);
                }
            }
            walk(&candidates, k, 0, 0, &mut picks, &mut best);
            Ok(best.expect("at least one combination exists").1)
        }
    }
}

/// Parallelism plans returned by [`select_parallelism`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ParallelismStrategy {
    Single,
    DataParallel { replicas: usize },
    TensorParallel { degree: usize },
    PipelineParallel { stages: usize },
    Hybrid { tensor_degree: usize, pipeline_stages: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelismPlan {
    pub strategy: ParallelismStrategy,
    pub devices: Vec<usize>,
}

/// Decide how to spread a model across devices:
/// fits on one device -> SINGLE (or DATA when throughput is wanted);
/// within 2x the largest -> TENSOR(2); within 4x -> PIPELINE(4) when the
/// layer count divides by 4, else TENSOR(4); beyond that TENSOR(k) for
/// k <= 8 and tensor-by-8 pipeline hybrid above.
pub fn select_parallelism(
    spec: &ModelSpec,
    devices: &[DeviceSnapshot],
    want_throughput: bool,
) -> Result<ParallelismPlan, GpuPlanError> {
    if devices.is_empty() {
        return Err(GpuPlanError::NoDevices);
    }
    let required = estimate_mem(spec);
    let max_available = devices.iter().map(DeviceSnapshot::available).max().unwrap_or(0);
    if required <= max_available {
        if want_throughput {
            let replicas: Vec<usize> = devices
                .iter()
                .filter(|d| d.available() >= required)
                .map(|d| d.index)
                .collect();
            return Ok(ParallelismPlan {
                strategy: ParallelismStrategy::DataParallel { replicas: replicas.len() },
                devices: replicas,
            });
        }
        let chosen = allocate(required, devices, AllocationStrategy::Priority)?;
        return Ok(ParallelismPlan { strategy: ParallelismStrategy::Single, devices: chosen });
    }
    if required <= 2 * max_available {
        let chosen = allocate(required, devices, AllocationStrategy::Optimize(2))?;
        return Ok(ParallelismPlan {
            strategy: ParallelismStrategy::TensorParallel { degree: 2 },
            devices: chosen,
        });
    }
    if required <= 4 * max_available {
        let chosen = allocate(required, devices, AllocationStrategy::Optimize(4))?;
        let strategy = if spec.layers.is_multiple_of(4) {
            ParallelismStrategy::PipelineParallel { stages: 4 }
        } else {
            ParallelismStrategy::TensorParallel { degree: 4 }
        };
        return Ok(ParallelismPlan { strategy, devices: chosen });
    }
    let k = required.div_ceil(max_available.max(1)) as usize;
    if k <= 8 {
        let chosen = allocate(required, devices, AllocationStrategy::Optimize(k))?;
        Ok(ParallelismPlan {
            strategy: ParallelismStrategy::TensorParallel { degree: k },
            devices: chosen,
        })
    } else {
        // Tensor degree capped at 8; remaining factor becomes pipeline stages.
        let stages = k.div_ceil(8);
        let chosen = allocate(required, devices, AllocationStrategy::Optimize(k.min(devices.len())))?;
        Ok(ParallelismPlan {
            strategy: ParallelismStrategy::Hybrid { tensor_degree: 8, pipeline_stages: stages },
            devices: chosen,
        })
    }
}

/// Pipeline efficiency for `m` micro-batches over `k` stages: `m/(m+k-1)`.
pub fn pipeline_efficiency(micro_batches: u64, stages: u64) -> f64 {
    let m = micro_batches.max(1) as f64;
    let k = stages.max(1) as f64;
    m / (m + k - 1.0)
}

/// Alert levels for one device snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AlertLevel {
    None,
    Warning,
    Critical,
}

/// CRITICAL at >95% memory, >85C, or >95% power; WARNING at the 85%/75C/85%
/// analogs; CRITICAL dominates.
pub fn classify_alert(device: &DeviceSnapshot) -> AlertLevel {
    let mem_frac = if device.total_mem == 0 {
        0.0
    } else {
        device.used_mem as f64 / device.total_mem as f64
    };
    let power_frac = if device.power_max == 0.0 { 0.0 } else { device.power / device.power_max };
    if mem_frac > 0.95 || device.temp > 85.0 || power_frac > 0.95 {
        AlertLevel::Critical
    } else if mem_frac > 0.85 || device.temp > 75.0 || power_frac > 0.85 {
        AlertLevel::Warning
    } else {
        AlertLevel::None
    }
}

/// One rung of the degradation ladder.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum DegradationStep {
    ReduceBatch { to: u64 },
    QuantizeInt8,
    CpuFallback,
}

/// Advice-only degradation ladder for an infeasible request: smaller
/// batches first, then INT8 quantization, then CPU. The planner only
/// suggests; nothing here changes state.
pub fn suggest_degradation(spec: &ModelSpec, devices: &[DeviceSnapshot]) -> Vec<DegradationStep> {
    let max_available = devices.iter().map(DeviceSnapshot::available).max().unwrap_or(0);
    let mut steps = Vec::new();
    let mut batch = spec.batch;
    while batch > 1 {
        batch /= 2;
        steps.push(DegradationStep::ReduceBatch { to: batch });
        let candidate = ModelSpec { batch, ..*spec };
        if estimate_mem(&candidate) <= max_available {
            return steps;
        }
    }
    if spec.precision_bits > 8 {
        steps.push(DegradationStep::QuantizeInt8);
        let candidate = ModelSpec { precision_bits: 8, batch: 1, ..*spec };
        if estimate_mem(&candidate) <= max_available {
            return steps;
        }
    }
    steps.push(DegradationStep::CpuFallback);
    steps
}

/// Deterministic synthetic cluster for tests and examples: `n` devices in
/// pairs per node, with staggered fill levels.
pub fn synthetic_cluster(n: usize, mem_per_device: u64) -> Vec<DeviceSnapshot> {
    (0..n)
        .map(|i| DeviceSnapshot {
            index: i,
            total_mem: mem_per_device,
            used_mem: (i as u64 % 4) * mem_per_device / 10,
            util_pct: (i as f64 * 7.0) % 60.0,
            power: 120.0,
            power_max: 400.0,
            temp: 45.0,
            node_id: (i / 2) as u32,
        })
        .collect()
}
