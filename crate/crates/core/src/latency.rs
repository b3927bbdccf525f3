//! Loading, compute and memory models, and the latency of serving the first
//! `k` users of a model in consecutive full batches.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{ModelId, UserId};
use crate::library::{shared_delta_size, LibraryError, ModelLibrary, ModelSpec};
use crate::radio::{equal_allocation, proportional_allocation, unit_upload_cost, ChannelEnv, UserSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub disk_bw_bytes_per_s: f64,
    pub disk_fixed_s: f64,
    pub pcie_bw_bytes_per_s: f64,
    pub gpu_mem_bytes: u64,
}

impl Default for HardwareProfile {
    /// NVMe-class disk, PCIe 4.0 x16, 24 GiB card.
    fn default() -> Self {
        HardwareProfile {
            disk_bw_bytes_per_s: 2e9,
            disk_fixed_s: 1e-3,
            pcie_bw_bytes_per_s: 16e9,
            gpu_mem_bytes: 24 << 30,
        }
    }
}

/// How block residency is exploited between consecutive batches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoadMode {
    /// Only blocks not resident from the previous batch are loaded.
    #[default]
    Sharing,
    /// Any change of model reloads the whole model.
    Independent,
}

/// How the uplink band is split inside a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum UplinkPolicy {
    /// Shares proportional to unit costs; batch upload time is their sum.
    #[default]
    Proportional,
    /// `B / subchannels` per user, at most `subchannels` users per batch.
    EqualShare { subchannels: u32 },
}

impl UplinkPolicy {
    /// Batch upload time for the given unit costs.
    pub fn batch_upload(&self, costs: &[f64]) -> f64 {
        match *self {
            UplinkPolicy::Proportional => proportional_allocation(costs).min_upload_s,
            UplinkPolicy::EqualShare { subchannels } => {
                equal_allocation(costs, subchannels).min_upload_s
            }
        }
    }

    pub fn shares(&self, costs: &[f64]) -> Vec<f64> {
        match *self {
            UplinkPolicy::Proportional => proportional_allocation(costs).shares,
            UplinkPolicy::EqualShare { subchannels } => equal_allocation(costs, subchannels).shares,
        }
    }

    /// Per-batch user cap imposed by the policy itself.
    pub fn batch_cap(&self) -> Option<usize> {
        match *self {
            UplinkPolicy::Proportional => None,
            UplinkPolicy::EqualShare { subchannels } => Some(subchannels as usize),
        }
    }
}

#[derive(Debug, Error)]
pub enum LatencyError {
    #[error("model {model} needs {needed} bytes for a single request but the GPU has {available}")]
    Unservable {
        model: ModelId,
        needed: u64,
        available: u64,
    },
    #[error("user {0} has zero rate")]
    ZeroRate(UserId),
    #[error("user {user} requests {requested}, not the batch model {model}")]
    WrongModel {
        user: UserId,
        requested: ModelId,
        model: ModelId,
    },
    #[error("batch of {size} exceeds the maximum batch size {max} of {model}")]
    BatchTooLarge {
        model: ModelId,
        size: usize,
        max: usize,
    },
    #[error("empty batch plan")]
    EmptyBatch,
    #[error(transparent)]
    Library(#[from] LibraryError),
}

/// Disk-to-memory plus memory-to-GPU time for `bytes`.
pub fn load_time(hw: &HardwareProfile, bytes: u64) -> f64 {
    if bytes == 0 {
        return 0.0;
    }
    let s = bytes as f64;
    hw.disk_fixed_s + s / hw.disk_bw_bytes_per_s + s / hw.pcie_bw_bytes_per_s
}

pub fn compute_time(model: &ModelSpec, batch_size: usize) -> f64 {
    if batch_size == 0 {
        0.0
    } else {
        (model.mu_ms * batch_size as f64 + model.beta_ms) * 1e-3
    }
}

pub fn peak_memory(model: &ModelSpec, batch_size: usize) -> u64 {
    model.weight_bytes + batch_size as u64 * model.activation_bytes_per_sample
}

/// Largest batch whose peak memory fits in the GPU.
pub fn max_batch(model: &ModelSpec, hw: &HardwareProfile) -> Result<usize, LatencyError> {
    let one = peak_memory(model, 1);
    if one > hw.gpu_mem_bytes {
        return Err(LatencyError::Unservable {
            model: model.id,
            needed: one,
            available: hw.gpu_mem_bytes,
        });
    }
    if model.activation_bytes_per_sample == 0 {
        return Ok(usize::MAX);
    }
    let free = hw.gpu_mem_bytes - model.weight_bytes;
    Ok((free / model.activation_bytes_per_sample) as usize)
}

/// Bytes loaded when `next` follows `prev`.
pub fn load_delta_bytes(
    lib: &ModelLibrary,
    mode: LoadMode,
    prev: Option<ModelId>,
    next: ModelId,
) -> Result<u64, LibraryError> {
    match mode {
        LoadMode::Sharing => shared_delta_size(lib, prev, next),
        LoadMode::Independent if prev == Some(next) => Ok(0),
        LoadMode::Independent => shared_delta_size(lib, None, next),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct BatchLatency {
    pub upload_s: f64,
    pub load_s: f64,
    pub compute_s: f64,
    pub total_s: f64,
}

impl BatchLatency {
    pub fn new(upload_s: f64, load_s: f64, compute_s: f64) -> Self {
        BatchLatency {
            upload_s,
            load_s,
            compute_s,
            total_s: upload_s + load_s + compute_s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchPlan {
    pub model: ModelId,
    pub user_ids: Vec<UserId>,
    pub prev_model: Option<ModelId>,
}

/// Everything needed to price a batch.
#[derive(Debug, Clone, Copy)]
pub struct CostContext<'a> {
    pub lib: &'a ModelLibrary,
    pub env: &'a ChannelEnv,
    pub hw: &'a HardwareProfile,
    pub load_mode: LoadMode,
    pub uplink: UplinkPolicy,
}

/// Latency of one batch; `users` pairs each planned user with its fading gain.
pub fn batch_latency(
    plan: &BatchPlan,
    users: &[(&UserSpec, f64)],
    ctx: &CostContext<'_>,
) -> Result<BatchLatency, LatencyError> {
    if users.is_empty() {
        return Err(LatencyError::EmptyBatch);
    }
    let model = ctx
        .lib
        .model(plan.model)
        .ok_or(LibraryError::UnknownModel(plan.model))?;
    let mut cap = max_batch(model, ctx.hw)?;
    if let Some(c) = ctx.uplink.batch_cap() {
        cap = cap.min(c);
    }
    if users.len() > cap {
        return Err(LatencyError::BatchTooLarge {
            model: plan.model,
            size: users.len(),
            max: cap,
        });
    }
    let mut costs = Vec::with_capacity(users.len());
    for (u, g) in users {
        if u.requested_model != plan.model {
            return Err(LatencyError::WrongModel {
                user: u.id,
                requested: u.requested_model,
                model: plan.model,
            });
        }
        costs.push(unit_upload_cost(u, ctx.env, *g).ok_or(LatencyError::ZeroRate(u.id))?);
    }
    let bytes = load_delta_bytes(ctx.lib, ctx.load_mode, plan.prev_model, plan.model)?;
    Ok(BatchLatency::new(
        ctx.uplink.batch_upload(&costs),
        load_time(ctx.hw, bytes),
        compute_time(model, users.len()),
    ))
}

/// Latency of serving the first `k` users of `sorted_costs` (ascending unit
/// costs) in `ceil(k / b)` consecutive batches, all full except the last.
/// Only the first batch pays `load_s`.
pub fn service_latency(
    load_s: f64,
    sorted_costs: &[f64],
    k: usize,
    batch_cap: usize,
    mu_s: f64,
    beta_s: f64,
    uplink: UplinkPolicy,
) -> f64 {
    if k == 0 {
        return 0.0;
    }
    debug_assert!(k <= sorted_costs.len());
    let b = match uplink.batch_cap() {
        Some(c) => batch_cap.min(c),
        None => batch_cap,
    }
    .max(1);
    let batches = k.div_ceil(b);
    let upload: f64 = match uplink {
        UplinkPolicy::Proportional => sorted_costs[..k].iter().sum(),
        UplinkPolicy::EqualShare { subchannels } => (1..=batches)
            .map(|n| sorted_costs[(n * b).min(k) - 1] * f64::from(subchannels))
            .sum(),
    };
    let compute = mu_s * k as f64 + beta_s * batches as f64;
    upload + load_s + compute
}
