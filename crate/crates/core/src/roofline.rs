//! Closed-form toy models of dense-model decoding.
//!
//! These ignore attention, MoE routing, network bandwidth and every
//! efficiency factor: a forward pass reads all weights once and performs
//! `2 * n_params` FLOP per sequence, and with several devices every one of
//! `n_layers * n_reduce` sequential all-reduces pays `2 (sqrt(n_gpu) - 1)`
//! hops. The instance size is real-valued here; integer plans live in
//! [`crate::parallelism`].

use serde::Serialize;

use crate::catalog::{AcceleratorSpec, ModelArchitecture};
use crate::error::{Error, Result};

/// Hop latency used by the toy tables, in seconds.
pub const DEFAULT_HOP_LATENCY: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ToyResult {
    pub token_latency: f64,
    pub gpu_seconds_per_token: f64,
    pub optimal_instance_size: f64,
    pub critical_batch_size: f64,
}

/// The few quantities the toy model needs from an architecture.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToyModel {
    pub n_params: f64,
    pub n_layers: f64,
    /// Bytes per weight.
    pub precision: f64,
    pub weight_bits: u32,
    pub n_reduce: u32,
}

impl ToyModel {
    pub fn from_architecture(model: &ModelArchitecture) -> Result<Self> {
        if !model.is_dense() {
            return Err(Error::NotDense("the toy model"));
        }
        Ok(ToyModel {
            n_params: model.total_params(),
            n_layers: f64::from(model.n_layers),
            precision: model.weight_bytes_per_param(),
            weight_bits: model.weight_bits,
            n_reduce: model.n_reduce(),
        })
    }

    /// Time to stream every weight through one device.
    fn read_time(&self, bandwidth: f64) -> f64 {
        self.precision * self.n_params / bandwidth
    }
}

/// Raw (or sustained) compute and bandwidth of one device.
fn rates(acc: &AcceleratorSpec, bits: u32, apply_efficiency: bool) -> Result<(f64, f64)> {
    if apply_efficiency {
        Ok((acc.sustained_flops(bits)?, acc.sustained_hbm_bandwidth()))
    } else {
        Ok((acc.peak_flops_at(bits)?, acc.hbm_bandwidth))
    }
}

/// Batch size at which parameter reads and arithmetic take equal time on
/// one device: `p * C / (2 B)`.
pub fn critical_batch_size(acc: &AcceleratorSpec, bits: u32, apply_efficiency: bool) -> Result<f64> {
    let (flops, bandwidth) = rates(acc, bits, apply_efficiency)?;
    Ok(f64::from(bits) / 8.0 * flops / (2.0 * bandwidth))
}

pub fn single_device(model: &ToyModel, acc: &AcceleratorSpec, batch: f64) -> Result<ToyResult> {
    toy_multi_device(model, acc, batch, 1.0, DEFAULT_HOP_LATENCY, model.n_reduce)
}

pub fn toy_multi_device(
    model: &ToyModel,
    acc: &AcceleratorSpec,
    batch: f64,
    n_gpu: f64,
    t_hop: f64,
    n_reduce: u32,
) -> Result<ToyResult> {
    if !(n_gpu >= 1.0) {
        return Err(Error::Precondition(format!("n_gpu must be >= 1, got {n_gpu}")));
    }
    if !(batch > 0.0) {
        return Err(Error::Precondition(format!("batch must be > 0, got {batch}")));
    }
    let (flops, bandwidth) = rates(acc, model.weight_bits, false)?;
    let hops = model.n_layers * f64::from(n_reduce) * t_hop * 2.0 * (n_gpu.sqrt() - 1.0);
    let memory = model.read_time(bandwidth) / n_gpu;
    let arithmetic = 2.0 * model.n_params * batch / (n_gpu * flops);
    let token_latency = hops + memory.max(arithmetic);
    Ok(ToyResult {
        token_latency,
        gpu_seconds_per_token: token_latency * n_gpu / batch,
        optimal_instance_size: optimal_instance_size(model, acc, t_hop, n_reduce)?,
        critical_batch_size: critical_batch_size(acc, model.weight_bits, false)?,
    })
}

/// Ratio of the single-device read time to the per-pass hop budget.
fn read_to_hop_ratio(model: &ToyModel, acc: &AcceleratorSpec, t_hop: f64, n_reduce: u32) -> f64 {
    model.read_time(acc.hbm_bandwidth) / (model.n_layers * f64::from(n_reduce) * t_hop)
}

/// Latency-minimizing instance size, clamped at one device.
pub fn optimal_instance_size(model: &ToyModel, acc: &AcceleratorSpec, t_hop: f64, n_reduce: u32) -> Result<f64> {
    Ok(read_to_hop_ratio(model, acc, t_hop, n_reduce).max(1.0).powf(2.0 / 3.0))
}

/// Smallest achievable token latency. With `approximate` the `-2 n_l n_r t`
/// correction is dropped (only in the multi-device branch).
pub fn minimum_token_latency(
    model: &ToyModel,
    acc: &AcceleratorSpec,
    t_hop: f64,
    n_reduce: u32,
    approximate: bool,
) -> Result<f64> {
    let hop_budget = model.n_layers * f64::from(n_reduce) * t_hop;
    let read = model.read_time(acc.hbm_bandwidth);
    if optimal_instance_size(model, acc, t_hop, n_reduce)? > 1.0 {
        let leading = 3.0 * hop_budget.powf(2.0 / 3.0) * read.powf(1.0 / 3.0);
        Ok(if approximate {
            leading
        } else {
            leading - 2.0 * hop_budget
        })
    } else {
        Ok(read)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MinimumLatencyCost {
    /// `N* / b* * minimum latency`, GPU-seconds per token.
    pub exact: f64,
    /// Large-instance limit `3 * 2N / C`.
    pub asymptotic: f64,
    /// Arithmetic floor `2N / C`.
    pub arithmetic_floor: f64,
    pub ratio_to_floor: f64,
}

pub fn cost_at_minimum_latency(
    model: &ToyModel,
    acc: &AcceleratorSpec,
    t_hop: f64,
    n_reduce: u32,
) -> Result<MinimumLatencyCost> {
    let n_star = optimal_instance_size(model, acc, t_hop, n_reduce)?;
    if n_star <= 1.0 {
        return Err(Error::Precondition(
            "cost at minimum latency needs an optimal instance larger than one device".into(),
        ));
    }
    let b_star = critical_batch_size(acc, model.weight_bits, false)?;
    let latency = minimum_token_latency(model, acc, t_hop, n_reduce, false)?;
    let arithmetic_floor = 2.0 * model.n_params / acc.peak_flops_at(model.weight_bits)?;
    let exact = n_star / b_star * latency;
    Ok(MinimumLatencyCost {
        exact,
        asymptotic: 3.0 * arithmetic_floor,
        arithmetic_floor,
        ratio_to_floor: exact / arithmetic_floor,
    })
}

/// Projects serial speed to another dense model size assuming latency grows
/// as the square root of the parameter count.
pub fn sqrt_scaling_projection(ref_params: f64, ref_speed: f64, target_params: f64) -> Result<f64> {
    if !(ref_params > 0.0 && target_params > 0.0) {
        return Err(Error::Precondition("parameter counts must be positive".into()));
    }
    Ok(ref_speed * (ref_params / target_params).sqrt())
}
