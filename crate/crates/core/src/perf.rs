//! Forward-pass cost model for a concrete (model, accelerator, plan, batch).
//!
//! Token latency is the non-overlapped sum of collective latency, kernel
//! launches, network bandwidth time and pipeline hops, plus the larger of
//! the HBM read time and the arithmetic time.

use serde::Serialize;

use crate::catalog::{AcceleratorSpec, AttentionVariant, ModelArchitecture};
use crate::error::{Error, Result};
use crate::parallelism::{
    ep_adjustment, ep_collective_nodes, ep_fanout, ep_inter_node_fraction, pp_adjustment, ParallelismPlan,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Workload {
    /// Tokens already in context for each sequence.
    pub context_length: f64,
    pub batch_size: u32,
    /// Cap on aggregate tokens/s across the batch.
    pub demand_cap: Option<f64>,
    /// Positions decoded per sequence per forward pass; above 1 only for
    /// speculative verification.
    pub decode_width: u32,
}

impl Workload {
    pub fn new(context_length: f64, batch_size: u32) -> Self {
        Workload {
            context_length,
            batch_size,
            demand_cap: None,
            decode_width: 1,
        }
    }

    pub fn with_decode_width(self, decode_width: u32) -> Self {
        Workload { decode_width, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.context_length >= 0.0 && self.context_length.is_finite()) {
            return Err(Error::validation("workload", "context_length must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::validation("workload", "batch_size must be at least 1"));
        }
        if self.decode_width == 0 {
            return Err(Error::validation("workload", "decode_width must be at least 1"));
        }
        if let Some(cap) = self.demand_cap {
            if !(cap > 0.0) {
                return Err(Error::validation("workload", "demand_cap must be positive"));
            }
        }
        Ok(())
    }

    /// Token positions processed by one forward pass.
    pub fn tokens(&self) -> f64 {
        f64::from(self.batch_size) * f64::from(self.decode_width)
    }
}

/// One flat record per evaluated configuration. Times in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatencyBreakdown {
    pub memory_time: f64,
    pub arithmetic_time: f64,
    pub collective_latency_time: f64,
    pub kernel_launch_time: f64,
    pub network_bandwidth_time: f64,
    pub pp_boundary_time: f64,
    pub token_latency: f64,
    pub gpu_seconds_per_token: f64,
    pub cost_per_million_tokens: f64,
    pub feasible: bool,
    pub memory_required_bytes: f64,
    pub memory_capacity_bytes: f64,
}

impl LatencyBreakdown {
    /// Latency implied by the components, regardless of feasibility. Memory
    /// reads and arithmetic overlap, so only the larger counts.
    pub fn component_sum(&self) -> f64 {
        self.collective_latency_time
            + self.kernel_launch_time
            + self.network_bandwidth_time
            + self.pp_boundary_time
            + self.memory_time.max(self.arithmetic_time)
    }

    pub fn tokens_per_second_per_sequence(&self) -> f64 {
        1.0 / self.token_latency
    }
}

/// Weights multiplied per token: experts count at `1/s`.
pub fn active_params(model: &ModelArchitecture) -> f64 {
    shared_params(model) + model.n_feedforward_params / model.sparsity()
}

/// Parameters touched by every token regardless of routing.
fn shared_params(model: &ModelArchitecture) -> f64 {
    model.n_attention_params + model.n_unembedding_params + model.n_embedding_params
}

/// Probability that a given expert is hit by at least one of `tokens`
/// independently routed tokens.
pub fn expert_hit_fraction(sparsity: f64, tokens: f64) -> f64 {
    if sparsity <= 1.0 {
        return 1.0;
    }
    -(tokens * (-1.0 / sparsity).ln_1p()).exp_m1()
}

/// Expected parameters read from HBM for a pass over `tokens` tokens.
pub fn expected_params_read(model: &ModelArchitecture, tokens: f64) -> f64 {
    shared_params(model) + expert_hit_fraction(model.sparsity(), tokens) * model.n_feedforward_params
}

fn attention_head_width(model: &ModelArchitecture) -> f64 {
    match model.attention_variant {
        AttentionVariant::Standard => f64::from(model.d_head),
        AttentionVariant::Mla => f64::from(model.d_latent),
    }
}

/// Attention FLOP for `tokens` query positions over `context` cached positions.
pub fn attention_flop(model: &ModelArchitecture, context: f64, tokens: f64) -> f64 {
    4.0 * f64::from(model.n_layers) * f64::from(model.n_head) * attention_head_width(model) * context * tokens
}

/// Cached elements per position per layer (keys and values together).
fn kv_elements_per_position(model: &ModelArchitecture) -> f64 {
    match model.attention_variant {
        AttentionVariant::Standard => 2.0 * f64::from(model.n_kv_head()) * f64::from(model.d_head),
        AttentionVariant::Mla => f64::from(model.d_latent),
    }
}

pub fn kv_cache_bytes(model: &ModelArchitecture, context: f64, sequences: f64) -> f64 {
    kv_elements_per_position(model) * f64::from(model.n_layers) * context * sequences * model.activation_bytes()
}

pub fn total_flop(model: &ModelArchitecture, workload: &Workload) -> f64 {
    workload.tokens() * 2.0 * active_params(model) + attention_flop(model, workload.context_length, workload.tokens())
}

/// Context length at which attention FLOP equals the weight-multiply FLOP.
pub fn attention_crossover_context(model: &ModelArchitecture) -> f64 {
    2.0 * active_params(model) / attention_flop(model, 1.0, 1.0)
}

/// Matmul input and output elements for one token across all layers.
pub fn matmul_io_elements(model: &ModelArchitecture, tokens: f64) -> f64 {
    let d_model = f64::from(model.d_model);
    let d_ff = f64::from(model.d_ff);
    let q_width = f64::from(model.n_head) * f64::from(model.d_head);
    let g = f64::from(model.attention_group_size);
    let attention = d_model + (1.0 + 2.0 / g) * q_width + q_width + d_model;
    let extra_ff = f64::from(model.ff_matrix_count.saturating_sub(2)) * d_ff;
    let feedforward = (2.0 * d_model + 2.0 * d_ff + extra_ff) * f64::from(model.n_active_expert);
    f64::from(model.n_layers) * tokens * (attention + feedforward)
}

/// HBM bytes read by one forward pass. Weights and the KV cache are read
/// once per sequence even when several positions are decoded; matmul
/// inputs and outputs scale with positions.
pub fn bytes_read(model: &ModelArchitecture, workload: &Workload) -> f64 {
    bytes_read_for(
        model,
        workload.context_length,
        f64::from(workload.batch_size),
        workload.tokens(),
    )
}

fn bytes_read_for(model: &ModelArchitecture, context: f64, sequences: f64, tokens: f64) -> f64 {
    model.weight_bytes_per_param() * expected_params_read(model, sequences)
        + kv_cache_bytes(model, context, sequences)
        + model.activation_bytes() * matmul_io_elements(model, tokens)
}

/// All-reduced bytes attributable to attention blocks.
fn attention_reduced_bytes(model: &ModelArchitecture, tokens: f64) -> f64 {
    let q_width = f64::from(model.n_head) * f64::from(model.d_head);
    let g = f64::from(model.attention_group_size);
    ((1.0 + 2.0 / g) * q_width + f64::from(model.d_model))
        * tokens
        * f64::from(model.n_layers)
        * model.activation_bytes()
}

/// All-reduced bytes attributable to feedforward blocks, summed over the
/// active experts.
fn feedforward_reduced_bytes(model: &ModelArchitecture, tokens: f64) -> f64 {
    let d_ff = f64::from(model.d_ff) * f64::from(model.ff_matrix_count.saturating_sub(1).max(1));
    (d_ff + f64::from(model.d_model))
        * f64::from(model.n_active_expert)
        * tokens
        * f64::from(model.n_layers)
        * model.activation_bytes()
}

/// Bytes all-reduced per pass when every block is tensor parallel.
pub fn bytes_reduced(model: &ModelArchitecture, tokens: f64) -> f64 {
    attention_reduced_bytes(model, tokens) + feedforward_reduced_bytes(model, tokens)
}

/// Latency of one all-reduce spanning `n_gpu` devices on `n_nodes` nodes.
pub fn collective_latency_for(acc: &AcceleratorSpec, n_gpu: f64, n_nodes: f64) -> f64 {
    let per_rank = (n_gpu / n_nodes).sqrt() - 1.0;
    let tree = if n_nodes > 1.0 { n_nodes.sqrt().log2() } else { 0.0 };
    acc.collective_base_latency + acc.per_rank_latency * per_rank + acc.per_tree_step_latency * tree
}

/// Latency of one tensor-parallel all-reduce inside a pipeline stage.
pub fn collective_latency(plan: &ParallelismPlan, acc: &AcceleratorSpec) -> f64 {
    collective_latency_for(
        acc,
        f64::from(plan.stage_gpus()),
        f64::from(plan.stage_nodes(acc.node_size)),
    )
}

/// Bytes read when `bytes` are all-reduced across `participants` ranks.
pub fn allreduce_bytes_read(bytes: f64, participants: f64) -> f64 {
    2.0 * bytes * (participants - 1.0)
}

/// Read time for all-reducing `bytes` among groups of `group` devices on
/// `group_nodes` nodes, with the work spread over `devices` devices.
pub fn allreduce_read_time(acc: &AcceleratorSpec, bytes: f64, group: f64, group_nodes: f64, devices: f64) -> f64 {
    if group <= 1.0 {
        return 0.0;
    }
    let inter_reads = allreduce_bytes_read(bytes, group_nodes.sqrt());
    let intra_reads = allreduce_bytes_read(bytes, (group / group_nodes).sqrt()) * group_nodes.sqrt();
    inter_reads / (devices * acc.inter_node_bandwidth) + intra_reads / (devices * acc.ll_intra_node_bandwidth())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NetworkTime {
    pub collective_latency: f64,
    pub bandwidth: f64,
}

impl NetworkTime {
    pub fn total(&self) -> f64 {
        self.collective_latency + self.bandwidth
    }
}

/// Communication inside one pipeline stage for one micro-batch of
/// `tokens` tokens, summed over all layers.
fn stage_network_time(
    model: &ModelArchitecture,
    plan: &ParallelismPlan,
    acc: &AcceleratorSpec,
    tokens: f64,
) -> Result<NetworkTime> {
    let stage = f64::from(plan.stage_gpus());
    if plan.stage_gpus() <= 1 {
        return Ok(NetworkTime {
            collective_latency: 0.0,
            bandwidth: 0.0,
        });
    }
    let stage_nodes = f64::from(plan.stage_nodes(acc.node_size));
    let n_layers = f64::from(model.n_layers);
    let t_stage = collective_latency(plan, acc);
    let half = f64::from(model.n_reduce()) / 2.0;

    if plan.ep <= 1 {
        return Ok(NetworkTime {
            collective_latency: n_layers * f64::from(model.n_reduce()) * t_stage,
            bandwidth: allreduce_read_time(acc, bytes_reduced(model, tokens), stage, stage_nodes, stage),
        });
    }

    let mut latency = n_layers * half * t_stage;
    let mut bandwidth = allreduce_read_time(acc, attention_reduced_bytes(model, tokens), stage, stage_nodes, stage);

    let fanout = f64::from(ep_fanout(model, plan));
    let ep_nodes = f64::from(ep_collective_nodes(model, plan, acc));
    latency += n_layers * 2.0 * collective_latency_for(acc, fanout, ep_nodes);
    let per_layer = ep_adjustment(model, plan, tokens.ceil() as u32)?.ep_comm_bytes;
    let inter = ep_inter_node_fraction(plan, acc);
    bandwidth += n_layers
        * per_layer
        * (inter / (stage * acc.inter_node_bandwidth) + (1.0 - inter) / (stage * acc.ll_intra_node_bandwidth()));

    if plan.tp > 1 {
        let tp = f64::from(plan.tp);
        let tp_nodes = f64::from(plan.tp.div_ceil(acc.node_size));
        latency += n_layers * half * collective_latency_for(acc, tp, tp_nodes);
        bandwidth += allreduce_read_time(acc, feedforward_reduced_bytes(model, tokens), tp, tp_nodes, stage);
    }
    Ok(NetworkTime {
        collective_latency: latency,
        bandwidth,
    })
}

/// Collective latency plus bandwidth time for one forward pass.
pub fn network_comm_time(
    model: &ModelArchitecture,
    workload: &Workload,
    plan: &ParallelismPlan,
    acc: &AcceleratorSpec,
) -> Result<NetworkTime> {
    plan.check(model, acc)?;
    let adj = pp_adjustment(model, plan, acc, workload.batch_size, workload.decode_width)?;
    let tokens = f64::from(adj.micro_batch) * f64::from(workload.decode_width);
    stage_network_time(model, plan, acc, tokens)
}

/// HBM needed for weights plus the KV cache of the full batch.
pub fn memory_required(model: &ModelArchitecture, workload: &Workload) -> f64 {
    model.weight_footprint() + kv_cache_bytes(model, workload.context_length, f64::from(workload.batch_size))
}

pub fn token_latency(
    model: &ModelArchitecture,
    workload: &Workload,
    plan: &ParallelismPlan,
    acc: &AcceleratorSpec,
) -> Result<LatencyBreakdown> {
    token_latency_reserving(model, workload, plan, acc, 0.0)
}

/// Like [`token_latency`] with `reserved_bytes` of HBM already taken, e.g.
/// by a co-resident draft model.
pub fn token_latency_reserving(
    model: &ModelArchitecture,
    workload: &Workload,
    plan: &ParallelismPlan,
    acc: &AcceleratorSpec,
    reserved_bytes: f64,
) -> Result<LatencyBreakdown> {
    workload.validate()?;
    plan.check(model, acc)?;
    if workload.batch_size < plan.pp {
        return Err(Error::InvalidPlan(format!(
            "batch {} cannot fill {} pipeline stages",
            workload.batch_size, plan.pp
        )));
    }
    let adj = pp_adjustment(model, plan, acc, workload.batch_size, workload.decode_width)?;
    let micro = f64::from(adj.micro_batch);
    let tokens = micro * f64::from(workload.decode_width);
    let stage = f64::from(plan.stage_gpus());

    let bits = acc.compute_precision(model.weight_bits)?.bits;
    let flops = acc.sustained_flops(bits)?;
    let memory_time =
        bytes_read_for(model, workload.context_length, micro, tokens) / (stage * acc.sustained_hbm_bandwidth());
    let arithmetic_time = (tokens * 2.0 * active_params(model)
        + attention_flop(model, workload.context_length, tokens))
        / (stage * flops);
    let network = stage_network_time(model, plan, acc, tokens)?;
    let kernel_launch_time = f64::from(model.n_layers) * f64::from(model.n_reduce()) * acc.kernel_launch_latency;

    let memory_required_bytes = memory_required(model, workload) + reserved_bytes;
    let memory_capacity_bytes = f64::from(plan.n_gpu) * acc.hbm_capacity;
    let feasible = memory_required_bytes <= memory_capacity_bytes;

    let mut out = LatencyBreakdown {
        memory_time,
        arithmetic_time,
        collective_latency_time: network.collective_latency,
        kernel_launch_time,
        network_bandwidth_time: network.bandwidth,
        pp_boundary_time: adj.pp_boundary_time,
        token_latency: f64::INFINITY,
        gpu_seconds_per_token: f64::INFINITY,
        cost_per_million_tokens: f64::INFINITY,
        feasible,
        memory_required_bytes,
        memory_capacity_bytes,
    };
    if feasible {
        out.token_latency = out.component_sum();
        out.gpu_seconds_per_token = out.token_latency * f64::from(plan.n_gpu) / f64::from(workload.batch_size);
        out.cost_per_million_tokens = out.gpu_seconds_per_token * acc.price_per_second() * 1e6;
    }
    Ok(out)
}

/// Long-context FLOP per byte of KV read with standard attention.
pub fn long_context_arithmetic_intensity_bound(model: &ModelArchitecture) -> Result<f64> {
    if model.attention_variant == AttentionVariant::Mla {
        return Err(Error::LatentAttention("long-context arithmetic intensity bound"));
    }
    Ok(2.0 * f64::from(model.attention_group_size) / model.activation_bytes())
}

/// Dollars per million tokens spent just streaming one sequence's KV cache
/// at raw HBM bandwidth.
pub fn kv_read_cost_floor(model: &ModelArchitecture, acc: &AcceleratorSpec, context: f64) -> f64 {
    kv_cache_bytes(model, context, 1.0) * 1e6 * acc.hourly_price / (acc.hbm_bandwidth * 3600.0)
}

/// Lowest possible cost: every GPU-second spent on weight-multiply FLOP.
pub fn arithmetic_cost_floor(model: &ModelArchitecture, acc: &AcceleratorSpec) -> Result<f64> {
    let bits = acc.compute_precision(model.weight_bits)?.bits;
    Ok(2.0 * active_params(model) / acc.sustained_flops(bits)? * acc.price_per_second() * 1e6)
}
