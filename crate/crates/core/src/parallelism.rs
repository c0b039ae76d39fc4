//! Parallelism plans and the pipeline/expert-parallel corrections.
//!
//! An instance of `n_gpu` devices is split into `pp` pipeline stages. Inside
//! a stage attention is tensor-parallel over all `n_gpu / pp` devices; the
//! feedforward block is split `ep` ways over experts and `tp` ways inside
//! each expert, so `tp * pp * ep == n_gpu`.

use serde::Serialize;

use crate::catalog::{AcceleratorSpec, ModelArchitecture};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ParallelismPlan {
    pub n_gpu: u32,
    pub n_nodes: u32,
    pub tp: u32,
    pub pp: u32,
    pub ep: u32,
}

impl ParallelismPlan {
    pub fn new(n_gpu: u32, tp: u32, pp: u32, ep: u32, node_size: u32) -> Result<Self> {
        if n_gpu == 0 || tp == 0 || pp == 0 || ep == 0 {
            return Err(Error::InvalidPlan("all degrees must be at least 1".into()));
        }
        if u64::from(tp) * u64::from(pp) * u64::from(ep) != u64::from(n_gpu) {
            return Err(Error::InvalidPlan(format!(
                "tp {tp} x pp {pp} x ep {ep} != n_gpu {n_gpu}"
            )));
        }
        Ok(ParallelismPlan {
            n_gpu,
            n_nodes: n_gpu.div_ceil(node_size.max(1)),
            tp,
            pp,
            ep,
        })
    }

    pub fn single() -> Self {
        ParallelismPlan {
            n_gpu: 1,
            n_nodes: 1,
            tp: 1,
            pp: 1,
            ep: 1,
        }
    }

    /// Devices in one pipeline stage.
    pub fn stage_gpus(&self) -> u32 {
        self.n_gpu / self.pp
    }

    pub fn stage_nodes(&self, node_size: u32) -> u32 {
        self.stage_gpus().div_ceil(node_size.max(1))
    }

    /// Checks the plan against a model and accelerator.
    pub fn check(&self, model: &ModelArchitecture, acc: &AcceleratorSpec) -> Result<()> {
        let rebuilt = ParallelismPlan::new(self.n_gpu, self.tp, self.pp, self.ep, acc.node_size)?;
        if rebuilt.n_nodes != self.n_nodes {
            return Err(Error::InvalidPlan(format!(
                "n_nodes {} inconsistent with {} GPUs at {} per node",
                self.n_nodes, self.n_gpu, acc.node_size
            )));
        }
        if self.ep > model.n_expert {
            return Err(Error::InvalidPlan(format!(
                "ep {} exceeds {} experts",
                self.ep, model.n_expert
            )));
        }
        if self.pp > model.n_layers {
            return Err(Error::InvalidPlan(format!(
                "pp {} exceeds {} layers",
                self.pp, model.n_layers
            )));
        }
        Ok(())
    }
}

fn divisors(n: u32) -> Vec<u32> {
    let mut small = Vec::new();
    let mut large = Vec::new();
    let mut d = 1;
    while d * d <= n {
        if n.is_multiple_of(d) {
            small.push(d);
            if d * d != n {
                large.push(n / d);
            }
        }
        d += 1;
    }
    small.extend(large.into_iter().rev());
    small
}

/// All plans for an instance of `n_gpu` devices.
///
/// Dense models get every `(tp, pp)` factorization. MoE models use as much
/// expert parallelism as the instance allows (`min(n_gpu, n_expert)`, or the
/// largest divisor of `n_gpu` below that when it does not divide evenly) and
/// factor the remainder over `(tp, pp)`. Plans come out ordered by `pp`.
pub fn enumerate_plans(model: &ModelArchitecture, acc: &AcceleratorSpec, n_gpu: u32) -> Vec<ParallelismPlan> {
    if n_gpu == 0 {
        return Vec::new();
    }
    let ep = if model.is_dense() {
        1
    } else {
        let cap = n_gpu.min(model.n_expert);
        divisors(n_gpu).into_iter().filter(|&d| d <= cap).max().unwrap_or(1)
    };
    let residual = n_gpu / ep;
    divisors(residual)
        .into_iter()
        .filter(|&pp| pp <= model.n_layers)
        .map(|pp| {
            ParallelismPlan::new(n_gpu, residual / pp, pp, ep, acc.node_size)
                .expect("divisor factorization is consistent")
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PlanAdjustment {
    pub micro_batch: u32,
    pub pp_boundary_time: f64,
    /// Dispatch plus combine bytes per layer for expert parallelism.
    pub ep_comm_bytes: f64,
    pub effective_tp_degree: u32,
}

/// `(n_pp - 1)` sequential point-to-point hops, each moving one residual
/// vector per micro-batch sequence split over `lanes` parallel links.
pub fn pp_boundary_time(
    n_pp: u32,
    d_model: u32,
    micro_batch_tokens: f64,
    activation_bytes: f64,
    lanes: u32,
    link_bandwidth: f64,
    p2p_latency: f64,
) -> f64 {
    if n_pp <= 1 {
        return 0.0;
    }
    let transfer =
        f64::from(d_model) * micro_batch_tokens * activation_bytes / (f64::from(lanes.max(1)) * link_bandwidth);
    f64::from(n_pp - 1) * (p2p_latency + transfer)
}

/// Pipeline adjustment for a batch of `batch` sequences, each contributing
/// `width` positions per forward pass.
pub fn pp_adjustment(
    model: &ModelArchitecture,
    plan: &ParallelismPlan,
    acc: &AcceleratorSpec,
    batch: u32,
    width: u32,
) -> Result<PlanAdjustment> {
    if plan.pp == 0 {
        return Err(Error::InvalidPlan("pp must be at least 1".into()));
    }
    if plan.pp > model.n_layers {
        return Err(Error::InvalidPlan(format!(
            "pp {} exceeds {} layers",
            plan.pp, model.n_layers
        )));
    }
    let micro_batch = batch.div_ceil(plan.pp);
    let link = if plan.n_nodes > 1 {
        acc.inter_node_bandwidth
    } else {
        acc.ll_intra_node_bandwidth()
    };
    Ok(PlanAdjustment {
        micro_batch,
        pp_boundary_time: pp_boundary_time(
            plan.pp,
            model.d_model,
            f64::from(micro_batch) * f64::from(width.max(1)),
            model.activation_bytes(),
            plan.stage_gpus(),
            link,
            acc.collective_base_latency,
        ),
        ep_comm_bytes: 0.0,
        effective_tp_degree: plan.stage_gpus(),
    })
}

/// Ranks each token's hidden state is sent to during dispatch.
pub fn ep_fanout(model: &ModelArchitecture, plan: &ParallelismPlan) -> u32 {
    plan.ep.min(model.n_active_expert)
}

/// Expert-parallel all-to-all volume per layer for `micro_batch_tokens`
/// tokens: dispatch plus the mirrored combine.
pub fn ep_adjustment(
    model: &ModelArchitecture,
    plan: &ParallelismPlan,
    micro_batch_tokens: u32,
) -> Result<PlanAdjustment> {
    if plan.ep == 0 {
        return Err(Error::InvalidPlan("ep must be at least 1".into()));
    }
    if plan.ep > model.n_expert {
        return Err(Error::InvalidPlan(format!(
            "ep {} exceeds {} experts",
            plan.ep, model.n_expert
        )));
    }
    let ep_comm_bytes = if plan.ep == 1 {
        0.0
    } else {
        2.0 * f64::from(ep_fanout(model, plan))
            * f64::from(model.d_model)
            * f64::from(micro_batch_tokens)
            * model.activation_bytes()
    };
    Ok(PlanAdjustment {
        micro_batch: micro_batch_tokens,
        pp_boundary_time: 0.0,
        ep_comm_bytes,
        effective_tp_degree: plan.tp,
    })
}

/// Expert-parallel ranks that share a node when packed densely.
fn ep_ranks_per_node(plan: &ParallelismPlan, acc: &AcceleratorSpec) -> u32 {
    (acc.node_size / plan.tp).max(1)
}

/// Share of dispatched vectors that leave their node under uniform routing.
pub fn ep_inter_node_fraction(plan: &ParallelismPlan, acc: &AcceleratorSpec) -> f64 {
    let per_node = ep_ranks_per_node(plan, acc);
    if plan.ep <= per_node {
        0.0
    } else {
        1.0 - f64::from(per_node) / f64::from(plan.ep)
    }
}

/// Nodes touched by one dispatch of `fanout` destinations.
pub fn ep_collective_nodes(model: &ModelArchitecture, plan: &ParallelismPlan, acc: &AcceleratorSpec) -> u32 {
    let per_node = ep_ranks_per_node(plan, acc);
    if plan.ep <= per_node {
        1
    } else {
        ep_fanout(model, plan).min(plan.ep.div_ceil(per_node))
    }
}
