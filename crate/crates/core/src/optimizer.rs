//! Grid sweeps over instance size, batch size and parallelism plan, and the
//! speed/cost Pareto frontier of the results.

use serde::Serialize;

use crate::catalog::{AcceleratorSpec, ModelArchitecture};
use crate::error::{Error, Result};
use crate::parallelism::{enumerate_plans, ParallelismPlan};
use crate::perf::{
    kv_cache_bytes, memory_required, token_latency, token_latency_reserving, LatencyBreakdown, Workload,
};
use crate::specdec::{expected_tokens_per_iteration, optimal_gamma_by, validate_alpha};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SearchGrid {
    pub n_gpu_values: Vec<u32>,
    pub batch_values: Vec<u32>,
}

impl Default for SearchGrid {
    /// `1..=8` and multiples of 8 up to 512 devices; powers of two up to 4096
    /// sequences.
    fn default() -> Self {
        let n_gpu_values = (1..=8).chain((2..=64).map(|k| 8 * k)).collect();
        let batch_values = (0..=12).map(|e| 1 << e).collect();
        SearchGrid {
            n_gpu_values,
            batch_values,
        }
    }
}

impl SearchGrid {
    pub fn new(mut n_gpu_values: Vec<u32>, mut batch_values: Vec<u32>) -> Result<Self> {
        n_gpu_values.sort_unstable();
        n_gpu_values.dedup();
        batch_values.sort_unstable();
        batch_values.dedup();
        let grid = SearchGrid {
            n_gpu_values,
            batch_values,
        };
        grid.validate()?;
        Ok(grid)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values) in [
            ("n_gpu_values", &self.n_gpu_values),
            ("batch_values", &self.batch_values),
        ] {
            if values.is_empty() {
                return Err(Error::validation("grid", format!("{name} is empty")));
            }
            if values[0] == 0 {
                return Err(Error::validation("grid", format!("{name} must be positive")));
            }
            if values.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::validation("grid", format!("{name} must be strictly increasing")));
            }
        }
        Ok(())
    }

    /// Same instance sizes at batch size 1.
    pub fn serial(&self) -> Self {
        SearchGrid {
            n_gpu_values: self.n_gpu_values.clone(),
            batch_values: vec![1],
        }
    }
}

/// Draft model sharing the target's instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpeculationSetup {
    pub draft: ModelArchitecture,
    pub alpha: f64,
    pub gamma_max: u32,
}

impl SpeculationSetup {
    pub fn new(draft: ModelArchitecture, alpha: f64, gamma_max: u32) -> Result<Self> {
        validate_alpha(alpha)?;
        if gamma_max == 0 {
            return Err(Error::validation("speculation", "gamma_max must be at least 1"));
        }
        Ok(SpeculationSetup {
            draft,
            alpha,
            gamma_max,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeculationDetail {
    pub gamma: u32,
    pub expected_tokens: f64,
    /// One verify pass plus `gamma` draft passes.
    pub iteration_time: f64,
    pub draft_latency: f64,
    /// Data-parallel copies of the draft inside the instance.
    pub draft_replicas: u32,
    pub draft_plan: ParallelismPlan,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParetoPoint {
    /// Tokens per second seen by one request.
    pub tokens_per_second: f64,
    pub cost_per_million_tokens: f64,
    pub plan: ParallelismPlan,
    pub batch_size: u32,
    /// Target forward pass; the verify pass under speculation.
    pub breakdown: LatencyBreakdown,
    pub speculation: Option<SpeculationDetail>,
}

impl ParetoPoint {
    pub fn token_latency(&self) -> f64 {
        1.0 / self.tokens_per_second
    }

    /// Tokens per second across the whole batch.
    pub fn aggregate_throughput(&self) -> f64 {
        self.tokens_per_second * f64::from(self.batch_size)
    }

    /// `speed^alpha_pref / cost`, in log space when the direct form overflows.
    pub fn utility(&self, alpha_pref: f64) -> Utility {
        let direct = self.tokens_per_second.powf(alpha_pref) / self.cost_per_million_tokens;
        if direct.is_finite() && direct > 0.0 {
            Utility::Direct(direct)
        } else {
            Utility::Log(alpha_pref * self.tokens_per_second.ln() - self.cost_per_million_tokens.ln())
        }
    }

    fn order_key(&self) -> (ParallelismPlan, u32) {
        (self.plan, self.batch_size)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    Direct(f64),
    Log(f64),
}

impl Utility {
    pub fn ln(self) -> f64 {
        match self {
            Utility::Direct(u) => u.ln(),
            Utility::Log(l) => l,
        }
    }

    fn cmp(self, other: Utility) -> std::cmp::Ordering {
        match (self, other) {
            (Utility::Direct(a), Utility::Direct(b)) => a.total_cmp(&b),
            _ => self.ln().total_cmp(&other.ln()),
        }
    }
}

struct DraftPass {
    latency: f64,
    replicas: u32,
    plan: ParallelismPlan,
    reserved_bytes: f64,
}

/// Fastest way to run the draft on an `n_gpu` instance: `replicas`
/// data-parallel copies on `n_gpu / replicas` devices each. Candidates that
/// leave no room for the target's own footprint are skipped.
fn best_draft_pass(
    draft: &ModelArchitecture,
    acc: &AcceleratorSpec,
    workload: &Workload,
    n_gpu: u32,
    target_bytes: f64,
) -> Result<Option<DraftPass>> {
    let capacity = f64::from(n_gpu) * acc.hbm_capacity;
    let draft_kv = kv_cache_bytes(draft, workload.context_length, f64::from(workload.batch_size));
    let mut best: Option<DraftPass> = None;
    for replicas in (1..=n_gpu).filter(|&r| n_gpu.is_multiple_of(r)) {
        let reserved_bytes = f64::from(replicas) * draft.weight_footprint() + draft_kv;
        if target_bytes + reserved_bytes > capacity {
            continue;
        }
        let per_replica = Workload {
            batch_size: workload.batch_size.div_ceil(replicas),
            decode_width: 1,
            demand_cap: None,
            ..*workload
        };
        for plan in enumerate_plans(draft, acc, n_gpu / replicas) {
            if per_replica.batch_size < plan.pp {
                continue;
            }
            let out = token_latency(draft, &per_replica, &plan, acc)?;
            if out.feasible && best.as_ref().is_none_or(|b| out.token_latency < b.latency) {
                best = Some(DraftPass {
                    latency: out.token_latency,
                    replicas,
                    plan,
                    reserved_bytes,
                });
            }
        }
    }
    Ok(best)
}

fn plain_points(
    model: &ModelArchitecture,
    acc: &AcceleratorSpec,
    workload: &Workload,
    n_gpu: u32,
) -> Result<Vec<ParetoPoint>> {
    let mut out = Vec::new();
    for plan in enumerate_plans(model, acc, n_gpu) {
        if workload.batch_size < plan.pp {
            continue;
        }
        let breakdown = token_latency(model, workload, &plan, acc)?;
        if breakdown.feasible {
            out.push(ParetoPoint {
                tokens_per_second: 1.0 / breakdown.token_latency,
                cost_per_million_tokens: breakdown.cost_per_million_tokens,
                plan,
                batch_size: workload.batch_size,
                breakdown,
                speculation: None,
            });
        }
    }
    Ok(out)
}

fn speculative_points(
    model: &ModelArchitecture,
    acc: &AcceleratorSpec,
    workload: &Workload,
    n_gpu: u32,
    spec: &SpeculationSetup,
) -> Result<Vec<ParetoPoint>> {
    let target_bytes = memory_required(model, workload);
    let Some(draft) = best_draft_pass(&spec.draft, acc, workload, n_gpu, target_bytes)? else {
        return Ok(Vec::new());
    };
    let per_second = acc.price_per_second();
    let b = f64::from(workload.batch_size);
    let mut out = Vec::new();
    for plan in enumerate_plans(model, acc, n_gpu) {
        if workload.batch_size < plan.pp {
            continue;
        }
        let mut passes: Vec<Option<LatencyBreakdown>> = vec![None; spec.gamma_max as usize];
        let mut failure = None;
        let choice = optimal_gamma_by(spec.alpha, spec.gamma_max, |gamma| {
            let w = workload.with_decode_width(gamma);
            match token_latency_reserving(model, &w, &plan, acc, draft.reserved_bytes) {
                Ok(pass) => {
                    passes[gamma as usize - 1] = Some(pass);
                    pass.token_latency + f64::from(gamma) * draft.latency
                }
                Err(e) => {
                    failure.get_or_insert(e);
                    f64::INFINITY
                }
            }
        });
        if let Some(e) = failure {
            return Err(e);
        }
        let Some(verify) = passes[choice.gamma as usize - 1] else {
            continue;
        };
        if !verify.feasible || !choice.latency.is_finite() {
            continue;
        }
        let v = expected_tokens_per_iteration(spec.alpha, choice.gamma);
        let iteration_time = choice.latency * v;
        out.push(ParetoPoint {
            tokens_per_second: 1.0 / choice.latency,
            cost_per_million_tokens: choice.latency * f64::from(n_gpu) / b * per_second * 1e6,
            plan,
            batch_size: workload.batch_size,
            breakdown: verify,
            speculation: Some(SpeculationDetail {
                gamma: choice.gamma,
                expected_tokens: v,
                iteration_time,
                draft_latency: draft.latency,
                draft_replicas: draft.replicas,
                draft_plan: draft.plan,
            }),
        });
    }
    Ok(out)
}

fn points_for_instance(
    model: &ModelArchitecture,
    acc: &AcceleratorSpec,
    template: &Workload,
    grid: &SearchGrid,
    spec: Option<&SpeculationSetup>,
    n_gpu: u32,
) -> Result<Vec<ParetoPoint>> {
    let mut out = Vec::new();
    for &batch in &grid.batch_values {
        let workload = Workload {
            batch_size: batch,
            decode_width: 1,
            ..*template
        };
        let points = match spec {
            None => plain_points(model, acc, &workload, n_gpu)?,
            Some(s) => speculative_points(model, acc, &workload, n_gpu, s)?,
        };
        out.extend(points.into_iter().filter(|p| match template.demand_cap {
            Some(cap) => p.aggregate_throughput() <= cap,
            None => true,
        }));
    }
    Ok(out)
}

/// Every feasible `(n_gpu, batch, plan)` point of the grid, in grid order.
/// Context length and demand cap come from `template`; its batch size is
/// ignored.
pub fn sweep(
    model: &ModelArchitecture,
    acc: &AcceleratorSpec,
    template: &Workload,
    grid: &SearchGrid,
    spec: Option<&SpeculationSetup>,
) -> Result<Vec<ParetoPoint>> {
    grid.validate()?;
    Workload {
        batch_size: 1,
        ..*template
    }
    .validate()?;
    acc.compute_precision(model.weight_bits)?;
    if let Some(s) = spec {
        acc.compute_precision(s.draft.weight_bits)?;
    }

    #[cfg(feature = "parallel")]
    let per_instance: Vec<Result<Vec<ParetoPoint>>> = {
        use rayon::prelude::*;
        grid.n_gpu_values
            .par_iter()
            .map(|&n| points_for_instance(model, acc, template, grid, spec, n))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let per_instance: Vec<Result<Vec<ParetoPoint>>> = grid
        .n_gpu_values
        .iter()
        .map(|&n| points_for_instance(model, acc, template, grid, spec, n))
        .collect();

    let mut out = Vec::new();
    for points in per_instance {
        out.extend(points?);
    }
    if out.is_empty() {
        return Err(Error::EmptyFeasibleSet);
    }
    Ok(out)
}

/// Points not dominated in (speed up, cost down), sorted by speed.
/// Equal-speed points keep the cheapest; exact duplicates keep the smallest
/// plan, then the smallest batch.
pub fn pareto_frontier(points: &[ParetoPoint]) -> Vec<ParetoPoint> {
    let mut sorted: Vec<&ParetoPoint> = points.iter().collect();
    sorted.sort_by(|a, b| {
        b.tokens_per_second
            .total_cmp(&a.tokens_per_second)
            .then(a.cost_per_million_tokens.total_cmp(&b.cost_per_million_tokens))
            .then(a.order_key().cmp(&b.order_key()))
    });
    let mut frontier = Vec::new();
    let mut cheapest = f64::INFINITY;
    for p in sorted {
        if p.cost_per_million_tokens < cheapest {
            cheapest = p.cost_per_million_tokens;
            frontier.push(*p);
        }
    }
    frontier.reverse();
    frontier
}

/// Maximizes `speed^alpha_pref / cost`; ties go to the faster point.
pub fn utility_optimal_point(frontier: &[ParetoPoint], alpha_pref: f64) -> Result<ParetoPoint> {
    if !(alpha_pref >= 0.0) {
        return Err(Error::validation("preference", "alpha_pref must be >= 0"));
    }
    frontier
        .iter()
        .copied()
        .reduce(|best, p| {
            let order = p.utility(alpha_pref).cmp(best.utility(alpha_pref));
            if order.is_gt() || (order.is_eq() && p.tokens_per_second > best.tokens_per_second) {
                p
            } else {
                best
            }
        })
        .ok_or(Error::Empty("frontier"))
}

/// Fastest single-request configuration over the grid's instance sizes.
/// Ties go to the cheaper point.
pub fn max_tokens_per_second(
    model: &ModelArchitecture,
    acc: &AcceleratorSpec,
    template: &Workload,
    grid: &SearchGrid,
    spec: Option<&SpeculationSetup>,
) -> Result<ParetoPoint> {
    let points = sweep(model, acc, template, &grid.serial(), spec)?;
    Ok(*pareto_frontier(&points)
        .last()
        .expect("sweep returns at least one point"))
}

/// Fastest speed on `frontier` at or below `cost`.
pub fn speed_at_cost(frontier: &[ParetoPoint], cost: f64) -> Option<f64> {
    frontier
        .iter()
        .filter(|p| p.cost_per_million_tokens <= cost)
        .map(|p| p.tokens_per_second)
        .max_by(f64::total_cmp)
}

/// Speed ratio `improved / base` at each cost level where both frontiers
/// have a point, evaluated at the base frontier's costs.
pub fn throughput_ratios_at_fixed_cost(base: &[ParetoPoint], improved: &[ParetoPoint]) -> Vec<(f64, f64)> {
    base.iter()
        .filter_map(|p| {
            speed_at_cost(improved, p.cost_per_million_tokens)
                .map(|s| (p.cost_per_million_tokens, s / p.tokens_per_second))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcceleratorFrontier {
    pub accelerator: String,
    pub frontier: Vec<ParetoPoint>,
    pub fastest: ParetoPoint,
}

/// One frontier per accelerator over the same grid and workload.
pub fn compare_accelerators(
    model: &ModelArchitecture,
    accs: &[AcceleratorSpec],
    template: &Workload,
    grid: &SearchGrid,
    spec: Option<&SpeculationSetup>,
) -> Result<Vec<AcceleratorFrontier>> {
    if accs.is_empty() {
        return Err(Error::Empty("accelerator list"));
    }
    accs.iter()
        .map(|acc| {
            let frontier = pareto_frontier(&sweep(model, acc, template, grid, spec)?);
            let fastest = *frontier.last().expect("nonempty sweep has a frontier");
            Ok(AcceleratorFrontier {
                accelerator: acc.name.clone(),
                frontier,
                fastest,
            })
        })
        .collect()
}
