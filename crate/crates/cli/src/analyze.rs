use clap::Args;
use infereco::parallelism::enumerate_plans;
use infereco::perf::token_latency;
use infereco::roofline::{self, ToyModel, ToyResult};
use infereco::{AcceleratorSpec, LatencyBreakdown, ModelArchitecture, ParallelismPlan, Workload};
use serde::Serialize;

use crate::manifest::RunManifest;
use crate::output::to_json;
use crate::{CliResult, Env, Failure, ModelArgs};

#[derive(Args, Debug)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Accelerator preset name or spec file.
    #[arg(long, default_value = "h100-sxm")]
    pub gpu: String,
    /// Concurrent sequences.
    #[arg(long, default_value_t = 1)]
    pub batch: u32,
    /// Instance size (default 1). With --toy, also evaluates the toy model
    /// at this size.
    #[arg(long)]
    pub n_gpu: Option<u32>,
    /// Tensor-parallel degree; forces an explicit plan.
    #[arg(long)]
    pub tp: Option<u32>,
    /// Pipeline stages; forces an explicit plan.
    #[arg(long)]
    pub pp: Option<u32>,
    /// Expert-parallel degree; forces an explicit plan.
    #[arg(long)]
    pub ep: Option<u32>,
    /// Idealized dense model on raw specs instead of the full model.
    #[arg(long)]
    pub toy: bool,
    /// Toy model: latency of one all-reduce hop, microseconds.
    #[arg(long, default_value_t = 1.0)]
    pub t_hop_us: f64,
    /// Toy model: all-reduces per layer (default from the architecture).
    #[arg(long)]
    pub n_reduce: Option<u32>,
    /// Print JSON, including the run manifest, instead of a table.
    #[arg(long)]
    pub json: bool,
}

pub fn run(env: &Env, args: &AnalyzeArgs) -> CliResult<()> {
    let (model, model_in) = env.target(&args.model)?;
    let (acc, acc_in) = env.accelerator(&args.gpu, args.model.price)?;
    let mut manifest = RunManifest::new("analyze", vec![model_in, acc_in], args.model.context);
    if args.toy {
        toy(&model, &acc, args, manifest)
    } else {
        manifest.note_precision(&model, &acc);
        full(&model, &acc, args, manifest)
    }
}

fn choose_plan(
    model: &ModelArchitecture,
    acc: &AcceleratorSpec,
    args: &AnalyzeArgs,
    workload: &Workload,
) -> CliResult<(ParallelismPlan, LatencyBreakdown)> {
    let n_gpu = args.n_gpu.unwrap_or(1);
    if args.tp.is_some() || args.pp.is_some() || args.ep.is_some() {
        let pp = args.pp.unwrap_or(1);
        let ep = args.ep.unwrap_or(1);
        let tp = args.tp.unwrap_or(n_gpu / (pp * ep).max(1));
        let plan = ParallelismPlan::new(n_gpu, tp, pp, ep, acc.node_size)?;
        let breakdown = token_latency(model, workload, &plan, acc)?;
        return Ok((plan, breakdown));
    }
    let mut best: Option<(ParallelismPlan, LatencyBreakdown)> = None;
    for plan in enumerate_plans(model, acc, n_gpu) {
        if workload.batch_size < plan.pp {
            continue;
        }
        let b = token_latency(model, workload, &plan, acc)?;
        if best.as_ref().is_none_or(|(_, cur)| b.token_latency < cur.token_latency) {
            best = Some((plan, b));
        }
    }
    best.ok_or_else(|| Failure::Input(format!("no parallelism plan for {n_gpu} GPUs")))
}

#[derive(Serialize)]
struct FullReport<'a> {
    manifest: &'a RunManifest,
    plan: ParallelismPlan,
    workload: Workload,
    tokens_per_second: f64,
    breakdown: LatencyBreakdown,
}

fn full(model: &ModelArchitecture, acc: &AcceleratorSpec, args: &AnalyzeArgs, manifest: RunManifest) -> CliResult<()> {
    let workload = Workload::new(args.model.context, args.batch);
    workload.validate()?;
    let (plan, b) = choose_plan(model, acc, args, &workload)?;
    if args.json {
        print!(
            "{}",
            to_json(&FullReport {
                manifest: &manifest,
                plan,
                workload,
                tokens_per_second: b.tokens_per_second_per_sequence(),
                breakdown: b,
            })
        );
    } else {
        println!(
            "{} ({}-bit weights, {}-bit activations) on {}",
            model.name, model.weight_bits, model.activation_bits, acc.name
        );
        println!(
            "plan: {} GPUs on {} node(s), tp {} pp {} ep {}; batch {}, context {}",
            plan.n_gpu, plan.n_nodes, plan.tp, plan.pp, plan.ep, workload.batch_size, workload.context_length
        );
        for note in &manifest.notes {
            println!("note: {note}");
        }
        println!();
        let rows = [
            ("memory reads", b.memory_time),
            ("arithmetic", b.arithmetic_time),
            ("collective latency", b.collective_latency_time),
            ("kernel launches", b.kernel_launch_time),
            ("network bandwidth", b.network_bandwidth_time),
            ("pipeline boundaries", b.pp_boundary_time),
        ];
        println!("{:<22}{:>14}{:>9}", "component", "seconds", "share");
        let hidden = b.memory_time.min(b.arithmetic_time);
        for (i, (name, t)) in rows.into_iter().enumerate() {
            let share = if i < 2 && t == hidden {
                "overlap".into()
            } else if b.feasible {
                format!("{:.1}%", 100.0 * t / b.token_latency)
            } else {
                "-".into()
            };
            println!("{name:<22}{t:>14.6e}{share:>9}");
        }
        println!("{:<22}{:>14.6e}", "token latency", b.token_latency);
        println!(
            "{:<22}{:>14.2}",
            "tokens/s per request",
            b.tokens_per_second_per_sequence()
        );
        println!("{:<22}{:>14.6e}", "GPU-seconds / token", b.gpu_seconds_per_token);
        println!("{:<22}{:>14.4}", "USD / M tokens", b.cost_per_million_tokens);
        println!(
            "{:<22}{:>14}",
            "HBM required",
            format!(
                "{:.1} / {:.1} GB",
                b.memory_required_bytes / 1e9,
                b.memory_capacity_bytes / 1e9
            )
        );
    }
    if b.feasible {
        Ok(())
    } else {
        Err(Failure::Infeasible(format!(
            "infeasible: weights and KV cache need {:.1} GB but {} GPUs hold {:.1} GB",
            b.memory_required_bytes / 1e9,
            plan.n_gpu,
            b.memory_capacity_bytes / 1e9
        )))
    }
}

#[derive(Serialize)]
struct ToyReport<'a> {
    manifest: &'a RunManifest,
    t_hop: f64,
    n_reduce: u32,
    critical_batch_size: f64,
    critical_batch_size_sustained: f64,
    optimal_instance_size: f64,
    minimum_token_latency: f64,
    tokens_per_second: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    cost_ratio_to_arithmetic_floor: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    at_instance: Option<ToyAt>,
}

#[derive(Serialize)]
struct ToyAt {
    n_gpu: u32,
    batch: u32,
    result: ToyResult,
}

fn toy(model: &ModelArchitecture, acc: &AcceleratorSpec, args: &AnalyzeArgs, manifest: RunManifest) -> CliResult<()> {
    if !(args.t_hop_us > 0.0 && args.t_hop_us.is_finite()) {
        return Err(Failure::Input("--t-hop-us must be positive".into()));
    }
    let toy = ToyModel::from_architecture(model)?;
    let t_hop = args.t_hop_us * 1e-6;
    let n_reduce = args.n_reduce.unwrap_or(toy.n_reduce);
    let bits = toy.weight_bits;
    let n_star = roofline::optimal_instance_size(&toy, acc, t_hop, n_reduce)?;
    let latency = roofline::minimum_token_latency(&toy, acc, t_hop, n_reduce, false)?;
    let cost = roofline::cost_at_minimum_latency(&toy, acc, t_hop, n_reduce).ok();
    let at_instance = match args.n_gpu {
        Some(n) => Some(ToyAt {
            n_gpu: n,
            batch: args.batch,
            result: roofline::toy_multi_device(&toy, acc, f64::from(args.batch), f64::from(n), t_hop, n_reduce)?,
        }),
        None => None,
    };
    let report = ToyReport {
        manifest: &manifest,
        t_hop,
        n_reduce,
        critical_batch_size: roofline::critical_batch_size(acc, bits, false)?,
        critical_batch_size_sustained: roofline::critical_batch_size(acc, bits, true)?,
        optimal_instance_size: n_star,
        minimum_token_latency: latency,
        tokens_per_second: 1.0 / latency,
        cost_ratio_to_arithmetic_floor: cost.map(|c| c.ratio_to_floor),
        at_instance,
    };
    if args.json {
        print!("{}", to_json(&report));
        return Ok(());
    }
    println!(
        "toy model: {} on {} (raw specs, {}-bit weights, hop {} us, {} all-reduces per layer)",
        model.name, acc.name, bits, args.t_hop_us, n_reduce
    );
    println!(
        "critical batch size       {:.1} (raw), {:.1} (sustained)",
        report.critical_batch_size, report.critical_batch_size_sustained
    );
    println!("optimal instance size     {:.1} GPUs", report.optimal_instance_size);
    println!(
        "minimum token latency     {:.3} ms ({:.0} tokens/s)",
        latency * 1e3,
        report.tokens_per_second
    );
    if let Some(ratio) = report.cost_ratio_to_arithmetic_floor {
        println!("cost at minimum latency   {ratio:.2}x the arithmetic floor");
    }
    if let Some(at) = &report.at_instance {
        println!(
            "at {} GPUs, batch {}:      {:.3} ms per token, {:.3e} GPU-seconds per token",
            at.n_gpu,
            at.batch,
            at.result.token_latency * 1e3,
            at.result.gpu_seconds_per_token
        );
    }
    Ok(())
}
