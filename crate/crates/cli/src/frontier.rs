use std::path::{Path, PathBuf};

use clap::Args;
use infereco::optimizer::{pareto_frontier, sweep, utility_optimal_point};
use infereco::specdec::{DEFAULT_ALPHA, DEFAULT_GAMMA_MAX};
use infereco::{AcceleratorSpec, ModelArchitecture, ParetoPoint, SearchGrid, SpeculationSetup, Workload};
use serde::Serialize;

use crate::manifest::{InputRecord, RunManifest, SpeculationInputs};
use crate::output::{frontier_csv, to_json, write_file};
use crate::svg::{self, Marker, Series};
use crate::{CliResult, Env, ModelArgs};

/// Grid, demand, speculation and preference flags.
#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    /// Cap on aggregate tokens/s across a batch.
    #[arg(long)]
    pub demand: Option<f64>,
    /// Draft model for speculative decoding (preset or file).
    #[arg(long)]
    pub spec_draft: Option<String>,
    /// Per-token acceptance probability of the draft, in (0, 1).
    #[arg(long, default_value_t = DEFAULT_ALPHA)]
    pub spec_alpha: f64,
    /// Longest draft run considered.
    #[arg(long, default_value_t = DEFAULT_GAMMA_MAX)]
    pub gamma_max: u32,
    /// Mark the point maximizing speed^alpha / cost.
    #[arg(long)]
    pub pref_alpha: Option<f64>,
    /// Instance sizes to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub n_gpu_values: Vec<u32>,
    /// Batch sizes to sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub batch_values: Vec<u32>,
    #[arg(long, default_value = "infereco-out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Debug)]
pub struct FrontierArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Accelerator preset name or spec file.
    #[arg(long, default_value = "h100-sxm")]
    pub gpu: String,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Args, Debug)]
pub struct CompareArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Accelerators to compare, repeated or comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    pub gpu: Vec<String>,
    #[command(flatten)]
    pub sweep: SweepArgs,
}

#[derive(Serialize)]
struct FrontierRecord {
    accelerator: String,
    fastest: ParetoPoint,
    #[serde(skip_serializing_if = "Option::is_none")]
    utility_optimal: Option<ParetoPoint>,
    points: Vec<ParetoPoint>,
}

#[derive(Serialize)]
struct Report<'a> {
    manifest: &'a RunManifest,
    frontiers: &'a [FrontierRecord],
}

pub fn grid(args: &SweepArgs) -> CliResult<SearchGrid> {
    let default = SearchGrid::default();
    let n_gpu = if args.n_gpu_values.is_empty() {
        default.n_gpu_values
    } else {
        args.n_gpu_values.clone()
    };
    let batch = if args.batch_values.is_empty() {
        default.batch_values
    } else {
        args.batch_values.clone()
    };
    Ok(SearchGrid::new(n_gpu, batch)?)
}

pub fn speculation(env: &Env, args: &SweepArgs) -> CliResult<Option<(SpeculationSetup, InputRecord)>> {
    match &args.spec_draft {
        Some(name) => {
            let (draft, record) = env.model(name, "draft")?;
            Ok(Some((
                SpeculationSetup::new(draft, args.spec_alpha, args.gamma_max)?,
                record,
            )))
        }
        None => Ok(None),
    }
}

pub fn run_frontier(env: &Env, args: &FrontierArgs) -> CliResult<()> {
    let gpus = [args.gpu.clone()];
    run(env, "frontier", &args.model, &gpus, &args.sweep)
}

pub fn run_compare(env: &Env, args: &CompareArgs) -> CliResult<()> {
    run(env, "compare", &args.model, &args.gpu, &args.sweep)
}

fn run(env: &Env, stem: &str, model_args: &ModelArgs, gpus: &[String], args: &SweepArgs) -> CliResult<()> {
    let (model, model_in) = env.target(model_args)?;
    let mut inputs = vec![model_in];
    let mut accs = Vec::new();
    for g in gpus {
        let (acc, record) = env.accelerator(g, model_args.price)?;
        inputs.push(record);
        accs.push(acc);
    }
    let spec = speculation(env, args)?;
    if let Some((_, record)) = &spec {
        inputs.push(record.clone());
    }
    let grid = grid(args)?;
    let template = Workload {
        demand_cap: args.demand,
        ..Workload::new(model_args.context, 1)
    };
    template.validate()?;

    let command = if stem == "frontier" { "frontier" } else { "compare-gpus" };
    let mut manifest = RunManifest::new(command, inputs, model_args.context);
    manifest.demand_cap = args.demand;
    manifest.grid = Some(grid.clone());
    manifest.speculation = spec.as_ref().map(|(s, _)| SpeculationInputs {
        draft: s.draft.name.clone(),
        alpha: s.alpha,
        gamma_max: s.gamma_max,
    });
    manifest
        .notes
        .push("tokens_per_second is the decoding speed seen by one request".into());
    if let Some((s, _)) = &spec {
        manifest.notes.push(format!(
            "the draft ({}) runs as data-parallel replicas on the target's GPUs; the verify pass reads weights once and decodes gamma positions per sequence",
            s.draft.name
        ));
    }
    for acc in &accs {
        manifest.note_precision(&model, acc);
        if let Some((s, _)) = &spec {
            manifest.note_precision(&s.draft, acc);
        }
    }

    let records = frontiers(
        &model,
        &accs,
        &template,
        &grid,
        spec.as_ref().map(|(s, _)| s),
        args.pref_alpha,
    )?;
    write_outputs(
        &args.out_dir,
        stem,
        &model,
        model_args.context,
        &mut manifest,
        &records,
        args.pref_alpha,
    )?;

    for r in &records {
        let f = &r.fastest;
        println!(
            "{}: {} frontier points; fastest {:.1} tokens/s at ${:.4}/M ({} GPUs, batch {})",
            r.accelerator,
            r.points.len(),
            f.tokens_per_second,
            f.cost_per_million_tokens,
            f.plan.n_gpu,
            f.batch_size
        );
        if let Some(u) = &r.utility_optimal {
            println!(
                "  utility optimum: {:.1} tokens/s at ${:.4}/M ({} GPUs, batch {})",
                u.tokens_per_second, u.cost_per_million_tokens, u.plan.n_gpu, u.batch_size
            );
        }
    }
    for name in &manifest.outputs {
        println!("wrote {}", args.out_dir.join(name).display());
    }
    Ok(())
}

fn frontiers(
    model: &ModelArchitecture,
    accs: &[AcceleratorSpec],
    template: &Workload,
    grid: &SearchGrid,
    spec: Option<&SpeculationSetup>,
    pref_alpha: Option<f64>,
) -> CliResult<Vec<FrontierRecord>> {
    accs.iter()
        .map(|acc| {
            let points = pareto_frontier(&sweep(model, acc, template, grid, spec)?);
            let fastest = *points.last().expect("a nonempty sweep has a frontier");
            let utility_optimal = pref_alpha.map(|a| utility_optimal_point(&points, a)).transpose()?;
            Ok(FrontierRecord {
                accelerator: acc.name.clone(),
                fastest,
                utility_optimal,
                points,
            })
        })
        .collect()
}

fn write_outputs(
    dir: &Path,
    stem: &str,
    model: &ModelArchitecture,
    context: f64,
    manifest: &mut RunManifest,
    records: &[FrontierRecord],
    pref_alpha: Option<f64>,
) -> CliResult<()> {
    let names = [format!("{stem}.csv"), format!("{stem}.json"), format!("{stem}.svg")];
    manifest.outputs = names.to_vec();

    let tables: Vec<(&str, &[ParetoPoint])> = records
        .iter()
        .map(|r| (r.accelerator.as_str(), r.points.as_slice()))
        .collect();
    write_file(dir, &names[0], &frontier_csv(&tables)?)?;
    write_file(
        dir,
        &names[1],
        to_json(&Report {
            manifest,
            frontiers: records,
        })
        .as_bytes(),
    )?;

    let title = format!(
        "{} ({}-bit weights, context {})",
        model.name, model.weight_bits, context
    );
    let plot = svg::Plot {
        title: &title,
        x_label: "tokens/s per request",
        y_label: "USD per million tokens",
        series: records
            .iter()
            .map(|r| Series {
                label: &r.accelerator,
                points: r
                    .points
                    .iter()
                    .map(|p| (p.tokens_per_second, p.cost_per_million_tokens))
                    .collect(),
            })
            .collect(),
        markers: records
            .iter()
            .filter_map(|r| r.utility_optimal.as_ref())
            .map(|u| Marker {
                x: u.tokens_per_second,
                y: u.cost_per_million_tokens,
                label: format!("optimum at α = {}", pref_alpha.unwrap_or_default()),
            })
            .collect(),
    };
    write_file(dir, &names[2], svg::render(&plot).as_bytes())
}
