use std::fs;
use std::path::PathBuf;

use clap::Args;
use infereco::optimizer::{pareto_frontier, sweep, throughput_ratios_at_fixed_cost, utility_optimal_point};
use infereco::specdec::{
    estimate_alpha, parse_records, validate_alpha, AlphaEstimate, DEFAULT_ALPHA, DEFAULT_GAMMA_MAX,
};
use infereco::{ParetoPoint, SearchGrid, SpeculationSetup, Workload};
use serde::Serialize;

use crate::manifest::{InputRecord, RunManifest, SpeculationInputs};
use crate::output::{to_json, write_file};
use crate::{CliResult, Env, Failure};

#[derive(Args, Debug)]
pub struct SpecdecArgs {
    /// Target model (preset or file).
    #[arg(long)]
    pub target: String,
    /// Draft model (preset or file).
    #[arg(long)]
    pub draft: String,
    #[arg(long, default_value = "h100-sxm")]
    pub gpu: String,
    /// Per-token acceptance probability, in (0, 1). Defaults to 0.8.
    #[arg(long, conflicts_with = "records")]
    pub alpha: Option<f64>,
    /// Line-delimited `{"p": .., "q": ..}` records to estimate alpha from.
    #[arg(long)]
    pub records: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_GAMMA_MAX)]
    pub gamma_max: u32,
    /// Target weight precision override in bits.
    #[arg(long)]
    pub weight_bits: Option<u32>,
    /// Target activation precision override in bits.
    #[arg(long)]
    pub act_bits: Option<u32>,
    #[arg(long, default_value_t = 0.0)]
    pub context: f64,
    /// Hourly price per GPU in USD.
    #[arg(long)]
    pub price: Option<f64>,
    /// Preference exponent for the reported operating points.
    #[arg(long, default_value_t = 3.0)]
    pub pref_alpha: f64,
    #[arg(long, value_delimiter = ',')]
    pub n_gpu_values: Vec<u32>,
    #[arg(long, value_delimiter = ',')]
    pub batch_values: Vec<u32>,
    /// Also write specdec.json into this directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Serialize)]
struct Comparison {
    gamma_at_fastest: u32,
    fastest_plain: ParetoPoint,
    fastest_speculative: ParetoPoint,
    optimum_plain: ParetoPoint,
    optimum_speculative: ParetoPoint,
    /// Speculative over plain speed at the plain frontier's costs.
    throughput_ratio_median: f64,
    throughput_ratio_min: f64,
    throughput_ratio_max: f64,
}

#[derive(Serialize)]
struct Report<'a> {
    manifest: &'a RunManifest,
    alpha: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    estimate: Option<AlphaEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    comparison: Option<Comparison>,
}

fn read_alpha(args: &SpecdecArgs, inputs: &mut Vec<InputRecord>) -> CliResult<(f64, Option<AlphaEstimate>)> {
    if let Some(path) = &args.records {
        let bytes = fs::read(path).map_err(|e| Failure::Input(format!("cannot read {}: {e}", path.display())))?;
        let text =
            String::from_utf8(bytes.clone()).map_err(|_| Failure::Input(format!("{} is not UTF-8", path.display())))?;
        let estimate = estimate_alpha(&parse_records(&text)?)?;
        inputs.push(InputRecord::for_file("records", &path.display().to_string(), &bytes));
        return Ok((estimate.alpha, Some(estimate)));
    }
    Ok((validate_alpha(args.alpha.unwrap_or(DEFAULT_ALPHA))?, None))
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

pub fn run(env: &Env, args: &SpecdecArgs) -> CliResult<()> {
    let (target, mut target_in) = env.model(&args.target, "target")?;
    let target = target.with_precisions(args.weight_bits, args.act_bits);
    target.validate()?;
    target_in.weight_bits = args.weight_bits;
    target_in.activation_bits = args.act_bits;
    let (draft, draft_in) = env.model(&args.draft, "draft")?;
    let (acc, acc_in) = env.accelerator(&args.gpu, args.price)?;
    let mut inputs = vec![target_in, draft_in, acc_in];
    let (alpha, estimate) = read_alpha(args, &mut inputs)?;

    let default = SearchGrid::default();
    let grid = SearchGrid::new(
        if args.n_gpu_values.is_empty() {
            default.n_gpu_values
        } else {
            args.n_gpu_values.clone()
        },
        if args.batch_values.is_empty() {
            default.batch_values
        } else {
            args.batch_values.clone()
        },
    )?;
    let template = Workload::new(args.context, 1);
    template.validate()?;

    let mut manifest = RunManifest::new("specdec", inputs, args.context);
    manifest.grid = Some(grid.clone());
    manifest.speculation = Some(SpeculationInputs {
        draft: draft.name.clone(),
        alpha,
        gamma_max: args.gamma_max,
    });
    manifest.note_precision(&target, &acc);
    manifest.note_precision(&draft, &acc);

    let comparison = if alpha > 0.0 && alpha < 1.0 {
        let setup = SpeculationSetup::new(draft.clone(), alpha, args.gamma_max)?;
        let plain = pareto_frontier(&sweep(&target, &acc, &template, &grid, None)?);
        let spec = pareto_frontier(&sweep(&target, &acc, &template, &grid, Some(&setup))?);
        let ratios: Vec<f64> = throughput_ratios_at_fixed_cost(&plain, &spec)
            .into_iter()
            .map(|(_, r)| r)
            .collect();
        if ratios.is_empty() {
            manifest.notes.push("the frontiers share no cost range".into());
        }
        let fastest_speculative = *spec.last().expect("nonempty frontier");
        Some(Comparison {
            gamma_at_fastest: fastest_speculative.speculation.map_or(1, |s| s.gamma),
            fastest_plain: *plain.last().expect("nonempty frontier"),
            fastest_speculative,
            optimum_plain: utility_optimal_point(&plain, args.pref_alpha)?,
            optimum_speculative: utility_optimal_point(&spec, args.pref_alpha)?,
            throughput_ratio_median: if ratios.is_empty() {
                f64::NAN
            } else {
                median(ratios.clone())
            },
            throughput_ratio_min: ratios.iter().copied().fold(f64::INFINITY, f64::min),
            throughput_ratio_max: ratios.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        })
    } else {
        manifest.notes.push(format!(
            "alpha = {alpha} lies outside (0, 1); frontier comparison skipped"
        ));
        None
    };

    if args.out_dir.is_some() {
        manifest.outputs = vec!["specdec.json".into()];
    }
    let report = Report {
        manifest: &manifest,
        alpha,
        estimate,
        comparison,
    };
    if let Some(dir) = &args.out_dir {
        write_file(dir, "specdec.json", to_json(&report).as_bytes())?;
    }
    if args.json {
        print!("{}", to_json(&report));
        return Ok(());
    }

    match &report.estimate {
        Some(e) => println!(
            "alpha = {:.4} +/- {:.4} from {} records",
            e.alpha, e.standard_error, e.samples
        ),
        None => println!("alpha = {alpha}"),
    }
    for note in &manifest.notes {
        println!("note: {note}");
    }
    if let Some(c) = &report.comparison {
        println!("{} drafted by {} on {}", target.name, draft.name, acc.name);
        let line = |label: &str, p: &ParetoPoint| {
            println!(
                "{label:<28}{:>9.1} tokens/s  ${:>9.4}/M  ({} GPUs, batch {})",
                p.tokens_per_second, p.cost_per_million_tokens, p.plan.n_gpu, p.batch_size
            );
        };
        line("fastest, no speculation", &c.fastest_plain);
        line(
            &format!("fastest, gamma* = {}", c.gamma_at_fastest),
            &c.fastest_speculative,
        );
        line(
            &format!("optimum a={}, no speculation", args.pref_alpha),
            &c.optimum_plain,
        );
        line(
            &format!("optimum a={}, speculation", args.pref_alpha),
            &c.optimum_speculative,
        );
        println!(
            "throughput at fixed cost: median {:.2}x (range {:.2}x to {:.2}x)",
            c.throughput_ratio_median, c.throughput_ratio_min, c.throughput_ratio_max
        );
    }
    if let Some(dir) = &args.out_dir {
        println!("wrote {}", dir.join("specdec.json").display());
    }
    Ok(())
}
