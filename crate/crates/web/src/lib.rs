//! Browser bindings for the cost model. Every export returns a JSON string
//! so the page needs no generated type glue.

use infereco::catalog::{accelerator_preset, accelerator_preset_names, model_preset, model_preset_names};
use infereco::optimizer::{pareto_frontier, sweep, utility_optimal_point};
use infereco::roofline::{self, ToyModel};
use infereco::specdec::{expected_tokens_per_iteration, optimal_gamma, spec_latency, validate_alpha};
use infereco::{SearchGrid, SpeculationSetup, Workload};
use serde::Serialize;
use wasm_bindgen::prelude::*;

type Out = Result<String, String>;

fn json<T: Serialize>(value: &T) -> Out {
    serde_json::to_string(value).map_err(|e| e.to_string())
}

fn text<E: ToString>(e: E) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct Presets {
    models: Vec<&'static str>,
    accelerators: Vec<&'static str>,
}

#[wasm_bindgen]
pub fn presets() -> String {
    json(&Presets {
        models: model_preset_names().collect(),
        accelerators: accelerator_preset_names().collect(),
    })
    .expect("names serialize")
}

#[derive(Serialize)]
struct FrontierPoint {
    speed: f64,
    cost: f64,
    n_gpu: u32,
    tp: u32,
    pp: u32,
    ep: u32,
    batch: u32,
    gamma: Option<u32>,
}

#[derive(Serialize)]
struct Frontier {
    points: Vec<FrontierPoint>,
    /// Index of the utility-optimal point.
    optimum: usize,
}

/// Speed-cost frontier on the default grid. `weight_bits = 0` keeps the
/// preset precision, `price <= 0` the preset price, and `spec_alpha = 0`
/// disables speculation with a llama3-8b draft.
#[wasm_bindgen]
pub fn frontier(
    model: &str,
    gpu: &str,
    weight_bits: u32,
    context: f64,
    price: f64,
    pref_alpha: f64,
    spec_alpha: f64,
) -> Out {
    let mut m = model_preset(model).map_err(text)?;
    if weight_bits > 0 {
        m = m.with_precisions(Some(weight_bits), None);
        m.validate().map_err(text)?;
    }
    let mut acc = accelerator_preset(gpu).map_err(text)?;
    if price > 0.0 {
        acc.hourly_price = price;
    }
    let spec = if spec_alpha > 0.0 {
        let draft = model_preset("llama3-8b").map_err(text)?;
        Some(SpeculationSetup::new(draft, spec_alpha, 32).map_err(text)?)
    } else {
        None
    };
    let points = sweep(
        &m,
        &acc,
        &Workload::new(context, 1),
        &SearchGrid::default(),
        spec.as_ref(),
    )
    .map_err(text)?;
    let front = pareto_frontier(&points);
    let best = utility_optimal_point(&front, pref_alpha).map_err(text)?;
    json(&Frontier {
        optimum: front.iter().position(|p| *p == best).unwrap_or(0),
        points: front
            .iter()
            .map(|p| FrontierPoint {
                speed: p.tokens_per_second,
                cost: p.cost_per_million_tokens,
                n_gpu: p.plan.n_gpu,
                tp: p.plan.tp,
                pp: p.plan.pp,
                ep: p.plan.ep,
                batch: p.batch_size,
                gamma: p.speculation.map(|s| s.gamma),
            })
            .collect(),
    })
}

#[derive(Serialize)]
struct ToyCurve {
    n_gpu: Vec<f64>,
    latency: Vec<f64>,
    optimal_instance_size: f64,
    minimum_latency: f64,
}

/// Toy-model latency at batch 1 for instance sizes from 1 to `max_gpu`.
#[wasm_bindgen]
pub fn toy_latency_curve(model: &str, gpu: &str, t_hop_us: f64, max_gpu: u32) -> Out {
    if !(t_hop_us > 0.0) {
        return Err("hop latency must be positive".into());
    }
    let toy = ToyModel::from_architecture(&model_preset(model).map_err(text)?).map_err(text)?;
    let acc = accelerator_preset(gpu).map_err(text)?;
    let t_hop = t_hop_us * 1e-6;
    let steps = 200;
    let top = f64::from(max_gpu.max(2));
    let mut curve = ToyCurve {
        n_gpu: Vec::with_capacity(steps + 1),
        latency: Vec::with_capacity(steps + 1),
        optimal_instance_size: roofline::optimal_instance_size(&toy, &acc, t_hop, toy.n_reduce).map_err(text)?,
        minimum_latency: roofline::minimum_token_latency(&toy, &acc, t_hop, toy.n_reduce, false).map_err(text)?,
    };
    for i in 0..=steps {
        // Log-spaced so the region near one device stays visible.
        let n = top.powf(i as f64 / steps as f64);
        let r = roofline::toy_multi_device(&toy, &acc, 1.0, n, t_hop, toy.n_reduce).map_err(text)?;
        curve.n_gpu.push(n);
        curve.latency.push(r.token_latency);
    }
    json(&curve)
}

#[derive(Serialize)]
struct GammaCurve {
    gamma: Vec<u32>,
    latency: Vec<f64>,
    expected_tokens: Vec<f64>,
    best_gamma: u32,
    best_latency: f64,
}

/// Mean latency per token against draft length for fixed pass times.
#[wasm_bindgen]
pub fn specdec_curve(t_target_ms: f64, t_draft_ms: f64, alpha: f64, gamma_max: u32) -> Out {
    validate_alpha(alpha).map_err(text)?;
    if !(t_target_ms > 0.0 && t_draft_ms > 0.0) {
        return Err("pass times must be positive".into());
    }
    if gamma_max == 0 {
        return Err("gamma_max must be at least 1".into());
    }
    let (tp, tq) = (t_target_ms * 1e-3, t_draft_ms * 1e-3);
    let best = optimal_gamma(tp, tq, alpha, gamma_max);
    json(&GammaCurve {
        gamma: (1..=gamma_max).collect(),
        latency: (1..=gamma_max).map(|g| spec_latency(tp, tq, alpha, g)).collect(),
        expected_tokens: (1..=gamma_max)
            .map(|g| expected_tokens_per_iteration(alpha, g))
            .collect(),
        best_gamma: best.gamma,
        best_latency: best.latency,
    })
}
