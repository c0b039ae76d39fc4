use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use infereco::catalog::{self, Spec};
use infereco::perf::kv_read_cost_floor;
use serde_json::Value;
use sha2::{Digest, Sha256};

fn infereco(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_infereco"))
        .args(args)
        .env_remove("INFERECO_PRESET_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = infereco(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(args: &[&str]) -> Value {
    serde_json::from_str(&ok(args)).unwrap()
}

/// Data rows of a frontier CSV, keyed by header.
fn csv_rows(path: &Path) -> Vec<std::collections::HashMap<String, String>> {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let headers = reader.headers().unwrap().clone();
    reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            headers
                .iter()
                .map(String::from)
                .zip(r.iter().map(String::from))
                .collect()
        })
        .collect()
}

fn num(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap()
}

fn dir_str(d: &tempfile::TempDir) -> &str {
    d.path().to_str().unwrap()
}

#[test]
fn toy_analysis_matches_the_small_dense_model() {
    let v = json(&[
        "analyze",
        "--toy",
        "--model",
        "llama3-8b",
        "--gpu",
        "h100-sxm",
        "--json",
    ]);
    let latency = v["minimum_token_latency"].as_f64().unwrap();
    let n_star = v["optimal_instance_size"].as_f64().unwrap();
    assert!((latency - 1.04e-3).abs() < 0.02e-3, "latency {latency}");
    assert!((n_star - 11.0).abs() < 0.5, "N* {n_star}");

    let text = ok(&["analyze", "--toy", "--model", "llama3-8b"]);
    assert!(text.contains("1.035 ms"), "{text}");
}

#[test]
fn analyze_breakdown_sums_to_token_latency() {
    let v = json(&[
        "analyze",
        "--model",
        "llama3-70b",
        "--gpu",
        "h100-sxm",
        "--weight-bits",
        "8",
        "--n-gpu",
        "8",
        "--batch",
        "64",
        "--context",
        "0",
        "--json",
    ]);
    let b = &v["breakdown"];
    let f = |k: &str| b[k].as_f64().unwrap();
    let sum = f("memory_time").max(f("arithmetic_time"))
        + f("collective_latency_time")
        + f("kernel_launch_time")
        + f("network_bandwidth_time")
        + f("pp_boundary_time");
    assert!((sum - f("token_latency")).abs() <= 1e-12 * sum);
    assert_eq!(v["plan"]["n_gpu"], 8);
    assert_eq!(v["manifest"]["command"], "analyze");
}

#[test]
fn analyze_forced_plan_is_used() {
    let v = json(&[
        "analyze",
        "--model",
        "llama3-70b",
        "--n-gpu",
        "16",
        "--tp",
        "8",
        "--pp",
        "2",
        "--batch",
        "8",
        "--json",
    ]);
    assert_eq!(v["plan"]["tp"], 8);
    assert_eq!(v["plan"]["pp"], 2);
    assert!(v["breakdown"]["pp_boundary_time"].as_f64().unwrap() > 0.0);

    let out = infereco(&["analyze", "--model", "llama3-70b", "--n-gpu", "16", "--tp", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn analyze_reports_capacity_when_infeasible() {
    let out = infereco(&["analyze", "--model", "llama3.1-405b", "--n-gpu", "1"]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("GB"), "{err}");
}

#[test]
fn unknown_preset_is_an_input_error() {
    let out = infereco(&["analyze", "--model", "no-such-model", "--gpu", "h100-sxm"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));

    let out = infereco(&["analyze", "--model", "llama3-8b", "--gpu", "tpu-v9"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn frontier_reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        ok(&[
            "frontier",
            "--model",
            "mixtral-8x22b",
            "--weight-bits",
            "8",
            "--spec-draft",
            "llama3-8b",
            "--pref-alpha",
            "3",
            "--out-dir",
            dir_str(d),
        ]);
    }
    for name in ["frontier.csv", "frontier.json", "frontier.svg"] {
        let x = fs::read(a.path().join(name)).unwrap();
        let y = fs::read(b.path().join(name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name} differs between runs");
    }
}

#[test]
fn frontier_manifest_names_existing_outputs() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "frontier",
        "--model",
        "llama3-70b",
        "--pref-alpha",
        "3",
        "--out-dir",
        dir_str(&d),
    ]);
    let v: Value = serde_json::from_str(&fs::read_to_string(d.path().join("frontier.json")).unwrap()).unwrap();
    let m = &v["manifest"];
    let outputs = m["outputs"].as_array().unwrap();
    assert_eq!(outputs.len(), 3);
    for o in outputs {
        assert!(d.path().join(o.as_str().unwrap()).is_file());
    }
    assert_eq!(m["version"], env!("CARGO_PKG_VERSION"));
    assert!(m["grid"]["batch_values"].as_array().unwrap().len() > 1);

    let svg = fs::read_to_string(d.path().join("frontier.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    assert!(svg.contains("<polyline"));
    assert!(svg.contains("optimum at α = 3"));
}

#[test]
fn frontier_csv_columns_are_fixed() {
    let d = tempfile::tempdir().unwrap();
    ok(&["frontier", "--model", "llama3-8b", "--out-dir", dir_str(&d)]);
    let text = fs::read_to_string(d.path().join("frontier.csv")).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("tokens_per_second,usd_per_million_tokens,n_gpu,n_nodes,tp,pp,ep,batch,"));
    let rows = csv_rows(&d.path().join("frontier.csv"));
    assert!(!rows.is_empty());
    // Frontier: cost rises strictly with speed.
    for w in rows.windows(2) {
        assert!(num(&w[1], "tokens_per_second") > num(&w[0], "tokens_per_second"));
        assert!(num(&w[1], "usd_per_million_tokens") > num(&w[0], "usd_per_million_tokens"));
    }
}

#[test]
fn demand_cap_is_respected() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "frontier",
        "--model",
        "llama3-70b",
        "--demand",
        "1000",
        "--out-dir",
        dir_str(&d),
    ]);
    let rows = csv_rows(&d.path().join("frontier.csv"));
    assert!(!rows.is_empty());
    for r in &rows {
        assert!(num(r, "tokens_per_second") * num(r, "batch") <= 1000.0);
    }
    assert!(rows.iter().all(|r| num(r, "batch") < 64.0));

    // One request alone already outpaces 10 tokens/s.
    let out = infereco(&[
        "frontier",
        "--model",
        "llama3-70b",
        "--demand",
        "10",
        "--out-dir",
        dir_str(&d),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn empty_feasible_set_exits_3() {
    let d = tempfile::tempdir().unwrap();
    let out = infereco(&[
        "frontier",
        "--model",
        "llama3.1-405b",
        "--n-gpu-values",
        "1,2",
        "--batch-values",
        "1",
        "--out-dir",
        dir_str(&d),
    ]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn long_context_rows_respect_the_kv_floor() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "frontier",
        "--model",
        "mistral-large-2",
        "--context",
        "100000",
        "--out-dir",
        dir_str(&d),
    ]);
    let model = catalog::model_preset("mistral-large-2").unwrap();
    let acc = catalog::accelerator_preset("h100-sxm").unwrap();
    let floor = kv_read_cost_floor(&model, &acc, 100_000.0);
    for r in csv_rows(&d.path().join("frontier.csv")) {
        assert!(num(&r, "usd_per_million_tokens") >= floor);
    }
}

#[test]
fn compare_gpus_orders_generations_and_notes_fallback() {
    let d = tempfile::tempdir().unwrap();
    ok(&[
        "compare-gpus",
        "--model",
        "llama3-70b",
        "--weight-bits",
        "8",
        "--gpu",
        "h100-sxm,a100-sxm,v100-sxm",
        "--out-dir",
        dir_str(&d),
    ]);
    let v: Value = serde_json::from_str(&fs::read_to_string(d.path().join("compare.json")).unwrap()).unwrap();
    let fastest: Vec<f64> = v["frontiers"]
        .as_array()
        .unwrap()
        .iter()
        .map(|f| f["fastest"]["tokens_per_second"].as_f64().unwrap())
        .collect();
    assert_eq!(fastest.len(), 3);
    assert!(fastest[0] > fastest[1] && fastest[1] > fastest[2], "{fastest:?}");
    let notes = v["manifest"]["notes"].to_string();
    assert!(notes.contains("v100-sxm has no 8-bit tensor rate"), "{notes}");
    let svg = fs::read_to_string(d.path().join("compare.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 3);
}

#[test]
fn compare_with_one_gpu_matches_frontier() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&[
        "frontier",
        "--model",
        "llama3-70b",
        "--gpu",
        "a100-sxm",
        "--out-dir",
        dir_str(&a),
    ]);
    ok(&[
        "compare-gpus",
        "--model",
        "llama3-70b",
        "--gpu",
        "a100-sxm",
        "--out-dir",
        dir_str(&b),
    ]);
    assert_eq!(
        fs::read(a.path().join("frontier.csv")).unwrap(),
        fs::read(b.path().join("compare.csv")).unwrap()
    );
    assert_eq!(
        fs::read(a.path().join("frontier.svg")).unwrap(),
        fs::read(b.path().join("compare.svg")).unwrap()
    );
}

#[test]
fn spec_files_and_preset_dir_resolve() {
    let d = tempfile::tempdir().unwrap();
    let mut model = catalog::model_preset("llama3-8b").unwrap();
    model.name = "my-model".into();
    let doc = catalog::to_document(&Spec::Model(model));
    let path = d.path().join("my-model.json");
    fs::write(&path, &doc).unwrap();
    let digest = hex::encode(Sha256::digest(doc.as_bytes()));

    let v = json(&["analyze", "--model", path.to_str().unwrap(), "--json"]);
    let input = &v["manifest"]["inputs"][0];
    assert_eq!(input["origin"], path.to_str().unwrap());
    assert_eq!(input["sha256"], digest.as_str());

    let out = Command::new(env!("CARGO_BIN_EXE_infereco"))
        .args(["analyze", "--model", "my-model", "--json"])
        .env("INFERECO_PRESET_DIR", d.path())
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["manifest"]["inputs"][0]["sha256"], digest.as_str());

    fs::write(&path, doc.replace("\"n_layers\": 32", "\"n_layers\": 0")).unwrap();
    let out = infereco(&["analyze", "--model", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn specdec_estimates_alpha_from_records() {
    let d = tempfile::tempdir().unwrap();
    let records = d.path().join("records.jsonl");
    fs::write(
        &records,
        "{\"p\": 0.25, \"q\": 0.25}\n{\"p\": 0.9, \"q\": 0.9}\n\n{\"p\": 1.0, \"q\": 1.0}\n",
    )
    .unwrap();
    let v = json(&[
        "specdec",
        "--target",
        "llama3-70b",
        "--draft",
        "llama3-8b",
        "--records",
        records.to_str().unwrap(),
        "--json",
    ]);
    assert_eq!(v["alpha"].as_f64().unwrap(), 1.0);
    assert_eq!(v["estimate"]["samples"], 3);
    assert_eq!(v["manifest"]["inputs"][3]["role"], "records");

    let text = ok(&[
        "specdec",
        "--target",
        "llama3-70b",
        "--draft",
        "llama3-8b",
        "--records",
        records.to_str().unwrap(),
    ]);
    assert!(text.contains("alpha = 1.0000"), "{text}");
}

#[test]
fn specdec_rejects_bad_alpha_and_records() {
    for alpha in ["0", "1", "-0.5", "1.5"] {
        let out = infereco(&[
            "specdec",
            "--target",
            "llama3-70b",
            "--draft",
            "llama3-8b",
            "--alpha",
            alpha,
        ]);
        assert_eq!(out.status.code(), Some(2), "alpha {alpha}");
    }
    let d = tempfile::tempdir().unwrap();
    let missing = d.path().join("missing.jsonl");
    let out = infereco(&[
        "specdec",
        "--target",
        "llama3-70b",
        "--draft",
        "llama3-8b",
        "--records",
        missing.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));

    let empty = d.path().join("empty.jsonl");
    fs::write(&empty, "\n\n").unwrap();
    let out = infereco(&[
        "specdec",
        "--target",
        "llama3-70b",
        "--draft",
        "llama3-8b",
        "--records",
        empty.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn specdec_speeds_up_the_large_target() {
    let d = tempfile::tempdir().unwrap();
    let v = json(&[
        "specdec",
        "--target",
        "llama3-70b",
        "--draft",
        "llama3-8b",
        "--alpha",
        "0.8",
        "--out-dir",
        dir_str(&d),
        "--json",
    ]);
    let c = &v["comparison"];
    let speed = |k: &str| c[k]["tokens_per_second"].as_f64().unwrap();
    assert!(speed("fastest_speculative") > speed("fastest_plain"));
    assert!(c["gamma_at_fastest"].as_u64().unwrap() > 1);
    assert!(c["throughput_ratio_median"].as_f64().unwrap() > 1.0);
    assert!(d.path().join("specdec.json").is_file());
}

#[test]
fn shipped_moe_template_loads() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/custom-moe-template.json");
    let model = catalog::load_model(&path).unwrap();
    assert!(!model.is_dense());
    let v = json(&[
        "analyze",
        "--model",
        path.to_str().unwrap(),
        "--n-gpu",
        "64",
        "--batch",
        "64",
        "--json",
    ]);
    assert!(v["plan"]["ep"].as_u64().unwrap() > 1);
}
