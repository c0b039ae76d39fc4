//! Hardware and model specifications.
//!
//! Specs live in versioned JSON files whose field names carry their units
//! (`_bytes`, `_bytes_per_s`, `_s`, `_usd`). A file wraps exactly one spec:
//!
//! ```json
//! { "schema_version": 1, "kind": "accelerator", "accelerator": { ... } }
//! { "schema_version": 1, "kind": "model", "model": { ... } }
//! ```
//!
//! Model files may omit the parameter decomposition; it is then derived from
//! the layer dimensions. Built-in presets are compiled into the binary and
//! can be shadowed by files in a preset directory.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

// ============================================================================
// Accelerators
// ============================================================================

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcceleratorSpec {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    /// Dense tensor-core throughput keyed by operand precision in bits.
    #[serde(rename = "peak_flop_per_s")]
    pub peak_flops: BTreeMap<u32, f64>,
    pub flop_efficiency: f64,
    #[serde(rename = "hbm_capacity_bytes")]
    pub hbm_capacity: f64,
    #[serde(rename = "hbm_bandwidth_bytes_per_s")]
    pub hbm_bandwidth: f64,
    pub hbm_efficiency: f64,
    /// Per-device read bandwidth inside a node (half the bidirectional figure).
    #[serde(rename = "intra_node_bandwidth_bytes_per_s")]
    pub intra_node_bandwidth: f64,
    #[serde(rename = "inter_node_bandwidth_bytes_per_s")]
    pub inter_node_bandwidth: f64,
    /// Divisor applied to intra-node bandwidth under low-latency collectives.
    pub ll_protocol_bandwidth_factor: f64,
    pub node_size: u32,
    #[serde(rename = "kernel_launch_latency_s")]
    pub kernel_launch_latency: f64,
    #[serde(rename = "collective_base_latency_s")]
    pub collective_base_latency: f64,
    #[serde(rename = "per_rank_latency_s")]
    pub per_rank_latency: f64,
    #[serde(rename = "per_tree_step_latency_s")]
    pub per_tree_step_latency: f64,
    #[serde(rename = "hourly_price_usd")]
    pub hourly_price: f64,
}

/// Arithmetic precision chosen for a given weight precision.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ComputePrecision {
    pub bits: u32,
    /// True when the accelerator lacks a tensor-core rate at the weight
    /// precision and a wider format is used instead.
    pub fallback: bool,
}

impl AcceleratorSpec {
    pub fn validate(&self) -> Result<()> {
        let spec = format!("accelerator {:?}", self.name);
        let err = |reason: String| Error::validation(&spec, reason);
        if self.name.is_empty() {
            return Err(err("name is empty".into()));
        }
        if self.peak_flops.is_empty() {
            return Err(err("peak_flop_per_s has no entries".into()));
        }
        for (&bits, &rate) in &self.peak_flops {
            if bits == 0 {
                return Err(err("peak_flop_per_s has a 0-bit entry".into()));
            }
            positive(rate, &format!("peak_flop_per_s[{bits}]")).map_err(err)?;
        }
        for (value, field) in [
            (self.flop_efficiency, "flop_efficiency"),
            (self.hbm_efficiency, "hbm_efficiency"),
        ] {
            if !(value > 0.0 && value <= 1.0) {
                return Err(err(format!("efficiency out of range: {field} = {value}")));
            }
        }
        for (value, field) in [
            (self.hbm_capacity, "hbm_capacity_bytes"),
            (self.hbm_bandwidth, "hbm_bandwidth_bytes_per_s"),
            (self.intra_node_bandwidth, "intra_node_bandwidth_bytes_per_s"),
            (self.inter_node_bandwidth, "inter_node_bandwidth_bytes_per_s"),
            (self.ll_protocol_bandwidth_factor, "ll_protocol_bandwidth_factor"),
            (self.kernel_launch_latency, "kernel_launch_latency_s"),
            (self.collective_base_latency, "collective_base_latency_s"),
            (self.per_rank_latency, "per_rank_latency_s"),
            (self.per_tree_step_latency, "per_tree_step_latency_s"),
            (self.hourly_price, "hourly_price_usd"),
        ] {
            positive(value, field).map_err(err)?;
        }
        if self.node_size == 0 {
            return Err(err("node_size must be at least 1".into()));
        }
        Ok(())
    }

    /// Raw peak FLOP/s at exactly `bits`.
    pub fn peak_flops_at(&self, bits: u32) -> Result<f64> {
        self.peak_flops
            .get(&bits)
            .copied()
            .ok_or_else(|| Error::MissingPrecision {
                accelerator: self.name.clone(),
                bits,
            })
    }

    /// Picks the arithmetic format for weights stored at `weight_bits`: the
    /// exact format when supported, otherwise the narrowest wider one.
    pub fn compute_precision(&self, weight_bits: u32) -> Result<ComputePrecision> {
        if self.peak_flops.contains_key(&weight_bits) {
            return Ok(ComputePrecision {
                bits: weight_bits,
                fallback: false,
            });
        }
        self.peak_flops
            .range(weight_bits..)
            .next()
            .map(|(&bits, _)| ComputePrecision { bits, fallback: true })
            .ok_or_else(|| Error::MissingPrecision {
                accelerator: self.name.clone(),
                bits: weight_bits,
            })
    }

    pub fn sustained_flops(&self, bits: u32) -> Result<f64> {
        Ok(self.peak_flops_at(bits)? * self.flop_efficiency)
    }

    pub fn sustained_hbm_bandwidth(&self) -> f64 {
        self.hbm_bandwidth * self.hbm_efficiency
    }

    /// Intra-node read bandwidth available to low-latency collectives.
    pub fn ll_intra_node_bandwidth(&self) -> f64 {
        self.intra_node_bandwidth / self.ll_protocol_bandwidth_factor
    }

    pub fn price_per_second(&self) -> f64 {
        self.hourly_price / 3600.0
    }

    /// Same device with every efficiency factor set to 1.
    pub fn raw(&self) -> AcceleratorSpec {
        AcceleratorSpec {
            flop_efficiency: 1.0,
            hbm_efficiency: 1.0,
            ..self.clone()
        }
    }
}

// ============================================================================
// Models
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionVariant {
    Standard,
    Mla,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelArchitecture {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<String>,
    pub n_layers: u32,
    pub d_model: u32,
    pub n_head: u32,
    pub d_head: u32,
    /// Query heads per key/value head; `n_head` means multi-query attention.
    pub attention_group_size: u32,
    pub attention_variant: AttentionVariant,
    #[serde(default)]
    pub d_latent: u32,
    pub d_ff: u32,
    /// 2 for a plain activation, 3 for gated activations such as SwiGLU.
    pub ff_matrix_count: u32,
    #[serde(default)]
    pub parallel_attention: bool,
    pub n_expert: u32,
    pub n_active_expert: u32,
    pub vocab_size: u32,
    #[serde(default)]
    pub tied_embeddings: bool,
    pub n_attention_params: f64,
    pub n_feedforward_params: f64,
    pub n_unembedding_params: f64,
    /// Input embedding table; zero when tied to the unembedding.
    pub n_embedding_params: f64,
    pub weight_bits: u32,
    pub activation_bits: u32,
}

/// On-disk model record; the parameter decomposition is optional.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelRecord {
    name: String,
    #[serde(default)]
    source: Option<String>,
    n_layers: u32,
    d_model: u32,
    n_head: u32,
    d_head: u32,
    attention_group_size: u32,
    attention_variant: AttentionVariant,
    #[serde(default)]
    d_latent: u32,
    d_ff: u32,
    ff_matrix_count: u32,
    #[serde(default)]
    parallel_attention: bool,
    n_expert: u32,
    n_active_expert: u32,
    vocab_size: u32,
    #[serde(default)]
    tied_embeddings: bool,
    #[serde(default)]
    n_attention_params: Option<f64>,
    #[serde(default)]
    n_feedforward_params: Option<f64>,
    #[serde(default)]
    n_unembedding_params: Option<f64>,
    #[serde(default)]
    n_embedding_params: Option<f64>,
    weight_bits: u32,
    activation_bits: u32,
}

impl ModelRecord {
    fn into_model(self) -> ModelArchitecture {
        let mut model = ModelArchitecture {
            name: self.name,
            source: self.source,
            n_layers: self.n_layers,
            d_model: self.d_model,
            n_head: self.n_head,
            d_head: self.d_head,
            attention_group_size: self.attention_group_size,
            attention_variant: self.attention_variant,
            d_latent: self.d_latent,
            d_ff: self.d_ff,
            ff_matrix_count: self.ff_matrix_count,
            parallel_attention: self.parallel_attention,
            n_expert: self.n_expert,
            n_active_expert: self.n_active_expert,
            vocab_size: self.vocab_size,
            tied_embeddings: self.tied_embeddings,
            n_attention_params: 0.0,
            n_feedforward_params: 0.0,
            n_unembedding_params: 0.0,
            n_embedding_params: 0.0,
            weight_bits: self.weight_bits,
            activation_bits: self.activation_bits,
        };
        model.n_attention_params = self
            .n_attention_params
            .unwrap_or_else(|| model.derived_attention_params());
        model.n_feedforward_params = self
            .n_feedforward_params
            .unwrap_or_else(|| model.derived_feedforward_params());
        model.n_unembedding_params = self
            .n_unembedding_params
            .unwrap_or_else(|| model.derived_unembedding_params());
        model.n_embedding_params = self
            .n_embedding_params
            .unwrap_or_else(|| model.derived_embedding_params());
        model
    }
}

impl ModelArchitecture {
    pub fn validate(&self) -> Result<()> {
        let spec = format!("model {:?}", self.name);
        let err = |reason: String| Error::validation(&spec, reason);
        if self.name.is_empty() {
            return Err(err("name is empty".into()));
        }
        for (value, field) in [
            (self.n_layers, "n_layers"),
            (self.d_model, "d_model"),
            (self.n_head, "n_head"),
            (self.d_head, "d_head"),
            (self.attention_group_size, "attention_group_size"),
            (self.ff_matrix_count, "ff_matrix_count"),
            (self.n_expert, "n_expert"),
            (self.n_active_expert, "n_active_expert"),
            (self.weight_bits, "weight_bits"),
            (self.activation_bits, "activation_bits"),
        ] {
            if value == 0 {
                return Err(err(format!("{field} must be at least 1")));
            }
        }
        if self.n_active_expert > self.n_expert {
            return Err(err(format!(
                "n_active_expert ({}) exceeds n_expert ({})",
                self.n_active_expert, self.n_expert
            )));
        }
        if !self.n_head.is_multiple_of(self.attention_group_size) {
            return Err(err(format!(
                "attention_group_size {} does not divide n_head {}",
                self.attention_group_size, self.n_head
            )));
        }
        if self.attention_variant == AttentionVariant::Mla && self.d_latent == 0 {
            return Err(err("latent attention requires d_latent > 0".into()));
        }
        for (value, field) in [
            (self.n_attention_params, "n_attention_params"),
            (self.n_feedforward_params, "n_feedforward_params"),
            (self.n_unembedding_params, "n_unembedding_params"),
            (self.n_embedding_params, "n_embedding_params"),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(err(format!("{field} must be finite and >= 0, got {value}")));
            }
        }
        if self.total_params() <= 0.0 {
            return Err(err("model has no parameters".into()));
        }
        Ok(())
    }

    /// Sparsity factor `n_expert / n_active_expert`; 1 for dense models.
    pub fn sparsity(&self) -> f64 {
        f64::from(self.n_expert) / f64::from(self.n_active_expert)
    }

    pub fn is_dense(&self) -> bool {
        self.n_expert == self.n_active_expert
    }

    /// Distinct key/value heads.
    pub fn n_kv_head(&self) -> u32 {
        self.n_head / self.attention_group_size
    }

    pub fn total_params(&self) -> f64 {
        self.n_attention_params + self.n_feedforward_params + self.n_unembedding_params + self.n_embedding_params
    }

    pub fn weight_bytes_per_param(&self) -> f64 {
        f64::from(self.weight_bits) / 8.0
    }

    pub fn activation_bytes(&self) -> f64 {
        f64::from(self.activation_bits) / 8.0
    }

    /// Bytes needed to hold every weight.
    pub fn weight_footprint(&self) -> f64 {
        self.total_params() * self.weight_bytes_per_param()
    }

    /// Default number of sequential all-reduces per layer.
    pub fn n_reduce(&self) -> u32 {
        if self.parallel_attention {
            2
        } else {
            4
        }
    }

    /// Copy with overridden storage precisions.
    pub fn with_precisions(&self, weight_bits: Option<u32>, activation_bits: Option<u32>) -> Self {
        ModelArchitecture {
            weight_bits: weight_bits.unwrap_or(self.weight_bits),
            activation_bits: activation_bits.unwrap_or(self.activation_bits),
            ..self.clone()
        }
    }

    fn derived_attention_params(&self) -> f64 {
        let d_model = f64::from(self.d_model);
        let q_width = f64::from(self.n_head) * f64::from(self.d_head);
        let per_layer = match self.attention_variant {
            AttentionVariant::Standard => {
                let kv_width = f64::from(self.n_kv_head()) * f64::from(self.d_head);
                // Q and output projections, plus K and V.
                2.0 * d_model * q_width + 2.0 * d_model * kv_width
            }
            AttentionVariant::Mla => {
                let latent = f64::from(self.d_latent);
                // Q, output, latent down-projection, K/V up-projections.
                2.0 * d_model * q_width + d_model * latent + latent * 2.0 * q_width
            }
        };
        per_layer * f64::from(self.n_layers)
    }

    fn derived_feedforward_params(&self) -> f64 {
        f64::from(self.ff_matrix_count)
            * f64::from(self.d_model)
            * f64::from(self.d_ff)
            * f64::from(self.n_expert)
            * f64::from(self.n_layers)
    }

    fn derived_unembedding_params(&self) -> f64 {
        f64::from(self.vocab_size) * f64::from(self.d_model)
    }

    fn derived_embedding_params(&self) -> f64 {
        if self.tied_embeddings {
            0.0
        } else {
            f64::from(self.vocab_size) * f64::from(self.d_model)
        }
    }
}

fn positive(value: f64, field: &str) -> std::result::Result<(), String> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(format!("{field} must be positive and finite, got {value}"))
    }
}

// ============================================================================
// Files
// ============================================================================

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecKind {
    Accelerator,
    Model,
}

impl SpecKind {
    fn as_str(self) -> &'static str {
        match self {
            SpecKind::Accelerator => "accelerator",
            SpecKind::Model => "model",
        }
    }
}

impl fmt::Display for SpecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Spec {
    Accelerator(AcceleratorSpec),
    Model(ModelArchitecture),
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Envelope {
    schema_version: u32,
    kind: String,
    #[serde(default)]
    accelerator: Option<AcceleratorSpec>,
    #[serde(default)]
    model: Option<ModelRecord>,
}

#[derive(Serialize)]
struct EnvelopeOut<'a> {
    schema_version: u32,
    kind: &'static str,
    #[serde(skip_serializing_if = "Option::is_none")]
    accelerator: Option<&'a AcceleratorSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    model: Option<&'a ModelArchitecture>,
}

/// Parses and validates a spec document of the expected kind.
pub fn parse_spec(text: &str, what: &str, kind: SpecKind) -> Result<Spec> {
    let envelope: Envelope = serde_json::from_str(text).map_err(|source| Error::Parse {
        what: what.to_string(),
        source,
    })?;
    if envelope.schema_version != SCHEMA_VERSION {
        return Err(Error::SchemaVersion {
            found: envelope.schema_version,
            supported: SCHEMA_VERSION,
        });
    }
    if envelope.kind != kind.as_str() {
        return Err(Error::WrongKind {
            kind: "spec",
            found: envelope.kind,
            expected: kind.as_str(),
        });
    }
    let missing = || Error::validation(what, format!("missing \"{kind}\" object"));
    match kind {
        SpecKind::Accelerator => {
            let acc = envelope.accelerator.ok_or_else(missing)?;
            acc.validate()?;
            Ok(Spec::Accelerator(acc))
        }
        SpecKind::Model => {
            let model = envelope.model.ok_or_else(missing)?.into_model();
            model.validate()?;
            Ok(Spec::Model(model))
        }
    }
}

pub fn load_spec(path: &Path, kind: SpecKind) -> Result<Spec> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_spec(&text, &path.display().to_string(), kind)
}

pub fn load_accelerator(path: &Path) -> Result<AcceleratorSpec> {
    match load_spec(path, SpecKind::Accelerator)? {
        Spec::Accelerator(acc) => Ok(acc),
        Spec::Model(_) => unreachable!("parse_spec checks the kind"),
    }
}

pub fn load_model(path: &Path) -> Result<ModelArchitecture> {
    match load_spec(path, SpecKind::Model)? {
        Spec::Model(model) => Ok(model),
        Spec::Accelerator(_) => unreachable!("parse_spec checks the kind"),
    }
}

/// Serializes a spec into its file form (pretty JSON, trailing newline).
pub fn to_document(spec: &Spec) -> String {
    let out = match spec {
        Spec::Accelerator(acc) => EnvelopeOut {
            schema_version: SCHEMA_VERSION,
            kind: "accelerator",
            accelerator: Some(acc),
            model: None,
        },
        Spec::Model(model) => EnvelopeOut {
            schema_version: SCHEMA_VERSION,
            kind: "model",
            accelerator: None,
            model: Some(model),
        },
    };
    let mut text = serde_json::to_string_pretty(&out).expect("specs always serialize");
    text.push('\n');
    text
}

// ============================================================================
// Presets
// ============================================================================

const ACCELERATOR_PRESETS: &[(&str, &str)] = &[
    ("h100-sxm", include_str!("../presets/accelerators/h100-sxm.json")),
    ("a100-sxm", include_str!("../presets/accelerators/a100-sxm.json")),
    ("v100-sxm", include_str!("../presets/accelerators/v100-sxm.json")),
];

const MODEL_PRESETS: &[(&str, &str)] = &[
    ("llama3-8b", include_str!("../presets/models/llama3-8b.json")),
    ("llama3-70b", include_str!("../presets/models/llama3-70b.json")),
    ("llama3.1-405b", include_str!("../presets/models/llama3.1-405b.json")),
    ("mixtral-8x22b", include_str!("../presets/models/mixtral-8x22b.json")),
    (
        "mistral-large-2",
        include_str!("../presets/models/mistral-large-2.json"),
    ),
    ("deepseek-v3", include_str!("../presets/models/deepseek-v3.json")),
    ("gpt3", include_str!("../presets/models/gpt3.json")),
    ("palm-540b", include_str!("../presets/models/palm-540b.json")),
    ("palm-62b", include_str!("../presets/models/palm-62b.json")),
    ("palm-8b", include_str!("../presets/models/palm-8b.json")),
];

pub fn accelerator_preset_names() -> impl Iterator<Item = &'static str> {
    ACCELERATOR_PRESETS.iter().map(|(name, _)| *name)
}

pub fn model_preset_names() -> impl Iterator<Item = &'static str> {
    MODEL_PRESETS.iter().map(|(name, _)| *name)
}

pub fn accelerator_preset(name: &str) -> Result<AcceleratorSpec> {
    let (_, text) = ACCELERATOR_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    match parse_spec(text, name, SpecKind::Accelerator)? {
        Spec::Accelerator(acc) => Ok(acc),
        Spec::Model(_) => unreachable!(),
    }
}

pub fn model_preset(name: &str) -> Result<ModelArchitecture> {
    let (_, text) = MODEL_PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::UnknownPreset(name.to_string()))?;
    match parse_spec(text, name, SpecKind::Model)? {
        Spec::Model(model) => Ok(model),
        Spec::Accelerator(_) => unreachable!(),
    }
}

/// Looks a name up in both preset tables.
pub fn preset(name: &str) -> Result<Spec> {
    if let Ok(acc) = accelerator_preset(name) {
        return Ok(Spec::Accelerator(acc));
    }
    model_preset(name).map(Spec::Model)
}

/// Resolves a `--gpu`/`--model` style argument: an existing file path, then
/// `<preset_dir>/<arg>.json`, then a built-in preset.
pub fn resolve(arg: &str, kind: SpecKind, preset_dir: Option<&Path>) -> Result<Spec> {
    let path = Path::new(arg);
    if path.is_file() {
        return load_spec(path, kind);
    }
    if let Some(dir) = preset_dir {
        let candidate = dir.join(format!("{arg}.json"));
        if candidate.is_file() {
            return load_spec(&candidate, kind);
        }
    }
    match kind {
        SpecKind::Accelerator => accelerator_preset(arg).map(Spec::Accelerator),
        SpecKind::Model => model_preset(arg).map(Spec::Model),
    }
}

pub fn resolve_accelerator(arg: &str, preset_dir: Option<&Path>) -> Result<AcceleratorSpec> {
    match resolve(arg, SpecKind::Accelerator, preset_dir)? {
        Spec::Accelerator(acc) => Ok(acc),
        Spec::Model(_) => unreachable!(),
    }
}

pub fn resolve_model(arg: &str, preset_dir: Option<&Path>) -> Result<ModelArchitecture> {
    match resolve(arg, SpecKind::Model, preset_dir)? {
        Spec::Model(model) => Ok(model),
        Spec::Accelerator(_) => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn h100_preset_matches_published_figures() {
        let acc = accelerator_preset("h100-sxm").unwrap();
        assert_eq!(acc.hbm_bandwidth, 3.3e12);
        assert_eq!(acc.hbm_capacity, 80e9);
        assert_eq!(acc.flop_efficiency, 0.70);
        assert_eq!(acc.hbm_efficiency, 0.75);
        assert_eq!(acc.intra_node_bandwidth, 450e9);
        assert_eq!(acc.inter_node_bandwidth, 50e9);
        assert_eq!(acc.node_size, 8);
        assert_eq!(acc.kernel_launch_latency, 4e-6);
        assert_eq!(acc.collective_base_latency, 6.8e-6);
        assert_eq!(acc.per_rank_latency, 1.2e-6);
        assert_eq!(acc.per_tree_step_latency, 10e-6);
        assert_eq!(acc.peak_flops_at(16).unwrap(), 1e15);
        assert_eq!(acc.peak_flops_at(8).unwrap(), 2e15);
    }

    #[test]
    fn rental_prices() {
        let prices: Vec<f64> = ["h100-sxm", "a100-sxm", "v100-sxm"]
            .iter()
            .map(|n| accelerator_preset(n).unwrap().hourly_price)
            .collect();
        assert_eq!(prices, vec![2.1, 1.5, 0.42]);
    }

    #[test]
    fn every_preset_validates_and_round_trips() {
        for name in accelerator_preset_names().chain(model_preset_names()) {
            let spec = preset(name).unwrap();
            let kind = match spec {
                Spec::Accelerator(_) => SpecKind::Accelerator,
                Spec::Model(_) => SpecKind::Model,
            };
            let doc = to_document(&spec);
            let again = parse_spec(&doc, name, kind).unwrap();
            assert_eq!(spec, again, "{name} did not round-trip");
        }
    }

    #[test]
    fn mistral_large_2_kv_layout() {
        let m = model_preset("mistral-large-2").unwrap();
        assert!(m.is_dense());
        assert_eq!(m.n_kv_head(), 8);
        assert_eq!(m.attention_group_size, 12);
        let total = m.total_params();
        assert!((total / 123e9 - 1.0).abs() < 0.01, "{total}");
    }

    #[test]
    fn deepseek_v3_uses_latent_attention() {
        let m = model_preset("deepseek-v3").unwrap();
        assert_eq!(m.attention_variant, AttentionVariant::Mla);
        assert_eq!(m.d_head, 128);
        assert_eq!(m.d_latent, 512);
        assert!((m.total_params() / 671e9 - 1.0).abs() < 0.01);
    }

    #[test]
    fn mixtral_sparsity_and_active_params() {
        let m = model_preset("mixtral-8x22b").unwrap();
        assert_eq!((m.n_expert, m.n_active_expert), (8, 2));
        assert_eq!(m.sparsity(), 4.0);
        // Published card: 141B total, 39B active.
        assert!((m.total_params() / 141e9 - 1.0).abs() < 0.01);
        let shared = m.n_attention_params + m.n_unembedding_params + m.n_embedding_params;
        let active = shared + m.n_feedforward_params / m.sparsity();
        assert!((active / 39e9 - 1.0).abs() < 0.02, "{active}");
    }

    #[test]
    fn llama_totals_match_cards() {
        for (name, total) in [
            ("llama3-8b", 8.03e9),
            ("llama3-70b", 70.55e9),
            ("llama3.1-405b", 405.85e9),
            ("gpt3", 174.6e9),
            ("palm-540b", 540.35e9),
        ] {
            let m = model_preset(name).unwrap();
            assert!(
                (m.total_params() / total - 1.0).abs() < 0.005,
                "{name}: {}",
                m.total_params()
            );
        }
    }

    #[test]
    fn dense_model_file_has_unit_sparsity() {
        let doc = r#"{
            "schema_version": 1, "kind": "model",
            "model": {
                "name": "tiny", "n_layers": 2, "d_model": 64, "n_head": 4, "d_head": 16,
                "attention_group_size": 2, "attention_variant": "standard",
                "d_ff": 256, "ff_matrix_count": 2, "n_expert": 1, "n_active_expert": 1,
                "vocab_size": 100, "weight_bits": 16, "activation_bits": 16
            }
        }"#;
        let Spec::Model(m) = parse_spec(doc, "tiny", SpecKind::Model).unwrap() else {
            panic!()
        };
        assert_eq!(m.sparsity(), 1.0);
        assert_eq!(m.n_kv_head(), 2);
        // Q, O: 64x64 each; K, V: 64x32 each.
        assert_eq!(m.n_attention_params, 2.0 * (2.0 * 64.0 * 64.0 + 2.0 * 64.0 * 32.0));
        assert_eq!(m.n_feedforward_params, 2.0 * 64.0 * 256.0 * 2.0);
        assert_eq!(m.n_embedding_params, 6400.0);
    }

    #[test]
    fn efficiency_out_of_range_is_rejected() {
        let mut acc = accelerator_preset("h100-sxm").unwrap();
        acc.hbm_efficiency = 1.3;
        let doc = to_document(&Spec::Accelerator(acc));
        let err = parse_spec(&doc, "bad", SpecKind::Accelerator).unwrap_err();
        assert!(err.to_string().contains("efficiency out of range"), "{err}");
    }

    #[test]
    fn malformed_and_mismatched_files() {
        assert!(matches!(
            parse_spec("{ not json", "x", SpecKind::Model),
            Err(Error::Parse { .. })
        ));
        let acc = to_document(&Spec::Accelerator(accelerator_preset("v100-sxm").unwrap()));
        assert!(matches!(
            parse_spec(&acc, "x", SpecKind::Model),
            Err(Error::WrongKind { .. })
        ));
        let future = acc.replace("\"schema_version\": 1", "\"schema_version\": 9");
        assert!(matches!(
            parse_spec(&future, "x", SpecKind::Accelerator),
            Err(Error::SchemaVersion { found: 9, .. })
        ));
    }

    #[test]
    fn invariant_violations() {
        let mut m = model_preset("llama3-8b").unwrap();
        m.n_active_expert = 2;
        assert!(m.validate().is_err());
        let mut m = model_preset("llama3-8b").unwrap();
        m.attention_group_size = 5;
        assert!(m.validate().is_err());
        let mut m = model_preset("deepseek-v3").unwrap();
        m.d_latent = 0;
        assert!(m.validate().is_err());
    }

    #[test]
    fn unknown_preset() {
        assert!(matches!(preset("tpu-v9"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn compute_precision_fallback() {
        let v100 = accelerator_preset("v100-sxm").unwrap();
        let p = v100.compute_precision(8).unwrap();
        assert_eq!(
            p,
            ComputePrecision {
                bits: 16,
                fallback: true
            }
        );
        let h100 = accelerator_preset("h100-sxm").unwrap();
        assert_eq!(h100.compute_precision(8).unwrap().bits, 8);
        assert_eq!(h100.compute_precision(4).unwrap().bits, 8);
        assert!(h100.compute_precision(32).is_err());
    }

    #[test]
    fn resolve_prefers_files() {
        let dir = std::env::temp_dir().join(format!("infereco-catalog-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let mut acc = accelerator_preset("h100-sxm").unwrap();
        acc.hourly_price = 2.0;
        std::fs::write(dir.join("h100-sxm.json"), to_document(&Spec::Accelerator(acc))).unwrap();
        let shadowed = resolve_accelerator("h100-sxm", Some(&dir)).unwrap();
        assert_eq!(shadowed.hourly_price, 2.0);
        let builtin = resolve_accelerator("h100-sxm", None).unwrap();
        assert_eq!(builtin.hourly_price, 2.1);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
