//! Run manifests: what went in, what came out.

use infereco::catalog::{self, Spec};
use infereco::{AcceleratorSpec, ModelArchitecture, SearchGrid};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// One resolved spec or data file. Spec hashes cover the canonical document
/// before any command-line overrides, so a preset and an identical file
/// hash the same.
#[derive(Debug, Clone, Serialize)]
pub struct InputRecord {
    pub role: String,
    pub name: String,
    /// `preset` or the path the spec was read from.
    pub origin: String,
    pub sha256: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight_bits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub activation_bits: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hourly_price_usd: Option<f64>,
}

impl InputRecord {
    pub fn for_spec(role: &str, name: &str, origin: String, spec: &Spec) -> Self {
        InputRecord {
            role: role.to_string(),
            name: name.to_string(),
            origin,
            sha256: sha256_hex(catalog::to_document(spec).as_bytes()),
            weight_bits: None,
            activation_bits: None,
            hourly_price_usd: None,
        }
    }

    pub fn for_file(role: &str, path: &str, bytes: &[u8]) -> Self {
        InputRecord {
            role: role.to_string(),
            name: path.to_string(),
            origin: path.to_string(),
            sha256: sha256_hex(bytes),
            weight_bits: None,
            activation_bits: None,
            hourly_price_usd: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SpeculationInputs {
    pub draft: String,
    pub alpha: f64,
    pub gamma_max: u32,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub inputs: Vec<InputRecord>,
    pub context_length: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub demand_cap: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid: Option<SearchGrid>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speculation: Option<SpeculationInputs>,
    /// File names relative to the manifest's own directory.
    pub outputs: Vec<String>,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, inputs: Vec<InputRecord>, context_length: f64) -> Self {
        RunManifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            context_length,
            demand_cap: None,
            grid: None,
            speculation: None,
            outputs: Vec::new(),
            notes: Vec::new(),
        }
    }

    /// Records a precision fallback when `acc` cannot run arithmetic at the
    /// model's weight precision.
    pub fn note_precision(&mut self, model: &ModelArchitecture, acc: &AcceleratorSpec) {
        if let Ok(p) = acc.compute_precision(model.weight_bits) {
            if p.fallback {
                self.notes.push(format!(
                    "{} has no {}-bit tensor rate: {} arithmetic runs at {}-bit with {}-bit weight reads",
                    acc.name, model.weight_bits, model.name, p.bits, model.weight_bits
                ));
            }
        }
    }
}
