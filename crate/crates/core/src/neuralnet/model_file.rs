//! Versioned JSON model documents.
//!
//! ```json
//! {
//!   "format": "produce-grading-model",
//!   "version": 1,
//!   "structure": { "input_size": 768, "hidden_layers": [64], ... },
//!   "layers": [ { "inputs": 768, "outputs": 64, "weights": [...], "biases": [...] }, ... ],
//!   "jump": null,
//!   "metadata": { ... }
//! }
//! ```
//!
//! Weights are flat, input-major arrays. Numbers are written in the
//! shortest form that parses back to the same `f64`.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Block, Network, NetworkStructure, Params};
use crate::error::{Error, Result};
use crate::fsutil::{read_to_string, write_atomic};

pub const MODEL_FORMAT: &str = "produce-grading-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub structure: NetworkStructure,
    pub layers: Vec<Block>,
    pub jump: Option<Block>,
    /// Free-form provenance: task, effective configuration, scores.
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl ModelFile {
    pub fn new(net: &Network, metadata: serde_json::Value) -> Self {
        Self {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            structure: net.structure.clone(),
            layers: net.params.layers.clone(),
            jump: net.params.jump.clone(),
            metadata,
        }
    }

    pub fn into_network(self) -> Result<Network> {
        if self.format != MODEL_FORMAT {
            return Err(Error::Model(format!("unexpected format `{}`", self.format)));
        }
        if self.version != MODEL_VERSION {
            return Err(Error::Model(format!("unsupported version {}", self.version)));
        }
        Network::from_params(
            self.structure,
            Params {
                layers: self.layers,
                jump: self.jump,
            },
        )
    }
}

pub fn model_to_json(net: &Network, metadata: serde_json::Value) -> Result<String> {
    if !net.is_finite() {
        return Err(Error::Model("cannot serialize non-finite weights".into()));
    }
    let mut text = serde_json::to_string_pretty(&ModelFile::new(net, metadata))
        .map_err(|e| Error::Model(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Parses a model document, returning the network and its metadata.
pub fn model_from_json(text: &str) -> Result<(Network, serde_json::Value)> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Model(e.to_string()))?;
    let metadata = file.metadata.clone();
    Ok((file.into_network()?, metadata))
}

pub fn save_model(path: &Path, net: &Network, metadata: serde_json::Value) -> Result<()> {
    write_atomic(path, model_to_json(net, metadata)?.as_bytes())
}

pub fn load_model(path: &Path) -> Result<(Network, serde_json::Value)> {
    model_from_json(&read_to_string(path)?)
}
