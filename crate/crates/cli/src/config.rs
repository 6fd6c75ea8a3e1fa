//! Run configuration: one TOML document, every field overridable from the
//! command line.

use std::path::Path;

use anyhow::{bail, Context, Result};
use grading_core::achem::{EvaluationSettings, SearchConfig};
use grading_core::datasets::{SplitCounts, SplitSpec, SynthConfig};
use grading_core::imaging::EdgeParams;
use grading_core::neuralnet::{ActivationKind, NetworkStructure, TrainingParams};
use grading_core::seed::derive_seed;
use grading_core::Task;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub task: Task,
    /// Base seed. Split, initialization, shuffling, search and synthesis
    /// seeds are derived from it unless pinned under `seeds`.
    pub seed: u64,
    pub edge: EdgeParams,
    pub split: SplitSettings,
    pub network: NetworkSettings,
    pub training: TrainingSettings,
    pub search: SearchSettings,
    pub synth: SynthSettings,
    pub seeds: SeedOverrides,
}

/// Explicit per-stage seeds; unset ones are derived from the base seed.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeedOverrides {
    pub split: Option<u64>,
    pub init: Option<u64>,
    pub shuffle: Option<u64>,
    pub search: Option<u64>,
    pub synth: Option<u64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            task: Task::Tomato,
            seed: 0,
            edge: EdgeParams::default(),
            split: SplitSettings::default(),
            network: NetworkSettings::default(),
            training: TrainingSettings::default(),
            search: SearchSettings::default(),
            synth: SynthSettings::default(),
            seeds: SeedOverrides::default(),
        }
    }
}

/// Per-class counts. Unset counts fall back to the task's standard split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSettings {
    pub train: Option<usize>,
    pub test: Option<usize>,
    pub validation: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkSettings {
    pub hidden_layers: Vec<usize>,
    pub jump: bool,
    pub activation: ActivationKind,
}

impl Default for NetworkSettings {
    fn default() -> Self {
        Self {
            hidden_layers: vec![64],
            jump: false,
            activation: ActivationKind::Sigmoid,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSettings {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for TrainingSettings {
    fn default() -> Self {
        let p = TrainingParams::default();
        Self {
            learning_rate: p.learning_rate,
            momentum: p.momentum,
            max_epochs: p.max_epochs,
            patience: p.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchSettings {
    pub bounds: grading_core::achem::SearchBounds,
    pub capacity: usize,
    pub max_cycles: usize,
    pub consensus_threshold: f64,
    pub reaction_rate: f64,
    pub collision_rate: f64,
    pub blend_probability: f64,
    pub mutation_sigma: f64,
    /// Epoch budget for each candidate's training run.
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for SearchSettings {
    fn default() -> Self {
        let c = SearchConfig::default();
        let e = EvaluationSettings::default();
        Self {
            bounds: c.bounds,
            capacity: c.capacity,
            max_cycles: c.max_cycles,
            consensus_threshold: c.consensus_threshold,
            reaction_rate: c.reaction_rate,
            collision_rate: c.collision_rate,
            blend_probability: c.blend_probability,
            mutation_sigma: c.mutation_sigma,
            max_epochs: e.max_epochs,
            patience: e.patience,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSettings {
    pub per_class: usize,
    pub noise: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for SynthSettings {
    fn default() -> Self {
        let s = SynthConfig::default();
        Self {
            per_class: s.per_class,
            noise: s.noise,
            width: s.width,
            height: s.height,
        }
    }
}

// Stream indices for derive_seed.
const SPLIT_STREAM: u64 = 1;
const INIT_STREAM: u64 = 2;
const SHUFFLE_STREAM: u64 = 3;
const SEARCH_STREAM: u64 = 4;
const SYNTH_STREAM: u64 = 5;

impl PipelineConfig {
    /// Reads a TOML document, then applies `key=value` overrides. Keys are
    /// dotted paths such as `training.learning_rate`; values are TOML
    /// literals, with bare words taken as strings.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for spec in overrides {
            apply_override(&mut doc, spec)?;
        }
        let config: PipelineConfig = toml::Value::Table(doc)
            .try_into()
            .context("invalid configuration")?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.edge.validate()?;
        self.training_params().validate()?;
        self.search_config().validate()?;
        self.network_structure(1).validate()?;
        Ok(())
    }

    fn stream(&self, explicit: Option<u64>, stream: u64) -> u64 {
        explicit.unwrap_or_else(|| derive_seed(self.seed, &[stream]))
    }

    pub fn split_counts(&self) -> SplitCounts {
        let (train, test, validation) = match self.task {
            Task::Tomato => (700, 100, 200),
            Task::Egg => (263, 56, 56),
        };
        SplitCounts {
            train: self.split.train.unwrap_or(train),
            test: self.split.test.unwrap_or(test),
            validation: self.split.validation.unwrap_or(validation),
        }
    }

    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec::balanced(self.task, self.split_counts(), self.stream(self.seeds.split, SPLIT_STREAM))
    }

    pub fn network_structure(&self, input_size: usize) -> NetworkStructure {
        NetworkStructure {
            input_size,
            hidden_layers: self.network.hidden_layers.clone(),
            output_size: self.task.output_size(),
            jump_connections: self.network.jump,
            activation: self.network.activation,
            output_activation: ActivationKind::Sigmoid,
        }
    }

    pub fn init_seed(&self) -> u64 {
        self.stream(self.seeds.init, INIT_STREAM)
    }

    pub fn training_params(&self) -> TrainingParams {
        TrainingParams {
            learning_rate: self.training.learning_rate,
            momentum: self.training.momentum,
            max_epochs: self.training.max_epochs,
            patience: self.training.patience,
            shuffle_seed: self.stream(self.seeds.shuffle, SHUFFLE_STREAM),
        }
    }

    pub fn search_config(&self) -> SearchConfig {
        let s = &self.search;
        SearchConfig {
            bounds: s.bounds.clone(),
            capacity: s.capacity,
            max_cycles: s.max_cycles,
            consensus_threshold: s.consensus_threshold,
            reaction_rate: s.reaction_rate,
            collision_rate: s.collision_rate,
            blend_probability: s.blend_probability,
            mutation_sigma: s.mutation_sigma,
            rng_seed: self.stream(self.seeds.search, SEARCH_STREAM),
        }
    }

    pub fn evaluation_settings(&self) -> EvaluationSettings {
        EvaluationSettings {
            max_epochs: self.search.max_epochs,
            patience: self.search.patience,
        }
    }

    pub fn synth_config(&self) -> SynthConfig {
        SynthConfig {
            task: self.task,
            per_class: self.synth.per_class,
            noise: self.synth.noise,
            seed: self.stream(self.seeds.synth, SYNTH_STREAM),
            width: self.synth.width,
            height: self.synth.height,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration is always representable")
    }

    /// The effective configuration as `config: ...` comment lines.
    pub fn preamble(&self) -> Vec<String> {
        self.to_toml()
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(|l| format!("config: {l}"))
            .collect()
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("configuration is always representable")
    }
}

fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<()> {
    let Some((key, raw)) = spec.split_once('=') else {
        bail!("override `{spec}` is not of the form key=value");
    };
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` is malformed");
    }
    let (last, parents) = parts.split_last().expect("non-empty key");
    let mut table = doc;
    for p in parents {
        let entry = table
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .with_context(|| format!("override `{key}`: `{p}` is not a table"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
