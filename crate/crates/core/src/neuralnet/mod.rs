//! Feed-forward networks with optional input-to-output jump connections,
//! online backpropagation with momentum, and early stopping on a test set.
//!
//! Weight blocks are stored input-major: the weight from input `i` to
//! neuron `j` of a block lives at `weights[i * outputs + j]`. A jump block
//! connects the input layer straight to the output layer and carries no
//! biases of its own.

mod backprop;
mod model_file;
mod train;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{EggGrade, Label, Task, TomatoStage};

pub use backprop::{backprop_step, gradient, Velocity};
pub use model_file::{load_model, model_from_json, model_to_json, save_model, ModelFile, MODEL_FORMAT, MODEL_VERSION};
pub use train::{
    train, write_history, EarlyStopping, EpochRecord, Sample, StopReason, TrainingHistory, TrainingParams,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ActivationKind {
    Sigmoid,
    Tanh,
    Linear,
}

impl ActivationKind {
    pub const ALL: [ActivationKind; 3] = [ActivationKind::Sigmoid, ActivationKind::Tanh, ActivationKind::Linear];

    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            ActivationKind::Tanh => x.tanh(),
            ActivationKind::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y = f(x)`.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            ActivationKind::Sigmoid => y * (1.0 - y),
            ActivationKind::Tanh => 1.0 - y * y,
            ActivationKind::Linear => 1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ActivationKind::Sigmoid => "sigmoid",
            ActivationKind::Tanh => "tanh",
            ActivationKind::Linear => "linear",
        }
    }
}

impl std::str::FromStr for ActivationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ActivationKind::ALL
            .into_iter()
            .find(|a| a.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidParameter(format!("unknown activation `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NetworkStructure {
    pub input_size: usize,
    pub hidden_layers: Vec<usize>,
    pub output_size: usize,
    pub jump_connections: bool,
    /// Activation of every hidden neuron.
    pub activation: ActivationKind,
    pub output_activation: ActivationKind,
}

impl NetworkStructure {
    /// Sigmoid network without jump connections.
    pub fn sigmoid(input_size: usize, hidden_layers: Vec<usize>, output_size: usize) -> Self {
        Self {
            input_size,
            hidden_layers,
            output_size,
            jump_connections: false,
            activation: ActivationKind::Sigmoid,
            output_activation: ActivationKind::Sigmoid,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.input_size == 0 || self.output_size == 0 {
            return Err(Error::InvalidParameter(
                "input and output sizes must be at least 1".into(),
            ));
        }
        if self.hidden_layers.contains(&0) {
            return Err(Error::InvalidParameter("hidden layer of width 0".into()));
        }
        Ok(())
    }

    /// Widths of every layer from input to output.
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut sizes = Vec::with_capacity(self.hidden_layers.len() + 2);
        sizes.push(self.input_size);
        sizes.extend(&self.hidden_layers);
        sizes.push(self.output_size);
        sizes
    }

    /// Total number of weights and biases.
    pub fn weight_count(&self) -> usize {
        let sizes = self.layer_sizes();
        let layered: usize = sizes.windows(2).map(|p| p[0] * p[1] + p[1]).sum();
        let jump = if self.jump_connections {
            self.input_size * self.output_size
        } else {
            0
        };
        layered + jump
    }

    pub fn hidden_neurons(&self) -> usize {
        self.hidden_layers.iter().sum()
    }
}

/// One dense weight block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub inputs: usize,
    pub outputs: usize,
    /// Input-major, `inputs * outputs` values.
    pub weights: Vec<f64>,
    /// One per output neuron; empty for jump blocks.
    pub biases: Vec<f64>,
}

impl Block {
    fn zeros(inputs: usize, outputs: usize, with_bias: bool) -> Self {
        Self {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            biases: if with_bias { vec![0.0; outputs] } else { Vec::new() },
        }
    }

    #[inline]
    pub fn weight(&self, input: usize, output: usize) -> f64 {
        self.weights[input * self.outputs + output]
    }

    /// Accumulates `W^T x` into `z`, skipping zero inputs.
    #[inline]
    fn accumulate(&self, x: &[f64], z: &mut [f64]) {
        for (i, &xi) in x.iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            let row = &self.weights[i * self.outputs..(i + 1) * self.outputs];
            for (zj, &w) in z.iter_mut().zip(row) {
                *zj += xi * w;
            }
        }
    }

    fn values(&self) -> impl Iterator<Item = &f64> {
        self.weights.iter().chain(&self.biases)
    }

    fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.weights.iter_mut().chain(self.biases.iter_mut())
    }
}

/// All trainable values of a network, or a gradient of the same shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub layers: Vec<Block>,
    pub jump: Option<Block>,
}

impl Params {
    fn zeros(structure: &NetworkStructure) -> Self {
        let sizes = structure.layer_sizes();
        let layers = sizes.windows(2).map(|p| Block::zeros(p[0], p[1], true)).collect();
        let jump = structure
            .jump_connections
            .then(|| Block::zeros(structure.input_size, structure.output_size, false));
        Self { layers, jump }
    }

    /// Every value in a fixed order: layer blocks (weights, then biases),
    /// then the jump block.
    pub fn iter(&self) -> impl Iterator<Item = &f64> {
        self.layers.iter().chain(self.jump.as_ref()).flat_map(Block::values)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.layers
            .iter_mut()
            .chain(self.jump.as_mut())
            .flat_map(Block::values_mut)
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn shape_matches(&self, structure: &NetworkStructure) -> bool {
        let expected = Params::zeros(structure);
        self.layers.len() == expected.layers.len()
            && self.jump.is_some() == expected.jump.is_some()
            && self
                .layers
                .iter()
                .chain(self.jump.as_ref())
                .zip(expected.layers.iter().chain(expected.jump.as_ref()))
                .all(|(a, b)| {
                    a.inputs == b.inputs
                        && a.outputs == b.outputs
                        && a.weights.len() == b.weights.len()
                        && a.biases.len() == b.biases.len()
                })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network {
    structure: NetworkStructure,
    params: Params,
}

impl Network {
    /// A network with every weight and bias set to zero.
    pub fn zeros(structure: NetworkStructure) -> Result<Self> {
        structure.validate()?;
        let params = Params::zeros(&structure);
        Ok(Self { structure, params })
    }

    pub fn from_params(structure: NetworkStructure, params: Params) -> Result<Self> {
        structure.validate()?;
        if !params.shape_matches(&structure) {
            return Err(Error::Model("weight blocks do not match the structure".into()));
        }
        if params.iter().any(|w| !w.is_finite()) {
            return Err(Error::Model("non-finite weight".into()));
        }
        Ok(Self { structure, params })
    }

    pub fn structure(&self) -> &NetworkStructure {
        &self.structure
    }

    pub fn params(&self) -> &Params {
        &self.params
    }

    /// Mutable weights. Shapes are fixed by the structure; callers change
    /// values only.
    pub fn params_mut(&mut self) -> &mut Params {
        &mut self.params
    }

    pub fn is_finite(&self) -> bool {
        self.params.iter().all(|w| w.is_finite())
    }

    /// Output activations for one input vector.
    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut acts = Activations::new(&self.structure);
        self.forward_into(input, &mut acts);
        Ok(acts.output().to_vec())
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.structure.input_size {
            return Err(Error::mismatch(
                format!("input of length {}", self.structure.input_size),
                input.len(),
            ));
        }
        Ok(())
    }

    /// Layer-by-layer propagation; fills `acts` with every non-input layer's
    /// activations.
    pub(crate) fn forward_into(&self, input: &[f64], acts: &mut Activations) {
        let last = self.params.layers.len() - 1;
        for (l, block) in self.params.layers.iter().enumerate() {
            let (done, rest) = acts.layers.split_at_mut(l);
            let prev: &[f64] = if l == 0 { input } else { &done[l - 1] };
            let z = &mut rest[0];
            z.copy_from_slice(&block.biases);
            block.accumulate(prev, z);
            let kind = if l == last {
                if let Some(jump) = &self.params.jump {
                    jump.accumulate(input, z);
                }
                self.structure.output_activation
            } else {
                self.structure.activation
            };
            for v in z.iter_mut() {
                *v = kind.apply(*v);
            }
        }
    }
}

/// Per-layer activation buffers reused across samples.
#[derive(Clone, Debug)]
pub(crate) struct Activations {
    pub(crate) layers: Vec<Vec<f64>>,
}

impl Activations {
    pub(crate) fn new(structure: &NetworkStructure) -> Self {
        let sizes = structure.layer_sizes();
        Self {
            layers: sizes[1..].iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub(crate) fn output(&self) -> &[f64] {
        self.layers.last().expect("at least the output layer")
    }
}

/// Uniform `[-r, r]` initialization with `r = 1 / sqrt(fan_in)`, where the
/// fan-in of an output neuron includes the jump connections.
pub fn init_network(structure: &NetworkStructure, seed: u64) -> Result<Network> {
    let mut net = Network::zeros(structure.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_layers = net.params.layers.len();
    let jump_fan_in = if structure.jump_connections {
        structure.input_size
    } else {
        0
    };
    for (l, block) in net.params.layers.iter_mut().enumerate() {
        let fan_in = block.inputs + if l == n_layers - 1 { jump_fan_in } else { 0 };
        let r = 1.0 / (fan_in as f64).sqrt();
        for w in block.values_mut() {
            *w = rng.gen_range(-r..=r);
        }
    }
    if let Some(jump) = net.params.jump.as_mut() {
        let last = &net.params.layers[n_layers - 1];
        let r = 1.0 / ((last.inputs + jump_fan_in) as f64).sqrt();
        for w in jump.values_mut() {
            *w = rng.gen_range(-r..=r);
        }
    }
    Ok(net)
}

/// Maps raw outputs to a label: argmax (lowest stage wins ties) for
/// tomatoes, accept when the single output is at least 0.5 for eggs.
pub fn decide(outputs: &[f64], task: Task) -> Result<Label> {
    if outputs.len() != task.output_size() {
        return Err(Error::mismatch(
            format!("{} outputs for the {task} task", task.output_size()),
            outputs.len(),
        ));
    }
    Ok(match task {
        Task::Tomato => {
            let mut best = 0;
            for (i, &v) in outputs.iter().enumerate() {
                if v > outputs[best] {
                    best = i;
                }
            }
            Label::Tomato(TomatoStage::from_index(best).expect("six outputs"))
        }
        Task::Egg => Label::Egg(if outputs[0] >= 0.5 {
            EggGrade::Accept
        } else {
            EggGrade::Reject
        }),
    })
}

pub fn classify(net: &Network, pattern: &[f64], task: Task) -> Result<Label> {
    if net.structure.output_size != task.output_size() {
        return Err(Error::mismatch(
            format!("{} outputs for the {task} task", task.output_size()),
            net.structure.output_size,
        ));
    }
    decide(&net.forward(pattern)?, task)
}
