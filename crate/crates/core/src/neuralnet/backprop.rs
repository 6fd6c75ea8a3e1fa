use super::{Activations, Block, Network, Params, TrainingParams};
use crate::error::{Error, Result};

/// Previous update of every weight, for the momentum term.
#[derive(Clone, Debug, PartialEq)]
pub struct Velocity {
    layers: Vec<BlockVelocity>,
    jump: Option<BlockVelocity>,
}

#[derive(Clone, Debug, PartialEq)]
struct BlockVelocity {
    weights: Vec<f64>,
    biases: Vec<f64>,
    /// Whether any weight in this input row has been updated yet. Rows that
    /// were never fed a non-zero input hold exactly zero velocity and can be
    /// skipped without changing the result.
    live: Vec<bool>,
    /// Zero-input steps not yet applied to each row of an input-fed block.
    pending: Vec<u32>,
}

impl BlockVelocity {
    fn for_block(block: &Block) -> Self {
        Self {
            weights: vec![0.0; block.weights.len()],
            biases: vec![0.0; block.biases.len()],
            live: vec![false; block.inputs],
            pending: vec![0; block.inputs],
        }
    }

    /// Applies the deferred steps of row `i`. A step with zero input sets
    /// `v = mu * v` and `w -= v`, so `k` of them scale `v` by `mu^k` and
    /// move `w` by the geometric sum `v * (mu + ... + mu^k)`.
    fn catch_up(&mut self, block: &mut Block, i: usize, mu: f64) {
        let k = std::mem::take(&mut self.pending[i]);
        if k == 0 {
            return;
        }
        let n = block.outputs;
        let w_row = &mut block.weights[i * n..(i + 1) * n];
        let v_row = &mut self.weights[i * n..(i + 1) * n];
        if k == 1 {
            for (w, v) in w_row.iter_mut().zip(v_row.iter_mut()) {
                *v *= mu;
                *w -= *v;
            }
            return;
        }
        let decay = mu.powi(k.min(i32::MAX as u32) as i32);
        let shift = if mu == 0.0 { 0.0 } else { mu * (1.0 - decay) / (1.0 - mu) };
        for (w, v) in w_row.iter_mut().zip(v_row.iter_mut()) {
            *w -= *v * shift;
            *v *= decay;
        }
    }

    fn catch_up_all(&mut self, block: &mut Block, mu: f64) {
        for i in 0..block.inputs {
            self.catch_up(block, i, mu);
        }
    }
}

impl Velocity {
    pub fn zeros(net: &Network) -> Self {
        Self {
            layers: net.params.layers.iter().map(BlockVelocity::for_block).collect(),
            jump: net.params.jump.as_ref().map(BlockVelocity::for_block),
        }
    }

    /// True when no update has been recorded.
    pub fn is_zero(&self) -> bool {
        self.layers
            .iter()
            .chain(self.jump.as_ref())
            .all(|b| b.weights.iter().chain(&b.biases).all(|&v| v == 0.0))
    }
}

/// Reusable buffers for one forward/backward pass.
#[derive(Clone, Debug)]
pub(crate) struct Scratch {
    pub(crate) acts: Activations,
    deltas: Vec<Vec<f64>>,
}

impl Scratch {
    pub(crate) fn new(net: &Network) -> Self {
        let acts = Activations::new(&net.structure);
        let deltas = acts.layers.iter().map(|a| vec![0.0; a.len()]).collect();
        Self { acts, deltas }
    }
}

/// Forward pass followed by error backpropagation. Returns the sample
/// error `sum((output - target)^2) / 2`; `scratch.deltas[l]` then holds
/// dE/dz for layer `l + 1`.
fn backward(net: &Network, input: &[f64], target: &[f64], scratch: &mut Scratch) -> f64 {
    net.forward_into(input, &mut scratch.acts);
    let structure = &net.structure;
    let last = scratch.deltas.len() - 1;

    let out = &scratch.acts.layers[last];
    let mut error = 0.0;
    for ((d, &o), &t) in scratch.deltas[last].iter_mut().zip(out).zip(target) {
        let diff = o - t;
        error += diff * diff;
        *d = diff * structure.output_activation.derivative_from_output(o);
    }

    for l in (1..=last).rev() {
        let block = &net.params.layers[l];
        let (lower, upper) = scratch.deltas.split_at_mut(l);
        let delta = &upper[0];
        let below = &mut lower[l - 1];
        let acts = &scratch.acts.layers[l - 1];
        for (i, (d, &a)) in below.iter_mut().zip(acts).enumerate() {
            let row = &block.weights[i * block.outputs..(i + 1) * block.outputs];
            let back: f64 = row.iter().zip(delta).map(|(w, dj)| w * dj).sum();
            *d = back * structure.activation.derivative_from_output(a);
        }
    }
    error / 2.0
}

/// Analytic gradient of the sample error with respect to every weight and
/// bias, shaped like the network's parameters.
pub fn gradient(net: &Network, input: &[f64], target: &[f64]) -> Result<(Params, f64)> {
    net.check_input(input)?;
    check_target(net, target)?;
    let mut scratch = Scratch::new(net);
    let error = backward(net, input, target, &mut scratch);

    let mut grad = Params::zeros(&net.structure);
    for (l, block) in grad.layers.iter_mut().enumerate() {
        let prev: &[f64] = if l == 0 { input } else { &scratch.acts.layers[l - 1] };
        outer_into(block, prev, &scratch.deltas[l]);
    }
    if let Some(jump) = grad.jump.as_mut() {
        outer_into(jump, input, scratch.deltas.last().expect("output layer"));
    }
    Ok((grad, error))
}

fn outer_into(block: &mut Block, prev: &[f64], delta: &[f64]) {
    for (i, &a) in prev.iter().enumerate() {
        for (j, &d) in delta.iter().enumerate() {
            block.weights[i * block.outputs + j] = a * d;
        }
    }
    if !block.biases.is_empty() {
        block.biases.copy_from_slice(delta);
    }
}

fn check_target(net: &Network, target: &[f64]) -> Result<()> {
    if target.len() != net.structure.output_size {
        return Err(Error::mismatch(
            format!("target of length {}", net.structure.output_size),
            target.len(),
        ));
    }
    Ok(())
}

/// One online update: `update = lr * gradient + momentum * previous_update`,
/// then `weights -= update`. Returns the sample error measured before the
/// update.
pub fn backprop_step(
    net: &mut Network,
    input: &[f64],
    target: &[f64],
    params: &TrainingParams,
    velocity: &mut Velocity,
) -> Result<f64> {
    net.check_input(input)?;
    check_target(net, target)?;
    let mut scratch = Scratch::new(net);
    let error = step_with(net, input, target, params, velocity, &mut scratch);
    flush(net, velocity, params.momentum);
    error
}

pub(crate) fn step_with(
    net: &mut Network,
    input: &[f64],
    target: &[f64],
    params: &TrainingParams,
    velocity: &mut Velocity,
    scratch: &mut Scratch,
) -> Result<f64> {
    let (lr, mu) = (params.learning_rate, params.momentum);
    // Input-fed rows are read by the forward pass only when their input is
    // non-zero, so only those need to be current.
    for (i, _) in input.iter().enumerate().filter(|(_, &a)| a != 0.0) {
        velocity.layers[0].catch_up(&mut net.params.layers[0], i, mu);
        if let (Some(jump), Some(vel)) = (net.params.jump.as_mut(), velocity.jump.as_mut()) {
            vel.catch_up(jump, i, mu);
        }
    }
    let error = backward(net, input, target, scratch);
    if !error.is_finite() {
        return Err(Error::TrainingDiverged { epoch: 0 });
    }
    let last = net.params.layers.len() - 1;
    for (l, (block, vel)) in net.params.layers.iter_mut().zip(&mut velocity.layers).enumerate() {
        let prev: &[f64] = if l == 0 { input } else { &scratch.acts.layers[l - 1] };
        apply_update(block, vel, prev, &scratch.deltas[l], lr, mu, l == 0);
    }
    if let (Some(jump), Some(vel)) = (net.params.jump.as_mut(), velocity.jump.as_mut()) {
        apply_update(jump, vel, input, &scratch.deltas[last], lr, mu, true);
    }
    Ok(error)
}

/// Applies every deferred update so the weights can be read freely.
pub(crate) fn flush(net: &mut Network, velocity: &mut Velocity, mu: f64) {
    velocity.layers[0].catch_up_all(&mut net.params.layers[0], mu);
    if let (Some(jump), Some(vel)) = (net.params.jump.as_mut(), velocity.jump.as_mut()) {
        vel.catch_up_all(jump, mu);
    }
}

/// `deferred` marks input-fed blocks, whose zero-input rows are counted
/// rather than updated.
#[inline]
fn apply_update(
    block: &mut Block,
    vel: &mut BlockVelocity,
    prev: &[f64],
    delta: &[f64],
    lr: f64,
    mu: f64,
    deferred: bool,
) {
    let n = block.outputs;
    for (i, &a) in prev.iter().enumerate() {
        if a != 0.0 {
            vel.live[i] = true;
        } else if !vel.live[i] {
            continue;
        } else if deferred {
            vel.pending[i] += 1;
            continue;
        }
        let w_row = &mut block.weights[i * n..(i + 1) * n];
        let v_row = &mut vel.weights[i * n..(i + 1) * n];
        for ((w, v), &d) in w_row.iter_mut().zip(v_row.iter_mut()).zip(delta) {
            *v = lr * (a * d) + mu * *v;
            *w -= *v;
        }
    }
    for ((b, v), &d) in block.biases.iter_mut().zip(vel.biases.iter_mut()).zip(delta) {
        *v = lr * d + mu * *v;
        *b -= *v;
    }
}
