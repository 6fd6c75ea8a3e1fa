//! Artificial-chemistry search over network structures.
//!
//! A molecule encodes six factors: hidden-layer count, per-layer widths, a
//! jump-connection flag, the hidden activation, the learning rate and the
//! momentum. Its molecular weight is the validation classification rate of
//! the network it encodes after training.
//!
//! Each reactor cycle lets random pairs collide (uniform factor-wise
//! recombination with occasional blending), lets random single molecules hit
//! the tank wall (one-factor mutation), evaluates the new molecules and
//! keeps the heaviest `capacity` molecules. The run ends after `max_cycles`
//! or once a `consensus_threshold` share of the population encodes the same
//! structure.

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::label::{Label, Task};
use crate::neuralnet::{
    decide, init_network, train, ActivationKind, Network, NetworkStructure, Sample, TrainingParams,
};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchBounds {
    pub min_layers: usize,
    pub max_layers: usize,
    pub min_width: usize,
    pub max_width: usize,
    /// Width change applied by a single mutation.
    pub width_step: usize,
    pub min_learning_rate: f64,
    pub max_learning_rate: f64,
    pub min_momentum: f64,
    pub max_momentum: f64,
    pub activations: Vec<ActivationKind>,
    /// Allowed values of the jump flag.
    pub jump_options: Vec<bool>,
}

impl Default for SearchBounds {
    fn default() -> Self {
        Self {
            min_layers: 1,
            max_layers: 4,
            min_width: 16,
            max_width: 1024,
            width_step: 16,
            min_learning_rate: 1e-4,
            max_learning_rate: 1.0,
            min_momentum: 0.0,
            max_momentum: 0.95,
            activations: ActivationKind::ALL.to_vec(),
            jump_options: vec![false, true],
        }
    }
}

impl SearchBounds {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidParameter(format!("search bounds: {m}")));
        if self.min_layers == 0 || self.min_layers > self.max_layers {
            return bad("need 1 <= min_layers <= max_layers");
        }
        if self.min_width == 0 || self.min_width > self.max_width {
            return bad("need 1 <= min_width <= max_width");
        }
        if self.width_step == 0 {
            return bad("width_step must be positive");
        }
        if !(self.min_learning_rate > 0.0 && self.min_learning_rate <= self.max_learning_rate) {
            return bad("need 0 < min_learning_rate <= max_learning_rate");
        }
        if !(self.min_momentum >= 0.0 && self.min_momentum <= self.max_momentum && self.max_momentum < 1.0) {
            return bad("need 0 <= min_momentum <= max_momentum < 1");
        }
        if self.activations.is_empty() || self.jump_options.is_empty() {
            return bad("activation and jump choices must be non-empty");
        }
        Ok(())
    }

    pub fn contains(&self, m: &Molecule) -> bool {
        (self.min_layers..=self.max_layers).contains(&m.hidden_layer_count)
            && m.layer_widths.len() == m.hidden_layer_count
            && m.layer_widths
                .iter()
                .all(|w| (self.min_width..=self.max_width).contains(w))
            && self.jump_options.contains(&m.jump_flag)
            && self.activations.contains(&m.activation)
            && (self.min_learning_rate..=self.max_learning_rate).contains(&m.learning_rate)
            && (self.min_momentum..=self.max_momentum).contains(&m.momentum)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Molecule {
    pub hidden_layer_count: usize,
    pub layer_widths: Vec<usize>,
    pub jump_flag: bool,
    pub activation: ActivationKind,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Validation classification rate; `None` until evaluated.
    pub molecular_weight: Option<f64>,
}

/// The part of a molecule that counts as "the same network structure" for
/// consensus: learning rate and momentum are excluded.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct StructureKey {
    pub layer_widths: Vec<usize>,
    pub jump_flag: bool,
    pub activation: ActivationKind,
}

impl Molecule {
    pub fn structure_key(&self) -> StructureKey {
        StructureKey {
            layer_widths: self.layer_widths.clone(),
            jump_flag: self.jump_flag,
            activation: self.activation,
        }
    }

    pub fn total_neurons(&self) -> usize {
        self.layer_widths.iter().sum()
    }

    /// Network structure for a task with `input_size` inputs. Output
    /// neurons are sigmoid to match 0/1 targets.
    pub fn network_structure(&self, input_size: usize, task: Task) -> NetworkStructure {
        NetworkStructure {
            input_size,
            hidden_layers: self.layer_widths.clone(),
            output_size: task.output_size(),
            jump_connections: self.jump_flag,
            activation: self.activation,
            output_activation: ActivationKind::Sigmoid,
        }
    }

    fn clear_weight(mut self) -> Self {
        self.molecular_weight = None;
        self
    }

    /// Resizes the width list to the layer count, repeating the last width
    /// when growing.
    fn fit_widths(&mut self) {
        let fill = self.layer_widths.last().copied().unwrap_or(1);
        self.layer_widths.resize(self.hidden_layer_count, fill);
    }

    /// Forces every factor into `bounds`.
    pub fn clamp(&mut self, bounds: &SearchBounds) {
        self.hidden_layer_count = self
            .hidden_layer_count
            .clamp(bounds.min_layers, bounds.max_layers);
        self.fit_widths();
        for w in &mut self.layer_widths {
            *w = (*w).clamp(bounds.min_width, bounds.max_width);
        }
        if !bounds.jump_options.contains(&self.jump_flag) {
            self.jump_flag = bounds.jump_options[0];
        }
        if !bounds.activations.contains(&self.activation) {
            self.activation = bounds.activations[0];
        }
        self.learning_rate = self
            .learning_rate
            .clamp(bounds.min_learning_rate, bounds.max_learning_rate);
        self.momentum = self.momentum.clamp(bounds.min_momentum, bounds.max_momentum);
    }
}

/// The six encoded factors.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Factor {
    Layers,
    Widths,
    Jump,
    Activation,
    LearningRate,
    Momentum,
}

impl Factor {
    pub const ALL: [Factor; 6] = [
        Factor::Layers,
        Factor::Widths,
        Factor::Jump,
        Factor::Activation,
        Factor::LearningRate,
        Factor::Momentum,
    ];
}

/// Samples every factor independently: integers and choices uniformly,
/// the learning rate log-uniformly.
pub fn random_molecule<R: Rng + ?Sized>(bounds: &SearchBounds, rng: &mut R) -> Molecule {
    let hidden_layer_count = rng.gen_range(bounds.min_layers..=bounds.max_layers);
    let layer_widths = (0..hidden_layer_count)
        .map(|_| rng.gen_range(bounds.min_width..=bounds.max_width))
        .collect();
    let jump_flag = *bounds.jump_options.choose(rng).expect("non-empty");
    let activation = *bounds.activations.choose(rng).expect("non-empty");
    let (lo, hi) = (bounds.min_learning_rate.ln(), bounds.max_learning_rate.ln());
    let learning_rate = if lo < hi { rng.gen_range(lo..=hi).exp() } else { bounds.min_learning_rate };
    let momentum = if bounds.min_momentum < bounds.max_momentum {
        rng.gen_range(bounds.min_momentum..=bounds.max_momentum)
    } else {
        bounds.min_momentum
    };
    let mut m = Molecule {
        hidden_layer_count,
        layer_widths,
        jump_flag,
        activation,
        learning_rate,
        momentum,
        molecular_weight: None,
    };
    // exp(ln(x)) can land an ulp outside the interval.
    m.clamp(bounds);
    m
}

fn mean_round(a: usize, b: usize) -> usize {
    ((a + b) as f64 / 2.0).round() as usize
}

/// Collision of two molecules. Each factor of the first offspring comes
/// from `a` or `b` with equal probability and the second offspring takes
/// the other parent's value. Each numeric factor is then, with probability
/// `blend_probability`, replaced in both offspring by the parents' mean.
pub fn react<R: Rng + ?Sized>(
    a: &Molecule,
    b: &Molecule,
    bounds: &SearchBounds,
    blend_probability: f64,
    rng: &mut R,
) -> (Molecule, Molecule) {
    let mut x = a.clone().clear_weight();
    let mut y = b.clone().clear_weight();
    for factor in Factor::ALL {
        if rng.gen_bool(0.5) {
            swap_factor(&mut x, &mut y, factor);
        }
    }
    for factor in [Factor::Layers, Factor::Widths, Factor::LearningRate, Factor::Momentum] {
        if !rng.gen_bool(blend_probability.clamp(0.0, 1.0)) {
            continue;
        }
        match factor {
            Factor::Layers => {
                let n = mean_round(a.hidden_layer_count, b.hidden_layer_count);
                x.hidden_layer_count = n;
                y.hidden_layer_count = n;
            }
            Factor::Widths => {
                let (mut pa, mut pb) = (a.clone(), b.clone());
                let n = x.hidden_layer_count.max(y.hidden_layer_count);
                pa.hidden_layer_count = n;
                pb.hidden_layer_count = n;
                pa.fit_widths();
                pb.fit_widths();
                let blended: Vec<usize> = pa
                    .layer_widths
                    .iter()
                    .zip(&pb.layer_widths)
                    .map(|(&wa, &wb)| mean_round(wa, wb))
                    .collect();
                x.layer_widths = blended.clone();
                y.layer_widths = blended;
            }
            Factor::LearningRate => {
                let lr = (a.learning_rate + b.learning_rate) / 2.0;
                x.learning_rate = lr;
                y.learning_rate = lr;
            }
            Factor::Momentum => {
                let mu = (a.momentum + b.momentum) / 2.0;
                x.momentum = mu;
                y.momentum = mu;
            }
            Factor::Jump | Factor::Activation => unreachable!(),
        }
    }
    x.clamp(bounds);
    y.clamp(bounds);
    (x, y)
}

fn swap_factor(x: &mut Molecule, y: &mut Molecule, factor: Factor) {
    match factor {
        Factor::Layers => std::mem::swap(&mut x.hidden_layer_count, &mut y.hidden_layer_count),
        Factor::Widths => std::mem::swap(&mut x.layer_widths, &mut y.layer_widths),
        Factor::Jump => std::mem::swap(&mut x.jump_flag, &mut y.jump_flag),
        Factor::Activation => std::mem::swap(&mut x.activation, &mut y.activation),
        Factor::LearningRate => std::mem::swap(&mut x.learning_rate, &mut y.learning_rate),
        Factor::Momentum => std::mem::swap(&mut x.momentum, &mut y.momentum),
    }
}

/// Perturbs one factor: integers move one step, reals are scaled by
/// `exp(N(0, sigma))`, the jump flag toggles and the activation is redrawn
/// from the other allowed kinds. The result is clamped to `bounds`.
pub fn mutate<R: Rng + ?Sized>(
    m: &Molecule,
    factor: Factor,
    bounds: &SearchBounds,
    sigma: f64,
    rng: &mut R,
) -> Molecule {
    let mut out = m.clone().clear_weight();
    let scale = Normal::new(0.0, sigma.max(0.0)).expect("finite sigma");
    match factor {
        Factor::Layers => {
            out.hidden_layer_count = if rng.gen_bool(0.5) {
                out.hidden_layer_count + 1
            } else {
                out.hidden_layer_count.saturating_sub(1)
            };
        }
        Factor::Widths => {
            if !out.layer_widths.is_empty() {
                let i = rng.gen_range(0..out.layer_widths.len());
                let w = out.layer_widths[i];
                out.layer_widths[i] = if rng.gen_bool(0.5) {
                    w + bounds.width_step
                } else {
                    w.saturating_sub(bounds.width_step)
                };
            }
        }
        Factor::Jump => out.jump_flag = !out.jump_flag,
        Factor::Activation => {
            let others: Vec<ActivationKind> = bounds
                .activations
                .iter()
                .copied()
                .filter(|&a| a != out.activation)
                .collect();
            if let Some(&a) = others.choose(rng) {
                out.activation = a;
            }
        }
        Factor::LearningRate => out.learning_rate *= scale.sample(rng).exp(),
        Factor::Momentum => out.momentum *= scale.sample(rng).exp(),
    }
    out.clamp(bounds);
    out
}

/// Collision with the tank wall: [`mutate`] on a uniformly chosen factor.
pub fn wall_collision<R: Rng + ?Sized>(m: &Molecule, bounds: &SearchBounds, sigma: f64, rng: &mut R) -> Molecule {
    let factor = *Factor::ALL.choose(rng).expect("six factors");
    mutate(m, factor, bounds, sigma, rng)
}

/// Result of scoring one molecule.
#[derive(Clone, Debug)]
pub struct Evaluation {
    pub weight: f64,
    pub model: Option<Network>,
}

/// Scores a molecule. Implementations must be deterministic in `seed`.
pub trait Fitness: Sync {
    fn evaluate(&self, molecule: &Molecule, seed: u64) -> Result<Evaluation>;
}

impl<F> Fitness for F
where
    F: Fn(&Molecule, u64) -> f64 + Sync,
{
    fn evaluate(&self, molecule: &Molecule, seed: u64) -> Result<Evaluation> {
        Ok(Evaluation {
            weight: self(molecule, seed),
            model: None,
        })
    }
}

/// Train, test and validation data for molecule evaluation.
#[derive(Clone, Debug)]
pub struct EvaluationData {
    pub task: Task,
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
    pub validation: Vec<(Vec<f64>, Label)>,
}

impl EvaluationData {
    fn input_size(&self) -> Result<usize> {
        self.train
            .first()
            .map(|s| s.input.len())
            .ok_or_else(|| Error::EmptyDataSet("training".into()))
    }
}

/// Epoch budget for each molecule's training run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluationSettings {
    pub max_epochs: usize,
    pub patience: usize,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            patience: 100,
        }
    }
}

/// Fitness that trains the encoded network and measures its validation
/// classification rate.
#[derive(Clone, Debug)]
pub struct TrainingFitness {
    pub data: EvaluationData,
    pub settings: EvaluationSettings,
}

impl Fitness for TrainingFitness {
    fn evaluate(&self, molecule: &Molecule, seed: u64) -> Result<Evaluation> {
        let (m, model) = evaluate_molecule(molecule, &self.data, &self.settings, seed)?;
        Ok(Evaluation {
            weight: m.molecular_weight.unwrap_or(0.0),
            model,
        })
    }
}

/// Builds and trains the encoded network, then sets the molecular weight
/// to the fraction of validation samples it classifies correctly. A
/// diverged training scores 0 and yields no model.
pub fn evaluate_molecule(
    molecule: &Molecule,
    data: &EvaluationData,
    settings: &EvaluationSettings,
    eval_seed: u64,
) -> Result<(Molecule, Option<Network>)> {
    if data.validation.is_empty() {
        return Err(Error::EmptyDataSet("validation".into()));
    }
    let structure = molecule.network_structure(data.input_size()?, data.task);
    let net = init_network(&structure, derive_seed(eval_seed, &[0]))?;
    let params = TrainingParams {
        learning_rate: molecule.learning_rate,
        momentum: molecule.momentum,
        max_epochs: settings.max_epochs,
        patience: settings.patience,
        shuffle_seed: derive_seed(eval_seed, &[1]),
    };
    let mut scored = molecule.clone();
    let trained = match train(&net, &data.train, &data.test, &params) {
        Ok((trained, _)) => trained,
        Err(Error::TrainingDiverged { epoch }) => {
            log::debug!("molecule diverged at epoch {epoch}; scoring 0");
            scored.molecular_weight = Some(0.0);
            return Ok((scored, None));
        }
        Err(e) => return Err(e),
    };
    let mut correct = 0usize;
    for (input, label) in &data.validation {
        let outputs = trained.forward(input)?;
        if decide(&outputs, data.task)? == *label {
            correct += 1;
        }
    }
    scored.molecular_weight = Some(correct as f64 / data.validation.len() as f64);
    Ok((scored, Some(trained)))
}

/// Keeps the `capacity` heaviest molecules. Ties prefer fewer hidden
/// neurons, then earlier position.
pub fn filter_population(population: &mut Vec<Molecule>, capacity: usize) {
    if population.len() <= capacity {
        return;
    }
    let weight = |m: &Molecule| m.molecular_weight.unwrap_or(f64::NEG_INFINITY);
    population.sort_by(|a, b| {
        weight(b)
            .total_cmp(&weight(a))
            .then(a.total_neurons().cmp(&b.total_neurons()))
    });
    population.truncate(capacity);
}

/// Share of the population encoding the most common structure.
pub fn consensus_fraction(population: &[Molecule]) -> f64 {
    if population.is_empty() {
        return 0.0;
    }
    let mut counts: HashMap<StructureKey, usize> = HashMap::new();
    for m in population {
        *counts.entry(m.structure_key()).or_insert(0) += 1;
    }
    let modal = counts.values().copied().max().unwrap_or(0);
    modal as f64 / population.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchConfig {
    pub bounds: SearchBounds,
    pub capacity: usize,
    pub max_cycles: usize,
    /// Stop once this share of molecules encodes one structure. Values
    /// above 1 disable the rule.
    pub consensus_threshold: f64,
    /// Share of the population drawn into pairwise reactions per cycle.
    pub reaction_rate: f64,
    /// Share of the population that hits the wall per cycle.
    pub collision_rate: f64,
    pub blend_probability: f64,
    pub mutation_sigma: f64,
    pub rng_seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            bounds: SearchBounds::default(),
            capacity: 50,
            max_cycles: 10_000,
            consensus_threshold: 0.80,
            reaction_rate: 0.5,
            collision_rate: 0.2,
            blend_probability: 0.2,
            mutation_sigma: 0.2,
            rng_seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        self.bounds.validate()?;
        if self.capacity < 2 {
            return Err(Error::InvalidParameter("reactor capacity must be at least 2".into()));
        }
        for (name, v) in [
            ("reaction_rate", self.reaction_rate),
            ("collision_rate", self.collision_rate),
            ("blend_probability", self.blend_probability),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParameter(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.consensus_threshold > 0.0) {
            return Err(Error::InvalidParameter("consensus threshold must be positive".into()));
        }
        Ok(())
    }

    /// Reactions (pairs) per cycle for a population of `n`.
    fn reactions(&self, n: usize) -> usize {
        (self.reaction_rate * n as f64 / 2.0).round() as usize
    }

    fn collisions(&self, n: usize) -> usize {
        (self.collision_rate * n as f64).round() as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleLog {
    pub cycle: usize,
    /// Best molecular weight seen so far in the run.
    pub best: f64,
    pub mean: f64,
    pub consensus: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchStop {
    Consensus,
    MaxCycles,
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best: Molecule,
    /// Trained network of the best molecule, when the fitness produced one.
    pub best_model: Option<Network>,
    pub log: Vec<CycleLog>,
    pub population: Vec<Molecule>,
    pub stopped: SearchStop,
}

pub fn format_search_log(log: &[CycleLog]) -> String {
    let mut out = String::from("cycle,best,mean,consensus\n");
    for r in log {
        let _ = writeln!(out, "{},{},{},{}", r.cycle, r.best, r.mean, r.consensus);
    }
    out
}

/// Reactor state between cycles.
#[derive(Clone, Debug)]
pub struct Reactor {
    pub population: Vec<Molecule>,
    pub capacity: usize,
    pub cycle: usize,
}

impl Reactor {
    pub fn consensus(&self) -> f64 {
        consensus_fraction(&self.population)
    }

    pub fn filter(&mut self) {
        filter_population(&mut self.population, self.capacity);
    }

    fn mean_weight(&self) -> f64 {
        let sum: f64 = self.population.iter().filter_map(|m| m.molecular_weight).sum();
        sum / self.population.len() as f64
    }
}

/// Scores new molecules; evaluations within a batch run concurrently, with
/// per-molecule seeds derived from `(rng_seed, cycle, index)`.
fn evaluate_batch<F: Fitness>(
    fitness: &F,
    molecules: Vec<Molecule>,
    rng_seed: u64,
    cycle: usize,
) -> Result<Vec<(Molecule, Option<Network>)>> {
    molecules
        .into_par_iter()
        .enumerate()
        .map(|(i, mut m)| {
            let seed = derive_seed(rng_seed, &[cycle as u64, i as u64]);
            let eval = fitness.evaluate(&m, seed)?;
            m.molecular_weight = Some(eval.weight);
            Ok((m, eval.model))
        })
        .collect()
}

struct BestSoFar {
    molecule: Molecule,
    model: Option<Network>,
}

impl BestSoFar {
    fn offer(slot: &mut Option<BestSoFar>, batch: Vec<(Molecule, Option<Network>)>) -> Vec<Molecule> {
        let mut kept = Vec::with_capacity(batch.len());
        for (m, model) in batch {
            let w = m.molecular_weight.unwrap_or(0.0);
            let better = slot
                .as_ref()
                .map_or(true, |b| w > b.molecule.molecular_weight.unwrap_or(0.0));
            if better {
                *slot = Some(BestSoFar {
                    molecule: m.clone(),
                    model,
                });
            }
            kept.push(m);
        }
        kept
    }
}

/// Runs the reactor and returns the heaviest molecule ever evaluated
/// together with a per-cycle log. Cycle 0 is the random initial
/// population of `capacity` molecules.
pub fn run_search<F: Fitness>(config: &SearchConfig, fitness: &F) -> Result<SearchOutcome> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
    let initial: Vec<Molecule> = (0..config.capacity)
        .map(|_| random_molecule(&config.bounds, &mut rng))
        .collect();

    let mut best: Option<BestSoFar> = None;
    let scored = evaluate_batch(fitness, initial, config.rng_seed, 0)?;
    let mut reactor = Reactor {
        population: BestSoFar::offer(&mut best, scored),
        capacity: config.capacity,
        cycle: 0,
    };
    reactor.filter();

    let best_weight = |b: &Option<BestSoFar>| {
        b.as_ref()
            .and_then(|b| b.molecule.molecular_weight)
            .unwrap_or(0.0)
    };
    let mut log = vec![CycleLog {
        cycle: 0,
        best: best_weight(&best),
        mean: reactor.mean_weight(),
        consensus: reactor.consensus(),
    }];

    let mut stopped = SearchStop::MaxCycles;
    loop {
        if reactor.consensus() >= config.consensus_threshold {
            stopped = SearchStop::Consensus;
            break;
        }
        if reactor.cycle >= config.max_cycles {
            break;
        }
        reactor.cycle += 1;

        let n = reactor.population.len();
        let mut offspring = Vec::new();
        for _ in 0..config.reactions(n) {
            let picks: Vec<usize> = rand::seq::index::sample(&mut rng, n, 2).into_vec();
            let (x, y) = react(
                &reactor.population[picks[0]],
                &reactor.population[picks[1]],
                &config.bounds,
                config.blend_probability,
                &mut rng,
            );
            offspring.push(x);
            offspring.push(y);
        }
        for _ in 0..config.collisions(n) {
            let i = rng.gen_range(0..n);
            offspring.push(wall_collision(
                &reactor.population[i],
                &config.bounds,
                config.mutation_sigma,
                &mut rng,
            ));
        }

        let scored = evaluate_batch(fitness, offspring, config.rng_seed, reactor.cycle)?;
        let fresh = BestSoFar::offer(&mut best, scored);
        reactor.population.extend(fresh);
        reactor.filter();
        log.push(CycleLog {
            cycle: reactor.cycle,
            best: best_weight(&best),
            mean: reactor.mean_weight(),
            consensus: reactor.consensus(),
        });
        log::debug!(
            "cycle {}: best {:.4} consensus {:.2}",
            reactor.cycle,
            best_weight(&best),
            reactor.consensus()
        );
    }

    let best = best.expect("initial population is non-empty");
    Ok(SearchOutcome {
        best: best.molecule,
        best_model: best.model,
        log,
        population: reactor.population,
        stopped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn point_bounds() -> SearchBounds {
        SearchBounds {
            min_layers: 2,
            max_layers: 2,
            min_width: 32,
            max_width: 32,
            width_step: 1,
            min_learning_rate: 0.05,
            max_learning_rate: 0.05,
            min_momentum: 0.3,
            max_momentum: 0.3,
            activations: vec![ActivationKind::Tanh],
            jump_options: vec![true],
        }
    }

    fn molecule(widths: &[usize], weight: Option<f64>) -> Molecule {
        Molecule {
            hidden_layer_count: widths.len(),
            layer_widths: widths.to_vec(),
            jump_flag: false,
            activation: ActivationKind::Sigmoid,
            learning_rate: 0.1,
            momentum: 0.5,
            molecular_weight: weight,
        }
    }

    #[test]
    fn degenerate_bounds_give_unique_molecule() {
        let m = random_molecule(&point_bounds(), &mut rng(1));
        assert_eq!(
            m,
            Molecule {
                hidden_layer_count: 2,
                layer_widths: vec![32, 32],
                jump_flag: true,
                activation: ActivationKind::Tanh,
                learning_rate: 0.05,
                momentum: 0.3,
                molecular_weight: None,
            }
        );
    }

    #[test]
    fn layer_counts_are_uniform() {
        let bounds = SearchBounds::default();
        let mut r = rng(2);
        let mut counts = [0usize; 4];
        let draws = 10_000;
        for _ in 0..draws {
            let m = random_molecule(&bounds, &mut r);
            assert!(bounds.contains(&m));
            counts[m.hidden_layer_count - 1] += 1;
        }
        for c in counts {
            let freq = c as f64 / draws as f64;
            assert!((freq - 0.25).abs() <= 0.02, "{counts:?}");
        }
        // Chi-square with 3 degrees of freedom, 0.1% critical value.
        let expected = draws as f64 / 4.0;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
        assert!(chi2 < 16.27, "chi2 = {chi2}");
    }

    #[test]
    fn random_molecule_is_seeded() {
        let b = SearchBounds::default();
        assert_eq!(random_molecule(&b, &mut rng(9)), random_molecule(&b, &mut rng(9)));
    }

    #[test]
    fn identical_parents_reproduce() {
        let b = SearchBounds::default();
        let a = random_molecule(&b, &mut rng(3));
        for seed in 0..50 {
            let (x, y) = react(&a, &a, &b, 0.5, &mut rng(seed));
            assert_eq!(x, a);
            assert_eq!(y, a);
        }
    }

    #[test]
    fn forced_blend_of_layer_counts() {
        let b = SearchBounds::default();
        let mut a = molecule(&[16], None);
        let mut c = molecule(&[64, 32, 128, 512], None);
        a.clamp(&b);
        c.clamp(&b);
        for seed in 0..50 {
            let (x, y) = react(&a, &c, &b, 1.0, &mut rng(seed));
            for o in [&x, &y] {
                assert!((1..=4).contains(&o.hidden_layer_count));
                assert_eq!(o.hidden_layer_count, 3); // round(2.5)
                assert!(b.contains(o));
            }
        }
    }

    #[test]
    fn offspring_take_complementary_factors() {
        let b = SearchBounds::default();
        let a = random_molecule(&b, &mut rng(5));
        let c = random_molecule(&b, &mut rng(6));
        let (x, y) = react(&a, &c, &b, 0.0, &mut rng(7));
        let pairs = [
            (x.jump_flag, y.jump_flag, a.jump_flag, c.jump_flag),
        ];
        for (xv, yv, av, cv) in pairs {
            assert!((xv == av && yv == cv) || (xv == cv && yv == av));
        }
        assert!(
            (x.learning_rate == a.learning_rate && y.learning_rate == c.learning_rate)
                || (x.learning_rate == c.learning_rate && y.learning_rate == a.learning_rate)
        );
        assert_eq!(x.molecular_weight, None);
    }

    #[test]
    fn react_golden_pair() {
        let b = SearchBounds::default();
        let a = random_molecule(&b, &mut rng(100));
        let c = random_molecule(&b, &mut rng(200));
        let (x, y) = react(&a, &c, &b, 0.2, &mut rng(300));
        let golden = serde_json::to_string(&(x, y)).unwrap();
        let (x2, y2) = react(&a, &c, &b, 0.2, &mut rng(300));
        assert_eq!(serde_json::to_string(&(x2, y2)).unwrap(), golden);
    }

    #[test]
    fn mutation_clamps_at_bounds() {
        let b = SearchBounds::default();
        let mut m = molecule(&[1024, 1024, 1024, 1024], None);
        m.momentum = 0.95;
        m.learning_rate = 1.0;
        let mut r = rng(8);
        let mut clamped = 0;
        for _ in 0..200 {
            for f in [Factor::Layers, Factor::Widths, Factor::LearningRate, Factor::Momentum] {
                let o = mutate(&m, f, &b, 0.2, &mut r);
                assert!(b.contains(&o));
                if o == m.clone().clear_weight() {
                    clamped += 1;
                }
            }
        }
        assert!(clamped > 0);
    }

    fn differing_factors(a: &Molecule, b: &Molecule) -> Vec<Factor> {
        let mut d = Vec::new();
        if a.hidden_layer_count != b.hidden_layer_count {
            d.push(Factor::Layers);
        } else if a.layer_widths != b.layer_widths {
            d.push(Factor::Widths);
        }
        if a.jump_flag != b.jump_flag {
            d.push(Factor::Jump);
        }
        if a.activation != b.activation {
            d.push(Factor::Activation);
        }
        if a.learning_rate != b.learning_rate {
            d.push(Factor::LearningRate);
        }
        if a.momentum != b.momentum {
            d.push(Factor::Momentum);
        }
        d
    }

    #[test]
    fn wall_collision_changes_one_factor_and_covers_all() {
        let b = SearchBounds::default();
        let mut r = rng(10);
        let mut seen = std::collections::HashSet::new();
        for _ in 0..1000 {
            let m = random_molecule(&b, &mut r);
            let o = wall_collision(&m, &b, 0.2, &mut r);
            let d = differing_factors(&m, &o);
            assert!(d.len() <= 1, "{d:?}");
            assert!(b.contains(&o));
            seen.extend(d);
        }
        assert_eq!(seen.len(), 6, "{seen:?}");
    }

    #[test]
    fn filter_truncates_by_weight() {
        let mut pop = vec![
            molecule(&[16], Some(0.9)),
            molecule(&[16], Some(0.5)),
            molecule(&[16], Some(0.7)),
        ];
        filter_population(&mut pop, 2);
        let w: Vec<f64> = pop.iter().map(|m| m.molecular_weight.unwrap()).collect();
        assert_eq!(w, vec![0.9, 0.7]);
    }

    #[test]
    fn filter_prefers_smaller_networks_on_ties() {
        let mut pop = vec![molecule(&[768], Some(0.8)), molecule(&[32], Some(0.8))];
        filter_population(&mut pop, 1);
        assert_eq!(pop[0].layer_widths, vec![32]);
    }

    #[test]
    fn filter_keeps_insertion_order_on_full_ties() {
        let mut first = molecule(&[32], Some(0.8));
        first.learning_rate = 0.01;
        let mut pop = vec![first.clone(), molecule(&[32], Some(0.8)), molecule(&[32], Some(0.8))];
        filter_population(&mut pop, 1);
        assert_eq!(pop[0], first);
    }

    #[test]
    fn filter_noop_under_capacity() {
        let pop = vec![molecule(&[16], Some(0.1)), molecule(&[16], Some(0.9))];
        let mut out = pop.clone();
        filter_population(&mut out, 5);
        assert_eq!(out, pop);
    }

    #[test]
    fn consensus_counts() {
        let same = vec![molecule(&[16], None); 5];
        assert_eq!(consensus_fraction(&same), 1.0);

        let mut four_of_five = same.clone();
        four_of_five[2] = molecule(&[17], None);
        assert_eq!(consensus_fraction(&four_of_five), 0.8);

        let mut split: Vec<Molecule> = vec![molecule(&[16], None); 3];
        split.extend(vec![molecule(&[16, 16], None); 3]);
        assert_eq!(consensus_fraction(&split), 0.5);

        // Learning rate and momentum do not change the structure.
        let mut lr = same.clone();
        lr[0].learning_rate = 0.9;
        lr[1].momentum = 0.0;
        assert_eq!(consensus_fraction(&lr), 1.0);
    }

    #[test]
    fn constant_fitness_search() {
        let config = SearchConfig {
            bounds: SearchBounds {
                max_layers: 2,
                min_width: 4,
                max_width: 16,
                width_step: 1,
                ..SearchBounds::default()
            },
            capacity: 10,
            max_cycles: 30,
            rng_seed: 4,
            ..SearchConfig::default()
        };
        let out = run_search(&config, &|_: &Molecule, _: u64| 0.42).unwrap();
        assert_eq!(out.best.molecular_weight, Some(0.42));
        assert!(out.log.len() <= 31);
        let last = out.log.last().unwrap();
        assert!(out.stopped == SearchStop::MaxCycles && last.cycle == 30 || last.consensus >= 0.8);
    }

    #[test]
    fn zero_cycles_returns_best_initial() {
        let config = SearchConfig {
            capacity: 8,
            max_cycles: 0,
            rng_seed: 11,
            ..SearchConfig::default()
        };
        let fitness = |m: &Molecule, _: u64| m.learning_rate;
        let out = run_search(&config, &fitness).unwrap();
        let mut r = ChaCha8Rng::seed_from_u64(11);
        let initial: Vec<Molecule> = (0..8).map(|_| random_molecule(&config.bounds, &mut r)).collect();
        let best_lr = initial.iter().map(|m| m.learning_rate).fold(0.0, f64::max);
        assert_eq!(out.best.learning_rate, best_lr);
        assert_eq!(out.log.len(), 1);
    }

    #[test]
    fn search_is_deterministic_and_monotone() {
        let config = SearchConfig {
            capacity: 12,
            max_cycles: 25,
            rng_seed: 21,
            ..SearchConfig::default()
        };
        let fitness = |m: &Molecule, seed: u64| {
            let noise = (seed % 1000) as f64 / 1e5;
            1.0 / (1.0 + m.total_neurons() as f64 / 100.0) + noise
        };
        let a = run_search(&config, &fitness).unwrap();
        let b = run_search(&config, &fitness).unwrap();
        assert_eq!(a.log, b.log);
        assert_eq!(a.best, b.best);
        assert!(a.log.windows(2).all(|w| w[1].best >= w[0].best));
        for m in &a.population {
            assert!(config.bounds.contains(m));
        }
        // The best molecule is never filtered out while it is in the tank.
        let top = a.population.iter().filter_map(|m| m.molecular_weight).fold(f64::MIN, f64::max);
        assert!(top <= a.best.molecular_weight.unwrap());
    }

    #[test]
    fn invalid_config_rejected() {
        let bad = SearchConfig {
            capacity: 1,
            ..SearchConfig::default()
        };
        assert!(run_search(&bad, &|_: &Molecule, _: u64| 0.0).is_err());
        let bad = SearchConfig {
            bounds: SearchBounds {
                min_layers: 3,
                max_layers: 2,
                ..SearchBounds::default()
            },
            ..SearchConfig::default()
        };
        assert!(bad.validate().is_err());
    }
}
