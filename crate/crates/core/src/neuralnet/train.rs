use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::backprop::{flush, step_with, Scratch};
use super::{Network, Velocity};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingParams {
    pub learning_rate: f64,
    pub momentum: f64,
    pub max_epochs: usize,
    /// Epochs without test-error improvement before training stops.
    pub patience: usize,
    pub shuffle_seed: u64,
}

impl Default for TrainingParams {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            momentum: 0.9,
            max_epochs: 1000,
            patience: 100,
            shuffle_seed: 0,
        }
    }
}

impl TrainingParams {
    pub fn validate(&self) -> Result<()> {
        // A zero rate is allowed: it freezes the weights, which is how a
        // plateau is forced.
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "learning rate must be non-negative, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::InvalidParameter(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if self.patience == 0 {
            return Err(Error::InvalidParameter("patience must be at least 1".into()));
        }
        Ok(())
    }
}

/// A training or evaluation example.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub id: Option<String>,
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self {
            id: None,
            input,
            target,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Patience,
    MaxEpochs,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_error: f64,
    pub test_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingHistory {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose weights were returned; 0 when no epoch ran.
    pub best_epoch: usize,
    pub stopped_reason: StopReason,
}

impl TrainingHistory {
    pub fn best_test_error(&self) -> Option<f64> {
        self.epochs
            .iter()
            .find(|r| r.epoch == self.best_epoch)
            .map(|r| r.test_error)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_error,test_error\n");
        for r in &self.epochs {
            let _ = writeln!(out, "{},{},{}", r.epoch, r.train_error, r.test_error);
        }
        out
    }
}

pub fn write_history(path: &Path, history: &TrainingHistory) -> Result<()> {
    write_atomic(path, history.to_csv().as_bytes())
}

/// Tracks the best test error and decides when patience is exhausted.
/// Only strict improvements reset the counter.
#[derive(Clone, Debug)]
pub struct EarlyStopping {
    patience: usize,
    best: Option<(usize, f64)>,
}

impl EarlyStopping {
    pub fn new(patience: usize) -> Self {
        Self {
            patience,
            best: None,
        }
    }

    /// Records an epoch's test error; returns `true` when it is a new best.
    pub fn observe(&mut self, epoch: usize, test_error: f64) -> bool {
        match self.best {
            Some((_, best)) if test_error >= best => false,
            _ => {
                self.best = Some((epoch, test_error));
                true
            }
        }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|(e, _)| e)
    }

    /// Whether training should halt after `epoch`.
    pub fn exhausted(&self, epoch: usize) -> bool {
        self.best
            .is_some_and(|(best, _)| epoch.saturating_sub(best) >= self.patience)
    }
}

fn check_samples(net: &Network, set: &[Sample], name: &str) -> Result<()> {
    if set.is_empty() {
        return Err(Error::EmptyDataSet(name.to_string()));
    }
    let s = &net.structure;
    for sample in set {
        if sample.input.len() != s.input_size || sample.target.len() != s.output_size {
            return Err(Error::mismatch(
                format!("{name} sample of {}->{}", s.input_size, s.output_size),
                format!("{}->{}", sample.input.len(), sample.target.len()),
            ));
        }
    }
    Ok(())
}

fn check_disjoint(train_set: &[Sample], test_set: &[Sample]) -> Result<()> {
    let train_ids: HashSet<&str> = train_set.iter().filter_map(|s| s.id.as_deref()).collect();
    if let Some(id) = test_set
        .iter()
        .filter_map(|s| s.id.as_deref())
        .find(|id| train_ids.contains(id))
    {
        return Err(Error::OverlappingSets(format!(
            "sample `{id}` is in both the training and test sets"
        )));
    }
    Ok(())
}

/// Mean sample error `sum((o - t)^2) / 2` over a set.
pub(crate) fn mean_error(net: &Network, set: &[Sample], scratch: &mut Scratch) -> f64 {
    let total: f64 = set
        .iter()
        .map(|s| {
            net.forward_into(&s.input, &mut scratch.acts);
            scratch
                .acts
                .output()
                .iter()
                .zip(&s.target)
                .map(|(o, t)| (o - t) * (o - t))
                .sum::<f64>()
                / 2.0
        })
        .sum();
    total / set.len() as f64
}

impl Network {
    /// Mean one-half squared error over `set`.
    pub fn mean_error(&self, set: &[Sample]) -> Result<f64> {
        check_samples(self, set, "evaluation")?;
        Ok(mean_error(self, set, &mut Scratch::new(self)))
    }
}

/// Online backpropagation with per-epoch shuffling and early stopping.
///
/// After every epoch the mean test error is recorded. Training halts once
/// the test error has not improved for `patience` epochs, or after
/// `max_epochs`; the returned network is the snapshot from the best epoch.
pub fn train(
    net: &Network,
    train_set: &[Sample],
    test_set: &[Sample],
    params: &TrainingParams,
) -> Result<(Network, TrainingHistory)> {
    params.validate()?;
    check_samples(net, train_set, "training")?;
    check_samples(net, test_set, "test")?;
    check_disjoint(train_set, test_set)?;

    let mut current = net.clone();
    let mut best = net.clone();
    let mut velocity = Velocity::zeros(net);
    let mut scratch = Scratch::new(net);
    let mut rng = ChaCha8Rng::seed_from_u64(params.shuffle_seed);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut stopping = EarlyStopping::new(params.patience);
    let mut epochs = Vec::new();
    let mut stopped_reason = StopReason::MaxEpochs;

    for epoch in 1..=params.max_epochs {
        order.shuffle(&mut rng);
        let mut train_total = 0.0;
        for &i in &order {
            let s = &train_set[i];
            train_total += step_with(&mut current, &s.input, &s.target, params, &mut velocity, &mut scratch)
                .map_err(|_| Error::TrainingDiverged { epoch })?;
        }
        flush(&mut current, &mut velocity, params.momentum);
        let test_error = mean_error(&current, test_set, &mut scratch);
        if !test_error.is_finite() || !current.is_finite() {
            return Err(Error::TrainingDiverged { epoch });
        }
        epochs.push(EpochRecord {
            epoch,
            train_error: train_total / train_set.len() as f64,
            test_error,
        });
        if stopping.observe(epoch, test_error) {
            best.clone_from(&current);
        }
        log::trace!("epoch {epoch}: test error {test_error}");
        if stopping.exhausted(epoch) {
            stopped_reason = StopReason::Patience;
            break;
        }
    }

    let history = TrainingHistory {
        epochs,
        best_epoch: stopping.best_epoch().unwrap_or(0),
        stopped_reason,
    };
    Ok((best, history))
}
