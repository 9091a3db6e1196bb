//! Epoch loop with validation-based early stopping.

use serde::{Deserialize, Serialize};

use super::{Adam, NnError};

/// Stop once the best validation loss has failed to improve by at least
/// `min_delta` for `patience` consecutive epochs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopRule {
    pub min_delta: f64,
    pub patience: usize,
}

impl EarlyStopRule {
    pub fn new(min_delta: f64, patience: usize) -> Result<Self, NnError> {
        if !(min_delta.is_finite() && min_delta > 0.0) || patience == 0 {
            return Err(NnError::InvalidConfig(format!(
                "early stop needs min_delta > 0 and patience >= 1, got {min_delta}, {patience}"
            )));
        }
        Ok(Self { min_delta, patience })
    }
}

/// A training problem: owns its data splits and knows how to run one epoch
/// of optimization and score a model on the validation split.
pub trait Objective {
    type Model: Clone;

    /// One pass over the training split; returns the mean training loss.
    fn train_epoch(
        &mut self,
        model: &mut Self::Model,
        optimizer: &mut Adam,
        epoch: usize,
    ) -> Result<f64, NnError>;

    fn validation_loss(&self, model: &Self::Model) -> Result<f64, NnError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_loss: f64,
}

#[derive(Debug, Clone)]
pub struct TrainingOutcome<M> {
    /// Snapshot with the lowest validation loss seen.
    pub best: M,
    pub best_epoch: usize,
    pub best_validation_loss: f64,
    pub history: Vec<EpochRecord>,
    /// True when training ended through the early-stop rule.
    pub stopped_early: bool,
}

impl<M> TrainingOutcome<M> {
    pub fn epochs_run(&self) -> usize {
        self.history.len()
    }
}

pub fn run_training<O: Objective>(
    mut model: O::Model,
    objective: &mut O,
    optimizer: &mut Adam,
    rule: EarlyStopRule,
    max_epochs: usize,
) -> Result<TrainingOutcome<O::Model>, NnError> {
    if max_epochs == 0 {
        return Err(NnError::InvalidConfig("max_epochs must be >= 1".into()));
    }
    let mut history = Vec::new();
    let mut best: Option<(O::Model, usize, f64)> = None;
    // Reference level for the patience counter; only moves on improvements of
    // at least min_delta.
    let mut plateau_ref = f64::INFINITY;
    let mut stale = 0;
    let mut stopped_early = false;

    for epoch in 1..=max_epochs {
        let train_loss = objective.train_epoch(&mut model, optimizer, epoch)?;
        let validation_loss = objective.validation_loss(&model)?;
        if !validation_loss.is_finite() || !train_loss.is_finite() {
            return Err(NnError::DivergenceDetected { epoch, loss: validation_loss });
        }
        history.push(EpochRecord { epoch, train_loss, validation_loss });

        if best.as_ref().map_or(true, |(_, _, l)| validation_loss < *l) {
            best = Some((model.clone(), epoch, validation_loss));
        }
        if validation_loss < plateau_ref - rule.min_delta {
            plateau_ref = validation_loss;
            stale = 0;
        } else {
            stale += 1;
            if stale >= rule.patience {
                stopped_early = true;
                break;
            }
        }
    }

    let (best, best_epoch, best_validation_loss) = best.expect("at least one epoch ran");
    Ok(TrainingOutcome { best, best_epoch, best_validation_loss, history, stopped_early })
}
