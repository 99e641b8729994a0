//! Mini-batch training with per-epoch validation and best-checkpoint
//! selection.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{evaluate, MetricsReport};
use super::HarnessError;
use crate::autodiff::{Adam, ParamGroup};
use crate::data::NUM_TRAITS;
use crate::model::{DenModel, PreparedUser};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr_encoder: f64,
    pub lr_other: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Probability at or above which a trait is predicted as 1.
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr_encoder: 2e-5,
            lr_other: 2e-3,
            batch_size: 32,
            max_epochs: 10,
            seed: 1,
            threshold: 0.5,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let ok_lr = |lr: f64| lr.is_finite() && lr >= 0.0;
        if !ok_lr(self.lr_encoder) || !ok_lr(self.lr_other) {
            return Err(HarnessError::Config("learning rates must be finite and non-negative".into()));
        }
        if self.batch_size == 0 {
            return Err(HarnessError::Config("batch_size must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(HarnessError::Config("threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// Validation scores recorded in the history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValScores {
    pub per_trait: [f64; NUM_TRAITS],
    pub average: f64,
}

impl From<&MetricsReport> for ValScores {
    fn from(r: &MetricsReport) -> Self {
        Self {
            per_trait: r.per_trait,
            average: r.average,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over batches of the per-batch mean loss.
    pub train_loss: f64,
    pub val: ValScores,
    /// Whether this epoch became the retained checkpoint.
    pub improved: bool,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub best: DenModel,
    pub best_epoch: usize,
    pub best_val: ValScores,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn history_jsonl(&self) -> String {
        history_jsonl(&self.history)
    }
}

pub fn history_jsonl(history: &[EpochRecord]) -> String {
    history
        .iter()
        .map(|r| serde_json::to_string(r).expect("record serializes") + "\n")
        .collect()
}

/// One optimizer step over `batch`. Returns the mean loss.
pub fn train_step(model: &mut DenModel, adam: &mut Adam, batch: &[&PreparedUser]) -> Result<f64, HarnessError> {
    let results = batch
        .par_iter()
        .map(|u| model.user_gradients(u))
        .collect::<Result<Vec<_>, _>>()?;
    let scale = 1.0 / batch.len() as f64;
    model.params.zero_grad();
    let mut total = 0.0;
    for (loss, grads) in &results {
        total += loss;
        model.params.accumulate(grads, scale);
    }
    adam.step(&mut model.params)?;
    Ok(total * scale)
}

/// Trains for `max_epochs` and keeps the parameters with the best validation
/// average Macro-F1, earliest epoch on ties. `on_epoch` sees each record as
/// it is produced.
pub fn train(
    mut model: DenModel,
    train_users: &[PreparedUser],
    val_users: &[PreparedUser],
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<TrainOutcome, HarnessError> {
    cfg.validate()?;
    if train_users.is_empty() || val_users.is_empty() {
        return Err(HarnessError::EmptySplit);
    }
    let mut adam = Adam::new(&model.params, |g| match g {
        ParamGroup::Encoder => cfg.lr_encoder,
        ParamGroup::Other => cfg.lr_other,
    });
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..train_users.len()).collect();
    let mut history = Vec::with_capacity(cfg.max_epochs);
    let mut best: Option<(DenModel, usize, ValScores)> = None;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut batch_losses = Vec::new();
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let batch: Vec<&PreparedUser> = chunk.iter().map(|&i| &train_users[i]).collect();
            let loss = train_step(&mut model, &mut adam, &batch).map_err(|e| match e {
                HarnessError::Model(m) if is_numeric(&m) => HarnessError::Diverged {
                    epoch,
                    batch: b,
                    detail: m.to_string(),
                },
                e => e,
            })?;
            if !loss.is_finite() {
                return Err(HarnessError::Diverged {
                    epoch,
                    batch: b,
                    detail: format!("loss {loss}"),
                });
            }
            batch_losses.push(loss);
        }
        let train_loss = batch_losses.iter().sum::<f64>() / batch_losses.len() as f64;
        let val = ValScores::from(&evaluate(&model, val_users, cfg.threshold)?);
        let improved = best.as_ref().is_none_or(|(_, _, b)| val.average > b.average);
        if improved {
            best = Some((model.clone(), epoch, val.clone()));
        }
        let record = EpochRecord {
            epoch,
            train_loss,
            val,
            improved,
        };
        on_epoch(&record);
        history.push(record);
    }
    let (best, best_epoch, best_val) = match best {
        Some(b) => b,
        None => {
            // zero epochs: the initial parameters are the result
            let val = ValScores::from(&evaluate(&model, val_users, cfg.threshold)?);
            (model, 0, val)
        }
    };
    Ok(TrainOutcome {
        best,
        best_epoch,
        best_val,
        history,
    })
}

fn is_numeric(e: &crate::model::ModelError) -> bool {
    matches!(
        e,
        crate::model::ModelError::Autodiff(crate::autodiff::AutodiffError::NonFinite { .. })
    )
}
