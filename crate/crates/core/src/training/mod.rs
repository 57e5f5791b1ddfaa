//! Margin-loss training with uniform negative sampling and Adam.

pub mod adam;
pub mod grid;
pub mod loss;
pub mod sampling;

use std::io::{self, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::evaluation::{evaluate, EvalError, EvalOptions, EvaluationReport};
use crate::kg::TemporalKg;
use crate::models::{init_parameters, Gradients, ModelDims, ModelError, ModelKind, ModelParameters, RotationNorm};
pub use adam::{adam_step, AdamState};
pub use grid::{grid_search, GridEntry, GridSpec};
pub use loss::{batch_loss_and_gradient, triplet_loss, LossReduction};
pub use sampling::sample_negatives;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("training split is empty")]
    EmptyTrain,
    #[error("negative sampling needs at least 2 entities, found {0}")]
    TooFewEntities(usize),
    #[error("non-finite gradient in tensor {0:?}")]
    NonFiniteGradient(String),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged {
        epoch: usize,
        reason: String,
        /// Parameters before the failing update.
        last_finite: Box<ModelParameters>,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Hyperparameters of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub dim: usize,
    pub margin: f64,
    pub n_neg: usize,
    pub batch_size: usize,
    pub n_epochs: usize,
    /// Temporal ratio of DE models; ignored by the others.
    pub gamma: f64,
    pub seed: u64,
    /// Validation rounds without improvement before stopping.
    pub patience: usize,
    pub eval_every: usize,
    pub loss_reduction: LossReduction,
    pub norm: RotationNorm,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.001,
            dim: 100,
            margin: 1.0,
            n_neg: 10,
            batch_size: 2000,
            n_epochs: 500,
            gamma: 0.1,
            seed: 0,
            patience: 20,
            eval_every: 5,
            loss_reduction: LossReduction::Sum,
            norm: RotationNorm::L1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |msg: &str| Err(TrainError::Config(msg.to_string()));
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return fail("learning_rate must be positive");
        }
        if !self.margin.is_finite() || self.margin <= 0.0 {
            return fail("margin must be positive");
        }
        if self.dim == 0 || self.n_neg == 0 || self.batch_size == 0 || self.eval_every == 0 || self.patience == 0 {
            return fail("dim, n_neg, batch_size, eval_every and patience must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return fail("gamma must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn model_dims(&self, kg: &TemporalKg) -> ModelDims {
        let mut dims = ModelDims::for_kg(kg, self.dim, self.gamma);
        dims.norm = self.norm;
        dims
    }
}

/// Validation metrics recorded in the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidMetrics {
    pub mrr: f64,
    pub mr: f64,
    pub hits_at_1: f64,
    pub hits_at_3: f64,
    pub hits_at_10: f64,
}

impl From<&EvaluationReport> for ValidMetrics {
    fn from(r: &EvaluationReport) -> Self {
        Self {
            mrr: r.mrr(),
            mr: r.mr(),
            hits_at_1: r.hits_at(1).unwrap_or(f64::NAN),
            hits_at_3: r.hits_at(3).unwrap_or(f64::NAN),
            hits_at_10: r.hits_at(10).unwrap_or(f64::NAN),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Sum of hinge terms over the epoch.
    pub loss: f64,
    /// `loss` divided by the number of positive/negative pairs.
    pub mean_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub valid: Option<ValidMetrics>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochRecord>,
}

impl TrainLog {
    /// One JSON object per epoch.
    pub fn write_jsonl(&self, mut out: impl Write) -> io::Result<()> {
        for record in &self.epochs {
            serde_json::to_writer(&mut out, record)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Best-validation parameters (final ones when nothing was validated).
    pub params: ModelParameters,
    pub log: TrainLog,
    pub best_epoch: usize,
    pub best_valid: Option<EvaluationReport>,
}

/// Fixed derivation of the sampling/shuffling stream from the run seed, so
/// it never coincides with the initialisation stream.
fn training_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15)
}

/// Trains `kind` on the train split of `kg`, validating on the valid split
/// every `eval_every` epochs and keeping the best parameters.
pub fn train(kg: &TemporalKg, kind: ModelKind, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    config.validate()?;
    if kg.train().is_empty() {
        return Err(TrainError::EmptyTrain);
    }
    if kg.n_entities() < 2 {
        return Err(TrainError::TooFewEntities(kg.n_entities()));
    }
    let mut params = init_parameters(kind, &config.model_dims(kg), config.seed)?;
    let mut state = AdamState::new(&params);
    let mut grads = Gradients::zeros_like(&params);
    let mut rng = training_rng(config.seed);
    let eval_options = EvalOptions::default();

    let mut log = TrainLog::default();
    let mut best: Option<(f64, usize, ModelParameters, EvaluationReport)> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..kg.train().len()).collect();
    let n_entities = kg.n_entities();

    for epoch in 1..=config.n_epochs {
        order.shuffle(&mut rng);
        let (mut epoch_loss, mut epoch_pairs) = (0.0, 0usize);
        for chunk in order.chunks(config.batch_size) {
            let positives: Vec<_> = chunk.iter().map(|&i| kg.train()[i]).collect();
            let negatives = positives
                .iter()
                .map(|q| sample_negatives(q, config.n_neg, n_entities, &mut rng))
                .collect::<Result<Vec<_>, _>>()?;
            grads.zero();
            let batch = batch_loss_and_gradient(
                &params,
                &positives,
                &negatives,
                config.margin,
                config.loss_reduction,
                &mut grads,
            )?;
            if !batch.total.is_finite() {
                return Err(diverged(epoch, "loss is not finite".into(), params));
            }
            if let Err(e) = adam_step(&mut params, &grads, &mut state, config.learning_rate) {
                return Err(diverged(epoch, e.to_string(), params));
            }
            epoch_loss += batch.total;
            epoch_pairs += batch.pairs;
        }
        if !params.is_finite() {
            return Err(diverged(epoch, "parameters are not finite".into(), params));
        }

        let mut record = EpochRecord {
            epoch,
            loss: epoch_loss,
            mean_loss: epoch_loss / epoch_pairs.max(1) as f64,
            valid: None,
        };
        let mut stop = false;
        if epoch % config.eval_every == 0 && !kg.valid().is_empty() {
            let report = evaluate(kg.valid(), &params, kg, &eval_options)?;
            record.valid = Some(ValidMetrics::from(&report));
            let improved = best.as_ref().is_none_or(|(mrr, ..)| report.mrr() > *mrr);
            if improved {
                best = Some((report.mrr(), epoch, params.clone(), report));
                stale = 0;
            } else {
                stale += 1;
                stop = stale >= config.patience;
            }
        }
        log::debug!("epoch {epoch}: loss {:.6}", record.loss);
        log.epochs.push(record);
        if stop {
            log::info!("early stop at epoch {epoch}");
            break;
        }
    }

    Ok(match best {
        Some((_, best_epoch, params, report)) => TrainOutcome { params, log, best_epoch, best_valid: Some(report) },
        None => TrainOutcome { best_epoch: log.epochs.len(), params, log, best_valid: None },
    })
}

fn diverged(epoch: usize, reason: String, params: ModelParameters) -> TrainError {
    TrainError::Diverged { epoch, reason, last_finite: Box::new(params) }
}
