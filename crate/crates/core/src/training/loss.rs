use serde::{Deserialize, Serialize};

use crate::kg::Quadruple;
use crate::models::{Gradients, ModelError, ModelParameters, ScoreTape};

/// Whether the batch loss is summed over pairs or averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossReduction {
    #[default]
    Sum,
    Mean,
}

/// `Σ max(0, margin − f_pos + f_neg)` where `neg_scores` holds
/// `neg_scores.len() / pos_scores.len()` consecutive negatives per positive.
pub fn triplet_loss(pos_scores: &[f64], neg_scores: &[f64], margin: f64) -> f64 {
    if pos_scores.is_empty() {
        return 0.0;
    }
    let per = neg_scores.len() / pos_scores.len();
    pos_scores
        .iter()
        .zip(neg_scores.chunks(per.max(1)))
        .map(|(p, negs)| negs.iter().map(|n| (margin - p + n).max(0.0)).sum::<f64>())
        .sum()
}

/// Loss over a batch, each positive paired only with its own negatives.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchLoss {
    /// Reduced loss value (what is differentiated).
    pub value: f64,
    /// Unreduced sum over all pairs.
    pub total: f64,
    pub pairs: usize,
}

/// Computes the triplet loss of a batch and accumulates its gradient into
/// `grads` (which is not zeroed here).
pub fn batch_loss_and_gradient(
    params: &ModelParameters,
    positives: &[Quadruple],
    negatives: &[Vec<Quadruple>],
    margin: f64,
    reduction: LossReduction,
    grads: &mut Gradients,
) -> Result<BatchLoss, ModelError> {
    let pairs: usize = negatives.iter().map(Vec::len).sum();
    let scale = match reduction {
        LossReduction::Sum => 1.0,
        LossReduction::Mean if pairs > 0 => 1.0 / pairs as f64,
        LossReduction::Mean => 0.0,
    };
    let mut tape = ScoreTape::new(params);
    let mut total = 0.0;
    for (pos, negs) in positives.iter().zip(negatives) {
        let f_pos = tape.score(pos)?;
        let mut pos_coeff = 0.0;
        for neg in negs {
            let term = margin - f_pos + tape.score(neg)?;
            if term > 0.0 {
                total += term;
                pos_coeff -= scale;
                tape.backward(neg, scale, grads)?;
            }
        }
        tape.backward(pos, pos_coeff, grads)?;
    }
    tape.finish(grads);
    Ok(BatchLoss { value: total * scale, total, pairs })
}
