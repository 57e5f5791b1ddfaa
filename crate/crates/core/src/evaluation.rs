//! Filtered head/tail ranking and the MRR / Hits@k / MR metrics.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, FilterIndex, Quadruple, TemporalKg};
use crate::models::{ModelError, ModelParameters, Slot};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("cannot evaluate on an empty split")]
    EmptyTest,
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How candidates scoring exactly the same as the true entity are counted.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TiePolicy {
    /// Every tie ranks ahead of the true entity (`≥` in the rank formula).
    #[default]
    Pessimistic,
    /// Ties share the mean of the positions they occupy.
    MeanOverTies,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub ks: Vec<usize>,
    pub tie_policy: TiePolicy,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self { ks: vec![1, 3, 10], tie_policy: TiePolicy::Pessimistic }
    }
}

fn substitute(q: &Quadruple, slot: Slot, e: EntityId) -> Quadruple {
    match slot {
        Slot::Head => Quadruple { head: e, ..*q },
        Slot::Tail => Quadruple { tail: e, ..*q },
    }
}

fn true_entity(q: &Quadruple, slot: Slot) -> EntityId {
    match slot {
        Slot::Head => q.head,
        Slot::Tail => q.tail,
    }
}

/// Rank of the true entity given the scores of every candidate (indexed by
/// entity id). Candidates forming a known fact are skipped; the true entity
/// is never compared against itself.
pub fn rank_from_scores(scores: &[f64], q: &Quadruple, slot: Slot, filter: &FilterIndex, ties: TiePolicy) -> f64 {
    let truth = true_entity(q, slot);
    let target = scores[truth.0];
    let (mut above, mut level) = (0usize, 0usize);
    for (e, &s) in scores.iter().enumerate() {
        if e == truth.0 || s < target || s.is_nan() {
            continue;
        }
        if filter.contains(&substitute(q, slot, EntityId(e))) {
            continue;
        }
        if s > target {
            above += 1;
        } else {
            level += 1;
        }
    }
    match ties {
        TiePolicy::Pessimistic => (above + level + 1) as f64,
        TiePolicy::MeanOverTies => above as f64 + 1.0 + level as f64 / 2.0,
    }
}

/// Filtered rank of the true entity in `slot`, with pessimistic ties.
pub fn filtered_rank(q: &Quadruple, slot: Slot, params: &ModelParameters, filter: &FilterIndex) -> Result<usize, EvalError> {
    Ok(filtered_rank_with(q, slot, params, filter, TiePolicy::Pessimistic)? as usize)
}

pub fn filtered_rank_with(
    q: &Quadruple,
    slot: Slot,
    params: &ModelParameters,
    filter: &FilterIndex,
    ties: TiePolicy,
) -> Result<f64, EvalError> {
    let scores = params.score_candidates(q, slot)?;
    Ok(rank_from_scores(&scores, q, slot, filter, ties))
}

/// Head and tail rank of one test fact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankPair {
    pub head: f64,
    pub tail: f64,
}

/// MRR, MR and Hits@k over a set of head/tail rank pairs. Each quadruple
/// contributes two queries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mrr: f64,
    pub mr: f64,
    pub hits: BTreeMap<usize, f64>,
    pub n_test: usize,
}

impl Metrics {
    pub fn from_ranks(ranks: &[RankPair], ks: &[usize]) -> Self {
        let n = ranks.len() as f64;
        let denom = 2.0 * n;
        let mut mrr = 0.0;
        let mut mr = 0.0;
        for p in ranks {
            mrr += 1.0 / p.head + 1.0 / p.tail;
            mr += p.head + p.tail;
        }
        let hits = ks
            .iter()
            .map(|&k| {
                let k_f = k as f64;
                let count: usize = ranks.iter().map(|p| (p.head <= k_f) as usize + (p.tail <= k_f) as usize).sum();
                (k, count as f64 / denom)
            })
            .collect();
        Self { mrr: mrr / denom, mr: mr / denom, hits, n_test: ranks.len() }
    }

    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.hits.get(&k).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    #[serde(flatten)]
    pub overall: Metrics,
    pub per_relation: BTreeMap<String, Metrics>,
    pub ranks: Vec<RankPair>,
}

impl EvaluationReport {
    pub fn mrr(&self) -> f64 {
        self.overall.mrr
    }

    pub fn mr(&self) -> f64 {
        self.overall.mr
    }

    pub fn hits_at(&self, k: usize) -> Option<f64> {
        self.overall.hits_at(k)
    }

    /// Aligned text table: Hit@k columns, then MRR, in percent with two
    /// decimals, followed by MR.
    pub fn to_table(&self, label: &str) -> String {
        let mut header = format!("{:<16}", "Model");
        let mut row = format!("{label:<16}");
        for (k, v) in &self.overall.hits {
            let _ = write!(header, " {:>8}", format!("Hit@{k}"));
            let _ = write!(row, " {:>8.2}", v * 100.0);
        }
        let _ = write!(header, " {:>8} {:>10}", "MRR", "MR");
        let _ = write!(row, " {:>8.2} {:>10.2}", self.overall.mrr * 100.0, self.overall.mr);
        format!("{header}\n{row}\n")
    }
}

/// Ranks every fact of `split` on both sides against all entities and
/// aggregates the metrics.
pub fn evaluate(
    split: &[Quadruple],
    params: &ModelParameters,
    kg: &TemporalKg,
    options: &EvalOptions,
) -> Result<EvaluationReport, EvalError> {
    evaluate_with_filter(split, params, kg.filter(), |r| kg.relation_name(r).to_string(), options)
}

pub fn evaluate_with_filter(
    split: &[Quadruple],
    params: &ModelParameters,
    filter: &FilterIndex,
    relation_name: impl Fn(crate::kg::RelationId) -> String,
    options: &EvalOptions,
) -> Result<EvaluationReport, EvalError> {
    if split.is_empty() {
        return Err(EvalError::EmptyTest);
    }
    let ranks: Vec<RankPair> = split
        .par_iter()
        .map(|q| {
            Ok(RankPair {
                head: filtered_rank_with(q, Slot::Head, params, filter, options.tie_policy)?,
                tail: filtered_rank_with(q, Slot::Tail, params, filter, options.tie_policy)?,
            })
        })
        .collect::<Result<_, EvalError>>()?;

    let mut grouped: BTreeMap<String, Vec<RankPair>> = BTreeMap::new();
    for (q, pair) in split.iter().zip(&ranks) {
        grouped.entry(relation_name(q.relation)).or_default().push(*pair);
    }
    let per_relation = grouped.into_iter().map(|(name, rs)| (name, Metrics::from_ranks(&rs, &options.ks))).collect();

    Ok(EvaluationReport { overall: Metrics::from_ranks(&ranks, &options.ks), per_relation, ranks })
}
