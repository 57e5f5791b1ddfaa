//! Exhaustive hyperparameter search ranked by validation MRR.

use std::cmp::Ordering;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{train, TrainConfig, TrainError};
use crate::kg::TemporalKg;
use crate::models::ModelKind;

/// Cartesian search space. Fields not varied come from `base`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub learning_rates: Vec<f64>,
    pub n_negs: Vec<usize>,
    pub margins: Vec<f64>,
    pub dims: Vec<usize>,
    /// Only expanded for DE models.
    pub gammas: Vec<f64>,
    pub base: TrainConfig,
}

impl Default for GridSpec {
    /// lr {0.01, 0.001, 0.0001} × n_neg {10, 30, 40} × margin {1, 5, 10, 20}
    /// × dim {50, 100, 150, 200} (× γ {0.1, 0.2} for DE), batch size 2000.
    fn default() -> Self {
        Self {
            learning_rates: vec![0.01, 0.001, 0.0001],
            n_negs: vec![10, 30, 40],
            margins: vec![1.0, 5.0, 10.0, 20.0],
            dims: vec![50, 100, 150, 200],
            gammas: vec![0.1, 0.2],
            base: TrainConfig { batch_size: 2000, ..TrainConfig::default() },
        }
    }
}

impl GridSpec {
    /// A one-point grid at `base`.
    pub fn single(base: TrainConfig) -> Self {
        Self {
            learning_rates: vec![base.learning_rate],
            n_negs: vec![base.n_neg],
            margins: vec![base.margin],
            dims: vec![base.dim],
            gammas: vec![base.gamma],
            base,
        }
    }

    pub fn points(&self, kind: ModelKind) -> Vec<TrainConfig> {
        let gammas = if kind.is_diachronic() { self.gammas.clone() } else { vec![self.base.gamma] };
        let mut points = Vec::new();
        for &learning_rate in &self.learning_rates {
            for &n_neg in &self.n_negs {
                for &margin in &self.margins {
                    for &dim in &self.dims {
                        for &gamma in &gammas {
                            points.push(TrainConfig { learning_rate, n_neg, margin, dim, gamma, ..self.base.clone() });
                        }
                    }
                }
            }
        }
        points
    }
}

/// Outcome of one grid point. Failed points carry the error message and sort
/// after every successful one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridEntry {
    pub config: TrainConfig,
    pub valid_mrr: Option<f64>,
    pub best_epoch: Option<usize>,
    pub error: Option<String>,
}

/// Descending MRR; ties by smaller dim, then smaller learning rate.
pub fn rank_entries(entries: &mut [GridEntry]) {
    entries.sort_by(|a, b| {
        let by_mrr = match (a.valid_mrr, b.valid_mrr) {
            (Some(x), Some(y)) => y.partial_cmp(&x).unwrap_or(Ordering::Equal),
            (Some(_), None) => Ordering::Less,
            (None, Some(_)) => Ordering::Greater,
            (None, None) => Ordering::Equal,
        };
        by_mrr
            .then(a.config.dim.cmp(&b.config.dim))
            .then(a.config.learning_rate.partial_cmp(&b.config.learning_rate).unwrap_or(Ordering::Equal))
    });
}

/// Trains one model per grid point (in parallel) and ranks them by
/// validation filtered MRR.
pub fn grid_search(kg: &TemporalKg, kind: ModelKind, grid: &GridSpec) -> Result<Vec<GridEntry>, TrainError> {
    let points = grid.points(kind);
    if points.is_empty() {
        return Err(TrainError::Config("empty grid".into()));
    }
    if kg.valid().is_empty() {
        return Err(TrainError::Config("grid search needs a non-empty valid split".into()));
    }
    let mut entries: Vec<GridEntry> = points
        .into_par_iter()
        .map(|config| match train(kg, kind, &config) {
            Ok(out) => GridEntry {
                valid_mrr: out.best_valid.as_ref().map(|r| r.mrr()),
                best_epoch: Some(out.best_epoch),
                error: None,
                config,
            },
            Err(e) => GridEntry { config, valid_mrr: None, best_epoch: None, error: Some(e.to_string()) },
        })
        .collect();
    rank_entries(&mut entries);
    Ok(entries)
}

/// `rank,learning_rate,n_neg,margin,dim,gamma,valid_mrr,best_epoch,error`
pub fn write_grid_csv(out: impl Write, entries: &[GridEntry]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rank", "learning_rate", "n_neg", "margin", "dim", "gamma", "valid_mrr", "best_epoch", "error"])?;
    for (i, e) in entries.iter().enumerate() {
        let c = &e.config;
        w.write_record([
            (i + 1).to_string(),
            c.learning_rate.to_string(),
            c.n_neg.to_string(),
            c.margin.to_string(),
            c.dim.to_string(),
            c.gamma.to_string(),
            e.valid_mrr.map(|m| format!("{m:.6}")).unwrap_or_default(),
            e.best_epoch.map(|b| b.to_string()).unwrap_or_default(),
            e.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
