//! Scoring job–skill facts across a date grid: per-skill trajectories, their
//! mean, and top-k heatmaps, plus CSV writers for both.
//!
//! Scores are raw plausibilities on each model's own scale. Only orderings and
//! trends within one model are meaningful; absolute values do not compare
//! across models.

use std::collections::HashSet;
use std::io::Write;

use chrono::{Datelike, Months, NaiveDate};
use log::warn;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, KgError, RelationId, TemporalKg, Timestamp};
use crate::models::{ModelError, ModelParameters};

/// Label used for the aggregate rows of a series CSV.
pub const MEAN_LABEL: &str = "__mean__";

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("no skills to score")]
    EmptySkills,
    #[error("grid start {start} is after end {end}")]
    ReversedGrid { start: Timestamp, end: Timestamp },
    #[error("explicit grid dates must be strictly increasing ({prev} then {next})")]
    UnsortedGrid { prev: Timestamp, next: Timestamp },
    #[error("grid has no points")]
    EmptyGrid,
    #[error("top_k must be at least 1")]
    ZeroTopK,
    #[error("unknown entity id {0}")]
    UnknownEntity(usize),
    #[error("unknown relation id {0}")]
    UnknownRelation(usize),
    #[error("non-finite score for skill {skill} at {time}")]
    NonFinite { skill: usize, time: Timestamp },
    #[error(transparent)]
    Kg(#[from] KgError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimeStep {
    Monthly,
    Quarterly,
    Yearly,
    Explicit(Vec<Timestamp>),
}

impl TimeStep {
    fn months(&self) -> Option<u32> {
        match self {
            TimeStep::Monthly => Some(1),
            TimeStep::Quarterly => Some(3),
            TimeStep::Yearly => Some(12),
            TimeStep::Explicit(_) => None,
        }
    }
}

/// Dates to score at. Calendar steps land on period starts (the 1st of each
/// month; Jan/Apr/Jul/Oct 1 for quarters; Jan 1 for years) and include both
/// endpoints when they fall on a boundary.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub start: Timestamp,
    pub end: Timestamp,
    pub step: TimeStep,
}

impl TimeGrid {
    pub fn new(start: Timestamp, end: Timestamp, step: TimeStep) -> Result<Self, ForecastError> {
        if start > end {
            return Err(ForecastError::ReversedGrid { start, end });
        }
        if let TimeStep::Explicit(dates) = &step {
            if dates.is_empty() {
                return Err(ForecastError::EmptyGrid);
            }
            if let Some(w) = dates.windows(2).find(|w| w[0] >= w[1]) {
                return Err(ForecastError::UnsortedGrid { prev: w[0], next: w[1] });
            }
        }
        Ok(Self { start, end, step })
    }

    /// Explicit list of dates; start and end are its first and last entries.
    pub fn explicit(dates: Vec<Timestamp>) -> Result<Self, ForecastError> {
        let (Some(&start), Some(&end)) = (dates.first(), dates.last()) else {
            return Err(ForecastError::EmptyGrid);
        };
        Self::new(start, end, TimeStep::Explicit(dates))
    }

    pub fn points(&self) -> Vec<Timestamp> {
        let Some(months) = self.step.months() else {
            let TimeStep::Explicit(dates) = &self.step else { unreachable!() };
            return dates.clone();
        };
        if self.start == self.end {
            return vec![self.start];
        }
        let start = self.start.date();
        let month0 = start.month0() / months * months;
        let mut cursor = NaiveDate::from_ymd_opt(start.year(), month0 + 1, 1).expect("valid period start");
        if cursor < start {
            cursor = cursor + Months::new(months);
        }
        let mut points = Vec::new();
        while cursor <= self.end.date() {
            match Timestamp::new(cursor) {
                Ok(ts) => points.push(ts),
                Err(_) => break,
            }
            cursor = cursor + Months::new(months);
        }
        points
    }
}

/// `(job, relation, skill)` triples to score. With `exclude_seen`, pairs that
/// occur in the training split at any date are dropped.
pub fn candidate_facts(
    job: EntityId,
    relation: RelationId,
    skills: &[EntityId],
    kg: &TemporalKg,
    exclude_seen: bool,
) -> Result<Vec<(EntityId, RelationId, EntityId)>, ForecastError> {
    if skills.is_empty() {
        return Err(ForecastError::EmptySkills);
    }
    for e in std::iter::once(&job).chain(skills) {
        if e.0 >= kg.n_entities() {
            return Err(ForecastError::UnknownEntity(e.0));
        }
    }
    if relation.0 >= kg.n_relations() {
        return Err(ForecastError::UnknownRelation(relation.0));
    }
    let seen: HashSet<EntityId> = if exclude_seen {
        kg.train().iter().filter(|q| q.head == job && q.relation == relation).map(|q| q.tail).collect()
    } else {
        HashSet::new()
    };
    Ok(skills.iter().filter(|s| !seen.contains(s)).map(|&s| (job, relation, s)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForecastPoint {
    pub time: Timestamp,
    pub score: f64,
    /// The model had no embedding for this date and used the nearest one.
    pub mapped: bool,
}

/// Scores of one tail (or the mean over a set of tails) along a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub head: EntityId,
    pub relation: RelationId,
    /// `None` for the aggregate series.
    pub tail: Option<EntityId>,
    pub points: Vec<ForecastPoint>,
}

impl ForecastSeries {
    pub fn mean_score(&self) -> f64 {
        self.points.iter().map(|p| p.score).sum::<f64>() / self.points.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forecast {
    pub skills: Vec<ForecastSeries>,
    pub mean: ForecastSeries,
}

/// Scores `(job, relation, skill, τ)` for every skill and grid date, plus the
/// per-date mean across skills.
pub fn forecast(
    job: EntityId,
    relation: RelationId,
    skills: &[EntityId],
    grid: &[Timestamp],
    params: &ModelParameters,
) -> Result<Forecast, ForecastError> {
    if skills.is_empty() {
        return Err(ForecastError::EmptySkills);
    }
    if grid.is_empty() {
        return Err(ForecastError::EmptyGrid);
    }
    let heads = vec![job; skills.len()];
    let mut series: Vec<ForecastSeries> = skills
        .iter()
        .map(|&s| ForecastSeries { head: job, relation, tail: Some(s), points: Vec::with_capacity(grid.len()) })
        .collect();
    let mut mean = ForecastSeries { head: job, relation, tail: None, points: Vec::with_capacity(grid.len()) };
    for &time in grid {
        let mapped = params.time_context(time)?.mapped;
        let scores = params.score_batch(&heads, relation, skills, time)?;
        if let Some(i) = scores.iter().position(|s| !s.is_finite()) {
            return Err(ForecastError::NonFinite { skill: skills[i].0, time });
        }
        for (s, &score) in series.iter_mut().zip(&scores) {
            s.points.push(ForecastPoint { time, score, mapped });
        }
        let avg = scores.iter().sum::<f64>() / scores.len() as f64;
        mean.points.push(ForecastPoint { time, score: avg, mapped });
    }
    Ok(Forecast { skills: series, mean })
}

/// Top-k skills by mean score over the grid, best first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub times: Vec<Timestamp>,
    pub skills: Vec<EntityId>,
    /// `values[i][j]` is the score of `skills[i]` at `times[j]`.
    pub values: Vec<Vec<f64>>,
}

pub fn heatmap_matrix(
    job: EntityId,
    relation: RelationId,
    skills: &[EntityId],
    top_k: usize,
    grid: &[Timestamp],
    params: &ModelParameters,
) -> Result<Heatmap, ForecastError> {
    if top_k == 0 {
        return Err(ForecastError::ZeroTopK);
    }
    if top_k > skills.len() {
        warn!("top_k {top_k} exceeds the {} available skills; keeping all of them", skills.len());
    }
    let fc = forecast(job, relation, skills, grid, params)?;
    heatmap_from_series(&fc.skills, top_k, grid)
}

/// Ranks already-computed series by mean score (stable, so equal means keep
/// input order) and keeps the first `top_k`.
pub fn heatmap_from_series(series: &[ForecastSeries], top_k: usize, grid: &[Timestamp]) -> Result<Heatmap, ForecastError> {
    if top_k == 0 {
        return Err(ForecastError::ZeroTopK);
    }
    let mut ranked: Vec<(f64, &ForecastSeries)> = series.iter().map(|s| (s.mean_score(), s)).collect();
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    ranked.truncate(top_k);
    Ok(Heatmap {
        times: grid.to_vec(),
        skills: ranked.iter().map(|(_, s)| s.tail.expect("per-skill series")).collect(),
        values: ranked.iter().map(|(_, s)| s.points.iter().map(|p| p.score).collect()).collect(),
    })
}

/// `date,skill,score` rows for every skill series followed by the mean series
/// under the label [`MEAN_LABEL`]. A `mapped` column is added when any point
/// had to fall back to a nearby date.
pub fn write_series_csv(out: impl Write, fc: &Forecast, name: impl Fn(EntityId) -> String) -> csv::Result<()> {
    let any_mapped = fc.mean.points.iter().any(|p| p.mapped);
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["date", "skill", "score"];
    if any_mapped {
        header.push("mapped");
    }
    w.write_record(&header)?;
    let labelled = fc.skills.iter().map(|s| (name(s.tail.expect("per-skill series")), s));
    for (label, s) in labelled.chain(std::iter::once((MEAN_LABEL.to_string(), &fc.mean))) {
        for p in &s.points {
            let mut row = vec![p.time.to_string(), label.clone(), p.score.to_string()];
            if any_mapped {
                row.push(p.mapped.to_string());
            }
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// First row: `skill` then the grid dates; one row per skill after that.
pub fn write_heatmap_csv(out: impl Write, hm: &Heatmap, name: impl Fn(EntityId) -> String) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = std::iter::once("skill".to_string()).chain(hm.times.iter().map(|t| t.to_string())).collect();
    w.write_record(&header)?;
    for (skill, row) in hm.skills.iter().zip(&hm.values) {
        let record: Vec<String> = std::iter::once(name(*skill)).chain(row.iter().map(|v| v.to_string())).collect();
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
