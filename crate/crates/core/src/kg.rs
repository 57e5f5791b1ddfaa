//! Temporal knowledge graph data model.
//!
//! Facts are quadruples `(head, relation, tail, timestamp)` stored in
//! integer-id form against two string vocabularies. A [`TemporalKg`] owns the
//! train/valid/test splits, the sorted list of distinct timestamps and the
//! filter set used by filtered ranking.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of digit tokens used to spell out a date (4 year, 2 month, 2 day).
pub const DATE_TOKENS: usize = 8;
/// Size of the temporal token vocabulary: digits 0-9 tagged with y/m/d.
pub const TEMPORAL_VOCAB: usize = 30;

const DAYS_PER_YEAR: f64 = 365.25;

#[derive(Debug, Error, PartialEq)]
pub enum KgError {
    #[error("invalid {field} in date {input:?}")]
    BadDate { field: &'static str, input: String },
    #[error("year {0} cannot be encoded with four digits")]
    YearOutOfRange(i32),
    #[error("{count} quadruple(s) appear in more than one split, e.g. {example}")]
    SplitOverlap { count: usize, example: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct EntityId(pub usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct RelationId(pub usize);

/// Calendar component a temporal digit token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DateUnit {
    Year,
    Month,
    Day,
}

/// One suffix-tagged digit, e.g. `5y` or `0m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TemporalToken {
    pub digit: u8,
    pub unit: DateUnit,
}

impl TemporalToken {
    /// Dense index in `0..TEMPORAL_VOCAB`.
    pub fn index(self) -> usize {
        let unit = match self.unit {
            DateUnit::Year => 0,
            DateUnit::Month => 1,
            DateUnit::Day => 2,
        };
        unit * 10 + self.digit as usize
    }
}

impl fmt::Display for TemporalToken {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let suffix = match self.unit {
            DateUnit::Year => 'y',
            DateUnit::Month => 'm',
            DateUnit::Day => 'd',
        };
        write!(f, "{}{}", self.digit, suffix)
    }
}

/// Fractional years between a timestamp and a reference date.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NumericTime {
    pub value: f64,
    /// Set when the timestamp precedes the reference date.
    pub before_epoch: bool,
}

/// A calendar date attached to a fact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Timestamp(NaiveDate);

impl Timestamp {
    pub fn new(date: NaiveDate) -> Result<Self, KgError> {
        if !(0..=9999).contains(&date.year()) {
            return Err(KgError::YearOutOfRange(date.year()));
        }
        Ok(Self(date))
    }

    pub fn from_ymd(year: i32, month: u32, day: u32) -> Result<Self, KgError> {
        let date = NaiveDate::from_ymd_opt(year, month, day).ok_or(KgError::BadDate {
            field: if !(1..=12).contains(&month) { "month" } else { "day" },
            input: format!("{year:04}-{month:02}-{day:02}"),
        })?;
        Self::new(date)
    }

    /// Parses an ISO-8601 `YYYY-MM-DD` date. Errors name the offending field.
    pub fn parse(input: &str) -> Result<Self, KgError> {
        let bad = |field| KgError::BadDate { field, input: input.to_string() };
        let mut parts = input.trim().splitn(3, '-');
        let year = parts.next().filter(|p| p.len() == 4);
        let month = parts.next().filter(|p| p.len() == 2);
        let day = parts.next().filter(|p| p.len() == 2);
        let year: i32 = year.and_then(|p| p.parse().ok()).ok_or_else(|| bad("year"))?;
        let month: u32 = month
            .and_then(|p| p.parse().ok())
            .filter(|m| (1..=12).contains(m))
            .ok_or_else(|| bad("month"))?;
        let day: u32 = day.and_then(|p| p.parse().ok()).ok_or_else(|| bad("day"))?;
        let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(|| bad("day"))?;
        Self::new(date)
    }

    /// Parses a date with an arbitrary chrono format string.
    pub fn parse_with_format(input: &str, format: &str) -> Result<Self, KgError> {
        if format == "%Y-%m-%d" {
            return Self::parse(input);
        }
        let date = NaiveDate::parse_from_str(input.trim(), format).map_err(|_| KgError::BadDate {
            field: "date",
            input: input.to_string(),
        })?;
        Self::new(date)
    }

    pub fn date(self) -> NaiveDate {
        self.0
    }

    /// `(days since epoch) / 365.25`.
    pub fn numeric(self, epoch: Timestamp) -> NumericTime {
        let days = (self.0 - epoch.0).num_days();
        NumericTime {
            value: days as f64 / DAYS_PER_YEAR,
            before_epoch: days < 0,
        }
    }

    /// Digits of the zero-padded date, most significant first: four year
    /// digits, two month digits, two day digits.
    pub fn tokens(self) -> [TemporalToken; DATE_TOKENS] {
        let (y, m, d) = (self.0.year() as u32, self.0.month(), self.0.day());
        let digits = [
            (y / 1000 % 10, DateUnit::Year),
            (y / 100 % 10, DateUnit::Year),
            (y / 10 % 10, DateUnit::Year),
            (y % 10, DateUnit::Year),
            (m / 10, DateUnit::Month),
            (m % 10, DateUnit::Month),
            (d / 10, DateUnit::Day),
            (d % 10, DateUnit::Day),
        ];
        digits.map(|(digit, unit)| TemporalToken { digit: digit as u8, unit })
    }

    /// Inverse of [`Timestamp::tokens`]; `None` when the tokens do not spell a
    /// valid date or carry the wrong unit tags.
    pub fn from_tokens(tokens: &[TemporalToken; DATE_TOKENS]) -> Option<Self> {
        let units = [
            DateUnit::Year,
            DateUnit::Year,
            DateUnit::Year,
            DateUnit::Year,
            DateUnit::Month,
            DateUnit::Month,
            DateUnit::Day,
            DateUnit::Day,
        ];
        if tokens.iter().zip(units).any(|(t, u)| t.unit != u || t.digit > 9) {
            return None;
        }
        let num = |s: &[TemporalToken]| s.iter().fold(0u32, |acc, t| acc * 10 + t.digit as u32);
        let date = NaiveDate::from_ymd_opt(num(&tokens[..4]) as i32, num(&tokens[4..6]), num(&tokens[6..]))?;
        Some(Self(date))
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%d"))
    }
}

/// Free function form of [`Timestamp::numeric`].
pub fn timestamp_numeric(ts: Timestamp, epoch: Timestamp) -> NumericTime {
    ts.numeric(epoch)
}

/// Free function form of [`Timestamp::tokens`].
pub fn timestamp_tokens(ts: Timestamp) -> [TemporalToken; DATE_TOKENS] {
    ts.tokens()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Quadruple {
    pub head: EntityId,
    pub relation: RelationId,
    pub tail: EntityId,
    pub time: Timestamp,
}

impl Quadruple {
    pub fn new(head: EntityId, relation: RelationId, tail: EntityId, time: Timestamp) -> Self {
        Self { head, relation, tail, time }
    }
}

/// A fact in surface form, as read from disk.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RawQuadruple {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub time: Timestamp,
}

impl RawQuadruple {
    pub fn new(head: &str, relation: &str, tail: &str, time: Timestamp) -> Self {
        Self {
            head: head.to_string(),
            relation: relation.to_string(),
            tail: tail.to_string(),
            time,
        }
    }
}

/// Bidirectional string <-> dense id map.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    names: Vec<String>,
    ids: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, name: &str) -> usize {
        if let Some(&id) = self.ids.get(name) {
            return id;
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.ids.insert(name.to_string(), id);
        id
    }

    pub fn id_of(&self, name: &str) -> Option<usize> {
        self.ids.get(name).copied()
    }

    pub fn name_of(&self, id: usize) -> Option<&str> {
        self.names.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

impl From<Vec<String>> for Vocabulary {
    fn from(names: Vec<String>) -> Self {
        let mut vocab = Vocabulary::new();
        for name in &names {
            vocab.intern(name);
        }
        vocab
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(vocab: Vocabulary) -> Self {
        vocab.names
    }
}

/// Exact-membership set over `(h, r, t, τ)` tuples.
#[derive(Debug, Clone, Default)]
pub struct FilterIndex {
    known: HashSet<Quadruple>,
}

impl FilterIndex {
    pub fn contains(&self, q: &Quadruple) -> bool {
        self.known.contains(q)
    }

    pub fn len(&self) -> usize {
        self.known.len()
    }

    pub fn is_empty(&self) -> bool {
        self.known.is_empty()
    }

    /// Adds further known facts (e.g. the test split for the standard
    /// filtered protocol).
    pub fn extend(&mut self, quads: &[Quadruple]) {
        self.known.extend(quads.iter().copied());
    }
}

/// Builds the filter set from the train and valid splits, rejecting facts that
/// occur in both.
pub fn build_filter_index(train: &[Quadruple], valid: &[Quadruple]) -> Result<FilterIndex, KgError> {
    let known: HashSet<Quadruple> = train.iter().copied().collect();
    check_disjoint(&known, valid)?;
    let mut index = FilterIndex { known };
    index.extend(valid);
    Ok(index)
}

fn check_disjoint(known: &HashSet<Quadruple>, other: &[Quadruple]) -> Result<(), KgError> {
    let overlap: Vec<&Quadruple> = other.iter().filter(|q| known.contains(q)).collect();
    match overlap.first() {
        None => Ok(()),
        Some(q) => Err(KgError::SplitOverlap {
            count: overlap.len(),
            example: format!("({}, {}, {}, {})", q.head.0, q.relation.0, q.tail.0, q.time),
        }),
    }
}

/// Which splits feed the filter set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterScope {
    /// train ∪ valid
    #[default]
    TrainValid,
    /// train ∪ valid ∪ test
    AllSplits,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

/// Incrementally interns raw facts into a [`TemporalKg`].
#[derive(Debug, Default)]
pub struct TemporalKgBuilder {
    entities: Vocabulary,
    relations: Vocabulary,
    splits: [Vec<Quadruple>; 3],
    seen: [HashSet<Quadruple>; 3],
}

impl TemporalKgBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Assigns (or reuses) ids for the fact's strings.
    pub fn intern(&mut self, raw: &RawQuadruple) -> Quadruple {
        let head = EntityId(self.entities.intern(&raw.head));
        let relation = RelationId(self.relations.intern(&raw.relation));
        let tail = EntityId(self.entities.intern(&raw.tail));
        Quadruple::new(head, relation, tail, raw.time)
    }

    /// Interns and appends to a split; exact duplicates within the split are
    /// dropped (first occurrence wins). Returns whether the fact was new.
    pub fn push(&mut self, split: Split, raw: &RawQuadruple) -> bool {
        let q = self.intern(raw);
        let slot = split as usize;
        if self.seen[slot].insert(q) {
            self.splits[slot].push(q);
            true
        } else {
            false
        }
    }

    pub fn extend<'a>(&mut self, split: Split, raws: impl IntoIterator<Item = &'a RawQuadruple>) {
        for raw in raws {
            self.push(split, raw);
        }
    }

    pub fn build(self, scope: FilterScope) -> Result<TemporalKg, KgError> {
        let [train, valid, test] = self.splits;
        let mut filter = build_filter_index(&train, &valid)?;
        let train_valid: HashSet<Quadruple> = train.iter().chain(&valid).copied().collect();
        check_disjoint(&train_valid, &test)?;
        if scope == FilterScope::AllSplits {
            filter.extend(&test);
        }

        let mut by_time: BTreeMap<Timestamp, Vec<Quadruple>> = BTreeMap::new();
        for q in train.iter().chain(&valid).chain(&test) {
            by_time.entry(q.time).or_default().push(*q);
        }
        let timestamps: Vec<Timestamp> = by_time.keys().copied().collect();
        let epoch = timestamps
            .first()
            .copied()
            .unwrap_or(Timestamp(NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()));

        Ok(TemporalKg {
            entities: self.entities,
            relations: self.relations,
            timestamps,
            epoch,
            train,
            valid,
            test,
            filter,
            filter_scope: scope,
            by_time,
        })
    }
}

/// Immutable, indexed temporal knowledge graph.
#[derive(Debug, Clone)]
pub struct TemporalKg {
    entities: Vocabulary,
    relations: Vocabulary,
    timestamps: Vec<Timestamp>,
    epoch: Timestamp,
    train: Vec<Quadruple>,
    valid: Vec<Quadruple>,
    test: Vec<Quadruple>,
    filter: FilterIndex,
    filter_scope: FilterScope,
    by_time: BTreeMap<Timestamp, Vec<Quadruple>>,
}

impl TemporalKg {
    pub fn from_splits(
        train: &[RawQuadruple],
        valid: &[RawQuadruple],
        test: &[RawQuadruple],
        scope: FilterScope,
    ) -> Result<Self, KgError> {
        let mut builder = TemporalKgBuilder::new();
        builder.extend(Split::Train, train);
        builder.extend(Split::Valid, valid);
        builder.extend(Split::Test, test);
        builder.build(scope)
    }

    pub fn entities(&self) -> &Vocabulary {
        &self.entities
    }

    pub fn relations(&self) -> &Vocabulary {
        &self.relations
    }

    pub fn n_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn n_relations(&self) -> usize {
        self.relations.len()
    }

    /// Distinct timestamps over all splits, strictly increasing.
    pub fn timestamps(&self) -> &[Timestamp] {
        &self.timestamps
    }

    /// Earliest date in the dataset; origin of the numeric time axis.
    pub fn epoch(&self) -> Timestamp {
        self.epoch
    }

    pub fn train(&self) -> &[Quadruple] {
        &self.train
    }

    pub fn valid(&self) -> &[Quadruple] {
        &self.valid
    }

    pub fn test(&self) -> &[Quadruple] {
        &self.test
    }

    pub fn split(&self, split: Split) -> &[Quadruple] {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }

    pub fn filter(&self) -> &FilterIndex {
        &self.filter
    }

    pub fn filter_scope(&self) -> FilterScope {
        self.filter_scope
    }

    pub fn facts_at(&self, ts: Timestamp) -> &[Quadruple] {
        self.by_time.get(&ts).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Facts strictly before `ts`, in time order.
    pub fn facts_before(&self, ts: Timestamp) -> impl Iterator<Item = &Quadruple> {
        self.by_time.range(..ts).flat_map(|(_, qs)| qs.iter())
    }

    pub fn entity_name(&self, id: EntityId) -> &str {
        self.entities.name_of(id.0).unwrap_or("<unknown>")
    }

    pub fn relation_name(&self, id: RelationId) -> &str {
        self.relations.name_of(id.0).unwrap_or("<unknown>")
    }

    /// Surface form of a fact.
    pub fn to_raw(&self, q: &Quadruple) -> RawQuadruple {
        RawQuadruple::new(
            self.entity_name(q.head),
            self.relation_name(q.relation),
            self.entity_name(q.tail),
            q.time,
        )
    }
}
