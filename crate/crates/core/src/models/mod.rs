//! Parameter storage and scoring for the static, diachronic (DE), time-aware
//! LSTM (TA) and rotational (TeRo) model families.
//!
//! Every model decomposes into an entity encoder, a relation encoder and a
//! kernel:
//!
//! | model       | entity encoder | relation encoder | kernel        |
//! |-------------|----------------|------------------|---------------|
//! | transe      | lookup         | lookup           | translational |
//! | distmult    | lookup         | lookup           | bilinear      |
//! | de-transe   | diachronic     | lookup           | translational |
//! | de-distmult | diachronic     | lookup           | bilinear      |
//! | ta-transe   | lookup         | LSTM             | translational |
//! | ta-distmult | lookup         | LSTM             | bilinear      |
//! | tero        | complex lookup | complex lookup   | rotational    |
//!
//! Scores follow a higher-is-more-plausible convention throughout.

pub mod diachronic;
pub mod kernels;
pub mod lstm;
pub mod rotation;

use std::collections::btree_map::Entry;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kg::{EntityId, Quadruple, RelationId, TemporalKg, Timestamp, DATE_TOKENS, TEMPORAL_VOCAB};
pub use kernels::RotationNorm;
use lstm::{LstmGrads, LstmTrace, LstmWeights};

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("unknown model {0:?}; expected one of: {names}", names = ModelKind::names().join(", "))]
    UnknownModel(String),
    #[error("embedding dimension must be at least 1")]
    ZeroDim,
    #[error("temporal ratio {0} must lie in [0, 1]")]
    GammaOutOfRange(f64),
    #[error("temporal ratio {gamma} leaves no temporal coordinates at dimension {dim}")]
    EmptyTemporalPart { gamma: f64, dim: usize },
    #[error("entity id {id} out of range (n_entities = {n})")]
    UnknownEntity { id: usize, n: usize },
    #[error("relation id {id} out of range (n_relations = {n})")]
    UnknownRelation { id: usize, n: usize },
    #[error("rotational model needs at least one training timestamp")]
    EmptyTimeTable,
    #[error("batch heads and tails differ in length ({heads} vs {tails})")]
    BatchShape { heads: usize, tails: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "transe")]
    TransE,
    #[serde(rename = "distmult")]
    DistMult,
    #[serde(rename = "de-transe")]
    DeTransE,
    #[serde(rename = "de-distmult")]
    DeDistMult,
    #[serde(rename = "ta-transe")]
    TaTransE,
    #[serde(rename = "ta-distmult")]
    TaDistMult,
    #[serde(rename = "tero")]
    TeRo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Family {
    Static,
    Diachronic,
    TimeAware,
    Rotational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kernel {
    Translational,
    Bilinear,
    Rotational,
}

impl ModelKind {
    pub const ALL: [ModelKind; 7] = [
        ModelKind::TransE,
        ModelKind::DistMult,
        ModelKind::DeTransE,
        ModelKind::DeDistMult,
        ModelKind::TaTransE,
        ModelKind::TaDistMult,
        ModelKind::TeRo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::TransE => "transe",
            ModelKind::DistMult => "distmult",
            ModelKind::DeTransE => "de-transe",
            ModelKind::DeDistMult => "de-distmult",
            ModelKind::TaTransE => "ta-transe",
            ModelKind::TaDistMult => "ta-distmult",
            ModelKind::TeRo => "tero",
        }
    }

    pub fn names() -> Vec<&'static str> {
        Self::ALL.iter().map(|k| k.name()).collect()
    }

    /// Whether the model has a temporal ratio hyperparameter.
    pub fn is_diachronic(self) -> bool {
        self.family() == Family::Diachronic
    }

    fn family(self) -> Family {
        match self {
            ModelKind::TransE | ModelKind::DistMult => Family::Static,
            ModelKind::DeTransE | ModelKind::DeDistMult => Family::Diachronic,
            ModelKind::TaTransE | ModelKind::TaDistMult => Family::TimeAware,
            ModelKind::TeRo => Family::Rotational,
        }
    }

    fn kernel(self) -> Kernel {
        match self {
            ModelKind::TransE | ModelKind::DeTransE | ModelKind::TaTransE => Kernel::Translational,
            ModelKind::DistMult | ModelKind::DeDistMult | ModelKind::TaDistMult => Kernel::Bilinear,
            ModelKind::TeRo => Kernel::Rotational,
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| ModelError::UnknownModel(s.to_string()))
    }
}

// Tensor slots per family.
const ENTITY: usize = 0;
const RELATION: usize = 1;
const DE_AMP: usize = 0;
const DE_FREQ: usize = 1;
const DE_PHASE: usize = 2;
const DE_RELATION: usize = 3;
const TA_TOKENS: usize = 1;
const TA_W_IH: usize = 2;
const TA_W_HH: usize = 3;
const TA_B_IH: usize = 4;
const TA_B_HH: usize = 5;
const TERO_TIME: usize = 2;

/// A named row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(name: &str, rows: usize, cols: usize) -> Self {
        Self { name: name.to_string(), rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// Everything needed to lay out a model's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelDims {
    pub n_entities: usize,
    pub n_relations: usize,
    pub dim: usize,
    /// Fraction of diachronic coordinates (DE models only).
    pub gamma: f64,
    pub norm: RotationNorm,
    /// Origin of the numeric time axis.
    pub time_origin: Timestamp,
    /// Timestamps that own a TeRo time embedding, sorted.
    pub time_table: Vec<Timestamp>,
}

impl ModelDims {
    /// Dimensions for a graph: vocab sizes, the dataset's first date as time
    /// origin and the training timestamps as the rotation table.
    pub fn for_kg(kg: &TemporalKg, dim: usize, gamma: f64) -> Self {
        let mut time_table: Vec<Timestamp> = kg.train().iter().map(|q| q.time).collect();
        time_table.sort_unstable();
        time_table.dedup();
        Self {
            n_entities: kg.n_entities(),
            n_relations: kg.n_relations(),
            dim,
            gamma,
            norm: RotationNorm::L1,
            time_origin: kg.epoch(),
            time_table,
        }
    }
}

/// Learnable tensors of one model plus the metadata needed to score.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters {
    pub kind: ModelKind,
    pub dim: usize,
    pub gamma: f64,
    /// `floor(gamma · dim)` for DE models, 0 otherwise.
    pub temporal_dim: usize,
    pub n_entities: usize,
    pub n_relations: usize,
    pub norm: RotationNorm,
    pub time_origin: Timestamp,
    pub time_table: Vec<Timestamp>,
    pub tensors: Vec<Tensor>,
}

/// Per-timestamp values shared by every fact at that time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeContext {
    pub time: Timestamp,
    /// Fractional years since the time origin.
    pub numeric: f64,
    /// Row of the TeRo time table.
    pub time_row: usize,
    /// True when a TeRo lookup had to fall back to the nearest known time.
    pub mapped: bool,
}

/// Which slot of a fact is being replaced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Head,
    Tail,
}

/// Gradient buffers shaped like a model's tensors.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(params: &ModelParameters) -> Self {
        Self { tensors: params.tensors.iter().map(|t| vec![0.0; t.data.len()]).collect() }
    }

    pub fn zero(&mut self) {
        self.tensors.iter_mut().for_each(|t| t.iter_mut().for_each(|v| *v = 0.0));
    }
}

fn layout(kind: ModelKind, dims: &ModelDims, temporal_dim: usize) -> Vec<Tensor> {
    let (ne, nr, d) = (dims.n_entities, dims.n_relations, dims.dim);
    match kind.family() {
        Family::Static => vec![Tensor::zeros("entity", ne, d), Tensor::zeros("relation", nr, d)],
        Family::Diachronic => vec![
            Tensor::zeros("entity_amp", ne, d),
            Tensor::zeros("entity_freq", ne, temporal_dim),
            Tensor::zeros("entity_phase", ne, temporal_dim),
            Tensor::zeros("relation", nr, d),
        ],
        Family::TimeAware => vec![
            Tensor::zeros("entity", ne, d),
            Tensor::zeros("tokens", nr + TEMPORAL_VOCAB, d),
            Tensor::zeros("lstm_w_ih", 4 * d, d),
            Tensor::zeros("lstm_w_hh", 4 * d, d),
            Tensor::zeros("lstm_b_ih", 1, 4 * d),
            Tensor::zeros("lstm_b_hh", 1, 4 * d),
        ],
        Family::Rotational => vec![
            Tensor::zeros("entity", ne, 2 * d),
            Tensor::zeros("relation", nr, 2 * d),
            Tensor::zeros("time", dims.time_table.len(), 2 * d),
        ],
    }
}

/// Xavier-uniform initialisation (`±sqrt(6 / (rows + cols))` per tensor),
/// deterministic in `seed`. LSTM biases start at zero with the forget gate
/// at 1; TeRo time rows are projected to unit modulus.
pub fn init_parameters(kind: ModelKind, dims: &ModelDims, seed: u64) -> Result<ModelParameters, ModelError> {
    if dims.dim == 0 {
        return Err(ModelError::ZeroDim);
    }
    let mut temporal_dim = 0;
    if kind.is_diachronic() {
        if !(0.0..=1.0).contains(&dims.gamma) {
            return Err(ModelError::GammaOutOfRange(dims.gamma));
        }
        temporal_dim = (dims.gamma * dims.dim as f64).floor() as usize;
        if dims.gamma > 0.0 && temporal_dim == 0 {
            return Err(ModelError::EmptyTemporalPart { gamma: dims.gamma, dim: dims.dim });
        }
    }
    if kind == ModelKind::TeRo && dims.time_table.is_empty() {
        return Err(ModelError::EmptyTimeTable);
    }

    let mut tensors = layout(kind, dims, temporal_dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (slot, tensor) in tensors.iter_mut().enumerate() {
        if kind.family() == Family::TimeAware && (slot == TA_B_IH || slot == TA_B_HH) {
            if slot == TA_B_IH {
                tensor.data[dims.dim..2 * dims.dim].iter_mut().for_each(|b| *b = 1.0);
            }
            continue;
        }
        if tensor.data.is_empty() {
            continue;
        }
        let bound = (6.0 / (tensor.rows + tensor.cols) as f64).sqrt();
        tensor.data.iter_mut().for_each(|v| *v = rng.gen_range(-bound..=bound));
    }

    let mut params = ModelParameters {
        kind,
        dim: dims.dim,
        gamma: if kind.is_diachronic() { dims.gamma } else { 0.0 },
        temporal_dim,
        n_entities: dims.n_entities,
        n_relations: dims.n_relations,
        norm: dims.norm,
        time_origin: dims.time_origin,
        time_table: if kind == ModelKind::TeRo { dims.time_table.clone() } else { Vec::new() },
        tensors,
    };
    params.project();
    Ok(params)
}

impl ModelParameters {
    /// Length of the encoded entity/relation vectors (`2d` for TeRo).
    pub fn width(&self) -> usize {
        if self.kind == ModelKind::TeRo {
            2 * self.dim
        } else {
            self.dim
        }
    }

    pub fn tensor(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.data.iter().all(|v| v.is_finite()))
    }

    pub fn n_params(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    /// Re-applies parameter constraints; currently the unit-modulus TeRo
    /// time embeddings.
    pub fn project(&mut self) {
        if self.kind == ModelKind::TeRo {
            let time = &mut self.tensors[TERO_TIME];
            for i in 0..time.rows {
                rotation::normalize_unit_modulus(time.row_mut(i));
            }
        }
    }

    /// Index into the TeRo time table: exact match, else the nearest date
    /// (ties go to the earlier one).
    pub fn time_lookup(&self, ts: Timestamp) -> (usize, bool) {
        match self.time_table.binary_search(&ts) {
            Ok(i) => (i, false),
            Err(0) => (0, true),
            Err(i) if i == self.time_table.len() => (i - 1, true),
            Err(i) => {
                let before = (ts.date() - self.time_table[i - 1].date()).num_days();
                let after = (self.time_table[i].date() - ts.date()).num_days();
                (if after < before { i } else { i - 1 }, true)
            }
        }
    }

    pub fn time_context(&self, ts: Timestamp) -> Result<TimeContext, ModelError> {
        let (time_row, mapped) = if self.kind == ModelKind::TeRo {
            if self.time_table.is_empty() {
                return Err(ModelError::EmptyTimeTable);
            }
            self.time_lookup(ts)
        } else {
            (0, false)
        };
        Ok(TimeContext { time: ts, numeric: ts.numeric(self.time_origin).value, time_row, mapped })
    }

    fn check_entity(&self, e: EntityId) -> Result<(), ModelError> {
        if e.0 >= self.n_entities {
            return Err(ModelError::UnknownEntity { id: e.0, n: self.n_entities });
        }
        Ok(())
    }

    fn check_relation(&self, r: RelationId) -> Result<(), ModelError> {
        if r.0 >= self.n_relations {
            return Err(ModelError::UnknownRelation { id: r.0, n: self.n_relations });
        }
        Ok(())
    }

    fn check(&self, q: &Quadruple) -> Result<(), ModelError> {
        self.check_entity(q.head)?;
        self.check_entity(q.tail)?;
        self.check_relation(q.relation)
    }

    fn encode_entity(&self, e: EntityId, ctx: &TimeContext, out: &mut [f64]) {
        match self.kind.family() {
            Family::Diachronic => diachronic::encode_into(
                self.tensors[DE_AMP].row(e.0),
                self.tensors[DE_FREQ].row(e.0),
                self.tensors[DE_PHASE].row(e.0),
                ctx.numeric,
                out,
            ),
            _ => out.copy_from_slice(self.tensors[ENTITY].row(e.0)),
        }
    }

    fn entity_backward(&self, e: EntityId, ctx: &TimeContext, upstream: &[f64], coeff: f64, grads: &mut Gradients) {
        let w = self.width();
        match self.kind.family() {
            Family::Diachronic => {
                let k = self.temporal_dim;
                let [amp, freq, phase, _] = &mut grads.tensors[..] else { unreachable!() };
                diachronic::backward(
                    self.tensors[DE_AMP].row(e.0),
                    self.tensors[DE_FREQ].row(e.0),
                    self.tensors[DE_PHASE].row(e.0),
                    ctx.numeric,
                    upstream,
                    coeff,
                    &mut amp[e.0 * w..(e.0 + 1) * w],
                    &mut freq[e.0 * k..(e.0 + 1) * k],
                    &mut phase[e.0 * k..(e.0 + 1) * k],
                );
            }
            _ => {
                let row = &mut grads.tensors[ENTITY][e.0 * w..(e.0 + 1) * w];
                row.iter_mut().zip(upstream).for_each(|(g, u)| *g += coeff * u);
            }
        }
    }

    fn relation_slot(&self) -> usize {
        if self.kind.family() == Family::Diachronic {
            DE_RELATION
        } else {
            RELATION
        }
    }

    fn lstm(&self) -> LstmWeights<'_> {
        LstmWeights {
            w_ih: &self.tensors[TA_W_IH].data,
            w_hh: &self.tensors[TA_W_HH].data,
            b_ih: &self.tensors[TA_B_IH].data,
            b_hh: &self.tensors[TA_B_HH].data,
            input: self.dim,
            hidden: self.dim,
        }
    }

    /// Token rows fed to the LSTM: the relation followed by the date digits.
    fn relation_tokens(&self, r: RelationId, ts: Timestamp) -> [usize; DATE_TOKENS + 1] {
        let mut tokens = [r.0; DATE_TOKENS + 1];
        for (slot, tok) in tokens[1..].iter_mut().zip(ts.tokens()) {
            *slot = self.n_relations + tok.index();
        }
        tokens
    }

    fn encode_relation(&self, r: RelationId, ctx: &TimeContext) -> (Vec<f64>, Option<LstmTrace>) {
        if self.kind.family() == Family::TimeAware {
            let table = &self.tensors[TA_TOKENS];
            let tokens = self.relation_tokens(r, ctx.time);
            let inputs: Vec<&[f64]> = tokens.iter().map(|&t| table.row(t)).collect();
            let trace = lstm::forward(&self.lstm(), &inputs);
            (trace.output().to_vec(), Some(trace))
        } else {
            (self.tensors[self.relation_slot()].row(r.0).to_vec(), None)
        }
    }

    fn relation_backward(
        &self,
        r: RelationId,
        ctx: &TimeContext,
        trace: Option<&LstmTrace>,
        upstream: &[f64],
        grads: &mut Gradients,
    ) {
        match trace {
            Some(trace) => {
                let table = &self.tensors[TA_TOKENS];
                let tokens = self.relation_tokens(r, ctx.time);
                let inputs: Vec<&[f64]> = tokens.iter().map(|&t| table.row(t)).collect();
                let [_, token_grads, w_ih, w_hh, b_ih, b_hh] = &mut grads.tensors[..] else { unreachable!() };
                let mut lstm_grads = LstmGrads { w_ih, w_hh, b_ih, b_hh };
                let d_inputs = lstm::backward(&self.lstm(), &inputs, trace, upstream, &mut lstm_grads);
                let d = self.dim;
                for (tok, dx) in tokens.iter().zip(d_inputs) {
                    let row = &mut token_grads[tok * d..(tok + 1) * d];
                    row.iter_mut().zip(dx).for_each(|(g, v)| *g += v);
                }
            }
            None => {
                let w = self.width();
                let row = &mut grads.tensors[self.relation_slot()][r.0 * w..(r.0 + 1) * w];
                row.iter_mut().zip(upstream).for_each(|(g, u)| *g += u);
            }
        }
    }

    fn kernel_score(&self, h: &[f64], r: &[f64], t: &[f64], ctx: &TimeContext) -> f64 {
        match self.kind.kernel() {
            Kernel::Translational => kernels::translational(h, r, t),
            Kernel::Bilinear => kernels::bilinear(h, r, t),
            Kernel::Rotational => {
                kernels::rotational(h, r, t, self.tensors[TERO_TIME].row(ctx.time_row), self.norm)
            }
        }
    }

    /// Plausibility of one fact.
    pub fn score(&self, q: &Quadruple) -> Result<f64, ModelError> {
        let mut tape = ScoreTape::new(self);
        tape.score(q)
    }

    /// Scores `(heads[i], r, tails[i], ts)` for every `i`. The relation is
    /// encoded once and consecutive repeats of an entity reuse its encoding,
    /// so scoring one fixed side against all entities is `O(n·d)`.
    pub fn score_batch(
        &self,
        heads: &[EntityId],
        relation: RelationId,
        tails: &[EntityId],
        ts: Timestamp,
    ) -> Result<Vec<f64>, ModelError> {
        if heads.len() != tails.len() {
            return Err(ModelError::BatchShape { heads: heads.len(), tails: tails.len() });
        }
        self.check_relation(relation)?;
        for e in heads.iter().chain(tails) {
            self.check_entity(*e)?;
        }
        let ctx = self.time_context(ts)?;
        let (r, _) = self.encode_relation(relation, &ctx);
        let w = self.width();
        let (mut h, mut t) = (vec![0.0; w], vec![0.0; w]);
        let (mut last_h, mut last_t) = (None, None);
        let mut scores = Vec::with_capacity(heads.len());
        for (&head, &tail) in heads.iter().zip(tails) {
            if last_h != Some(head) {
                self.encode_entity(head, &ctx, &mut h);
                last_h = Some(head);
            }
            if last_t != Some(tail) {
                self.encode_entity(tail, &ctx, &mut t);
                last_t = Some(tail);
            }
            scores.push(self.kernel_score(&h, &r, &t, &ctx));
        }
        Ok(scores)
    }

    /// Scores of `q` with every entity substituted into `slot`, indexed by
    /// entity id.
    pub fn score_candidates(&self, q: &Quadruple, slot: Slot) -> Result<Vec<f64>, ModelError> {
        let all: Vec<EntityId> = (0..self.n_entities).map(EntityId).collect();
        match slot {
            Slot::Head => self.score_batch(&all, q.relation, &vec![q.tail; all.len()], q.time),
            Slot::Tail => self.score_batch(&vec![q.head; all.len()], q.relation, &all, q.time),
        }
    }

    /// Gradient of `score(q)` with respect to every tensor.
    pub fn score_gradient(&self, q: &Quadruple) -> Result<(f64, Gradients), ModelError> {
        let mut grads = Gradients::zeros_like(self);
        let mut tape = ScoreTape::new(self);
        let value = tape.score(q)?;
        tape.backward(q, 1.0, &mut grads)?;
        tape.finish(&mut grads);
        Ok((value, grads))
    }
}

struct RelationNode {
    ctx: TimeContext,
    vector: Vec<f64>,
    trace: Option<LstmTrace>,
    grad: Vec<f64>,
}

/// Forward/backward bookkeeping for a batch of scores. Relation encodings
/// are computed once per `(relation, timestamp)` and their gradients are
/// pooled, so an LSTM relation is backpropagated once per batch regardless
/// of how many facts share it.
pub struct ScoreTape<'p> {
    params: &'p ModelParameters,
    relations: BTreeMap<(RelationId, Timestamp), RelationNode>,
    dh: Vec<f64>,
    dr: Vec<f64>,
    dt: Vec<f64>,
    dtau: Vec<f64>,
}

impl<'p> ScoreTape<'p> {
    pub fn new(params: &'p ModelParameters) -> Self {
        let w = params.width();
        Self {
            params,
            relations: BTreeMap::new(),
            dh: vec![0.0; w],
            dr: vec![0.0; w],
            dt: vec![0.0; w],
            dtau: vec![0.0; w],
        }
    }

    fn node(&mut self, r: RelationId, ts: Timestamp) -> Result<&mut RelationNode, ModelError> {
        let params = self.params;
        match self.relations.entry((r, ts)) {
            Entry::Occupied(node) => Ok(node.into_mut()),
            Entry::Vacant(slot) => {
                let ctx = params.time_context(ts)?;
                let (vector, trace) = params.encode_relation(r, &ctx);
                let grad = vec![0.0; vector.len()];
                Ok(slot.insert(RelationNode { ctx, vector, trace, grad }))
            }
        }
    }

    pub fn score(&mut self, q: &Quadruple) -> Result<f64, ModelError> {
        self.params.check(q)?;
        let params = self.params;
        let w = params.width();
        let node = self.node(q.relation, q.time)?;
        let (mut h, mut t) = (vec![0.0; w], vec![0.0; w]);
        params.encode_entity(q.head, &node.ctx, &mut h);
        params.encode_entity(q.tail, &node.ctx, &mut t);
        Ok(params.kernel_score(&h, &node.vector, &t, &node.ctx))
    }

    /// Accumulates `coeff · ∂score(q)/∂θ`. Relation gradients are pooled
    /// until [`ScoreTape::finish`].
    pub fn backward(&mut self, q: &Quadruple, coeff: f64, grads: &mut Gradients) -> Result<(), ModelError> {
        if coeff == 0.0 {
            return Ok(());
        }
        self.params.check(q)?;
        let params = self.params;
        let w = params.width();
        let (mut h, mut t) = (vec![0.0; w], vec![0.0; w]);
        let (mut dh, mut dr, mut dt, mut dtau) = (
            std::mem::take(&mut self.dh),
            std::mem::take(&mut self.dr),
            std::mem::take(&mut self.dt),
            std::mem::take(&mut self.dtau),
        );
        let node = self.node(q.relation, q.time)?;
        let ctx = node.ctx;
        params.encode_entity(q.head, &ctx, &mut h);
        params.encode_entity(q.tail, &ctx, &mut t);
        let r = &node.vector;
        match params.kind.kernel() {
            Kernel::Translational => kernels::translational_grad(&h, r, &t, &mut dh, &mut dr, &mut dt),
            Kernel::Bilinear => kernels::bilinear_grad(&h, r, &t, &mut dh, &mut dr, &mut dt),
            Kernel::Rotational => {
                let tau = params.tensors[TERO_TIME].row(ctx.time_row);
                kernels::rotational_grad(&h, r, &t, tau, params.norm, &mut dh, &mut dr, &mut dt, &mut dtau);
                let row = &mut grads.tensors[TERO_TIME][ctx.time_row * w..(ctx.time_row + 1) * w];
                row.iter_mut().zip(&dtau).for_each(|(g, v)| *g += coeff * v);
            }
        }
        node.grad.iter_mut().zip(&dr).for_each(|(g, v)| *g += coeff * v);
        params.entity_backward(q.head, &ctx, &dh, coeff, grads);
        params.entity_backward(q.tail, &ctx, &dt, coeff, grads);
        (self.dh, self.dr, self.dt, self.dtau) = (dh, dr, dt, dtau);
        Ok(())
    }

    /// Flushes pooled relation gradients (running LSTM backward passes).
    pub fn finish(self, grads: &mut Gradients) {
        let params = self.params;
        for ((r, _), node) in self.relations {
            if node.grad.iter().any(|g| *g != 0.0) {
                params.relation_backward(r, &node.ctx, node.trace.as_ref(), &node.grad, grads);
            }
        }
    }
}
