#![allow(dead_code)]

use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tkge_core::kg::{EntityId, FilterScope, Quadruple, RawQuadruple, RelationId, TemporalKg, Timestamp};
use tkge_core::models::{init_parameters, Gradients, ModelDims, ModelKind, ModelParameters, RotationNorm};
use tkge_core::training::{batch_loss_and_gradient, LossReduction};

pub fn ts(y: i32, m: u32, d: u32) -> Timestamp {
    Timestamp::from_ymd(y, m, d).unwrap()
}

/// Uniformly random facts split 80/10/10 after deduplication. A chain of
/// facts touching every entity and relation always stays in train.
pub fn random_kg(seed: u64, n_entities: usize, n_relations: usize, n_times: usize, n_quads: usize) -> TemporalKg {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let times: Vec<Timestamp> = (0..n_times).map(|i| ts(2000 + i as i32, 1 + (i % 12) as u32, 1)).collect();
    let mut seen = HashSet::new();
    let mut quads = Vec::new();
    // Chain covering every entity and relation so all names appear in train.
    for i in 0..n_entities.max(n_relations) {
        let q = (i % n_entities, i % n_relations, (i + 1) % n_entities, 0);
        if seen.insert(q) {
            quads.push(q);
        }
    }
    let n_chain = quads.len();
    while quads.len() < n_quads.max(n_chain) {
        let q = (
            rng.gen_range(0..n_entities),
            rng.gen_range(0..n_relations),
            rng.gen_range(0..n_entities),
            rng.gen_range(0..n_times),
        );
        if seen.insert(q) {
            quads.push(q);
        }
    }
    let raw = |&(h, r, t, i): &(usize, usize, usize, usize)| {
        RawQuadruple::new(&format!("e{h}"), &format!("r{r}"), &format!("e{t}"), times[i])
    };
    let (chain, rest) = quads.split_at_mut(n_chain);
    rest.shuffle(&mut rng);
    let n_held = rest.len() / 10;
    let mut train: Vec<RawQuadruple> = chain.iter().map(raw).collect();
    train.extend(rest[2 * n_held..].iter().map(raw));
    let valid: Vec<RawQuadruple> = rest[..n_held].iter().map(raw).collect();
    let test: Vec<RawQuadruple> = rest[n_held..2 * n_held].iter().map(raw).collect();
    TemporalKg::from_splits(&train, &valid, &test, FilterScope::TrainValid).unwrap()
}

/// 50 entities, 4 relations and 8 yearly dates. Relation `r` only holds
/// during a window of 4 consecutive dates, where it links a fixed random
/// pairing of the entities (both directions). 10% of the facts are held out,
/// split evenly between valid and test.
pub fn windowed_kg(seed: u64) -> TemporalKg {
    const ENTITIES: usize = 50;
    const WINDOW_STARTS: [usize; 4] = [0, 1, 3, 4];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dates: Vec<Timestamp> = (0..8).map(|i| ts(2010 + i, 1, 1)).collect();
    let mut facts = Vec::new();
    for (r, &start) in WINDOW_STARTS.iter().enumerate() {
        let mut order: Vec<usize> = (0..ENTITIES).collect();
        order.shuffle(&mut rng);
        for &date in &dates[start..start + 4] {
            for pair in order.chunks(2) {
                let (a, b) = (format!("e{}", pair[0]), format!("e{}", pair[1]));
                facts.push(RawQuadruple::new(&a, &format!("r{r}"), &b, date));
                facts.push(RawQuadruple::new(&b, &format!("r{r}"), &a, date));
            }
        }
    }
    facts.shuffle(&mut rng);
    let n_held = facts.len() / 20;
    let test = facts.split_off(facts.len() - n_held);
    let valid = facts.split_off(facts.len() - n_held);
    TemporalKg::from_splits(&facts, &valid, &test, FilterScope::TrainValid).unwrap()
}

/// Largest `|a - n| / max(|a|, |n|)` over all pairs, where pairs with both
/// magnitudes below `floor` are compared on the floor instead.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64], floor: f64) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(n.abs()).max(floor))
        .fold(0.0, f64::max)
}

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;
/// Central differences carry ~1e-10 of roundoff, so gradients smaller than
/// this are compared in absolute terms.
pub const GRADIENT_FLOOR: f64 = 1e-5;

pub fn dims(n_entities: usize, n_relations: usize, dim: usize, gamma: f64) -> ModelDims {
    ModelDims {
        n_entities,
        n_relations,
        dim,
        gamma,
        norm: RotationNorm::L1,
        time_origin: ts(2005, 1, 1),
        time_table: (0..6).map(|i| ts(2005 + i, 7, 1)).collect(),
    }
}

pub fn random_quad(rng: &mut impl Rng, p: &ModelParameters) -> Quadruple {
    let time = if p.time_table.is_empty() || rng.gen_bool(0.3) {
        ts(rng.gen_range(2003..2015), rng.gen_range(1..=12), rng.gen_range(1..=28))
    } else {
        p.time_table[rng.gen_range(0..p.time_table.len())]
    };
    Quadruple::new(
        EntityId(rng.gen_range(0..p.n_entities)),
        RelationId(rng.gen_range(0..p.n_relations)),
        EntityId(rng.gen_range(0..p.n_entities)),
        time,
    )
}

/// Central differences of `f` with respect to every parameter.
pub fn numeric_gradient(params: &ModelParameters, f: impl Fn(&ModelParameters) -> f64) -> Vec<f64> {
    let mut probe = params.clone();
    let mut out = Vec::new();
    for i in 0..probe.tensors.len() {
        for j in 0..probe.tensors[i].data.len() {
            let x = probe.tensors[i].data[j];
            probe.tensors[i].data[j] = x + STEP;
            let up = f(&probe);
            probe.tensors[i].data[j] = x - STEP;
            let down = f(&probe);
            probe.tensors[i].data[j] = x;
            out.push((up - down) / (2.0 * STEP));
        }
    }
    out
}

pub fn flat(grads: &Gradients) -> Vec<f64> {
    grads.tensors.concat()
}

/// Worst relative error between the analytic and numeric gradient of one
/// random fact's score.
pub fn score_gradient_error(kind: ModelKind, norm: RotationNorm, seed: u64) -> f64 {
    let mut d = dims(5, 3, 4, 0.5);
    d.norm = norm;
    let params = init_parameters(kind, &d, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
    let q = random_quad(&mut rng, &params);
    let (_, grads) = params.score_gradient(&q).unwrap();
    let numeric = numeric_gradient(&params, |p| p.score(&q).unwrap());
    max_relative_error(&flat(&grads), &numeric, GRADIENT_FLOOR)
}

/// Same for the margin loss of a random batch of 3 positives with 4
/// negatives each.
pub fn loss_gradient_error(kind: ModelKind, reduction: LossReduction, seed: u64) -> f64 {
    let params = init_parameters(kind, &dims(6, 2, 4, 0.5), seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2000 + seed);
    let positives: Vec<Quadruple> = (0..3).map(|_| random_quad(&mut rng, &params)).collect();
    let negatives: Vec<Vec<Quadruple>> =
        (0..3).map(|_| (0..4).map(|_| random_quad(&mut rng, &params)).collect()).collect();
    let loss = |p: &ModelParameters| {
        let mut scratch = Gradients::zeros_like(p);
        batch_loss_and_gradient(p, &positives, &negatives, 0.5, reduction, &mut scratch).unwrap().value
    };
    let mut grads = Gradients::zeros_like(&params);
    batch_loss_and_gradient(&params, &positives, &negatives, 0.5, reduction, &mut grads).unwrap();
    let numeric = numeric_gradient(&params, loss);
    max_relative_error(&flat(&grads), &numeric, GRADIENT_FLOOR)
}
