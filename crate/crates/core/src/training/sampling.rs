use rand::Rng;

use super::TrainError;
use crate::kg::{EntityId, Quadruple};
use crate::models::Slot;

/// Uniform corruption: each negative replaces the head or the tail (fair
/// coin) with a uniformly drawn entity different from the one it replaces.
/// Accidentally true facts are not screened out.
pub fn sample_negatives<R: Rng + ?Sized>(
    q: &Quadruple,
    n: usize,
    n_entities: usize,
    rng: &mut R,
) -> Result<Vec<Quadruple>, TrainError> {
    if n_entities < 2 {
        return Err(TrainError::TooFewEntities(n_entities));
    }
    Ok((0..n).map(|_| corrupt(q, n_entities, rng).0).collect())
}

/// One corruption, also reporting which slot was replaced.
pub fn corrupt<R: Rng + ?Sized>(q: &Quadruple, n_entities: usize, rng: &mut R) -> (Quadruple, Slot) {
    let slot = if rng.gen_bool(0.5) { Slot::Head } else { Slot::Tail };
    let original = match slot {
        Slot::Head => q.head.0,
        Slot::Tail => q.tail.0,
    };
    // draw from n-1 values and skip over the original
    let mut e = rng.gen_range(0..n_entities - 1);
    if e >= original {
        e += 1;
    }
    let neg = match slot {
        Slot::Head => Quadruple { head: EntityId(e), ..*q },
        Slot::Tail => Quadruple { tail: EntityId(e), ..*q },
    };
    (neg, slot)
}
