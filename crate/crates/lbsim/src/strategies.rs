//! Replica selection: turn a node's view of the replica set into a weight
//! per replica, then sample one replica per request.
//!
//! All three strategies are pure functions of a snapshot slice, so their
//! behavior is independent of where the snapshot came from (live engine
//! state, a test fixture, or a replayed trace).

use thiserror::Error;

use crate::model::{ReplicaId, Strategy};

/// Loads below this floor are treated as this value when inverting, so idle
/// replicas get a large but finite weight.
pub const LOAD_FLOOR: f64 = 1.0;

/// What a node currently believes about one replica.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicaSnapshot {
    pub id: ReplicaId,
    /// Reported recent request rate at the replica, requests/second.
    pub load: f64,
    /// Reported spare capacity, requests/second.
    pub avail: f64,
    /// Contracted maximum capacity, requests/second.
    pub contract: f64,
    pub alive: bool,
}

impl ReplicaSnapshot {
    pub fn new(id: u32, load: f64, avail: f64, contract: f64) -> Self {
        ReplicaSnapshot { id: ReplicaId(id), load, avail, contract, alive: true }
    }
}

/// Selection failed because the snapshot offered nothing to choose from.
#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum SelectionError {
    #[error("no alive replica available for selection")]
    NoReplicaAvailable,
}

/// Normalized selection weights over alive replicas, in snapshot order.
///
/// Invariants: every weight is ≥ 0, weights sum to 1 (within 1e-12), and only
/// alive replicas appear.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    entries: Vec<(ReplicaId, f64)>,
}

impl WeightVector {
    /// Normalize raw non-negative weights. At least one weight must be positive.
    fn normalized(raw: Vec<(ReplicaId, f64)>) -> Result<Self, SelectionError> {
        let total: f64 = raw.iter().map(|&(_, w)| w).sum();
        if total.is_nan() || total <= 0.0 {
            return Err(SelectionError::NoReplicaAvailable);
        }
        let entries: Vec<(ReplicaId, f64)> =
            raw.into_iter().map(|(id, w)| (id, w / total)).collect();
        debug_assert!({
            let s: f64 = entries.iter().map(|&(_, w)| w).sum();
            (s - 1.0).abs() < 1e-12
        });
        Ok(WeightVector { entries })
    }

    pub fn entries(&self) -> &[(ReplicaId, f64)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The weight assigned to `id`, or 0 if the replica is not present.
    pub fn weight_of(&self, id: ReplicaId) -> f64 {
        self.entries
            .iter()
            .find(|&&(e, _)| e == id)
            .map(|&(_, w)| w)
            .unwrap_or(0.0)
    }
}

fn alive_only(snapshots: &[ReplicaSnapshot]) -> impl Iterator<Item = &ReplicaSnapshot> {
    snapshots.iter().filter(|s| s.alive)
}

/// Weight replicas by 1 / max(load, LOAD_FLOOR): the lighter the reported
/// load, the more attractive the replica — regardless of its capacity.
pub fn invload_weights(snapshots: &[ReplicaSnapshot]) -> Result<WeightVector, SelectionError> {
    let raw: Vec<(ReplicaId, f64)> = alive_only(snapshots)
        .map(|s| (s.id, 1.0 / s.load.max(LOAD_FLOOR)))
        .collect();
    WeightVector::normalized(raw)
}

/// Weight replicas by reported spare capacity. Replicas reporting zero are
/// excluded outright; if every alive replica reports zero, fall back to a
/// uniform choice so requests still flow somewhere.
pub fn availcap_weights(snapshots: &[ReplicaSnapshot]) -> Result<WeightVector, SelectionError> {
    let raw: Vec<(ReplicaId, f64)> = alive_only(snapshots)
        .map(|s| (s.id, s.avail.max(0.0)))
        .collect();
    if raw.is_empty() {
        return Err(SelectionError::NoReplicaAvailable);
    }
    if raw.iter().all(|&(_, w)| w == 0.0) {
        let n = raw.len() as f64;
        return WeightVector::normalized(raw.into_iter().map(|(id, _)| (id, 1.0 / n)).collect());
    }
    WeightVector::normalized(raw)
}

/// Weight replicas by contracted capacity, ignoring any load or spare-capacity
/// reports. Falls back to uniform if every contract is zero.
pub fn maxcap_weights(snapshots: &[ReplicaSnapshot]) -> Result<WeightVector, SelectionError> {
    let raw: Vec<(ReplicaId, f64)> = alive_only(snapshots)
        .map(|s| (s.id, s.contract.max(0.0)))
        .collect();
    if raw.is_empty() {
        return Err(SelectionError::NoReplicaAvailable);
    }
    if raw.iter().all(|&(_, w)| w == 0.0) {
        let n = raw.len() as f64;
        return WeightVector::normalized(raw.into_iter().map(|(id, _)| (id, 1.0 / n)).collect());
    }
    WeightVector::normalized(raw)
}

/// Dispatch to the strategy's weight function.
pub fn weights_for(
    strategy: Strategy,
    snapshots: &[ReplicaSnapshot],
) -> Result<WeightVector, SelectionError> {
    match strategy {
        Strategy::InvLoad => invload_weights(snapshots),
        Strategy::AvailCap => availcap_weights(snapshots),
        Strategy::MaxCap => maxcap_weights(snapshots),
    }
}

/// Pick a replica by inverse-transform sampling over the weight vector:
/// entry i owns the half-open interval [cum_{i-1}, cum_i) of [0, 1).
///
/// `u` must lie in [0, 1). Accumulated rounding can leave u at or above the
/// final cumulative bound; the last entry absorbs that sliver.
pub fn choose_replica(weights: &WeightVector, u: f64) -> ReplicaId {
    debug_assert!((0.0..1.0).contains(&u), "u must lie in [0, 1)");
    debug_assert!(!weights.is_empty());
    let mut acc = 0.0;
    for &(id, w) in weights.entries() {
        acc += w;
        if u < acc {
            return id;
        }
    }
    weights.entries().last().expect("non-empty weight vector").0
}
