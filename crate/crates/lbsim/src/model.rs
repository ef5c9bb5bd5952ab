//! Domain types shared by the simulator: replicas, load-balancing information
//! (LBI) updates, per-node views of the overlay, and scenario configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

/// Default number of peer nodes in the overlay.
pub const DEFAULT_NODE_COUNT: u32 = 1024;
/// Default simulated duration in seconds.
pub const DEFAULT_DURATION_S: f64 = 3000.0;
/// Default update period U in seconds.
pub const DEFAULT_UPDATE_PERIOD_S: f64 = 1.0;
/// Default per-hop propagation delay in seconds.
pub const DEFAULT_HOP_DELAY_S: f64 = 0.2;
/// Default depth of the dissemination tree.
pub const DEFAULT_MAX_TREE_DEPTH: u32 = 5;
/// Default RNG seed.
pub const DEFAULT_SEED: u64 = 7;
/// Simulated time at which membership churn begins.
pub const CHURN_START_S: f64 = 600.0;

/// Capacity classes of the standard replica population: (capacity, probability).
///
/// Probabilities must sum to 1; `sample_capacity` depends on this table.
pub const CAPACITY_CLASSES: [(f64, f64); 3] = [(1.0, 0.1), (10.0, 0.6), (100.0, 0.3)];

/// Scenario validation failure; the message names the offending field.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid scenario: {0}")]
pub struct ConfigError(pub String);

/// Identifier of a replica, drawn from the scenario's replica pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReplicaId(pub u32);

impl fmt::Display for ReplicaId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Map a nominal capacity onto the standard class of `CAPACITY_CLASSES`.
pub fn capacity_class(nominal_capacity: f64) -> &'static str {
    if nominal_capacity == 1.0 {
        "low"
    } else if nominal_capacity == 10.0 {
        "mid"
    } else if nominal_capacity == 100.0 {
        "high"
    } else {
        "other"
    }
}

/// Draw a capacity from the standard population given a uniform sample in [0, 1).
pub fn sample_capacity(u: f64) -> f64 {
    let mut acc = 0.0;
    for &(capacity, probability) in CAPACITY_CLASSES.iter() {
        acc += probability;
        if u < acc {
            return capacity;
        }
    }
    // u may round up to exactly 1.0 in caller arithmetic; last class wins.
    CAPACITY_CLASSES[CAPACITY_CLASSES.len() - 1].0
}

/// One replica node offering service capacity.
#[derive(Debug, Clone)]
pub struct Replica {
    pub id: ReplicaId,
    /// Nominal maximum request rate, requests/second. Always > 0.
    pub max_capacity: f64,
    /// Capacity currently consumed by work outside this system.
    /// Maintained within [0, max_capacity].
    pub extraneous_load: f64,
    /// Requests received in the current accounting window.
    pub window_arrivals: u64,
    pub alive: bool,
    pub birth_time: f64,
    pub death_time: Option<f64>,
}

impl Replica {
    /// Create a live replica. Panics if `max_capacity` is not positive and finite.
    pub fn new(id: ReplicaId, max_capacity: f64, birth_time: f64) -> Self {
        assert!(
            max_capacity > 0.0 && max_capacity.is_finite(),
            "replica capacity must be positive"
        );
        Replica {
            id,
            max_capacity,
            extraneous_load: 0.0,
            window_arrivals: 0,
            alive: true,
            birth_time,
            death_time: None,
        }
    }

    /// Capacity the replica can still honor: max_capacity − extraneous_load.
    pub fn honored_capacity(&self) -> f64 {
        self.max_capacity - self.extraneous_load
    }

    /// Set the extraneous load, clamped into [0, max_capacity].
    pub fn set_extraneous_load(&mut self, load: f64) {
        self.extraneous_load = load.clamp(0.0, self.max_capacity);
    }
}

/// The kind of a load-balancing information update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateKind {
    /// Observed request rate over the replica's last completed window.
    Load,
    /// Spare honored capacity the replica reports.
    AvailCap,
    /// The honored capacity the replica contracts to serve.
    Contract,
    /// A replica joined; carries its initial contract as the value.
    Birth,
    /// A replica left; consumers must stop routing to it.
    Invalidation,
}

/// A single LBI update disseminated from a replica to all peer nodes.
#[derive(Debug, Clone, Copy)]
pub struct LbiUpdate {
    pub replica_id: ReplicaId,
    pub kind: UpdateKind,
    /// Meaning depends on `kind`; zero for `Invalidation`. Never negative.
    pub value: f64,
    pub issue_time: f64,
}

impl LbiUpdate {
    pub fn new(replica_id: ReplicaId, kind: UpdateKind, value: f64, issue_time: f64) -> Self {
        debug_assert!(value >= 0.0 && value.is_finite(), "update value must be ≥ 0");
        LbiUpdate { replica_id, kind, value, issue_time }
    }
}

/// Latest delivered LBI values for one replica, as seen from some node.
#[derive(Debug, Clone, Copy)]
pub struct CachedLbi {
    pub load: f64,
    pub avail: f64,
    pub contract: f64,
    /// Issue time of the newest update applied to this entry.
    pub issue_time: f64,
    /// Simulated time at which that update was delivered.
    pub receipt_time: f64,
}

/// Delivered-update state for one observer: every replica it believes alive,
/// with the freshest values that have actually arrived.
///
/// A replica appears here exactly when a `Birth` was delivered and no later
/// `Invalidation` has been. Entries are keyed in id order so that iteration
/// (and therefore weight assignment downstream) is deterministic.
#[derive(Debug, Clone, Default)]
pub struct LbiCache {
    entries: BTreeMap<ReplicaId, CachedLbi>,
}

impl LbiCache {
    pub fn new() -> Self {
        Self::default()
    }

    /// Seed an entry for a replica that was already known before the run
    /// started (initial population; no dissemination cost).
    pub fn seed(&mut self, id: ReplicaId, contract: f64, issue_time: f64) {
        self.entries.insert(
            id,
            CachedLbi {
                load: 0.0,
                avail: contract,
                contract,
                issue_time,
                receipt_time: 0.0,
            },
        );
    }

    /// Apply a delivered update. `receipt_time` is the delivery time and must
    /// not precede the update's issue time.
    pub fn apply(&mut self, update: &LbiUpdate, receipt_time: f64) {
        debug_assert!(receipt_time >= update.issue_time);
        match update.kind {
            UpdateKind::Birth => {
                self.entries.insert(
                    update.replica_id,
                    CachedLbi {
                        load: 0.0,
                        avail: update.value,
                        contract: update.value,
                        issue_time: update.issue_time,
                        receipt_time,
                    },
                );
            }
            UpdateKind::Invalidation => {
                self.entries.remove(&update.replica_id);
            }
            UpdateKind::Load | UpdateKind::AvailCap | UpdateKind::Contract => {
                // Value updates for a replica we no longer (or don't yet)
                // believe alive are ignored; dissemination order guarantees
                // this only happens for departed replicas.
                if let Some(entry) = self.entries.get_mut(&update.replica_id) {
                    match update.kind {
                        UpdateKind::Load => entry.load = update.value,
                        UpdateKind::AvailCap => entry.avail = update.value,
                        UpdateKind::Contract => entry.contract = update.value,
                        _ => unreachable!(),
                    }
                    entry.issue_time = update.issue_time;
                    entry.receipt_time = receipt_time;
                }
            }
        }
    }

    /// Replicas currently believed alive, in id order.
    pub fn known_alive(&self) -> impl Iterator<Item = ReplicaId> + '_ {
        self.entries.keys().copied()
    }

    pub fn contains(&self, id: ReplicaId) -> bool {
        self.entries.contains_key(&id)
    }

    pub fn get(&self, id: ReplicaId) -> Option<&CachedLbi> {
        self.entries.get(&id)
    }

    /// (id, values) pairs in id order.
    pub fn iter(&self) -> impl Iterator<Item = (ReplicaId, &CachedLbi)> + '_ {
        self.entries.iter().map(|(id, e)| (*id, e))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// What one peer node knows: its place in the dissemination tree plus the
/// LBI values that have reached it so far.
#[derive(Debug, Clone)]
pub struct PeerView {
    pub node_id: u32,
    /// Distance from the dissemination root, ≥ 1. Updates issued at time s
    /// reach this node at s + tree_level × hop_delay.
    pub tree_level: u32,
    pub cache: LbiCache,
}

impl PeerView {
    pub fn new(node_id: u32, tree_level: u32) -> Self {
        assert!(tree_level >= 1, "tree level must be ≥ 1");
        PeerView { node_id, tree_level, cache: LbiCache::new() }
    }
}

/// Allocation strategy used by peer nodes to pick a replica per request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// Weight replicas by the inverse of their reported load.
    InvLoad,
    /// Weight replicas by their reported spare capacity.
    AvailCap,
    /// Weight replicas by their contracted maximum capacity.
    MaxCap,
}

impl Strategy {
    pub fn name(&self) -> &'static str {
        match self {
            Strategy::InvLoad => "invload",
            Strategy::AvailCap => "availcap",
            Strategy::MaxCap => "maxcap",
        }
    }

    /// Whether the strategy re-advertises state every update period.
    /// Contract-based balancing only speaks when the contract changes.
    pub fn is_periodic(&self) -> bool {
        !matches!(self, Strategy::MaxCap)
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Strategy {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "invload" => Ok(Strategy::InvLoad),
            "availcap" => Ok(Strategy::AvailCap),
            "maxcap" => Ok(Strategy::MaxCap),
            other => Err(ConfigError(format!(
                "strategy must be one of invload|availcap|maxcap, got '{other}'"
            ))),
        }
    }
}

/// Request arrival rate: absolute, or a fraction of total replica capacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateSpec {
    /// Requests per second.
    PerSecond(f64),
    /// Fraction of the sum of the initial replicas' maximum capacities.
    CapacityFraction(f64),
}

/// The request arrival process driving the simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WorkloadSpec {
    /// Exponential interarrivals at the given mean rate.
    Poisson { rate: RateSpec },
    /// Heavy-tailed interarrivals with shape `alpha` and scale `kappa`.
    Pareto { alpha: f64, kappa: f64 },
}

/// How the initial replica population is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum ReplicaPlan {
    /// Explicit capacities; replica ids are assigned 0..n in order.
    Fixed(Vec<f64>),
    /// Draw this many capacities from the standard population.
    Sampled(u32),
}

impl ReplicaPlan {
    pub fn count(&self) -> usize {
        match self {
            ReplicaPlan::Fixed(caps) => caps.len(),
            ReplicaPlan::Sampled(n) => *n as usize,
        }
    }
}

/// Membership churn: every `interval_s`, `swap_count` replicas leave and the
/// same number enter, drawn from a pool of `pool_size` replica ids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChurnPlan {
    pub interval_s: f64,
    pub swap_count: u32,
    pub pool_size: u32,
}

/// Periodic injection of non-system load: every `interval_s` each replica's
/// extraneous load is redrawn as v × max_capacity with v uniform in
/// [min_fraction, max_fraction].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExtraneousPlan {
    pub interval_s: f64,
    pub min_fraction: f64,
    pub max_fraction: f64,
}

/// Complete description of one simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub strategy: Strategy,
    pub node_count: u32,
    pub duration_s: f64,
    /// Update period U: minimum spacing between a replica's LBI updates.
    pub update_period_s: f64,
    pub hop_delay_s: f64,
    pub max_tree_depth: u32,
    pub workload: WorkloadSpec,
    pub replicas: ReplicaPlan,
    pub churn: Option<ChurnPlan>,
    pub extraneous: Option<ExtraneousPlan>,
    pub seed: u64,
}

impl ScenarioConfig {
    /// A scenario with the stock overlay parameters; callers override fields
    /// as needed.
    pub fn new(strategy: Strategy, replicas: ReplicaPlan, workload: WorkloadSpec) -> Self {
        ScenarioConfig {
            strategy,
            node_count: DEFAULT_NODE_COUNT,
            duration_s: DEFAULT_DURATION_S,
            update_period_s: DEFAULT_UPDATE_PERIOD_S,
            hop_delay_s: DEFAULT_HOP_DELAY_S,
            max_tree_depth: DEFAULT_MAX_TREE_DEPTH,
            workload,
            replicas,
            churn: None,
            extraneous: None,
            seed: DEFAULT_SEED,
        }
    }

    /// Check every cross-field constraint. Errors name the offending field.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(name: &str, v: f64) -> Result<(), ConfigError> {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(ConfigError(format!("{name} must be positive, got {v}")))
            }
        }

        if self.node_count == 0 {
            return Err(ConfigError("node_count must be ≥ 1".into()));
        }
        if !(self.duration_s >= 0.0 && self.duration_s.is_finite()) {
            return Err(ConfigError(format!(
                "duration must be ≥ 0, got {}",
                self.duration_s
            )));
        }
        positive("update_period", self.update_period_s)?;
        if !(self.hop_delay_s >= 0.0 && self.hop_delay_s.is_finite()) {
            return Err(ConfigError(format!(
                "hop_delay must be ≥ 0, got {}",
                self.hop_delay_s
            )));
        }
        if self.max_tree_depth == 0 {
            return Err(ConfigError("max_tree_depth must be ≥ 1".into()));
        }

        match &self.workload {
            WorkloadSpec::Poisson { rate } => match rate {
                RateSpec::PerSecond(l) => positive("lambda", *l)?,
                RateSpec::CapacityFraction(f) => positive("rate_fraction", *f)?,
            },
            WorkloadSpec::Pareto { alpha, kappa } => {
                positive("alpha", *alpha)?;
                positive("kappa", *kappa)?;
            }
        }

        match &self.replicas {
            ReplicaPlan::Fixed(caps) => {
                if caps.is_empty() {
                    return Err(ConfigError("replicas must list at least one capacity".into()));
                }
                for &c in caps {
                    positive("replicas (capacity)", c)?;
                }
            }
            ReplicaPlan::Sampled(n) => {
                if *n == 0 {
                    return Err(ConfigError("replicas sample count must be ≥ 1".into()));
                }
            }
        }

        let replica_count = self.replicas.count() as u32;
        if let Some(churn) = &self.churn {
            positive("churn_interval", churn.interval_s)?;
            if churn.swap_count == 0 {
                return Err(ConfigError("churn_swap_count must be ≥ 1".into()));
            }
            if churn.swap_count > replica_count {
                return Err(ConfigError(format!(
                    "churn_swap_count ({}) exceeds the replica count ({replica_count})",
                    churn.swap_count
                )));
            }
            if churn.pool_size < replica_count + churn.swap_count {
                return Err(ConfigError(format!(
                    "churn_pool_size ({}) must be at least replicas + churn_swap_count ({})",
                    churn.pool_size,
                    replica_count + churn.swap_count
                )));
            }
        }

        if let Some(x) = &self.extraneous {
            positive("extraneous_interval", x.interval_s)?;
            if !(0.0..=1.0).contains(&x.min_fraction) {
                return Err(ConfigError(format!(
                    "extraneous_min_fraction must lie in [0, 1], got {}",
                    x.min_fraction
                )));
            }
            if !(0.0..=1.0).contains(&x.max_fraction) {
                return Err(ConfigError(format!(
                    "extraneous_max_fraction must lie in [0, 1], got {}",
                    x.max_fraction
                )));
            }
            if x.min_fraction > x.max_fraction {
                return Err(ConfigError(
                    "extraneous_min_fraction must not exceed extraneous_max_fraction".into(),
                ));
            }
        }

        Ok(())
    }
}
