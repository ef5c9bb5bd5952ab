//! Deterministic discrete-event simulator of decentralized load balancing
//! across heterogeneous replica nodes.
//!
//! Peer nodes route each incoming request to one replica, weighting their
//! choice by load-balancing information (LBI) that replicas disseminate
//! through a propagation tree. Three allocation strategies are implemented —
//! inverse-load, spare-capacity, and contracted-capacity weighting — and can
//! be compared under identical seeded workloads, membership churn, and
//! extraneous (non-balanced) load.
//!
//! The crate is organized as:
//! - [`model`]: domain types, scenario configuration, per-node LBI caches;
//! - [`strategies`]: the three weighting functions and replica selection;
//! - [`workload`]: seeded randomness and arrival processes;
//! - [`engine`]: the event loop tying it all together;
//! - [`metrics`]: utilization/overload accounting and CSV export;
//! - [`cli`]: scenario files, presets, and the command-line driver.

pub mod cli;
pub mod engine;
pub mod metrics;
pub mod model;
pub mod strategies;
pub mod workload;

pub use engine::{run, run_audited, EngineError};
pub use model::{ConfigError, ScenarioConfig, Strategy};
