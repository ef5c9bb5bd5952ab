//! Run metrics: per-window utilization samples, per-replica overload
//! counters, dissemination overhead, and the CSV export used by the CLI.
//!
//! The four CSV schemas are a stability contract: headers, column order, and
//! 6-significant-digit numeric formatting must not drift, since downstream
//! tooling diffs these files byte-for-byte across runs.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::model::{capacity_class, ReplicaId, Strategy};

/// A metrics file could not be written.
#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("failed to write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// One per-replica utilization observation at a window boundary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilizationSample {
    pub time: f64,
    pub replica: ReplicaId,
    /// window arrivals / honored capacity; 1.0 means exactly at capacity.
    pub utilization: f64,
    pub honored_capacity: f64,
}

/// Request totals for one replica, accumulated across all of its lifetimes.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct OverloadCounter {
    pub total: u64,
    pub overloaded: u64,
    /// Nominal capacity from the replica's most recent lifetime, for class
    /// labeling.
    pub nominal_capacity: f64,
}

/// A point of the total-honored-capacity ratio series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioSample {
    pub time: f64,
    /// Σ honored capacity of alive replicas / the run's initial total.
    pub ratio: f64,
}

/// Mean and tail quantiles of one replica's utilization series.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UtilizationSummary {
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
}

/// Everything a run records.
#[derive(Debug, Clone)]
pub struct MetricsStore {
    strategy: Strategy,
    seed: u64,
    utilization: Vec<UtilizationSample>,
    overload: BTreeMap<ReplicaId, OverloadCounter>,
    capacity_ratio: Vec<RatioSample>,
    /// Total LBI update messages delivered to nodes (issues × node count).
    pub overhead_updates: u64,
    /// Requests that reached no live replica.
    pub lost_requests: u64,
    /// Requests generated by the arrival process.
    pub generated_requests: u64,
}

impl MetricsStore {
    pub fn new(strategy: Strategy, seed: u64) -> Self {
        MetricsStore {
            strategy,
            seed,
            utilization: Vec::new(),
            overload: BTreeMap::new(),
            capacity_ratio: Vec::new(),
            overhead_updates: 0,
            lost_requests: 0,
            generated_requests: 0,
        }
    }

    pub fn strategy(&self) -> Strategy {
        self.strategy
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Ensure a counter row exists for `id` and record its current nominal
    /// capacity (a replica re-entering with new capacity relabels its class).
    pub fn register_replica(&mut self, id: ReplicaId, nominal_capacity: f64) {
        let counter = self.overload.entry(id).or_default();
        counter.nominal_capacity = nominal_capacity;
    }

    /// Count one delivered request for `id`.
    pub fn record_arrival(&mut self, id: ReplicaId) {
        self.overload.entry(id).or_default().total += 1;
    }

    /// Attribute `count` already-delivered requests to an overloaded period.
    pub fn record_overloaded(&mut self, id: ReplicaId, count: u64) {
        let counter = self.overload.entry(id).or_default();
        counter.overloaded += count;
        debug_assert!(counter.overloaded <= counter.total);
    }

    pub fn push_utilization(&mut self, sample: UtilizationSample) {
        debug_assert!(
            self.utilization
                .iter()
                .rev()
                .find(|s| s.replica == sample.replica)
                .is_none_or(|prev| prev.time < sample.time),
            "utilization series must advance strictly in time per replica"
        );
        self.utilization.push(sample);
    }

    pub fn push_ratio(&mut self, sample: RatioSample) {
        self.capacity_ratio.push(sample);
    }

    pub fn utilization_series(&self) -> &[UtilizationSample] {
        &self.utilization
    }

    pub fn capacity_ratio_series(&self) -> &[RatioSample] {
        &self.capacity_ratio
    }

    pub fn overload_counters(&self) -> impl Iterator<Item = (ReplicaId, &OverloadCounter)> + '_ {
        self.overload.iter().map(|(id, c)| (*id, c))
    }

    pub fn counter(&self, id: ReplicaId) -> Option<&OverloadCounter> {
        self.overload.get(&id)
    }

    /// Requests actually served by replicas: Σ per-replica totals.
    pub fn delivered_requests(&self) -> u64 {
        self.overload.values().map(|c| c.total).sum()
    }

    /// Fraction of `id`'s requests that arrived while it was overloaded.
    /// Absent (not zero) when the replica received no requests.
    pub fn overloaded_percentage(&self, id: ReplicaId) -> Option<f64> {
        let counter = self.overload.get(&id)?;
        if counter.total == 0 {
            return None;
        }
        Some(counter.overloaded as f64 / counter.total as f64)
    }

    /// Unweighted mean of `overloaded_percentage` over replicas that received
    /// at least one request.
    pub fn mean_overload_pct(&self) -> f64 {
        let pcts: Vec<f64> = self
            .overload
            .keys()
            .filter_map(|&id| self.overloaded_percentage(id))
            .collect();
        if pcts.is_empty() {
            return 0.0;
        }
        pcts.iter().sum::<f64>() / pcts.len() as f64
    }

    /// Mean, 5th and 95th percentile of one replica's utilization samples.
    pub fn utilization_summary(&self, id: ReplicaId) -> Option<UtilizationSummary> {
        let mut values: Vec<f64> = self
            .utilization
            .iter()
            .filter(|s| s.replica == id)
            .map(|s| s.utilization)
            .collect();
        if values.is_empty() {
            return None;
        }
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        Some(UtilizationSummary {
            mean,
            p5: percentile(&values, 0.05),
            p95: percentile(&values, 0.95),
        })
    }

    /// Write utilization.csv, overload.csv, summary.csv, and ratio.csv into
    /// `dir` (which must exist).
    pub fn write_csv(&self, dir: &Path) -> Result<(), MetricsError> {
        let open = |name: &str| -> Result<(PathBuf, BufWriter<File>), MetricsError> {
            let path = dir.join(name);
            let file = File::create(&path).map_err(|source| MetricsError::Io {
                path: path.clone(),
                source,
            })?;
            Ok((path, BufWriter::new(file)))
        };
        let finish = |path: PathBuf, res: std::io::Result<()>| -> Result<(), MetricsError> {
            res.map_err(|source| MetricsError::Io { path, source })
        };

        let (path, mut w) = open("utilization.csv")?;
        finish(path, (|| {
            writeln!(w, "time,replica_id,utilization,honored_capacity")?;
            for s in &self.utilization {
                writeln!(
                    w,
                    "{},{},{},{}",
                    fmt_sig6(s.time),
                    s.replica,
                    fmt_sig6(s.utilization),
                    fmt_sig6(s.honored_capacity)
                )?;
            }
            w.flush()
        })())?;

        let (path, mut w) = open("overload.csv")?;
        finish(path, (|| {
            writeln!(w, "replica_id,class,total,overloaded,pct")?;
            for (id, c) in &self.overload {
                // Replicas that never received a request have no meaningful
                // percentage; they are omitted rather than reported as 0.
                if c.total == 0 {
                    continue;
                }
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    id,
                    capacity_class(c.nominal_capacity),
                    c.total,
                    c.overloaded,
                    fmt_sig6(c.overloaded as f64 / c.total as f64)
                )?;
            }
            w.flush()
        })())?;

        let (path, mut w) = open("summary.csv")?;
        finish(path, (|| {
            writeln!(w, "strategy,seed,overhead_updates,lost_requests,mean_overload_pct")?;
            writeln!(
                w,
                "{},{},{},{},{}",
                self.strategy,
                self.seed,
                self.overhead_updates,
                self.lost_requests,
                fmt_sig6(self.mean_overload_pct())
            )?;
            w.flush()
        })())?;

        let (path, mut w) = open("ratio.csv")?;
        finish(path, (|| {
            writeln!(w, "time,ratio")?;
            for s in &self.capacity_ratio {
                writeln!(w, "{},{}", fmt_sig6(s.time), fmt_sig6(s.ratio))?;
            }
            w.flush()
        })())?;

        Ok(())
    }
}

/// Nearest-rank percentile of an ascending-sorted slice.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.saturating_sub(1).min(sorted.len() - 1)]
}

/// Format with 6 significant digits, plain decimal notation.
pub fn fmt_sig6(x: f64) -> String {
    if x == 0.0 {
        return "0.00000".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (5 - magnitude).clamp(0, 17) as usize;
    format!("{x:.decimals$}")
}
