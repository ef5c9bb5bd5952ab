//! Request arrival processes and the simulator's seeded randomness.
//!
//! All randomness flows through labeled substreams of one scenario seed, so
//! consuming extra variates in one subsystem (say, churn) never perturbs
//! another (say, arrival times). Every variate consumes exactly one uniform.

use rand::distributions::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::model::{RateSpec, WorkloadSpec};

/// A sampler input fell outside the function's domain.
#[derive(Debug, Error, Clone, PartialEq)]
#[error("sample domain error: {0}")]
pub struct DomainError(pub String);

/// Independent, labeled randomness substreams derived from one seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamLabel {
    /// Interarrival times and the node each request lands on.
    Arrivals = 0,
    /// Replica choices made by nodes.
    Allocation = 1,
    /// Departure/entry selection and entering replicas' capacities.
    Churn = 2,
    /// Extraneous load fractions.
    Extraneous = 3,
    /// Static structure: node tree levels, sampled populations, report phases.
    Topology = 4,
}

/// A deterministic uniform stream: same (seed, label) ⇒ same sequence.
#[derive(Debug, Clone)]
pub struct RngStream {
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: StreamLabel) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // Distinct cipher streams give independent sequences per label.
        rng.set_stream(label as u64);
        RngStream { rng }
    }

    /// Uniform draw in [0, 1).
    pub fn next_unit(&mut self) -> f64 {
        self.rng.gen::<f64>()
    }

    /// Uniform draw in the open interval (0, 1).
    pub fn next_open(&mut self) -> f64 {
        self.rng.sample(Open01)
    }

    /// Uniform draw in {0, 1, …, n−1}.
    pub fn next_index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        let idx = (self.next_unit() * n as f64) as usize;
        idx.min(n - 1)
    }
}

/// Exponential interarrival by inverse transform: −ln(1−u)/λ.
///
/// Requires λ > 0 and u strictly inside (0, 1).
pub fn poisson_interarrival(lambda: f64, u: f64) -> Result<f64, DomainError> {
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(DomainError(format!("lambda must be positive, got {lambda}")));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(DomainError(format!("u must lie in (0, 1), got {u}")));
    }
    Ok(-(1.0 - u).ln() / lambda)
}

/// Heavy-tailed interarrival by inverting F(x) = 1 − (κ/(x+κ))^α:
/// x = κ·((1−u)^(−1/α) − 1).
///
/// Requires α > 0, κ > 0, and u in [0, 1); u = 0 maps to 0.
pub fn pareto_interarrival(alpha: f64, kappa: f64, u: f64) -> Result<f64, DomainError> {
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(DomainError(format!("alpha must be positive, got {alpha}")));
    }
    if !(kappa > 0.0 && kappa.is_finite()) {
        return Err(DomainError(format!("kappa must be positive, got {kappa}")));
    }
    if !(0.0..1.0).contains(&u) {
        return Err(DomainError(format!("u must lie in [0, 1), got {u}")));
    }
    Ok(kappa * ((1.0 - u).powf(-1.0 / alpha) - 1.0))
}

/// CDF of the heavy-tailed interarrival distribution, for round-trip checks.
pub fn pareto_cdf(alpha: f64, kappa: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    1.0 - (kappa / (x + kappa)).powf(alpha)
}

/// Mean arrival rate of the heavy-tailed process: (α−1)/κ when the mean
/// interarrival is finite (α > 1), else 0.
pub fn pareto_mean_rate(alpha: f64, kappa: f64) -> f64 {
    if alpha > 1.0 {
        (alpha - 1.0) / kappa
    } else {
        0.0
    }
}

/// Arrival rate as a fraction of the replica population's total capacity.
pub fn derive_lambda(rate_fraction: f64, capacities: &[f64]) -> f64 {
    rate_fraction * capacities.iter().sum::<f64>()
}

/// A concrete arrival process with all rates resolved.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ArrivalProcess {
    Poisson { lambda: f64 },
    Pareto { alpha: f64, kappa: f64 },
}

impl ArrivalProcess {
    /// Resolve a workload spec against the realized replica capacities.
    pub fn from_spec(spec: &WorkloadSpec, capacities: &[f64]) -> Self {
        match *spec {
            WorkloadSpec::Poisson { rate } => {
                let lambda = match rate {
                    RateSpec::PerSecond(l) => l,
                    RateSpec::CapacityFraction(f) => derive_lambda(f, capacities),
                };
                ArrivalProcess::Poisson { lambda }
            }
            WorkloadSpec::Pareto { alpha, kappa } => ArrivalProcess::Pareto { alpha, kappa },
        }
    }

    /// The process's long-run mean rate (0 if the mean does not exist).
    pub fn nominal_rate(&self) -> f64 {
        match *self {
            ArrivalProcess::Poisson { lambda } => lambda,
            ArrivalProcess::Pareto { alpha, kappa } => pareto_mean_rate(alpha, kappa),
        }
    }

    /// Draw the next interarrival, consuming exactly one uniform.
    pub fn next_interarrival(&self, stream: &mut RngStream) -> f64 {
        match *self {
            ArrivalProcess::Poisson { lambda } => {
                let u = stream.next_open();
                poisson_interarrival(lambda, u).expect("open-interval u is always in domain")
            }
            ArrivalProcess::Pareto { alpha, kappa } => {
                let u = stream.next_unit();
                pareto_interarrival(alpha, kappa, u).expect("unit-interval u is always in domain")
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn poisson_interarrival_known_values() {
        // Median of the exponential: ln 2 / λ.
        let dt = poisson_interarrival(289.0, 0.5).unwrap();
        assert_relative_eq!(dt, 2.398_43e-3, max_relative = 1e-4);

        // u = 1 − 1/e hits the mean of a unit-rate exponential.
        let dt = poisson_interarrival(1.0, 1.0 - (-1.0f64).exp()).unwrap();
        assert_relative_eq!(dt, 1.0, max_relative = 1e-12);
    }

    #[test]
    fn poisson_interarrival_rejects_out_of_domain_u() {
        assert!(poisson_interarrival(1.0, 0.0).is_err());
        assert!(poisson_interarrival(1.0, 1.0).is_err());
        assert!(poisson_interarrival(1.0, -0.1).is_err());
        assert!(poisson_interarrival(0.0, 0.5).is_err());
    }

    #[test]
    fn pareto_interarrival_known_values() {
        assert_eq!(pareto_interarrival(1.1, 0.000346, 0.0).unwrap(), 0.0);

        let dt = pareto_interarrival(1.1, 0.000346, 0.5).unwrap();
        assert_relative_eq!(dt, 3.037e-4, max_relative = 1e-3);

        assert!(pareto_interarrival(1.1, 0.000346, 1.0).is_err());
    }

    #[test]
    fn pareto_mean_rate_known_values() {
        assert_relative_eq!(pareto_mean_rate(1.1, 0.000346), 289.0, max_relative = 1e-3);
        assert_relative_eq!(pareto_mean_rate(2.0, 0.01), 100.0, max_relative = 1e-12);
        // Below α = 1 the mean interarrival diverges: no finite rate.
        assert_eq!(pareto_mean_rate(1.0, 0.01), 0.0);
        assert_eq!(pareto_mean_rate(0.9, 0.01), 0.0);
    }

    #[test]
    fn derive_lambda_scales_total_capacity() {
        let hetero: Vec<f64> = std::iter::once(1.0)
            .chain(std::iter::repeat_n(10.0, 6))
            .chain(std::iter::repeat_n(100.0, 3))
            .collect();
        assert_relative_eq!(derive_lambda(0.8, &hetero), 288.8, max_relative = 1e-12);
        assert_relative_eq!(derive_lambda(0.8, &[10.0; 10]), 80.0, max_relative = 1e-12);
        assert_relative_eq!(derive_lambda(1.0, &hetero), 361.0, max_relative = 1e-12);
    }

    #[test]
    fn poisson_sample_mean_matches_rate() {
        let mut stream = RngStream::new(17, StreamLabel::Arrivals);
        let lambda = 289.0;
        let n = 1_000_000;
        let total: f64 = (0..n)
            .map(|_| poisson_interarrival(lambda, stream.next_open()).unwrap())
            .sum();
        let mean = total / n as f64;
        assert!(
            (mean - 1.0 / lambda).abs() / (1.0 / lambda) < 0.01,
            "sample mean {mean} strays from {}",
            1.0 / lambda
        );
    }

    #[test]
    fn streams_are_deterministic_and_label_independent() {
        let seq = |seed, label| {
            let mut s = RngStream::new(seed, label);
            (0..32).map(|_| s.next_unit()).collect::<Vec<f64>>()
        };
        assert_eq!(
            seq(9, StreamLabel::Arrivals),
            seq(9, StreamLabel::Arrivals),
            "same seed and label must replay identically"
        );
        assert_ne!(seq(9, StreamLabel::Arrivals), seq(9, StreamLabel::Allocation));
        assert_ne!(seq(9, StreamLabel::Arrivals), seq(10, StreamLabel::Arrivals));
    }

    #[test]
    fn pareto_stream_is_bursty_but_on_rate() {
        // One frozen stream over a full-length horizon: the realized rate
        // stays near the nominal mean and at least one window bursts well
        // above it. With a tail this heavy the realized rate swings widely
        // from seed to seed, so this pins a representative seed rather than
        // asserting an ensemble property.
        let (alpha, kappa) = (1.1, 0.000346);
        let nominal = pareto_mean_rate(alpha, kappa);
        let duration = 3000.0;
        let mut stream = RngStream::new(171, StreamLabel::Arrivals);
        let mut t = 0.0;
        let mut windows = vec![0u32; duration as usize];
        let mut count: u64 = 0;
        while t < duration {
            t += pareto_interarrival(alpha, kappa, stream.next_unit()).unwrap();
            if t < duration {
                count += 1;
                windows[t as usize] += 1;
            }
        }
        let realized = count as f64 / duration;
        assert!(
            (realized - nominal).abs() / nominal < 0.10,
            "realized rate {realized} strays more than 10% from {nominal}"
        );
        let peak = *windows.iter().max().unwrap() as f64;
        assert!(
            peak > 1.5 * nominal,
            "expected at least one bursty window, peak was {peak} vs mean {nominal}"
        );
    }

    #[test]
    fn arrival_process_resolves_rate_fractions() {
        let caps = [1.0, 10.0, 100.0];
        let spec = WorkloadSpec::Poisson { rate: RateSpec::CapacityFraction(0.8) };
        match ArrivalProcess::from_spec(&spec, &caps) {
            ArrivalProcess::Poisson { lambda } => {
                assert_relative_eq!(lambda, 88.8, max_relative = 1e-12)
            }
            other => panic!("expected poisson, got {other:?}"),
        }
    }

    proptest! {
        #[test]
        fn pareto_round_trips_through_its_cdf(u in 0.0f64..0.999) {
            let x = pareto_interarrival(1.1, 0.000346, u).unwrap();
            let back = pareto_cdf(1.1, 0.000346, x);
            prop_assert!((back - u).abs() < 1e-9, "u {u} came back as {back}");
        }

        #[test]
        fn poisson_interarrival_is_positive_and_finite(
            lambda in 0.001f64..1e4,
            u in 1e-12f64..0.999999,
        ) {
            let dt = poisson_interarrival(lambda, u).unwrap();
            prop_assert!(dt > 0.0 && dt.is_finite());
        }
    }
}
