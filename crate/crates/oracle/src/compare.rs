//! Simulated results relative to the optimum.

use thiserror::Error;

use crate::problem::{McfProblem, McfSolution};

/// Bits in the transfer whose completion time is reported.
pub const REFERENCE_FILE_BITS: f64 = 8e7;

/// Aggregate metrics of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMetrics {
    /// Goodput, bit/s.
    pub total_throughput: f64,
    /// Mean over flows of the reference-file completion time, seconds.
    pub avg_completion: f64,
    /// Seconds.
    pub avg_rtt: f64,
    pub fingerprint: Option<String>,
}

impl RunMetrics {
    /// Metrics the optimum would produce with `flows_per_pair` equal flows
    /// per pair, each delivering `goodput_fraction` of its rate as payload,
    /// and RTT equal to twice the flow-weighted path delay.
    pub fn from_solution(
        p: &McfProblem,
        sol: &McfSolution,
        flows_per_pair: usize,
        goodput_fraction: f64,
    ) -> Self {
        let k = flows_per_pair.max(1) as f64;
        let mut completion = 0.0;
        for &x in &sol.x {
            let per_flow = x * goodput_fraction / k;
            completion += if per_flow > 0.0 {
                REFERENCE_FILE_BITS / per_flow
            } else {
                f64::INFINITY
            };
        }
        let avg_completion = completion / sol.x.len().max(1) as f64;
        let plinks = p.path_links().expect("solution of a valid problem");
        let (mut w, mut total) = (0.0, 0.0);
        for (i, ys) in sol.y.iter().enumerate() {
            for (j, &y) in ys.iter().enumerate() {
                let d: f64 = plinks[i][j].iter().map(|&l| p.links[l].delay).sum();
                w += y * 2.0 * d;
                total += y;
            }
        }
        RunMetrics {
            total_throughput: sol.total_rate() * goodput_fraction,
            avg_completion,
            avg_rtt: if total > 0.0 { w / total } else { 0.0 },
            fingerprint: sol.fingerprint.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RelativeReport {
    /// Run completion time over optimal completion time.
    pub completion_ratio: f64,
    /// Run throughput over optimal throughput.
    pub throughput_fraction: f64,
    /// Run RTT over optimal RTT.
    pub rtt_ratio: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum CompareError {
    #[error("scenario fingerprints differ: {0} vs {1}")]
    Fingerprint(String, String),
}

/// Ratios of `run` to `opt`. Fingerprints must agree when both are set.
pub fn compare(run: &RunMetrics, opt: &RunMetrics) -> Result<RelativeReport, CompareError> {
    if let (Some(a), Some(b)) = (&run.fingerprint, &opt.fingerprint) {
        if a != b {
            return Err(CompareError::Fingerprint(a.clone(), b.clone()));
        }
    }
    Ok(RelativeReport {
        completion_ratio: run.avg_completion / opt.avg_completion,
        throughput_fraction: run.total_throughput / opt.total_throughput,
        rtt_ratio: run.avg_rtt / opt.avg_rtt,
    })
}
