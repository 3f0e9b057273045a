//! Counters, 1-second time series and measurement windows collected by the
//! simulator.

use crate::topology::NodeId;

/// Bytes in the transfer whose completion time is reported.
pub const REFERENCE_FILE_BITS: f64 = 10e6 * 8.0;

/// Completion time of the reference transfer at a constant throughput.
pub fn completion_time(throughput_bps: f64) -> f64 {
    if throughput_bps > 0.0 {
        REFERENCE_FILE_BITS / throughput_bps
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimCounters {
    pub data_sent: u64,
    pub data_delivered: u64,
    pub acks_delivered: u64,
    pub drops_no_route: u64,
    pub drops_link_down: u64,
    pub drops_tail: u64,
    pub loop_violations: u64,
    pub probes_sent: u64,
    pub probe_replies_delivered: u64,
    pub probes_discarded: u64,
    pub events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    /// End of the 1-second bin, seconds.
    pub t: f64,
    pub flow: u32,
    pub throughput_bps: f64,
    pub rtt_mean: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitSample {
    pub t: f64,
    pub router: NodeId,
    pub dst: NodeId,
    pub nexthop: NodeId,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TimeSeries {
    pub flows: Vec<FlowSample>,
    pub splits: Vec<SplitSample>,
}

/// Per-flow goodput and RTT accumulated since a window was opened.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub start: f64,
    pub end: f64,
    pub flow_bytes: Vec<u64>,
    pub rtt_sum: f64,
    pub rtt_count: u64,
}

impl WindowStats {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }

    /// Goodput of each flow in bit/s.
    pub fn flow_throughputs(&self) -> Vec<f64> {
        let d = self.duration();
        self.flow_bytes
            .iter()
            .map(|&b| if d > 0.0 { b as f64 * 8.0 / d } else { 0.0 })
            .collect()
    }

    pub fn total_throughput(&self) -> f64 {
        self.flow_throughputs().iter().sum()
    }

    /// Mean of [`completion_time`] over flows.
    pub fn avg_completion(&self) -> f64 {
        let t = self.flow_throughputs();
        if t.is_empty() {
            return f64::INFINITY;
        }
        t.iter().map(|&x| completion_time(x)).sum::<f64>() / t.len() as f64
    }

    /// Mean over all RTT samples, so paths count by the packets they carry.
    pub fn avg_rtt(&self) -> Option<f64> {
        (self.rtt_count > 0).then(|| self.rtt_sum / self.rtt_count as f64)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn completion_from_throughput() {
        assert_eq!(completion_time(8e6), 10.0);
        assert!(completion_time(0.0).is_infinite());
    }

    #[test]
    fn window_aggregates() {
        let w = WindowStats {
            start: 10.0,
            end: 20.0,
            flow_bytes: vec![1_250_000, 3_750_000],
            rtt_sum: 0.3,
            rtt_count: 3,
        };
        assert_eq!(w.flow_throughputs(), vec![1e6, 3e6]);
        assert_eq!(w.total_throughput(), 4e6);
        assert!((w.avg_completion() - (80.0 + 80.0 / 3.0) / 2.0).abs() < 1e-9);
        assert!((w.avg_rtt().unwrap() - 0.1).abs() < 1e-15);
    }
}
