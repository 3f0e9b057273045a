//! Window-based, ECN-reactive endpoint model (AIMD, NewReno-style) and the
//! receiver that echoes congestion marks on acknowledgments.

use std::collections::{BTreeMap, BTreeSet};

use crate::packet::{Packet, PacketKind, ACK_SIZE, DATA_PAYLOAD};
use crate::time::SimTime;
use crate::topology::NodeId;

/// Bytes of rounding slack when comparing produced data against packet
/// boundaries; production accumulates in floating point.
const PRODUCED_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransportConfig {
    pub initial_cwnd: f64,
    pub min_rto: SimTime,
    /// RTO used before the first RTT sample.
    pub initial_rto: SimTime,
    /// Fast retransmit after this many acknowledgments beyond the oldest
    /// outstanding packet. `None` relies on timeouts alone, which is the
    /// right choice when per-packet multipath forwarding reorders traffic.
    pub dupack_threshold: Option<u32>,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig {
            initial_cwnd: 2.0,
            min_rto: SimTime::from_millis(10),
            initial_rto: SimTime::from_millis(1000),
            dupack_threshold: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Demand {
    Infinite,
    Bytes(u64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcState {
    SlowStart,
    Avoidance,
}

/// Result of feeding one acknowledgment to a sender.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AckOutcome {
    pub newly_acked: u32,
    pub rtt_sample: Option<f64>,
    pub reduced: bool,
}

/// Sending side of one flow.
#[derive(Debug, Clone)]
pub struct FlowApp {
    pub id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub cwnd: f64,
    pub ssthresh: f64,
    pub state: CcState,
    pub bytes_acked: u64,
    pub start_time: SimTime,
    pub demand: Demand,
    /// Application rate limit in bit/s; `None` means backlogged.
    rate: Option<f64>,
    /// Bytes the application has handed to the transport so far.
    produced: f64,
    produced_at: SimTime,
    next_seq: u64,
    /// In flight: seq -> send time.
    outstanding: BTreeMap<u64, SimTime>,
    by_send_time: BTreeSet<(SimTime, u64)>,
    lost: BTreeSet<u64>,
    acked_total: u64,
    /// Marks and losses on packets below this sequence number belong to
    /// the window that already triggered a reduction.
    recover_seq: u64,
    srtt: Option<f64>,
    rttvar: f64,
    cwnd_limited: bool,
    dup_count: u32,
    dup_base: u64,
    cfg: TransportConfig,
    completed_at: Option<SimTime>,
}

impl FlowApp {
    pub fn new(
        id: u32,
        src: NodeId,
        dst: NodeId,
        demand: Demand,
        start_time: SimTime,
        cfg: TransportConfig,
    ) -> Self {
        FlowApp {
            id,
            src,
            dst,
            cwnd: cfg.initial_cwnd,
            ssthresh: f64::INFINITY,
            state: CcState::SlowStart,
            bytes_acked: 0,
            start_time,
            demand,
            rate: None,
            produced: 0.0,
            produced_at: start_time,
            next_seq: 0,
            outstanding: BTreeMap::new(),
            by_send_time: BTreeSet::new(),
            lost: BTreeSet::new(),
            acked_total: 0,
            recover_seq: 0,
            srtt: None,
            rttvar: 0.0,
            cwnd_limited: false,
            dup_count: 0,
            dup_base: u64::MAX,
            cfg,
            completed_at: None,
        }
    }

    pub fn in_flight(&self) -> usize {
        self.outstanding.len()
    }

    pub fn srtt(&self) -> Option<f64> {
        self.srtt
    }

    pub fn is_complete(&self) -> bool {
        self.completed_at.is_some()
    }

    pub fn completed_at(&self) -> Option<SimTime> {
        self.completed_at
    }

    pub fn rate(&self) -> Option<f64> {
        self.rate
    }

    fn total_packets(&self) -> Option<u64> {
        match self.demand {
            Demand::Infinite => None,
            Demand::Bytes(b) => Some(b.div_ceil(DATA_PAYLOAD as u64)),
        }
    }

    fn advance_production(&mut self, now: SimTime) {
        if now > self.produced_at {
            if let Some(r) = self.rate {
                self.produced += r / 8.0 * (now - self.produced_at).as_secs_f64();
            }
            self.produced_at = now;
        }
    }

    /// Changes the application rate limit from `now` on.
    pub fn set_rate(&mut self, rate: Option<f64>, now: SimTime) {
        self.advance_production(now);
        if rate.is_none() {
            self.produced = 0.0;
        } else if self.rate.is_none() {
            // Limited from here on: only new data counts.
            self.produced = self.next_seq as f64 * DATA_PAYLOAD as f64;
        }
        self.rate = rate;
    }

    /// Whether the application has a new packet ready.
    fn app_has_data(&self) -> bool {
        if let Some(total) = self.total_packets() {
            if self.next_seq >= total {
                return false;
            }
        }
        match self.rate {
            None => true,
            Some(_) => self.produced + PRODUCED_SLACK >= (self.next_seq + 1) as f64 * DATA_PAYLOAD as f64,
        }
    }

    /// When a rate-limited application will next have a packet ready.
    pub fn next_app_wake(&self, now: SimTime) -> Option<SimTime> {
        let rate = self.rate?;
        if rate <= 0.0 || self.is_complete() {
            return None;
        }
        if let Some(total) = self.total_packets() {
            if self.next_seq >= total {
                return None;
            }
        }
        let needed = (self.next_seq + 1) as f64 * DATA_PAYLOAD as f64 - self.produced;
        if needed <= PRODUCED_SLACK {
            return Some(now);
        }
        let dt = needed * 8.0 / rate;
        Some(self.produced_at + SimTime((dt * 1e9).ceil() as u64))
    }

    /// Emits DATA packets while fewer than `cwnd` are in flight.
    /// Retransmissions go first.
    pub fn on_send_opportunity(&mut self, now: SimTime) -> Vec<Packet> {
        let mut out = Vec::new();
        if self.is_complete() || now < self.start_time {
            return out;
        }
        self.advance_production(now);
        self.cwnd_limited = false;
        loop {
            if (self.outstanding.len() as f64) >= self.cwnd {
                self.cwnd_limited = true;
                break;
            }
            let seq = if let Some(seq) = self.lost.pop_first() {
                seq
            } else if self.app_has_data() {
                let s = self.next_seq;
                self.next_seq += 1;
                s
            } else {
                break;
            };
            self.outstanding.insert(seq, now);
            self.by_send_time.insert((now, seq));
            out.push(Packet::data(self.id, self.src, self.dst, seq, now));
        }
        out
    }

    fn forget(&mut self, seq: u64) -> bool {
        if let Some(t) = self.outstanding.remove(&seq) {
            self.by_send_time.remove(&(t, seq));
            true
        } else {
            false
        }
    }

    fn reduce(&mut self) {
        self.ssthresh = (self.cwnd / 2.0).max(1.0);
        self.cwnd = self.ssthresh;
        self.state = CcState::Avoidance;
        self.recover_seq = self.next_seq;
    }

    /// Processes an acknowledgment. Stale and duplicate acknowledgments
    /// change nothing.
    pub fn on_ack(&mut self, ack: &Packet, now: SimTime) -> AckOutcome {
        let mut outcome = AckOutcome::default();
        if ack.kind != PacketKind::Ack || ack.flow != self.id {
            return outcome;
        }
        let mut newly = 0u32;
        // A packet declared lost may still be acknowledged by its original copy.
        if self.forget(ack.seq) || self.lost.remove(&ack.seq) {
            newly += 1;
        }
        while let Some((&seq, _)) = self.outstanding.first_key_value() {
            if seq >= ack.cum_ack {
                break;
            }
            self.forget(seq);
            newly += 1;
        }
        while let Some(&seq) = self.lost.first() {
            if seq >= ack.cum_ack {
                break;
            }
            self.lost.pop_first();
            newly += 1;
        }
        if newly == 0 {
            return outcome;
        }
        outcome.newly_acked = newly;

        let sample = now.saturating_sub(ack.sent_at).as_secs_f64();
        outcome.rtt_sample = Some(sample);
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(s) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (s - sample).abs();
                self.srtt = Some(0.875 * s + 0.125 * sample);
            }
        }

        self.acked_total += newly as u64;
        let acked_bytes = self.acked_total * DATA_PAYLOAD as u64;
        self.bytes_acked = match self.demand {
            Demand::Infinite => acked_bytes,
            Demand::Bytes(b) => acked_bytes.min(b),
        };
        if let Demand::Bytes(b) = self.demand {
            if self.bytes_acked >= b && self.completed_at.is_none() {
                self.completed_at = Some(now);
            }
        }

        if let Some(th) = self.cfg.dupack_threshold {
            if self.detect_dupack_loss(ack.seq, th) {
                outcome.reduced = true;
                return outcome;
            }
        }

        if ack.ecn_mark {
            if ack.seq >= self.recover_seq {
                self.reduce();
                outcome.reduced = true;
            }
        } else if self.cwnd_limited {
            let n = newly as f64;
            match self.state {
                CcState::SlowStart => {
                    self.cwnd += n;
                    if self.cwnd >= self.ssthresh {
                        self.state = CcState::Avoidance;
                    }
                }
                CcState::Avoidance => self.cwnd += n / self.cwnd,
            }
        }
        outcome
    }

    /// Returns true if the window was reduced.
    fn detect_dupack_loss(&mut self, acked_seq: u64, threshold: u32) -> bool {
        let Some((&oldest, _)) = self.outstanding.first_key_value() else {
            self.dup_count = 0;
            return false;
        };
        if oldest != self.dup_base {
            self.dup_base = oldest;
            self.dup_count = 0;
        }
        if acked_seq > oldest {
            self.dup_count += 1;
            if self.dup_count >= threshold {
                self.forget(oldest);
                self.lost.insert(oldest);
                self.dup_count = 0;
                if oldest >= self.recover_seq {
                    self.reduce();
                    return true;
                }
            }
        }
        false
    }

    /// Current retransmission timeout: `max(2 * srtt, min_rto)`.
    pub fn rto(&self) -> SimTime {
        match self.srtt {
            None => self.cfg.initial_rto,
            Some(s) => SimTime::from_secs_f64(2.0 * s).max(self.cfg.min_rto),
        }
    }

    /// Earliest time at which an outstanding packet times out.
    pub fn next_timeout(&self) -> Option<SimTime> {
        self.by_send_time.first().map(|&(t, _)| t + self.rto())
    }

    /// Declares every packet older than the RTO lost; returns how many.
    /// The window is halved at most once per round trip.
    pub fn on_timer(&mut self, now: SimTime) -> usize {
        let rto = self.rto();
        let mut expired = Vec::new();
        for &(t, seq) in &self.by_send_time {
            if t + rto > now {
                break;
            }
            expired.push(seq);
        }
        let mut reduce = false;
        for &seq in &expired {
            self.forget(seq);
            self.lost.insert(seq);
            reduce |= seq >= self.recover_seq;
        }
        if reduce {
            self.reduce();
        }
        expired.len()
    }
}

/// Receiving side of one flow: cumulative acknowledgment state.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    next_expected: u64,
    out_of_order: BTreeSet<u64>,
    delivered: u64,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn next_expected(&self) -> u64 {
        self.next_expected
    }

    /// Packets delivered in order so far.
    pub fn delivered(&self) -> u64 {
        self.delivered
    }

    /// Turns a received DATA packet into its acknowledgment: the mark is
    /// copied, the ACK is not ECN-capable, and it is routed back along the
    /// reverse of the path the DATA packet took.
    pub fn echo_ecn(&mut self, mut data: Packet) -> Packet {
        debug_assert_eq!(data.kind, PacketKind::Data);
        if data.seq == self.next_expected {
            self.next_expected += 1;
            while self.out_of_order.remove(&self.next_expected) {
                self.next_expected += 1;
            }
        } else if data.seq > self.next_expected {
            self.out_of_order.insert(data.seq);
        }
        self.delivered = self.next_expected;

        let len = data.path.len() as u32;
        data.kind = PacketKind::Ack;
        data.size = ACK_SIZE;
        std::mem::swap(&mut data.src, &mut data.dst);
        data.cum_ack = self.next_expected;
        data.ecn_capable = false;
        data.handled = false;
        data.path.reverse();
        data.cursor = 0;
        data.mark_pos = data.mark_pos.map(|k| len - 1 - k);
        data
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow() -> FlowApp {
        FlowApp::new(
            0,
            NodeId(0),
            NodeId(1),
            Demand::Infinite,
            SimTime::ZERO,
            TransportConfig {
                initial_cwnd: 1.0,
                ..TransportConfig::default()
            },
        )
    }

    fn ack_for(rx: &mut Receiver, p: Packet) -> Packet {
        let mut p = p;
        p.path.push(NodeId(1));
        rx.echo_ecn(p)
    }

    #[test]
    fn cwnd_one_emits_one_packet() {
        let mut f = flow();
        let out = f.on_send_opportunity(SimTime::ZERO);
        assert_eq!(out.len(), 1);
        assert_eq!(out[0].size, 1500);
        assert_eq!(f.in_flight(), 1);
        assert!(f.on_send_opportunity(SimTime::ZERO).is_empty());
    }

    #[test]
    fn slow_start_doubles_per_rtt() {
        let mut f = flow();
        let mut rx = Receiver::new();
        let rtt = SimTime::from_millis(10);
        let mut now = SimTime::ZERO;
        let mut window = f.on_send_opportunity(now);
        for expected in [2.0, 4.0, 8.0] {
            now += rtt;
            for p in window.drain(..) {
                let a = ack_for(&mut rx, p);
                f.on_ack(&a, now);
            }
            assert_eq!(f.cwnd, expected);
            window = f.on_send_opportunity(now);
            assert_eq!(window.len(), expected as usize);
        }
    }

    #[test]
    fn avoidance_adds_one_over_cwnd() {
        let mut f = flow();
        f.cwnd = 10.0;
        f.state = CcState::Avoidance;
        let mut rx = Receiver::new();
        let sent = f.on_send_opportunity(SimTime::ZERO);
        let a = ack_for(&mut rx, sent[0].clone());
        f.on_ack(&a, SimTime::from_millis(5));
        assert!((f.cwnd - 10.1).abs() < 1e-12);
    }

    #[test]
    fn two_marks_in_one_rtt_halve_once() {
        let mut f = flow();
        f.cwnd = 16.0;
        f.state = CcState::Avoidance;
        let mut rx = Receiver::new();
        let sent = f.on_send_opportunity(SimTime::ZERO);
        let mut p0 = sent[0].clone();
        p0.ecn_mark = true;
        let mut p1 = sent[1].clone();
        p1.ecn_mark = true;
        let a0 = ack_for(&mut rx, p0);
        let a1 = ack_for(&mut rx, p1);
        assert!(a0.ecn_mark && a1.ecn_mark);
        assert!(f.on_ack(&a0, SimTime::from_millis(5)).reduced);
        assert!(!f.on_ack(&a1, SimTime::from_millis(5)).reduced);
        assert_eq!(f.cwnd, 8.0);
        // A mark on data sent after the reduction halves again.
        let later = f.on_send_opportunity(SimTime::from_millis(6));
        assert!(later.is_empty() || later[0].seq >= 16);
        let mut rx2 = Receiver::new();
        let mut p = Packet::data(0, NodeId(0), NodeId(1), 20, SimTime::from_millis(6));
        p.ecn_mark = true;
        f.outstanding.insert(20, SimTime::from_millis(6));
        f.by_send_time.insert((SimTime::from_millis(6), 20));
        let a = ack_for(&mut rx2, p);
        assert!(f.on_ack(&a, SimTime::from_millis(20)).reduced);
        assert_eq!(f.cwnd, 4.0);
    }

    #[test]
    fn stale_ack_is_ignored() {
        let mut f = flow();
        let mut rx = Receiver::new();
        let sent = f.on_send_opportunity(SimTime::ZERO);
        let a = ack_for(&mut rx, sent[0].clone());
        assert_eq!(f.on_ack(&a, SimTime::from_millis(1)).newly_acked, 1);
        let cwnd = f.cwnd;
        assert_eq!(f.on_ack(&a, SimTime::from_millis(2)), AckOutcome::default());
        assert_eq!(f.cwnd, cwnd);
    }

    #[test]
    fn echo_copies_mark_and_reverses_route() {
        let mut rx = Receiver::new();
        let mut p = Packet::data(3, NodeId(0), NodeId(2), 0, SimTime::ZERO);
        p.path.extend([NodeId(1), NodeId(2)]);
        p.ecn_mark = true;
        p.mark_pos = Some(1);
        let a = rx.echo_ecn(p);
        assert_eq!(a.kind, PacketKind::Ack);
        assert_eq!(a.size, 40);
        assert!(a.ecn_mark);
        assert!(!a.ecn_capable);
        assert_eq!(a.path, vec![NodeId(2), NodeId(1), NodeId(0)]);
        assert_eq!(a.mark_pos, Some(1));
        assert_eq!((a.src, a.dst), (NodeId(2), NodeId(0)));

        let p = Packet::data(3, NodeId(0), NodeId(2), 1, SimTime::ZERO);
        assert!(!rx.echo_ecn(p).ecn_mark);
    }

    #[test]
    fn cumulative_ack_with_reordering() {
        let mut rx = Receiver::new();
        let mk = |s| Packet::data(0, NodeId(0), NodeId(1), s, SimTime::ZERO);
        assert_eq!(rx.echo_ecn(mk(1)).cum_ack, 0);
        assert_eq!(rx.echo_ecn(mk(2)).cum_ack, 0);
        assert_eq!(rx.echo_ecn(mk(0)).cum_ack, 3);
        assert_eq!(rx.echo_ecn(mk(1)).cum_ack, 3);
        assert_eq!(rx.echo_ecn(mk(4)).cum_ack, 3);
        assert_eq!(rx.echo_ecn(mk(3)).cum_ack, 5);
    }

    #[test]
    fn timeout_halves_and_retransmits() {
        let mut f = flow();
        f.cwnd = 4.0;
        let sent = f.on_send_opportunity(SimTime::ZERO);
        assert_eq!(sent.len(), 4);
        let deadline = f.next_timeout().unwrap();
        assert_eq!(deadline, SimTime::from_millis(1000));
        assert_eq!(f.on_timer(SimTime::from_millis(999)), 0);
        assert_eq!(f.on_timer(deadline), 4);
        assert_eq!(f.cwnd, 2.0);
        let re = f.on_send_opportunity(deadline);
        assert_eq!(re.iter().map(|p| p.seq).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn late_ack_of_timed_out_packet_counts_once() {
        let mut f = flow();
        f.cwnd = 2.0;
        let mut rx = Receiver::new();
        let sent = f.on_send_opportunity(SimTime::ZERO);
        f.on_timer(SimTime::from_millis(1000));
        let late = ack_for(&mut rx, sent[1].clone());
        assert_eq!(f.on_ack(&late, SimTime::from_millis(1001)).newly_acked, 1);
        let re = f.on_send_opportunity(SimTime::from_millis(1001));
        assert_eq!(re[0].seq, 0);
        let a = ack_for(&mut rx, re[0].clone());
        assert_eq!(f.on_ack(&a, SimTime::from_millis(1002)).newly_acked, 1);
        assert_eq!(f.bytes_acked, 2 * DATA_PAYLOAD as u64);
    }

    #[test]
    fn finite_demand_completes_exactly() {
        let mut f = FlowApp::new(
            0,
            NodeId(0),
            NodeId(1),
            Demand::Bytes(3000),
            SimTime::ZERO,
            TransportConfig::default(),
        );
        let mut rx = Receiver::new();
        let sent = f.on_send_opportunity(SimTime::ZERO);
        assert_eq!(sent.len(), 2);
        let a = ack_for(&mut rx, sent[0].clone());
        f.on_ack(&a, SimTime::from_millis(1));
        assert!(!f.is_complete());
        let more = f.on_send_opportunity(SimTime::from_millis(1));
        assert_eq!(more.len(), 1);
        let a = ack_for(&mut rx, sent[1].clone());
        f.on_ack(&a, SimTime::from_millis(2));
        assert!(!f.is_complete());
        let a = ack_for(&mut rx, more[0].clone());
        f.on_ack(&a, SimTime::from_millis(3));
        assert!(f.is_complete());
        assert_eq!(f.bytes_acked, 3000);
    }

    #[test]
    fn rate_limited_app_paces_packets() {
        let mut f = flow();
        f.cwnd = 100.0;
        f.set_rate(Some(1460.0 * 8.0 * 1000.0), SimTime::ZERO); // 1000 pkt/s
        assert!(f.on_send_opportunity(SimTime::ZERO).is_empty());
        let wake = f.next_app_wake(SimTime::ZERO).unwrap();
        assert_eq!(wake, SimTime::from_millis(1));
        assert_eq!(f.on_send_opportunity(wake).len(), 1);
        assert_eq!(f.on_send_opportunity(SimTime::from_millis(10)).len(), 9);
        f.set_rate(None, SimTime::from_millis(10));
        assert_eq!(f.on_send_opportunity(SimTime::from_millis(10)).len(), 90);
    }

    #[test]
    fn app_limited_flow_does_not_inflate_cwnd() {
        let mut f = flow();
        f.cwnd = 10.0;
        f.set_rate(Some(1460.0 * 8.0 * 100.0), SimTime::ZERO);
        let mut rx = Receiver::new();
        for ms in 1..200u64 {
            let now = SimTime::from_millis(ms * 10);
            for p in f.on_send_opportunity(now) {
                let a = ack_for(&mut rx, p);
                f.on_ack(&a, now + SimTime::from_millis(1));
            }
        }
        assert_eq!(f.cwnd, 10.0);
    }

    #[test]
    fn dupack_threshold_detects_loss() {
        let mut f = FlowApp::new(
            0,
            NodeId(0),
            NodeId(1),
            Demand::Infinite,
            SimTime::ZERO,
            TransportConfig {
                initial_cwnd: 8.0,
                dupack_threshold: Some(3),
                ..TransportConfig::default()
            },
        );
        let mut rx = Receiver::new();
        let sent = f.on_send_opportunity(SimTime::ZERO);
        for p in sent.into_iter().skip(1).take(3) {
            let a = ack_for(&mut rx, p);
            f.on_ack(&a, SimTime::from_millis(5));
        }
        // Two acknowledgments grow the window to 10 before the third halves it.
        assert_eq!(f.cwnd, 5.0);
        let re = f.on_send_opportunity(SimTime::from_millis(5));
        assert_eq!(re[0].seq, 0);
    }
}
