//! Per-link transmission queue with CoDel AQM in ECN marking mode and the
//! EMA congestion price derived from AQM marks.

use std::collections::VecDeque;

use crate::packet::Packet;
use crate::time::SimTime;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CodelParams {
    pub target: SimTime,
    pub interval: SimTime,
    /// A queue holding at most this many bytes behind the head is never
    /// considered above target.
    pub mtu: u32,
}

impl Default for CodelParams {
    fn default() -> Self {
        CodelParams {
            target: SimTime::from_millis(5),
            interval: SimTime::from_millis(100),
            mtu: crate::packet::DATA_SIZE,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodelState {
    /// Time at which the sojourn time will have been above target for a
    /// full interval; `None` while below target.
    pub first_above_time: Option<SimTime>,
    pub drop_next: SimTime,
    pub count: u32,
    pub lastcount: u32,
    pub dropping: bool,
}

/// `t + interval / sqrt(count)`.
pub fn control_law(t: SimTime, interval: SimTime, count: u32) -> SimTime {
    let step = interval.as_nanos() as f64 / (count.max(1) as f64).sqrt();
    t + SimTime(step as u64)
}

/// Smoothing factor of an EMA approximating a simple moving average over
/// `n` samples.
pub fn ema_alpha(n: u32) -> f64 {
    2.0 / (n as f64 + 1.0)
}

/// Number of 1 ms price updates the EMA approximates (a 5 s window).
pub const PRICE_EMA_SAMPLES: u32 = 5000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnqueueOutcome {
    Queued,
    /// Tail drop: the packet would exceed the byte limit.
    Dropped,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LinkCounters {
    /// Packets accepted into the queue.
    pub enqueued: u64,
    pub tail_drops: u64,
    pub aqm_drops: u64,
    /// Packets handed to the transmitter.
    pub dequeued: u64,
    /// Packets discarded because the link went down.
    pub flushed: u64,
    pub marks: u64,
    pub bytes_sent: u64,
    pub probe_bytes_sent: u64,
}

#[derive(Debug)]
struct Queued {
    packet: Packet,
    enqueued_at: SimTime,
}

/// Dynamic state of one directed link.
#[derive(Debug)]
pub struct LinkState {
    queue: VecDeque<Queued>,
    queued_bytes: u64,
    max_bytes: u64,
    /// Transmitter busy until this time.
    pub busy_until: SimTime,
    params: CodelParams,
    codel: CodelState,
    alpha: f64,
    price: f64,
    marks_this_tick: u32,
    pinned_price: Option<f64>,
    counters: LinkCounters,
}

impl LinkState {
    pub fn new(max_bytes: u64, params: CodelParams) -> Self {
        LinkState {
            queue: VecDeque::new(),
            queued_bytes: 0,
            max_bytes,
            busy_until: SimTime::ZERO,
            params,
            codel: CodelState::default(),
            alpha: ema_alpha(PRICE_EMA_SAMPLES),
            price: 0.0,
            marks_this_tick: 0,
            pinned_price: None,
            counters: LinkCounters::default(),
        }
    }

    /// Queue sized to hold `buffer_time` worth of traffic at `capacity_bps`.
    pub fn with_buffer_time(capacity_bps: f64, buffer_time: f64, params: CodelParams) -> Self {
        let max_bytes = (capacity_bps * buffer_time / 8.0).max(params.mtu as f64) as u64;
        Self::new(max_bytes, params)
    }

    /// Tail-drops when the packet does not fit; otherwise queues it with
    /// its arrival timestamp.
    pub fn enqueue(&mut self, packet: Packet, now: SimTime) -> EnqueueOutcome {
        if self.queued_bytes + packet.size as u64 > self.max_bytes {
            self.counters.tail_drops += 1;
            return EnqueueOutcome::Dropped;
        }
        self.queued_bytes += packet.size as u64;
        self.counters.enqueued += 1;
        self.queue.push_back(Queued {
            packet,
            enqueued_at: now,
        });
        EnqueueOutcome::Queued
    }

    /// Pops the head and evaluates the sojourn time against the target.
    /// Returns the packet and whether the control law may act on it.
    fn pop_head(&mut self, now: SimTime) -> Option<(Packet, bool)> {
        let Some(q) = self.queue.pop_front() else {
            self.codel.first_above_time = None;
            return None;
        };
        self.queued_bytes -= q.packet.size as u64;
        let sojourn = now.saturating_sub(q.enqueued_at);
        let ok_to_drop = if sojourn < self.params.target || self.queued_bytes <= self.params.mtu as u64 {
            self.codel.first_above_time = None;
            false
        } else {
            match self.codel.first_above_time {
                None => {
                    self.codel.first_above_time = Some(now + self.params.interval);
                    false
                }
                Some(t) => now >= t,
            }
        };
        Some((q.packet, ok_to_drop))
    }

    fn signal(&mut self) {
        self.counters.marks += 1;
        self.marks_this_tick += 1;
    }

    fn aqm_drop(&mut self) {
        self.counters.aqm_drops += 1;
        self.marks_this_tick += 1;
    }

    /// CoDel dequeue. ECN-capable packets selected by the control law are
    /// marked, others are dropped. Probe packets are never marked or
    /// dropped and leave the control-law state untouched.
    pub fn dequeue(&mut self, now: SimTime) -> Option<Packet> {
        let (mut pkt, mut ok) = match self.pop_head(now) {
            Some(x) => x,
            None => {
                self.codel.dropping = false;
                return None;
            }
        };
        if self.codel.dropping {
            if !ok {
                self.codel.dropping = false;
            } else {
                while self.codel.dropping && now >= self.codel.drop_next {
                    if pkt.kind.is_probe() {
                        break;
                    }
                    self.codel.count += 1;
                    if pkt.ecn_capable {
                        pkt.ecn_mark = true;
                        self.signal();
                        self.codel.drop_next =
                            control_law(self.codel.drop_next, self.params.interval, self.codel.count);
                        break;
                    }
                    self.aqm_drop();
                    match self.pop_head(now) {
                        None => {
                            self.codel.dropping = false;
                            return None;
                        }
                        Some((p, o)) => {
                            pkt = p;
                            ok = o;
                        }
                    }
                    if !ok {
                        self.codel.dropping = false;
                    } else {
                        self.codel.drop_next =
                            control_law(self.codel.drop_next, self.params.interval, self.codel.count);
                    }
                }
            }
        } else if ok && !pkt.kind.is_probe() {
            if pkt.ecn_capable {
                pkt.ecn_mark = true;
                self.signal();
            } else {
                self.aqm_drop();
                match self.pop_head(now) {
                    None => {
                        // Queue drained by the drop; stay in the drop state
                        // so the next standing queue is controlled at once.
                        self.enter_dropping(now);
                        return None;
                    }
                    Some((p, _)) => pkt = p,
                }
            }
            self.enter_dropping(now);
        }
        self.counters.dequeued += 1;
        self.counters.bytes_sent += pkt.size as u64;
        if pkt.kind.is_probe() {
            self.counters.probe_bytes_sent += pkt.size as u64;
        }
        Some(pkt)
    }

    fn enter_dropping(&mut self, now: SimTime) {
        self.codel.dropping = true;
        let delta = self.codel.count.saturating_sub(self.codel.lastcount);
        let recent = now < self.codel.drop_next + SimTime(16 * self.params.interval.as_nanos());
        self.codel.count = if delta > 1 && recent { delta } else { 1 };
        self.codel.lastcount = self.codel.count;
        self.codel.drop_next = control_law(now, self.params.interval, self.codel.count);
    }

    /// One EMA update: `price <- a * marks + (1 - a) * price`, then the
    /// per-tick mark counter restarts.
    pub fn price_tick(&mut self) -> f64 {
        if let Some(p) = self.pinned_price {
            self.price = p;
        } else {
            self.price = self.alpha * self.marks_this_tick as f64 + (1.0 - self.alpha) * self.price;
        }
        self.marks_this_tick = 0;
        self.price
    }

    pub fn price(&self) -> f64 {
        self.price
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Sets the EMA smoothing factor to [`ema_alpha`]`(n)`.
    pub fn set_alpha_samples(&mut self, n: u32) {
        self.alpha = ema_alpha(n);
    }

    /// Holds the price at a fixed value regardless of marks (`None` resumes
    /// the EMA from the pinned value).
    pub fn pin_price(&mut self, price: Option<f64>) {
        self.pinned_price = price;
        if let Some(p) = price {
            self.price = p;
        }
    }

    pub fn marks_this_tick(&self) -> u32 {
        self.marks_this_tick
    }

    /// Discards every queued packet (link failure).
    pub fn flush(&mut self) -> usize {
        let n = self.queue.len();
        self.counters.flushed += n as u64;
        self.queue.clear();
        self.queued_bytes = 0;
        self.codel = CodelState::default();
        n
    }

    pub fn len(&self) -> usize {
        self.queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queue.is_empty()
    }

    pub fn queued_bytes(&self) -> u64 {
        self.queued_bytes
    }

    pub fn max_bytes(&self) -> u64 {
        self.max_bytes
    }

    pub fn codel(&self) -> &CodelState {
        &self.codel
    }

    pub fn counters(&self) -> &LinkCounters {
        &self.counters
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packet::{Packet, PacketKind};
    use crate::topology::NodeId;

    fn data(seq: u64) -> Packet {
        Packet::data(0, NodeId(0), NodeId(1), seq, SimTime::ZERO)
    }

    #[test]
    fn tail_drop_at_byte_limit() {
        let mut l = LinkState::new(3000, CodelParams::default());
        assert_eq!(l.enqueue(data(0), SimTime::ZERO), EnqueueOutcome::Queued);
        assert_eq!(l.enqueue(data(1), SimTime::ZERO), EnqueueOutcome::Queued);
        assert_eq!(l.enqueue(data(2), SimTime::ZERO), EnqueueOutcome::Dropped);
        assert_eq!(l.counters().tail_drops, 1);
        assert_eq!(l.queued_bytes(), 3000);
    }

    #[test]
    fn same_time_packets_leave_in_order() {
        let mut l = LinkState::new(1 << 20, CodelParams::default());
        for s in 0..5 {
            l.enqueue(data(s), SimTime::ZERO);
        }
        let order: Vec<u64> = (0..5).map(|_| l.dequeue(SimTime::ZERO).unwrap().seq).collect();
        assert_eq!(order, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn below_target_never_marks() {
        let mut l = LinkState::new(1 << 20, CodelParams::default());
        let mut now = SimTime::ZERO;
        for s in 0..10_000 {
            l.enqueue(data(s), now);
            l.enqueue(data(s), now);
            now += SimTime::from_millis(1);
            let p = l.dequeue(now).unwrap();
            assert!(!p.ecn_mark);
            let p = l.dequeue(now).unwrap();
            assert!(!p.ecn_mark);
        }
        assert_eq!(l.counters().marks, 0);
    }

    #[test]
    fn non_ecn_packet_is_dropped_instead_of_marked() {
        let mut l = LinkState::new(1 << 24, CodelParams::default());
        // Standing queue of 40 ms for longer than an interval.
        let mut now = SimTime::ZERO;
        let mut seq = 0;
        let mut saw_drop = false;
        for _ in 0..400 {
            for _ in 0..3 {
                let mut p = data(seq);
                p.ecn_capable = false;
                l.enqueue(p, now);
                seq += 1;
            }
            now += SimTime::from_millis(1);
            for _ in 0..2 {
                if let Some(p) = l.dequeue(now) {
                    assert!(!p.ecn_mark);
                }
            }
            saw_drop |= l.counters().aqm_drops > 0;
        }
        assert!(saw_drop);
        assert_eq!(l.counters().marks, 0);
    }

    #[test]
    fn probes_are_never_marked() {
        let mut l = LinkState::new(1 << 24, CodelParams::default());
        let mut now = SimTime::ZERO;
        let mut seq = 0;
        for _ in 0..1000 {
            for _ in 0..3 {
                l.enqueue(data(seq), now);
                seq += 1;
            }
            let probe = Packet::probe_request(NodeId(0), NodeId(1), NodeId(1), now);
            l.enqueue(probe, now);
            now += SimTime::from_millis(1);
            for _ in 0..3 {
                if let Some(p) = l.dequeue(now) {
                    if p.kind == PacketKind::ProbeReq {
                        assert!(!p.ecn_mark);
                    }
                }
            }
        }
        assert!(l.counters().marks > 0);
        assert!(l.counters().probe_bytes_sent > 0);
    }

    #[test]
    fn alpha_value() {
        let l = LinkState::new(1000, CodelParams::default());
        assert!((l.alpha() - 2.0 / 5001.0).abs() < 1e-18);
        assert!((l.alpha() - 3.9992e-4).abs() < 1e-8);
    }

    #[test]
    fn price_decays_to_zero_without_marks() {
        let mut l = LinkState::new(1000, CodelParams::default());
        l.pin_price(Some(5.0));
        l.pin_price(None);
        let mut prev = l.price();
        for _ in 0..100_000 {
            let p = l.price_tick();
            assert!(p <= prev && p >= 0.0);
            prev = p;
        }
        assert!(prev < 5.0 * (1.0 - l.alpha()).powi(99_999));
        assert!(prev < 1e-10);
    }

    #[test]
    fn one_mark_per_tick_converges_to_one() {
        let mut l = LinkState::new(1000, CodelParams::default());
        for _ in 0..100_000 {
            l.signal();
            l.price_tick();
        }
        assert!((l.price() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conservation_holds() {
        let mut l = LinkState::new(30_000, CodelParams::default());
        let mut now = SimTime::ZERO;
        let mut attempts = 0u64;
        for s in 0..20_000 {
            attempts += 1;
            let mut p = data(s);
            p.ecn_capable = s % 3 != 0;
            l.enqueue(p, now);
            if s % 2 == 0 {
                now += SimTime::from_micros(700);
                l.dequeue(now);
            }
            let c = l.counters();
            assert_eq!(attempts, c.enqueued + c.tail_drops);
            assert_eq!(c.enqueued, c.dequeued + c.aqm_drops + l.len() as u64);
        }
    }
}
