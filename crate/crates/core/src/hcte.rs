//! Per-router HCTE forwarding state: split ratios over the admitted
//! nexthops, congestion-mark handling, path probing and the min/max price
//! split adjustment.

use crate::routing::MultipathFib;
use crate::swrr::{self, Weighted};
use crate::time::SimTime;
use crate::topology::NodeId;

/// Split ratios are held as integer shares of this total, so a transfer
/// between two entries conserves the sum exactly.
pub const RATIO_SCALE: u32 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HcteConfig {
    /// Fraction of the total split moved per adjustment.
    pub step: f64,
    pub probe_interval: SimTime,
    /// Minimum gap between two initial probe rounds for one destination.
    pub initial_probe_gap: SimTime,
    /// Probing stops after this long without DATA toward the destination.
    pub idle_timeout: SimTime,
    /// A round still missing replies after this long is closed with the
    /// last known prices.
    pub probe_timeout: SimTime,
}

impl Default for HcteConfig {
    fn default() -> Self {
        HcteConfig {
            step: 0.001,
            probe_interval: SimTime::from_millis(200),
            initial_probe_gap: SimTime::from_millis(10_000),
            idle_timeout: SimTime::from_millis(2_000),
            probe_timeout: SimTime::from_millis(400),
        }
    }
}

impl HcteConfig {
    pub fn step_units(&self) -> u32 {
        (self.step * RATIO_SCALE as f64).round() as u32
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitEntry {
    pub nexthop: NodeId,
    pub cost: f64,
    units: u32,
    /// Last probed path price; `None` until the first reply.
    pub last_price: Option<f64>,
    /// Scheduler credit.
    pub drr_deficit: i64,
}

impl SplitEntry {
    pub fn new(nexthop: NodeId, cost: f64, units: u32) -> Self {
        SplitEntry {
            nexthop,
            cost,
            units,
            last_price: None,
            drr_deficit: 0,
        }
    }

    pub fn ratio(&self) -> f64 {
        self.units as f64 / RATIO_SCALE as f64
    }

    pub fn units(&self) -> u32 {
        self.units
    }

    pub fn is_active(&self) -> bool {
        self.units > 0
    }
}

impl Weighted for SplitEntry {
    fn weight(&self) -> i64 {
        self.units as i64
    }

    fn credit(&mut self) -> &mut i64 {
        &mut self.drr_deficit
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PriceReport {
    pub nexthop: NodeId,
    pub price: f64,
}

/// A probe the router wants sent: a request from `origin` toward `dst`
/// through `nexthop`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ProbeRequest {
    pub origin: NodeId,
    pub dst: NodeId,
    pub nexthop: NodeId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRound {
    pub started: SimTime,
    pub awaiting: Vec<NodeId>,
    pub reports: Vec<PriceReport>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DestState {
    pub dst: NodeId,
    pub entries: Vec<SplitEntry>,
    pub probing_active: bool,
    pub last_initial_probe: Option<SimTime>,
    pub last_traffic: SimTime,
    pub round: Option<ProbeRound>,
    /// The next periodic round also probes inactive nexthops.
    pub initial_pending: bool,
}

impl DestState {
    fn from_fib(fib: &MultipathFib, router: NodeId, dst: NodeId, now: SimTime) -> Option<Self> {
        let cands = fib.nexthops(router, dst);
        if cands.is_empty() {
            return None;
        }
        let entries = cands
            .iter()
            .enumerate()
            .map(|(i, c)| SplitEntry::new(c.nexthop, c.cost, if i == 0 { RATIO_SCALE } else { 0 }))
            .collect();
        Some(DestState {
            dst,
            entries,
            probing_active: false,
            last_initial_probe: None,
            last_traffic: now,
            round: None,
            initial_pending: false,
        })
    }

    pub fn ratio(&self, nexthop: NodeId) -> f64 {
        self.entries
            .iter()
            .find(|e| e.nexthop == nexthop)
            .map_or(0.0, SplitEntry::ratio)
    }

    pub fn active_count(&self) -> usize {
        self.entries.iter().filter(|e| e.is_active()).count()
    }

    /// Entry with the largest ratio; the earliest (cheapest) wins ties.
    pub fn primary(&self) -> Option<&SplitEntry> {
        self.entries
            .iter()
            .fold(None, |best: Option<&SplitEntry>, e| match best {
                Some(b) if b.units >= e.units => Some(b),
                _ => Some(e),
            })
    }

    fn start_round(&mut self, router: NodeId, targets: Vec<NodeId>, now: SimTime) -> Vec<ProbeRequest> {
        let probes = targets
            .iter()
            .map(|&nexthop| ProbeRequest {
                origin: router,
                dst: self.dst,
                nexthop,
            })
            .collect();
        self.round = Some(ProbeRound {
            started: now,
            awaiting: targets,
            reports: Vec::new(),
        });
        probes
    }

    /// Closes the current round and adjusts the split. Nexthops that did not
    /// answer contribute their last known price (0 if never probed).
    fn finish_round(&mut self, step_units: u32) -> Option<Adjustment> {
        let round = self.round.take()?;
        let mut reports = round.reports;
        for nh in round.awaiting {
            if let Some(e) = self.entries.iter().find(|e| e.nexthop == nh) {
                reports.push(PriceReport {
                    nexthop: nh,
                    price: e.last_price.unwrap_or(0.0),
                });
            }
        }
        adjust_split(&mut self.entries, &reports, step_units)
    }
}

/// Outcome of one split adjustment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Adjustment {
    pub from: NodeId,
    pub to: NodeId,
    pub units: u32,
}

/// Sorts the reports by (price, routing cost, nexthop index) and moves up
/// to `step_units` of split from the most expensive active nexthop to the
/// cheapest one. Reports for unknown nexthops are ignored. Returns `None`
/// if nothing moved.
pub fn adjust_split(
    entries: &mut [SplitEntry],
    reports: &[PriceReport],
    step_units: u32,
) -> Option<Adjustment> {
    let mut ranked: Vec<(f64, f64, NodeId, usize)> = reports
        .iter()
        .filter_map(|r| {
            let i = entries.iter().position(|e| e.nexthop == r.nexthop)?;
            Some((r.price, entries[i].cost, r.nexthop, i))
        })
        .collect();
    ranked.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(a.1.total_cmp(&b.1))
            .then(a.2.cmp(&b.2))
    });
    let &(_, _, _, min) = ranked.first()?;
    let &(_, _, _, max) = ranked.iter().rev().find(|r| entries[r.3].units > 0)?;
    if min == max {
        return None;
    }
    let moved = step_units.min(entries[max].units);
    if moved == 0 {
        return None;
    }
    entries[max].units -= moved;
    entries[min].units += moved;
    Some(Adjustment {
        from: entries[max].nexthop,
        to: entries[min].nexthop,
        units: moved,
    })
}

/// Counters kept by the engine.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct HcteStats {
    pub marks_handled: u64,
    pub marks_passed: u64,
    pub initial_rounds: u64,
    pub periodic_rounds: u64,
    pub probes_requested: u64,
    pub replies: u64,
    pub stale_replies: u64,
    pub round_timeouts: u64,
    pub adjustments: u64,
}

/// One row of a split-ratio snapshot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRow {
    pub router: NodeId,
    pub dst: NodeId,
    pub nexthop: NodeId,
    pub ratio: f64,
}

/// HCTE state of every router, indexed by (router, destination).
#[derive(Debug, Clone)]
pub struct HcteEngine {
    cfg: HcteConfig,
    n: usize,
    states: Vec<Option<DestState>>,
    stats: HcteStats,
}

impl HcteEngine {
    pub fn new(cfg: HcteConfig, node_count: usize) -> Self {
        HcteEngine {
            cfg,
            n: node_count,
            states: vec![None; node_count * node_count],
            stats: HcteStats::default(),
        }
    }

    pub fn config(&self) -> &HcteConfig {
        &self.cfg
    }

    pub fn stats(&self) -> &HcteStats {
        &self.stats
    }

    fn idx(&self, router: NodeId, dst: NodeId) -> usize {
        router.index() * self.n + dst.index()
    }

    pub fn state(&self, router: NodeId, dst: NodeId) -> Option<&DestState> {
        self.states[self.idx(router, dst)].as_ref()
    }

    /// Current split ratio of `nexthop` at `router` for `dst` (0 if the
    /// router holds no state or the nexthop is not in it).
    pub fn ratio(&self, router: NodeId, dst: NodeId, nexthop: NodeId) -> f64 {
        self.state(router, dst).map_or(0.0, |s| s.ratio(nexthop))
    }

    fn ensure(&mut self, fib: &MultipathFib, router: NodeId, dst: NodeId, now: SimTime) -> Option<&mut DestState> {
        let i = self.idx(router, dst);
        if self.states[i].is_none() {
            self.states[i] = DestState::from_fib(fib, router, dst, now);
        }
        self.states[i].as_mut()
    }

    /// Picks the nexthop for a DATA packet. `None` if no nexthop is
    /// admitted.
    pub fn forward(&mut self, fib: &MultipathFib, router: NodeId, dst: NodeId, now: SimTime) -> Option<NodeId> {
        let st = self.ensure(fib, router, dst, now)?;
        st.last_traffic = now;
        let i = swrr::pick(&mut st.entries)?;
        Some(st.entries[i].nexthop)
    }

    /// The nexthop probes follow: the largest split ratio, or the cheapest
    /// admitted nexthop if the router has no state for `dst`.
    pub fn primary_nexthop(&self, fib: &MultipathFib, router: NodeId, dst: NodeId) -> Option<NodeId> {
        match self.state(router, dst) {
            Some(st) => st.primary().map(|e| e.nexthop),
            None => fib.nexthops(router, dst).first().map(|c| c.nexthop),
        }
    }

    /// Reacts to an unhandled congestion mark on an acknowledgment passing
    /// `router` for traffic toward `data_dst`. Returns whether the router
    /// takes the mark (sets the handled bit) and any probes to send.
    pub fn on_marked_ack(
        &mut self,
        fib: &MultipathFib,
        router: NodeId,
        data_dst: NodeId,
        now: SimTime,
    ) -> (bool, Vec<ProbeRequest>) {
        if fib.nexthops(router, data_dst).len() < 2 {
            self.stats.marks_passed += 1;
            return (false, Vec::new());
        }
        self.stats.marks_handled += 1;
        (true, self.send_initial_probe(fib, router, data_dst, now))
    }

    /// Starts an initial probe round over every admitted nexthop, at most
    /// once per `initial_probe_gap`. If a round is already outstanding the
    /// next periodic round is widened instead.
    pub fn send_initial_probe(
        &mut self,
        fib: &MultipathFib,
        router: NodeId,
        dst: NodeId,
        now: SimTime,
    ) -> Vec<ProbeRequest> {
        let gap = self.cfg.initial_probe_gap;
        let Some(st) = self.ensure(fib, router, dst, now) else {
            return Vec::new();
        };
        if st.last_initial_probe.is_some_and(|t| now < t + gap) {
            return Vec::new();
        }
        st.last_initial_probe = Some(now);
        st.probing_active = true;
        if st.round.is_some() {
            st.initial_pending = true;
            return Vec::new();
        }
        let targets: Vec<NodeId> = st.entries.iter().map(|e| e.nexthop).collect();
        let probes = st.start_round(router, targets, now);
        self.stats.initial_rounds += 1;
        self.stats.probes_requested += probes.len() as u64;
        probes
    }

    /// Records a probe reply at its origin. The round's adjustment runs as
    /// soon as every probed nexthop has answered.
    pub fn on_probe_reply(
        &mut self,
        fib: &MultipathFib,
        router: NodeId,
        dst: NodeId,
        nexthop: NodeId,
        price: f64,
    ) -> Option<Adjustment> {
        let step = self.cfg.step_units();
        let i = self.idx(router, dst);
        let admitted = fib.is_admitted(router, dst, nexthop);
        let Some(st) = self.states[i].as_mut() else {
            self.stats.stale_replies += 1;
            return None;
        };
        let Some(round) = st.round.as_mut() else {
            self.stats.stale_replies += 1;
            return None;
        };
        let Some(pos) = round.awaiting.iter().position(|&n| n == nexthop) else {
            self.stats.stale_replies += 1;
            return None;
        };
        if !admitted {
            self.stats.stale_replies += 1;
            return None;
        }
        round.awaiting.swap_remove(pos);
        round.reports.push(PriceReport { nexthop, price });
        if let Some(e) = st.entries.iter_mut().find(|e| e.nexthop == nexthop) {
            e.last_price = Some(price);
        }
        self.stats.replies += 1;
        if !st.round.as_ref().is_some_and(|r| r.awaiting.is_empty()) {
            return None;
        }
        let adj = st.finish_round(step);
        if adj.is_some() {
            self.stats.adjustments += 1;
        }
        adj
    }

    /// One probe-interval tick over every probing destination state, in
    /// (router, destination) order.
    pub fn periodic_tick(&mut self, now: SimTime) -> Vec<ProbeRequest> {
        let cfg = self.cfg;
        let step = cfg.step_units();
        let mut out = Vec::new();
        for i in 0..self.states.len() {
            let Some(st) = self.states[i].as_mut() else {
                continue;
            };
            if !st.probing_active {
                continue;
            }
            if now.saturating_sub(st.last_traffic) >= cfg.idle_timeout {
                st.probing_active = false;
                st.round = None;
                st.initial_pending = false;
                continue;
            }
            if let Some(round) = &st.round {
                if now.saturating_sub(round.started) >= cfg.probe_timeout {
                    self.stats.round_timeouts += 1;
                    if st.finish_round(step).is_some() {
                        self.stats.adjustments += 1;
                    }
                }
                continue;
            }
            let router = NodeId((i / self.n) as u32);
            let targets: Vec<NodeId> = if st.initial_pending {
                st.initial_pending = false;
                st.entries.iter().map(|e| e.nexthop).collect()
            } else if st.active_count() >= 2 {
                st.entries.iter().filter(|e| e.is_active()).map(|e| e.nexthop).collect()
            } else {
                continue;
            };
            let probes = st.start_round(router, targets, now);
            self.stats.periodic_rounds += 1;
            self.stats.probes_requested += probes.len() as u64;
            out.extend(probes);
        }
        out
    }

    /// Reconciles split state with a recomputed FIB. Entries whose nexthop
    /// disappeared hand their share to the remaining entries in proportion
    /// to their ratios (or to the cheapest entry if none is active), and any
    /// outstanding round is abandoned.
    pub fn on_fib_change(&mut self, fib: &MultipathFib, changed: &[(NodeId, NodeId)]) {
        for &(router, dst) in changed {
            let i = self.idx(router, dst);
            let Some(st) = self.states[i].as_mut() else {
                continue;
            };
            let cands = fib.nexthops(router, dst);
            if cands.is_empty() {
                self.states[i] = None;
                continue;
            }
            let mut entries: Vec<SplitEntry> = cands
                .iter()
                .map(|c| match st.entries.iter().find(|e| e.nexthop == c.nexthop) {
                    Some(old) => SplitEntry {
                        cost: c.cost,
                        ..old.clone()
                    },
                    None => SplitEntry::new(c.nexthop, c.cost, 0),
                })
                .collect();
            let kept: u64 = entries.iter().map(|e| e.units as u64).sum();
            let freed = RATIO_SCALE as u64 - kept;
            if freed > 0 {
                if kept == 0 {
                    entries[0].units = RATIO_SCALE;
                } else {
                    let mut given = 0u64;
                    for e in entries.iter_mut() {
                        let share = freed * e.units as u64 / kept;
                        e.units += share as u32;
                        given += share;
                    }
                    let top = entries
                        .iter()
                        .enumerate()
                        .max_by(|a, b| a.1.units.cmp(&b.1.units).then(b.0.cmp(&a.0)))
                        .map(|(k, _)| k)
                        .unwrap_or(0);
                    entries[top].units += (freed - given) as u32;
                }
            }
            st.entries = entries;
            st.round = None;
        }
    }

    /// All split entries, ordered by (router, destination, cost).
    pub fn snapshot(&self) -> Vec<SplitRow> {
        let mut rows = Vec::new();
        for (i, st) in self.states.iter().enumerate() {
            let Some(st) = st else { continue };
            let router = NodeId((i / self.n) as u32);
            for e in &st.entries {
                rows.push(SplitRow {
                    router,
                    dst: st.dst,
                    nexthop: e.nexthop,
                    ratio: e.ratio(),
                });
            }
        }
        rows
    }

    /// Overwrites the split at `router` for `dst`; ratios must sum to 1 and
    /// name admitted nexthops only. Intended for experiments and tests.
    pub fn set_split(
        &mut self,
        fib: &MultipathFib,
        router: NodeId,
        dst: NodeId,
        ratios: &[(NodeId, f64)],
        now: SimTime,
    ) -> Result<(), String> {
        let st = self
            .ensure(fib, router, dst, now)
            .ok_or_else(|| "no admitted nexthop".to_string())?;
        let mut units: Vec<u32> = vec![0; st.entries.len()];
        for &(nh, r) in ratios {
            let k = st
                .entries
                .iter()
                .position(|e| e.nexthop == nh)
                .ok_or_else(|| format!("nexthop {} not admitted", nh.0))?;
            units[k] = (r * RATIO_SCALE as f64).round() as u32;
        }
        let sum: u64 = units.iter().map(|&u| u as u64).sum();
        if sum != RATIO_SCALE as u64 {
            return Err(format!("ratios sum to {} of {}", sum, RATIO_SCALE));
        }
        for (e, u) in st.entries.iter_mut().zip(units) {
            e.units = u;
        }
        Ok(())
    }

    /// Marks (router, dst) as carrying traffic now without forwarding a
    /// packet.
    pub fn touch(&mut self, fib: &MultipathFib, router: NodeId, dst: NodeId, now: SimTime) {
        if let Some(st) = self.ensure(fib, router, dst, now) {
            st.last_traffic = now;
        }
    }
}
