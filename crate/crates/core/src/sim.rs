//! The discrete-event simulator: links, flows and the selected forwarding
//! scheme driven by one event queue.

use std::collections::BTreeMap;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::baselines::{invcap_forward, sp_forward, EcmpState, SchemeId};
use crate::event::EventQueue;
use crate::hcte::{HcteConfig, HcteEngine, ProbeRequest};
use crate::link::{CodelParams, EnqueueOutcome, LinkState, PRICE_EMA_SAMPLES};
use crate::metrics::{FlowSample, SimCounters, SplitSample, TimeSeries, WindowStats};
use crate::packet::{Packet, PacketKind};
use crate::routing::{Metric, RoutingState};
use crate::time::{transmission_time, SimTime};
use crate::topology::{LinkId, NodeId, Topology};
use crate::transport::{Demand, FlowApp, Receiver, TransportConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub scheme: SchemeId,
    /// Metric for the delay-based schemes (SP, ECMP, HCTE).
    pub metric: Metric,
    pub codel: CodelParams,
    /// Queue capacity expressed as seconds of transmission at line rate.
    pub buffer_time: f64,
    pub price_samples: u32,
    pub price_tick: SimTime,
    pub hcte: HcteConfig,
    pub transport: TransportConfig,
    pub seed: u64,
    pub sample_interval: SimTime,
    /// Flow start times are spread uniformly over this span.
    pub start_jitter: SimTime,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            scheme: SchemeId::Hcte,
            metric: Metric::Delay,
            codel: CodelParams::default(),
            buffer_time: 0.25,
            price_samples: PRICE_EMA_SAMPLES,
            price_tick: SimTime::from_millis(1),
            hcte: HcteConfig::default(),
            transport: TransportConfig::default(),
            seed: 1,
            sample_interval: SimTime::from_millis(1000),
            start_jitter: SimTime::from_millis(100),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("node index {0} out of range")]
    UnknownNode(u32),
    #[error("no link between nodes {0} and {1}")]
    UnknownLink(u32, u32),
    #[error("flow {0} does not exist")]
    UnknownFlow(u32),
    #[error("flow source and destination are both node {0}")]
    SelfFlow(u32),
    #[error("event time {0} lies before the current time {1}")]
    InThePast(SimTime, SimTime),
}

#[derive(Debug, Clone, Copy)]
enum Event {
    Arrival { link: u32, slot: u32 },
    TxDone { link: u32 },
    PriceTick,
    ProbeTick,
    Sample,
    FlowStart { flow: u32 },
    FlowTimer { flow: u32 },
    AppWake { flow: u32 },
    LinkChange { link: u32, up: bool },
    RateChange { idx: u32 },
}

pub struct Simulator {
    cfg: SimConfig,
    topo: Topology,
    routing: RoutingState,
    links: Vec<LinkState>,
    link_delay: Vec<SimTime>,
    busy: Vec<bool>,
    events: EventQueue<Event>,
    now: SimTime,
    initialized: bool,
    in_flight: Vec<Option<Packet>>,
    free_slots: Vec<u32>,
    flows: Vec<FlowApp>,
    receivers: Vec<Receiver>,
    timer_at: Vec<Option<SimTime>>,
    wake_at: Vec<Option<SimTime>>,
    rate_changes: Vec<(u32, Option<f64>)>,
    hcte: HcteEngine,
    ecmp: EcmpState,
    rng: ChaCha8Rng,
    counters: SimCounters,
    series: TimeSeries,
    last_sample_bytes: Vec<u64>,
    bin_rtt: Vec<(f64, u64)>,
    window_start: SimTime,
    window_bytes: Vec<u64>,
    window_rtt: (f64, u64),
    path_hist: Option<BTreeMap<Vec<NodeId>, u64>>,
    trace: Option<Box<dyn Write + Send>>,
    trace_error: Option<io::Error>,
}

impl Simulator {
    pub fn new(topo: Topology, cfg: SimConfig) -> Self {
        let metric = cfg.scheme.routing_metric(cfg.metric);
        let routing = RoutingState::downward(&topo, metric);
        let links = topo
            .links()
            .iter()
            .map(|l| {
                let mut s = LinkState::with_buffer_time(l.capacity, cfg.buffer_time, cfg.codel);
                s.set_alpha_samples(cfg.price_samples);
                s
            })
            .collect();
        let link_delay = topo.links().iter().map(|l| SimTime::from_secs_f64(l.delay)).collect();
        let n = topo.node_count();
        let m = topo.links().len();
        Simulator {
            hcte: HcteEngine::new(cfg.hcte, n),
            ecmp: EcmpState::new(n),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg,
            topo,
            routing,
            links,
            link_delay,
            busy: vec![false; m],
            events: EventQueue::new(),
            now: SimTime::ZERO,
            initialized: false,
            in_flight: Vec::new(),
            free_slots: Vec::new(),
            flows: Vec::new(),
            receivers: Vec::new(),
            timer_at: Vec::new(),
            wake_at: Vec::new(),
            rate_changes: Vec::new(),
            counters: SimCounters::default(),
            series: TimeSeries::default(),
            last_sample_bytes: Vec::new(),
            bin_rtt: Vec::new(),
            window_start: SimTime::ZERO,
            window_bytes: Vec::new(),
            window_rtt: (0.0, 0),
            path_hist: None,
            trace: None,
            trace_error: None,
        }
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn topology(&self) -> &Topology {
        &self.topo
    }

    pub fn routing(&self) -> &RoutingState {
        &self.routing
    }

    pub fn hcte(&self) -> &HcteEngine {
        &self.hcte
    }

    pub fn link(&self, id: LinkId) -> &LinkState {
        &self.links[id.index()]
    }

    pub fn flows(&self) -> &[FlowApp] {
        &self.flows
    }

    pub fn counters(&self) -> &SimCounters {
        &self.counters
    }

    pub fn series(&self) -> &TimeSeries {
        &self.series
    }

    fn node_ok(&self, n: NodeId) -> Result<(), SimError> {
        if n.index() < self.topo.node_count() {
            Ok(())
        } else {
            Err(SimError::UnknownNode(n.0))
        }
    }

    fn link_id(&self, src: NodeId, dst: NodeId) -> Result<LinkId, SimError> {
        self.topo
            .link_between(src, dst)
            .ok_or(SimError::UnknownLink(src.0, dst.0))
    }

    fn not_past(&self, at: SimTime) -> Result<(), SimError> {
        if at < self.now {
            Err(SimError::InThePast(at, self.now))
        } else {
            Ok(())
        }
    }

    /// Adds a flow starting at `start` plus a random offset within the
    /// configured jitter. Returns its id.
    pub fn add_flow(
        &mut self,
        src: NodeId,
        dst: NodeId,
        demand: Demand,
        start: SimTime,
    ) -> Result<u32, SimError> {
        self.node_ok(src)?;
        self.node_ok(dst)?;
        if src == dst {
            return Err(SimError::SelfFlow(src.0));
        }
        self.not_past(start)?;
        let jitter = match self.cfg.start_jitter.as_nanos() {
            0 => 0,
            j => self.rng.gen_range(0..j),
        };
        let start = start + SimTime(jitter);
        let id = self.flows.len() as u32;
        self.flows
            .push(FlowApp::new(id, src, dst, demand, start, self.cfg.transport));
        self.receivers.push(Receiver::new());
        self.timer_at.push(None);
        self.wake_at.push(None);
        self.last_sample_bytes.push(0);
        self.bin_rtt.push((0.0, 0));
        self.window_bytes.push(0);
        self.events.push(start, Event::FlowStart { flow: id });
        Ok(id)
    }

    /// Sets the application rate limit of a flow from `at` on (`None` =
    /// backlogged).
    pub fn set_flow_rate(&mut self, at: SimTime, flow: u32, rate: Option<f64>) -> Result<(), SimError> {
        if flow as usize >= self.flows.len() {
            return Err(SimError::UnknownFlow(flow));
        }
        self.not_past(at)?;
        let idx = self.rate_changes.len() as u32;
        self.rate_changes.push((flow, rate));
        self.events.push(at, Event::RateChange { idx });
        Ok(())
    }

    /// Fails or restores the physical link between `src` and `dst` at `at`.
    pub fn schedule_link_state(&mut self, at: SimTime, src: NodeId, dst: NodeId, up: bool) -> Result<(), SimError> {
        let id = self.link_id(src, dst)?;
        self.not_past(at)?;
        self.events.push(at, Event::LinkChange { link: id.0, up });
        Ok(())
    }

    /// Holds the price of the directed link `src -> dst` fixed (`None`
    /// releases it).
    pub fn pin_price(&mut self, src: NodeId, dst: NodeId, price: Option<f64>) -> Result<(), SimError> {
        let id = self.link_id(src, dst)?;
        self.links[id.index()].pin_price(price);
        Ok(())
    }

    /// Runs an initial probe round at `router` for `dst` now, as a marked
    /// acknowledgment would.
    pub fn force_initial_probe(&mut self, router: NodeId, dst: NodeId) -> Result<(), SimError> {
        self.node_ok(router)?;
        self.node_ok(dst)?;
        let reqs = self
            .hcte
            .send_initial_probe(self.routing.fib(), router, dst, self.now);
        self.send_probes(&reqs);
        Ok(())
    }

    /// Mutable access to the HCTE engine, e.g. to preset split ratios.
    pub fn hcte_mut(&mut self) -> (&mut HcteEngine, &RoutingState) {
        (&mut self.hcte, &self.routing)
    }

    /// Records the node sequence of every delivered DATA packet.
    pub fn record_paths(&mut self, on: bool) {
        self.path_hist = on.then(BTreeMap::new);
    }

    /// Delivered DATA paths and their packet counts since recording started
    /// or was last cleared.
    pub fn path_histogram(&self) -> Option<&BTreeMap<Vec<NodeId>, u64>> {
        self.path_hist.as_ref()
    }

    pub fn clear_path_histogram(&mut self) {
        if let Some(h) = &mut self.path_hist {
            h.clear();
        }
    }

    /// Writes one line per packet event to `w`.
    pub fn set_trace(&mut self, mut w: Box<dyn Write + Send>) {
        if let Err(e) = writeln!(w, "time_s,node,link,kind,flow,seq,ecn_mark,handled,event") {
            self.trace_error = Some(e);
        }
        self.trace = Some(w);
    }

    /// Flushes the trace writer and reports the first write error, if any.
    pub fn finish_trace(&mut self) -> io::Result<()> {
        if let Some(e) = self.trace_error.take() {
            return Err(e);
        }
        match &mut self.trace {
            Some(w) => w.flush(),
            None => Ok(()),
        }
    }

    /// Starts a measurement window at the current time.
    pub fn begin_window(&mut self) {
        self.window_start = self.now;
        for (b, f) in self.window_bytes.iter_mut().zip(&self.flows) {
            *b = f.bytes_acked;
        }
        self.window_rtt = (0.0, 0);
    }

    /// Goodput and RTT since [`Simulator::begin_window`].
    pub fn window(&self) -> WindowStats {
        WindowStats {
            start: self.window_start.as_secs_f64(),
            end: self.now.as_secs_f64(),
            flow_bytes: self
                .flows
                .iter()
                .zip(&self.window_bytes)
                .map(|(f, &b)| f.bytes_acked - b)
                .collect(),
            rtt_sum: self.window_rtt.0,
            rtt_count: self.window_rtt.1,
        }
    }

    /// Processes every event up to and including `until`, then sets the
    /// clock to `until`.
    pub fn run(&mut self, until: SimTime) {
        self.init();
        while let Some(t) = self.events.peek_time() {
            if t > until {
                break;
            }
            self.step();
        }
        if until > self.now {
            self.now = until;
        }
    }

    /// Processes the next event and returns its time.
    pub fn step(&mut self) -> Option<SimTime> {
        self.init();
        let (t, ev) = self.events.pop()?;
        self.now = t;
        self.counters.events += 1;
        self.handle(ev);
        Some(t)
    }

    fn init(&mut self) {
        if !self.initialized {
            self.initialized = true;
            self.events.push(self.now + self.cfg.price_tick, Event::PriceTick);
            self.events.push(self.now + self.cfg.sample_interval, Event::Sample);
            if self.cfg.scheme == SchemeId::Hcte {
                self.events
                    .push(self.now + self.cfg.hcte.probe_interval, Event::ProbeTick);
            }
        }
    }

    fn handle(&mut self, ev: Event) {
        match ev {
            Event::Arrival { link, slot } => self.on_arrival(link, slot),
            Event::TxDone { link } => {
                self.busy[link as usize] = false;
                if self.topo.links()[link as usize].up {
                    self.start_tx(link as usize);
                }
            }
            Event::PriceTick => {
                for l in &mut self.links {
                    l.price_tick();
                }
                self.events.push(self.now + self.cfg.price_tick, Event::PriceTick);
            }
            Event::ProbeTick => {
                let reqs = self.hcte.periodic_tick(self.now);
                self.send_probes(&reqs);
                self.events
                    .push(self.now + self.cfg.hcte.probe_interval, Event::ProbeTick);
            }
            Event::Sample => {
                self.sample();
                self.events
                    .push(self.now + self.cfg.sample_interval, Event::Sample);
            }
            Event::FlowStart { flow } => self.pump(flow as usize),
            Event::FlowTimer { flow } => {
                let f = flow as usize;
                if self.timer_at[f] != Some(self.now) {
                    return;
                }
                self.timer_at[f] = None;
                self.flows[f].on_timer(self.now);
                self.pump(f);
            }
            Event::AppWake { flow } => {
                let f = flow as usize;
                if self.wake_at[f] != Some(self.now) {
                    return;
                }
                self.wake_at[f] = None;
                self.pump(f);
            }
            Event::LinkChange { link, up } => self.change_link(link as usize, up),
            Event::RateChange { idx } => {
                let (flow, rate) = self.rate_changes[idx as usize];
                self.flows[flow as usize].set_rate(rate, self.now);
                self.pump(flow as usize);
            }
        }
    }

    fn change_link(&mut self, link: usize, up: bool) {
        let (src, dst) = {
            let l = &self.topo.links()[link];
            (l.src, l.dst)
        };
        let changed = match self.topo.set_link_state(src, dst, up) {
            Ok(c) => c,
            Err(_) => return,
        };
        if !changed {
            return;
        }
        if !up {
            self.links[link].flush();
            if let Some(rev) = self.topo.link_between(dst, src) {
                self.links[rev.index()].flush();
            }
        }
        let diff = self.routing.on_topology_change(&self.topo);
        self.hcte.on_fib_change(self.routing.fib(), &diff);
        self.ecmp.reset();
    }

    fn sample(&mut self) {
        let t = self.now.as_secs_f64();
        let dt = self.cfg.sample_interval.as_secs_f64();
        for (i, f) in self.flows.iter().enumerate() {
            let bytes = f.bytes_acked - self.last_sample_bytes[i];
            self.last_sample_bytes[i] = f.bytes_acked;
            let (sum, n) = std::mem::take(&mut self.bin_rtt[i]);
            self.series.flows.push(FlowSample {
                t,
                flow: i as u32,
                throughput_bps: bytes as f64 * 8.0 / dt,
                rtt_mean: (n > 0).then(|| sum / n as f64),
            });
        }
        if self.cfg.scheme == SchemeId::Hcte {
            for r in self.hcte.snapshot() {
                self.series.splits.push(SplitSample {
                    t,
                    router: r.router,
                    dst: r.dst,
                    nexthop: r.nexthop,
                    ratio: r.ratio,
                });
            }
        }
    }

    fn alloc_slot(&mut self, pkt: Packet) -> u32 {
        match self.free_slots.pop() {
            Some(s) => {
                self.in_flight[s as usize] = Some(pkt);
                s
            }
            None => {
                self.in_flight.push(Some(pkt));
                (self.in_flight.len() - 1) as u32
            }
        }
    }

    fn on_arrival(&mut self, link: u32, slot: u32) {
        let mut pkt = self.in_flight[slot as usize].take().expect("live slot");
        self.free_slots.push(slot);
        let l = &self.topo.links()[link as usize];
        if !l.up {
            self.counters.drops_link_down += 1;
            return;
        }
        let node = l.dst;
        match pkt.kind {
            PacketKind::Data | PacketKind::ProbeReq => {
                if pkt.path.contains(&node) {
                    self.counters.loop_violations += 1;
                    return;
                }
                pkt.path.push(node);
            }
            PacketKind::Ack | PacketKind::ProbeReply => {
                pkt.cursor += 1;
                debug_assert_eq!(pkt.route_here(), node);
            }
        }
        self.at_node(node, pkt);
    }

    fn at_node(&mut self, node: NodeId, mut pkt: Packet) {
        match pkt.kind {
            PacketKind::Data => {
                if node == pkt.dst {
                    self.deliver_data(node, pkt);
                    return;
                }
                let fib = self.routing.fib();
                let nh = match self.cfg.scheme {
                    SchemeId::Sp => sp_forward(fib, node, pkt.dst),
                    SchemeId::InvCap => invcap_forward(fib, node, pkt.dst),
                    SchemeId::Ecmp => self.ecmp.forward(fib, node, pkt.dst),
                    SchemeId::Hcte => self.hcte.forward(fib, node, pkt.dst, self.now),
                };
                match nh {
                    Some(nh) => self.send_to(node, nh, pkt),
                    None => {
                        self.counters.drops_no_route += 1;
                        self.trace_event(node, None, &pkt, "drop");
                    }
                }
            }
            PacketKind::ProbeReq => {
                if node == pkt.dst {
                    self.route_onward(pkt.into_probe_reply());
                    return;
                }
                match self.hcte.primary_nexthop(self.routing.fib(), node, pkt.dst) {
                    Some(nh) => self.send_to(node, nh, pkt),
                    None => self.counters.probes_discarded += 1,
                }
            }
            PacketKind::Ack => {
                if self.cfg.scheme == SchemeId::Hcte
                    && pkt.ecn_mark
                    && !pkt.handled
                    && pkt.mark_pos.is_some_and(|k| pkt.cursor >= k)
                {
                    let (handled, reqs) =
                        self.hcte
                            .on_marked_ack(self.routing.fib(), node, pkt.src, self.now);
                    pkt.handled = handled;
                    self.send_probes(&reqs);
                }
                if node == pkt.dst {
                    self.deliver_ack(pkt);
                } else {
                    self.route_onward(pkt);
                }
            }
            PacketKind::ProbeReply => {
                if node == pkt.dst {
                    self.counters.probe_replies_delivered += 1;
                    self.hcte.on_probe_reply(
                        self.routing.fib(),
                        node,
                        pkt.src,
                        pkt.probe_nexthop,
                        pkt.price_acc,
                    );
                } else {
                    self.route_onward(pkt);
                }
            }
        }
    }

    fn route_onward(&mut self, pkt: Packet) {
        let here = pkt.route_here();
        let link = pkt.route_next().and_then(|next| self.topo.link_between(here, next));
        match link {
            Some(l) => self.enqueue(l.index(), pkt),
            None => {
                self.counters.drops_no_route += 1;
                self.trace_event(here, None, &pkt, "drop");
            }
        }
    }

    fn send_to(&mut self, node: NodeId, nexthop: NodeId, pkt: Packet) {
        match self.topo.link_between(node, nexthop) {
            Some(l) => self.enqueue(l.index(), pkt),
            None => self.counters.drops_no_route += 1,
        }
    }

    fn send_probes(&mut self, reqs: &[ProbeRequest]) {
        for r in reqs {
            let pkt = Packet::probe_request(r.origin, r.dst, r.nexthop, self.now);
            self.counters.probes_sent += 1;
            self.send_to(r.origin, r.nexthop, pkt);
        }
    }

    fn enqueue(&mut self, link: usize, mut pkt: Packet) {
        let node = self.topo.links()[link].src;
        if !self.topo.links()[link].up {
            self.counters.drops_link_down += 1;
            self.trace_event(node, Some(link), &pkt, "drop");
            return;
        }
        if pkt.kind == PacketKind::ProbeReq {
            pkt.price_acc += self.links[link].price();
        }
        if self.trace.is_some() {
            self.trace_event(node, Some(link), &pkt, "enqueue");
        }
        if self.links[link].enqueue(pkt, self.now) == EnqueueOutcome::Dropped {
            self.counters.drops_tail += 1;
        }
        if !self.busy[link] {
            self.start_tx(link);
        }
    }

    fn start_tx(&mut self, link: usize) {
        let marks_before = self.links[link].counters().marks;
        let Some(mut pkt) = self.links[link].dequeue(self.now) else {
            return;
        };
        if self.links[link].counters().marks > marks_before {
            pkt.mark_pos = Some(pkt.path.len() as u32 - 1);
        }
        let l = &self.topo.links()[link];
        let ser = transmission_time(pkt.size, l.capacity);
        let node = l.src;
        if self.trace.is_some() {
            self.trace_event(node, Some(link), &pkt, "tx");
        }
        self.busy[link] = true;
        let done = self.now + ser;
        self.events.push(done, Event::TxDone { link: link as u32 });
        let slot = self.alloc_slot(pkt);
        self.events.push(
            done + self.link_delay[link],
            Event::Arrival {
                link: link as u32,
                slot,
            },
        );
    }

    fn deliver_data(&mut self, node: NodeId, pkt: Packet) {
        self.counters.data_delivered += 1;
        if let Some(h) = &mut self.path_hist {
            match h.get_mut(&pkt.path) {
                Some(c) => *c += 1,
                None => {
                    h.insert(pkt.path.clone(), 1);
                }
            }
        }
        if self.trace.is_some() {
            self.trace_event(node, None, &pkt, "deliver");
        }
        let ack = self.receivers[pkt.flow as usize].echo_ecn(pkt);
        self.at_node(node, ack);
    }

    fn deliver_ack(&mut self, ack: Packet) {
        self.counters.acks_delivered += 1;
        let f = ack.flow as usize;
        let out = self.flows[f].on_ack(&ack, self.now);
        if let Some(rtt) = out.rtt_sample {
            self.bin_rtt[f].0 += rtt;
            self.bin_rtt[f].1 += 1;
            self.window_rtt.0 += rtt;
            self.window_rtt.1 += 1;
        }
        self.pump(f);
    }

    /// Lets a flow send what its window and application allow, then re-arms
    /// its timers.
    fn pump(&mut self, f: usize) {
        let pkts = self.flows[f].on_send_opportunity(self.now);
        let src = self.flows[f].src;
        for p in pkts {
            self.counters.data_sent += 1;
            self.at_node(src, p);
        }
        if let Some(d) = self.flows[f].next_timeout() {
            if self.timer_at[f].is_none_or(|t| d < t) {
                self.timer_at[f] = Some(d);
                self.events.push(d, Event::FlowTimer { flow: f as u32 });
            }
        }
        if let Some(w) = self.flows[f].next_app_wake(self.now) {
            if w > self.now && self.wake_at[f].is_none_or(|t| w < t) {
                self.wake_at[f] = Some(w);
                self.events.push(w, Event::AppWake { flow: f as u32 });
            }
        }
    }

    fn trace_event(&mut self, node: NodeId, link: Option<usize>, pkt: &Packet, what: &str) {
        let Some(w) = &mut self.trace else { return };
        let link = match link {
            Some(l) => {
                let l = &self.topo.links()[l];
                format!("{}->{}", self.topo.name(l.src), self.topo.name(l.dst))
            }
            None => String::new(),
        };
        let r = writeln!(
            w,
            "{:.9},{},{},{},{},{},{},{},{}",
            self.now.as_secs_f64(),
            self.topo.name(node),
            link,
            pkt.kind,
            pkt.flow,
            pkt.seq,
            pkt.ecn_mark as u8,
            pkt.handled as u8,
            what
        );
        if let Err(e) = r {
            if self.trace_error.is_none() {
                self.trace_error = Some(e);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::load_topology;

    fn line(cap: &str) -> Topology {
        load_topology(&format!("node A\nnode B\nbidi A B {cap} 5ms\n")).unwrap()
    }

    #[test]
    fn empty_scenario_just_advances_clock() {
        let mut sim = Simulator::new(line("100M"), SimConfig::default());
        sim.run(SimTime::from_millis(3000));
        assert_eq!(sim.now(), SimTime::from_millis(3000));
        assert_eq!(sim.counters().data_sent, 0);
        assert_eq!(sim.counters().probes_sent, 0);
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut sim = Simulator::new(line("100M"), SimConfig::default());
        assert_eq!(
            sim.add_flow(NodeId(0), NodeId(0), Demand::Infinite, SimTime::ZERO),
            Err(SimError::SelfFlow(0))
        );
        assert_eq!(
            sim.add_flow(NodeId(0), NodeId(7), Demand::Infinite, SimTime::ZERO),
            Err(SimError::UnknownNode(7))
        );
        assert!(sim.set_flow_rate(SimTime::ZERO, 3, None).is_err());
        assert!(sim
            .schedule_link_state(SimTime::ZERO, NodeId(0), NodeId(0), false)
            .is_err());
    }

    #[test]
    fn single_packet_latency_is_serialization_plus_propagation() {
        let mut cfg = SimConfig::default();
        cfg.start_jitter = SimTime::ZERO;
        let mut sim = Simulator::new(line("100M"), cfg);
        let f = sim
            .add_flow(NodeId(0), NodeId(1), Demand::Bytes(1460), SimTime::ZERO)
            .unwrap();
        sim.run(SimTime::from_millis(100));
        let done = sim.flows()[f as usize].completed_at().unwrap();
        // 120 us + 5 ms for the DATA packet, 3.2 us + 5 ms for the ACK.
        assert_eq!(done, SimTime::from_nanos(120_000 + 5_000_000 + 3_200 + 5_000_000));
    }

    #[test]
    fn link_down_drops_and_reroutes() {
        let t = load_topology(
            "node A\nnode B\nnode C\nbidi A B 100M 1ms\nbidi A C 100M 2ms\nbidi C B 100M 2ms\n",
        )
        .unwrap();
        let mut sim = Simulator::new(t, SimConfig::default());
        sim.record_paths(true);
        let (a, b) = (NodeId(0), NodeId(1));
        let f = sim.add_flow(a, b, Demand::Infinite, SimTime::ZERO).unwrap();
        sim.set_flow_rate(SimTime::ZERO, f, Some(1e6)).unwrap();
        sim.schedule_link_state(SimTime::from_millis(1000), a, b, false).unwrap();
        sim.run(SimTime::from_millis(1000));
        assert!(sim.path_histogram().unwrap().keys().all(|p| p.len() == 2));
        sim.clear_path_histogram();
        sim.run(SimTime::from_millis(3000));
        let h = sim.path_histogram().unwrap();
        assert!(!h.is_empty());
        assert!(h.keys().all(|p| p.len() == 3));
        assert_eq!(sim.counters().loop_violations, 0);
    }

    #[test]
    fn runs_are_deterministic() {
        let run = |seed| {
            let t = load_topology(
                "node A\nnode B\nnode C\nnode D\nbidi A B 20M 2ms\nbidi B D 20M 2ms\nbidi A C 50M 3ms\nbidi C D 50M 3ms\n",
            )
            .unwrap();
            let cfg = SimConfig {
                seed,
                ..SimConfig::default()
            };
            let mut sim = Simulator::new(t, cfg);
            for _ in 0..3 {
                sim.add_flow(NodeId(0), NodeId(3), Demand::Infinite, SimTime::ZERO)
                    .unwrap();
            }
            sim.run(SimTime::from_millis(5000));
            (sim.series().clone(), *sim.counters(), sim.routing().fib().clone())
        };
        let a = run(7);
        let b = run(7);
        assert_eq!(a, b);
        let c = run(8);
        assert_eq!(a.2, c.2);
        assert_ne!(a.0, c.0);
    }
}
