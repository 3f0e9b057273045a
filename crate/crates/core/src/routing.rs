//! Shortest-path distances, per-nexthop costs and loop-free multipath FIBs.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::fmt;

use crate::topology::{Link, NodeId, Topology};

/// Link metric used for shortest-path computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Metric {
    /// Propagation delay in seconds.
    Delay,
    /// One per link.
    Hop,
    /// Largest capacity in the topology divided by the link capacity.
    InvCap,
}

impl Metric {
    /// Integer units per metric unit. Path costs are summed exactly in these
    /// units so that equal-cost paths compare equal.
    pub fn scale(self) -> f64 {
        match self {
            Metric::Delay => 1e12,
            Metric::Hop => 1.0,
            Metric::InvCap => 1e9,
        }
    }

    /// Link weight in integer units of [`Metric::scale`].
    pub fn units(self, link: &Link, ref_capacity: f64) -> u64 {
        let w = match self {
            Metric::Delay => link.delay,
            Metric::Hop => 1.0,
            Metric::InvCap => ref_capacity / link.capacity,
        };
        ((w * self.scale()).round() as u64).max(1)
    }

    pub fn weight(self, link: &Link, ref_capacity: f64) -> f64 {
        self.units(link, ref_capacity) as f64 / self.scale()
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Metric::Delay => "delay",
            Metric::Hop => "hop",
            Metric::InvCap => "invcap",
        })
    }
}

impl std::str::FromStr for Metric {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "delay" => Ok(Metric::Delay),
            "hop" => Ok(Metric::Hop),
            "invcap" => Ok(Metric::InvCap),
            other => Err(format!("unknown metric `{other}`")),
        }
    }
}

/// All-pairs shortest distances over up-links for one metric.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceTable {
    n: usize,
    metric: Metric,
    ref_capacity: f64,
    dist: Vec<u64>,
}

const UNREACHABLE: u64 = u64::MAX;

impl DistanceTable {
    /// Distance from `node` to `dst`; infinite when unreachable.
    pub fn get(&self, node: NodeId, dst: NodeId) -> f64 {
        match self.units(node, dst) {
            UNREACHABLE => f64::INFINITY,
            u => u as f64 / self.metric.scale(),
        }
    }

    /// Distance in integer units of [`Metric::scale`]; `u64::MAX` when
    /// unreachable.
    pub fn units(&self, node: NodeId, dst: NodeId) -> u64 {
        self.dist[node.index() * self.n + dst.index()]
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn weight(&self, link: &Link) -> f64 {
        self.metric.weight(link, self.ref_capacity)
    }

    pub fn weight_units(&self, link: &Link) -> u64 {
        self.metric.units(link, self.ref_capacity)
    }
}

/// Runs Dijkstra toward every destination over the reversed up-link graph.
pub fn all_pairs_shortest(topo: &Topology, metric: Metric) -> DistanceTable {
    let n = topo.node_count();
    let ref_capacity = topo.max_capacity();
    let mut in_links: Vec<Vec<(NodeId, u64)>> = vec![Vec::new(); n];
    for link in topo.links().iter().filter(|l| l.up) {
        in_links[link.dst.index()].push((link.src, metric.units(link, ref_capacity)));
    }

    let mut dist = vec![UNREACHABLE; n * n];
    let mut heap = BinaryHeap::new();
    for dst in topo.nodes() {
        let mut d = vec![UNREACHABLE; n];
        d[dst.index()] = 0;
        heap.push(Reverse((0u64, dst)));
        while let Some(Reverse((du, u))) = heap.pop() {
            if du > d[u.index()] {
                continue;
            }
            for &(v, w) in &in_links[u.index()] {
                let cand = du + w;
                if cand < d[v.index()] {
                    d[v.index()] = cand;
                    heap.push(Reverse((cand, v)));
                }
            }
        }
        for node in 0..n {
            dist[node * n + dst.index()] = d[node];
        }
    }
    DistanceTable {
        n,
        metric,
        ref_capacity,
        dist,
    }
}

/// A neighbor together with the cost of reaching the destination through it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NexthopCandidate {
    pub nexthop: NodeId,
    /// Weight of the link to `nexthop` plus the nexthop's distance.
    pub cost: f64,
}

fn by_cost(a: &NexthopCandidate, b: &NexthopCandidate) -> Ordering {
    a.cost.total_cmp(&b.cost).then(a.nexthop.cmp(&b.nexthop))
}

/// One candidate per up-neighbor of `node` that can reach `dst`, sorted by
/// (cost, nexthop index).
pub fn nexthop_costs(
    topo: &Topology,
    dtable: &DistanceTable,
    node: NodeId,
    dst: NodeId,
) -> Vec<NexthopCandidate> {
    let mut out: Vec<NexthopCandidate> = topo
        .up_out_links(node)
        .filter_map(|(_, link)| {
            let rest = dtable.units(link.dst, dst);
            (rest != UNREACHABLE).then(|| NexthopCandidate {
                nexthop: link.dst,
                cost: (dtable.weight_units(link) + rest) as f64 / dtable.metric().scale(),
            })
        })
        .collect();
    out.sort_by(by_cost);
    out
}

/// Decides which neighbors may be installed as nexthops without risking
/// forwarding loops.
pub trait LoopFreePolicy: Send + Sync {
    fn name(&self) -> &'static str;
    fn admits(&self, dtable: &DistanceTable, node: NodeId, nbr: NodeId, dst: NodeId) -> bool;
}

/// Admits a neighbor only if it is strictly closer to the destination.
#[derive(Debug, Clone, Copy, Default)]
pub struct Downward;

impl LoopFreePolicy for Downward {
    fn name(&self) -> &'static str {
        "downward"
    }

    fn admits(&self, dtable: &DistanceTable, node: NodeId, nbr: NodeId, dst: NodeId) -> bool {
        dtable.units(nbr, dst) < dtable.units(node, dst)
    }
}

/// Per (node, destination) list of admitted nexthops, ordered by cost.
#[derive(Debug, Clone, PartialEq)]
pub struct MultipathFib {
    n: usize,
    entries: Vec<Vec<NexthopCandidate>>,
}

impl MultipathFib {
    pub fn nexthops(&self, node: NodeId, dst: NodeId) -> &[NexthopCandidate] {
        &self.entries[node.index() * self.n + dst.index()]
    }

    pub fn node_count(&self) -> usize {
        self.n
    }

    pub fn is_admitted(&self, node: NodeId, dst: NodeId, nexthop: NodeId) -> bool {
        self.nexthops(node, dst).iter().any(|c| c.nexthop == nexthop)
    }

    /// (node, dst) pairs whose admitted list differs between `self` and
    /// `other`, in (node, dst) order.
    pub fn diff(&self, other: &MultipathFib) -> Vec<(NodeId, NodeId)> {
        assert_eq!(self.n, other.n);
        let mut out = Vec::new();
        for node in 0..self.n {
            for dst in 0..self.n {
                let i = node * self.n + dst;
                if self.entries[i] != other.entries[i] {
                    out.push((NodeId(node as u32), NodeId(dst as u32)));
                }
            }
        }
        out
    }

    /// Checks that for every destination the graph of admitted arcs is
    /// acyclic (Kahn's algorithm). Returns the first offending destination.
    pub fn check_loop_free(&self) -> Result<(), NodeId> {
        for dst in 0..self.n {
            let dst = NodeId(dst as u32);
            let mut indeg = vec![0usize; self.n];
            for node in 0..self.n {
                for c in self.nexthops(NodeId(node as u32), dst) {
                    indeg[c.nexthop.index()] += 1;
                }
            }
            let mut stack: Vec<usize> = (0..self.n).filter(|&v| indeg[v] == 0).collect();
            let mut seen = 0;
            while let Some(v) = stack.pop() {
                seen += 1;
                for c in self.nexthops(NodeId(v as u32), dst) {
                    let w = c.nexthop.index();
                    indeg[w] -= 1;
                    if indeg[w] == 0 {
                        stack.push(w);
                    }
                }
            }
            if seen != self.n {
                return Err(dst);
            }
        }
        Ok(())
    }

    /// One line per (node, dst, nexthop, cost), with a header.
    pub fn dump(&self, topo: &Topology) -> String {
        let mut out = String::from("node,dst,nexthop,cost\n");
        for node in topo.nodes() {
            for dst in topo.nodes() {
                for c in self.nexthops(node, dst) {
                    out.push_str(&format!(
                        "{},{},{},{:?}\n",
                        topo.name(node),
                        topo.name(dst),
                        topo.name(c.nexthop),
                        c.cost
                    ));
                }
            }
        }
        out
    }
}

/// Builds the multipath FIB admitted by `policy`.
pub fn compute_fib(
    topo: &Topology,
    dtable: &DistanceTable,
    policy: &dyn LoopFreePolicy,
) -> MultipathFib {
    let n = topo.node_count();
    let mut entries = Vec::with_capacity(n * n);
    for node in topo.nodes() {
        for dst in topo.nodes() {
            if node == dst {
                entries.push(Vec::new());
                continue;
            }
            let admitted: Vec<NexthopCandidate> = nexthop_costs(topo, dtable, node, dst)
                .into_iter()
                .filter(|c| policy.admits(dtable, node, c.nexthop, dst))
                .collect();
            entries.push(admitted);
        }
    }
    MultipathFib { n, entries }
}

/// Distance table and FIB for one metric, recomputed on topology change.
pub struct RoutingState {
    metric: Metric,
    policy: Box<dyn LoopFreePolicy>,
    dtable: DistanceTable,
    fib: MultipathFib,
}

impl RoutingState {
    pub fn new(topo: &Topology, metric: Metric, policy: Box<dyn LoopFreePolicy>) -> Self {
        let dtable = all_pairs_shortest(topo, metric);
        let fib = compute_fib(topo, &dtable, policy.as_ref());
        debug_assert!(fib.check_loop_free().is_ok());
        RoutingState {
            metric,
            policy,
            dtable,
            fib,
        }
    }

    pub fn downward(topo: &Topology, metric: Metric) -> Self {
        Self::new(topo, metric, Box::new(Downward))
    }

    pub fn metric(&self) -> Metric {
        self.metric
    }

    pub fn distances(&self) -> &DistanceTable {
        &self.dtable
    }

    pub fn fib(&self) -> &MultipathFib {
        &self.fib
    }

    pub fn policy_name(&self) -> &'static str {
        self.policy.name()
    }

    /// Full recompute; returns the (node, dst) pairs whose admitted nexthop
    /// list changed.
    pub fn on_topology_change(&mut self, topo: &Topology) -> Vec<(NodeId, NodeId)> {
        let dtable = all_pairs_shortest(topo, self.metric);
        let fib = compute_fib(topo, &dtable, self.policy.as_ref());
        debug_assert!(fib.check_loop_free().is_ok());
        let changed = self.fib.diff(&fib);
        self.dtable = dtable;
        self.fib = fib;
        changed
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::load_topology;

    #[test]
    fn single_node_distance_zero() {
        let t = load_topology("node A").unwrap();
        let d = all_pairs_shortest(&t, Metric::Hop);
        assert_eq!(d.get(NodeId(0), NodeId(0)), 0.0);
    }

    #[test]
    fn unreachable_is_infinite() {
        let t = load_topology("node A\nnode B\nlink A B 1G 1ms").unwrap();
        let d = all_pairs_shortest(&t, Metric::Delay);
        let (a, b) = (t.node("A").unwrap(), t.node("B").unwrap());
        assert!((d.get(a, b) - 0.001).abs() < 1e-15);
        assert!(d.get(b, a).is_infinite());
    }

    #[test]
    fn line_topology_admits_single_path() {
        let t = load_topology("node A\nnode B\nnode C\nbidi A B 1G 1ms\nbidi B C 1G 1ms").unwrap();
        let r = RoutingState::downward(&t, Metric::Delay);
        let (a, b, c) = (t.node("A").unwrap(), t.node("B").unwrap(), t.node("C").unwrap());
        let nh = r.fib().nexthops(a, c);
        assert_eq!(nh.len(), 1);
        assert_eq!(nh[0].nexthop, b);
        assert!((nh[0].cost - 0.002).abs() < 1e-15);
    }

    #[test]
    fn equal_distance_neighbors_are_excluded() {
        // Square A-B-D-C-A: B and C are equally far from D; from B, C is not
        // admitted (it is farther), and A admits both B and C.
        let t = load_topology(
            "node A\nnode B\nnode C\nnode D\nbidi A B 1G 1ms\nbidi A C 1G 1ms\nbidi B D 1G 1ms\nbidi C D 1G 1ms",
        )
        .unwrap();
        let r = RoutingState::downward(&t, Metric::Hop);
        let id = |s| t.node(s).unwrap();
        let at_a: Vec<_> = r.fib().nexthops(id("A"), id("D")).iter().map(|c| c.nexthop).collect();
        assert_eq!(at_a, vec![id("B"), id("C")]);
        let at_b: Vec<_> = r.fib().nexthops(id("B"), id("D")).iter().map(|c| c.nexthop).collect();
        assert_eq!(at_b, vec![id("D")]);
        // Dest B: A (dist 1) and D (dist 1) are both adjacent to C (dist 2).
        let at_c: Vec<_> = r.fib().nexthops(id("C"), id("B")).iter().map(|c| c.nexthop).collect();
        assert_eq!(at_c, vec![id("A"), id("D")]);
    }

    #[test]
    fn partition_leaves_empty_sets_and_restore_is_identity() {
        let mut t = load_topology("node A\nnode B\nnode C\nbidi A B 1G 1ms\nbidi B C 1G 1ms").unwrap();
        let mut r = RoutingState::downward(&t, Metric::Delay);
        let before = r.fib().clone();
        let (a, b, c) = (t.node("A").unwrap(), t.node("B").unwrap(), t.node("C").unwrap());
        t.set_link_state(b, c, false).unwrap();
        let changed = r.on_topology_change(&t);
        assert!(changed.contains(&(a, c)));
        assert!(r.fib().nexthops(a, c).is_empty());
        assert!(r.fib().nexthops(b, c).is_empty());
        assert!(r.distances().get(a, c).is_infinite());
        t.set_link_state(b, c, true).unwrap();
        r.on_topology_change(&t);
        assert_eq!(r.fib(), &before);
    }

    #[test]
    fn invcap_prefers_fat_link() {
        let t = load_topology(
            "node A\nnode B\nnode C\nbidi A B 100M 1ms\nbidi A C 1G 1ms\nbidi C B 1G 1ms",
        )
        .unwrap();
        let d = all_pairs_shortest(&t, Metric::InvCap);
        let id = |s| t.node(s).unwrap();
        // Direct thin link costs 10, detour over two fat links costs 2.
        assert_eq!(d.get(id("A"), id("B")), 2.0);
        let r = RoutingState::downward(&t, Metric::InvCap);
        assert_eq!(r.fib().nexthops(id("A"), id("B"))[0].nexthop, id("C"));
    }

    #[test]
    fn dump_format() {
        let t = load_topology("node A\nnode B\nbidi A B 1G 1ms").unwrap();
        let r = RoutingState::downward(&t, Metric::Hop);
        assert_eq!(r.fib().dump(&t), "node,dst,nexthop,cost\nA,B,B,1.0\nB,A,A,1.0\n");
    }
}
