//! Comparison forwarding schemes: shortest path by delay or inverse
//! capacity, and even splitting over equal-cost nexthops.

use std::fmt;
use std::str::FromStr;

use crate::routing::{Metric, MultipathFib};
use crate::swrr::{self, Weighted};
use crate::topology::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeId {
    Sp,
    InvCap,
    Ecmp,
    Hcte,
}

impl SchemeId {
    pub const ALL: [SchemeId; 4] = [SchemeId::Sp, SchemeId::InvCap, SchemeId::Ecmp, SchemeId::Hcte];

    /// Routing metric the scheme forwards on, given the configured metric
    /// for delay-based schemes.
    pub fn routing_metric(self, configured: Metric) -> Metric {
        match self {
            SchemeId::InvCap => Metric::InvCap,
            _ => configured,
        }
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeId::Sp => "SP",
            SchemeId::InvCap => "INVCAP",
            SchemeId::Ecmp => "ECMP",
            SchemeId::Hcte => "HCTE",
        })
    }
}

impl FromStr for SchemeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "sp" => Ok(SchemeId::Sp),
            "invcap" => Ok(SchemeId::InvCap),
            "ecmp" => Ok(SchemeId::Ecmp),
            "hcte" => Ok(SchemeId::Hcte),
            other => Err(format!("unknown scheme '{other}'")),
        }
    }
}

/// The cheapest admitted nexthop (ties already broken by node index in the
/// FIB ordering).
pub fn sp_forward(fib: &MultipathFib, router: NodeId, dst: NodeId) -> Option<NodeId> {
    fib.nexthops(router, dst).first().map(|c| c.nexthop)
}

/// Shortest-path forwarding over a FIB computed with the inverse-capacity
/// metric.
pub fn invcap_forward(invcap_fib: &MultipathFib, router: NodeId, dst: NodeId) -> Option<NodeId> {
    sp_forward(invcap_fib, router, dst)
}

struct Slot {
    nexthop: NodeId,
    credit: i64,
}

impl Weighted for Slot {
    fn weight(&self) -> i64 {
        1
    }

    fn credit(&mut self) -> &mut i64 {
        &mut self.credit
    }
}

/// Round-robin state of ECMP per (router, destination).
pub struct EcmpState {
    n: usize,
    slots: Vec<Vec<Slot>>,
}

impl EcmpState {
    pub fn new(node_count: usize) -> Self {
        EcmpState {
            n: node_count,
            slots: (0..node_count * node_count).map(|_| Vec::new()).collect(),
        }
    }

    /// Even round-robin over the admitted nexthops whose cost equals the
    /// minimum exactly.
    pub fn forward(&mut self, fib: &MultipathFib, router: NodeId, dst: NodeId) -> Option<NodeId> {
        let slots = &mut self.slots[router.index() * self.n + dst.index()];
        if slots.is_empty() {
            let cands = fib.nexthops(router, dst);
            let best = cands.first()?.cost;
            slots.extend(cands.iter().take_while(|c| c.cost == best).map(|c| Slot {
                nexthop: c.nexthop,
                credit: 0,
            }));
        }
        let i = swrr::pick(slots)?;
        Some(slots[i].nexthop)
    }

    /// Forgets all round-robin state; called after the FIB changes.
    pub fn reset(&mut self) {
        for s in &mut self.slots {
            s.clear();
        }
    }
}
