use std::fmt;

use crate::time::SimTime;
use crate::topology::NodeId;

/// Wire size of a DATA packet, headers included.
pub const DATA_SIZE: u32 = 1500;
/// Payload carried by one DATA packet.
pub const DATA_PAYLOAD: u32 = 1460;
/// Wire size of an acknowledgment.
pub const ACK_SIZE: u32 = 40;
/// Wire size of probe requests and replies: 14 B link header, 40 B IPv6
/// header, 2 B origin id, 2 B destination id, 4 B price, padded to 64.
pub const PROBE_SIZE: u32 = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    Data,
    Ack,
    ProbeReq,
    ProbeReply,
}

impl PacketKind {
    pub fn is_probe(self) -> bool {
        matches!(self, PacketKind::ProbeReq | PacketKind::ProbeReply)
    }
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PacketKind::Data => "DATA",
            PacketKind::Ack => "ACK",
            PacketKind::ProbeReq => "PROBE_REQ",
            PacketKind::ProbeReply => "PROBE_REPLY",
        })
    }
}

/// A simulated packet.
///
/// DATA and PROBE_REQ packets record the nodes they visit in `path`. ACK and
/// PROBE_REPLY packets travel back along the reversed record: `path` is then
/// the route to follow and `cursor` the index of the node currently holding
/// the packet.
///
/// On DATA, `ecn_mark` is the congestion-experienced bit set by an AQM and
/// implies `ecn_capable`. On an ACK it is the echo of that bit.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub kind: PacketKind,
    pub size: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub flow: u32,
    /// DATA: sequence number. ACK: the DATA sequence number acknowledged.
    pub seq: u64,
    /// ACK only: next in-order sequence number expected by the receiver.
    pub cum_ack: u64,
    pub ecn_capable: bool,
    pub ecn_mark: bool,
    /// Set on a marked ACK once a router has reacted to the mark.
    pub handled: bool,
    /// Sum of link congestion prices collected by a probe.
    pub price_acc: f64,
    pub probe_origin: NodeId,
    pub probe_nexthop: NodeId,
    /// DATA: send time. ACK: echo of the DATA send time.
    pub sent_at: SimTime,
    pub path: Vec<NodeId>,
    pub cursor: u32,
    /// DATA: index in `path` of the node whose egress queue set the mark.
    /// ACK: the same node's index in the reversed route.
    pub mark_pos: Option<u32>,
}

impl Packet {
    pub fn data(flow: u32, src: NodeId, dst: NodeId, seq: u64, now: SimTime) -> Packet {
        let mut path = Vec::with_capacity(12);
        path.push(src);
        Packet {
            kind: PacketKind::Data,
            size: DATA_SIZE,
            src,
            dst,
            flow,
            seq,
            cum_ack: 0,
            ecn_capable: true,
            ecn_mark: false,
            handled: false,
            price_acc: 0.0,
            probe_origin: src,
            probe_nexthop: src,
            sent_at: now,
            path,
            cursor: 0,
            mark_pos: None,
        }
    }

    /// A probe request from `origin` toward `dst` via `nexthop`.
    pub fn probe_request(origin: NodeId, dst: NodeId, nexthop: NodeId, now: SimTime) -> Packet {
        let mut path = Vec::with_capacity(12);
        path.push(origin);
        Packet {
            kind: PacketKind::ProbeReq,
            size: PROBE_SIZE,
            src: origin,
            dst,
            flow: u32::MAX,
            seq: 0,
            cum_ack: 0,
            ecn_capable: false,
            ecn_mark: false,
            handled: false,
            price_acc: 0.0,
            probe_origin: origin,
            probe_nexthop: nexthop,
            sent_at: now,
            path,
            cursor: 0,
            mark_pos: None,
        }
    }

    /// Turns a probe request that reached its destination into the reply,
    /// routed back along the reverse of the visited nodes.
    pub fn into_probe_reply(mut self) -> Packet {
        debug_assert_eq!(self.kind, PacketKind::ProbeReq);
        self.kind = PacketKind::ProbeReply;
        std::mem::swap(&mut self.src, &mut self.dst);
        self.path.reverse();
        self.cursor = 0;
        self
    }

    /// Node currently holding a route-following packet.
    pub fn route_here(&self) -> NodeId {
        self.path[self.cursor as usize]
    }

    /// Next node on the route of an ACK or probe reply.
    pub fn route_next(&self) -> Option<NodeId> {
        self.path.get(self.cursor as usize + 1).copied()
    }

    pub fn follows_route(&self) -> bool {
        matches!(self.kind, PacketKind::Ack | PacketKind::ProbeReply)
    }
}
