//! Packet-level simulation of hop-by-hop congestion-aware traffic
//! engineering and baseline routing schemes.

pub mod baselines;
pub mod event;
pub mod hcte;
pub mod link;
pub mod metrics;
pub mod packet;
pub mod routing;
pub mod sim;
pub mod swrr;
pub mod time;
pub mod topology;
pub mod transport;

pub use time::SimTime;
pub use topology::{LinkId, NodeId, Topology};
