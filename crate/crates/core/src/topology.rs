//! Network graph model: nodes, directed links with capacity and propagation
//! delay, the line-oriented topology file format, and link failure state.
//!
//! File format (UTF-8, `#` starts a comment):
//!
//! ```text
//! node <NAME> [<lat> <lon>]
//! link <SRC> <DST> <capacity> <delay|auto> [down]   # one direction
//! bidi <SRC> <DST> <capacity> <delay|auto> [down]   # both directions
//! ```
//!
//! Capacities take the suffixes `K`, `M`, `G` (powers of ten, bit/s);
//! delays take `us`, `ms` or `s`. `auto` derives the delay from the
//! endpoint coordinates with [`geo_delay`].

use std::collections::HashMap;
use std::fmt::Write as _;

use thiserror::Error;

/// Mean Earth radius used for great-circle distances, in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_000.0;
/// Signal propagation speed in fiber, 0.6 c, in meters per second.
pub const PROPAGATION_SPEED_MPS: f64 = 0.6 * 299_792_458.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoCoord {
    pub lat: f64,
    pub lon: f64,
}

/// A directed link.
#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub src: NodeId,
    pub dst: NodeId,
    /// Bits per second.
    pub capacity: f64,
    /// One-way propagation delay in seconds.
    pub delay: f64,
    pub up: bool,
}

#[derive(Debug, Error, PartialEq)]
pub enum TopologyError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("line {line}: unknown node `{name}`")]
    UnknownNode { line: usize, name: String },
    #[error("line {line}: {what} must be positive, got `{value}`")]
    NonPositive {
        line: usize,
        what: &'static str,
        value: String,
    },
    #[error("line {line}: duplicate node `{name}`")]
    DuplicateNode { line: usize, name: String },
    #[error("line {line}: duplicate link {src} -> {dst}")]
    DuplicateLink { line: usize, src: String, dst: String },
    #[error("line {line}: self-loop on `{name}`")]
    SelfLoop { line: usize, name: String },
    #[error("line {line}: `auto` delay needs coordinates on both `{src}` and `{dst}`")]
    MissingCoordinates { line: usize, src: String, dst: String },
    #[error("coordinates are given for some nodes but not for `{name}`")]
    PartialGeo { name: String },
    #[error("no link {src} -> {dst}")]
    UnknownLink { src: String, dst: String },
}

/// Validated network topology.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    names: Vec<String>,
    index: HashMap<String, NodeId>,
    geo: Vec<Option<GeoCoord>>,
    links: Vec<Link>,
    by_endpoints: HashMap<(NodeId, NodeId), LinkId>,
    out_links: Vec<Vec<LinkId>>,
}

impl Default for Topology {
    fn default() -> Self {
        Self::new()
    }
}

impl Topology {
    pub fn new() -> Self {
        Topology {
            names: Vec::new(),
            index: HashMap::new(),
            geo: Vec::new(),
            links: Vec::new(),
            by_endpoints: HashMap::new(),
            out_links: Vec::new(),
        }
    }

    /// Parses and validates a topology file.
    pub fn parse(text: &str) -> Result<Topology, TopologyError> {
        load_topology(text)
    }

    /// Adds a node; returns its id. Names must be unique.
    pub fn add_node(
        &mut self,
        name: &str,
        geo: Option<GeoCoord>,
    ) -> Result<NodeId, TopologyError> {
        if self.index.contains_key(name) {
            return Err(TopologyError::DuplicateNode {
                line: 0,
                name: name.to_string(),
            });
        }
        let id = NodeId(self.names.len() as u32);
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.geo.push(geo);
        self.out_links.push(Vec::new());
        Ok(id)
    }

    /// Adds one directed link.
    pub fn add_link(
        &mut self,
        src: NodeId,
        dst: NodeId,
        capacity: f64,
        delay: f64,
    ) -> Result<LinkId, TopologyError> {
        if src == dst {
            return Err(TopologyError::SelfLoop {
                line: 0,
                name: self.name(src).to_string(),
            });
        }
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(TopologyError::NonPositive {
                line: 0,
                what: "capacity",
                value: capacity.to_string(),
            });
        }
        if !(delay > 0.0) || !delay.is_finite() {
            return Err(TopologyError::NonPositive {
                line: 0,
                what: "delay",
                value: delay.to_string(),
            });
        }
        if self.by_endpoints.contains_key(&(src, dst)) {
            return Err(TopologyError::DuplicateLink {
                line: 0,
                src: self.name(src).to_string(),
                dst: self.name(dst).to_string(),
            });
        }
        let id = LinkId(self.links.len() as u32);
        self.links.push(Link {
            src,
            dst,
            capacity,
            delay,
            up: true,
        });
        self.by_endpoints.insert((src, dst), id);
        self.out_links[src.index()].push(id);
        Ok(id)
    }

    /// Adds both directions of a physical link.
    pub fn add_bidi(
        &mut self,
        a: NodeId,
        b: NodeId,
        capacity: f64,
        delay: f64,
    ) -> Result<(LinkId, LinkId), TopologyError> {
        let ab = self.add_link(a, b, capacity, delay)?;
        let ba = self.add_link(b, a, capacity, delay)?;
        Ok((ab, ba))
    }

    pub fn node_count(&self) -> usize {
        self.names.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len() as u32).map(NodeId)
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.index()]
    }

    pub fn node(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn geo(&self, node: NodeId) -> Option<GeoCoord> {
        self.geo[node.index()]
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn link_ids(&self) -> impl Iterator<Item = LinkId> {
        (0..self.links.len() as u32).map(LinkId)
    }

    pub fn link_between(&self, src: NodeId, dst: NodeId) -> Option<LinkId> {
        self.by_endpoints.get(&(src, dst)).copied()
    }

    /// Outgoing links of `node`, including links that are down.
    pub fn out_links(&self, node: NodeId) -> &[LinkId] {
        &self.out_links[node.index()]
    }

    /// Outgoing links of `node` that are up, in declaration order.
    pub fn up_out_links(&self, node: NodeId) -> impl Iterator<Item = (LinkId, &Link)> + '_ {
        self.out_links[node.index()]
            .iter()
            .map(move |&id| (id, &self.links[id.index()]))
            .filter(|(_, l)| l.up)
    }

    /// Number of distinct neighbors of `node`, counting a bidirectional
    /// physical link once.
    pub fn physical_degree(&self, node: NodeId) -> usize {
        let mut nbrs: Vec<NodeId> = self
            .links
            .iter()
            .filter_map(|l| {
                if l.src == node {
                    Some(l.dst)
                } else if l.dst == node {
                    Some(l.src)
                } else {
                    None
                }
            })
            .collect();
        nbrs.sort_unstable();
        nbrs.dedup();
        nbrs.len()
    }

    pub fn max_capacity(&self) -> f64 {
        self.links.iter().map(|l| l.capacity).fold(0.0, f64::max)
    }

    /// Sets the state of the physical link between `src` and `dst`: both
    /// directions change together. Returns whether anything changed.
    pub fn set_link_state(
        &mut self,
        src: NodeId,
        dst: NodeId,
        up: bool,
    ) -> Result<bool, TopologyError> {
        let fwd = self.link_between(src, dst);
        let rev = self.link_between(dst, src);
        if fwd.is_none() && rev.is_none() {
            return Err(TopologyError::UnknownLink {
                src: self.name(src).to_string(),
                dst: self.name(dst).to_string(),
            });
        }
        let mut changed = false;
        for id in [fwd, rev].into_iter().flatten() {
            let link = &mut self.links[id.index()];
            if link.up != up {
                link.up = up;
                changed = true;
            }
        }
        Ok(changed)
    }

    /// Writes the topology back in file format; every directed link becomes
    /// its own `link` line with exact capacity and delay values.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for node in self.nodes() {
            match self.geo(node) {
                Some(g) => writeln!(out, "node {} {:?} {:?}", self.name(node), g.lat, g.lon),
                None => writeln!(out, "node {}", self.name(node)),
            }
            .unwrap();
        }
        for link in &self.links {
            write!(
                out,
                "link {} {} {:?} {:?}s",
                self.name(link.src),
                self.name(link.dst),
                link.capacity,
                link.delay
            )
            .unwrap();
            if !link.up {
                out.push_str(" down");
            }
            out.push('\n');
        }
        out
    }
}

/// Great-circle propagation delay between two coordinates, in seconds.
///
/// Haversine distance on a sphere of radius [`EARTH_RADIUS_M`] divided by a
/// signal speed of 0.6 c.
pub fn geo_delay(a: GeoCoord, b: GeoCoord) -> f64 {
    let (p1, p2) = (a.lat.to_radians(), b.lat.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon - a.lon).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    let dist = 2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin();
    dist / PROPAGATION_SPEED_MPS
}

/// Parses a capacity such as `100M`, `2.5G` or `34000000` into bit/s.
pub fn parse_capacity(token: &str) -> Option<f64> {
    let (num, mult) = match token.chars().last()? {
        'K' | 'k' => (&token[..token.len() - 1], 1e3),
        'M' | 'm' => (&token[..token.len() - 1], 1e6),
        'G' | 'g' => (&token[..token.len() - 1], 1e9),
        _ => (token, 1.0),
    };
    num.parse::<f64>().ok().map(|v| v * mult)
}

/// Parses a delay such as `5ms`, `120us` or `0.0146s` into seconds.
pub fn parse_delay(token: &str) -> Option<f64> {
    let (num, div) = if let Some(n) = token.strip_suffix("us") {
        (n, 1e6)
    } else if let Some(n) = token.strip_suffix("ms") {
        (n, 1e3)
    } else if let Some(n) = token.strip_suffix('s') {
        (n, 1.0)
    } else {
        return None;
    };
    num.parse::<f64>().ok().map(|v| v / div)
}

/// Parses the line-oriented topology format into a validated [`Topology`].
pub fn load_topology(text: &str) -> Result<Topology, TopologyError> {
    let mut topo = Topology::new();
    // Links are resolved after all nodes so that declaration order of nodes
    // and links does not matter.
    let mut pending = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let tokens: Vec<&str> = content.split_whitespace().collect();
        match tokens[0] {
            "node" => {
                let geo = match tokens.len() {
                    2 => None,
                    4 => {
                        let lat = tokens[2].parse::<f64>();
                        let lon = tokens[3].parse::<f64>();
                        match (lat, lon) {
                            (Ok(lat), Ok(lon)) => Some(GeoCoord { lat, lon }),
                            _ => {
                                return Err(TopologyError::Parse {
                                    line,
                                    msg: format!("bad coordinates in `{content}`"),
                                })
                            }
                        }
                    }
                    _ => {
                        return Err(TopologyError::Parse {
                            line,
                            msg: "expected `node <NAME> [<lat> <lon>]`".into(),
                        })
                    }
                };
                topo.add_node(tokens[1], geo).map_err(|e| match e {
                    TopologyError::DuplicateNode { name, .. } => {
                        TopologyError::DuplicateNode { line, name }
                    }
                    other => other,
                })?;
            }
            kw @ ("link" | "bidi") => {
                if !(tokens.len() == 5 || (tokens.len() == 6 && tokens[5] == "down")) {
                    return Err(TopologyError::Parse {
                        line,
                        msg: format!("expected `{kw} <SRC> <DST> <capacity> <delay|auto> [down]`"),
                    });
                }
                pending.push((line, kw == "bidi", tokens.iter().map(|s| s.to_string()).collect::<Vec<_>>()));
            }
            other => {
                return Err(TopologyError::Parse {
                    line,
                    msg: format!("unknown directive `{other}`"),
                })
            }
        }
    }

    let any_geo = topo.geo.iter().any(Option::is_some);
    if any_geo {
        if let Some(n) = topo.nodes().find(|&n| topo.geo(n).is_none()) {
            return Err(TopologyError::PartialGeo {
                name: topo.name(n).to_string(),
            });
        }
    }

    for (line, bidi, tokens) in pending {
        let lookup = |name: &str| {
            topo.node(name).ok_or_else(|| TopologyError::UnknownNode {
                line,
                name: name.to_string(),
            })
        };
        let src = lookup(&tokens[1])?;
        let dst = lookup(&tokens[2])?;
        let capacity = parse_capacity(&tokens[3]).ok_or_else(|| TopologyError::Parse {
            line,
            msg: format!("bad capacity `{}`", tokens[3]),
        })?;
        if !(capacity > 0.0) || !capacity.is_finite() {
            return Err(TopologyError::NonPositive {
                line,
                what: "capacity",
                value: tokens[3].clone(),
            });
        }
        let delay = if tokens[4] == "auto" {
            match (topo.geo(src), topo.geo(dst)) {
                (Some(a), Some(b)) => geo_delay(a, b),
                _ => {
                    return Err(TopologyError::MissingCoordinates {
                        line,
                        src: tokens[1].clone(),
                        dst: tokens[2].clone(),
                    })
                }
            }
        } else {
            parse_delay(&tokens[4]).ok_or_else(|| TopologyError::Parse {
                line,
                msg: format!("bad delay `{}` (use us/ms/s or auto)", tokens[4]),
            })?
        };
        if !(delay > 0.0) || !delay.is_finite() {
            return Err(TopologyError::NonPositive {
                line,
                what: "delay",
                value: tokens[4].clone(),
            });
        }
        let relabel = |e: TopologyError| match e {
            TopologyError::SelfLoop { name, .. } => TopologyError::SelfLoop { line, name },
            TopologyError::DuplicateLink { src, dst, .. } => {
                TopologyError::DuplicateLink { line, src, dst }
            }
            other => other,
        };
        let down = tokens.len() == 6;
        let mut ids = vec![topo.add_link(src, dst, capacity, delay).map_err(relabel)?];
        if bidi {
            ids.push(topo.add_link(dst, src, capacity, delay).map_err(relabel)?);
        }
        if down {
            for id in ids {
                topo.links[id.index()].up = false;
            }
        }
    }
    Ok(topo)
}
