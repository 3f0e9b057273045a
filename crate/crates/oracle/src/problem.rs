//! Path-based multi-commodity flow problems and solutions, with a
//! line-oriented text format for both.
//!
//! Problem file:
//!
//! ```text
//! gamma 1e-9
//! bounds 64 6
//! node SV
//! link SV DV 1000000000 0.0123      # src dst capacity[bit/s] delay[s]
//! pair SV IN
//! path 0 SV DV KC IN                # pair index, node sequence
//! ```
//!
//! Solution file:
//!
//! ```text
//! fingerprint 3fa2...
//! objective -0.0025
//! gap 1e-12
//! converged true
//! bounds 64 6
//! x 0 399999000                     # pair index, rate[bit/s]
//! y 0 SV DV KC IN 99999000          # pair index, path, flow[bit/s]
//! f SV DV 399999000 2.1e-5          # link, flow[bit/s], multiplier
//! ```
//!
//! Blank lines and `#` comments are ignored.

use std::collections::HashMap;
use std::fmt::Write as _;

use hcte_core::{NodeId, Topology};
use thiserror::Error;

use crate::paths::{enumerate_paths, PathError};

/// Default weight of the delay cost, in the solver's Mbit/s and ms units.
pub const DEFAULT_GAMMA: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct McfLink {
    pub src: NodeId,
    pub dst: NodeId,
    /// bit/s.
    pub capacity: f64,
    /// Seconds.
    pub delay: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct McfProblem {
    pub nodes: Vec<String>,
    pub links: Vec<McfLink>,
    pub pairs: Vec<(NodeId, NodeId)>,
    pub gamma: f64,
    /// Candidate paths of every pair as node sequences.
    pub paths: Vec<Vec<Vec<NodeId>>>,
    /// Path limit and stretch used to enumerate `paths`, if any.
    pub bounds: Option<(usize, f64)>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ProblemError {
    #[error(transparent)]
    Path(#[from] PathError),
    #[error("pair {0} has no candidate path")]
    NoPaths(usize),
    #[error("path {path} of pair {pair} is invalid: {why}")]
    BadPath { pair: usize, path: usize, why: String },
    #[error("link {0}: capacity and delay must be positive")]
    BadLink(usize),
    #[error("gamma must be finite and non-negative")]
    BadGamma,
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

fn parse_err(line: usize, msg: impl Into<String>) -> ProblemError {
    ProblemError::Parse {
        line,
        msg: msg.into(),
    }
}

impl McfProblem {
    /// Problem over the up links of `topo` with paths enumerated per pair.
    pub fn from_topology(
        topo: &Topology,
        pairs: &[(NodeId, NodeId)],
        gamma: f64,
        limit: usize,
        stretch: f64,
    ) -> Result<Self, ProblemError> {
        let paths = pairs
            .iter()
            .map(|&(s, d)| enumerate_paths(topo, s, d, limit, stretch))
            .collect::<Result<Vec<_>, _>>()?;
        let p = McfProblem {
            nodes: topo.nodes().map(|n| topo.name(n).to_string()).collect(),
            links: topo
                .links()
                .iter()
                .filter(|l| l.up)
                .map(|l| McfLink {
                    src: l.src,
                    dst: l.dst,
                    capacity: l.capacity,
                    delay: l.delay,
                })
                .collect(),
            pairs: pairs.to_vec(),
            gamma,
            paths,
            bounds: Some((limit, stretch)),
        };
        p.validate()?;
        Ok(p)
    }

    fn link_index(&self) -> HashMap<(NodeId, NodeId), usize> {
        self.links
            .iter()
            .enumerate()
            .map(|(i, l)| ((l.src, l.dst), i))
            .collect()
    }

    /// Link indices of every path, per pair.
    pub fn path_links(&self) -> Result<Vec<Vec<Vec<usize>>>, ProblemError> {
        let idx = self.link_index();
        self.paths
            .iter()
            .enumerate()
            .map(|(i, ps)| {
                ps.iter()
                    .enumerate()
                    .map(|(j, p)| {
                        let bad = |why: &str| ProblemError::BadPath {
                            pair: i,
                            path: j,
                            why: why.to_string(),
                        };
                        if p.first() != Some(&self.pairs[i].0) || p.last() != Some(&self.pairs[i].1) {
                            return Err(bad("does not connect its pair"));
                        }
                        let mut seen = p.clone();
                        seen.sort_unstable();
                        seen.dedup();
                        if seen.len() != p.len() {
                            return Err(bad("not simple"));
                        }
                        p.windows(2)
                            .map(|w| idx.get(&(w[0], w[1])).copied().ok_or_else(|| bad("uses a missing link")))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<(), ProblemError> {
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(ProblemError::BadGamma);
        }
        for (i, l) in self.links.iter().enumerate() {
            if !(l.capacity > 0.0 && l.delay > 0.0) {
                return Err(ProblemError::BadLink(i));
            }
        }
        if let Some(i) = self.paths.iter().position(|p| p.is_empty()) {
            return Err(ProblemError::NoPaths(i));
        }
        if self.paths.len() != self.pairs.len() {
            return Err(ProblemError::NoPaths(self.paths.len()));
        }
        self.path_links().map(|_| ())
    }

    pub fn path_count(&self) -> usize {
        self.paths.iter().map(Vec::len).sum()
    }

    fn fmt_path(&self, p: &[NodeId]) -> String {
        p.iter()
            .map(|n| self.nodes[n.index()].as_str())
            .collect::<Vec<_>>()
            .join(" ")
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        writeln!(s, "gamma {:e}", self.gamma).unwrap();
        if let Some((l, st)) = self.bounds {
            writeln!(s, "bounds {l} {st}").unwrap();
        }
        for n in &self.nodes {
            writeln!(s, "node {n}").unwrap();
        }
        for l in &self.links {
            writeln!(
                s,
                "link {} {} {} {}",
                self.nodes[l.src.index()],
                self.nodes[l.dst.index()],
                l.capacity,
                l.delay
            )
            .unwrap();
        }
        for &(a, b) in &self.pairs {
            writeln!(s, "pair {} {}", self.nodes[a.index()], self.nodes[b.index()]).unwrap();
        }
        for (i, ps) in self.paths.iter().enumerate() {
            for p in ps {
                writeln!(s, "path {i} {}", self.fmt_path(p)).unwrap();
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self, ProblemError> {
        let mut p = McfProblem {
            nodes: Vec::new(),
            links: Vec::new(),
            pairs: Vec::new(),
            gamma: DEFAULT_GAMMA,
            paths: Vec::new(),
            bounds: None,
        };
        let mut names: HashMap<String, NodeId> = HashMap::new();
        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let tok: Vec<&str> = line.split_whitespace().collect();
            let Some(&key) = tok.first() else { continue };
            let node = |name: &str| {
                names
                    .get(name)
                    .copied()
                    .ok_or_else(|| parse_err(ln, format!("unknown node `{name}`")))
            };
            let num = |t: &str| t.parse::<f64>().map_err(|_| parse_err(ln, format!("bad number `{t}`")));
            match (key, tok.len()) {
                ("gamma", 2) => p.gamma = num(tok[1])?,
                ("bounds", 3) => {
                    let l = tok[1]
                        .parse()
                        .map_err(|_| parse_err(ln, "bad path limit"))?;
                    p.bounds = Some((l, num(tok[2])?));
                }
                ("node", 2) => {
                    if names.contains_key(tok[1]) {
                        return Err(parse_err(ln, format!("duplicate node `{}`", tok[1])));
                    }
                    names.insert(tok[1].to_string(), NodeId(p.nodes.len() as u32));
                    p.nodes.push(tok[1].to_string());
                }
                ("link", 5) => p.links.push(McfLink {
                    src: node(tok[1])?,
                    dst: node(tok[2])?,
                    capacity: num(tok[3])?,
                    delay: num(tok[4])?,
                }),
                ("pair", 3) => {
                    p.pairs.push((node(tok[1])?, node(tok[2])?));
                    p.paths.push(Vec::new());
                }
                ("path", n) if n >= 3 => {
                    let i: usize = tok[1].parse().map_err(|_| parse_err(ln, "bad pair index"))?;
                    let path = tok[2..].iter().map(|t| node(t)).collect::<Result<Vec<_>, _>>()?;
                    p.paths
                        .get_mut(i)
                        .ok_or_else(|| parse_err(ln, format!("pair {i} not declared")))?
                        .push(path);
                }
                _ => return Err(parse_err(ln, format!("cannot parse `{line}`"))),
            }
        }
        p.validate()?;
        Ok(p)
    }
}

/// Optimal rates of a [`McfProblem`].
#[derive(Debug, Clone, PartialEq)]
pub struct McfSolution {
    /// Per pair, per path flow in bit/s.
    pub y: Vec<Vec<f64>>,
    /// Per pair rate in bit/s.
    pub x: Vec<f64>,
    /// Per link flow in bit/s.
    pub f: Vec<f64>,
    /// Capacity multipliers in objective units per Mbit/s.
    pub mu: Vec<f64>,
    /// `r[l][i]`: fraction of pair `i`'s rate crossing link `l`.
    pub r: Vec<Vec<f64>>,
    /// `sum -1/x_i - gamma * sum d_l f_l` with x in Mbit/s and d in ms.
    pub objective: f64,
    /// Remaining duality gap of the barrier method, in objective units.
    pub gap: f64,
    pub converged: bool,
    pub bounds: Option<(usize, f64)>,
    pub fingerprint: Option<String>,
}

impl McfSolution {
    pub fn total_rate(&self) -> f64 {
        self.x.iter().sum()
    }

    pub fn to_text(&self, problem: &McfProblem) -> String {
        let mut s = String::new();
        if let Some(fp) = &self.fingerprint {
            writeln!(s, "fingerprint {fp}").unwrap();
        }
        writeln!(s, "objective {:e}", self.objective).unwrap();
        writeln!(s, "gap {:e}", self.gap).unwrap();
        writeln!(s, "converged {}", self.converged).unwrap();
        if let Some((l, st)) = self.bounds {
            writeln!(s, "bounds {l} {st}").unwrap();
        }
        for (i, x) in self.x.iter().enumerate() {
            writeln!(s, "x {i} {x}").unwrap();
        }
        for (i, ys) in self.y.iter().enumerate() {
            for (j, y) in ys.iter().enumerate() {
                writeln!(s, "y {i} {} {y}", problem.fmt_path(&problem.paths[i][j])).unwrap();
            }
        }
        for (l, link) in problem.links.iter().enumerate() {
            writeln!(
                s,
                "f {} {} {} {:e}",
                problem.nodes[link.src.index()],
                problem.nodes[link.dst.index()],
                self.f[l],
                self.mu[l]
            )
            .unwrap();
        }
        s
    }

    /// Reads a solution written by [`McfSolution::to_text`] for `problem`.
    pub fn parse(text: &str, problem: &McfProblem) -> Result<Self, ProblemError> {
        let names: HashMap<&str, NodeId> = problem
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), NodeId(i as u32)))
            .collect();
        let links = problem.link_index();
        let plinks = problem.path_links()?;
        let mut sol = McfSolution {
            y: problem.paths.iter().map(|p| vec![0.0; p.len()]).collect(),
            x: vec![0.0; problem.pairs.len()],
            f: vec![0.0; problem.links.len()],
            mu: vec![0.0; problem.links.len()],
            r: Vec::new(),
            objective: 0.0,
            gap: 0.0,
            converged: false,
            bounds: None,
            fingerprint: None,
        };
        for (ln, raw) in text.lines().enumerate() {
            let ln = ln + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let tok: Vec<&str> = line.split_whitespace().collect();
            let Some(&key) = tok.first() else { continue };
            let num = |t: &str| t.parse::<f64>().map_err(|_| parse_err(ln, format!("bad number `{t}`")));
            let node = |t: &str| {
                names
                    .get(t)
                    .copied()
                    .ok_or_else(|| parse_err(ln, format!("unknown node `{t}`")))
            };
            let idx = |t: &str, n: usize| {
                t.parse::<usize>()
                    .ok()
                    .filter(|&i| i < n)
                    .ok_or_else(|| parse_err(ln, format!("bad index `{t}`")))
            };
            match (key, tok.len()) {
                ("fingerprint", 2) => sol.fingerprint = Some(tok[1].to_string()),
                ("objective", 2) => sol.objective = num(tok[1])?,
                ("gap", 2) => sol.gap = num(tok[1])?,
                ("converged", 2) => sol.converged = tok[1] == "true",
                ("bounds", 3) => {
                    let l = tok[1].parse().map_err(|_| parse_err(ln, "bad path limit"))?;
                    sol.bounds = Some((l, num(tok[2])?));
                }
                ("x", 3) => sol.x[idx(tok[1], problem.pairs.len())?] = num(tok[2])?,
                ("y", n) if n >= 5 => {
                    let i = idx(tok[1], problem.pairs.len())?;
                    let path = tok[2..n - 1].iter().map(|t| node(t)).collect::<Result<Vec<_>, _>>()?;
                    let j = problem.paths[i]
                        .iter()
                        .position(|p| *p == path)
                        .ok_or_else(|| parse_err(ln, "path not in problem"))?;
                    sol.y[i][j] = num(tok[n - 1])?;
                }
                ("f", 5) => {
                    let l = *links
                        .get(&(node(tok[1])?, node(tok[2])?))
                        .ok_or_else(|| parse_err(ln, "link not in problem"))?;
                    sol.f[l] = num(tok[3])?;
                    sol.mu[l] = num(tok[4])?;
                }
                _ => return Err(parse_err(ln, format!("cannot parse `{line}`"))),
            }
        }
        sol.r = routing_fractions(problem.links.len(), &plinks, &sol.y, &sol.x);
        Ok(sol)
    }
}

pub(crate) fn routing_fractions(
    nlinks: usize,
    plinks: &[Vec<Vec<usize>>],
    y: &[Vec<f64>],
    x: &[f64],
) -> Vec<Vec<f64>> {
    let mut r = vec![vec![0.0; x.len()]; nlinks];
    for (i, ps) in plinks.iter().enumerate() {
        if x[i] <= 0.0 {
            continue;
        }
        for (j, ls) in ps.iter().enumerate() {
            for &l in ls {
                r[l][i] += y[i][j] / x[i];
            }
        }
    }
    r
}
