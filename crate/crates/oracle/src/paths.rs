//! Simple-path enumeration in ascending delay (Yen's k shortest paths).

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap, HashSet};

use hcte_core::routing::Metric;
use hcte_core::{NodeId, Topology};
use thiserror::Error;

pub const DEFAULT_PATH_LIMIT: usize = 64;
pub const DEFAULT_STRETCH: f64 = 6.0;

#[derive(Debug, Error, PartialEq)]
pub enum PathError {
    #[error("{0} cannot reach {1}")]
    Disconnected(String, String),
}

/// Delay of a path in exact integer units (picoseconds).
pub fn path_delay_units(topo: &Topology, path: &[NodeId]) -> Option<u64> {
    path.windows(2)
        .map(|w| {
            let l = topo.link_between(w[0], w[1])?;
            let link = topo.link(l);
            link.up.then(|| Metric::Delay.units(link, 0.0))
        })
        .sum()
}

fn dijkstra(
    topo: &Topology,
    src: NodeId,
    dst: NodeId,
    banned_nodes: &[bool],
    banned_edges: &HashSet<(NodeId, NodeId)>,
) -> Option<(u64, Vec<NodeId>)> {
    let n = topo.node_count();
    let mut dist = vec![u64::MAX; n];
    let mut prev: Vec<Option<NodeId>> = vec![None; n];
    let mut heap = BinaryHeap::new();
    dist[src.index()] = 0;
    heap.push(Reverse((0u64, src)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u.index()] {
            continue;
        }
        if u == dst {
            break;
        }
        for (_, link) in topo.up_out_links(u) {
            let v = link.dst;
            if banned_nodes[v.index()] || banned_edges.contains(&(u, v)) {
                continue;
            }
            let nd = d + Metric::Delay.units(link, 0.0);
            if nd < dist[v.index()] {
                dist[v.index()] = nd;
                prev[v.index()] = Some(u);
                heap.push(Reverse((nd, v)));
            }
        }
    }
    if dist[dst.index()] == u64::MAX {
        return None;
    }
    let mut path = vec![dst];
    let mut at = dst;
    while let Some(p) = prev[at.index()] {
        path.push(p);
        at = p;
    }
    path.reverse();
    Some((dist[dst.index()], path))
}

/// Up to `limit` simple paths from `src` to `dst` over up links, in
/// ascending delay (ties by node sequence), keeping only paths no longer
/// than `stretch` times the shortest.
pub fn enumerate_paths(
    topo: &Topology,
    src: NodeId,
    dst: NodeId,
    limit: usize,
    stretch: f64,
) -> Result<Vec<Vec<NodeId>>, PathError> {
    let n = topo.node_count();
    let disconnected = || PathError::Disconnected(topo.name(src).into(), topo.name(dst).into());
    let first = dijkstra(topo, src, dst, &vec![false; n], &HashSet::new()).ok_or_else(disconnected)?;
    let bound = first.0 as f64 * stretch;
    let mut found: Vec<(u64, Vec<NodeId>)> = vec![first];
    let mut candidates: BTreeSet<(u64, Vec<NodeId>)> = BTreeSet::new();
    while found.len() < limit {
        let (_, last) = found.last().expect("non-empty").clone();
        for i in 0..last.len() - 1 {
            let root = &last[..=i];
            let mut banned_edges = HashSet::new();
            for (_, p) in &found {
                if p.len() > i + 1 && p[..=i] == *root {
                    banned_edges.insert((p[i], p[i + 1]));
                }
            }
            let mut banned_nodes = vec![false; n];
            for &v in &root[..i] {
                banned_nodes[v.index()] = true;
            }
            let Some((_, spur)) = dijkstra(topo, last[i], dst, &banned_nodes, &banned_edges) else {
                continue;
            };
            let mut path = root.to_vec();
            path.extend_from_slice(&spur[1..]);
            let cost = path_delay_units(topo, &path).expect("path over up links");
            if !found.iter().any(|(_, p)| *p == path) {
                candidates.insert((cost, path));
            }
        }
        match candidates.pop_first() {
            Some(c) if c.0 as f64 <= bound => found.push(c),
            _ => break,
        }
    }
    found.sort();
    Ok(found.into_iter().map(|(_, p)| p).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use hcte_core::topology::load_topology;

    fn names(t: &Topology, ps: &[Vec<NodeId>]) -> Vec<String> {
        ps.iter()
            .map(|p| p.iter().map(|&n| t.name(n)).collect::<Vec<_>>().join("-"))
            .collect()
    }

    #[test]
    fn line_has_one_path() {
        let t = load_topology("node A\nnode B\nnode C\nbidi A B 1G 1ms\nbidi B C 1G 1ms\n").unwrap();
        let p = enumerate_paths(&t, NodeId(0), NodeId(2), 64, 6.0).unwrap();
        assert_eq!(names(&t, &p), vec!["A-B-C"]);
    }

    #[test]
    fn disconnected_pair_is_an_error() {
        let t = load_topology("node A\nnode B\nnode C\nbidi A B 1G 1ms\n").unwrap();
        assert!(enumerate_paths(&t, NodeId(0), NodeId(2), 64, 6.0).is_err());
    }

    #[test]
    fn stretch_and_limit_bound_the_set() {
        let t = load_topology(
            "node S\nnode A\nnode B\nnode C\nnode D\nbidi S A 1G 1ms\nbidi A D 1G 1ms\nbidi S B 1G 2ms\nbidi B D 1G 2ms\nbidi S C 1G 10ms\nbidi C D 1G 10ms\n",
        )
        .unwrap();
        let all = enumerate_paths(&t, NodeId(0), NodeId(4), 64, 100.0).unwrap();
        assert_eq!(names(&t, &all), vec!["S-A-D", "S-B-D", "S-C-D"]);
        let short = enumerate_paths(&t, NodeId(0), NodeId(4), 64, 3.0).unwrap();
        assert_eq!(short.len(), 2);
        let one = enumerate_paths(&t, NodeId(0), NodeId(4), 1, 100.0).unwrap();
        assert_eq!(one.len(), 1);
    }
}
