//! Seeded random topologies: nodes scattered over a continent-sized box,
//! a nearest-neighbour spanning tree plus short chords, capacities drawn
//! from tiers.

use hcte_core::topology::{geo_delay, GeoCoord};
use hcte_core::{NodeId, Topology};
use rand::seq::SliceRandom;
use rand::Rng;

/// Builds a connected topology with `min..=max` nodes. Every link's delay
/// follows the great-circle distance of its endpoints.
pub fn random_topology<R: Rng>(rng: &mut R, min: usize, max: usize, capacities: &[f64]) -> Topology {
    let n = rng.gen_range(min..=max);
    let mut t = Topology::new();
    let mut coords = Vec::with_capacity(n);
    for i in 0..n {
        let g = GeoCoord {
            lat: rng.gen_range(30.0..48.0),
            lon: rng.gen_range(-122.0..-72.0),
        };
        coords.push(g);
        t.add_node(&format!("R{i}"), Some(g)).expect("unique names");
    }
    let dist = |a: usize, b: usize| geo_delay(coords[a], coords[b]);
    // Geographic tree: every node joins its nearest predecessor in a random
    // order.
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for k in 1..n {
        let v = order[k];
        let u = order[..k]
            .iter()
            .copied()
            .min_by(|&x, &y| dist(x, v).total_cmp(&dist(y, v)))
            .expect("k >= 1");
        edges.push((u, v));
    }
    // Chords drawn from the shortest missing node pairs.
    let mut missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .filter(|&(a, b)| !edges.iter().any(|&e| e == (a, b) || e == (b, a)))
        .collect();
    missing.sort_by(|x, y| dist(x.0, x.1).total_cmp(&dist(y.0, y.1)));
    missing.truncate(2 * n);
    let extra = (n / 2 + rng.gen_range(0..=n / 2)).min(missing.len());
    edges.extend(missing.choose_multiple(rng, extra).copied());
    for (a, b) in edges {
        let cap = capacities[rng.gen_range(0..capacities.len())];
        let delay = geo_delay(coords[a], coords[b]).max(1e-4);
        t.add_bidi(NodeId(a as u32), NodeId(b as u32), cap, delay)
            .expect("fresh edge");
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use hcte_core::routing::{Metric, RoutingState};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn connected_and_reproducible() {
        for seed in 0..20 {
            let caps = [100e6, 200e6, 500e6];
            let a = random_topology(&mut ChaCha8Rng::seed_from_u64(seed), 10, 14, &caps);
            let b = random_topology(&mut ChaCha8Rng::seed_from_u64(seed), 10, 14, &caps);
            assert_eq!(a.serialize(), b.serialize());
            assert!((10..=14).contains(&a.node_count()));
            let r = RoutingState::downward(&a, Metric::Delay);
            for s in a.nodes() {
                for d in a.nodes() {
                    assert!(r.distances().get(s, d).is_finite());
                }
            }
            assert!(a.links().iter().all(|l| caps.contains(&l.capacity)));
        }
    }
}
