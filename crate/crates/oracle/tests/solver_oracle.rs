use hcte_core::topology::load_topology;
use hcte_core::{NodeId, Topology};
use hcte_oracle::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const ABILENE: &str = include_str!("../../../data/abilene.topo");

fn node(t: &Topology, n: &str) -> NodeId {
    t.node(n).unwrap()
}

fn names(t: &Topology, p: &[NodeId]) -> String {
    p.iter().map(|&n| t.name(n)).collect::<Vec<_>>().join("-")
}

#[test]
fn single_link_rate_reaches_capacity() {
    let t = load_topology("node A\nnode B\nbidi A B 100M 5ms\n").unwrap();
    let p = McfProblem::from_topology(&t, &[(NodeId(0), NodeId(1))], DEFAULT_GAMMA, 64, 6.0).unwrap();
    let s = solve(&p).unwrap();
    assert!(s.x[0] <= 100e6);
    assert!((s.x[0] - 100e6).abs() / 100e6 < 1e-4, "x = {}", s.x[0]);
    assert!(kkt_check(&p, &s).unwrap().ok());
}

#[test]
fn two_pairs_split_a_shared_link_evenly() {
    let t = load_topology(
        "node A\nnode B\nnode M\nnode N\nnode D\nbidi A M 1G 1ms\nbidi B M 1G 1ms\nbidi M N 100M 1ms\nbidi N D 1G 1ms\n",
    )
    .unwrap();
    let pairs = [(node(&t, "A"), node(&t, "D")), (node(&t, "B"), node(&t, "D"))];
    let p = McfProblem::from_topology(&t, &pairs, DEFAULT_GAMMA, 64, 6.0).unwrap();
    let s = solve(&p).unwrap();
    for x in &s.x {
        assert!((x - 50e6).abs() < 50e6 * 1e-4, "x = {x}");
    }
    // Two-variable grid search agrees.
    let prog = Program::new(&p).unwrap();
    let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
    for a in 1..1000 {
        for b in 1..(1000 - a) {
            let y = [a as f64 * 0.1, b as f64 * 0.1];
            let v = prog.value(&y);
            if v > best.0 {
                best = (v, y[0], y[1]);
            }
        }
    }
    assert!((best.1 - 50.0).abs() <= 0.1 && (best.2 - 50.0).abs() <= 0.1);
}

#[test]
fn abilene_paths_include_the_three_into_in() {
    let t = load_topology(ABILENE).unwrap();
    let ps = enumerate_paths(&t, node(&t, "SV"), node(&t, "IN"), DEFAULT_PATH_LIMIT, DEFAULT_STRETCH).unwrap();
    let ps: Vec<String> = ps.iter().map(|p| names(&t, p)).collect();
    assert_eq!(ps[0], "SV-DV-KC-IN");
    for want in ["SV-DV-KC-HOU-ATL-IN", "SV-DV-KC-HOU-ATL-DC-NY-CH-IN"] {
        assert!(ps.iter().any(|p| p == want), "missing {want}");
    }
}

fn abilene_problem(gamma: f64) -> McfProblem {
    let t = load_topology(ABILENE).unwrap();
    McfProblem::from_topology(
        &t,
        &[(node(&t, "SV"), node(&t, "IN"))],
        gamma,
        DEFAULT_PATH_LIMIT,
        DEFAULT_STRETCH,
    )
    .unwrap()
}

#[test]
fn abilene_optimum_fills_the_three_bottlenecks() {
    let p = abilene_problem(DEFAULT_GAMMA);
    let s = solve(&p).unwrap();
    assert!((s.x[0] - 400e6).abs() / 400e6 < 1e-3, "x = {}", s.x[0]);
    for (l, link) in p.links.iter().enumerate() {
        assert!(s.f[l] <= link.capacity);
    }
    assert!(kkt_check(&p, &s).unwrap().ok());
}

#[test]
fn halving_gamma_barely_moves_rates() {
    let a = solve(&abilene_problem(DEFAULT_GAMMA)).unwrap();
    let b = solve(&abilene_problem(DEFAULT_GAMMA / 2.0)).unwrap();
    for (x, y) in a.x.iter().zip(&b.x) {
        assert!((x - y).abs() / x < 0.01);
    }
}

#[test]
fn perturbed_optimum_is_flagged() {
    let t = load_topology(
        "node S\nnode A\nnode B\nnode D\nbidi S A 10M 1ms\nbidi A D 10M 1ms\nbidi S B 20M 2ms\nbidi B D 20M 2ms\n",
    )
    .unwrap();
    let p = McfProblem::from_topology(&t, &[(NodeId(0), NodeId(3))], DEFAULT_GAMMA, 64, 6.0).unwrap();
    let s = solve(&p).unwrap();
    assert!(kkt_check(&p, &s).unwrap().ok());
    let mut bad = s.clone();
    bad.y[0][1] *= 0.9;
    assert!(!kkt_check(&p, &bad).unwrap().ok());
    let mut over = s.clone();
    over.y[0][0] *= 1.1;
    assert!(!kkt_check(&p, &over).unwrap().ok());
}

#[test]
fn solution_text_round_trip() {
    let p = abilene_problem(DEFAULT_GAMMA);
    let mut s = solve(&p).unwrap();
    s.fingerprint = Some("abc".into());
    let back = McfSolution::parse(&s.to_text(&p), &p).unwrap();
    assert_eq!(back.fingerprint, s.fingerprint);
    assert_eq!(back.converged, s.converged);
    for (a, b) in back.x.iter().zip(&s.x) {
        assert!((a - b).abs() <= 1e-9 * b.abs());
    }
    assert!(kkt_check(&p, &back).unwrap().ok());
}

#[test]
fn optimum_compared_with_itself_is_unity() {
    let p = abilene_problem(DEFAULT_GAMMA);
    let s = solve(&p).unwrap();
    let m = RunMetrics::from_solution(&p, &s, 10, 1460.0 / 1500.0);
    let r = compare(&m, &m).unwrap();
    assert_eq!((r.completion_ratio, r.throughput_fraction, r.rtt_ratio), (1.0, 1.0, 1.0));
    let mut other = m.clone();
    other.fingerprint = Some("x".into());
    let mut base = m;
    base.fingerprint = Some("y".into());
    assert!(compare(&other, &base).is_err());
}

/// Exhaustive simple-path enumeration by depth-first search.
fn dfs_paths(t: &Topology, at: NodeId, dst: NodeId, seen: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
    if at == dst {
        out.push(seen.clone());
        return;
    }
    for (_, l) in t.up_out_links(at) {
        if !seen.contains(&l.dst) {
            seen.push(l.dst);
            dfs_paths(t, l.dst, dst, seen, out);
            seen.pop();
        }
    }
}

#[test]
fn k4_enumeration_matches_depth_first_search() {
    let t = load_topology(
        "node A\nnode B\nnode C\nnode D\nbidi A B 1G 1ms\nbidi A C 1G 2ms\nbidi A D 1G 4ms\nbidi B C 1G 3ms\nbidi B D 1G 5ms\nbidi C D 1G 6ms\n",
    )
    .unwrap();
    for s in t.nodes() {
        for d in t.nodes().filter(|&d| d != s) {
            let mut want = Vec::new();
            dfs_paths(&t, s, d, &mut vec![s], &mut want);
            let delay = |p: &Vec<NodeId>| hcte_oracle::paths::path_delay_units(&t, p).unwrap();
            want.sort_by(|a, b| delay(a).cmp(&delay(b)).then(a.cmp(b)));
            let got = enumerate_paths(&t, s, d, 1000, 1000.0).unwrap();
            assert_eq!(got, want);
        }
    }
}

/// Random instance with at most three path variables in total.
fn tiny_instance(rng: &mut ChaCha8Rng) -> McfProblem {
    loop {
        let n = rng.gen_range(3..=6);
        let mut text = String::new();
        for i in 0..n {
            text += &format!("node N{i}\n");
        }
        let mut edges = Vec::new();
        for i in 1..n {
            edges.push((rng.gen_range(0..i), i));
        }
        for _ in 0..rng.gen_range(0..4) {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if a != b && !edges.iter().any(|&e| e == (a, b) || e == (b, a)) {
                edges.push((a, b));
            }
        }
        for (a, b) in edges {
            let cap = [10, 20, 50, 100][rng.gen_range(0..4)];
            text += &format!("bidi N{a} N{b} {cap}M {}ms\n", rng.gen_range(1..20));
        }
        let t = load_topology(&text).unwrap();
        let npairs = rng.gen_range(1..=2);
        let mut pairs = Vec::new();
        while pairs.len() < npairs {
            let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if a != b {
                pairs.push((NodeId(a as u32), NodeId(b as u32)));
            }
        }
        let limit = rng.gen_range(1..=3);
        let Ok(mut p) = McfProblem::from_topology(&t, &pairs, DEFAULT_GAMMA, limit, 6.0) else {
            continue;
        };
        while p.path_count() > 3 {
            let i = (0..p.paths.len()).max_by_key(|&i| p.paths[i].len()).unwrap();
            p.paths[i].pop();
        }
        return p;
    }
}

/// Dense grid over the box `[0, cap]^k`, refined three times around the
/// best feasible point.
fn grid_search(prog: &Program) -> f64 {
    let k = prog.npaths();
    let hi: Vec<f64> = (0..k)
        .map(|j| prog.path_links[j].iter().map(|&l| prog.cap[l]).fold(f64::INFINITY, f64::min))
        .collect();
    let mut lo_b = vec![0.0; k];
    let mut hi_b = hi.clone();
    let mut best = (f64::NEG_INFINITY, vec![0.0; k]);
    let steps = 80usize;
    for _ in 0..4 {
        let total = (steps + 1).pow(k as u32);
        for idx in 0..total {
            let mut r = idx;
            let y: Vec<f64> = (0..k)
                .map(|j| {
                    let s = r % (steps + 1);
                    r /= steps + 1;
                    lo_b[j] + (hi_b[j] - lo_b[j]) * s as f64 / steps as f64
                })
                .collect();
            let feasible = prog
                .link_flows(&y)
                .iter()
                .zip(&prog.cap)
                .all(|(f, c)| *f <= *c);
            if feasible && prog.pair_rates(&y).iter().all(|&x| x > 0.0) {
                let v = prog.value(&y);
                if v > best.0 {
                    best = (v, y);
                }
            }
        }
        for j in 0..k {
            let w = (hi_b[j] - lo_b[j]) / steps as f64 * 2.0;
            lo_b[j] = (best.1[j] - w).max(0.0);
            hi_b[j] = (best.1[j] + w).min(hi[j]);
        }
    }
    best.0
}

#[test]
fn tiny_instances_match_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..50 {
        let p = tiny_instance(&mut rng);
        let s = solve(&p).unwrap();
        let prog = Program::new(&p).unwrap();
        let grid = grid_search(&prog);
        let rel = (s.objective - grid) / grid.abs();
        assert!(rel > -0.005, "case {case}: solver {} grid {grid}", s.objective);
        let report = kkt_check(&p, &s).unwrap();
        assert!(report.ok(), "case {case}: {:?}", report.violations);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), frac in proptest::collection::vec(0.05f64..0.3, 3)) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = tiny_instance(&mut rng);
        let prog = Program::new(&p).unwrap();
        let y: Vec<f64> = (0..prog.npaths()).map(|j| frac[j] * 10.0).collect();
        let g = prog.gradient(&y);
        for j in 0..y.len() {
            let h = 1e-4 * y[j];
            let (mut a, mut b) = (y.clone(), y.clone());
            a[j] += h;
            b[j] -= h;
            let fd = (prog.value(&a) - prog.value(&b)) / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-6 * g[j].abs().max(1e-12), "{} vs {}", fd, g[j]);
        }
    }

    #[test]
    fn more_paths_never_lower_the_optimum(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 6;
        let mut text: String = (0..n).map(|i| format!("node N{i}\n")).collect();
        for i in 0..n {
            for j in i + 1..n {
                if rng.gen_bool(0.6) || j == i + 1 {
                    text += &format!("bidi N{i} N{j} {}M {}ms\n", [10, 40, 100][rng.gen_range(0..3)], rng.gen_range(1..10));
                }
            }
        }
        let t = load_topology(&text).unwrap();
        let pairs = [(NodeId(0), NodeId(5)), (NodeId(1), NodeId(4))];
        let small = McfProblem::from_topology(&t, &pairs, DEFAULT_GAMMA, 2, 6.0).unwrap();
        let large = McfProblem::from_topology(&t, &pairs, DEFAULT_GAMMA, 8, 6.0).unwrap();
        let a = solve(&small).unwrap().objective;
        let b = solve(&large).unwrap().objective;
        prop_assert!(b >= a - 1e-7 * a.abs(), "{} < {}", b, a);
    }
}
