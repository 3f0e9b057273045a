//! Turns a scenario into a simulation or an optimum and reports the results.

use std::fmt::Write as _;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use hcte_core::baselines::SchemeId;
use hcte_core::metrics::TimeSeries;
use hcte_core::packet::{DATA_PAYLOAD, DATA_SIZE};
use hcte_core::sim::{SimConfig, Simulator};
use hcte_core::topology::load_topology;
use hcte_core::{NodeId, SimTime, Topology};
use hcte_oracle::{solve, McfProblem, McfSolution, RunMetrics, SolveError};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::randtopo::random_topology;
use crate::scenario::{PairSpec, Scenario, Scheme, TopologySource};

/// Fraction of link-layer rate delivered as payload by full DATA packets.
pub const GOODPUT_FRACTION: f64 = DATA_PAYLOAD as f64 / DATA_SIZE as f64;

const TOPOLOGY_STREAM: u64 = 1;
const PAIR_STREAM: u64 = 2;

/// A scenario resolved against its topology.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub topo: Topology,
    pub pairs: Vec<(NodeId, NodeId)>,
    pub failures: Vec<(SimTime, NodeId, NodeId, bool)>,
    /// SHA-256 over the canonical scenario (without scheme) and topology.
    pub fingerprint: String,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

pub fn prepare(s: &Scenario) -> Result<Prepared> {
    s.validate()?;
    let topo = match &s.topology {
        TopologySource::File(p) => {
            let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            load_topology(&text).with_context(|| format!("parsing {}", p.display()))?
        }
        TopologySource::Random {
            min_nodes,
            max_nodes,
            capacities,
        } => random_topology(&mut stream(s.seed, TOPOLOGY_STREAM), *min_nodes, *max_nodes, capacities),
    };
    let node = |n: &str| topo.node(n).ok_or_else(|| anyhow!("unknown node `{n}`"));
    let pairs = match &s.pairs {
        PairSpec::Explicit(ps) => ps
            .iter()
            .map(|(a, b)| {
                let (a, b) = (node(a)?, node(b)?);
                if a == b {
                    bail!("pair {} {} has identical endpoints", topo.name(a), topo.name(b));
                }
                Ok((a, b))
            })
            .collect::<Result<Vec<_>>>()?,
        PairSpec::Random(n) => {
            let eligible: Vec<NodeId> = topo.nodes().filter(|&v| topo.physical_degree(v) >= 2).collect();
            let mut all = Vec::new();
            for &a in &eligible {
                for &b in &eligible {
                    if a != b {
                        all.push((a, b));
                    }
                }
            }
            if all.len() < *n {
                bail!("only {} eligible pairs for pairs_random {n}", all.len());
            }
            let mut rng = stream(s.seed, PAIR_STREAM);
            all.choose_multiple(&mut rng, *n).copied().collect()
        }
    };
    let failures = s
        .failures
        .iter()
        .map(|f| {
            let (a, b) = (node(&f.a)?, node(&f.b)?);
            if topo.link_between(a, b).is_none() {
                bail!("no link between {} and {}", f.a, f.b);
            }
            Ok((SimTime::from_secs_f64(f.at), a, b, f.up))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut h = Sha256::new();
    h.update(s.to_text(true).as_bytes());
    h.update(b"\n--\n");
    h.update(topo.serialize().as_bytes());
    Ok(Prepared {
        topo,
        pairs,
        failures,
        fingerprint: hex::encode(h.finalize()),
    })
}

/// A simulator with all flows, rate changes and failures of the scenario
/// scheduled. Flow ids are pair-major: flow `i * flows_per_pair + j`
/// belongs to pair `i`.
pub fn build_simulator(s: &Scenario, prep: &Prepared, scheme: SchemeId) -> Result<Simulator> {
    let cfg = SimConfig {
        scheme,
        metric: s.metric,
        seed: s.seed,
        ..SimConfig::default()
    };
    let mut sim = Simulator::new(prep.topo.clone(), cfg);
    let k = s.flows_per_pair;
    for &(a, b) in &prep.pairs {
        for _ in 0..k {
            sim.add_flow(a, b, s.demand, SimTime::ZERO)?;
        }
    }
    let mut rates = s.rates.clone();
    rates.sort_by(|x, y| x.at.total_cmp(&y.at));
    for r in &rates {
        for f in 0..(prep.pairs.len() * k) as u32 {
            sim.set_flow_rate(SimTime::from_secs_f64(r.at), f, r.rate.map(|v| v / k as f64))?;
        }
    }
    for &(at, a, b, up) in &prep.failures {
        sim.schedule_link_state(at, a, b, up)?;
    }
    Ok(sim)
}

/// One summary line of a run.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRecord {
    pub fingerprint: String,
    pub scheme: Scheme,
    pub seed: u64,
    /// Goodput over the measurement window, bit/s.
    pub total_throughput: f64,
    /// Mean over flows of the 10 MB completion time, seconds.
    pub avg_completion: f64,
    /// Mean RTT over all acknowledged packets, seconds.
    pub avg_rtt: Option<f64>,
    pub pair_throughput: Vec<f64>,
}

pub const SUMMARY_HEADER: &str =
    "fingerprint,scheme,seed,total_throughput_bps,avg_completion_s,avg_rtt_s,pair_throughput_bps";

impl SummaryRecord {
    pub fn csv_line(&self) -> String {
        let pairs: Vec<String> = self.pair_throughput.iter().map(|v| v.to_string()).collect();
        format!(
            "{},{},{},{},{},{},{}",
            self.fingerprint,
            self.scheme,
            self.seed,
            self.total_throughput,
            self.avg_completion,
            self.avg_rtt.map(|v| v.to_string()).unwrap_or_default(),
            pairs.join(";")
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.trim().split(',').collect();
        if f.len() < 7 {
            bail!("summary line has {} fields, expected 7", f.len());
        }
        let num = |v: &str| v.parse::<f64>().with_context(|| format!("bad number `{v}`"));
        Ok(SummaryRecord {
            fingerprint: f[0].to_string(),
            scheme: f[1].parse().map_err(|e: String| anyhow!(e))?,
            seed: f[2].parse().context("bad seed")?,
            total_throughput: num(f[3])?,
            avg_completion: num(f[4])?,
            avg_rtt: if f[5].is_empty() { None } else { Some(num(f[5])?) },
            pair_throughput: if f[6].is_empty() {
                Vec::new()
            } else {
                f[6].split(';').map(num).collect::<Result<_>>()?
            },
        })
    }

    pub fn metrics(&self) -> RunMetrics {
        RunMetrics {
            total_throughput: self.total_throughput,
            avg_completion: self.avg_completion,
            avg_rtt: self.avg_rtt.unwrap_or(f64::NAN),
            fingerprint: Some(self.fingerprint.clone()),
        }
    }
}

/// Reads every record of a summary file (header optional).
pub fn read_summary(text: &str) -> Result<Vec<SummaryRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.starts_with("fingerprint,"))
        .map(SummaryRecord::parse_csv_line)
        .collect()
}

pub struct RunOutput {
    pub summary: SummaryRecord,
    pub topo: Topology,
    /// Endpoints of every flow.
    pub flows: Vec<(NodeId, NodeId)>,
    pub series: Option<TimeSeries>,
    pub optimum: Option<(McfProblem, McfSolution)>,
}

/// The topology as it stands at `at`, after earlier scheduled failures.
fn topology_at(prep: &Prepared, at: SimTime) -> Topology {
    let mut t = prep.topo.clone();
    let mut fs = prep.failures.clone();
    fs.sort_by_key(|f| f.0);
    for (when, a, b, up) in fs {
        if when <= at {
            t.set_link_state(a, b, up).expect("validated link");
        }
    }
    t
}

pub fn solve_optimum(s: &Scenario, prep: &Prepared) -> Result<(McfProblem, McfSolution)> {
    let topo = topology_at(prep, SimTime::from_secs_f64(s.measure_from));
    let problem = McfProblem::from_topology(&topo, &prep.pairs, s.gamma, s.path_limit, s.stretch)?;
    let mut sol = match solve(&problem) {
        Ok(sol) => sol,
        Err(SolveError::NotConverged(best)) => *best,
        Err(e) => return Err(e.into()),
    };
    sol.fingerprint = Some(prep.fingerprint.clone());
    Ok((problem, sol))
}

pub fn run_scenario(s: &Scenario) -> Result<RunOutput> {
    let prep = prepare(s)?;
    run_prepared(s, &prep)
}

pub fn run_prepared(s: &Scenario, prep: &Prepared) -> Result<RunOutput> {
    let k = s.flows_per_pair;
    let flows: Vec<(NodeId, NodeId)> = prep
        .pairs
        .iter()
        .flat_map(|&p| std::iter::repeat_n(p, k))
        .collect();
    match s.scheme {
        Scheme::Opt => {
            let (problem, sol) = solve_optimum(s, prep)?;
            let m = RunMetrics::from_solution(&problem, &sol, k, GOODPUT_FRACTION);
            let summary = SummaryRecord {
                fingerprint: prep.fingerprint.clone(),
                scheme: Scheme::Opt,
                seed: s.seed,
                total_throughput: m.total_throughput,
                avg_completion: m.avg_completion,
                avg_rtt: Some(m.avg_rtt),
                pair_throughput: sol.x.iter().map(|x| x * GOODPUT_FRACTION).collect(),
            };
            Ok(RunOutput {
                summary,
                topo: prep.topo.clone(),
                flows,
                series: None,
                optimum: Some((problem, sol)),
            })
        }
        Scheme::Sim(id) => {
            let mut sim = build_simulator(s, prep, id)?;
            if let Some(p) = &s.trace {
                let f = File::create(p).with_context(|| format!("creating {}", p.display()))?;
                sim.set_trace(Box::new(BufWriter::new(f)));
            }
            sim.run(SimTime::from_secs_f64(s.measure_from));
            sim.begin_window();
            sim.run(SimTime::from_secs_f64(s.duration));
            sim.finish_trace().context("writing trace")?;
            let w = sim.window();
            let per_flow = w.flow_throughputs();
            let summary = SummaryRecord {
                fingerprint: prep.fingerprint.clone(),
                scheme: s.scheme,
                seed: s.seed,
                total_throughput: w.total_throughput(),
                avg_completion: w.avg_completion(),
                avg_rtt: w.avg_rtt(),
                pair_throughput: per_flow.chunks(k).map(|c| c.iter().sum()).collect(),
            };
            Ok(RunOutput {
                summary,
                topo: prep.topo.clone(),
                flows,
                series: Some(sim.series().clone()),
                optimum: None,
            })
        }
    }
}

pub const FLOWS_HEADER: &str = "t_s,flow,src,dst,throughput_bps,rtt_s";
pub const SPLITS_HEADER: &str = "t_s,router,dst,nexthop,ratio";

pub fn flows_csv(out: &RunOutput) -> String {
    let mut s = String::from(FLOWS_HEADER);
    s.push('\n');
    if let Some(series) = &out.series {
        for f in &series.flows {
            let (a, b) = out.flows[f.flow as usize];
            writeln!(
                s,
                "{},{},{},{},{},{}",
                f.t,
                f.flow,
                out.topo.name(a),
                out.topo.name(b),
                f.throughput_bps,
                f.rtt_mean.map(|v| v.to_string()).unwrap_or_default()
            )
            .unwrap();
        }
    }
    s
}

pub fn splits_csv(out: &RunOutput) -> String {
    let mut s = String::from(SPLITS_HEADER);
    s.push('\n');
    if let Some(series) = &out.series {
        for r in &series.splits {
            writeln!(
                s,
                "{},{},{},{},{}",
                r.t,
                out.topo.name(r.router),
                out.topo.name(r.dst),
                out.topo.name(r.nexthop),
                r.ratio
            )
            .unwrap();
        }
    }
    s
}

/// Writes `summary.csv`, and `flows.csv` plus `splits.csv` for simulated
/// schemes or `problem.txt` plus `solution.txt` for OPT.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let w = |name: &str, body: String| {
        let p = dir.join(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))
    };
    w("summary.csv", format!("{SUMMARY_HEADER}\n{}\n", out.summary.csv_line()))?;
    if out.series.is_some() {
        w("flows.csv", flows_csv(out))?;
        w("splits.csv", splits_csv(out))?;
    }
    if let Some((p, sol)) = &out.optimum {
        w("problem.txt", p.to_text())?;
        w("solution.txt", sol.to_text(p))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_csv_round_trip() {
        let r = SummaryRecord {
            fingerprint: "ab12".into(),
            scheme: Scheme::Sim(SchemeId::Ecmp),
            seed: 4,
            total_throughput: 1.5e8,
            avg_completion: 0.533,
            avg_rtt: None,
            pair_throughput: vec![1e8, 5e7],
        };
        let back = read_summary(&format!("{SUMMARY_HEADER}\n{}\n", r.csv_line())).unwrap();
        assert_eq!(back, vec![r]);
    }
}
