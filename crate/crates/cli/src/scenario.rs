//! Scenario files: line-oriented `key value...` text.
//!
//! ```text
//! topology       data/abilene.topo       # path, relative to the scenario file
//! random_nodes   10 14                   # instead of `topology`: random graph
//! random_capacities 100M 200M 500M       # capacity tiers of the random graph
//! scheme         HCTE                    # SP | INVCAP | ECMP | HCTE | OPT
//! pair           SV IN                   # repeatable
//! pairs_random   5                       # instead of `pair`
//! flows_per_pair 10
//! demand         infinite                # or `bytes <n>`
//! rate           0 30M                   # per-pair rate from t = 0 s; `inf` lifts the limit
//! failure        300 ATL IN down         # or `up`
//! duration       450
//! measure_from   200                     # start of the summary window
//! seed           1
//! metric         delay                   # delay | hop
//! trace          trace.csv               # optional per-packet trace
//! gamma          1e-9                    # OPT only
//! path_limit     64                      # OPT only
//! stretch        6                       # OPT only
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use hcte_core::baselines::SchemeId;
use hcte_core::routing::Metric;
use hcte_core::topology::parse_capacity;
use hcte_core::transport::Demand;
use hcte_oracle::{DEFAULT_GAMMA, DEFAULT_PATH_LIMIT, DEFAULT_STRETCH};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scheme {
    Sim(SchemeId),
    Opt,
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Scheme::Sim(s) => s.fmt(f),
            Scheme::Opt => f.write_str("OPT"),
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        if s.eq_ignore_ascii_case("opt") {
            Ok(Scheme::Opt)
        } else {
            s.parse().map(Scheme::Sim)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TopologySource {
    File(PathBuf),
    Random {
        min_nodes: usize,
        max_nodes: usize,
        capacities: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub enum PairSpec {
    Explicit(Vec<(String, String)>),
    Random(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateStep {
    /// Seconds.
    pub at: f64,
    /// Per-pair bit/s; `None` means unlimited.
    pub rate: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub at: f64,
    pub a: String,
    pub b: String,
    pub up: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub topology: TopologySource,
    pub scheme: Scheme,
    pub pairs: PairSpec,
    pub flows_per_pair: usize,
    pub demand: Demand,
    pub rates: Vec<RateStep>,
    pub failures: Vec<Failure>,
    pub duration: f64,
    pub measure_from: f64,
    pub seed: u64,
    pub metric: Metric,
    pub trace: Option<PathBuf>,
    pub gamma: f64,
    pub path_limit: usize,
    pub stretch: f64,
}

#[derive(Debug, Error, PartialEq)]
pub enum ScenarioError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

fn perr(line: usize, msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Parse {
        line,
        msg: msg.into(),
    }
}

fn fmt_rate(r: Option<f64>) -> String {
    r.map_or_else(|| "inf".to_string(), |v| v.to_string())
}

impl Scenario {
    /// Defaults for everything but the topology and pairs.
    pub fn new(topology: TopologySource, pairs: PairSpec) -> Self {
        Scenario {
            topology,
            scheme: Scheme::Sim(SchemeId::Hcte),
            pairs,
            flows_per_pair: 10,
            demand: Demand::Infinite,
            rates: Vec::new(),
            failures: Vec::new(),
            duration: 100.0,
            measure_from: 0.0,
            seed: 1,
            metric: Metric::Delay,
            trace: None,
            gamma: DEFAULT_GAMMA,
            path_limit: DEFAULT_PATH_LIMIT,
            stretch: DEFAULT_STRETCH,
        }
    }

    /// Parses scenario text. Relative file paths resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self, ScenarioError> {
        let mut topology = None;
        let mut rnodes = None;
        let mut rcaps = None;
        let mut pairs = Vec::new();
        let mut random_pairs = None;
        let mut s = Scenario::new(TopologySource::File(PathBuf::new()), PairSpec::Random(0));
        for (i, raw) in text.lines().enumerate() {
            let ln = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            let t: Vec<&str> = line.split_whitespace().collect();
            let Some(&key) = t.first() else { continue };
            let num = |v: &str| v.parse::<f64>().map_err(|_| perr(ln, format!("bad number `{v}`")));
            let int = |v: &str| v.parse::<u64>().map_err(|_| perr(ln, format!("bad integer `{v}`")));
            let cap = |v: &str| parse_capacity(v).ok_or_else(|| perr(ln, format!("bad rate `{v}`")));
            let want = |n: usize| {
                if t.len() == n + 1 {
                    Ok(())
                } else {
                    Err(perr(ln, format!("`{key}` takes {n} value(s)")))
                }
            };
            match key {
                "topology" => {
                    want(1)?;
                    topology = Some(base.join(t[1]));
                }
                "random_nodes" => {
                    want(2)?;
                    rnodes = Some((int(t[1])? as usize, int(t[2])? as usize));
                }
                "random_capacities" => {
                    if t.len() < 2 {
                        return Err(perr(ln, "`random_capacities` needs at least one tier"));
                    }
                    rcaps = Some(t[1..].iter().map(|v| cap(v)).collect::<Result<Vec<_>, _>>()?);
                }
                "scheme" => {
                    want(1)?;
                    s.scheme = t[1].parse().map_err(|e: String| perr(ln, e))?;
                }
                "pair" => {
                    want(2)?;
                    pairs.push((t[1].to_string(), t[2].to_string()));
                }
                "pairs_random" => {
                    want(1)?;
                    random_pairs = Some(int(t[1])? as usize);
                }
                "flows_per_pair" => {
                    want(1)?;
                    s.flows_per_pair = int(t[1])? as usize;
                }
                "demand" => {
                    s.demand = match (t.get(1).copied(), t.len()) {
                        (Some("infinite"), 2) => Demand::Infinite,
                        (Some("bytes"), 3) => Demand::Bytes(int(t[2])?),
                        _ => return Err(perr(ln, "expected `demand infinite` or `demand bytes <n>`")),
                    };
                }
                "rate" => {
                    want(2)?;
                    let rate = if t[2] == "inf" { None } else { Some(cap(t[2])?) };
                    s.rates.push(RateStep { at: num(t[1])?, rate });
                }
                "failure" => {
                    want(4)?;
                    let up = match t[4] {
                        "down" => false,
                        "up" => true,
                        other => return Err(perr(ln, format!("expected `up` or `down`, got `{other}`"))),
                    };
                    s.failures.push(Failure {
                        at: num(t[1])?,
                        a: t[2].to_string(),
                        b: t[3].to_string(),
                        up,
                    });
                }
                "duration" => {
                    want(1)?;
                    s.duration = num(t[1])?;
                }
                "measure_from" => {
                    want(1)?;
                    s.measure_from = num(t[1])?;
                }
                "seed" => {
                    want(1)?;
                    s.seed = int(t[1])?;
                }
                "metric" => {
                    want(1)?;
                    s.metric = t[1].parse().map_err(|e: String| perr(ln, e))?;
                }
                "trace" => {
                    want(1)?;
                    s.trace = Some(base.join(t[1]));
                }
                "gamma" => {
                    want(1)?;
                    s.gamma = num(t[1])?;
                }
                "path_limit" => {
                    want(1)?;
                    s.path_limit = int(t[1])? as usize;
                }
                "stretch" => {
                    want(1)?;
                    s.stretch = num(t[1])?;
                }
                other => return Err(perr(ln, format!("unknown key `{other}`"))),
            }
        }
        s.topology = match (topology, rnodes) {
            (Some(p), None) => TopologySource::File(p),
            (None, Some((lo, hi))) => TopologySource::Random {
                min_nodes: lo,
                max_nodes: hi,
                capacities: rcaps.unwrap_or_else(|| vec![100e6, 200e6, 500e6]),
            },
            (Some(_), Some(_)) => {
                return Err(ScenarioError::Invalid("both `topology` and `random_nodes` given".into()))
            }
            (None, None) => return Err(ScenarioError::Invalid("no topology given".into())),
        };
        s.pairs = match (pairs.is_empty(), random_pairs) {
            (false, None) => PairSpec::Explicit(pairs),
            (true, Some(n)) => PairSpec::Random(n),
            (false, Some(_)) => {
                return Err(ScenarioError::Invalid("both `pair` and `pairs_random` given".into()))
            }
            (true, None) => return Err(ScenarioError::Invalid("no pairs given".into())),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| anyhow::anyhow!("reading {}: {e}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Ok(Self::parse(&text, base)?)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if !(self.duration > 0.0) {
            return bad("duration must be positive");
        }
        if !(0.0..self.duration).contains(&self.measure_from) {
            return bad("measure_from must lie in [0, duration)");
        }
        match &self.pairs {
            PairSpec::Explicit(p) if p.is_empty() => return bad("pairs must not be empty"),
            PairSpec::Random(0) => return bad("pairs must not be empty"),
            _ => {}
        }
        if self.flows_per_pair == 0 {
            return bad("flows_per_pair must be at least 1");
        }
        if let TopologySource::Random {
            min_nodes,
            max_nodes,
            capacities,
        } = &self.topology
        {
            if *min_nodes < 3 || min_nodes > max_nodes {
                return bad("random_nodes needs 3 <= min <= max");
            }
            if capacities.is_empty() {
                return bad("random_capacities must not be empty");
            }
        }
        if self.rates.iter().any(|r| r.at < 0.0 || r.rate.is_some_and(|v| v <= 0.0)) {
            return bad("rate steps need a non-negative time and a positive rate");
        }
        if self.failures.iter().any(|f| f.at < 0.0) {
            return bad("failure times must be non-negative");
        }
        if !(self.gamma >= 0.0) || self.path_limit == 0 || !(self.stretch >= 1.0) {
            return bad("gamma >= 0, path_limit >= 1 and stretch >= 1 required");
        }
        Ok(())
    }

    /// Canonical text. With `for_fingerprint`, the scheme and trace lines are
    /// left out and the topology is named only by its contents elsewhere.
    pub fn to_text(&self, for_fingerprint: bool) -> String {
        let mut s = String::new();
        match &self.topology {
            TopologySource::File(p) if !for_fingerprint => writeln!(s, "topology {}", p.display()).unwrap(),
            TopologySource::File(_) => {}
            TopologySource::Random {
                min_nodes,
                max_nodes,
                capacities,
            } => {
                writeln!(s, "random_nodes {min_nodes} {max_nodes}").unwrap();
                let caps: Vec<String> = capacities.iter().map(|c| c.to_string()).collect();
                writeln!(s, "random_capacities {}", caps.join(" ")).unwrap();
            }
        }
        if !for_fingerprint {
            writeln!(s, "scheme {}", self.scheme).unwrap();
        }
        match &self.pairs {
            PairSpec::Explicit(ps) => {
                for (a, b) in ps {
                    writeln!(s, "pair {a} {b}").unwrap();
                }
            }
            PairSpec::Random(n) => writeln!(s, "pairs_random {n}").unwrap(),
        }
        writeln!(s, "flows_per_pair {}", self.flows_per_pair).unwrap();
        match self.demand {
            Demand::Infinite => writeln!(s, "demand infinite").unwrap(),
            Demand::Bytes(b) => writeln!(s, "demand bytes {b}").unwrap(),
        }
        for r in &self.rates {
            writeln!(s, "rate {} {}", r.at, fmt_rate(r.rate)).unwrap();
        }
        for f in &self.failures {
            writeln!(s, "failure {} {} {} {}", f.at, f.a, f.b, if f.up { "up" } else { "down" }).unwrap();
        }
        writeln!(s, "duration {}", self.duration).unwrap();
        writeln!(s, "measure_from {}", self.measure_from).unwrap();
        writeln!(s, "seed {}", self.seed).unwrap();
        writeln!(s, "metric {}", self.metric).unwrap();
        if let (Some(t), false) = (&self.trace, for_fingerprint) {
            writeln!(s, "trace {}", t.display()).unwrap();
        }
        writeln!(s, "gamma {:e}", self.gamma).unwrap();
        writeln!(s, "path_limit {}", self.path_limit).unwrap();
        writeln!(s, "stretch {}", self.stretch).unwrap();
        s
    }
}
