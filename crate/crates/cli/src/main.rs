use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use hcte_cli::batch::run_batch;
use hcte_cli::runner::{read_summary, run_scenario, write_outputs, GOODPUT_FRACTION};
use hcte_cli::scenario::{Scenario, Scheme};
use hcte_core::routing::{Metric, RoutingState};
use hcte_core::topology::load_topology;
use hcte_oracle::{compare, solve, McfProblem, McfSolution, RunMetrics, SolveError};

#[derive(Parser)]
#[command(name = "hcte", version, about = "Packet-level simulator for hop-by-hop traffic engineering")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one scenario and write summary.csv, flows.csv and splits.csv
    /// (or problem.txt and solution.txt for OPT).
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Override the scenario's scheme.
        #[arg(long)]
        scheme: Option<Scheme>,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a scenario template over a range of seeds and several schemes.
    Batch {
        template: PathBuf,
        /// Inclusive range `a..b` or a single seed.
        #[arg(long, default_value = "1..100")]
        seeds: String,
        #[arg(long, value_delimiter = ',', default_value = "SP,INVCAP,ECMP,HCTE,OPT")]
        schemes: Vec<Scheme>,
        #[arg(long, default_value = "batch")]
        out: PathBuf,
        /// Worker threads (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Print the loop-free multipath forwarding table of a topology.
    FibDump {
        topology: PathBuf,
        #[arg(long, default_value = "delay")]
        metric: Metric,
    },
    /// Solve a stored optimisation problem and print the solution.
    Solve {
        problem: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Report a run's metrics relative to a stored optimum.
    Compare {
        summary: PathBuf,
        solution: PathBuf,
        /// Defaults to problem.txt next to the solution.
        #[arg(long)]
        problem: Option<PathBuf>,
        #[arg(long, default_value_t = 10)]
        flows_per_pair: usize,
    },
}

fn read(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn parse_seeds(s: &str) -> Result<Vec<u64>> {
    let bad = || anyhow!("bad seed range `{s}`, expected `a..b`");
    match s.split_once("..") {
        Some((a, b)) => {
            let (a, b): (u64, u64) = (a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?);
            if a > b {
                bail!(bad());
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![s.trim().parse().map_err(|_| bad())?]),
    }
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Run {
            scenario,
            out,
            scheme,
            seed,
        } => {
            let mut s = Scenario::load(&scenario)?;
            if let Some(sc) = scheme {
                s.scheme = sc;
            }
            if let Some(sd) = seed {
                s.seed = sd;
            }
            let o = run_scenario(&s)?;
            write_outputs(&out, &o)?;
            println!("{}", o.summary.csv_line());
        }
        Cmd::Batch {
            template,
            seeds,
            schemes,
            out,
            jobs,
        } => {
            let s = Scenario::load(&template)?;
            let seeds = parse_seeds(&seeds)?;
            let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs.unwrap_or(0)).build()?;
            let report = pool.install(|| run_batch(&s, &seeds, &schemes))?;
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("batch.csv"), report.rows_csv())?;
            let stats = report.stats_csv();
            std::fs::write(out.join("stats.csv"), &stats)?;
            print!("{stats}");
        }
        Cmd::FibDump { topology, metric } => {
            let t = load_topology(&read(&topology)?)?;
            print!("{}", RoutingState::downward(&t, metric).fib().dump(&t));
        }
        Cmd::Solve { problem, out } => {
            let p = McfProblem::parse(&read(&problem)?)?;
            let sol = match solve(&p) {
                Ok(s) => s,
                Err(SolveError::NotConverged(best)) => {
                    eprintln!("warning: solver did not converge; reporting best point");
                    *best
                }
                Err(e) => return Err(e.into()),
            };
            match out {
                Some(o) => std::fs::write(&o, sol.to_text(&p))?,
                None => print!("{}", sol.to_text(&p)),
            }
        }
        Cmd::Compare {
            summary,
            solution,
            problem,
            flows_per_pair,
        } => {
            let problem = problem.unwrap_or_else(|| solution.with_file_name("problem.txt"));
            let p = McfProblem::parse(&read(&problem)?)?;
            let sol = McfSolution::parse(&read(&solution)?, &p)?;
            let opt = RunMetrics::from_solution(&p, &sol, flows_per_pair, GOODPUT_FRACTION);
            println!("scheme,seed,completion_ratio,throughput_fraction,rtt_ratio");
            for r in read_summary(&read(&summary)?)? {
                let rel = compare(&r.metrics(), &opt)?;
                println!(
                    "{},{},{},{},{}",
                    r.scheme, r.seed, rel.completion_ratio, rel.throughput_fraction, rel.rtt_ratio
                );
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::parse_seeds;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("3..5").unwrap(), vec![3, 4, 5]);
        assert_eq!(parse_seeds("7").unwrap(), vec![7]);
        assert!(parse_seeds("5..3").is_err());
    }
}
