//! Seed sweeps over several schemes, with per-seed ratios against OPT.

use std::fmt::Write as _;

use anyhow::{bail, Result};
use hcte_oracle::{compare, RelativeReport};
use rayon::prelude::*;

use crate::runner::{prepare, run_prepared, Prepared, SummaryRecord, SUMMARY_HEADER};
use crate::scenario::{Scenario, Scheme};

#[derive(Debug, Clone)]
pub struct BatchRow {
    pub record: SummaryRecord,
    /// Relative to OPT of the same seed, when OPT is part of the batch.
    pub relative: Option<RelativeReport>,
}

/// Quartiles of one metric for one scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quartiles {
    pub n: usize,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
}

#[derive(Debug, Clone)]
pub struct SchemeStats {
    pub scheme: Scheme,
    pub completion_ratio: Option<Quartiles>,
    pub throughput_fraction: Option<Quartiles>,
    pub rtt_ratio: Option<Quartiles>,
}

#[derive(Debug, Clone)]
pub struct BatchReport {
    /// Seed-major, schemes in the requested order.
    pub rows: Vec<BatchRow>,
    pub stats: Vec<SchemeStats>,
}

/// Linear-interpolation quantile of sorted finite values.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

pub fn quartiles(values: impl IntoIterator<Item = f64>) -> Option<Quartiles> {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    Some(Quartiles {
        n: v.len(),
        q1: quantile(&v, 0.25),
        median: quantile(&v, 0.5),
        q3: quantile(&v, 0.75),
    })
}

/// Runs `template` once per seed and scheme. Jobs run on the current rayon
/// pool; results do not depend on its size.
pub fn run_batch(template: &Scenario, seeds: &[u64], schemes: &[Scheme]) -> Result<BatchReport> {
    if seeds.is_empty() || schemes.is_empty() {
        bail!("a batch needs at least one seed and one scheme");
    }
    let prepared: Vec<(Scenario, Prepared)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut s = template.clone();
            s.seed = seed;
            s.trace = None;
            let p = prepare(&s)?;
            Ok((s, p))
        })
        .collect::<Result<_>>()?;
    let jobs: Vec<(usize, Scheme)> = (0..seeds.len())
        .flat_map(|i| schemes.iter().map(move |&sc| (i, sc)))
        .collect();
    let records: Vec<SummaryRecord> = jobs
        .par_iter()
        .map(|&(i, scheme)| {
            let (base, prep) = &prepared[i];
            let mut s = base.clone();
            s.scheme = scheme;
            Ok(run_prepared(&s, prep)?.summary)
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::with_capacity(records.len());
    for chunk in records.chunks(schemes.len()) {
        let opt = chunk.iter().find(|r| r.scheme == Scheme::Opt);
        for r in chunk {
            let relative = match opt {
                Some(o) => Some(compare(&r.metrics(), &o.metrics())?),
                None => None,
            };
            rows.push(BatchRow {
                record: r.clone(),
                relative,
            });
        }
    }
    let stats = schemes
        .iter()
        .map(|&scheme| {
            let rel: Vec<RelativeReport> = rows
                .iter()
                .filter(|r| r.record.scheme == scheme)
                .filter_map(|r| r.relative)
                .collect();
            SchemeStats {
                scheme,
                completion_ratio: quartiles(rel.iter().map(|r| r.completion_ratio)),
                throughput_fraction: quartiles(rel.iter().map(|r| r.throughput_fraction)),
                rtt_ratio: quartiles(rel.iter().map(|r| r.rtt_ratio)),
            }
        })
        .collect();
    Ok(BatchReport { rows, stats })
}

fn opt_str(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl BatchReport {
    pub fn rows_csv(&self) -> String {
        let mut s = format!("{SUMMARY_HEADER},completion_ratio,throughput_fraction,rtt_ratio\n");
        for r in &self.rows {
            let rel = r.relative;
            writeln!(
                s,
                "{},{},{},{}",
                r.record.csv_line(),
                opt_str(rel.map(|x| x.completion_ratio)),
                opt_str(rel.map(|x| x.throughput_fraction)),
                opt_str(rel.map(|x| x.rtt_ratio)),
            )
            .unwrap();
        }
        s
    }

    pub fn stats_csv(&self) -> String {
        let mut s = String::from("scheme,metric,n,q1,median,q3\n");
        for st in &self.stats {
            for (name, q) in [
                ("completion_ratio", st.completion_ratio),
                ("throughput_fraction", st.throughput_fraction),
                ("rtt_ratio", st.rtt_ratio),
            ] {
                if let Some(q) = q {
                    writeln!(s, "{},{name},{},{},{},{}", st.scheme, q.n, q.q1, q.median, q.q3).unwrap();
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let q = quartiles([4.0, 1.0, 3.0, 2.0, 5.0]).unwrap();
        assert_eq!((q.n, q.q1, q.median, q.q3), (5, 2.0, 3.0, 4.0));
        let q = quartiles([1.0, 2.0]).unwrap();
        assert_eq!((q.q1, q.median, q.q3), (1.25, 1.5, 1.75));
        assert!(quartiles([f64::NAN]).is_none());
    }
}
