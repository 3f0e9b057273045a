//! Log-barrier interior-point solver for
//! `max sum_i -1/x_i - gamma * sum_l d_l f_l  s.t.  f <= c, y >= 0`
//! over path flows `y`, plus a KKT checker.
//!
//! Internally rates are in Mbit/s and delays in ms.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

use crate::problem::{routing_fractions, McfProblem, McfSolution, ProblemError};

/// Rates below this (Mbit/s) are clamped when evaluating `-1/x`.
pub const MIN_RATE: f64 = 1e-3;

const BPS_PER_MBPS: f64 = 1e6;

/// The objective in solver units, over a flat vector of path flows.
#[derive(Debug, Clone)]
pub struct Program {
    pub npairs: usize,
    /// Pair of each flat path.
    pub pair_of: Vec<usize>,
    /// Links of each flat path.
    pub path_links: Vec<Vec<usize>>,
    /// Paths crossing each link.
    pub link_paths: Vec<Vec<usize>>,
    /// Mbit/s.
    pub cap: Vec<f64>,
    /// Sum of link delays per path, ms.
    pub path_delay: Vec<f64>,
    pub gamma: f64,
}

impl Program {
    pub fn new(p: &McfProblem) -> Result<Self, ProblemError> {
        p.validate()?;
        let plinks = p.path_links()?;
        let mut pair_of = Vec::new();
        let mut path_links = Vec::new();
        for (i, ps) in plinks.into_iter().enumerate() {
            for ls in ps {
                pair_of.push(i);
                path_links.push(ls);
            }
        }
        let mut link_paths = vec![Vec::new(); p.links.len()];
        for (j, ls) in path_links.iter().enumerate() {
            for &l in ls {
                link_paths[l].push(j);
            }
        }
        let path_delay = path_links
            .iter()
            .map(|ls| ls.iter().map(|&l| p.links[l].delay * 1e3).sum())
            .collect();
        Ok(Program {
            npairs: p.pairs.len(),
            pair_of,
            path_links,
            link_paths,
            cap: p.links.iter().map(|l| l.capacity / BPS_PER_MBPS).collect(),
            path_delay,
            gamma: p.gamma,
        })
    }

    pub fn npaths(&self) -> usize {
        self.pair_of.len()
    }

    pub fn pair_rates(&self, y: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.npairs];
        for (j, &v) in y.iter().enumerate() {
            x[self.pair_of[j]] += v;
        }
        x
    }

    pub fn link_flows(&self, y: &[f64]) -> Vec<f64> {
        self.link_paths
            .iter()
            .map(|ps| ps.iter().map(|&j| y[j]).sum())
            .collect()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        let u: f64 = self.pair_rates(y).iter().map(|&x| -1.0 / x.max(MIN_RATE)).sum();
        let cost: f64 = y.iter().zip(&self.path_delay).map(|(v, d)| v * d).sum();
        u - self.gamma * cost
    }

    pub fn gradient(&self, y: &[f64]) -> Vec<f64> {
        let x = self.pair_rates(y);
        (0..y.len())
            .map(|j| {
                let xi = x[self.pair_of[j]];
                let du = if xi > MIN_RATE { 1.0 / (xi * xi) } else { 0.0 };
                du - self.gamma * self.path_delay[j]
            })
            .collect()
    }

    fn links_in_use(&self) -> Vec<usize> {
        (0..self.cap.len()).filter(|&l| !self.link_paths[l].is_empty()).collect()
    }

    /// Barrier function `t*F + sum log(c - f) + sum log y`, or `None`
    /// outside the interior.
    fn barrier(&self, t: f64, y: &[f64], used: &[usize]) -> Option<f64> {
        if y.iter().any(|&v| v <= 0.0) {
            return None;
        }
        let f = self.link_flows(y);
        let mut b = t * self.value(y);
        for &l in used {
            let s = self.cap[l] - f[l];
            if s <= 0.0 {
                return None;
            }
            b += s.ln();
        }
        Some(b + y.iter().map(|v| v.ln()).sum::<f64>())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Stop once the duality gap is below this fraction of |objective|.
    pub rel_gap: f64,
    /// Barrier weight growth per outer iteration.
    pub growth: f64,
    pub max_outer: usize,
    pub max_newton: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            rel_gap: 1e-9,
            growth: 10.0,
            max_outer: 60,
            max_newton: 200,
        }
    }
}

#[derive(Debug, Error)]
pub enum SolveError {
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("solver did not reach the gap tolerance; best point has gap {}", .0.gap)]
    NotConverged(Box<McfSolution>),
}

/// Solves `a z = b` for symmetric positive definite `a` (row-major,
/// n x n). Returns `None` if `a` is not positive definite.
fn cholesky_solve(a: &[f64], b: &[f64], n: usize) -> Option<Vec<f64>> {
    let chol = DMatrix::from_row_slice(n, n, a).cholesky()?;
    Some(chol.solve(&DVector::from_column_slice(b)).as_slice().to_vec())
}

/// Strictly feasible start: every path gets half of the tightest per-path
/// share along it.
fn initial_point(prog: &Program) -> Vec<f64> {
    (0..prog.npaths())
        .map(|j| {
            prog.path_links[j]
                .iter()
                .map(|&l| prog.cap[l] / prog.link_paths[l].len() as f64)
                .fold(f64::INFINITY, f64::min)
                * 0.5
        })
        .collect()
}

/// Maximizes the barrier function for fixed `t` by damped Newton steps.
fn center(prog: &Program, t: f64, y: &mut Vec<f64>, used: &[usize], max_iter: usize) {
    let n = y.len();
    for _ in 0..max_iter {
        let x = prog.pair_rates(y);
        let f = prog.link_flows(y);
        let slack: Vec<f64> = f.iter().zip(&prog.cap).map(|(f, c)| c - f).collect();
        let mut g: Vec<f64> = prog.gradient(y).into_iter().map(|v| t * v).collect();
        // Negated Hessian, positive definite.
        let mut h = vec![0.0; n * n];
        for j in 0..n {
            g[j] += 1.0 / y[j];
            h[j * n + j] += 1.0 / (y[j] * y[j]);
            for &l in &prog.path_links[j] {
                g[j] -= 1.0 / slack[l];
            }
        }
        for &l in used {
            let w = 1.0 / (slack[l] * slack[l]);
            for &a in &prog.link_paths[l] {
                for &b in &prog.link_paths[l] {
                    h[a * n + b] += w;
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let i = prog.pair_of[a];
                if prog.pair_of[b] == i && x[i] > MIN_RATE {
                    h[a * n + b] += t * 2.0 / (x[i] * x[i] * x[i]);
                }
            }
        }
        let Some(step) = cholesky_solve(&h, &g, n) else {
            return;
        };
        let dec: f64 = step.iter().zip(&g).map(|(s, g)| s * g).sum();
        if dec / 2.0 <= 1e-12 {
            return;
        }
        let base = prog.barrier(t, y, used).expect("interior");
        let mut s = 1.0;
        let mut moved = false;
        for _ in 0..80 {
            let cand: Vec<f64> = y.iter().zip(&step).map(|(v, d)| v + s * d).collect();
            if let Some(b) = prog.barrier(t, &cand, used) {
                if b >= base + 0.25 * s * dec {
                    *y = cand;
                    moved = true;
                    break;
                }
            }
            s *= 0.5;
        }
        if !moved {
            return;
        }
    }
}

fn package(prog: &Program, p: &McfProblem, y: &[f64], t: f64, gap: f64, converged: bool) -> McfSolution {
    let x = prog.pair_rates(y);
    let f = prog.link_flows(y);
    let mu = f
        .iter()
        .zip(&prog.cap)
        .enumerate()
        .map(|(l, (f, c))| {
            if prog.link_paths[l].is_empty() {
                0.0
            } else {
                1.0 / (t * (c - f))
            }
        })
        .collect();
    let mut ys = Vec::with_capacity(p.pairs.len());
    let mut k = 0;
    for ps in &p.paths {
        ys.push(y[k..k + ps.len()].iter().map(|v| v * BPS_PER_MBPS).collect::<Vec<_>>());
        k += ps.len();
    }
    let x_bps: Vec<f64> = x.iter().map(|v| v * BPS_PER_MBPS).collect();
    let plinks = p.path_links().expect("validated");
    McfSolution {
        r: routing_fractions(p.links.len(), &plinks, &ys, &x_bps),
        y: ys,
        x: x_bps,
        f: f.iter().map(|v| v * BPS_PER_MBPS).collect(),
        mu,
        objective: prog.value(y),
        gap,
        converged,
        bounds: p.bounds,
        fingerprint: None,
    }
}

pub fn solve(p: &McfProblem) -> Result<McfSolution, SolveError> {
    solve_with(p, SolverConfig::default())
}

pub fn solve_with(p: &McfProblem, cfg: SolverConfig) -> Result<McfSolution, SolveError> {
    let prog = Program::new(p)?;
    let used = prog.links_in_use();
    let m = (used.len() + prog.npaths()) as f64;
    let mut y = initial_point(&prog);
    let mut t = 1.0 / prog.value(&y).abs().max(1e-12);
    for _ in 0..cfg.max_outer {
        center(&prog, t, &mut y, &used, cfg.max_newton);
        let gap = m / t;
        if gap <= cfg.rel_gap * prog.value(&y).abs() {
            return Ok(package(&prog, p, &y, t, gap, true));
        }
        t *= cfg.growth;
    }
    let sol = package(&prog, p, &y, t / cfg.growth, m * cfg.growth / t, false);
    Err(SolveError::NotConverged(Box::new(sol)))
}

/// Violations found by [`kkt_check`].
#[derive(Debug, Clone, PartialEq)]
pub enum KktViolation {
    /// Link flow above capacity.
    Capacity { link: usize, excess: f64 },
    NegativeFlow { pair: usize, path: usize },
    NegativeMultiplier { link: usize },
    /// Two used paths of a pair differ in marginal value.
    Stationarity { pair: usize, path: usize, rel_diff: f64 },
    /// An unused path has a higher marginal value than the used ones.
    UnusedBetter { pair: usize, path: usize, rel_excess: f64 },
    /// Multiplier times slack too large.
    Slackness { link: usize, product: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub violations: Vec<KktViolation>,
    /// Marginal value `1/x_i^2 - gamma*delay(p) - sum mu_l` of every path.
    pub marginals: Vec<Vec<f64>>,
}

impl KktReport {
    pub fn ok(&self) -> bool {
        self.violations.is_empty()
    }
}

pub const STATIONARITY_TOL: f64 = 1e-3;
pub const SLACKNESS_TOL: f64 = 1e-4;
/// Paths carrying less than this fraction of their pair count as unused.
pub const USED_FRACTION: f64 = 1e-4;

/// Checks feasibility, stationarity and complementary slackness of `sol`
/// using the multipliers it carries.
pub fn kkt_check(p: &McfProblem, sol: &McfSolution) -> Result<KktReport, ProblemError> {
    let prog = Program::new(p)?;
    let mut v = Vec::new();
    let mut flat = Vec::with_capacity(prog.npaths());
    for (i, ys) in sol.y.iter().enumerate() {
        for (j, &y) in ys.iter().enumerate() {
            if y < 0.0 {
                v.push(KktViolation::NegativeFlow { pair: i, path: j });
            }
            flat.push(y / BPS_PER_MBPS);
        }
    }
    let x = prog.pair_rates(&flat);
    let f = prog.link_flows(&flat);
    for l in 0..f.len() {
        if f[l] > prog.cap[l] {
            v.push(KktViolation::Capacity {
                link: l,
                excess: (f[l] - prog.cap[l]) * BPS_PER_MBPS,
            });
        }
        if sol.mu[l] < 0.0 {
            v.push(KktViolation::NegativeMultiplier { link: l });
        }
    }
    let mut marginals = Vec::new();
    let mut k = 0;
    for (i, ys) in sol.y.iter().enumerate() {
        let du = 1.0 / (x[i].max(MIN_RATE)).powi(2);
        let m: Vec<f64> = (0..ys.len())
            .map(|j| {
                let q = k + j;
                du - prog.gamma * prog.path_delay[q]
                    - prog.path_links[q].iter().map(|&l| sol.mu[l]).sum::<f64>()
            })
            .collect();
        let used: Vec<usize> = (0..ys.len())
            .filter(|&j| flat[k + j] > USED_FRACTION * x[i])
            .collect();
        if let Some(best) = used.iter().map(|&j| m[j]).reduce(f64::max) {
            for &j in &used {
                let rel = (best - m[j]).abs() / du;
                if rel > STATIONARITY_TOL {
                    v.push(KktViolation::Stationarity {
                        pair: i,
                        path: j,
                        rel_diff: rel,
                    });
                }
            }
            for j in (0..ys.len()).filter(|j| !used.contains(j)) {
                let rel = (m[j] - best) / du;
                if rel > STATIONARITY_TOL {
                    v.push(KktViolation::UnusedBetter {
                        pair: i,
                        path: j,
                        rel_excess: rel,
                    });
                }
            }
        }
        marginals.push(m);
        k += ys.len();
    }
    let scale = prog.value(&flat).abs();
    for l in 0..f.len() {
        let product = sol.mu[l] * (prog.cap[l] - f[l]);
        if product > SLACKNESS_TOL * scale {
            v.push(KktViolation::Slackness { link: l, product });
        }
    }
    Ok(KktReport {
        violations: v,
        marginals,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cholesky_solves_small_system() {
        let a = [4.0, 2.0, 2.0, 3.0];
        let z = cholesky_solve(&a, &[2.0, 1.0], 2).unwrap();
        assert!((4.0 * z[0] + 2.0 * z[1] - 2.0).abs() < 1e-12);
        assert!((2.0 * z[0] + 3.0 * z[1] - 1.0).abs() < 1e-12);
        let bad = [1.0, 2.0, 2.0, 1.0];
        assert!(cholesky_solve(&bad, &[1.0, 1.0], 2).is_none());
    }
}
