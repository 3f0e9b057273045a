//! Latency-aware multi-commodity flow optimum used as the OPT benchmark.

pub mod compare;
pub mod paths;
pub mod problem;
pub mod solver;

pub use compare::{compare, CompareError, RelativeReport, RunMetrics};
pub use paths::{enumerate_paths, PathError, DEFAULT_PATH_LIMIT, DEFAULT_STRETCH};
pub use problem::{McfLink, McfProblem, McfSolution, ProblemError, DEFAULT_GAMMA};
pub use solver::{kkt_check, solve, solve_with, KktReport, KktViolation, Program, SolveError, SolverConfig};
