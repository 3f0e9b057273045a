//! Scenario files, runs, batches and reports on top of the simulator and
//! the optimum solver.

pub mod batch;
pub mod randtopo;
pub mod runner;
pub mod scenario;
