//! Pipeline orchestration and test harness for validating, verifying and
//! benchmarking OpenMP offloading compiler toolchains.
//!
//! A [`config::Config`] names toolchains, accelerator targets, conformance
//! suites and benchmark applications. [`pipeline`] plans and executes the
//! staged job graph, [`suite`] and [`bench`] do the per-job work, [`lists`]
//! tracks expected outcomes and regressions, and [`report`] aggregates
//! snapshots into conformance matrices and benchmark tables. The [`mock`]
//! toolchain makes every path runnable without accelerators.

pub mod bench;
pub mod cli;
pub mod clock;
pub mod config;
pub mod lists;
pub mod mock;
pub mod pipeline;
pub mod process;
pub mod report;
pub mod suite;
pub mod toolchain;
pub mod workflow;
