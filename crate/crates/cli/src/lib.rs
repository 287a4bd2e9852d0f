//! Experiment harness behind the `coopex` binary: cohort sweeps for
//! storage-loss reduction and full welfare settlements, with stable
//! machine-readable reports.

pub mod experiments;
