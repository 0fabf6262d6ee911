//! Experiment harness: spec files, parallel seeded runs, aggregation and the
//! riverswim steps-to-ratio table.

pub mod aggregate;
pub mod metrics;
pub mod report;
pub mod runner;
pub mod spec;

pub use aggregate::{aggregate, Aggregate, AggregateError};
pub use metrics::{cumulative, steps_to_ratio};
pub use runner::{run_experiment, run_experiment_with, worker_count, Manifest};
pub use spec::{ExperimentSpec, Job, SpecError, Sweep};
