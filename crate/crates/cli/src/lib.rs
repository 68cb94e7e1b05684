//! Experiment specs, the scenario runner and CSV reporting behind the
//! `essfm` command.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity
)]

pub mod runner;
pub mod spec;

pub use runner::{run_experiment, summarize, BerRow, ExperimentResult, RunError, TrainRow};
pub use spec::{load_spec, parse_spec, ExperimentSpec, Scenario, SpecError, VariantSpec};
