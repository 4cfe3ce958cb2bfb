//! Declarative experiment harness: seeded studies over solver families
//! with tabular CSV output.

mod runs;
mod spec;
mod table;

pub use runs::{
    emit_table, run_experiment, run_init_sweep, run_layer_trace, run_rate_check, run_stability,
    run_stepsize_race, run_timing, TableFormat,
};
pub use spec::{ExperimentKind, ExperimentSpec};
pub use table::{Cell, ColType, ResultTable};
