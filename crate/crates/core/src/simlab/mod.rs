//! Simulation study of the c-dependence bounds on a conditionally normal design.

pub mod dgp;
pub mod experiment;
pub mod truth;

pub use dgp::{dgp_sample, dgp_sample_stream, DgpConfig, Sample, DEFAULT_ETA};
pub use experiment::{
    analyze_sample, coverage_experiment, coverage_table, default_c_grid, figure1_run, figure1_table, run_simulations, CoverageRow,
    ExperimentConfig, Figure1Row, IntervalSummary, SimRecord, SimulationRun,
};
pub use truth::{bound_envelope_normal, true_bounds_c_dependence, TruthResult};
