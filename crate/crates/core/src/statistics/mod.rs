//! Observables, estimators, hypothesis tests and the verification experiments.

mod burgers;
mod estimate;
mod experiments;
mod observables;
mod report;

pub use burgers::{burgers_closure_check, BurgersOutcome, BurgersRow, BurgersSetup};
pub use estimate::{
    chi_square_goodness_of_fit, chi_square_homogeneity, estimate_mean, ks_two_sample, map_paths, two_sample_z,
    ChiSquareResult, KsResult, MeanEstimate,
};
pub use experiments::{
    verify_coupling, verify_lstar, verify_propagation, CouplingSetup, LstarSetup, PropagationOutcome, PropagationSetup,
    StateFrequency, CHI_SQUARE_P_MIN, LSTAR_RATIO_RANGE, POSITION_TOL, Z_MAX,
};
pub use observables::{evaluate_solution, laplace_functional, path_measure, TestFunction};
pub use report::{ExperimentReport, StatisticRecord, REPORT_SCHEMA_VERSION};
