//! Kinetic equations for shock statistics of scalar conservation laws
//! `rho_t = H(rho)_x` with monotone pure-jump Markov initial data, the
//! matching sticky-particle simulator with a random boundary at `x = L`,
//! and Monte Carlo experiments checking that the two agree.
//!
//! All numerics are generic over [`Scalar`] (`f32` or `f64`); the `*64`
//! aliases below fix the common double-precision case.

// `!(x > 0)` is deliberate throughout: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
// index loops mirror the matrix formulas they implement
#![allow(clippy::needless_range_loop)]

pub mod error;
pub mod hamiltonian;
pub mod kinetic;
pub mod particle;
pub mod sampling;
pub mod scalar;
pub mod state_space;
pub mod statistics;
pub mod validation;

pub use error::{Error, Result};
pub use hamiltonian::{validate_hamiltonian, Hamiltonian, HamiltonianKind};
pub use kinetic::{
    apply_kinetic_operator, apply_marginal_operator, convergence_study, integrate_kinetic, integrate_marginal,
    lstar_weight, solve_kinetic, solve_marginal, ConvergenceRow, KineticOperator, KineticOperatorForm, KineticSolution,
    MarginalSolution, SchemeKind, SolverScheme,
};
pub use particle::{
    advance_deterministic, insert_particle, next_deterministic_event, shock_velocities, simulate_pdmp, BoundaryProcess,
    Configuration, Event, EventKind, EventRecord,
};
pub use sampling::{sample_candidate, sample_initial_path, RandomStreamPolicy, StreamLane};
pub use scalar::Scalar;
pub use state_space::{
    kernel_norm, tv_norm, validate_rate_kernel, KernelTrajectory, MarginalMeasure, RateKernel, StateGrid,
};
pub use statistics::{
    burgers_closure_check, chi_square_goodness_of_fit, chi_square_homogeneity, estimate_mean, evaluate_solution,
    ks_two_sample, laplace_functional, map_paths, path_measure, two_sample_z, verify_coupling, verify_lstar,
    verify_propagation, BurgersOutcome, BurgersSetup, CouplingSetup, ExperimentReport, LstarSetup, MeanEstimate,
    PropagationOutcome, PropagationSetup, StatisticRecord, TestFunction,
};
pub use validation::{ValidationReport, Violation, ViolationKind};

pub type Hamiltonian64 = Hamiltonian<f64>;
pub type StateGrid64 = StateGrid<f64>;
pub type RateKernel64 = RateKernel<f64>;
pub type MarginalMeasure64 = MarginalMeasure<f64>;
pub type KernelTrajectory64 = KernelTrajectory<f64>;
pub type KineticOperator64 = KineticOperator<f64>;
pub type Configuration64 = Configuration<f64>;
pub type SolverScheme64 = SolverScheme<f64>;
