//! Numerical weak-KAM toolkit for Hamilton-Jacobi equations on the torus.
//!
//! Everything is generic over the scalar through [`Real`]; the `*64`
//! aliases fix it to `f64`.

// `!(x > 0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod adjoint;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod hj_solver;
pub mod io;
pub mod mather_lp;
pub mod profile;
pub mod scalar;
pub mod uniqueness;
pub mod weak_kam_metric;

pub use adjoint::{
    build_measure, comparison_functional, holonomy_residual, solve_adjoint, AdjointTrajectory,
    DiscreteMeasure, MeasureDiagnostics, TestBasis,
};
pub use error::{Error, Result};
pub use grid::{diff, integrate, laplacian, DiffMode, GridFunction, TorusGrid, VelocityGrid};
pub use hamiltonian::{
    DiffusionCoefficient, FourierTerm, HamiltonianModel, ModelAudit, ModelSpec, TrigPolynomial,
};
pub use hj_solver::{
    ErgodicSolution, EvolutionResult, Linearization, NumericalFlux, RegularizedSolution, Scheme,
    SchemeConfig, SchemeOptions,
};
pub use mather_lp::{
    build_lp, projected_mather_set, solve_lp, HolonomicLp, MatherResult, ProjectedSet,
    SolverStatus,
};
pub use profile::{
    builtin_initial_data, check_mather_invariance, compare_profiles, profile_direct, profile_formula,
    DirectProfile, InvarianceReport, ProfileReport,
};
pub use scalar::Real;
pub use uniqueness::{
    check_comparison, randomized_theorem_test, solution_from_boundary, viscous_pair_test,
    BoundaryAssignment, ComparisonReport, ToleranceBudget, TrialKind, TrialPlan,
    UniquenessSummary, Verdict,
};
pub use weak_kam_metric::{
    distance_1d, distance_field, is_subsolution, maximal_subsolution, CriticalPotential,
    DistanceBank, DistanceMethod, SubsolutionCheck,
};

pub type GridFunction64 = GridFunction<f64>;
pub type VelocityGrid64 = VelocityGrid<f64>;
pub type HamiltonianModel64 = HamiltonianModel<f64>;
pub type DiscreteMeasure64 = DiscreteMeasure<f64>;
pub type Scheme64<'m> = Scheme<'m, f64>;
