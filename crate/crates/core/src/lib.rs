//! A numerical laboratory for products of measure-preserving maps.
//!
//! The crate builds the diagonal-orbit measure of a product system, computes
//! nonconventional ergodic sums along it, and solves or refutes the
//! coboundary equation `F = V - V o Phi` by a direct orbit walk and by an
//! averaging construction, with exact rational arithmetic on finite systems.

pub mod coboundary;
pub mod config;
pub mod error;
pub mod measures;
pub mod observables;
pub mod pipeline;
pub mod planted;
pub mod report;
pub mod scalar;
pub mod sums;
pub mod systems;

pub use coboundary::{
    circle_partial_solver, komlos_construct, observable_table, reverse_direction, solve_orbit,
    solve_orbit_with_constants, verify_certificate, CirclePartialSolution, CoboundaryCertificate,
    CoboundarySolution, KomlosOutcome, KomlosTrace, ObstructionCheck, ReverseCheck,
    SolutionCheck, SubsequenceRule, VerifyReport,
};
pub use config::{ExperimentConfig, Overrides, StageName};
pub use error::{Error, Result};
pub use measures::{
    build_nu_support, check_nonsingularity, lp_norm_mu, lp_norm_nu, mc_lp_norm_nu,
    mu_delta_pullback_counterexample, sample_nu_circle, sample_nu_finite, shift_class_series,
    shift_weight, Exponent, McNorm, NonsingularityReport, NormValue, NuSupport, OrbitInfo,
    SequenceFamily, SupportAtom,
};
pub use observables::{
    CircleFn, CircleObservable, FiniteObservable, Observable, SupportFunction, TensorObservable,
};
pub use pipeline::{run_experiment, RunOutcome};
pub use planted::{
    make_planted_cyclic, make_planted_finite, make_planted_rotation, random_system,
    CirclePlanted, FinitePlanted, RandomSystemParams,
};
pub use report::{RunReport, StageReport};
pub use scalar::Q;
pub use sums::{
    cycle_sums, ergodic_sums, ergodic_sums_circle, shifted_sum_condition, sup_norm_diagnostic,
    ShiftedSumReport, StartIndex, SumTable, SupNormDiagnostic,
};
pub use systems::{CircleRotation, CircleSystem, FiniteMap, FiniteSpace, FiniteSystem, System};
