//! Radial shooting laboratory for the polyharmonic equations
//! Δ^{2m} u = e^u and Δ² u = -u^{-p} in ℝ^N.
//!
//! The crate integrates the singular radial initial value problems with an
//! adaptive embedded Runge–Kutta pair and dense output, detects finite-radius
//! blowup and extinction, locates the separatrix initial Laplacian β₀ by
//! bisection, computes the far-field expansion of the dimension-3 separatrix
//! from weighted quadratures, and runs the falsifiable scans (universal
//! blowup in dimension 2, extinction for weak negative powers) behind the
//! `verify` check registry.

// validation guards are written as !(x > 0) on purpose: NaN must fail them
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod error;
pub mod integrate;
pub mod negpower;
pub mod problem;
pub mod quadrature;
pub mod shooting;
pub mod verify;

pub use asymptotics::{ExpansionReport, LogLimitReport, RepresentationReport, SupersolutionReport};
pub use error::{Error, Result};
pub use integrate::{integrate, BlowupFit, IntegrationControls, Termination, Trajectory};
pub use negpower::{ExtinctionOutcome, ExtinctionRecord};
pub use problem::{
    closed_form_n4, emden_fowler_polynomial, radial_rhs, taylor_start, Nonlinearity,
    OperatorPolynomial, ProblemSpec, StateVector,
};
pub use quadrature::{quadrature_weighted, TailPolicy, WeightedIntegral};
pub use shooting::{
    classify, default_horizon, find_separatrix, scan_n2, scan_n2_higher, sign_crossing_check,
    Classification, N2Outcome, N2Record, SeparatrixResult,
};
pub use verify::{all_check_names, run_checks, CheckResult, VerificationReport};
