//! Numerical minimization of the vector-valued one-phase cavitation functional
//!
//! ```text
//! J(u) = ∫_Ω |∇u|² + Q(x)² χ{|u| > 0},   u = (u_1, …, u_m) ≥ 0,  u = g on ∂Ω
//! ```
//!
//! on rectangular grids, together with diagnostics of the free boundary
//! `∂{|u| > 0}`: blowups, Weiss energy curves, growth and density checks,
//! the homogeneous-solution eigenvalue test and the partial hodograph map.
//!
//! Everything is generic over [`Scalar`] (`f32` or `f64`); the aliases at the
//! crate root fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod blowup;
pub mod diagnostics;
pub mod error;
pub mod functional;
pub mod grid;
pub mod hodograph;
pub mod homogeneous;
pub mod io;
pub mod scalar;
pub mod solver;

pub use error::{FbError, Result};
pub use functional::{
    dirichlet_energy, evaluate_j, evaluate_j_smoothed, metric_d, psi_rho, smoothed_gradient,
    volume_term, EnergyBreakdown,
};
pub use grid::{make_grid, BoundaryData, GridSpec, Mask, ScalarField, VectorField, WeightField};
pub use scalar::Scalar;
pub use solver::{
    brute_force_minimize, flip_polish, harmonic_replace, minimize, IterationRecord, MoveKind,
    Solution, SolverConfig, StepRule,
};

pub type Grid = GridSpec<f64>;
pub type Field = ScalarField<f64>;
pub type Vector = VectorField<f64>;
pub type Weight = WeightField<f64>;
pub type Boundary = BoundaryData<f64>;
pub type PositivityMask = Mask<f64>;
pub type Config = SolverConfig<f64>;
pub type Minimizer = Solution<f64>;

pub type Grid32 = GridSpec<f32>;
pub type Vector32 = VectorField<f32>;
pub type Weight32 = WeightField<f32>;
