//! Age-structured population dynamics with a periodic biting-time axis.
//!
//! The library solves a linear transport-diffusion system for a population
//! density p(a, t, x): individuals age and advance in time along shared
//! characteristics, diffuse in the 24-hour biting-time coordinate x, die at
//! an age-dependent rate, and reproduce through a nonlocal renewal boundary
//! that redistributes newborn biting times by a windowed kernel. An
//! insecticidal control u <= 0 enters the balance as u p; the harvesting
//! objective is to minimize the integral of u p over the domain
//! (equivalently, maximize the removed population).
//!
//! Modules:
//! - [`grid`]: characteristics-aligned lattice and sampled fields;
//! - [`model`]: vital rates, birth kernel, control bounds, validation;
//! - [`forward`]: state solver (renewal, prescribed-boundary and
//!   fixed-point boundary modes);
//! - [`adjoint`]: backward costate solver;
//! - [`control`]: objective, switching rule, forward-backward sweep,
//!   exhaustive desk-scale oracle, variational derivative check;
//! - [`verify`]: executable property suites (comparison principle, energy
//!   bound, integral inequality, diffusion eigenstructure);
//! - [`config`]: JSON configuration for the command-line tool.
//!
//! Everything numerical is generic over the scalar type through [`Real`];
//! `f64` aliases are exported at the crate root.

pub mod adjoint;
pub mod config;
pub mod control;
pub mod error;
pub mod forward;
pub mod grid;
pub mod model;
pub mod scalar;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub use adjoint::{adjoint_solve, AdjointConfig};
pub use control::{
    brute_force_optimum, objective, sweep, switching_rule, variational_check, BruteForceResult,
    SweepConfig, SweepResult, VariationalReport,
};
pub use forward::{
    birth_boundary, forward_solve, forward_solve_fixed_point, mass_by_time, step_diffusion,
    step_transport_reaction, DiffusionOp, FixedPointOutcome, ForwardConfig, ForwardMode,
};
pub use grid::{AgeXSlice, Field, Grid, TimeXSlice};
pub use model::{
    kernel_eval, validate_params, ControlBounds, Fertility, KernelWeights, Mortality,
    ProblemData, ValidationIssue, ValidationReport, VitalRates,
};
pub use verify::{
    comparison_suite, eigen_oracle, energy_bound_suite, gronwall_check, OrderedPair,
    PropertyReport,
};

/// Concrete double-precision aliases (the CLI instantiation).
pub type Grid64 = grid::Grid<f64>;
pub type Field64 = grid::Field<f64>;
pub type ProblemData64 = model::ProblemData<f64>;
pub type SweepConfig64 = control::SweepConfig<f64>;

/// Single-precision aliases.
pub type Grid32 = grid::Grid<f32>;
pub type Field32 = grid::Field<f32>;
pub type ProblemData32 = model::ProblemData<f32>;
