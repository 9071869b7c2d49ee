//! Adjoint (costate) solver.
//!
//! The costate runs backward along the characteristics with homogeneous
//! terminal data on the a = a_max and t = T edges. In the backward
//! parameter s the system reads
//!
//!   dq/ds = delta Lap q - (mu - u) q + u + beta(a) (K q(0, t, .))(x),
//!
//! a well-posed heat-type flow, discretized with the same Lie splitting as
//! the state: reaction with integrating factor exp(-(mu - u) dt) plus
//! midpoint-weighted sources, then the implicit periodic diffusion row
//! solve. Coefficients are evaluated at the segment's lower node (i, n),
//! the same node the forward march uses for that segment. The nonlocal
//! fertility source reads the newborn costate row at the already-computed
//! level t + dt, mirroring the forward newborn lag.
//!
//! The kernel window is applied exactly as in the birth term, without
//! transposition; the variational-identity check in the control module
//! reports the size of the resulting defect instead of hiding it.

use crate::error::{Error, Result};
use crate::forward::{reaction_factors, DiffusionOp};
use crate::grid::{AgeXSlice, Field};
use crate::model::{KernelWeights, ProblemData};
use crate::scalar::Real;

/// Adjoint march options.
#[derive(Debug, Clone)]
pub struct AdjointConfig {
    /// Nonlocal fertility source reads q(0, t + dt, .). Kept for contract
    /// visibility; the explicit backward march requires the lag.
    pub lag_birth: bool,
    /// Check every computed level for NaN/Inf.
    pub tol_finite: bool,
}

impl Default for AdjointConfig {
    fn default() -> Self {
        AdjointConfig { lag_birth: true, tol_finite: true }
    }
}

/// Solves the costate system backward for a given control. Terminal rows
/// (a = a_max and t = T) are identically zero.
pub fn adjoint_solve<T: Real>(
    data: &ProblemData<T>,
    control: &Field<T>,
    cfg: &AdjointConfig,
) -> Result<Field<T>> {
    let grid = &data.grid;
    control.check_same_grid(&data.bounds.lower)?;
    if !cfg.lag_birth {
        return Err(Error::Invalid(
            "the explicit backward march requires the lagged nonlocal source".into(),
        ));
    }

    let weights = KernelWeights::build(grid, data.rates.kernel_halfwidth, data.birth_wrap)?;
    let fertility = data.rates.fertility.profile(grid);
    let diffusion = DiffusionOp::new(grid, data.rates.diffusivity);
    let mut scratch = Vec::new();

    let dt = grid.dt();
    let mut costate = Field::zeros(grid);
    // March t_{n+1} -> t_n; rows i < n_a from departure (i+1, n+1).
    for n in (0..grid.n_t()).rev() {
        let newborn_row: Vec<T> = (0..grid.n_x()).map(|k| costate.at(0, n + 1, k)).collect();
        let kernel_newborn: Vec<T> = (0..grid.n_x())
            .map(|k| weights.apply(k, &newborn_row))
            .collect();

        let mut level = AgeXSlice::zeros(grid.n_a(), grid.n_x());
        for i in 0..grid.n_a() {
            let beta = fertility[i];
            for k in 0..grid.n_x() {
                let u = control.at(i, n, k);
                let m = data.rates.mortality.at(grid, i, n, k) - u;
                let (decay, source_weight) = reaction_factors(m, dt);
                let source = u + beta * kernel_newborn[k];
                *level.at_mut(i, k) = costate.at(i + 1, n + 1, k) * decay + source * source_weight;
            }
        }
        for i in 0..grid.n_a() {
            diffusion.apply_row(level.row_mut(i), &mut scratch);
        }
        if cfg.tol_finite {
            if let Some((i, k, v)) = level.first_non_finite() {
                return Err(Error::NonFinite { value: v.as_f64(), age: i, time: n, x: k });
            }
        }
        for i in 0..grid.n_a() {
            for k in 0..grid.n_x() {
                *costate.at_mut(i, n, k) = level.at(i, k);
            }
        }
        // Row n_a stays at the terminal value 0.
    }
    Ok(costate)
}
