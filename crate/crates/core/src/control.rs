//! Harvesting objective, switching rule, forward-backward sweep and the
//! exhaustive desk-scale oracle.
//!
//! The objective Psi(u) = integral of u p^u over the domain is nonpositive
//! for admissible controls; the optimizer minimizes Psi, i.e. maximizes the
//! harvested population -Psi. The necessary conditions characterize the
//! optimum through the costate: u jumps to the lower bound where q > -1 and
//! to the upper bound where q < -1. The sweep iterates state solve, costate
//! solve and a damped application of that rule until the control update
//! stalls; the exact switching level q = -1 is handled by a dead band that
//! keeps the previous value.

use crate::adjoint::{adjoint_solve, AdjointConfig};
use crate::error::{Error, Result};
use crate::forward::{forward_solve, ForwardConfig};
use crate::grid::Field;
use crate::model::{ControlBounds, ProblemData};
use crate::scalar::Real;

/// Forward-backward sweep parameters.
#[derive(Debug, Clone)]
pub struct SweepConfig<T> {
    /// Damping of the control update, in (0, 1]. Pure substitution
    /// (omega = 1) can limit-cycle between switching patterns.
    pub relaxation: T,
    pub max_iter: usize,
    /// L2 tolerance on the control update; convergence is declared on the
    /// control residual, not on objective stagnation.
    pub control_tol: T,
    /// Dead-band half-width around the switching level q = -1.
    pub switch_band: T,
    /// Default finite-difference step for derivative checks.
    pub fd_step: T,
}

impl<T: Real> Default for SweepConfig<T> {
    fn default() -> Self {
        SweepConfig {
            relaxation: T::of(0.5),
            max_iter: 200,
            control_tol: T::of(1e-9),
            switch_band: T::of(1e-8),
            fd_step: T::of(1e-3),
        }
    }
}

/// Converged (or capped) sweep output. The fields are mutually consistent:
/// `state` and `adjoint` are recomputed for the returned `control`.
#[derive(Debug, Clone)]
pub struct SweepResult<T> {
    pub control: Field<T>,
    pub state: Field<T>,
    pub adjoint: Field<T>,
    pub objective_history: Vec<T>,
    pub residual_history: Vec<T>,
    pub converged: bool,
    pub iterations: usize,
}

impl<T: Real> SweepResult<T> {
    /// Harvested population, -Psi.
    pub fn harvest(&self) -> T {
        -*self.objective_history.last().expect("history never empty")
    }

    pub fn objective(&self) -> T {
        *self.objective_history.last().expect("history never empty")
    }
}

/// Discrete objective Psi = sum over cells of u p da dt dx, the same
/// quadrature the energy norms use.
pub fn objective<T: Real>(control: &Field<T>, state: &Field<T>) -> T {
    assert_eq!(control.grid(), state.grid(), "fields live on different grids");
    let g = control.grid();
    let mut acc = T::zero();
    for i in 0..g.n_a() {
        for n in 0..g.n_t() {
            for k in 0..g.n_x() {
                acc += control.at(i, n, k) * state.at(i, n, k);
            }
        }
    }
    acc * g.cell_volume()
}

/// Bang-bang switching rule with a dead band: costate above -1 + band picks
/// the lower bound, below -1 - band the upper bound, inside the band the
/// previous control is kept (clamped into the box).
pub fn switching_rule<T: Real>(
    costate: &Field<T>,
    bounds: &ControlBounds<T>,
    previous: &Field<T>,
    band: T,
) -> Field<T> {
    let g = costate.grid();
    let level = T::of(-1.0);
    Field::from_fn(g, |i, n, k| {
        let q = costate.at(i, n, k);
        if q > level + band {
            bounds.lower.at(i, n, k)
        } else if q < level - band {
            bounds.upper.at(i, n, k)
        } else {
            bounds.clamp_node(i, n, k, previous.at(i, n, k))
        }
    })
}

/// Forward-backward sweep. Starts from maximal effort u = sigma1, damps the
/// switching update by `relaxation`, and stops when the L2 control update
/// drops below `control_tol`. On convergence the final control is the
/// undamped switching-rule image, so decisive nodes sit exactly on their
/// bound; state and costate are recomputed for it. Hitting `max_iter`
/// returns `converged = false` with the last iterate, not an error.
pub fn sweep<T: Real>(data: &ProblemData<T>, cfg: &SweepConfig<T>) -> Result<SweepResult<T>> {
    let fwd_cfg = ForwardConfig::renewal();
    let adj_cfg = AdjointConfig::default();
    let omega = cfg.relaxation;
    let one_minus = T::one() - omega;

    let mut control = data.bounds.lower.clone();
    let mut objective_history = Vec::new();
    let mut residual_history = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..cfg.max_iter {
        iterations += 1;
        let state = forward_solve(data, &control, &fwd_cfg)?;
        let costate = adjoint_solve(data, &control, &adj_cfg)?;
        objective_history.push(objective(&control, &state));

        let switched = switching_rule(&costate, &data.bounds, &control, cfg.switch_band);
        let next = Field::from_fn(data.grid(), |i, n, k| {
            one_minus * control.at(i, n, k) + omega * switched.at(i, n, k)
        });
        let residual = next.l2_cells_diff(&control)?;
        residual_history.push(residual);

        if residual < cfg.control_tol {
            control = switched;
            converged = true;
            break;
        }
        control = next;
    }

    let state = forward_solve(data, &control, &fwd_cfg)?;
    let costate = adjoint_solve(data, &control, &adj_cfg)?;
    objective_history.push(objective(&control, &state));

    Ok(SweepResult {
        control,
        state,
        adjoint: costate,
        objective_history,
        residual_history,
        converged,
        iterations,
    })
}

impl<T: Real> ProblemData<T> {
    pub(crate) fn grid(&self) -> &crate::grid::Grid<T> {
        &self.grid
    }
}

/// Exhaustive bang-bang enumeration result.
#[derive(Debug, Clone)]
pub struct BruteForceResult<T> {
    pub control: Field<T>,
    pub value: T,
    /// Bang-bang patterns (cell-ordered bit strings, '0' = lower bound)
    /// whose objective lies within a relative 1e-9 window of the best,
    /// including the winner. Capped at [`TIE_CAP`] entries.
    pub ties: Vec<(String, T)>,
    pub tie_cap_hit: bool,
}

/// Maximum number of control cells the enumeration accepts (2^20 solves).
pub const MAX_BRUTE_FORCE_CELLS: usize = 20;

/// Cap on the reported tie list.
pub const TIE_CAP: usize = 128;

/// Enumerates every control that sits on a bound in each quadrature cell
/// (i < n_a, n < n_t), runs the forward solver for each, and returns the
/// minimizer of the objective. Nodes outside the cells never enter the
/// dynamics or the objective and are pinned to the lower bound. Exact value
/// ties resolve to the lexicographically first pattern in cell order.
pub fn brute_force_optimum<T: Real>(data: &ProblemData<T>) -> Result<BruteForceResult<T>> {
    let g = &data.grid;
    let cells = g.n_a() * g.n_t() * g.n_x();
    if cells > MAX_BRUTE_FORCE_CELLS {
        return Err(Error::TooManyControlCells { cells, max: MAX_BRUTE_FORCE_CELLS });
    }
    let fwd_cfg = ForwardConfig::renewal();

    if data.bounds.is_singleton() {
        let control = data.bounds.lower.clone();
        let state = forward_solve(data, &control, &fwd_cfg)?;
        let value = objective(&control, &state);
        return Ok(BruteForceResult {
            control,
            value,
            ties: vec![("0".repeat(cells), value)],
            tie_cap_hit: false,
        });
    }

    let cell_list: Vec<(usize, usize, usize)> = (0..g.n_a())
        .flat_map(|i| (0..g.n_t()).flat_map(move |n| (0..g.n_x()).map(move |k| (i, n, k))))
        .collect();

    let mut best_value = T::infinity();
    let mut best_mask = 0u64;
    let mut best_control: Option<Field<T>> = None;
    let mut ties: Vec<(u64, T)> = Vec::new();
    let mut tie_cap_hit = false;
    let tie_window = |best: T| T::of(1e-9) * (T::one() + best.abs());

    // Cell j maps to bit (cells - 1 - j): ascending masks enumerate
    // patterns in lexicographic cell order, so strict improvement keeps the
    // lexicographically first pattern on exact ties.
    for mask in 0u64..(1u64 << cells) {
        let mut control = data.bounds.lower.clone();
        for (j, &(i, n, k)) in cell_list.iter().enumerate() {
            if (mask >> (cells - 1 - j)) & 1 == 1 {
                *control.at_mut(i, n, k) = data.bounds.upper.at(i, n, k);
            }
        }
        let state = forward_solve(data, &control, &fwd_cfg)?;
        let value = objective(&control, &state);
        if value < best_value {
            best_value = value;
            best_mask = mask;
            best_control = Some(control);
            let w = tie_window(best_value);
            ties.retain(|&(_, v)| v <= best_value + w);
        }
        if (value - best_value).abs() <= tie_window(best_value) {
            if ties.len() < TIE_CAP {
                ties.push((mask, value));
            } else {
                tie_cap_hit = true;
            }
        }
    }

    let pattern = |mask: u64| -> String {
        (0..cells)
            .map(|j| if (mask >> (cells - 1 - j)) & 1 == 1 { '1' } else { '0' })
            .collect()
    };
    let _ = best_mask;
    Ok(BruteForceResult {
        control: best_control.expect("at least one candidate"),
        value: best_value,
        ties: ties.into_iter().map(|(m, v)| (pattern(m), v)).collect(),
        tie_cap_hit,
    })
}

/// Gateaux-derivative cross-check report.
#[derive(Debug, Clone)]
pub struct VariationalReport<T> {
    /// (Psi(u + eps v) - Psi(u)) / eps.
    pub fd_derivative: T,
    /// sum over cells of v p (q + 1) da dt dx.
    pub adjoint_expression: T,
    pub gap: T,
}

/// Compares the finite-difference directional derivative of the objective
/// against the costate expression. The direction must be admissible:
/// u + eps v stays inside the bounds, which in particular forces v >= 0
/// where u sits on the lower bound and v <= 0 where it sits on the upper.
pub fn variational_check<T: Real>(
    data: &ProblemData<T>,
    control: &Field<T>,
    direction: &Field<T>,
    eps: T,
) -> Result<VariationalReport<T>> {
    control.check_same_grid(direction)?;
    control.check_same_grid(&data.bounds.lower)?;
    if eps.is_nan() || eps <= T::zero() {
        return Err(Error::Invalid(format!(
            "finite-difference step must be positive, got {}",
            eps.as_f64()
        )));
    }
    let g = &data.grid;

    let mut bad = 0usize;
    let mut first: Option<(usize, usize, usize)> = None;
    let tol = T::of(1e-12);
    for i in 0..=g.n_a() {
        for n in 0..=g.n_t() {
            for k in 0..g.n_x() {
                let u = control.at(i, n, k);
                let v = direction.at(i, n, k);
                let lo = data.bounds.lower.at(i, n, k);
                let hi = data.bounds.upper.at(i, n, k);
                let perturbed = u + eps * v;
                let out_of_box = perturbed < lo - tol || perturbed > hi + tol;
                let wrong_sign = ((u - lo).abs() <= tol && v < -tol)
                    || ((u - hi).abs() <= tol && v > tol && (hi - lo).abs() > tol);
                if out_of_box || wrong_sign {
                    bad += 1;
                    first.get_or_insert((i, n, k));
                }
            }
        }
    }
    if bad > 0 {
        let (age, time, x) = first.unwrap();
        return Err(Error::InadmissibleDirection {
            count: bad,
            age,
            time,
            x,
            reason: "u + eps v leaves the admissible box",
        });
    }

    let fwd_cfg = ForwardConfig::renewal();
    let state = forward_solve(data, control, &fwd_cfg)?;
    let costate = adjoint_solve(data, control, &AdjointConfig::default())?;
    let perturbed_control = Field::from_fn(g, |i, n, k| control.at(i, n, k) + eps * direction.at(i, n, k));
    let perturbed_state = forward_solve(data, &perturbed_control, &fwd_cfg)?;

    let fd_derivative =
        (objective(&perturbed_control, &perturbed_state) - objective(control, &state)) / eps;

    let mut acc = T::zero();
    for i in 0..g.n_a() {
        for n in 0..g.n_t() {
            for k in 0..g.n_x() {
                acc += direction.at(i, n, k)
                    * state.at(i, n, k)
                    * (costate.at(i, n, k) + T::one());
            }
        }
    }
    let adjoint_expression = acc * g.cell_volume();

    Ok(VariationalReport {
        fd_derivative,
        adjoint_expression,
        gap: (fd_derivative - adjoint_expression).abs(),
    })
}
