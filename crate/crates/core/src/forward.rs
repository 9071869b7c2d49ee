//! Forward (state) solver.
//!
//! One march step n -> n+1 is a Lie splitting:
//!
//! 1. transport-reaction: the exact lattice shift (i-1, n) -> (i, n+1)
//!    with integrating factor exp(-(mu - u) dt); the source enters with the
//!    midpoint factor dt * exp(-(mu - u) dt / 2);
//! 2. implicit diffusion per age row: (I - delta dt L) p_new = p, with L the
//!    periodic second-difference stencil [1, -2, 1]/dx^2;
//! 3. the a = 0 row is filled last, either from the renewal integral or from
//!    a prescribed boundary table.
//!
//! Every sub-step is a nonnegative operator (positive exponentials, the
//! nonnegative inverse of an M-matrix, nonnegative birth weights), so
//! nonnegative data produce nonnegative states exactly and node-wise
//! ordered data produce node-wise ordered states exactly, in floating point
//! and not just up to rounding. The implicit solve is applied through the
//! precomputed inverse column of the circulant, which is what makes the
//! second property literal.
//!
//! The renewal integral at time n+1 uses the freshly computed rows for ages
//! i >= 1 and the previous-time row for the newborn cell itself; this lag
//! removes the scalar implicit coupling and keeps every weight nonnegative.

use crate::error::{Error, Result};
use crate::grid::{AgeXSlice, Field, Grid, TimeXSlice};
use crate::model::{KernelWeights, Mortality, ProblemData};
use crate::scalar::Real;

/// Decay and source weights of the reaction step over one characteristic
/// segment with total rate `m = mu - u` evaluated at the segment's lower
/// (departure) node. Single code path shared by forward and adjoint marches,
/// so folding the control into the mortality is bit-identical.
#[inline]
pub(crate) fn reaction_factors<T: Real>(m: T, dt: T) -> (T, T) {
    let decay = (-(m * dt)).exp();
    let source_weight = dt * (-(m * dt / T::of(2.0))).exp();
    (decay, source_weight)
}

/// Implicit periodic diffusion operator (I - delta dt L)^{-1} on one row.
///
/// The inverse of the circulant M-matrix is itself a circulant with strictly
/// positive entries; its first column is computed in closed form from the
/// decaying root of the stencil's characteristic equation and applied as a
/// cyclic convolution. Row sums of the inverse are exactly 1 in exact
/// arithmetic, so the step conserves mass up to rounding.
#[derive(Debug, Clone)]
pub struct DiffusionOp<T> {
    n_x: usize,
    /// First column of the inverse; `None` when delta dt = 0 (identity).
    column: Option<Vec<T>>,
}

impl<T: Real> DiffusionOp<T> {
    pub fn new(grid: &Grid<T>, delta: T) -> Self {
        let n = grid.n_x();
        let gamma = delta * grid.dt() / (grid.dx() * grid.dx());
        if gamma == T::zero() {
            return DiffusionOp { n_x: n, column: None };
        }
        // Decaying root of  gamma r^2 - (1 + 2 gamma) r + gamma = 0,
        // written without cancellation for small gamma.
        let one = T::one();
        let two = T::of(2.0);
        let four = T::of(4.0);
        let r = two * gamma / (one + two * gamma + (one + four * gamma).sqrt());
        let rn = r.powi(grid.n_x() as i32);
        let scale = r / (gamma * (one - r * r) * (one - rn));
        let mut column = Vec::with_capacity(n);
        for j in 0..n {
            let rj = r.powi(j as i32);
            let rnj = r.powi((n - j) as i32);
            column.push(scale * (rj + rnj));
        }
        DiffusionOp { n_x: n, column: Some(column) }
    }

    pub fn is_identity(&self) -> bool {
        self.column.is_none()
    }

    /// Inverse-column entry j (identity column when delta dt = 0).
    pub fn column(&self) -> Vec<T> {
        match &self.column {
            Some(c) => c.clone(),
            None => {
                let mut c = vec![T::zero(); self.n_x];
                c[0] = T::one();
                c
            }
        }
    }

    /// Applies the inverse in place: row[k] <- sum_j col[j] row[k - j mod n].
    pub fn apply_row(&self, row: &mut [T], scratch: &mut Vec<T>) {
        let Some(col) = &self.column else { return };
        let n = self.n_x;
        debug_assert_eq!(row.len(), n);
        scratch.clear();
        scratch.extend_from_slice(row);
        for (k, out) in row.iter_mut().enumerate() {
            let mut acc = T::zero();
            for (j, &c) in col.iter().enumerate() {
                let src = if k >= j { k - j } else { k + n - j };
                acc += c * scratch[src];
            }
            *out = acc;
        }
    }
}

/// Transport-reaction sub-step: returns the time-(n+1) slice with rows
/// i >= 1 filled from departure nodes (i-1, n); row 0 is left at zero for
/// the boundary rule to fill.
pub fn step_transport_reaction<T: Real>(
    state: &Field<T>,
    n: usize,
    mortality: &Mortality<T>,
    control: &Field<T>,
    source: Option<&Field<T>>,
    grid: &Grid<T>,
) -> AgeXSlice<T> {
    let mut next = AgeXSlice::zeros(grid.n_a(), grid.n_x());
    transport_reaction_into(&state.age_slice(n), n, mortality, control, source, grid, &mut next);
    next
}

fn transport_reaction_into<T: Real>(
    current: &AgeXSlice<T>,
    n: usize,
    mortality: &Mortality<T>,
    control: &Field<T>,
    source: Option<&Field<T>>,
    grid: &Grid<T>,
    next: &mut AgeXSlice<T>,
) {
    let dt = grid.dt();
    for i in 1..=grid.n_a() {
        let dep = i - 1;
        for k in 0..grid.n_x() {
            let m = mortality.at(grid, dep, n, k) - control.at(dep, n, k);
            let (decay, source_weight) = reaction_factors(m, dt);
            let mut v = current.at(dep, k) * decay;
            if let Some(f) = source {
                v += f.at(dep, n, k) * source_weight;
            }
            *next.at_mut(i, k) = v;
        }
    }
}

/// Implicit diffusion sub-step applied to every age row of `slice`.
pub fn step_diffusion<T: Real>(slice: &mut AgeXSlice<T>, delta: T, grid: &Grid<T>) {
    let op = DiffusionOp::new(grid, delta);
    let mut scratch = Vec::new();
    for i in 0..=slice.n_a() {
        op.apply_row(slice.row_mut(i), &mut scratch);
    }
}

/// Renewal integral: newborn density for each x cell from the fertility-
/// weighted kernel average of `slice`. Left-endpoint rule in age (cells
/// i < n_a with weight da), midpoint in x through the kernel weights.
pub fn birth_boundary<T: Real>(
    slice: &AgeXSlice<T>,
    fertility: &[T],
    weights: &KernelWeights<T>,
    grid: &Grid<T>,
) -> Vec<T> {
    let da = grid.da();
    let mut b = vec![T::zero(); grid.n_x()];
    for (i, &beta) in fertility.iter().enumerate().take(grid.n_a()) {
        if beta == T::zero() {
            continue;
        }
        let row = slice.row(i);
        for (k, bk) in b.iter_mut().enumerate() {
            *bk += beta * weights.apply(k, row);
        }
    }
    for bk in b.iter_mut() {
        *bk *= da;
    }
    b
}

/// How the a = 0 row is produced during the march.
#[derive(Debug, Clone)]
pub enum ForwardMode<T> {
    /// Nonlocal renewal condition of the full model.
    Renewal,
    /// Prescribed boundary table b(t, x); entry n = 0 is ignored (the
    /// initial datum owns the corner).
    Prescribed(TimeXSlice<T>),
    /// Renewal reached through the contraction map on boundary traces.
    FixedPoint,
}

/// Forward-solve configuration. The fixed-point entries only matter in
/// [`ForwardMode::FixedPoint`].
#[derive(Debug, Clone)]
pub struct ForwardConfig<T> {
    pub mode: ForwardMode<T>,
    /// L2((0,T)x(0,24)) tolerance on the boundary update.
    pub fp_tol: T,
    pub fp_max_iter: usize,
    /// Starting boundary trace for the contraction iteration; zero when
    /// absent. Warm-starting from a renewal-mode trace converges
    /// immediately.
    pub fp_init: Option<TimeXSlice<T>>,
}

impl<T: Real> Default for ForwardConfig<T> {
    fn default() -> Self {
        ForwardConfig {
            mode: ForwardMode::Renewal,
            fp_tol: T::of(1e-12),
            fp_max_iter: 400,
            fp_init: None,
        }
    }
}

impl<T: Real> ForwardConfig<T> {
    pub fn renewal() -> Self {
        Self::default()
    }

    pub fn prescribed(boundary: TimeXSlice<T>) -> Self {
        ForwardConfig {
            mode: ForwardMode::Prescribed(boundary),
            ..Self::default()
        }
    }
}

/// Result of the fixed-point boundary iteration.
#[derive(Debug, Clone)]
pub struct FixedPointOutcome<T> {
    pub state: Field<T>,
    pub iterations: usize,
    pub residual_history: Vec<T>,
}

enum BoundaryRule<'a, T> {
    Renewal(&'a KernelWeights<T>),
    Prescribed(&'a TimeXSlice<T>),
}

/// Solves the state system for the given control. See the module docs for
/// the scheme; the returned field is finite (checked) and nonnegative
/// whenever the data are.
pub fn forward_solve<T: Real>(
    data: &ProblemData<T>,
    control: &Field<T>,
    cfg: &ForwardConfig<T>,
) -> Result<Field<T>> {
    match &cfg.mode {
        ForwardMode::Renewal => {
            let weights =
                KernelWeights::build(&data.grid, data.rates.kernel_halfwidth, data.birth_wrap)?;
            march(data, control, BoundaryRule::Renewal(&weights))
        }
        ForwardMode::Prescribed(b) => {
            if !b.conforms(&data.grid) {
                return Err(Error::ShapeMismatch {
                    what: "boundary",
                    got: b.n_t() + 1,
                    expected: data.grid.n_t() + 1,
                });
            }
            march(data, control, BoundaryRule::Prescribed(b))
        }
        ForwardMode::FixedPoint => forward_solve_fixed_point(data, control, cfg).map(|o| o.state),
    }
}

fn march<T: Real>(
    data: &ProblemData<T>,
    control: &Field<T>,
    rule: BoundaryRule<'_, T>,
) -> Result<Field<T>> {
    let grid = &data.grid;
    if !data.initial.conforms(grid) {
        return Err(Error::ShapeMismatch {
            what: "initial distribution",
            got: data.initial.values().len(),
            expected: (grid.n_a() + 1) * grid.n_x(),
        });
    }
    control.check_same_grid(&data.bounds.lower)?;
    if let Some(f) = &data.source {
        f.check_same_grid(control)?;
    }

    let fertility = data.rates.fertility.profile(grid);
    let diffusion = DiffusionOp::new(grid, data.rates.diffusivity);
    let mut scratch = Vec::new();

    let mut state = Field::zeros(grid);
    state.set_age_slice(0, &data.initial);
    if let Some((i, k, v)) = data.initial.first_non_finite() {
        return Err(Error::NonFinite { value: v.as_f64(), age: i, time: 0, x: k });
    }

    let mut current = data.initial.clone();
    for n in 0..grid.n_t() {
        let mut next = AgeXSlice::zeros(grid.n_a(), grid.n_x());
        transport_reaction_into(
            &current,
            n,
            &data.rates.mortality,
            control,
            data.source.as_ref(),
            grid,
            &mut next,
        );
        for i in 1..=grid.n_a() {
            diffusion.apply_row(next.row_mut(i), &mut scratch);
        }
        // Newborn cell of the renewal integrand is lagged one time level.
        next.row_mut(0).copy_from_slice(current.row(0));
        let newborn = match &rule {
            BoundaryRule::Renewal(weights) => birth_boundary(&next, &fertility, weights, grid),
            BoundaryRule::Prescribed(b) => b.row(n + 1).to_vec(),
        };
        next.row_mut(0).copy_from_slice(&newborn);
        if let Some((i, k, v)) = next.first_non_finite() {
            return Err(Error::NonFinite { value: v.as_f64(), age: i, time: n + 1, x: k });
        }
        state.set_age_slice(n + 1, &next);
        current = next;
    }
    Ok(state)
}

/// Applies the boundary map to a solved state: the renewal integral its
/// trace would have to satisfy, with the same newborn lag as the march.
fn boundary_map<T: Real>(
    state: &Field<T>,
    fertility: &[T],
    weights: &KernelWeights<T>,
    grid: &Grid<T>,
) -> TimeXSlice<T> {
    let mut out = TimeXSlice::zeros(grid.n_t(), grid.n_x());
    let first_level = state.age_slice(0);
    out.row_mut(0).copy_from_slice(first_level.row(0));
    for n in 1..=grid.n_t() {
        let mut slice = state.age_slice(n);
        let lagged: Vec<T> = (0..grid.n_x()).map(|k| state.at(0, n - 1, k)).collect();
        slice.row_mut(0).copy_from_slice(&lagged);
        let b = birth_boundary(&slice, fertility, weights, grid);
        out.row_mut(n).copy_from_slice(&b);
    }
    out
}

/// Solves the state system by iterating the boundary contraction map:
/// prescribe a trace, solve, recompute the renewal integral, repeat until
/// the L2 boundary update drops below `cfg.fp_tol`. The fixed point is the
/// renewal-mode solution of the same march, so the converged state agrees
/// with [`forward_solve`] up to the tolerance.
pub fn forward_solve_fixed_point<T: Real>(
    data: &ProblemData<T>,
    control: &Field<T>,
    cfg: &ForwardConfig<T>,
) -> Result<FixedPointOutcome<T>> {
    let grid = &data.grid;
    let weights = KernelWeights::build(grid, data.rates.kernel_halfwidth, data.birth_wrap)?;
    let fertility = data.rates.fertility.profile(grid);

    let mut boundary = match &cfg.fp_init {
        Some(init) => {
            if !init.conforms(grid) {
                return Err(Error::ShapeMismatch {
                    what: "fixed-point initial boundary",
                    got: init.n_t() + 1,
                    expected: grid.n_t() + 1,
                });
            }
            init.clone()
        }
        None => TimeXSlice::zeros(grid.n_t(), grid.n_x()),
    };
    // The t = 0 entry belongs to the initial datum and is never iterated.
    boundary
        .row_mut(0)
        .copy_from_slice(data.initial.row(0));
    let mut residual_history = Vec::new();

    for iteration in 1..=cfg.fp_max_iter {
        let state = march(data, control, BoundaryRule::Prescribed(&boundary))?;
        let mapped = boundary_map(&state, &fertility, &weights, grid);
        let mut acc = T::zero();
        for n in 1..=grid.n_t() {
            for k in 0..grid.n_x() {
                let d = mapped.at(n, k) - boundary.at(n, k);
                acc += d * d;
            }
        }
        let residual = (acc * grid.dt() * grid.dx()).sqrt();
        residual_history.push(residual);
        boundary = mapped;
        if residual < cfg.fp_tol {
            let state = march(data, control, BoundaryRule::Prescribed(&boundary))?;
            return Ok(FixedPointOutcome {
                state,
                iterations: iteration,
                residual_history,
            });
        }
    }
    Err(Error::FixedPointDiverged {
        max_iter: cfg.fp_max_iter,
        last: residual_history.last().map(|r| r.as_f64()).unwrap_or(f64::NAN),
        history: residual_history.iter().map(|r| r.as_f64()).collect(),
    })
}

/// Population mass per time level, sum over ages and cells of p da dx.
pub fn mass_by_time<T: Real>(state: &Field<T>) -> Vec<T> {
    let g = state.grid();
    (0..=g.n_t())
        .map(|n| {
            let mut acc = T::zero();
            for i in 0..=g.n_a() {
                for k in 0..g.n_x() {
                    acc += state.at(i, n, k);
                }
            }
            acc * g.da() * g.dx()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ControlBounds, Fertility, VitalRates};

    fn data(
        grid: &Grid<f64>,
        mortality: Mortality<f64>,
        fertility: Fertility<f64>,
        delta: f64,
        p0: AgeXSlice<f64>,
    ) -> ProblemData<f64> {
        ProblemData {
            grid: *grid,
            rates: VitalRates {
                mortality,
                fertility,
                diffusivity: delta,
                kernel_halfwidth: 6.0,
            },
            initial: p0,
            source: None,
            bounds: ControlBounds::constant(grid, -1.0, 0.0),
            birth_wrap: false,
        }
    }

    #[test]
    fn transport_is_exact_shift_without_reaction() {
        let g = Grid::<f64>::new(2.0, 1.0, 4, 8).unwrap();
        let state = Field::from_fn(&g, |i, n, k| (i * 100 + n * 10 + k) as f64);
        let u = Field::zeros(&g);
        let next = step_transport_reaction(&state, 0, &Mortality::Constant(0.0), &u, None, &g);
        for i in 1..=g.n_a() {
            for k in 0..g.n_x() {
                assert_eq!(next.at(i, k), state.at(i - 1, 0, k));
            }
        }
    }

    #[test]
    fn reaction_uses_departure_integrating_factor() {
        let g = Grid::<f64>::new(2.0, 1.0, 4, 8).unwrap(); // dt = 0.5
        let state = Field::constant(&g, 2.0);
        let zero = Field::zeros(&g);

        let next = step_transport_reaction(&state, 0, &Mortality::Constant(0.1), &zero, None, &g);
        let expected = 2.0 * (-0.05f64).exp();
        for i in 1..=g.n_a() {
            for k in 0..g.n_x() {
                assert!((next.at(i, k) - expected).abs() < 1e-15);
            }
        }

        // Control enters as +u p: u = -1 multiplies by exp(-0.5).
        let u = Field::constant(&g, -1.0);
        let next = step_transport_reaction(&state, 0, &Mortality::Constant(0.0), &u, None, &g);
        let expected = 2.0 * (-0.5f64).exp();
        for i in 1..=g.n_a() {
            assert!((next.at(i, 0) - expected).abs() < 1e-15);
        }
    }

    #[test]
    fn diffusion_fixes_constants_and_conserves_mass() {
        let g = Grid::<f64>::new(1.0, 1.0, 2, 32).unwrap();
        let mut slice = AgeXSlice::constant(&g, 3.25);
        step_diffusion(&mut slice, 1.7, &g);
        for k in 0..g.n_x() {
            assert!((slice.at(0, k) - 3.25).abs() < 1e-13);
        }

        let mut slice = AgeXSlice::from_fn(&g, |i, k| ((i + 1) * (k + 3) % 7) as f64 * 0.31);
        let before: f64 = slice.row(1).iter().sum();
        step_diffusion(&mut slice, 2.3, &g);
        let after: f64 = slice.row(1).iter().sum();
        assert!((before - after).abs() <= 1e-12 * before.abs());
    }

    #[test]
    fn diffusion_damps_fourier_mode_by_circulant_eigenvalue() {
        let g = Grid::<f64>::new(1.0, 1.0, 2, 64).unwrap();
        let delta = 1.3;
        let theta = 2.0 * std::f64::consts::PI / g.n_x() as f64;
        let mut slice = AgeXSlice::from_fn(&g, |_, k| (theta * k as f64).cos());
        step_diffusion(&mut slice, delta, &g);
        let lam = 2.0 * (1.0 - theta.cos()) / (g.dx() * g.dx());
        let factor = 1.0 / (1.0 + delta * g.dt() * lam);
        for k in 0..g.n_x() {
            let expected = factor * (theta * k as f64).cos();
            assert!((slice.at(0, k) - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn diffusion_solve_satisfies_stencil_residual() {
        // Independent check: the output must solve (I - delta dt L) out = in
        // with L applied directly from its definition.
        let g = Grid::<f64>::new(1.0, 1.0, 2, 24).unwrap();
        let delta = 0.8;
        let input = AgeXSlice::from_fn(&g, |_, k| ((k * k + 1) % 11) as f64 * 0.17);
        let mut out = input.clone();
        step_diffusion(&mut out, delta, &g);
        let c = delta * g.dt() / (g.dx() * g.dx());
        for k in 0..g.n_x() as isize {
            let n = g.n_x() as isize;
            let km = ((k - 1 + n) % n) as usize;
            let kp = ((k + 1) % n) as usize;
            let k = k as usize;
            let lhs = out.at(0, k) - c * (out.at(0, km) - 2.0 * out.at(0, k) + out.at(0, kp));
            assert!((lhs - input.at(0, k)).abs() < 1e-12);
        }
    }

    #[test]
    fn diffusion_zero_delta_is_identity() {
        let g = Grid::<f64>::new(1.0, 1.0, 2, 16).unwrap();
        let slice = AgeXSlice::from_fn(&g, |i, k| (i + k) as f64);
        let mut out = slice.clone();
        step_diffusion(&mut out, 0.0, &g);
        assert_eq!(slice, out);
    }

    #[test]
    fn diffusion_kernel_is_nonnegative_with_unit_mass() {
        // Entries are positive in exact arithmetic; far-off-diagonal ones
        // may underflow to zero for tiny delta dt, which is harmless.
        let g = Grid::<f64>::new(1.0, 1.0, 2, 128).unwrap();
        for delta in [1e-9, 1e-3, 1.0, 250.0] {
            let op = DiffusionOp::new(&g, delta);
            let col = op.column();
            assert!(col.iter().all(|&c| c >= 0.0), "delta={delta}");
            assert!(col[0] > 0.0);
            let mass: f64 = col.iter().sum();
            assert!((mass - 1.0).abs() < 1e-12, "delta={delta}: mass {mass}");
        }
    }

    #[test]
    fn birth_boundary_zero_cases() {
        let g = Grid::<f64>::new(2.0, 1.0, 4, 16).unwrap();
        let w = KernelWeights::build(&g, 6.0, false).unwrap();
        let beta = Fertility::Constant(0.7).profile(&g);

        let zero = AgeXSlice::zeros(g.n_a(), g.n_x());
        assert!(birth_boundary(&zero, &beta, &w, &g).iter().all(|&b| b == 0.0));

        let ones = AgeXSlice::constant(&g, 1.0);
        let none = Fertility::Constant(0.0).profile(&g);
        assert!(birth_boundary(&ones, &none, &w, &g).iter().all(|&b| b == 0.0));
    }

    #[test]
    fn birth_boundary_matches_gaussian_moment() {
        // p = 1, beta = b0, deep interior, eta = 6, fine x grid:
        // b ~ b0 * a_max * sqrt(pi)/2.
        let g = Grid::<f64>::new(2.0, 1.0, 4, 512).unwrap();
        let w = KernelWeights::build(&g, 6.0, false).unwrap();
        let b0 = 0.7;
        let beta = Fertility::Constant(b0).profile(&g);
        let ones = AgeXSlice::constant(&g, 1.0);
        let b = birth_boundary(&ones, &beta, &w, &g);
        let expected = b0 * g.a_max() * std::f64::consts::PI.sqrt() / 2.0;
        let mid = g.n_x() / 2;
        assert!(
            (b[mid] - expected).abs() < 2e-3 * expected,
            "b = {}, expected {expected}",
            b[mid]
        );
    }

    #[test]
    fn forward_matches_pure_decay_closed_form() {
        // delta = 0, beta = 0, mu = 0.1, p0 = 1, T = 1:
        // p(a, 1, x) = exp(-0.1) for a > 1, p = 0 for a < 1.
        let g = Grid::<f64>::new(2.0, 1.0, 20, 8).unwrap();
        let d = data(&g, Mortality::Constant(0.1), Fertility::Constant(0.0), 0.0,
                     AgeXSlice::constant(&g, 1.0));
        let u = Field::zeros(&g);
        let p = forward_solve(&d, &u, &ForwardConfig::renewal()).unwrap();
        let expected = (-0.1f64).exp();
        let nt = g.n_t();
        for i in 0..=g.n_a() {
            for k in 0..g.n_x() {
                let v = p.at(i, nt, k);
                if i > nt {
                    assert!((v - expected).abs() < 1e-12 * expected);
                } else if i < nt {
                    assert_eq!(v, 0.0);
                }
            }
        }
    }

    #[test]
    fn forward_matches_heat_decay_first_order() {
        // mu = beta = 0, p0 = cos(2 pi x / 24), delta = 1, T = 1:
        // p ~ exp(-(pi/12)^2) cos(2 pi x/24) on a > t, first order in dt.
        let g = Grid::<f64>::new(2.0, 1.0, 64, 32).unwrap();
        let p0 = AgeXSlice::from_fn(&g, |_, k| (2.0 * std::f64::consts::PI * g.x_center(k) / 24.0).cos());
        let d = data(&g, Mortality::Constant(0.0), Fertility::Constant(0.0), 1.0, p0);
        let u = Field::zeros(&g);
        let p = forward_solve(&d, &u, &ForwardConfig::renewal()).unwrap();
        let lam = (std::f64::consts::PI / 12.0).powi(2);
        let nt = g.n_t();
        for k in 0..g.n_x() {
            let expected = (-lam).exp() * (2.0 * std::f64::consts::PI * g.x_center(k) / 24.0).cos();
            let v = p.at(g.n_a(), nt, k);
            assert!((v - expected).abs() < 3.0 * g.dt() * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn harvested_run_lies_below_unharvested() {
        let g = Grid::<f64>::new(1.0, 1.0, 8, 8).unwrap();
        let d = data(&g, Mortality::Constant(0.3), Fertility::Constant(0.5), 0.7,
                     AgeXSlice::constant(&g, 1.0));
        let cfg = ForwardConfig::renewal();
        let p_free = forward_solve(&d, &Field::zeros(&g), &cfg).unwrap();
        let p_harv = forward_solve(&d, &Field::constant(&g, -0.4), &cfg).unwrap();
        for (a, b) in p_harv.values().iter().zip(p_free.values()) {
            assert!(a <= b && *a >= 0.0);
        }
    }

    #[test]
    fn prescribed_boundary_is_copied() {
        let g = Grid::<f64>::new(1.0, 1.0, 4, 8).unwrap();
        let d = data(&g, Mortality::Constant(0.2), Fertility::Constant(0.4), 0.5,
                     AgeXSlice::constant(&g, 1.0));
        let b = TimeXSlice::from_fn(&g, |n, k| 0.1 * n as f64 + 0.01 * k as f64);
        let p = forward_solve(&d, &Field::zeros(&g), &ForwardConfig::prescribed(b.clone())).unwrap();
        for n in 1..=g.n_t() {
            for k in 0..g.n_x() {
                assert_eq!(p.at(0, n, k), b.at(n, k));
            }
        }
        // Corner belongs to the initial datum.
        assert_eq!(p.at(0, 0, 0), 1.0);
    }

    #[test]
    fn fixed_point_trivial_when_no_births() {
        let g = Grid::<f64>::new(1.0, 1.0, 4, 8).unwrap();
        let d = data(&g, Mortality::Constant(0.2), Fertility::Constant(0.0), 0.5,
                     AgeXSlice::constant(&g, 1.0));
        let out = forward_solve_fixed_point(&d, &Field::zeros(&g), &ForwardConfig::renewal()).unwrap();
        assert_eq!(out.iterations, 1);
        for n in 1..=g.n_t() {
            for k in 0..g.n_x() {
                assert_eq!(out.state.at(0, n, k), 0.0);
            }
        }
    }

    #[test]
    fn fixed_point_agrees_with_renewal_and_decays_geometrically() {
        let g = Grid::<f64>::new(1.0, 1.0, 8, 12).unwrap();
        let d = data(&g, Mortality::Constant(0.1), Fertility::Constant(0.3), 0.4,
                     AgeXSlice::constant(&g, 1.0));
        let u = Field::constant(&g, -0.2);
        let mut cfg = ForwardConfig::renewal();
        cfg.fp_tol = 1e-13;
        let out = forward_solve_fixed_point(&d, &u, &cfg).unwrap();
        let renewal = forward_solve(&d, &u, &ForwardConfig::renewal()).unwrap();
        let diff = out.state.l2_cells_diff(&renewal).unwrap();
        let norm = renewal.l2_cells();
        assert!(diff <= 1e-10 * norm, "diff {diff} vs norm {norm}");

        // Residuals decay roughly geometrically after the first step.
        let h = &out.residual_history;
        assert!(h.len() >= 3);
        for w in h.windows(2) {
            if w[0] > 1e-14 {
                assert!(w[1] < w[0], "residuals should decrease: {h:?}");
            }
        }
    }

    #[test]
    fn fixed_point_warm_start_from_renewal_converges_immediately() {
        let g = Grid::<f64>::new(1.0, 1.0, 8, 12).unwrap();
        let d = data(&g, Mortality::Constant(0.1), Fertility::Constant(0.3), 0.4,
                     AgeXSlice::constant(&g, 1.0));
        let u = Field::constant(&g, -0.2);
        let renewal = forward_solve(&d, &u, &ForwardConfig::renewal()).unwrap();
        let mut cfg = ForwardConfig::renewal();
        cfg.fp_tol = 1e-12;
        cfg.fp_init = Some(renewal.boundary_trace());
        let out = forward_solve_fixed_point(&d, &u, &cfg).unwrap();
        assert_eq!(out.iterations, 1, "residuals: {:?}", out.residual_history);
        assert!(out.residual_history[0] < 1e-12);
    }

    #[test]
    fn fixed_point_nonconvergence_carries_history() {
        let g = Grid::<f64>::new(1.0, 1.0, 4, 8).unwrap();
        let d = data(&g, Mortality::Constant(0.0), Fertility::Constant(1.5), 0.0,
                     AgeXSlice::constant(&g, 1.0));
        let mut cfg = ForwardConfig::renewal();
        cfg.fp_tol = 1e-16;
        cfg.fp_max_iter = 2;
        match forward_solve_fixed_point(&d, &Field::zeros(&g), &cfg) {
            Err(Error::FixedPointDiverged { history, .. }) => assert_eq!(history.len(), 2),
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn non_finite_input_is_reported_with_node() {
        // No births, so the injected infinity stays on its characteristic
        // and the diagnostic points at its first transported location.
        let g = Grid::<f64>::new(1.0, 1.0, 4, 8).unwrap();
        let mut d = data(&g, Mortality::Constant(0.1), Fertility::Constant(0.0), 0.0,
                         AgeXSlice::constant(&g, 1.0));
        let mut f = Field::zeros(&g);
        *f.at_mut(2, 1, 3) = f64::INFINITY;
        d.source = Some(f);
        match forward_solve(&d, &Field::zeros(&g), &ForwardConfig::renewal()) {
            Err(Error::NonFinite { age, time, x, .. }) => {
                assert_eq!((age, time, x), (3, 2, 3));
            }
            other => panic!("expected NonFinite, got {other:?}"),
        }
    }
}
