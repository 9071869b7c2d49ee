//! Executable property suites binding the solvers to the model's
//! analytical guarantees: the comparison principle, the energy bound for
//! prescribed-boundary runs, the discrete integral inequality, and the
//! eigenstructure of the implicit diffusion step.
//!
//! The comparison suite asserts with zero tolerance: the scheme is composed
//! of nonnegative operators, so any violation is a bug, not rounding.
//! Energy bounds carry a slack factor 2 because discrete and continuous
//! norms differ at O(dt). Randomized trials draw latin-hypercube samples
//! over the parameter ranges documented on the generators and record their
//! seed in the report.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::forward::{forward_solve, DiffusionOp, ForwardConfig};
use crate::grid::{AgeXSlice, Field, Grid, TimeXSlice};
use crate::model::{ControlBounds, Fertility, Mortality, ProblemData, VitalRates};
use crate::scalar::Real;

/// Outcome of one property suite. `passed` holds exactly when
/// `worst_violation` does not exceed the suite's tolerance (zero for the
/// comparison suite, one for normalized ratios).
#[derive(Debug, Clone, Serialize)]
pub struct PropertyReport {
    pub name: String,
    pub passed: bool,
    pub worst_violation: f64,
    pub location: Option<[usize; 3]>,
    pub details: String,
}

/// A pair of problem instances ordered so that the first one's solution
/// must lie below the second's: mu_small >= mu_large node-wise while
/// fertility, source and initial datum are node-wise smaller, with grid,
/// diffusivity, kernel window and control shared.
#[derive(Debug, Clone)]
pub struct OrderedPair<T> {
    pub smaller: ProblemData<T>,
    pub larger: ProblemData<T>,
    pub control: Field<T>,
}

fn check_pair_ordered<T: Real>(pair: &OrderedPair<T>) -> Result<()> {
    let (lo, hi) = (&pair.smaller, &pair.larger);
    if lo.grid != hi.grid {
        return Err(Error::GridMismatch);
    }
    if lo.rates.diffusivity != hi.rates.diffusivity
        || lo.rates.kernel_halfwidth != hi.rates.kernel_halfwidth
        || lo.birth_wrap != hi.birth_wrap
    {
        return Err(Error::Invalid(
            "comparison pair must share diffusivity, kernel window and wrap mode".into(),
        ));
    }
    let g = &lo.grid;
    for i in 0..=g.n_a() {
        let b_lo = lo.rates.fertility.at_age(g.age(i));
        let b_hi = hi.rates.fertility.at_age(g.age(i));
        if b_lo > b_hi {
            return Err(Error::UnorderedPair { what: "fertility", age: i, time: 0, x: 0 });
        }
        for k in 0..g.n_x() {
            if lo.initial.at(i, k) > hi.initial.at(i, k) {
                return Err(Error::UnorderedPair { what: "initial datum", age: i, time: 0, x: k });
            }
            for n in 0..=g.n_t() {
                if lo.rates.mortality.at(g, i, n, k) < hi.rates.mortality.at(g, i, n, k) {
                    return Err(Error::UnorderedPair { what: "mortality", age: i, time: n, x: k });
                }
                let f_lo = lo.source.as_ref().map_or(T::zero(), |f| f.at(i, n, k));
                let f_hi = hi.source.as_ref().map_or(T::zero(), |f| f.at(i, n, k));
                if f_lo > f_hi {
                    return Err(Error::UnorderedPair { what: "source", age: i, time: n, x: k });
                }
            }
        }
    }
    Ok(())
}

/// Runs both solves of every ordered pair and verifies 0 <= p_small <=
/// p_large at every node, exactly. Reports the largest violation
/// max(p_small - p_large, -p_small) clamped at zero.
pub fn comparison_suite<T: Real>(pairs: &[OrderedPair<T>]) -> Result<PropertyReport> {
    let cfg = ForwardConfig::renewal();
    let mut worst = f64::NEG_INFINITY;
    let mut location = None;
    for (idx, pair) in pairs.iter().enumerate() {
        check_pair_ordered(pair)?;
        let p_small = forward_solve(&pair.smaller, &pair.control, &cfg)?;
        let p_large = forward_solve(&pair.larger, &pair.control, &cfg)?;
        let g = &pair.smaller.grid;
        for i in 0..=g.n_a() {
            for n in 0..=g.n_t() {
                for k in 0..g.n_x() {
                    let a = p_small.at(i, n, k).as_f64();
                    let b = p_large.at(i, n, k).as_f64();
                    let v = (a - b).max(-a);
                    if v > worst {
                        worst = v;
                        location = Some([i, n, k]);
                    }
                }
            }
        }
        let _ = idx;
    }
    let worst_violation = worst.max(0.0);
    Ok(PropertyReport {
        name: "comparison".into(),
        passed: worst_violation <= 0.0,
        worst_violation,
        location: if worst_violation > 0.0 { location } else { None },
        details: format!(
            "{} ordered pair(s); signed worst margin {:.3e} (negative means strict order)",
            pairs.len(),
            worst
        ),
    })
}

/// Prescribed-boundary energy bound with slack factor 2:
///
///   ||p||^2 <= 2 e^T (||p0||^2 + ||b||^2 + ||f - mu p||^2)
///
/// in the discrete norms (da dt dx over cells; da dx for p0; dt dx for b).
/// The report's `worst_violation` is the achieved ratio LHS/RHS; the suite
/// passes when it does not exceed 1.
pub fn energy_bound_suite<T: Real>(
    data: &ProblemData<T>,
    boundary: &TimeXSlice<T>,
) -> Result<PropertyReport> {
    let g = &data.grid;
    let control = Field::zeros(g);
    let state = forward_solve(data, &control, &ForwardConfig::prescribed(boundary.clone()))?;

    let mut lhs = T::zero();
    let mut defect = T::zero();
    for i in 0..g.n_a() {
        for n in 0..g.n_t() {
            for k in 0..g.n_x() {
                let p = state.at(i, n, k);
                lhs += p * p;
                let f = data.source.as_ref().map_or(T::zero(), |f| f.at(i, n, k));
                let d = f - data.rates.mortality.at(g, i, n, k) * p;
                defect += d * d;
            }
        }
    }
    lhs *= g.cell_volume();
    defect *= g.cell_volume();

    let mut p0 = T::zero();
    for i in 0..g.n_a() {
        for k in 0..g.n_x() {
            let v = data.initial.at(i, k);
            p0 += v * v;
        }
    }
    p0 *= g.da() * g.dx();
    let b2 = {
        let n = boundary.l2_cells(g);
        n * n
    };

    let rhs = T::of(2.0) * g.t_max().exp() * (p0 + b2 + defect);
    let ratio = if rhs > T::zero() {
        (lhs / rhs).as_f64()
    } else if lhs > T::zero() {
        f64::INFINITY
    } else {
        0.0
    };
    Ok(PropertyReport {
        name: "energy".into(),
        passed: ratio <= 1.0,
        worst_violation: ratio,
        location: None,
        details: format!(
            "||p||^2 = {:.6e}, bound 2 e^T (||p0||^2 + ||b||^2 + ||f - mu p||^2) = {:.6e}, ratio {:.3e}",
            lhs.as_f64(),
            rhs.as_f64(),
            ratio
        ),
    })
}

/// Discrete integral-inequality check: given samples x_n, nonnegative
/// weights psi_n, a constant M >= 0 and the step dt, first verifies the
/// hypothesis x_n <= M + sum_{m<n} psi_m x_m dt (with 1e-12 relative
/// slack); a violated hypothesis is a rejection, not a failed conclusion.
/// Then asserts x_n <= M exp(sum_{m<n} psi_m dt) (1 + 1e-9).
pub fn gronwall_check(x: &[f64], psi: &[f64], m: f64, dt: f64) -> Result<PropertyReport> {
    if x.is_empty() {
        return Err(Error::Invalid("empty sample series".into()));
    }
    if psi.len() + 1 < x.len() {
        return Err(Error::Invalid(format!(
            "need at least {} weights for {} samples, got {}",
            x.len() - 1,
            x.len(),
            psi.len()
        )));
    }
    if psi.iter().any(|&p| p < 0.0 || !p.is_finite()) {
        return Err(Error::Invalid("weights must be nonnegative and finite".into()));
    }
    if m.is_nan() || m < 0.0 {
        return Err(Error::Invalid(format!("constant must be nonnegative, got {m}")));
    }

    let mut partial = 0.0; // sum_{m<n} psi_m x_m dt
    for (n, &xn) in x.iter().enumerate() {
        let rhs = m + partial;
        if xn > rhs + 1e-12 * (1.0 + rhs.abs()) {
            return Err(Error::GronwallHypothesis { index: n });
        }
        if n < x.len() - 1 {
            partial += psi[n] * xn * dt;
        }
    }

    let mut worst = f64::NEG_INFINITY;
    let mut at = 0usize;
    let mut weight_sum = 0.0f64;
    for (n, &xn) in x.iter().enumerate() {
        let bound = m * weight_sum.exp() * (1.0 + 1e-9);
        let excess = xn - bound;
        if excess > worst {
            worst = excess;
            at = n;
        }
        if n < x.len() - 1 {
            weight_sum += psi[n] * dt;
        }
    }
    let worst_violation = worst.max(0.0);
    Ok(PropertyReport {
        name: "gronwall".into(),
        passed: worst_violation <= 0.0,
        worst_violation,
        location: Some([at, 0, 0]),
        details: format!(
            "{} samples, M = {:.6e}, total weight {:.6e}, worst signed excess {:.3e}",
            x.len(),
            m,
            weight_sum,
            worst
        ),
    })
}

/// Squared L2(a, x) norm of the state per time level (da dx over age cells):
/// the series the instrumented integral-inequality check consumes.
pub fn state_norm_series<T: Real>(state: &Field<T>) -> Vec<f64> {
    let g = state.grid();
    (0..=g.n_t())
        .map(|n| {
            let mut acc = T::zero();
            for i in 0..g.n_a() {
                for k in 0..g.n_x() {
                    let v = state.at(i, n, k);
                    acc += v * v;
                }
            }
            (acc * g.da() * g.dx()).as_f64()
        })
        .collect()
}

/// Growth-rate weights for the instrumented check: twice the positive part
/// of the largest net growth rate u - mu over the nodes of each time level.
/// Zero for admissible (nonpositive) controls and nonnegative mortality.
pub fn growth_rate_bound<T: Real>(data: &ProblemData<T>, control: &Field<T>) -> Vec<f64> {
    let g = &data.grid;
    (0..g.n_t())
        .map(|n| {
            let mut worst = f64::NEG_INFINITY;
            for i in 0..=g.n_a() {
                for k in 0..g.n_x() {
                    let rate = control.at(i, n, k) - data.rates.mortality.at(g, i, n, k);
                    worst = worst.max(rate.as_f64());
                }
            }
            2.0 * worst.max(0.0)
        })
        .collect()
}

/// Verifies the implicit diffusion step against the circulant
/// eigenstructure: discrete Fourier mode j is damped by exactly
/// 1/(1 + delta dt lambda_j) with lambda_j = 2(1 - cos(2 pi j / n_x))/dx^2,
/// modes j and n_x - j damp identically, and lambda_1 approaches the
/// continuum periodic eigenvalue (pi/12)^2 as the grid refines (checked at
/// 0.1% once n_x >= 64).
pub fn eigen_oracle<T: Real>(grid: &Grid<T>, delta: T) -> PropertyReport {
    let op = DiffusionOp::new(grid, delta);
    let n = grid.n_x();
    let dt = grid.dt().as_f64();
    let dx = grid.dx().as_f64();
    let d = delta.as_f64();

    let damping_of = |j: usize| -> (f64, f64) {
        // Rayleigh quotient of the applied inverse on the sampled mode.
        let mut row: Vec<T> = (0..n)
            .map(|k| {
                let th = 2.0 * std::f64::consts::PI * (j * k) as f64 / n as f64;
                T::of(th.cos())
            })
            .collect();
        let before: f64 = row.iter().map(|v| v.as_f64() * v.as_f64()).sum();
        let orig = row.clone();
        let mut scratch = Vec::new();
        op.apply_row(&mut row, &mut scratch);
        let dot: f64 = row.iter().zip(&orig).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
        let lambda = 2.0 * (1.0 - (2.0 * std::f64::consts::PI * j as f64 / n as f64).cos()) / (dx * dx);
        let predicted = 1.0 / (1.0 + d * dt * lambda);
        (dot / before, predicted)
    };

    let mut worst = 0.0f64;
    let mut details = String::new();
    let modes = [0usize, 1, 2, n / 2, n - 2, n - 1];
    for &j in modes.iter() {
        if j > n {
            continue;
        }
        let (measured, predicted) = damping_of(j);
        let rel = ((measured - predicted) / predicted).abs();
        worst = worst.max(rel);
        details.push_str(&format!("j={j}: damping {measured:.15e} vs {predicted:.15e}; "));
    }

    // Circulant symmetry: j and n - j damp identically.
    for &j in &[1usize, 2] {
        let (a, _) = damping_of(j);
        let (b, _) = damping_of(n - j);
        worst = worst.max((a - b).abs());
    }

    // Continuum limit of the first eigenvalue; the 0.1% check only means
    // something once the grid resolves the mode (n_x >= 64).
    let lambda_1 = 2.0 * (1.0 - (2.0 * std::f64::consts::PI / n as f64).cos()) / (dx * dx);
    let continuum = (std::f64::consts::PI / 12.0).powi(2);
    let eig_rel = ((lambda_1 - continuum) / continuum).abs();
    details.push_str(&format!("lambda_1 = {lambda_1:.9e} vs continuum {continuum:.9e} (rel {eig_rel:.2e})"));
    let continuum_ok = n < 64 || eig_rel <= 1e-3;

    PropertyReport {
        name: "eigen".into(),
        passed: worst <= 1e-12 && continuum_ok,
        worst_violation: if continuum_ok { worst } else { worst.max(eig_rel) },
        location: None,
        details,
    }
}

/// Latin-hypercube draw: `count` samples in [0,1)^dims, one stratum per
/// sample and dimension.
pub fn latin_hypercube(rng: &mut StdRng, count: usize, dims: usize) -> Vec<Vec<f64>> {
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(dims);
    for _ in 0..dims {
        let mut strata: Vec<usize> = (0..count).collect();
        strata.shuffle(rng);
        columns.push(
            strata
                .into_iter()
                .map(|s| (s as f64 + rng.random::<f64>()) / count as f64)
                .collect(),
        );
    }
    (0..count).map(|i| columns.iter().map(|c| c[i]).collect()).collect()
}

fn lerp(lo: f64, hi: f64, t: f64) -> f64 {
    lo + (hi - lo) * t
}

/// Randomized ordered pairs for the comparison suite. Latin-hypercube
/// ranges: grids up to 40 x 40 x 32 over a_max in [0.5, 3]; mortality base
/// in [0, 1.5] plus a gap in [0, 1.5] (tabulated fields on odd indices,
/// constants on even); fertility in [0, 0.8] scaled down for the smaller
/// run; diffusivity in [0, 2]; window in [1, 12]; initial data and source
/// amplitudes in [0, 2] and [0, 1]; shared control level in [-1, 0].
pub fn random_ordered_pairs<T: Real>(seed: u64, count: usize) -> Vec<OrderedPair<T>> {
    let mut rng = StdRng::seed_from_u64(seed);
    let samples = latin_hypercube(&mut rng, count, 11);
    let mut pairs = Vec::with_capacity(count);
    for (idx, s) in samples.iter().enumerate() {
        let n_a = lerp(4.0, 40.0, s[0]).round() as usize;
        let n_t = lerp(2.0, 40.0, s[1]).round() as usize;
        let n_x = lerp(4.0, 32.0, s[2]).round() as usize;
        let a_max = lerp(0.5, 3.0, s[3]);
        let da = a_max / n_a as f64;
        let grid = Grid::<T>::new(T::of(a_max), T::of(n_t as f64 * da), n_a, n_x)
            .expect("generator grids are commensurate by construction");

        let mu_base = lerp(0.0, 1.5, s[4]);
        let mu_gap = lerp(0.0, 1.5, s[5]);
        let b0 = lerp(0.0, 0.8, s[6]);
        let beta_frac = s[7];
        let delta = T::of(lerp(0.0, 2.0, s[8]));
        let eta = T::of(lerp(1.0, 12.0, s[9]));
        let u_amp = lerp(0.0, 1.0, s[10]);

        let (mu_small, mu_large) = if idx % 2 == 1 {
            // Tabulated mu(a, t, x): larger-solution run gets the smaller rate.
            let low = Field::from_fn(&grid, |_, _, _| T::of(mu_base * rng.random::<f64>()));
            let gap = Field::from_fn(&grid, |_, _, _| T::of(mu_gap * rng.random::<f64>()));
            let high = Field::from_fn(&grid, |i, n, k| low.at(i, n, k) + gap.at(i, n, k));
            (Mortality::Tabulated(high), Mortality::Tabulated(low))
        } else {
            (
                Mortality::Constant(T::of(mu_base + mu_gap)),
                Mortality::Constant(T::of(mu_base)),
            )
        };

        let p0_large = AgeXSlice::from_fn(&grid, |_, _| T::of(lerp(0.2, 2.0, rng.random::<f64>())));
        let p0_scale = T::of(rng.random::<f64>());
        let p0_small = AgeXSlice::from_fn(&grid, |i, k| p0_large.at(i, k) * p0_scale);

        let f_large = Field::from_fn(&grid, |_, _, _| T::of(rng.random::<f64>()));
        let f_scale = T::of(rng.random::<f64>());
        let f_small = Field::from_fn(&grid, |i, n, k| f_large.at(i, n, k) * f_scale);

        let control = Field::from_fn(&grid, |_, _, _| T::of(-u_amp * rng.random::<f64>()));
        let bounds = ControlBounds::constant(&grid, T::of(-2.0), T::zero());

        let make = |mortality: Mortality<T>, beta: f64, initial: AgeXSlice<T>, source: Field<T>| ProblemData {
            grid,
            rates: VitalRates {
                mortality,
                fertility: Fertility::Constant(T::of(beta)),
                diffusivity: delta,
                kernel_halfwidth: eta,
            },
            initial,
            source: Some(source),
            bounds: bounds.clone(),
            birth_wrap: false,
        };

        pairs.push(OrderedPair {
            smaller: make(mu_small, b0 * beta_frac, p0_small, f_small),
            larger: make(mu_large, b0, p0_large, f_large),
            control,
        });
    }
    pairs
}

/// Randomized prescribed-boundary trials for the energy suite on a fixed
/// grid: constant mortality in [0, 3], diffusivity in [0, 2], nonnegative
/// node-wise uniform initial data (amplitude 2), source (1.5) and boundary
/// trace (2).
pub fn random_energy_trials<T: Real>(
    grid: &Grid<T>,
    seed: u64,
    count: usize,
) -> Vec<(ProblemData<T>, TimeXSlice<T>)> {
    let mut rng = StdRng::seed_from_u64(seed);
    let samples = latin_hypercube(&mut rng, count, 2);
    samples
        .iter()
        .map(|s| {
            let mu = lerp(0.0, 3.0, s[0]);
            let delta = lerp(0.0, 2.0, s[1]);
            let data = ProblemData {
                grid: *grid,
                rates: VitalRates {
                    mortality: Mortality::Constant(T::of(mu)),
                    fertility: Fertility::Constant(T::zero()),
                    diffusivity: T::of(delta),
                    kernel_halfwidth: T::of(6.0),
                },
                initial: AgeXSlice::from_fn(grid, |_, _| T::of(2.0 * rng.random::<f64>())),
                source: Some(Field::from_fn(grid, |_, _, _| T::of(1.5 * rng.random::<f64>()))),
                bounds: ControlBounds::constant(grid, T::of(-1.0), T::zero()),
                birth_wrap: false,
            };
            let boundary = TimeXSlice::from_fn(grid, |_, _| T::of(2.0 * rng.random::<f64>()));
            (data, boundary)
        })
        .collect()
}

/// Which suites to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuiteKind {
    Comparison,
    Energy,
    Gronwall,
    Eigen,
}

/// Trial counts for the randomized suites.
#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub seed: u64,
    pub comparison_pairs: usize,
    pub energy_trials: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { seed: 0, comparison_pairs: 25, energy_trials: 20 }
    }
}

/// Runs the requested suites against a base problem (supplies the grid,
/// diffusivity and rates where a suite needs concrete data) and returns one
/// report per suite, seeds logged in the details.
pub fn run_suites(
    data: &ProblemData<f64>,
    which: &[SuiteKind],
    opts: &SuiteOptions,
) -> Result<Vec<PropertyReport>> {
    let mut reports = Vec::new();
    for kind in which {
        match kind {
            SuiteKind::Comparison => {
                let pairs = random_ordered_pairs::<f64>(opts.seed, opts.comparison_pairs);
                let mut r = comparison_suite(&pairs)?;
                r.details = format!("seed {}; {}", opts.seed, r.details);
                reports.push(r);
            }
            SuiteKind::Energy => {
                let trials = random_energy_trials(&data.grid, opts.seed, opts.energy_trials);
                let mut worst: Option<PropertyReport> = None;
                for (trial, boundary) in &trials {
                    let r = energy_bound_suite(trial, boundary)?;
                    if worst.as_ref().is_none_or(|w| r.worst_violation > w.worst_violation) {
                        worst = Some(r);
                    }
                }
                let mut r = worst.expect("at least one trial");
                r.details = format!(
                    "seed {}; worst of {} randomized trials: {}",
                    opts.seed,
                    trials.len(),
                    r.details
                );
                reports.push(r);
            }
            SuiteKind::Gronwall => {
                let control = data.bounds.lower.clone();
                let state = forward_solve(data, &control, &ForwardConfig::renewal())?;
                let series = state_norm_series(&state);
                let psi = growth_rate_bound(data, &control);
                let mut r = gronwall_check(&series, &psi, series[0], data.grid.dt().as_f64())?;
                r.details = format!("instrumented state norms; {}", r.details);
                reports.push(r);
            }
            SuiteKind::Eigen => {
                reports.push(eigen_oracle(&data.grid, data.rates.diffusivity));
            }
        }
    }
    Ok(reports)
}
