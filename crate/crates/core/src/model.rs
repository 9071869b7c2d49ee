//! Vital rates, the biting-time adaptation kernel, control bounds and
//! hypothesis validation.
//!
//! Mortality and fertility are nonnegative functions of age; mortality may
//! blow up at the age horizon and is then truncated at a cap, the same
//! regularization the well-posedness theory uses. Newborns redistribute
//! their biting time through the kernel
//! `K(x, s) = (x-s)^2 exp(-(x-s)^2)` for s in (0, 24), zero otherwise,
//! restricted to a window of half-width eta around the parent's time x.

use crate::error::{Error, Result};
use crate::grid::{AgeXSlice, Field, Grid};
use crate::scalar::Real;

/// Birth-kernel value K(x, s). Vanishes for s outside (0, 24).
pub fn kernel_eval<T: Real>(x: T, s: T) -> T {
    if s <= T::zero() || s >= T::of(24.0) {
        return T::zero();
    }
    let r = x - s;
    r * r * (-(r * r)).exp()
}

/// Midpoint quadrature weights for the windowed kernel integral.
///
/// For each x cell center x_k the weight table approximates
/// `integral over (x_k - eta, x_k + eta) of K(x_k, s) g(s) ds` by
/// `sum_l w_{k,l} g(s_l)` with `w_{k,l} = K(x_k, s_l) * |cell_l ∩ window|`.
/// All weights are nonnegative, which is what keeps births monotone in the
/// population and the discrete comparison principle exact.
#[derive(Debug, Clone)]
pub struct KernelWeights<T> {
    eta: T,
    wrap: bool,
    /// Per x cell: (source cell index, weight) pairs.
    rows: Vec<Vec<(usize, T)>>,
}

impl<T: Real> KernelWeights<T> {
    /// Builds the table for `grid` and window half-width `eta` (hours).
    ///
    /// With `wrap = false` the kernel's zero branch truncates the window at
    /// midnight; with `wrap = true` the window continues periodically and
    /// the kernel is evaluated on the unwrapped displacement.
    pub fn build(grid: &Grid<T>, eta: T, wrap: bool) -> Result<Self> {
        if eta.is_nan() || eta <= T::zero() || eta > T::of(24.0) {
            return Err(Error::InvalidHalfWidth(eta.as_f64()));
        }
        let n_x = grid.n_x();
        let dx = grid.dx();
        let mut rows = Vec::with_capacity(n_x);
        for k in 0..n_x {
            let xc = grid.x_center(k);
            let lo = xc - eta;
            let hi = xc + eta;
            let mut row: Vec<(usize, T)> = Vec::new();
            if wrap {
                // Iterate unwrapped cells covering the window, fold indices.
                let first = (lo / dx).floor().as_f64() as isize;
                let last = (hi / dx).ceil().as_f64() as isize;
                let mut acc = vec![T::zero(); n_x];
                for m in first..last {
                    let left = T::of(m as f64) * dx;
                    let right = left + dx;
                    let overlap = right.min(hi) - left.max(lo);
                    if overlap > T::zero() {
                        let sc = left + dx * T::of(0.5);
                        let r = xc - sc;
                        let w = r * r * (-(r * r)).exp() * overlap;
                        acc[grid.wrap_x(m)] += w;
                    }
                }
                for (l, w) in acc.into_iter().enumerate() {
                    if w > T::zero() {
                        row.push((l, w));
                    }
                }
            } else {
                for l in 0..n_x {
                    let left = T::of(l as f64) * dx;
                    let right = left + dx;
                    let overlap = right.min(hi) - left.max(lo);
                    if overlap > T::zero() {
                        let w = kernel_eval(xc, grid.x_center(l)) * overlap;
                        if w > T::zero() {
                            row.push((l, w));
                        }
                    }
                }
            }
            rows.push(row);
        }
        Ok(KernelWeights { eta, wrap, rows })
    }

    pub fn eta(&self) -> T {
        self.eta
    }

    pub fn wrap(&self) -> bool {
        self.wrap
    }

    pub fn n_x(&self) -> usize {
        self.rows.len()
    }

    /// `sum_l w_{k,l} g[l]`.
    #[inline]
    pub fn apply(&self, k: usize, g: &[T]) -> T {
        self.rows[k]
            .iter()
            .fold(T::zero(), |acc, &(l, w)| acc + w * g[l])
    }

    pub fn row(&self, k: usize) -> &[(usize, T)] {
        &self.rows[k]
    }
}

/// Mortality rate. Presets are functions of age; tabulated fields cover the
/// general mu(a, t, x) of the comparison theory and control folding.
#[derive(Debug, Clone)]
pub enum Mortality<T> {
    Constant(T),
    /// base + strength / (a_max - a), truncated at `cap`. The truncation is
    /// mandatory: the untruncated rate diverges at the age horizon.
    Blowup { base: T, strength: T, cap: T },
    Tabulated(Field<T>),
}

impl<T: Real> Mortality<T> {
    /// Rate at node (age i, time n, x k).
    pub fn at(&self, grid: &Grid<T>, i: usize, n: usize, k: usize) -> T {
        match self {
            Mortality::Constant(m) => *m,
            Mortality::Blowup { base, strength, cap } => {
                let rem = grid.a_max() - grid.age(i);
                if rem <= T::zero() {
                    return *cap;
                }
                let raw = *base + *strength / rem;
                if raw.is_finite() {
                    raw.min(*cap)
                } else {
                    *cap
                }
            }
            Mortality::Tabulated(f) => f.at(i, n, k),
        }
    }

    /// True when the untruncated blow-up rate exceeds the cap at some grid
    /// age node, i.e. the truncation actually bites on this grid.
    pub fn truncation_active(&self, grid: &Grid<T>) -> bool {
        match self {
            Mortality::Blowup { base, strength, cap } => (0..=grid.n_a()).any(|i| {
                let rem = grid.a_max() - grid.age(i);
                rem <= T::zero() || *base + *strength / rem > *cap
            }),
            _ => false,
        }
    }
}

/// Fertility rate as a function of age.
#[derive(Debug, Clone)]
pub enum Fertility<T> {
    Constant(T),
    /// Smooth compact-support bump `peak * sin^2(pi (a - a_lo)/(a_hi - a_lo))`
    /// on [a_lo, a_hi], zero elsewhere.
    Bump { peak: T, a_lo: T, a_hi: T },
}

impl<T: Real> Fertility<T> {
    pub fn at_age(&self, a: T) -> T {
        match self {
            Fertility::Constant(b) => *b,
            Fertility::Bump { peak, a_lo, a_hi } => {
                if a < *a_lo || a > *a_hi || *a_hi <= *a_lo {
                    T::zero()
                } else {
                    let s = (a - *a_lo) / (*a_hi - *a_lo);
                    let w = (T::of(std::f64::consts::PI) * s).sin();
                    *peak * w * w
                }
            }
        }
    }

    /// Samples onto the age nodes of `grid`.
    pub fn profile(&self, grid: &Grid<T>) -> Vec<T> {
        (0..=grid.n_a()).map(|i| self.at_age(grid.age(i))).collect()
    }
}

/// Vital rates plus the plasticity parameters.
#[derive(Debug, Clone)]
pub struct VitalRates<T> {
    pub mortality: Mortality<T>,
    pub fertility: Fertility<T>,
    /// Diffusion coefficient in biting time (hours^2 / time unit), >= 0.
    pub diffusivity: T,
    /// Kernel window half-width eta in (0, 24] hours.
    pub kernel_halfwidth: T,
}

/// Admissible-control box: lower <= u <= upper <= 0 node-wise.
#[derive(Debug, Clone)]
pub struct ControlBounds<T> {
    pub lower: Field<T>,
    pub upper: Field<T>,
}

impl<T: Real> ControlBounds<T> {
    pub fn constant(grid: &Grid<T>, lower: T, upper: T) -> Self {
        ControlBounds {
            lower: Field::constant(grid, lower),
            upper: Field::constant(grid, upper),
        }
    }

    /// True when the box degenerates to a single control.
    pub fn is_singleton(&self) -> bool {
        self.lower == self.upper
    }

    pub fn clamp_node(&self, i: usize, n: usize, k: usize, v: T) -> T {
        v.max(self.lower.at(i, n, k)).min(self.upper.at(i, n, k))
    }
}

/// Full problem instance on one grid.
#[derive(Debug, Clone)]
pub struct ProblemData<T> {
    pub grid: Grid<T>,
    pub rates: VitalRates<T>,
    /// Initial age-x distribution p(., 0, .).
    pub initial: AgeXSlice<T>,
    /// Optional nonnegative source; `None` means zero.
    pub source: Option<Field<T>>,
    pub bounds: ControlBounds<T>,
    /// Whether the birth window continues periodically past midnight.
    /// Default false: the kernel's zero branch truncates it.
    pub birth_wrap: bool,
}

/// One violated hypothesis, named, with the first offending node.
#[derive(Debug, Clone)]
pub struct ValidationIssue {
    /// "J1", "J2", "J3", "U", "f", or "shape".
    pub hypothesis: &'static str,
    pub message: String,
    pub location: Option<(usize, usize, usize)>,
}

/// Outcome of [`validate_params`]: violations by hypothesis name plus
/// informational notes.
#[derive(Debug, Clone, Default)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
    pub notes: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Checks the model hypotheses on the grid nodes: nonnegative mortality and
/// fertility, nonnegative initial datum and source, control bounds ordered
/// and nonpositive, kernel half-width in range, finite samples everywhere.
pub fn validate_params<T: Real>(data: &ProblemData<T>) -> ValidationReport {
    let mut report = ValidationReport::default();
    let g = &data.grid;

    if !data.initial.conforms(g) {
        report.issues.push(ValidationIssue {
            hypothesis: "shape",
            message: "initial distribution does not conform to the grid".into(),
            location: None,
        });
        return report;
    }

    let eta = data.rates.kernel_halfwidth.as_f64();
    if eta.is_nan() || eta <= 0.0 || eta > 24.0 {
        report.issues.push(ValidationIssue {
            hypothesis: "shape",
            message: format!("kernel half-width must lie in (0, 24], got {eta}"),
            location: None,
        });
    }
    if data.rates.diffusivity < T::zero() {
        report.issues.push(ValidationIssue {
            hypothesis: "shape",
            message: format!(
                "diffusivity must be >= 0, got {}",
                data.rates.diffusivity.as_f64()
            ),
            location: None,
        });
    }

    // (J1): mu >= 0 (the divergence of its age integral is represented by
    // the truncated blow-up preset, not re-checked numerically).
    'mu: for i in 0..=g.n_a() {
        for n in 0..=g.n_t() {
            for k in 0..g.n_x() {
                let m = data.rates.mortality.at(g, i, n, k);
                if m < T::zero() || !m.is_finite() {
                    report.issues.push(ValidationIssue {
                        hypothesis: "J1",
                        message: format!("mortality {} at node is negative or non-finite", m.as_f64()),
                        location: Some((i, n, k)),
                    });
                    break 'mu;
                }
            }
        }
    }
    if data.rates.mortality.truncation_active(g) {
        report
            .notes
            .push("mortality truncation is active near the age horizon".into());
    }

    // (J2): beta >= 0 and bounded.
    for i in 0..=g.n_a() {
        let b = data.rates.fertility.at_age(g.age(i));
        if b < T::zero() || !b.is_finite() {
            report.issues.push(ValidationIssue {
                hypothesis: "J2",
                message: format!("fertility {} at age node {i} is negative or non-finite", b.as_f64()),
                location: Some((i, 0, 0)),
            });
            break;
        }
    }

    // (J3): p0 >= 0.
    'p0: for i in 0..=g.n_a() {
        for k in 0..g.n_x() {
            let v = data.initial.at(i, k);
            if v < T::zero() || !v.is_finite() {
                report.issues.push(ValidationIssue {
                    hypothesis: "J3",
                    message: format!("initial distribution {} is negative or non-finite", v.as_f64()),
                    location: Some((i, 0, k)),
                });
                break 'p0;
            }
        }
    }

    // Source sign, when present.
    if let Some(f) = &data.source {
        if f.grid() != g {
            report.issues.push(ValidationIssue {
                hypothesis: "shape",
                message: "source field does not conform to the grid".into(),
                location: None,
            });
        } else {
            'f: for i in 0..=g.n_a() {
                for n in 0..=g.n_t() {
                    for k in 0..g.n_x() {
                        let v = f.at(i, n, k);
                        if v < T::zero() || !v.is_finite() {
                            report.issues.push(ValidationIssue {
                                hypothesis: "f",
                                message: format!("source {} is negative or non-finite", v.as_f64()),
                                location: Some((i, n, k)),
                            });
                            break 'f;
                        }
                    }
                }
            }
        }
    }

    // Admissible set: sigma1 <= sigma2 <= 0.
    if data.bounds.lower.grid() != g || data.bounds.upper.grid() != g {
        report.issues.push(ValidationIssue {
            hypothesis: "U",
            message: "control bounds do not conform to the grid".into(),
            location: None,
        });
    } else {
        'u: for i in 0..=g.n_a() {
            for n in 0..=g.n_t() {
                for k in 0..g.n_x() {
                    let lo = data.bounds.lower.at(i, n, k);
                    let hi = data.bounds.upper.at(i, n, k);
                    let message = if !hi.is_finite() || hi > T::zero() {
                        format!("sigma2 must be finite and <= 0, got {}", hi.as_f64())
                    } else if !lo.is_finite() || lo > hi {
                        format!(
                            "sigma1 must be finite and <= sigma2, got ({}, {})",
                            lo.as_f64(),
                            hi.as_f64()
                        )
                    } else {
                        continue;
                    };
                    report.issues.push(ValidationIssue {
                        hypothesis: "U",
                        message,
                        location: Some((i, n, k)),
                    });
                    break 'u;
                }
            }
        }
    }

    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_grid() -> Grid<f64> {
        Grid::new(2.0, 1.0, 4, 8).unwrap()
    }

    fn basic_data(grid: &Grid<f64>) -> ProblemData<f64> {
        ProblemData {
            grid: *grid,
            rates: VitalRates {
                mortality: Mortality::Constant(0.1),
                fertility: Fertility::Constant(0.2),
                diffusivity: 1.0,
                kernel_halfwidth: 6.0,
            },
            initial: AgeXSlice::constant(grid, 1.0),
            source: None,
            bounds: ControlBounds::constant(grid, -1.0, 0.0),
        birth_wrap: false,
        }
    }

    #[test]
    fn kernel_point_values() {
        assert_eq!(kernel_eval(12.0, 12.0), 0.0);
        assert_eq!(kernel_eval(12.0, 11.0), (-1.0f64).exp());
        assert!((kernel_eval(12.0f64, 11.0) - 0.367879441).abs() < 1e-9);
        assert_eq!(kernel_eval(0.3, -0.1), 0.0);
        assert_eq!(kernel_eval(23.9, 24.0), 0.0);
    }

    /// Independent quadrature oracle: composite Simpson for
    /// integral of K(x, s) ds over [lo, hi].
    fn kernel_integral_oracle(x: f64, lo: f64, hi: f64) -> f64 {
        let n = 200_000;
        let h = (hi - lo) / n as f64;
        let f = |s: f64| kernel_eval(x, s);
        let mut acc = f(lo) + f(hi);
        for j in 1..n {
            let s = lo + j as f64 * h;
            acc += if j % 2 == 0 { 2.0 * f(s) } else { 4.0 * f(s) };
        }
        acc * h / 3.0
    }

    #[test]
    fn kernel_weights_match_quadrature_oracle() {
        // Constant integrand, deep interior, eta >= 6: the window holds the
        // whole Gaussian moment, integral r^2 exp(-r^2) dr = sqrt(pi)/2.
        let g = Grid::<f64>::new(1.0, 1.0, 2, 4096).unwrap();
        let w = KernelWeights::build(&g, 6.0, false).unwrap();
        let k = g.n_x() / 2; // x ~ 12
        let total: f64 = w.row(k).iter().map(|&(_, w)| w).sum();
        let oracle = kernel_integral_oracle(g.x_center(k), g.x_center(k) - 6.0, g.x_center(k) + 6.0);
        let analytic = std::f64::consts::PI.sqrt() / 2.0;
        assert!((oracle - analytic).abs() < 1e-9, "oracle {oracle} vs analytic {analytic}");
        assert!((total - oracle).abs() < 5e-6, "midpoint {total} vs oracle {oracle}");
    }

    #[test]
    fn kernel_weights_vanish_with_window() {
        let g = Grid::<f64>::new(1.0, 1.0, 2, 64).unwrap();
        let w = KernelWeights::build(&g, 1e-9, false).unwrap();
        let total: f64 = (0..64).map(|k| w.row(k).iter().map(|&(_, x)| x).sum::<f64>()).sum();
        assert!(total < 1e-8);
    }

    #[test]
    fn kernel_weights_truncate_at_midnight() {
        let g = Grid::<f64>::new(1.0, 1.0, 2, 480).unwrap();
        let w = KernelWeights::build(&g, 6.0, false).unwrap();
        // x = 0.025: window (-5.975, 6.025) truncated at s = 0, so only the
        // one-sided half of the Gaussian moment survives.
        let total: f64 = w.row(0).iter().map(|&(_, x)| x).sum();
        let oracle = kernel_integral_oracle(g.x_center(0), 0.0, g.x_center(0) + 6.0);
        assert!((total - oracle).abs() < 1e-3, "{total} vs {oracle}");
        assert!(total < 0.8 * std::f64::consts::PI.sqrt() / 2.0);
    }

    #[test]
    fn kernel_weights_wrap_mode_restores_mass_at_edge() {
        let g = Grid::<f64>::new(1.0, 1.0, 2, 96).unwrap();
        let wrapped = KernelWeights::build(&g, 6.0, true).unwrap();
        let total: f64 = wrapped.row(0).iter().map(|&(_, x)| x).sum();
        let analytic = std::f64::consts::PI.sqrt() / 2.0;
        assert!((total - analytic).abs() < 1e-3, "{total} vs {analytic}");
    }

    #[test]
    fn kernel_weights_reject_bad_halfwidth() {
        let g = small_grid();
        assert!(KernelWeights::build(&g, 0.0, false).is_err());
        assert!(KernelWeights::build(&g, 25.0, false).is_err());
    }

    #[test]
    fn kernel_weights_deterministic() {
        let g = Grid::<f64>::new(1.0, 1.0, 2, 32).unwrap();
        let a = KernelWeights::build(&g, 4.5, false).unwrap();
        let b = KernelWeights::build(&g, 4.5, false).unwrap();
        for k in 0..32 {
            assert_eq!(a.row(k).len(), b.row(k).len());
            for (x, y) in a.row(k).iter().zip(b.row(k)) {
                assert_eq!(x.0, y.0);
                assert_eq!(x.1.to_bits(), y.1.to_bits());
            }
        }
    }

    #[test]
    fn blowup_mortality_truncates() {
        let g = small_grid();
        let mu = Mortality::Blowup { base: 0.1, strength: 1.0, cap: 50.0 };
        // At the horizon node the raw rate is infinite; cap applies.
        assert_eq!(mu.at(&g, g.n_a(), 0, 0), 50.0);
        // One step below: 0.1 + 1/0.5 = 2.1 < cap.
        assert!((mu.at(&g, g.n_a() - 1, 0, 0) - 2.1).abs() < 1e-12);
        assert!(mu.truncation_active(&g));
    }

    #[test]
    fn validate_flags_negative_initial() {
        let g = small_grid();
        let mut d = basic_data(&g);
        *d.initial.at_mut(1, 3) = -0.5;
        let report = validate_params(&d);
        assert!(!report.passed());
        assert!(report.issues.iter().any(|v| v.hypothesis == "J3"));
    }

    #[test]
    fn validate_flags_positive_upper_bound() {
        let g = small_grid();
        let mut d = basic_data(&g);
        d.bounds.upper = Field::constant(&g, 0.1);
        let report = validate_params(&d);
        assert!(report.issues.iter().any(|v| v.hypothesis == "U"));
    }

    #[test]
    fn validate_notes_active_truncation() {
        let g = small_grid();
        let mut d = basic_data(&g);
        d.rates.mortality = Mortality::Blowup { base: 0.0, strength: 1.0, cap: 50.0 };
        let report = validate_params(&d);
        assert!(report.passed());
        assert!(report.notes.iter().any(|n| n.contains("truncation")));
    }

    #[test]
    fn bump_fertility_has_compact_support() {
        let f = Fertility::Bump { peak: 2.0, a_lo: 0.5, a_hi: 1.5 };
        assert_eq!(f.at_age(0.4), 0.0);
        assert_eq!(f.at_age(1.6), 0.0);
        assert!((f.at_age(1.0f64) - 2.0).abs() < 1e-12);
        assert!(f.at_age(0.75) > 0.0);
    }
}
