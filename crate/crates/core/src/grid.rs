//! Space-time-age discretization.
//!
//! The domain is (0, a_max) x (0, t_max) x (0, 24) with a periodic third
//! axis (hours of the day). Age and time share one step, da == dt, so the
//! transport derivative along the direction (1,1,0) is an exact lattice
//! shift: node (i, n) maps onto (i+1, n+1). Ages and times are sampled at
//! nodes, the periodic axis at cell centers x_k = (k + 1/2) dx, and the
//! periodic identification x = 0 == x = 24 is built into the index
//! arithmetic rather than enforced by extra equations.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Characteristics-aligned lattice over (0,a_max) x (0,t_max) x (0,24).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid<T> {
    a_max: T,
    t_max: T,
    n_a: usize,
    n_t: usize,
    n_x: usize,
    da: T,
    dt: T,
    dx: T,
}

impl<T: Real> Grid<T> {
    /// Builds the lattice. `n_t` is derived from `t_max / (a_max / n_a)`,
    /// which must be integral: the scheme needs da == dt exactly.
    pub fn new(a_max: T, t_max: T, n_a: usize, n_x: usize) -> Result<Self> {
        if a_max <= T::zero() || !a_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "age horizon must be positive, got {a_max}"
            )));
        }
        if t_max <= T::zero() || !t_max.is_finite() {
            return Err(Error::InvalidGrid(format!(
                "time horizon must be positive, got {t_max}"
            )));
        }
        if n_a < 2 {
            return Err(Error::InvalidGrid(format!("need n_a >= 2, got {n_a}")));
        }
        // n_x = 2 is the degenerate desk-scale case the enumeration oracle
        // runs on; the periodic stencil and its inverse stay valid there.
        if n_x < 2 {
            return Err(Error::InvalidGrid(format!("need n_x >= 2, got {n_x}")));
        }
        let da = a_max / T::of(n_a as f64);
        let ratio = t_max / da;
        let rounded = ratio.round();
        if (ratio - rounded).abs() > T::of(1e-9) * ratio.max(T::one()) {
            return Err(Error::NonCommensurate {
                t_max: t_max.as_f64(),
                da: da.as_f64(),
                ratio: ratio.as_f64(),
            });
        }
        let n_t = rounded.as_f64() as usize;
        if n_t < 1 {
            return Err(Error::InvalidGrid(
                "time horizon shorter than one age step".into(),
            ));
        }
        Ok(Grid {
            a_max,
            t_max,
            n_a,
            n_t,
            n_x,
            da,
            dt: da,
            dx: T::of(24.0) / T::of(n_x as f64),
        })
    }

    pub fn a_max(&self) -> T {
        self.a_max
    }
    pub fn t_max(&self) -> T {
        self.t_max
    }
    pub fn n_a(&self) -> usize {
        self.n_a
    }
    pub fn n_t(&self) -> usize {
        self.n_t
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }
    pub fn da(&self) -> T {
        self.da
    }
    pub fn dt(&self) -> T {
        self.dt
    }
    pub fn dx(&self) -> T {
        self.dx
    }

    /// Age coordinate of node `i`.
    pub fn age(&self, i: usize) -> T {
        T::of(i as f64) * self.da
    }

    /// Time coordinate of node `n`.
    pub fn time(&self, n: usize) -> T {
        T::of(n as f64) * self.dt
    }

    /// Center of periodic cell `k`.
    pub fn x_center(&self, k: usize) -> T {
        (T::of(k as f64) + T::of(0.5)) * self.dx
    }

    /// Periodic index fold: any signed index maps into [0, n_x).
    pub fn wrap_x(&self, k: isize) -> usize {
        let n = self.n_x as isize;
        (((k % n) + n) % n) as usize
    }

    /// Number of samples a conforming [`Field`] holds.
    pub fn node_count(&self) -> usize {
        (self.n_a + 1) * (self.n_t + 1) * self.n_x
    }

    /// Quadrature weight of one space-time-age cell.
    pub fn cell_volume(&self) -> T {
        self.da * self.dt * self.dx
    }
}

/// Scalar grid function sampled at (age node, time node, x cell center).
///
/// Storage is row-major in (a, t, x). Population, adjoint, control, source
/// and the control bounds all live in this representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Field<T> {
    grid: Grid<T>,
    values: Vec<T>,
}

impl<T: Real> Field<T> {
    pub fn zeros(grid: &Grid<T>) -> Self {
        Field {
            grid: *grid,
            values: vec![T::zero(); grid.node_count()],
        }
    }

    pub fn constant(grid: &Grid<T>, value: T) -> Self {
        Field {
            grid: *grid,
            values: vec![value; grid.node_count()],
        }
    }

    /// Samples `f(i, n, k)` at every node.
    pub fn from_fn(grid: &Grid<T>, mut f: impl FnMut(usize, usize, usize) -> T) -> Self {
        let mut values = Vec::with_capacity(grid.node_count());
        for i in 0..=grid.n_a {
            for n in 0..=grid.n_t {
                for k in 0..grid.n_x {
                    values.push(f(i, n, k));
                }
            }
        }
        Field { grid: *grid, values }
    }

    pub fn from_values(grid: &Grid<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.node_count() {
            return Err(Error::ShapeMismatch {
                what: "field",
                got: values.len(),
                expected: grid.node_count(),
            });
        }
        Ok(Field { grid: *grid, values })
    }

    pub fn grid(&self) -> &Grid<T> {
        &self.grid
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    #[inline]
    pub fn idx(&self, i: usize, n: usize, k: usize) -> usize {
        debug_assert!(i <= self.grid.n_a && n <= self.grid.n_t && k < self.grid.n_x);
        (i * (self.grid.n_t + 1) + n) * self.grid.n_x + k
    }

    #[inline]
    pub fn at(&self, i: usize, n: usize, k: usize) -> T {
        self.values[self.idx(i, n, k)]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, n: usize, k: usize) -> &mut T {
        let ix = self.idx(i, n, k);
        &mut self.values[ix]
    }

    /// Access with a signed periodic x index; k = n_x refers to cell 0.
    #[inline]
    pub fn at_wrapped(&self, i: usize, n: usize, k: isize) -> T {
        self.at(i, n, self.grid.wrap_x(k))
    }

    /// All ages at one time level, as a standalone slice.
    pub fn age_slice(&self, n: usize) -> AgeXSlice<T> {
        let mut out = AgeXSlice::zeros(self.grid.n_a, self.grid.n_x);
        for i in 0..=self.grid.n_a {
            for k in 0..self.grid.n_x {
                *out.at_mut(i, k) = self.at(i, n, k);
            }
        }
        out
    }

    pub fn set_age_slice(&mut self, n: usize, slice: &AgeXSlice<T>) {
        assert_eq!(slice.n_a, self.grid.n_a);
        assert_eq!(slice.n_x, self.grid.n_x);
        for i in 0..=self.grid.n_a {
            for k in 0..self.grid.n_x {
                *self.at_mut(i, n, k) = slice.at(i, k);
            }
        }
    }

    /// Boundary trace at age 0 as a (time, x) table.
    pub fn boundary_trace(&self) -> TimeXSlice<T> {
        let mut out = TimeXSlice::zeros(self.grid.n_t, self.grid.n_x);
        for n in 0..=self.grid.n_t {
            for k in 0..self.grid.n_x {
                *out.at_mut(n, k) = self.at(0, n, k);
            }
        }
        out
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    /// First node holding a non-finite sample, if any.
    pub fn first_non_finite(&self) -> Option<(usize, usize, usize, T)> {
        for i in 0..=self.grid.n_a {
            for n in 0..=self.grid.n_t {
                for k in 0..self.grid.n_x {
                    let v = self.at(i, n, k);
                    if !v.is_finite() {
                        return Some((i, n, k, v));
                    }
                }
            }
        }
        None
    }

    /// L2 norm over the quadrature cells (i < n_a, n < n_t, all k) with
    /// weight da*dt*dx. This is the discrete analog of the L2(Q) norm and
    /// the single quadrature rule shared by objective, residuals and energy
    /// norms, so oracle comparisons stay quadrature-consistent.
    pub fn l2_cells(&self) -> T {
        let g = &self.grid;
        let mut acc = T::zero();
        for i in 0..g.n_a {
            for n in 0..g.n_t {
                for k in 0..g.n_x {
                    let v = self.at(i, n, k);
                    acc += v * v;
                }
            }
        }
        (acc * g.cell_volume()).sqrt()
    }

    /// L2 distance over quadrature cells.
    pub fn l2_cells_diff(&self, other: &Field<T>) -> Result<T> {
        self.check_same_grid(other)?;
        let g = &self.grid;
        let mut acc = T::zero();
        for i in 0..g.n_a {
            for n in 0..g.n_t {
                for k in 0..g.n_x {
                    let d = self.at(i, n, k) - other.at(i, n, k);
                    acc += d * d;
                }
            }
        }
        Ok((acc * g.cell_volume()).sqrt())
    }

    pub fn check_same_grid(&self, other: &Field<T>) -> Result<()> {
        if self.grid == other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// Writes the flat CSV form: header `a,t,x,value`, row-major in
    /// (a, t, x), values with 17 significant digits (round-trip exact).
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "a,t,x,value")?;
        let g = &self.grid;
        for i in 0..=g.n_a {
            for n in 0..=g.n_t {
                for k in 0..g.n_x {
                    writeln!(
                        w,
                        "{},{},{},{:.16e}",
                        g.age(i).as_f64(),
                        g.time(n).as_f64(),
                        g.x_center(k).as_f64(),
                        self.at(i, n, k).as_f64(),
                    )?;
                }
            }
        }
        Ok(())
    }

    /// Reads the CSV form produced by [`Field::write_csv`] onto `grid`.
    /// Coordinates are cross-checked against the grid nodes.
    pub fn read_csv<R: BufRead>(grid: &Grid<T>, r: R) -> Result<Self> {
        let mut lines = r.lines();
        match lines.next() {
            Some(Ok(h)) if h.trim() == "a,t,x,value" => {}
            Some(Ok(h)) => return Err(Error::Csv(format!("expected header a,t,x,value, got {h:?}"))),
            Some(Err(e)) => return Err(e.into()),
            None => return Err(Error::Csv("empty file".into())),
        }
        let mut values = Vec::with_capacity(grid.node_count());
        let mut row = 0usize;
        for line in lines {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split(',');
            let mut take = |what: &str| -> Result<f64> {
                parts
                    .next()
                    .ok_or_else(|| Error::Csv(format!("row {row}: missing {what} column")))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Csv(format!("row {row}: bad {what}: {e}")))
            };
            let (a, t, x, v) = (take("a")?, take("t")?, take("x")?, take("value")?);
            let k = row % grid.n_x;
            let n = (row / grid.n_x) % (grid.n_t + 1);
            let i = row / (grid.n_x * (grid.n_t + 1));
            if i > grid.n_a {
                return Err(Error::Csv(format!(
                    "too many rows, grid expects {}",
                    grid.node_count()
                )));
            }
            let close = |got: f64, want: T| (got - want.as_f64()).abs() <= 1e-6 * (1.0 + want.as_f64().abs());
            if !close(a, grid.age(i)) || !close(t, grid.time(n)) || !close(x, grid.x_center(k)) {
                return Err(Error::Csv(format!(
                    "row {row}: coordinates ({a},{t},{x}) do not match grid node ({},{},{})",
                    grid.age(i).as_f64(),
                    grid.time(n).as_f64(),
                    grid.x_center(k).as_f64(),
                )));
            }
            values.push(T::of(v));
            row += 1;
        }
        Field::from_values(grid, values)
    }
}

/// Samples over (age node, x cell): an initial distribution or one time
/// level of a field.
#[derive(Debug, Clone, PartialEq)]
pub struct AgeXSlice<T> {
    n_a: usize,
    n_x: usize,
    values: Vec<T>,
}

impl<T: Real> AgeXSlice<T> {
    pub fn zeros(n_a: usize, n_x: usize) -> Self {
        AgeXSlice {
            n_a,
            n_x,
            values: vec![T::zero(); (n_a + 1) * n_x],
        }
    }

    pub fn constant(grid: &Grid<T>, value: T) -> Self {
        AgeXSlice {
            n_a: grid.n_a(),
            n_x: grid.n_x(),
            values: vec![value; (grid.n_a() + 1) * grid.n_x()],
        }
    }

    /// Samples `f(i, k)` over age nodes and x cells of `grid`.
    pub fn from_fn(grid: &Grid<T>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let (n_a, n_x) = (grid.n_a(), grid.n_x());
        let mut values = Vec::with_capacity((n_a + 1) * n_x);
        for i in 0..=n_a {
            for k in 0..n_x {
                values.push(f(i, k));
            }
        }
        AgeXSlice { n_a, n_x, values }
    }

    pub fn n_a(&self) -> usize {
        self.n_a
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize) -> T {
        self.values[i * self.n_x + k]
    }

    #[inline]
    pub fn at_mut(&mut self, i: usize, k: usize) -> &mut T {
        &mut self.values[i * self.n_x + k]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.values[i * self.n_x..(i + 1) * self.n_x]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.values[i * self.n_x..(i + 1) * self.n_x]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn conforms(&self, grid: &Grid<T>) -> bool {
        self.n_a == grid.n_a() && self.n_x == grid.n_x()
    }

    pub fn first_non_finite(&self) -> Option<(usize, usize, T)> {
        for i in 0..=self.n_a {
            for k in 0..self.n_x {
                let v = self.at(i, k);
                if !v.is_finite() {
                    return Some((i, k, v));
                }
            }
        }
        None
    }
}

/// Samples over (time node, x cell): a boundary trace b(t, x).
#[derive(Debug, Clone, PartialEq)]
pub struct TimeXSlice<T> {
    n_t: usize,
    n_x: usize,
    values: Vec<T>,
}

impl<T: Real> TimeXSlice<T> {
    pub fn zeros(n_t: usize, n_x: usize) -> Self {
        TimeXSlice {
            n_t,
            n_x,
            values: vec![T::zero(); (n_t + 1) * n_x],
        }
    }

    pub fn from_fn(grid: &Grid<T>, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let (n_t, n_x) = (grid.n_t(), grid.n_x());
        let mut values = Vec::with_capacity((n_t + 1) * n_x);
        for n in 0..=n_t {
            for k in 0..n_x {
                values.push(f(n, k));
            }
        }
        TimeXSlice { n_t, n_x, values }
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }
    pub fn n_x(&self) -> usize {
        self.n_x
    }

    #[inline]
    pub fn at(&self, n: usize, k: usize) -> T {
        self.values[n * self.n_x + k]
    }

    #[inline]
    pub fn at_mut(&mut self, n: usize, k: usize) -> &mut T {
        &mut self.values[n * self.n_x + k]
    }

    pub fn row(&self, n: usize) -> &[T] {
        &self.values[n * self.n_x..(n + 1) * self.n_x]
    }

    pub fn row_mut(&mut self, n: usize) -> &mut [T] {
        &mut self.values[n * self.n_x..(n + 1) * self.n_x]
    }

    pub fn conforms(&self, grid: &Grid<T>) -> bool {
        self.n_t == grid.n_t() && self.n_x == grid.n_x()
    }

    /// L2 norm over (0,T)x(0,24): time cells n < n_t, weight dt*dx.
    pub fn l2_cells(&self, grid: &Grid<T>) -> T {
        let mut acc = T::zero();
        for n in 0..self.n_t {
            for k in 0..self.n_x {
                let v = self.at(n, k);
                acc += v * v;
            }
        }
        (acc * grid.dt() * grid.dx()).sqrt()
    }
}
