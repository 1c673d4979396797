//! Periodic grids on the unit torus `[0,1)^dim` and the discrete calculus
//! every solver shares.
//!
//! Nodes are stored in lexicographic order: in 2D the flat index of node
//! `(i0, i1)` is `i0 * n + i1`, so axis 0 varies slowest.

use std::ops::Index;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Uniform periodic grid with `n` points per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct TorusGrid {
    dim: usize,
    n: usize,
}

impl TorusGrid {
    pub const MIN_POINTS: usize = 8;

    pub fn new(dim: usize, n: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("dimension {dim} not in {{1, 2}}")));
        }
        if n < Self::MIN_POINTS {
            return Err(Error::InvalidGrid(format!(
                "{n} points per axis, need at least {}",
                Self::MIN_POINTS
            )));
        }
        Ok(Self { dim, n })
    }

    pub fn line(n: usize) -> Result<Self> {
        Self::new(1, n)
    }

    pub fn square(n: usize) -> Result<Self> {
        Self::new(2, n)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Points per axis.
    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    /// Total number of nodes, `n^dim`.
    #[inline]
    pub fn len(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing<T: Real>(&self) -> T {
        T::one() / T::from_usize_lossy(self.n)
    }

    /// `h^dim`, the quadrature weight of a single node.
    #[inline]
    pub fn cell_volume<T: Real>(&self) -> T {
        self.spacing::<T>().powi(self.dim as i32)
    }

    #[inline]
    fn stride(&self, axis: usize) -> usize {
        if self.dim == 2 && axis == 0 {
            self.n
        } else {
            1
        }
    }

    #[inline]
    pub fn multi_index(&self, idx: usize) -> [usize; 2] {
        if self.dim == 1 {
            [idx, 0]
        } else {
            [idx / self.n, idx % self.n]
        }
    }

    #[inline]
    pub fn flat_index(&self, m: [usize; 2]) -> usize {
        if self.dim == 1 {
            m[0] % self.n
        } else {
            (m[0] % self.n) * self.n + m[1] % self.n
        }
    }

    /// Periodic neighbour of `idx` one step along `axis`.
    #[inline]
    pub fn neighbor(&self, idx: usize, axis: usize, forward: bool) -> usize {
        let stride = self.stride(axis);
        let pos = (idx / stride) % self.n;
        let base = idx - pos * stride;
        let next = if forward {
            if pos + 1 == self.n {
                0
            } else {
                pos + 1
            }
        } else if pos == 0 {
            self.n - 1
        } else {
            pos - 1
        };
        base + next * stride
    }

    /// Coordinates of node `idx`; unused components are zero.
    #[inline]
    pub fn point<T: Real>(&self, idx: usize) -> [T; 2] {
        let h = self.spacing::<T>();
        let m = self.multi_index(idx);
        [
            T::from_usize_lossy(m[0]) * h,
            T::from_usize_lossy(m[1]) * h,
        ]
    }

    /// Node closest to `x` (periodically).
    pub fn nearest_node<T: Real>(&self, x: &[T]) -> usize {
        let mut m = [0usize; 2];
        for (axis, slot) in m.iter_mut().enumerate().take(self.dim) {
            let s = wrap_unit(x[axis]) * T::from_usize_lossy(self.n);
            let k = s.round().to_usize().unwrap_or(0);
            *slot = k % self.n;
        }
        self.flat_index(m)
    }

    /// Periodic Euclidean distance between two points of the torus.
    pub fn torus_distance<T: Real>(&self, x: &[T], y: &[T]) -> T {
        let mut s = T::zero();
        for axis in 0..self.dim {
            let d = periodic_offset(x[axis] - y[axis]);
            s += d * d;
        }
        s.sqrt()
    }
}

/// Maps a coordinate into `[0, 1)`.
#[inline]
pub fn wrap_unit<T: Real>(x: T) -> T {
    let r = x - x.floor();
    if r >= T::one() {
        T::zero()
    } else {
        r
    }
}

/// Representative of `d` in `[-1/2, 1/2]`.
#[inline]
pub fn periodic_offset<T: Real>(d: T) -> T {
    d - (d + T::half()).floor()
}

/// Values of a scalar field at the nodes of a [`TorusGrid`].
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction<T> {
    grid: TorusGrid,
    values: Vec<T>,
}

impl<T: Real> GridFunction<T> {
    pub fn new(grid: TorusGrid, values: Vec<T>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::InvalidField(format!(
                "{} values for a grid of {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidField(format!("non-finite value at node {i}")));
        }
        Ok(Self { grid, values })
    }

    /// Skips the finiteness scan; callers check finiteness themselves.
    pub(crate) fn from_raw(grid: TorusGrid, values: Vec<T>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self { grid, values }
    }

    pub fn constant(grid: TorusGrid, c: T) -> Self {
        Self::from_raw(grid, vec![c; grid.len()])
    }

    pub fn zeros(grid: TorusGrid) -> Self {
        Self::constant(grid, T::zero())
    }

    pub fn from_fn(grid: TorusGrid, mut f: impl FnMut(&[T]) -> T) -> Self {
        let values = (0..grid.len())
            .map(|i| {
                let x = grid.point::<T>(i);
                f(&x[..grid.dim()])
            })
            .collect();
        Self::from_raw(grid, values)
    }

    #[inline]
    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub(crate) fn values_mut(&mut self) -> &mut [T] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<T> {
        self.values
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.values.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn min(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    pub fn argmin(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v < self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn sup_norm(&self) -> T {
        self.values.iter().fold(T::zero(), |m, v| m.max(v.abs()))
    }

    /// `max_i |self_i - other_i|`.
    pub fn sup_distance(&self, other: &Self) -> T {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        self.values
            .iter()
            .zip(&other.values)
            .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()))
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.grid, self.values.iter().map(|v| f(*v)).collect())
    }

    pub fn zip_with(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        assert_eq!(self.grid, other.grid, "fields live on different grids");
        Self::from_raw(
            self.grid,
            self.values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        )
    }

    pub fn shifted(&self, k: T) -> Self {
        self.map(|v| v + k)
    }

    /// Largest one-sided difference quotient over all nodes and axes.
    pub fn lipschitz_constant(&self) -> T {
        let h = self.grid.spacing::<T>();
        let mut m = T::zero();
        for i in 0..self.len() {
            for axis in 0..self.grid.dim() {
                let j = self.grid.neighbor(i, axis, true);
                m = m.max(((self.values[j] - self.values[i]) / h).abs());
            }
        }
        m
    }

    /// Periodic (bi)linear interpolation at an arbitrary point.
    pub fn interpolate(&self, x: &[T]) -> T {
        let n = self.grid.n();
        let nf = T::from_usize_lossy(n);
        let mut base = [0usize; 2];
        let mut frac = [T::zero(); 2];
        for axis in 0..self.grid.dim() {
            let s = wrap_unit(x[axis]) * nf;
            let k = s.floor();
            frac[axis] = s - k;
            base[axis] = k.to_usize().unwrap_or(0) % n;
        }
        if self.grid.dim() == 1 {
            let a = self.values[base[0]];
            let b = self.values[(base[0] + 1) % n];
            a + (b - a) * frac[0]
        } else {
            let at = |i: usize, j: usize| self.values[self.grid.flat_index([i, j])];
            let (i, j) = (base[0], base[1]);
            let (fx, fy) = (frac[0], frac[1]);
            let one = T::one();
            at(i, j) * (one - fx) * (one - fy)
                + at(i + 1, j) * fx * (one - fy)
                + at(i, j + 1) * (one - fx) * fy
                + at(i + 1, j + 1) * fx * fy
        }
    }
}

impl<T> Index<usize> for GridFunction<T> {
    type Output = T;

    #[inline]
    fn index(&self, i: usize) -> &T {
        &self.values[i]
    }
}

/// Stencil used by [`diff`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffMode {
    Forward,
    Backward,
    Central,
}

/// Periodic first difference along `axis`.
pub fn diff<T: Real>(f: &GridFunction<T>, axis: usize, mode: DiffMode) -> GridFunction<T> {
    let grid = *f.grid();
    assert!(axis < grid.dim(), "axis {axis} out of range");
    let h = grid.spacing::<T>();
    let v = f.values();
    let values = (0..grid.len())
        .map(|i| {
            let fwd = grid.neighbor(i, axis, true);
            let bwd = grid.neighbor(i, axis, false);
            match mode {
                DiffMode::Forward => (v[fwd] - v[i]) / h,
                DiffMode::Backward => (v[i] - v[bwd]) / h,
                DiffMode::Central => ((v[fwd] - v[i]) / h + (v[i] - v[bwd]) / h) * T::half(),
            }
        })
        .collect();
    GridFunction::from_raw(grid, values)
}

/// Second difference at a single node, summed over axes.
#[inline]
pub(crate) fn laplacian_at<T: Real>(grid: &TorusGrid, v: &[T], i: usize, inv_h2: T) -> T {
    let mut s = T::zero();
    for axis in 0..grid.dim() {
        let fwd = grid.neighbor(i, axis, true);
        let bwd = grid.neighbor(i, axis, false);
        s += (v[fwd] - v[i]) - (v[i] - v[bwd]);
    }
    s * inv_h2
}

/// Standard periodic five-point (three-point in 1D) Laplacian.
pub fn laplacian<T: Real>(f: &GridFunction<T>) -> GridFunction<T> {
    let grid = *f.grid();
    let h = grid.spacing::<T>();
    let inv_h2 = T::one() / (h * h);
    let values = (0..grid.len())
        .map(|i| laplacian_at(&grid, f.values(), i, inv_h2))
        .collect();
    GridFunction::from_raw(grid, values)
}

/// `h^dim * sum(values)`, summed in node order.
pub fn integrate<T: Real>(f: &GridFunction<T>) -> T {
    let s: T = f.values().iter().copied().sum();
    s * f.grid().cell_volume::<T>()
}

/// Truncated uniform velocity grid `[-v_max, v_max]^dim` with `m` nodes per axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct VelocityGrid<T> {
    dim: usize,
    v_max: T,
    m: usize,
}

impl<T: Real> VelocityGrid<T> {
    pub fn new(dim: usize, v_max: T, m: usize) -> Result<Self> {
        if !(1..=2).contains(&dim) {
            return Err(Error::InvalidGrid(format!("velocity dimension {dim}")));
        }
        if m < 3 || m.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!(
                "velocity node count {m} must be odd and at least 3"
            )));
        }
        if !(v_max > T::zero()) || !v_max.is_finite() {
            return Err(Error::InvalidGrid(format!("v_max = {v_max}")));
        }
        Ok(Self { dim, v_max, m })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn v_max(&self) -> T {
        self.v_max
    }

    /// Nodes per axis.
    #[inline]
    pub fn m(&self) -> usize {
        self.m
    }

    /// Number of velocity nodes, `m^dim`.
    #[inline]
    pub fn len(&self) -> usize {
        self.m.pow(self.dim as u32)
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn spacing(&self) -> T {
        (self.v_max + self.v_max) / T::from_usize_lossy(self.m - 1)
    }

    /// Per-axis index of the zero velocity.
    #[inline]
    pub fn zero_node(&self) -> usize {
        (self.m - 1) / 2
    }

    /// Flat index of the zero velocity.
    pub fn zero_index(&self) -> usize {
        let z = self.zero_node();
        if self.dim == 1 {
            z
        } else {
            z * self.m + z
        }
    }

    /// Value of the per-axis node `j`; exact zero at the centre.
    #[inline]
    pub fn node(&self, j: usize) -> T {
        let z = self.zero_node() as isize;
        T::from_isize(j as isize - z).expect("small integer") * self.spacing()
    }

    pub fn velocity(&self, idx: usize) -> [T; 2] {
        if self.dim == 1 {
            [self.node(idx), T::zero()]
        } else {
            [self.node(idx / self.m), self.node(idx % self.m)]
        }
    }

    /// Splits a velocity between the neighbouring nodes with (bi)linear weights.
    /// Both neighbours always share the sign of `v` on every axis. Returns
    /// `false` without depositing anything if some `|v_a| > v_max`.
    pub fn deposit(&self, v: &[T], mut f: impl FnMut(usize, T)) -> bool {
        let dv = self.spacing();
        let z = T::from_usize_lossy(self.zero_node());
        let mut axes = [[(0usize, T::zero()); 2]; 2];
        for axis in 0..self.dim {
            if v[axis].abs() > self.v_max {
                return false;
            }
            let s = v[axis] / dv + z;
            let k = s.floor();
            let mut j0 = k.to_usize().unwrap_or(0);
            let mut frac = s - k;
            if j0 >= self.m - 1 {
                j0 = self.m - 2;
                frac = T::one();
            }
            axes[axis] = [(j0, T::one() - frac), (j0 + 1, frac)];
        }
        if self.dim == 1 {
            for (j, w) in axes[0] {
                if w > T::zero() {
                    f(j, w);
                }
            }
        } else {
            for (j0, w0) in axes[0] {
                for (j1, w1) in axes[1] {
                    let w = w0 * w1;
                    if w > T::zero() {
                        f(j0 * self.m + j1, w);
                    }
                }
            }
        }
        true
    }
}
