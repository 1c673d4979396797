//! The critical potential `d(x, y)`, maximal subsolutions and the
//! subsolution test.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TorusGrid};
use crate::hamiltonian::HamiltonianModel;
use crate::hj_solver::{Scheme, SchemeOptions};
use crate::scalar::Real;

/// Minimum number of quadrature points for the 1D arc integrals.
pub const MIN_QUAD_POINTS: usize = 1000;

const ROOT_TOL: f64 = 1e-13;

/// How a distance field was computed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum DistanceMethod {
    Quadrature1d { quad_points: usize },
    TimeMarching2d { rate: f64, time: f64, converged: bool },
}

/// `d(., y)` on a grid for one base node `y`.
#[derive(Clone, Debug, PartialEq)]
pub struct CriticalPotential<T> {
    pub base: usize,
    pub values: GridFunction<T>,
    pub method: DistanceMethod,
}

fn check_quad(quad_points: usize) -> Result<()> {
    if quad_points < MIN_QUAD_POINTS {
        return Err(Error::InvalidGrid(format!(
            "{quad_points} quadrature points, need at least {MIN_QUAD_POINTS}"
        )));
    }
    Ok(())
}

fn require_1d<T: Real>(model: &HamiltonianModel<T>) -> Result<()> {
    if model.dim() != 1 {
        return Err(Error::Unsupported("1D quadrature on a 2D model".into()));
    }
    Ok(())
}

/// Midpoint rule for `(int p+, int -p-)` over `[start, start + len]`.
fn arc_integrals<T: Real>(
    model: &HamiltonianModel<T>,
    start: T,
    len: T,
    points: usize,
) -> Result<(T, T)> {
    if len <= T::zero() {
        return Ok((T::zero(), T::zero()));
    }
    let ds = len / T::from_usize_lossy(points);
    let tol = T::lit(ROOT_TOL).max(T::epsilon() * T::lit(16.0));
    let (mut plus, mut minus) = (T::zero(), T::zero());
    for k in 0..points {
        let s = start + (T::from_usize_lossy(k) + T::half()) * ds;
        let (pm, pp) = model.critical_p_interval(s, tol)?;
        plus += pp;
        minus -= pm;
    }
    Ok((plus * ds, minus * ds))
}

/// `d(x, y)` in 1D: the cheaper of the rightward arc `y -> x` weighted by
/// `p+` and the leftward arc weighted by `-p-`.
pub fn distance_1d<T: Real>(model: &HamiltonianModel<T>, x: T, y: T, quad_points: usize) -> Result<T> {
    require_1d(model)?;
    check_quad(quad_points)?;
    let right = crate::grid::wrap_unit(x - y);
    if right == T::zero() {
        return Ok(T::zero());
    }
    let (r, _) = arc_integrals(model, y, right, quad_points)?;
    let (_, l) = arc_integrals(model, x, T::one() - right, quad_points)?;
    Ok(r.min(l))
}

/// All-pairs `d` on a 1D grid from per-cell arc integrals.
#[derive(Clone, Debug, PartialEq)]
pub struct Bank1d<T> {
    grid: TorusGrid,
    /// Prefix sums of `int p+` over cells `[x_k, x_{k+1}]`.
    plus: Vec<T>,
    /// Prefix sums of `int -p-`.
    minus: Vec<T>,
    quad_points: usize,
}

impl<T: Real> Bank1d<T> {
    pub fn new(model: &HamiltonianModel<T>, grid: TorusGrid, quad_points: usize) -> Result<Self> {
        require_1d(model)?;
        check_quad(quad_points)?;
        let n = grid.n();
        let per_cell = quad_points.div_ceil(n).max(1);
        let h = grid.spacing::<T>();
        let mut plus = Vec::with_capacity(n + 1);
        let mut minus = Vec::with_capacity(n + 1);
        plus.push(T::zero());
        minus.push(T::zero());
        for k in 0..n {
            let (p, m) = arc_integrals(model, T::from_usize_lossy(k) * h, h, per_cell)?;
            plus.push(plus[k] + p);
            minus.push(minus[k] + m);
        }
        Ok(Self { grid, plus, minus, quad_points: per_cell * n })
    }

    /// Cost of crossing cells `from..to` rightward (cyclically).
    #[inline]
    fn arc(prefix: &[T], from: usize, to: usize) -> T {
        let n = prefix.len() - 1;
        if to >= from {
            prefix[to] - prefix[from]
        } else {
            prefix[n] - prefix[from] + prefix[to]
        }
    }

    /// `d(x_i, x_j)`.
    #[inline]
    pub fn distance(&self, i: usize, j: usize) -> T {
        if i == j {
            return T::zero();
        }
        Self::arc(&self.plus, j, i).min(Self::arc(&self.minus, i, j))
    }

    pub fn field(&self, base: usize) -> CriticalPotential<T> {
        let values = (0..self.grid.len()).map(|i| self.distance(i, base)).collect();
        CriticalPotential {
            base,
            values: GridFunction::from_raw(self.grid, values),
            method: DistanceMethod::Quadrature1d { quad_points: self.quad_points },
        }
    }
}

/// Source of `d(x, z)` between grid nodes.
#[derive(Clone, Debug, PartialEq)]
pub enum DistanceBank<T> {
    /// Every pair, from 1D quadrature.
    Full(Bank1d<T>),
    /// Time-marched fields for a restricted set of base nodes.
    Fields { grid: TorusGrid, fields: BTreeMap<usize, CriticalPotential<T>> },
}

impl<T: Real> DistanceBank<T> {
    /// Builds a bank covering at least `bases` (1D: every node).
    pub fn new(
        model: &HamiltonianModel<T>,
        grid: TorusGrid,
        bases: &[usize],
        options: &SchemeOptions,
    ) -> Result<Self> {
        if grid.dim() == 1 {
            return Ok(Self::Full(Bank1d::new(model, grid, MIN_QUAD_POINTS.max(4 * grid.n()))?));
        }
        let mut fields = BTreeMap::new();
        for &b in bases {
            fields.insert(b, distance_field(model, grid, b, options)?);
        }
        Ok(Self::Fields { grid, fields })
    }

    /// Adds time-marched fields for every `stride`-th node per axis.
    pub fn lattice(model: &HamiltonianModel<T>, grid: TorusGrid, stride: usize, options: &SchemeOptions) -> Result<Self> {
        let stride = stride.max(1);
        let bases: Vec<usize> = (0..grid.len())
            .filter(|&i| grid.multi_index(i).iter().take(grid.dim()).all(|m| m % stride == 0))
            .collect();
        Self::new(model, grid, &bases, options)
    }

    pub fn grid(&self) -> &TorusGrid {
        match self {
            Self::Full(b) => &b.grid,
            Self::Fields { grid, .. } => grid,
        }
    }

    /// `d(x_i, x_j)` if `j` is covered.
    pub fn distance(&self, i: usize, j: usize) -> Option<T> {
        match self {
            Self::Full(b) => Some(b.distance(i, j)),
            Self::Fields { fields, .. } => fields.get(&j).map(|f| f.values[i]),
        }
    }

    /// Base nodes for which `d(., z)` is available.
    pub fn bases(&self) -> Vec<usize> {
        match self {
            Self::Full(b) => (0..b.grid.len()).collect(),
            Self::Fields { fields, .. } => fields.keys().copied().collect(),
        }
    }

    pub fn field(&self, base: usize) -> Option<CriticalPotential<T>> {
        match self {
            Self::Full(b) => Some(b.field(base)),
            Self::Fields { fields, .. } => fields.get(&base).cloned(),
        }
    }
}

/// `d(., y)` for the base node `y`. 1D uses quadrature; 2D evolves the cone
/// `min(L |x - y|, L/2)` with the value at `y` held at zero.
pub fn distance_field<T: Real>(
    model: &HamiltonianModel<T>,
    grid: TorusGrid,
    base: usize,
    options: &SchemeOptions,
) -> Result<CriticalPotential<T>> {
    if base >= grid.len() {
        return Err(Error::InvalidGrid(format!("base node {base} out of range")));
    }
    let y = grid.point::<T>(base);
    let h0 = model.eval_h(&y[..grid.dim()], &[T::zero(), T::zero()]);
    if h0 < T::lit(-1e-6) {
        log::warn!(
            "base point {:?} is not a maximum of the potential (H(y,0) = {h0}); d(., y) is not a solution near y",
            &y[..grid.dim()]
        );
    }
    if grid.dim() == 1 {
        let bank = Bank1d::new(model, grid, MIN_QUAD_POINTS.max(4 * grid.n()))?;
        return Ok(bank.field(base));
    }
    let lambda = model.lipschitz_bound()?;
    let cap = T::half() * lambda;
    let u0 = GridFunction::from_fn(grid, |x| {
        (lambda * grid.torus_distance(x, &y[..grid.dim()])).min(cap)
    });
    let scheme = Scheme::for_data(model, options, &u0)?;
    let cfg = *scheme.config();
    let per_unit = (T::one() / cfg.dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(1);
    let units = cfg.horizon.ceil().to_usize().unwrap_or(1).max(1);
    let mut cur = u0;
    let mut rate = T::infinity();
    let mut time = T::zero();
    let mut converged = false;
    for _ in 0..units {
        let prev = cur.clone();
        for _ in 0..per_unit {
            cur = scheme.step(&cur)?;
            cur.values_mut()[base] = T::zero();
        }
        time += T::from_usize_lossy(per_unit) * cfg.dt;
        rate = cur.sup_distance(&prev);
        if rate < cfg.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        log::warn!("2D distance field not stationary: rate {rate} at t = {time}");
    }
    let max_d = cur.max();
    if max_d > cap {
        return Err(Error::ConeCap { cap: cap.as_f64(), max_d: max_d.as_f64() });
    }
    Ok(CriticalPotential {
        base,
        values: cur,
        method: DistanceMethod::TimeMarching2d {
            rate: rate.as_f64(),
            time: time.as_f64(),
            converged,
        },
    })
}

/// `min_z (u0(z) + d(x, z))` over the base nodes of the bank.
pub fn maximal_subsolution<T: Real>(u0: &GridFunction<T>, bank: &DistanceBank<T>) -> Result<GridFunction<T>> {
    if u0.grid() != bank.grid() {
        return Err(Error::InvalidField("initial data and bank on different grids".into()));
    }
    let bases = bank.bases();
    let values = (0..u0.len())
        .map(|x| {
            bases
                .iter()
                .map(|&z| u0[z] + bank.distance(x, z).expect("listed base"))
                .fold(T::infinity(), T::min)
        })
        .collect();
    Ok(GridFunction::from_raw(*u0.grid(), values))
}

/// Result of [`is_subsolution`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SubsolutionCheck<T> {
    pub is_subsolution: bool,
    /// `max_i H(x_i, Dv)` with the central difference gradient.
    pub max_violation: T,
}

/// Checks `H(x, Dv) <= tol` at every node with `Dv` the central difference,
/// i.e. the Lax-Friedrichs numerical Hamiltonian at zero dissipation.
pub fn is_subsolution<T: Real>(model: &HamiltonianModel<T>, v: &GridFunction<T>, tol: T) -> SubsolutionCheck<T> {
    let g = v.grid();
    let h = g.spacing::<T>();
    let vals = v.values();
    let mut worst = T::neg_infinity();
    for i in 0..g.len() {
        let x = g.point::<T>(i);
        let mut central = [T::zero(); 2];
        for (a, c) in central.iter_mut().enumerate().take(g.dim()) {
            let f = g.neighbor(i, a, true);
            let b = g.neighbor(i, a, false);
            *c = T::half() * ((vals[i] - vals[b]) / h + (vals[f] - vals[i]) / h);
        }
        worst = worst.max(model.eval_h(&x[..g.dim()], &central));
    }
    SubsolutionCheck { is_subsolution: worst <= tol, max_violation: worst }
}
