//! Backward adjoint densities along a regularized trajectory and the
//! position-velocity measures they generate.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TorusGrid, VelocityGrid};
use crate::hamiltonian::HamiltonianModel;
use crate::hj_solver::{Linearization, Scheme};
use crate::scalar::Real;

/// Largest fraction of mass allowed outside the velocity grid.
pub const MAX_OVERFLOW: f64 = 0.01;

/// `sigma` at every time level of `[0, 1]`, ending in a point mass at `x0`.
#[derive(Clone, Debug, PartialEq)]
pub struct AdjointTrajectory<T> {
    /// `sigma[n]` lives at `t = n dt`.
    pub sigma: Vec<GridFunction<T>>,
    pub x0: usize,
    pub epsilon: T,
    pub dt: T,
    /// Smallest value seen over all levels.
    pub min_value: T,
    /// Largest `|integrate(sigma) - 1|` over all levels.
    pub max_mass_error: T,
}

impl<T: Real> AdjointTrajectory<T> {
    pub fn initial(&self) -> &GridFunction<T> {
        &self.sigma[0]
    }

    pub fn levels(&self) -> usize {
        self.sigma.len()
    }
}

/// Solves the adjoint equation backward along `trajectory`, the stored levels
/// of a forward run of `scheme`. Each backward step applies the exact
/// transpose of the forward step linearized at the earlier level.
pub fn solve_adjoint<T: Real>(
    scheme: &Scheme<'_, T>,
    trajectory: &[GridFunction<T>],
    x0: usize,
) -> Result<AdjointTrajectory<T>> {
    let grid = *scheme.grid();
    if trajectory.len() < 2 {
        return Err(Error::InvalidField("trajectory needs at least two levels".into()));
    }
    if x0 >= grid.len() {
        return Err(Error::InvalidGrid(format!("terminal node {x0} out of range")));
    }
    let vol = grid.cell_volume::<T>();
    let mut terminal = vec![T::zero(); grid.len()];
    terminal[x0] = T::one() / vol;
    let steps = trajectory.len() - 1;
    let mut sigma = vec![GridFunction::zeros(grid); steps + 1];
    sigma[steps] = GridFunction::from_raw(grid, terminal);
    let mut min_value = T::zero();
    let mut max_mass_error = T::zero();
    for n in (0..steps).rev() {
        let lin = scheme.linearize(&trajectory[n]);
        let next = lin.apply_transpose(sigma[n + 1].values());
        let f = GridFunction::from_raw(grid, next);
        min_value = min_value.min(f.min());
        let mass = crate::grid::integrate(&f);
        max_mass_error = max_mass_error.max((mass - T::one()).abs());
        if !f.is_finite() {
            return Err(Error::BlowUp {
                t: (T::from_usize_lossy(n) * scheme.config().dt).as_f64(),
                reason: "non-finite adjoint density".into(),
            });
        }
        sigma[n] = f;
    }
    if min_value < T::lit(-1e-8) {
        return Err(Error::NegativeMass { min: min_value.as_f64() });
    }
    Ok(AdjointTrajectory {
        sigma,
        x0,
        epsilon: scheme.config().epsilon,
        dt: scheme.config().dt,
        min_value,
        max_mass_error,
    })
}

/// `|<L delta, sigma> - <delta, L^T sigma>| h^dim` for one linearized step.
pub fn duality_defect<T: Real>(lin: &Linearization<T>, delta: &[T], sigma: &[T]) -> T {
    let vol = lin.grid.cell_volume::<T>();
    let lhs: T = lin.apply(delta).iter().zip(sigma).map(|(a, b)| *a * *b).sum();
    let rhs: T = lin.apply_transpose(sigma).iter().zip(delta).map(|(a, b)| *a * *b).sum();
    (lhs - rhs).abs() * vol
}

/// `t_n -> integrate((u1 - u2) sigma)` along two trajectories.
pub fn comparison_history<T: Real>(
    u1: &[GridFunction<T>],
    u2: &[GridFunction<T>],
    adjoint: &AdjointTrajectory<T>,
) -> Vec<T> {
    u1.iter()
        .zip(u2)
        .zip(&adjoint.sigma)
        .map(|((a, b), s)| {
            let vol = a.grid().cell_volume::<T>();
            a.values()
                .iter()
                .zip(b.values())
                .zip(s.values())
                .map(|((x, y), z)| (*x - *y) * *z)
                .sum::<T>()
                * vol
        })
        .collect()
}

/// Nonnegative weights on position nodes times velocity nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteMeasure<T> {
    grid: TorusGrid,
    vgrid: VelocityGrid<T>,
    /// `weights[i * vgrid.len() + j]`.
    weights: Vec<T>,
}

impl<T: Real> DiscreteMeasure<T> {
    pub fn zeros(grid: TorusGrid, vgrid: VelocityGrid<T>) -> Self {
        Self { grid, vgrid, weights: vec![T::zero(); grid.len() * vgrid.len()] }
    }

    pub fn new(grid: TorusGrid, vgrid: VelocityGrid<T>, weights: Vec<T>) -> Result<Self> {
        if weights.len() != grid.len() * vgrid.len() {
            return Err(Error::InvalidField(format!(
                "{} weights for {} cells",
                weights.len(),
                grid.len() * vgrid.len()
            )));
        }
        if weights.iter().any(|w| !w.is_finite() || *w < T::zero()) {
            return Err(Error::InvalidField("measure weights must be finite and nonnegative".into()));
        }
        Ok(Self { grid, vgrid, weights })
    }

    /// Unit mass at node `i` with velocity node `j`.
    pub fn point_mass(grid: TorusGrid, vgrid: VelocityGrid<T>, i: usize, j: usize) -> Self {
        let mut m = Self::zeros(grid, vgrid);
        let k = m.cell(i, j);
        m.weights[k] = T::one();
        m
    }

    #[inline]
    fn cell(&self, i: usize, j: usize) -> usize {
        i * self.vgrid.len() + j
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn vgrid(&self) -> &VelocityGrid<T> {
        &self.vgrid
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    #[inline]
    pub fn weight(&self, i: usize, j: usize) -> T {
        self.weights[self.cell(i, j)]
    }

    pub(crate) fn add(&mut self, i: usize, j: usize, w: T) {
        let k = self.cell(i, j);
        self.weights[k] += w;
    }

    pub fn total_mass(&self) -> T {
        self.weights.iter().copied().sum()
    }

    pub fn normalize(&mut self) {
        let m = self.total_mass();
        if m > T::zero() {
            for w in &mut self.weights {
                *w /= m;
            }
        }
    }

    /// `(i, j, weight)` for every cell with positive weight.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        let mv = self.vgrid.len();
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, w)| **w > T::zero())
            .map(move |(k, w)| (k / mv, k % mv, *w))
    }

    /// Mass per position node.
    pub fn position_marginal(&self) -> Vec<T> {
        let mv = self.vgrid.len();
        self.weights.chunks(mv).map(|c| c.iter().copied().sum()).collect()
    }

    /// Mass per velocity node.
    pub fn velocity_marginal(&self) -> Vec<T> {
        let mv = self.vgrid.len();
        let mut out = vec![T::zero(); mv];
        for (k, w) in self.weights.iter().enumerate() {
            out[k % mv] += *w;
        }
        out
    }

    /// `sum L(x_i, v_j) mu_ij`.
    pub fn action(&self, model: &HamiltonianModel<T>) -> T {
        let d = self.grid.dim();
        self.cells()
            .map(|(i, j, w)| {
                let x = self.grid.point::<T>(i);
                let v = self.vgrid.velocity(j);
                model.eval_l(&x[..d], &v[..d]) * w
            })
            .sum()
    }

    /// Largest `|v|` (sup over axes) carrying more than `floor` mass.
    pub fn max_speed(&self, floor: T) -> T {
        self.cells()
            .filter(|(_, _, w)| *w > floor)
            .map(|(_, j, _)| {
                let v = self.vgrid.velocity(j);
                v[0].abs().max(v[1].abs())
            })
            .fold(T::zero(), T::max)
    }
}

/// Diagnostics of [`build_measure`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MeasureDiagnostics {
    /// Deposited mass minus one, before renormalization.
    pub mass_defect: f64,
    /// Fraction of mass whose velocity left the grid.
    pub velocity_overflow: f64,
    /// Largest drift speed seen.
    pub max_drift: f64,
}

/// Deposits `sigma^{n+1} h^dim dt` at `(x_i, D_pH)` for every step `n`,
/// then renormalizes to a probability measure.
pub fn build_measure<T: Real>(
    scheme: &Scheme<'_, T>,
    trajectory: &[GridFunction<T>],
    adjoint: &AdjointTrajectory<T>,
    vgrid: VelocityGrid<T>,
) -> Result<(DiscreteMeasure<T>, MeasureDiagnostics)> {
    let grid = *scheme.grid();
    if adjoint.sigma.len() != trajectory.len() {
        return Err(Error::InvalidField("adjoint and trajectory lengths differ".into()));
    }
    let d = grid.dim();
    let vol = grid.cell_volume::<T>();
    let dt = scheme.config().dt;
    let mut mu = DiscreteMeasure::zeros(grid, vgrid);
    let mut lost = T::zero();
    let mut deposited = T::zero();
    let mut max_drift = T::zero();
    for (u, next) in trajectory.iter().zip(&adjoint.sigma[1..]) {
        let lin = scheme.linearize(u);
        for (i, s) in next.values().iter().enumerate() {
            let w = *s * vol * dt;
            if w <= T::zero() {
                continue;
            }
            // Lax-Friedrichs linearizations carry both one-sided momenta on an
            // axis; each half of the mass then moves with twice one of them.
            let mut parts: Vec<([T; 2], T)> = vec![([T::zero(); 2], w)];
            for a in 0..d {
                let (gm, gp) = (lin.g_minus[i][a], lin.g_plus[i][a]);
                let split = gm != T::zero() && gp != T::zero();
                let mut next = Vec::with_capacity(parts.len() * 2);
                for (v, m) in parts {
                    if split {
                        let mut v1 = v;
                        let mut v2 = v;
                        v1[a] = gm + gm;
                        v2[a] = gp + gp;
                        next.push((v1, m * T::half()));
                        next.push((v2, m * T::half()));
                    } else {
                        let mut v1 = v;
                        v1[a] = gm + gp;
                        next.push((v1, m));
                    }
                }
                parts = next;
            }
            for (v, m) in parts {
                max_drift = max_drift.max(v[0].abs().max(v[1].abs()));
                let ok = vgrid.deposit(&v[..d], |j, frac| mu.add(i, j, m * frac));
                if ok {
                    deposited += m;
                } else {
                    lost += m;
                }
            }
        }
    }
    let total = deposited + lost;
    let overflow = if total > T::zero() { lost / total } else { T::zero() };
    if overflow > T::lit(MAX_OVERFLOW) {
        return Err(Error::VelocityOverflow {
            fraction: overflow.as_f64(),
            v_max: vgrid.v_max().as_f64(),
        });
    }
    let diag = MeasureDiagnostics {
        mass_defect: (mu.total_mass() - T::one()).as_f64(),
        velocity_overflow: overflow.as_f64(),
        max_drift: max_drift.as_f64(),
    };
    mu.normalize();
    Ok((mu, diag))
}

/// `sum_x (w1 - w2)(x) mu(x, .)`.
pub fn comparison_functional<T: Real>(
    w1: &GridFunction<T>,
    w2: &GridFunction<T>,
    mu: &DiscreteMeasure<T>,
) -> Result<T> {
    if w1.grid() != w2.grid() || w1.grid() != mu.grid() {
        return Err(Error::InvalidField("fields and measure on different grids".into()));
    }
    Ok(mu
        .position_marginal()
        .iter()
        .enumerate()
        .map(|(i, m)| (w1[i] - w2[i]) * *m)
        .sum())
}

/// Test functions for the holonomy constraint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TestBasis {
    /// One hat function per node.
    Hat,
    /// `sin` and `cos` modes with frequencies up to `max_frequency` per axis.
    Fourier { max_frequency: usize },
}

/// Vector `r` with `sum_k r_k phi_k = sum mu (v.D phi - a Lap phi)` for every
/// grid function `phi`, using the upwind differences of the holonomy rows.
pub fn holonomy_divergence<T: Real>(mu: &DiscreteMeasure<T>, diffusion: Option<&[T]>) -> Vec<T> {
    let g = *mu.grid();
    let h = g.spacing::<T>();
    let inv_h2 = T::one() / (h * h);
    let mut r = vec![T::zero(); g.len()];
    for (i, j, w) in mu.cells() {
        let v = mu.vgrid().velocity(j);
        for (a, &va) in v.iter().enumerate().take(g.dim()) {
            let f = g.neighbor(i, a, true);
            let b = g.neighbor(i, a, false);
            let c = va * w / h;
            if va > T::zero() {
                r[i] += c;
                r[b] -= c;
            } else if va < T::zero() {
                r[f] += c;
                r[i] -= c;
            }
            if let Some(a_vals) = diffusion {
                let k = a_vals[i] * w * inv_h2;
                r[f] -= k;
                r[b] -= k;
                r[i] += k + k;
            }
        }
    }
    r
}

fn test_functions<T: Real>(grid: &TorusGrid, basis: TestBasis) -> Vec<Vec<T>> {
    let h = grid.spacing::<T>();
    match basis {
        TestBasis::Hat => (0..grid.len())
            .map(|k| {
                let mut e = vec![T::zero(); grid.len()];
                e[k] = h;
                e
            })
            .collect(),
        TestBasis::Fourier { max_frequency } => {
            let kmax = max_frequency as i64;
            let mut freqs = Vec::new();
            if grid.dim() == 1 {
                for k in 1..=kmax {
                    freqs.push([k, 0]);
                }
            } else {
                for k0 in -kmax..=kmax {
                    for k1 in 0..=kmax {
                        if k1 > 0 || k0 > 0 {
                            freqs.push([k0, k1]);
                        }
                    }
                }
            }
            let mut out = Vec::new();
            for k in freqs {
                for trig in [T::sin as fn(T) -> T, T::cos as fn(T) -> T] {
                    let phi = GridFunction::from_fn(*grid, |x| {
                        let mut s = T::zero();
                        for (a, xa) in x.iter().enumerate() {
                            s += T::lit(k[a] as f64) * *xa;
                        }
                        trig(T::two_pi() * s)
                    });
                    let lip = phi.lipschitz_constant();
                    out.push(phi.into_values().into_iter().map(|v| v / lip).collect());
                }
            }
            out
        }
    }
}

/// `max_phi |sum mu (v.D phi - a Lap phi)|` over test functions with unit
/// discrete Lipschitz constant. The `a` term is included when `viscous`.
pub fn holonomy_residual<T: Real>(
    model: &HamiltonianModel<T>,
    mu: &DiscreteMeasure<T>,
    basis: TestBasis,
    viscous: bool,
) -> Result<T> {
    let g = *mu.grid();
    let a_vals: Option<Vec<T>> = match (viscous, model.diffusion()) {
        (true, Some(a)) => Some(
            (0..g.len())
                .map(|i| a.eval(&g.point::<T>(i)[..g.dim()]))
                .collect(),
        ),
        (true, None) => return Err(Error::InvalidModel("viscous residual without diffusion".into())),
        (false, _) => None,
    };
    let r = holonomy_divergence(mu, a_vals.as_deref());
    Ok(test_functions::<T>(&g, basis)
        .iter()
        .map(|phi| phi.iter().zip(&r).map(|(p, q)| *p * *q).sum::<T>().abs())
        .fold(T::zero(), T::max))
}
