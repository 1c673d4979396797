//! Explicit monotone finite-difference evolution for
//! `eps u_t + H(x, Du) = (a(x) + nu) Lap u` on the torus, and long-time
//! extraction of the ergodic constant.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{laplacian_at, GridFunction, TorusGrid};
use crate::hamiltonian::HamiltonianModel;
use crate::scalar::Real;

/// Per-axis numerical Hamiltonian.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum NumericalFlux {
    /// Upwind flux `max(max(p-,0)^2, min(p+,0)^2) / 2` for the kinetic term.
    Godunov,
    /// `H(x, (p- + p+)/2) - theta (p+ - p-)/2`.
    LaxFriedrichs,
}

/// Unresolved scheme parameters; `None` means "pick automatically".
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeOptions {
    pub dt: Option<f64>,
    pub theta: Option<f64>,
    /// Time scaling of the regularized problem; 0 is the plain Cauchy problem.
    pub epsilon: f64,
    pub viscous: bool,
    /// Defaults to `epsilon^4`.
    pub artificial_viscosity: Option<f64>,
    pub flux: NumericalFlux,
    pub horizon: f64,
    /// Stationarity tolerance of [`Scheme::ergodic_solve`].
    pub tol: f64,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        Self {
            dt: None,
            theta: None,
            epsilon: 0.0,
            viscous: false,
            artificial_viscosity: None,
            flux: NumericalFlux::Godunov,
            horizon: 50.0,
            tol: 1e-6,
        }
    }
}

impl SchemeOptions {
    pub fn regularized(epsilon: f64) -> Self {
        Self { epsilon, horizon: 1.0, ..Self::default() }
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_viscous(mut self, viscous: bool) -> Self {
        self.viscous = viscous;
        self
    }

    pub fn with_flux(mut self, flux: NumericalFlux) -> Self {
        self.flux = flux;
        self
    }

    /// Resolves automatic parameters for initial data with discrete Lipschitz
    /// constant `u0_lipschitz` and checks the CFL condition.
    pub fn resolve<T: Real>(
        &self,
        model: &HamiltonianModel<T>,
        grid: &TorusGrid,
        u0_lipschitz: T,
    ) -> Result<SchemeConfig<T>> {
        if model.dim() != grid.dim() {
            return Err(Error::InvalidModel(format!(
                "model dimension {} on a {}D grid",
                model.dim(),
                grid.dim()
            )));
        }
        if !(self.horizon > 0.0) || !(self.epsilon >= 0.0) || !(self.tol > 0.0) {
            return Err(Error::Cfl("horizon, epsilon and tol must be positive".into()));
        }
        if self.viscous && model.diffusion().is_none() {
            return Err(Error::InvalidModel("viscous run on a model without diffusion".into()));
        }
        let theta = match self.theta {
            Some(t) => T::lit(t),
            None => auto_theta(model, u0_lipschitz),
        };
        let epsilon = T::lit(self.epsilon);
        let nu = T::lit(self.artificial_viscosity.unwrap_or(self.epsilon.powi(4)));
        let sup_a = if self.viscous {
            let a = model.diffusion().expect("checked above");
            (0..grid.len())
                .map(|i| a.eval(&grid.point::<T>(i)[..grid.dim()]))
                .fold(T::zero(), T::max)
        } else {
            T::zero()
        };
        let scale = if epsilon > T::zero() { epsilon } else { T::one() };
        let dt_max = scale * cfl_limit(grid, theta, sup_a + nu);
        let dt = match self.dt {
            Some(dt) => T::lit(dt),
            // a whole number of steps per unit time
            None => T::one() / (T::one() / dt_max).ceil(),
        };
        let cfg = SchemeConfig {
            theta,
            dt,
            horizon: T::lit(self.horizon),
            epsilon,
            viscous: self.viscous,
            artificial_viscosity: nu,
            flux: self.flux,
            tol: T::lit(self.tol),
        };
        cfg.check_cfl(grid, sup_a)?;
        Ok(cfg)
    }
}

fn cfl_limit<T: Real>(grid: &TorusGrid, theta: T, diffusion: T) -> T {
    let h = grid.spacing::<T>();
    let d = T::from_usize_lossy(grid.dim());
    let adv = h / (theta * d);
    let lim = if diffusion > T::zero() {
        adv.min(h * h / (T::lit(2.0) * d * diffusion))
    } else {
        adv
    };
    T::half() * lim
}

/// Speed bound for data with Lipschitz constant `l0`: energy is conserved
/// along characteristics, so `|p| <= sqrt(l0^2 + 2 osc V)`.
pub fn auto_theta<T: Real>(model: &HamiltonianModel<T>, l0: T) -> T {
    let grid = TorusGrid::new(model.dim(), if model.dim() == 1 { 4096 } else { 512 })
        .expect("valid audit grid");
    let vs = model.potential().sample(&grid);
    let osc = vs.iter().copied().fold(T::neg_infinity(), T::max)
        - vs.iter().copied().fold(T::infinity(), T::min);
    let energy = T::lit(1.1) * (l0 * l0 + T::lit(2.0) * osc).sqrt();
    let lb = model.lipschitz_bound().unwrap_or(T::one());
    energy.max(lb).max(T::one())
}

/// Resolved, CFL-checked scheme parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SchemeConfig<T> {
    pub theta: T,
    pub dt: T,
    pub horizon: T,
    pub epsilon: T,
    pub viscous: bool,
    pub artificial_viscosity: T,
    pub flux: NumericalFlux,
    pub tol: T,
}

impl<T: Real> SchemeConfig<T> {
    /// `dt / eps`, or `dt` for the unscaled problem.
    #[inline]
    pub fn kappa(&self) -> T {
        if self.epsilon > T::zero() {
            self.dt / self.epsilon
        } else {
            self.dt
        }
    }

    fn check_cfl(&self, grid: &TorusGrid, sup_a: T) -> Result<()> {
        if !(self.dt > T::zero()) || !(self.theta > T::zero()) {
            return Err(Error::Cfl(format!("dt = {}, theta = {}", self.dt, self.theta)));
        }
        let lim = cfl_limit(grid, self.theta, sup_a + self.artificial_viscosity);
        let k = self.kappa();
        if k > lim * (T::one() + T::lit(1e-12)) {
            return Err(Error::Cfl(format!(
                "dt/eps = {k} exceeds {lim} (h = {}, theta = {}, diffusion = {})",
                grid.spacing::<T>(),
                self.theta,
                sup_a + self.artificial_viscosity
            )));
        }
        Ok(())
    }
}

/// Output of a Cauchy evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct EvolutionResult<T> {
    pub final_state: GridFunction<T>,
    /// `(t, u(t))` at every whole time unit.
    pub checkpoints: Vec<(T, GridFunction<T>)>,
    /// `|u(t) - u(t-1)|_inf` at every whole time unit.
    pub sup_norm_rate: Vec<T>,
    pub steps: usize,
    pub dt: T,
    /// Every time level, when requested.
    pub trajectory: Option<Vec<GridFunction<T>>>,
}

/// Ergodic constant estimate with its normalized solution.
#[derive(Clone, Debug, PartialEq)]
pub struct ErgodicSolution<T> {
    pub c_estimate: T,
    /// `u(T) + c T`, shifted so that `min w = 0`.
    pub w: GridFunction<T>,
    /// Sup-norm residual of the discrete stationary equation.
    pub residual: T,
    /// Constant estimates at every whole time unit.
    pub history: Vec<T>,
    pub converged: bool,
    /// Last stationarity measure `|u(t) - u(t-1) + c|_inf`.
    pub rate: T,
    pub time: T,
}

/// Regularized trajectory on `[0, 1]` started from a solution `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegularizedSolution<T> {
    pub evolution: EvolutionResult<T>,
    pub epsilon: T,
    /// `max_t |u(t) - w|_inf`.
    pub max_deviation: T,
    /// `max_deviation / epsilon`.
    pub observed_constant: T,
}

/// Upwind momenta and diffusion of the scheme linearized at a state.
#[derive(Clone, Debug, PartialEq)]
pub struct Linearization<T> {
    pub grid: TorusGrid,
    /// `g-` per node and axis, `>= 0`, multiplying the backward difference.
    pub g_minus: Vec<[T; 2]>,
    /// `g+` per node and axis, `<= 0`, multiplying the forward difference.
    pub g_plus: Vec<[T; 2]>,
    /// Diffusion coefficient per node.
    pub diffusion: Vec<T>,
    pub kappa: T,
}

impl<T: Real> Linearization<T> {
    /// `(I + kappa M) delta`, the linearized step.
    pub fn apply(&self, delta: &[T]) -> Vec<T> {
        let g = &self.grid;
        let h = g.spacing::<T>();
        let inv_h2 = T::one() / (h * h);
        (0..g.len())
            .map(|i| {
                let mut m = laplacian_at(g, delta, i, inv_h2) * self.diffusion[i];
                for a in 0..g.dim() {
                    let f = g.neighbor(i, a, true);
                    let b = g.neighbor(i, a, false);
                    m -= self.g_minus[i][a] * (delta[i] - delta[b]) / h
                        + self.g_plus[i][a] * (delta[f] - delta[i]) / h;
                }
                delta[i] + self.kappa * m
            })
            .collect()
    }

    /// `(I + kappa M)^T sigma`, the exact transpose of [`Self::apply`].
    pub fn apply_transpose(&self, sigma: &[T]) -> Vec<T> {
        let g = &self.grid;
        let h = g.spacing::<T>();
        let inv_h2 = T::one() / (h * h);
        (0..g.len())
            .map(|j| {
                let mut m = T::zero();
                for a in 0..g.dim() {
                    let f = g.neighbor(j, a, true);
                    let b = g.neighbor(j, a, false);
                    // column j of row j
                    m -= (self.g_minus[j][a] - self.g_plus[j][a]) / h * sigma[j];
                    m -= T::lit(2.0) * self.diffusion[j] * inv_h2 * sigma[j];
                    // column j of row f: f's backward neighbour is j
                    m += (self.g_minus[f][a] / h + self.diffusion[f] * inv_h2) * sigma[f];
                    // column j of row b: b's forward neighbour is j
                    m += (-self.g_plus[b][a] / h + self.diffusion[b] * inv_h2) * sigma[b];
                }
                sigma[j] + self.kappa * m
            })
            .collect()
    }

    /// Drift velocity `D_p H` selected by the upwinding at node `i`.
    pub fn drift(&self, i: usize) -> [T; 2] {
        let mut v = [T::zero(); 2];
        for (a, va) in v.iter_mut().enumerate().take(self.grid.dim()) {
            *va = self.g_minus[i][a] + self.g_plus[i][a];
        }
        v
    }
}

/// A scheme bound to one model and grid, with node data cached.
#[derive(Clone, Debug)]
pub struct Scheme<'m, T> {
    model: &'m HamiltonianModel<T>,
    grid: TorusGrid,
    config: SchemeConfig<T>,
    /// `V - shift` at the nodes.
    potential: Vec<T>,
    /// Total diffusion `a + nu` at the nodes.
    diffusion: Vec<T>,
}

impl<'m, T: Real> Scheme<'m, T> {
    pub fn new(model: &'m HamiltonianModel<T>, grid: TorusGrid, config: SchemeConfig<T>) -> Result<Self> {
        if model.dim() != grid.dim() {
            return Err(Error::InvalidModel("model and grid dimensions differ".into()));
        }
        let pts = |i: usize| grid.point::<T>(i);
        let potential = (0..grid.len())
            .map(|i| model.eval_v(&pts(i)[..grid.dim()]) - model.shift())
            .collect();
        let mut sup_a = T::zero();
        let diffusion = (0..grid.len())
            .map(|i| {
                let a = match (config.viscous, model.diffusion()) {
                    (true, Some(a)) => a.eval(&pts(i)[..grid.dim()]),
                    (true, None) => T::zero(),
                    (false, _) => T::zero(),
                };
                sup_a = sup_a.max(a);
                a + config.artificial_viscosity
            })
            .collect();
        if config.viscous && model.diffusion().is_none() {
            return Err(Error::InvalidModel("viscous run on a model without diffusion".into()));
        }
        config.check_cfl(&grid, sup_a)?;
        Ok(Self { model, grid, config, potential, diffusion })
    }

    /// Resolves `options` for the initial data `u0` and builds the scheme.
    pub fn for_data(
        model: &'m HamiltonianModel<T>,
        options: &SchemeOptions,
        u0: &GridFunction<T>,
    ) -> Result<Self> {
        let grid = *u0.grid();
        let cfg = options.resolve(model, &grid, u0.lipschitz_constant())?;
        Self::new(model, grid, cfg)
    }

    pub fn config(&self) -> &SchemeConfig<T> {
        &self.config
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn model(&self) -> &HamiltonianModel<T> {
        self.model
    }

    /// Total diffusion coefficient at node `i`.
    pub fn diffusion_at(&self, i: usize) -> T {
        self.diffusion[i]
    }

    /// Numerical Hamiltonian at node `i` and the largest upwind speed it used.
    #[inline]
    fn flux_at(&self, u: &[T], i: usize, theta: T) -> (T, T) {
        let g = &self.grid;
        let h = g.spacing::<T>();
        let mut kin = T::zero();
        let mut speed = T::zero();
        let mut dissip = T::zero();
        for a in 0..g.dim() {
            let f = g.neighbor(i, a, true);
            let b = g.neighbor(i, a, false);
            let pm = (u[i] - u[b]) / h;
            let pp = (u[f] - u[i]) / h;
            match self.config.flux {
                NumericalFlux::Godunov => {
                    let l = pm.max(T::zero());
                    let r = pp.min(T::zero());
                    let s = (l * l).max(r * r);
                    kin += s;
                    speed = speed.max(s.sqrt());
                }
                NumericalFlux::LaxFriedrichs => {
                    let pbar = T::half() * (pm + pp);
                    kin += pbar * pbar;
                    speed = speed.max(pbar.abs());
                    dissip += theta * (pp - pm);
                }
            }
        }
        (T::half() * (kin - dissip) + self.potential[i], speed)
    }

    /// `Hhat(x_i, D+-u) - (a + nu) Lap u` at every node.
    pub fn operator(&self, u: &GridFunction<T>) -> Vec<T> {
        let h = self.grid.spacing::<T>();
        let inv_h2 = T::one() / (h * h);
        let v = u.values();
        (0..self.grid.len())
            .map(|i| {
                self.flux_at(v, i, self.config.theta).0
                    - self.diffusion[i] * laplacian_at(&self.grid, v, i, inv_h2)
            })
            .collect()
    }

    /// One explicit Euler step.
    pub fn step(&self, u: &GridFunction<T>) -> Result<GridFunction<T>> {
        let mut out = vec![T::zero(); self.grid.len()];
        self.step_into(u.values(), &mut out)?;
        Ok(GridFunction::from_raw(self.grid, out))
    }

    fn step_into(&self, u: &[T], out: &mut [T]) -> Result<()> {
        let h = self.grid.spacing::<T>();
        let inv_h2 = T::one() / (h * h);
        let k = self.config.kappa();
        let theta = self.config.theta;
        let mut max_speed = T::zero();
        for (i, o) in out.iter_mut().enumerate() {
            let (hh, s) = self.flux_at(u, i, theta);
            max_speed = max_speed.max(s);
            let lap = laplacian_at(&self.grid, u, i, inv_h2);
            *o = u[i] - k * (hh - self.diffusion[i] * lap);
        }
        if max_speed > theta {
            return Err(Error::Cfl(format!(
                "realized speed {max_speed} exceeds theta = {theta}; pass a larger theta"
            )));
        }
        if !out.iter().all(|v| v.is_finite()) {
            return Err(Error::BlowUp { t: f64::NAN, reason: "non-finite value".into() });
        }
        Ok(())
    }

    fn steps_for(&self, horizon: T) -> usize {
        (horizon / self.config.dt - T::lit(1e-9)).ceil().to_usize().unwrap_or(0)
    }

    fn evolve(&self, u0: &GridFunction<T>, horizon: T, record: bool) -> Result<EvolutionResult<T>> {
        if u0.grid() != &self.grid {
            return Err(Error::InvalidField("initial data on a different grid".into()));
        }
        if !u0.is_finite() {
            return Err(Error::InvalidField("non-finite initial data".into()));
        }
        let dt = self.config.dt;
        let n = self.steps_for(horizon);
        let mut cur = u0.values().to_vec();
        let mut next = vec![T::zero(); cur.len()];
        let mut trajectory = record.then(|| vec![u0.clone()]);
        let mut checkpoints = Vec::new();
        let mut rates = Vec::new();
        let mut last_mark = u0.clone();
        let mut unit = 0usize;
        for s in 1..=n {
            self.step_into(&cur, &mut next).map_err(|e| match e {
                Error::BlowUp { reason, .. } => Error::BlowUp {
                    t: (T::from_usize_lossy(s) * dt).as_f64(),
                    reason: format!("{reason} (model not normalized or CFL breached?)"),
                },
                other => other,
            })?;
            std::mem::swap(&mut cur, &mut next);
            if let Some(tr) = trajectory.as_mut() {
                tr.push(GridFunction::from_raw(self.grid, cur.clone()));
            }
            let t = T::from_usize_lossy(s) * dt;
            let whole = (t + dt * T::lit(1e-6)).floor().to_usize().unwrap_or(0);
            if whole > unit {
                unit = whole;
                let f = GridFunction::from_raw(self.grid, cur.clone());
                rates.push(f.sup_distance(&last_mark));
                checkpoints.push((t, f.clone()));
                last_mark = f;
            }
        }
        Ok(EvolutionResult {
            final_state: GridFunction::from_raw(self.grid, cur),
            checkpoints,
            sup_norm_rate: rates,
            steps: n,
            dt,
            trajectory,
        })
    }

    /// Evolves `u0` to the configured horizon.
    pub fn solve_cauchy(&self, u0: &GridFunction<T>) -> Result<EvolutionResult<T>> {
        self.evolve(u0, self.config.horizon, false)
    }

    /// Evolves `u0` to `horizon`, calling `visit(t, u)` after every step.
    pub fn solve_with(
        &self,
        u0: &GridFunction<T>,
        horizon: T,
        mut visit: impl FnMut(T, &[T]),
    ) -> Result<GridFunction<T>> {
        let n = self.steps_for(horizon);
        let mut cur = u0.values().to_vec();
        let mut next = vec![T::zero(); cur.len()];
        visit(T::zero(), &cur);
        for s in 1..=n {
            self.step_into(&cur, &mut next)?;
            std::mem::swap(&mut cur, &mut next);
            visit(T::from_usize_lossy(s) * self.config.dt, &cur);
        }
        Ok(GridFunction::from_raw(self.grid, cur))
    }

    /// Long-time evolution until `u(t) - u(t-1)` is constant within `tol`.
    /// Returns the raw (not min-normalized) profile `u(t) + c t`.
    pub fn large_time(&self, u0: &GridFunction<T>) -> Result<ErgodicSolution<T>> {
        if u0.grid() != &self.grid {
            return Err(Error::InvalidField("initial data on a different grid".into()));
        }
        let per_unit = self.steps_for(T::one());
        let units = self.config.horizon.ceil().to_usize().unwrap_or(1).max(1);
        let mut cur = u0.values().to_vec();
        let mut next = vec![T::zero(); cur.len()];
        let mut prev = cur.clone();
        let mut history = Vec::new();
        let mut c = T::zero();
        let mut rate = T::infinity();
        let mut time = T::zero();
        let mut converged = false;
        for unit in 1..=units {
            for s in 0..per_unit {
                self.step_into(&cur, &mut next).map_err(|e| match e {
                    Error::BlowUp { reason, .. } => Error::BlowUp {
                        t: (unit - 1) as f64 + s as f64 * self.config.dt.as_f64(),
                        reason,
                    },
                    other => other,
                })?;
                std::mem::swap(&mut cur, &mut next);
            }
            let elapsed = T::from_usize_lossy(per_unit) * self.config.dt;
            let diffs: Vec<T> = cur.iter().zip(&prev).map(|(a, b)| *a - *b).collect();
            let mean = diffs.iter().copied().sum::<T>() / T::from_usize_lossy(diffs.len());
            c = -mean / elapsed;
            rate = diffs.iter().fold(T::zero(), |m, d| m.max((*d - mean).abs()));
            history.push(c);
            time += elapsed;
            prev.copy_from_slice(&cur);
            if rate < self.config.tol {
                converged = true;
                break;
            }
        }
        let w: Vec<T> = cur.iter().map(|v| *v + c * time).collect();
        let w = GridFunction::from_raw(self.grid, w);
        let residual = self.residual(&w, c);
        Ok(ErgodicSolution { c_estimate: c, w, residual, history, converged, rate, time })
    }

    /// Ergodic constant and min-normalized solution.
    pub fn ergodic_solve(&self, u0: &GridFunction<T>) -> Result<ErgodicSolution<T>> {
        let mut sol = self.large_time(u0)?;
        let m = sol.w.min();
        sol.w = sol.w.map(|v| v - m);
        Ok(sol)
    }

    /// `max_i |Hhat(x_i, D w) - (a + nu) Lap w - c|`.
    pub fn residual(&self, w: &GridFunction<T>, c: T) -> T {
        self.operator(w)
            .into_iter()
            .fold(T::zero(), |m, r| m.max((r - c).abs()))
    }

    /// Regularized problem on `[0, 1]` from `w`, storing every time level.
    pub fn solve_regularized(&self, w_init: &GridFunction<T>) -> Result<RegularizedSolution<T>> {
        if !(self.config.epsilon > T::zero()) {
            return Err(Error::Cfl("solve_regularized needs epsilon > 0".into()));
        }
        let evolution = self.evolve(w_init, T::one(), true)?;
        let max_deviation = evolution
            .trajectory
            .as_ref()
            .expect("recorded")
            .iter()
            .fold(T::zero(), |m, u| m.max(u.sup_distance(w_init)));
        Ok(RegularizedSolution {
            epsilon: self.config.epsilon,
            observed_constant: max_deviation / self.config.epsilon,
            max_deviation,
            evolution,
        })
    }

    /// Linearization of [`Self::step`] at `u`.
    pub fn linearize(&self, u: &GridFunction<T>) -> Linearization<T> {
        let g = &self.grid;
        let h = g.spacing::<T>();
        let theta = self.config.theta;
        let v = u.values();
        let mut g_minus = vec![[T::zero(); 2]; g.len()];
        let mut g_plus = vec![[T::zero(); 2]; g.len()];
        for i in 0..g.len() {
            for a in 0..g.dim() {
                let f = g.neighbor(i, a, true);
                let b = g.neighbor(i, a, false);
                let pm = (v[i] - v[b]) / h;
                let pp = (v[f] - v[i]) / h;
                match self.config.flux {
                    NumericalFlux::Godunov => {
                        let l = pm.max(T::zero());
                        let r = pp.min(T::zero());
                        if l * l >= r * r {
                            g_minus[i][a] = l;
                        } else {
                            g_plus[i][a] = r;
                        }
                    }
                    NumericalFlux::LaxFriedrichs => {
                        let pbar = T::half() * (pm + pp);
                        g_minus[i][a] = T::half() * (pbar + theta);
                        g_plus[i][a] = T::half() * (pbar - theta);
                    }
                }
            }
        }
        Linearization {
            grid: *g,
            g_minus,
            g_plus,
            diffusion: self.diffusion.clone(),
            kappa: self.config.kappa(),
        }
    }
}
