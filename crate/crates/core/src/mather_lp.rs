//! Mather measures as minimizers of the average action over discrete
//! holonomic measures, and the projected Mather set.

use minilp::{ComparisonOp, OptimizationDirection, Problem, Variable};
use serde::Serialize;

use crate::adjoint::DiscreteMeasure;
use crate::error::{Error, Result};
use crate::grid::{TorusGrid, VelocityGrid};
use crate::hamiltonian::HamiltonianModel;
use crate::scalar::Real;

/// Default support threshold, relative to the uniform mass `h^dim`.
pub const DEFAULT_THRESHOLD: f64 = 0.1;
/// Amplitude of the tie-breaking perturbations.
pub const PERTURBATION: f64 = 1e-4;
/// Slack on the optimal value defining the optimal face.
pub const FACE_SLACK: f64 = 1e-9;

/// Linear program `min sum L mu` over nonnegative `mu` with unit mass and
/// one holonomy row per node.
#[derive(Clone, Debug, PartialEq)]
pub struct HolonomicLp<T> {
    grid: TorusGrid,
    vgrid: VelocityGrid<T>,
    objective: Vec<T>,
    /// Sparse holonomy rows, one per node, column indices increasing.
    rows: Vec<Vec<(usize, T)>>,
    viscous: bool,
}

impl<T: Real> HolonomicLp<T> {
    pub fn num_variables(&self) -> usize {
        self.objective.len()
    }

    /// Mass row plus one holonomy row per node.
    pub fn num_rows(&self) -> usize {
        1 + self.rows.len()
    }

    pub fn objective(&self) -> &[T] {
        &self.objective
    }

    pub fn holonomy_rows(&self) -> &[Vec<(usize, T)>] {
        &self.rows
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn vgrid(&self) -> &VelocityGrid<T> {
        &self.vgrid
    }

    pub fn is_viscous(&self) -> bool {
        self.viscous
    }

    /// Largest violation over the mass and holonomy rows.
    pub fn feasibility_residual(&self, x: &[T]) -> T {
        let mass: T = x.iter().copied().sum();
        let mut worst = (mass - T::one()).abs();
        for row in &self.rows {
            let s: T = row.iter().map(|(k, c)| *c * x[*k]).sum();
            worst = worst.max(s.abs());
        }
        worst
    }
}

/// Holonomy rows use hat test functions scaled by `h`, with upwind
/// differences matching the adjoint transport: a cell with `v > 0` pairs
/// node `i` with its backward neighbour, `v < 0` with its forward one.
pub fn build_lp<T: Real>(
    model: &HamiltonianModel<T>,
    grid: TorusGrid,
    vgrid: VelocityGrid<T>,
    viscous: bool,
) -> Result<HolonomicLp<T>> {
    if model.dim() != grid.dim() || vgrid.dim() != grid.dim() {
        return Err(Error::InvalidModel("model, grid and velocity grid dimensions differ".into()));
    }
    let a_vals: Option<Vec<T>> = match (viscous, model.diffusion()) {
        (true, Some(a)) => Some(
            (0..grid.len())
                .map(|i| a.eval(&grid.point::<T>(i)[..grid.dim()]))
                .collect(),
        ),
        (true, None) => return Err(Error::InvalidModel("viscous rows without diffusion".into())),
        (false, _) => None,
    };
    let h = grid.spacing::<T>();
    let d = grid.dim();
    let mv = vgrid.len();
    let mut objective = Vec::with_capacity(grid.len() * mv);
    let mut rows: Vec<Vec<(usize, T)>> = vec![Vec::new(); grid.len()];
    let mut col: Vec<(usize, T)> = Vec::with_capacity(5);
    for i in 0..grid.len() {
        let x = grid.point::<T>(i);
        for j in 0..mv {
            let k = i * mv + j;
            let v = vgrid.velocity(j);
            objective.push(model.eval_l(&x[..d], &v[..d]));
            col.clear();
            let mut push = |row: usize, c: T| {
                if let Some(e) = col.iter_mut().find(|e| e.0 == row) {
                    e.1 += c;
                } else {
                    col.push((row, c));
                }
            };
            for (a, &va) in v.iter().enumerate().take(d) {
                let f = grid.neighbor(i, a, true);
                let b = grid.neighbor(i, a, false);
                if va > T::zero() {
                    push(i, va);
                    push(b, -va);
                } else if va < T::zero() {
                    push(f, va);
                    push(i, -va);
                }
                if let Some(av) = &a_vals {
                    let c = av[i] / h;
                    push(f, -c);
                    push(b, -c);
                    push(i, c + c);
                }
            }
            for &(row, c) in &col {
                if c != T::zero() {
                    rows[row].push((k, c));
                }
            }
        }
    }
    Ok(HolonomicLp { grid, vgrid, objective, rows, viscous })
}

/// Solved LP with its measure and projected support.
#[derive(Clone, Debug, PartialEq)]
pub struct MatherResult<T> {
    pub measure: DiscreteMeasure<T>,
    /// `sum L mu` recomputed from the returned measure.
    pub optimal_value: T,
    /// Nodes with marginal mass above `DEFAULT_THRESHOLD * h^dim`.
    pub projected_set: Vec<usize>,
    pub status: SolverStatus,
    /// Largest row violation of the returned measure.
    pub feasibility_residual: T,
    /// Largest `|v|` on a cell with mass above `1e-6`.
    pub max_speed: T,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SolverStatus {
    Optimal,
}

fn to_problem<T: Real>(lp: &HolonomicLp<T>, objective: &[T]) -> (Problem, Vec<Variable>) {
    let mut p = Problem::new(OptimizationDirection::Minimize);
    let vars: Vec<Variable> = objective
        .iter()
        .map(|c| p.add_var(c.as_f64(), (0.0, f64::INFINITY)))
        .collect();
    add_rows(&mut p, lp, &vars);
    (p, vars)
}

fn add_rows<T: Real>(p: &mut Problem, lp: &HolonomicLp<T>, vars: &[Variable]) {
    p.add_constraint(vars.iter().map(|v| (*v, 1.0)), ComparisonOp::Eq, 1.0);
    // the holonomy rows sum to zero; the last one is implied by the others
    for row in &lp.rows[..lp.rows.len() - 1] {
        p.add_constraint(row.iter().map(|(k, c)| (vars[*k], c.as_f64())), ComparisonOp::Eq, 0.0);
    }
}

fn map_err(e: minilp::Error) -> Error {
    match e {
        minilp::Error::Infeasible => Error::Infeasible,
        minilp::Error::Unbounded => Error::Unbounded,
    }
}

fn support<T: Real>(measure: &DiscreteMeasure<T>, threshold: f64) -> Vec<usize> {
    let floor = T::lit(threshold) * measure.grid().cell_volume::<T>();
    measure
        .position_marginal()
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > floor)
        .map(|(i, _)| i)
        .collect()
}

fn solve_with<T: Real>(lp: &HolonomicLp<T>, objective: &[T]) -> Result<MatherResult<T>> {
    let (p, vars) = to_problem(lp, objective);
    let sol = p.solve().map_err(map_err)?;
    let x: Vec<T> = vars.iter().map(|v| T::lit(sol[*v].max(0.0))).collect();
    let feasibility_residual = lp.feasibility_residual(&x);
    let measure = DiscreteMeasure::new(lp.grid, lp.vgrid, x)?;
    let optimal_value = measure.action_with(&lp.objective);
    let max_speed = measure.max_speed(T::lit(1e-6));
    let projected_set = support(&measure, DEFAULT_THRESHOLD);
    log::debug!("LP solved: value {optimal_value}, residual {feasibility_residual}, max |v| {max_speed}");
    Ok(MatherResult {
        measure,
        optimal_value,
        projected_set,
        status: SolverStatus::Optimal,
        feasibility_residual,
        max_speed,
    })
}

/// Solves the LP for one optimal vertex.
pub fn solve_lp<T: Real>(lp: &HolonomicLp<T>) -> Result<MatherResult<T>> {
    solve_with(lp, &lp.objective)
}

/// The eight fixed tie-breaking perturbations `g` evaluated at the nodes.
pub fn perturbation_bank<T: Real>(grid: &TorusGrid) -> Vec<Vec<T>> {
    let modes: Vec<(usize, i64, bool)> = if grid.dim() == 1 {
        vec![(0, 1, true), (0, 1, false), (0, 2, true), (0, 2, false)]
    } else {
        vec![(0, 1, true), (0, 1, false), (1, 1, true), (1, 1, false)]
    };
    let mut bank = Vec::with_capacity(8);
    for (axis, k, is_sin) in modes {
        let vals: Vec<T> = (0..grid.len())
            .map(|i| {
                let th = T::two_pi() * T::lit(k as f64) * grid.point::<T>(i)[axis];
                if is_sin {
                    th.sin()
                } else {
                    th.cos()
                }
            })
            .collect();
        bank.push(vals.iter().map(|v| -*v).collect());
        bank.push(vals);
    }
    bank
}

/// Maximizes the mass placed on nodes outside `known` over the optimal face
/// `{mu feasible, sum L mu <= value + FACE_SLACK}`, each node capped at
/// `1 / #nodes`. Returns the new nodes above the threshold.
fn expand_face<T: Real>(lp: &HolonomicLp<T>, value: T, known: &[usize], threshold: f64) -> Result<Vec<usize>> {
    let n = lp.grid.len();
    let mv = lp.vgrid.len();
    let mut inside = vec![false; n];
    for &k in known {
        inside[k] = true;
    }
    let mut p = Problem::new(OptimizationDirection::Maximize);
    let vars: Vec<Variable> = (0..lp.objective.len())
        .map(|_| p.add_var(0.0, (0.0, f64::INFINITY)))
        .collect();
    let cap = 1.0 / n as f64;
    let slack: Vec<(usize, Variable)> = (0..n)
        .filter(|k| !inside[*k])
        .map(|k| (k, p.add_var(1.0, (0.0, cap))))
        .collect();
    if slack.is_empty() {
        return Ok(Vec::new());
    }
    add_rows(&mut p, lp, &vars);
    p.add_constraint(
        vars.iter().zip(&lp.objective).map(|(v, c)| (*v, c.as_f64())),
        ComparisonOp::Le,
        value.as_f64() + FACE_SLACK,
    );
    for &(k, s) in &slack {
        let mut terms: Vec<(Variable, f64)> = (0..mv).map(|j| (vars[k * mv + j], -1.0)).collect();
        terms.push((s, 1.0));
        p.add_constraint(terms, ComparisonOp::Le, 0.0);
    }
    let sol = p.solve().map_err(map_err)?;
    let floor = threshold * lp.grid.cell_volume::<T>().as_f64();
    Ok(slack
        .iter()
        .filter(|(_, s)| sol[*s] > floor)
        .map(|(k, _)| *k)
        .collect())
}

/// Approximate projected Mather set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProjectedSet {
    pub nodes: Vec<usize>,
    /// LP solves performed (base, perturbations, face expansions).
    pub solves: usize,
}

/// Support of `base` above `threshold * h^dim`; with `union`, also the
/// supports under the perturbation bank and every node reachable on the
/// optimal face.
pub fn projected_mather_set<T: Real>(
    lp: &HolonomicLp<T>,
    base: &MatherResult<T>,
    threshold: f64,
    union: bool,
) -> Result<ProjectedSet> {
    let mut nodes = support(&base.measure, threshold);
    let mut solves = 0;
    if union {
        let delta = T::lit(PERTURBATION);
        let mv = lp.vgrid.len();
        for g in perturbation_bank::<T>(&lp.grid) {
            let obj: Vec<T> = lp
                .objective
                .iter()
                .enumerate()
                .map(|(k, c)| *c + delta * g[k / mv])
                .collect();
            let r = solve_with(lp, &obj)?;
            solves += 1;
            nodes.extend(support(&r.measure, threshold));
        }
        nodes.sort_unstable();
        nodes.dedup();
        loop {
            let extra = expand_face(lp, base.optimal_value, &nodes, threshold)?;
            solves += 1;
            if extra.is_empty() {
                break;
            }
            nodes.extend(extra);
            nodes.sort_unstable();
            nodes.dedup();
        }
    }
    nodes.sort_unstable();
    nodes.dedup();
    Ok(ProjectedSet { nodes, solves })
}

impl<T: Real> DiscreteMeasure<T> {
    /// `sum c_k mu_k` for a cost vector in cell order.
    pub fn action_with(&self, cost: &[T]) -> T {
        self.weights().iter().zip(cost).map(|(w, c)| *w * *c).sum()
    }
}
