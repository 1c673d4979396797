//! Asymptotic profiles of the Cauchy problem: by long-time evolution and by
//! the representation `min_{y in M} (d(x, y) + u0^-(y))`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{GridFunction, TorusGrid};
use crate::hamiltonian::HamiltonianModel;
use crate::hj_solver::{Scheme, SchemeOptions};
use crate::scalar::Real;
use crate::weak_kam_metric::{is_subsolution, maximal_subsolution, DistanceBank};

/// Long-time limit of the evolution from `u0`.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectProfile<T> {
    /// `u(T) + c T`, not normalized.
    pub field: GridFunction<T>,
    pub c_estimate: T,
    pub converged: bool,
    pub rate: T,
    pub time: T,
    pub residual: T,
}

pub fn profile_direct<T: Real>(
    model: &HamiltonianModel<T>,
    u0: &GridFunction<T>,
    options: &SchemeOptions,
) -> Result<DirectProfile<T>> {
    let scheme = Scheme::for_data(model, options, u0)?;
    let sol = scheme.large_time(u0)?;
    if !sol.converged {
        log::warn!("profile not stationary at t = {}: rate {}", sol.time, sol.rate);
    }
    Ok(DirectProfile {
        field: sol.w,
        c_estimate: sol.c_estimate,
        converged: sol.converged,
        rate: sol.rate,
        time: sol.time,
        residual: sol.residual,
    })
}

/// `min_{y in mather_nodes} (d(x, y) + u0^-(y))`.
pub fn profile_formula<T: Real>(
    u0: &GridFunction<T>,
    mather_nodes: &[usize],
    bank: &DistanceBank<T>,
) -> Result<GridFunction<T>> {
    let low = maximal_subsolution(u0, bank)?;
    formula_from_subsolution(&low, mather_nodes, bank)
}

fn formula_from_subsolution<T: Real>(
    low: &GridFunction<T>,
    mather_nodes: &[usize],
    bank: &DistanceBank<T>,
) -> Result<GridFunction<T>> {
    if mather_nodes.is_empty() {
        return Err(Error::EmptyMatherSet);
    }
    let mut values = vec![T::infinity(); low.len()];
    for &y in mather_nodes {
        for (x, v) in values.iter_mut().enumerate() {
            let d = bank
                .distance(x, y)
                .ok_or_else(|| Error::InvalidField(format!("no distance field for node {y}")))?;
            *v = v.min(d + low[y]);
        }
    }
    Ok(GridFunction::from_raw(*low.grid(), values))
}

/// Deviation of the evolution from its initial data on the Mather nodes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InvarianceReport {
    /// `max_t max_{y in M} |u(y, t) - u0(y)|`.
    pub max_deviation: f64,
    /// The same at the final time only.
    pub terminal_deviation: f64,
    /// Worst deviation per Mather node.
    pub per_node: Vec<(usize, f64)>,
    pub subsolution_violation: f64,
}

/// Evolves a subsolution and tracks it on the Mather nodes at every step.
pub fn check_mather_invariance<T: Real>(
    model: &HamiltonianModel<T>,
    u0: &GridFunction<T>,
    mather_nodes: &[usize],
    options: &SchemeOptions,
) -> Result<InvarianceReport> {
    if mather_nodes.is_empty() {
        return Err(Error::EmptyMatherSet);
    }
    let tol = T::lit(5.0) * u0.grid().spacing::<T>();
    let chk = is_subsolution(model, u0, tol);
    if !chk.is_subsolution {
        return Err(Error::NotSubsolution { violation: chk.max_violation.as_f64() });
    }
    let scheme = Scheme::for_data(model, options, u0)?;
    let mut worst = vec![T::zero(); mather_nodes.len()];
    let mut last = T::zero();
    scheme.solve_with(u0, options_horizon(&scheme), |_, u| {
        last = T::zero();
        for (w, &y) in worst.iter_mut().zip(mather_nodes) {
            let dev = (u[y] - u0[y]).abs();
            *w = w.max(dev);
            last = last.max(dev);
        }
    })?;
    let max_deviation = worst.iter().copied().fold(T::zero(), T::max);
    Ok(InvarianceReport {
        max_deviation: max_deviation.as_f64(),
        terminal_deviation: last.as_f64(),
        per_node: mather_nodes.iter().zip(&worst).map(|(y, w)| (*y, w.as_f64())).collect(),
        subsolution_violation: chk.max_violation.as_f64(),
    })
}

fn options_horizon<T: Real>(scheme: &Scheme<'_, T>) -> T {
    scheme.config().horizon
}

/// Both routes to the asymptotic profile side by side.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileReport<T> {
    pub direct: DirectProfile<T>,
    pub formula: GridFunction<T>,
    pub u0_minus: GridFunction<T>,
    /// `|direct - formula|_inf`.
    pub sup_gap: T,
    /// `(y, direct(y), u0^-(y))` on the Mather nodes.
    pub mather_trace: Vec<(usize, T, T)>,
}

impl<T: Real> ProfileReport<T> {
    /// `max_{y in M} |direct(y) - u0^-(y)|`.
    pub fn trace_gap(&self) -> T {
        self.mather_trace
            .iter()
            .map(|(_, a, b)| (*a - *b).abs())
            .fold(T::zero(), T::max)
    }
}

pub fn compare_profiles<T: Real>(
    model: &HamiltonianModel<T>,
    u0: &GridFunction<T>,
    mather_nodes: &[usize],
    bank: &DistanceBank<T>,
    options: &SchemeOptions,
) -> Result<ProfileReport<T>> {
    let direct = profile_direct(model, u0, options)?;
    let u0_minus = maximal_subsolution(u0, bank)?;
    let formula = formula_from_subsolution(&u0_minus, mather_nodes, bank)?;
    let sup_gap = direct.field.sup_distance(&formula);
    let mather_trace = mather_nodes
        .iter()
        .map(|&y| (y, direct.field[y], u0_minus[y]))
        .collect();
    Ok(ProfileReport { direct, formula, u0_minus, sup_gap, mather_trace })
}

/// Named initial data: `zero`, `sin`, `cos`, `bump`.
pub fn builtin_initial_data<T: Real>(name: &str, grid: TorusGrid) -> Result<GridFunction<T>> {
    let tp = T::two_pi();
    let f: fn(&[T], T) -> T = match name {
        "zero" => |_, _| T::zero(),
        "sin" => |x, tp| (tp * x[0]).sin(),
        "cos" => |x, tp| (tp * x[0]).cos(),
        "bump" => |x, tp| {
            let s: T = x.iter().map(|xa| T::half() - T::half() * (tp * *xa).cos()).sum();
            s * s
        },
        other => {
            return Err(Error::InvalidField(format!(
                "unknown builtin '{other}' (expected zero, sin, cos or bump)"
            )))
        }
    };
    Ok(GridFunction::from_fn(grid, |x| f(x, tp)))
}

/// Random trigonometric data `sum_k a_k cos(2 pi k x) + b_k sin(2 pi k x)`,
/// `k <= 3`, scaled to discrete Lipschitz constant `lipschitz`.
pub fn random_lipschitz_data<T: Real, R: rand::Rng>(grid: TorusGrid, lipschitz: T, rng: &mut R) -> GridFunction<T> {
    let coeffs: Vec<(f64, f64)> = (0..3)
        .map(|_| (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    let phase: f64 = rng.gen_range(0.0..1.0);
    let f = GridFunction::from_fn(grid, |x| {
        let mut s = T::zero();
        for (k, (a, b)) in coeffs.iter().enumerate() {
            let arg: T = x.iter().fold(T::zero(), |acc, xa| acc + *xa) + T::lit(phase);
            let th = T::two_pi() * T::lit((k + 1) as f64) * arg;
            s += T::lit(*a) * th.cos() + T::lit(*b) * th.sin();
        }
        s
    });
    let lip = f.lipschitz_constant();
    if lip > T::zero() {
        f.map(|v| v * lipschitz / lip)
    } else {
        f
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn pendulum() -> HamiltonianModel<f64> {
        HamiltonianModel::cosine(1, 1.0, 1.0)
    }

    fn bank(m: &HamiltonianModel<f64>, g: TorusGrid) -> DistanceBank<f64> {
        DistanceBank::new(m, g, &[], &SchemeOptions::default()).unwrap()
    }

    #[test]
    fn formula_for_constant_data() {
        let m = pendulum();
        let g = TorusGrid::line(100).unwrap();
        let b = bank(&m, g);
        let f = profile_formula(&GridFunction::constant(g, 0.7), &[0], &b).unwrap();
        let d0 = b.field(0).unwrap().values.shifted(0.7);
        assert!(f.sup_distance(&d0) < 1e-12);
        assert!(matches!(profile_formula(&f, &[], &b), Err(Error::EmptyMatherSet)));
    }

    #[test]
    fn formula_two_wells() {
        let m = HamiltonianModel::cosine(2, 1.0, 1.0);
        let g = TorusGrid::line(100).unwrap();
        let b = bank(&m, g);
        // subsolution with values 0 at 0 and 0.3 at 1/2
        let low = GridFunction::from_fn(g, |x: &[f64]| {
            let i = g.nearest_node(x);
            b.distance(i, 0).unwrap().min(b.distance(i, 50).unwrap() + 0.3)
        });
        let f = profile_formula(&low, &[0, 50], &b).unwrap();
        assert!(f.sup_distance(&low) < 1e-12);
        assert_eq!(f[0], 0.0);
        assert!((f[50] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn invariance_from_zero() {
        let m = pendulum();
        let g = TorusGrid::line(100).unwrap();
        let opts = SchemeOptions::default().with_horizon(10.0);
        let r = check_mather_invariance(&m, &GridFunction::zeros(g), &[0], &opts).unwrap();
        assert!(r.max_deviation <= 0.02);
        let not_sub = builtin_initial_data::<f64>("sin", g).unwrap().map(|v| 3.0 * v);
        assert!(matches!(
            check_mather_invariance(&m, &not_sub, &[0], &opts),
            Err(Error::NotSubsolution { .. })
        ));
    }

    #[test]
    fn direct_equals_formula_for_flat_model() {
        let m = HamiltonianModel::<f64>::flat(1);
        let g = TorusGrid::line(64).unwrap();
        let u0 = builtin_initial_data::<f64>("sin", g).unwrap();
        let all: Vec<usize> = (0..64).collect();
        let r = compare_profiles(&m, &u0, &all, &bank(&m, g), &SchemeOptions::default()).unwrap();
        assert!((r.formula.max() - u0.min()).abs() < 1e-15);
        assert!(r.sup_gap < 0.05, "gap {}", r.sup_gap);
    }

    #[test]
    fn formula_is_monotone_and_fixed_by_maximal_subsolution() {
        let m = HamiltonianModel::cosine(2, 1.0, 1.0);
        let g = TorusGrid::line(64).unwrap();
        let b = bank(&m, g);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let u: GridFunction<f64> = random_lipschitz_data(g, 3.0, &mut rng);
            let bump = random_lipschitz_data(g, 1.0, &mut rng);
            let v = u.zip_with(&bump, |a: f64, c: f64| a + c.abs());
            let fu = profile_formula(&u, &[0, 32], &b).unwrap();
            let fv = profile_formula(&v, &[0, 32], &b).unwrap();
            for i in 0..64 {
                assert!(fu[i] <= fv[i]);
            }
            let again = maximal_subsolution(&fu, &b).unwrap();
            assert!(again.sup_distance(&fu) < 1e-8);
        }
    }

    #[test]
    fn direct_profile_is_equivariant_and_ordered() {
        let m = pendulum();
        let g = TorusGrid::line(50).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let u = random_lipschitz_data(g, 2.0, &mut rng);
        let opts = SchemeOptions::default().with_horizon(20.0);
        let theta = crate::hj_solver::auto_theta(&m, 2.5);
        let opts = SchemeOptions { theta: Some(theta), ..opts };
        let a = profile_direct(&m, &u, &opts).unwrap().field;
        let b = profile_direct(&m, &u.shifted(2.0), &opts).unwrap().field;
        assert!(a.shifted(2.0).sup_distance(&b) < 1e-10);
        let v = u.map(|x| x + 0.1 * (x * 3.0).sin().abs());
        let c = profile_direct(&m, &v, &opts).unwrap().field;
        for i in 0..50 {
            assert!(a[i] <= c[i] + 1e-8);
        }
    }

    #[test]
    fn unknown_builtin() {
        let g = TorusGrid::line(16).unwrap();
        assert!(builtin_initial_data::<f64>("nope", g).is_err());
        assert_eq!(builtin_initial_data::<f64>("zero", g).unwrap().sup_norm(), 0.0);
    }
}
