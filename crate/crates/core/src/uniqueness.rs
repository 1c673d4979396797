//! Comparison and uniqueness checks for ergodic solutions, driven by values
//! prescribed on the projected Mather set.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::adjoint::{comparison_functional, DiscreteMeasure};
use crate::error::{Error, Result};
use crate::grid::GridFunction;
use crate::hamiltonian::HamiltonianModel;
use crate::hj_solver::{Scheme, SchemeOptions};
use crate::profile::{profile_direct, random_lipschitz_data};
use crate::scalar::Real;
use crate::weak_kam_metric::DistanceBank;

/// Admissibility slack for boundary values.
pub const ADMISSIBILITY_TOL: f64 = 1e-8;
/// Residual gate, in units of `h * lipschitz_bound`.
pub const GATE_FACTOR: f64 = 10.0;
/// Slack for the measure hypothesis.
pub const MEASURE_TOL: f64 = 1e-6;

/// Values `a_k` prescribed at Mather nodes `y_k`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BoundaryAssignment<T> {
    nodes: Vec<usize>,
    values: Vec<T>,
}

impl<T: Real> BoundaryAssignment<T> {
    /// Checks `a_k - a_j <= d(y_k, y_j)` for every pair.
    pub fn new(nodes: Vec<usize>, values: Vec<T>, bank: &DistanceBank<T>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyMatherSet);
        }
        if nodes.len() != values.len() {
            return Err(Error::InvalidField(format!(
                "{} nodes but {} values",
                nodes.len(),
                values.len()
            )));
        }
        for (k, &yk) in nodes.iter().enumerate() {
            for (j, &yj) in nodes.iter().enumerate() {
                let d = node_distance(bank, yk, yj)?;
                let gap = values[k] - values[j];
                if gap > d + T::lit(ADMISSIBILITY_TOL) {
                    return Err(Error::Inadmissible { i: yk, j: yj, gap: gap.as_f64(), dist: d.as_f64() });
                }
            }
        }
        Ok(BoundaryAssignment { nodes, values })
    }

    /// Largest admissible assignment below `values`:
    /// `a_k = min_j (values_j + d(y_k, y_j))`.
    pub fn closure(nodes: Vec<usize>, values: &[T], bank: &DistanceBank<T>) -> Result<Self> {
        let mut out = Vec::with_capacity(nodes.len());
        for &yk in &nodes {
            let mut best = T::infinity();
            for (j, &yj) in nodes.iter().enumerate() {
                best = best.min(values[j] + node_distance(bank, yk, yj)?);
            }
            out.push(best);
        }
        Self::new(nodes, out, bank)
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }
}

fn node_distance<T: Real>(bank: &DistanceBank<T>, x: usize, y: usize) -> Result<T> {
    bank.distance(x, y)
        .ok_or_else(|| Error::InvalidField(format!("no distance field for node {y}")))
}

/// `w(x) = min_k (d(x, y_k) + a_k)`.
pub fn solution_from_boundary<T: Real>(
    assignment: &BoundaryAssignment<T>,
    bank: &DistanceBank<T>,
) -> Result<GridFunction<T>> {
    let grid = *bank.grid();
    let mut values = vec![T::infinity(); grid.len()];
    for (&y, &a) in assignment.nodes.iter().zip(&assignment.values) {
        for (x, v) in values.iter_mut().enumerate() {
            *v = v.min(node_distance(bank, x, y)? + a);
        }
    }
    for (&y, &a) in assignment.nodes.iter().zip(&assignment.values) {
        if (values[y] - a).abs() > T::lit(1e-6) {
            return Err(Error::InvalidField(format!(
                "generated field misses its value at node {y}: {} vs {}",
                values[y], a
            )));
        }
    }
    Ok(GridFunction::from_raw(grid, values))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
    /// An input failed the residual gate.
    Inapplicable,
}

/// Itemized tolerance for a comparison.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ToleranceBudget {
    pub residual_w1: f64,
    pub residual_w2: f64,
    /// `h * lipschitz_bound`.
    pub grid_error: f64,
    /// Largest residual accepted as a solution.
    pub gate: f64,
}

impl ToleranceBudget {
    pub fn total(&self) -> f64 {
        self.residual_w1 + self.residual_w2 + self.grid_error
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ComparisonReport {
    /// `max_{y in M} (w1 - w2)(y)`.
    pub max_gap_on_m: f64,
    /// `max_x (w1 - w2)(x)`.
    pub max_gap_global: f64,
    pub tolerance_budget: ToleranceBudget,
    pub verdict: Verdict,
    /// `sum (w1 - w2) mu` per supplied measure.
    pub measure_functionals: Vec<f64>,
    /// Every measure functional is `<= MEASURE_TOL`.
    pub measure_hypothesis: bool,
}

/// Residual-gated check of `max (w1 - w2) <= max(max_M (w1 - w2), 0) + budget`.
/// Residuals are taken against the ergodic constant `c` with the operator of
/// `scheme`, so viscous schemes test the viscous equation.
pub fn check_comparison<T: Real>(
    scheme: &Scheme<'_, T>,
    c: T,
    w1: &GridFunction<T>,
    w2: &GridFunction<T>,
    mather_nodes: &[usize],
    measures: &[DiscreteMeasure<T>],
) -> Result<ComparisonReport> {
    if mather_nodes.is_empty() {
        return Err(Error::EmptyMatherSet);
    }
    let grid = scheme.grid();
    let h = grid.spacing::<T>().as_f64();
    let lambda = scheme.model().lipschitz_bound()?.as_f64();
    let budget = ToleranceBudget {
        residual_w1: scheme.residual(w1, c).as_f64(),
        residual_w2: scheme.residual(w2, c).as_f64(),
        grid_error: h * lambda,
        gate: GATE_FACTOR * h * lambda,
    };
    let diff = w1.zip_with(w2, |a, b| a - b);
    let max_gap_on_m = mather_nodes
        .iter()
        .map(|&y| diff[y].as_f64())
        .fold(f64::NEG_INFINITY, f64::max);
    let max_gap_global = diff.max().as_f64();
    let measure_functionals = measures
        .iter()
        .map(|mu| comparison_functional(w1, w2, mu).map(|v| v.as_f64()))
        .collect::<Result<Vec<_>>>()?;
    let measure_hypothesis = measure_functionals.iter().all(|v| *v <= MEASURE_TOL);
    let verdict = if budget.residual_w1 > budget.gate || budget.residual_w2 > budget.gate {
        Verdict::Inapplicable
    } else if max_gap_global <= max_gap_on_m.max(0.0) + budget.total() {
        Verdict::Pass
    } else {
        Verdict::Fail
    };
    Ok(ComparisonReport {
        max_gap_on_m,
        max_gap_global,
        tolerance_budget: budget,
        verdict,
        measure_functionals,
        measure_hypothesis,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialKind {
    /// Boundary values ordered on the Mather set.
    Ordered,
    /// Equal boundary values, second field from long-time evolution.
    Equal,
    /// Profiles of ordered initial data.
    ProfileOrder,
    /// Viscous solutions from different initial data.
    Viscous,
    /// A non-solution that must be flagged inapplicable.
    NegativeControl,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrialRecord {
    pub index: usize,
    pub kind: TrialKind,
    pub report: ComparisonReport,
    /// Node-wise order of the two fields, for profile trials.
    pub ordered: Option<bool>,
}

impl TrialRecord {
    pub fn passed(&self) -> bool {
        match self.kind {
            TrialKind::NegativeControl => self.report.verdict == Verdict::Inapplicable,
            _ => self.report.verdict == Verdict::Pass && self.ordered.unwrap_or(true),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KindSummary {
    pub kind: TrialKind,
    pub passed: usize,
    pub total: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UniquenessSummary {
    pub seed: u64,
    pub mather_nodes: Vec<usize>,
    pub by_kind: Vec<KindSummary>,
    pub trials: Vec<TrialRecord>,
    pub all_passed: bool,
    pub notes: Vec<String>,
}

impl UniquenessSummary {
    fn new(seed: u64, mather_nodes: &[usize], trials: Vec<TrialRecord>, notes: Vec<String>) -> Self {
        let mut by_kind: Vec<KindSummary> = Vec::new();
        for t in &trials {
            match by_kind.iter_mut().find(|k| k.kind == t.kind) {
                Some(k) => {
                    k.total += 1;
                    k.passed += usize::from(t.passed());
                }
                None => by_kind.push(KindSummary { kind: t.kind, passed: usize::from(t.passed()), total: 1 }),
            }
        }
        let all_passed = trials.iter().all(TrialRecord::passed);
        UniquenessSummary { seed, mather_nodes: mather_nodes.to_vec(), by_kind, trials, all_passed, notes }
    }

    pub fn count(&self, kind: TrialKind) -> (usize, usize) {
        self.by_kind
            .iter()
            .find(|k| k.kind == kind)
            .map_or((0, 0), |k| (k.passed, k.total))
    }
}

/// Trial counts for [`randomized_theorem_test`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrialPlan {
    pub ordered: usize,
    pub equal: usize,
    pub profile: usize,
}

impl TrialPlan {
    pub fn new(ordered: usize) -> Self {
        TrialPlan { ordered, equal: ordered.div_ceil(5), profile: 10.min(ordered) }
    }
}

fn trial_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn random_assignment<T: Real>(
    rng: &mut ChaCha8Rng,
    nodes: &[usize],
    bank: &DistanceBank<T>,
) -> Result<BoundaryAssignment<T>> {
    let raw: Vec<T> = nodes.iter().map(|_| T::lit(rng.gen_range(-1.0..1.0))).collect();
    BoundaryAssignment::closure(nodes.to_vec(), &raw, bank)
}

/// Randomized property test of the comparison principle for the first-order
/// ergodic problem. Each trial is seeded by `(seed, trial index)`.
pub fn randomized_theorem_test<T: Real>(
    scheme: &Scheme<'_, T>,
    bank: &DistanceBank<T>,
    mather_nodes: &[usize],
    measures: &[DiscreteMeasure<T>],
    seed: u64,
    plan: TrialPlan,
    profile_options: &SchemeOptions,
) -> Result<UniquenessSummary> {
    if mather_nodes.is_empty() {
        return Err(Error::EmptyMatherSet);
    }
    let model = scheme.model();
    let grid = *scheme.grid();
    let mut trials = Vec::new();
    let mut stream = 0u64;

    for _ in 0..plan.ordered {
        let mut rng = trial_rng(seed, stream);
        let a = random_assignment(&mut rng, mather_nodes, bank)?;
        let raised: Vec<T> = a
            .values()
            .iter()
            .map(|v| *v + T::lit(rng.gen_range(0.0..0.5)))
            .collect();
        let b = BoundaryAssignment::closure(mather_nodes.to_vec(), &raised, bank)?;
        let w1 = solution_from_boundary(&a, bank)?;
        let w2 = solution_from_boundary(&b, bank)?;
        let report = check_comparison(scheme, T::zero(), &w1, &w2, mather_nodes, measures)?;
        trials.push(TrialRecord { index: stream as usize, kind: TrialKind::Ordered, report, ordered: None });
        stream += 1;
    }

    for _ in 0..plan.equal {
        // u0 = w1 + bump with the bump vanishing on M; its profile must equal w1
        let mut rng = trial_rng(seed, stream);
        let a = random_assignment(&mut rng, mather_nodes, bank)?;
        let w1 = solution_from_boundary(&a, bank)?;
        let bump: GridFunction<T> = random_lipschitz_data(grid, T::one(), &mut rng);
        let raw = w1.zip_with(&bump, |w, b| w + b.abs());
        let lifted = mather_nodes.iter().fold(raw, |acc, &y| {
            let mut v = acc.into_values();
            v[y] = w1[y];
            GridFunction::from_raw(grid, v)
        });
        let w2 = profile_direct(model, &lifted, profile_options)?.field;
        for (l, r) in [(&w1, &w2), (&w2, &w1)] {
            let report = check_comparison(scheme, T::zero(), l, r, mather_nodes, measures)?;
            trials.push(TrialRecord { index: stream as usize, kind: TrialKind::Equal, report, ordered: None });
        }
        stream += 1;
    }

    for _ in 0..plan.profile {
        let mut rng = trial_rng(seed, stream);
        let u: GridFunction<T> = random_lipschitz_data(grid, T::lit(2.0), &mut rng);
        let bump: GridFunction<T> = random_lipschitz_data(grid, T::one(), &mut rng);
        let v = u.zip_with(&bump, |a, b| a + b.abs());
        let pu = profile_direct(model, &u, profile_options)?.field;
        let pv = profile_direct(model, &v, profile_options)?.field;
        let ordered = (0..grid.len()).all(|i| pu[i] <= pv[i] + T::lit(1e-8));
        let report = check_comparison(scheme, T::zero(), &pu, &pv, mather_nodes, measures)?;
        trials.push(TrialRecord {
            index: stream as usize,
            kind: TrialKind::ProfileOrder,
            report,
            ordered: Some(ordered),
        });
        stream += 1;
    }

    trials.push(negative_control(scheme, bank, mather_nodes, measures, seed, stream)?);
    Ok(UniquenessSummary::new(seed, mather_nodes, trials, Vec::new()))
}

/// `w1` from random boundary data and `w2 = w1 - 0.1 + bump`, with the bump
/// supported away from the Mather set.
fn negative_control<T: Real>(
    scheme: &Scheme<'_, T>,
    bank: &DistanceBank<T>,
    mather_nodes: &[usize],
    measures: &[DiscreteMeasure<T>],
    seed: u64,
    stream: u64,
) -> Result<TrialRecord> {
    let grid = *scheme.grid();
    let mut rng = trial_rng(seed, stream);
    let a = random_assignment(&mut rng, mather_nodes, bank)?;
    let w1 = solution_from_boundary(&a, bank)?;
    let far = (0..grid.len())
        .max_by(|&i, &j| {
            let di = nearest(grid, i, mather_nodes);
            let dj = nearest(grid, j, mather_nodes);
            di.total_cmp(&dj)
        })
        .expect("nonempty grid");
    let centre = grid.point::<T>(far);
    let width = 0.05;
    let w2 = GridFunction::from_fn(grid, |x| {
        let r = grid.torus_distance(x, &centre[..grid.dim()]).as_f64() / width;
        let b = if r < 1.0 { 0.3 * (1.0 - r * r).powi(2) } else { 0.0 };
        T::lit(b)
    });
    let w2 = w1.zip_with(&w2, |w, b| w - T::lit(0.1) + b);
    let report = check_comparison(scheme, T::zero(), &w1, &w2, mather_nodes, measures)?;
    Ok(TrialRecord { index: stream as usize, kind: TrialKind::NegativeControl, report, ordered: None })
}

fn nearest(grid: crate::grid::TorusGrid, i: usize, nodes: &[usize]) -> f64 {
    let p = grid.point::<f64>(i);
    nodes
        .iter()
        .map(|&y| grid.torus_distance(&p[..grid.dim()], &grid.point::<f64>(y)[..grid.dim()]))
        .fold(f64::INFINITY, f64::min)
}

/// Long-time viscous evolutions from `initial` data compared pairwise on the
/// viscous Mather nodes, against the viscous ergodic constant.
pub fn viscous_pair_test<T: Real>(
    model: &HamiltonianModel<T>,
    options: &SchemeOptions,
    initial: &[GridFunction<T>],
    mather_nodes: &[usize],
    measures: &[DiscreteMeasure<T>],
    seed: u64,
) -> Result<UniquenessSummary> {
    if !options.viscous {
        return Err(Error::InvalidModel("viscous pair test on a first-order scheme".into()));
    }
    let steepest = initial
        .iter()
        .max_by(|a, b| a.lipschitz_constant().as_f64().total_cmp(&b.lipschitz_constant().as_f64()))
        .ok_or_else(|| Error::InvalidField("no initial data".into()))?;
    let scheme = Scheme::for_data(model, options, steepest)?;
    let scheme = &scheme;
    let sols = initial
        .iter()
        .map(|u0| scheme.large_time(u0))
        .collect::<Result<Vec<_>>>()?;
    let c = sols.iter().map(|s| s.c_estimate).sum::<T>() / T::from_usize_lossy(sols.len().max(1));
    let mut trials = Vec::new();
    for (i, si) in sols.iter().enumerate() {
        for (j, sj) in sols.iter().enumerate() {
            if i == j {
                continue;
            }
            // shift so that w1 <= w2 on M holds with equality at one node
            let gap = mather_nodes
                .iter()
                .map(|&y| si.w[y] - sj.w[y])
                .fold(T::neg_infinity(), T::max);
            let w2 = sj.w.shifted(gap);
            let report = check_comparison(scheme, c, &si.w, &w2, mather_nodes, measures)?;
            trials.push(TrialRecord { index: trials.len(), kind: TrialKind::Viscous, report, ordered: None });
        }
    }
    let notes = vec![
        "the second-order comparison theorem is stated for solutions of the first-order ergodic \
         problem; it is checked here for the viscous ergodic problem"
            .to_string(),
    ];
    Ok(UniquenessSummary::new(seed, mather_nodes, trials, notes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TorusGrid;
    use std::f64::consts::PI;

    fn double_well() -> HamiltonianModel<f64> {
        HamiltonianModel::cosine(2, 1.0, 1.0)
    }

    fn setup(n: usize) -> (HamiltonianModel<f64>, TorusGrid) {
        (double_well(), TorusGrid::line(n).unwrap())
    }

    #[test]
    fn boundary_examples() {
        let (m, g) = setup(200);
        let bank = DistanceBank::new(&m, g, &[], &SchemeOptions::default()).unwrap();
        let a = BoundaryAssignment::new(vec![0, 100], vec![0.0, 0.3], &bank).unwrap();
        let w = solution_from_boundary(&a, &bank).unwrap();
        assert!(w[0].abs() < 1e-6 && (w[100] - 0.3).abs() < 1e-6);

        let sym = BoundaryAssignment::new(vec![0, 100], vec![0.0, 0.0], &bank).unwrap();
        let w = solution_from_boundary(&sym, &bank).unwrap();
        for k in 0..=50 {
            assert!((w[50 + k] - w[(250 - k) % 200]).abs() < 1e-8);
        }

        match BoundaryAssignment::new(vec![0, 100], vec![0.0, 1.0], &bank) {
            Err(Error::Inadmissible { gap, dist, .. }) => {
                assert!((dist - 2.0 / PI).abs() < 1e-4);
                assert_eq!(gap, 1.0);
            }
            other => panic!("expected rejection, got {other:?}"),
        }
    }

    #[test]
    fn closure_is_admissible_and_below() {
        let (m, g) = setup(100);
        let bank = DistanceBank::new(&m, g, &[], &SchemeOptions::default()).unwrap();
        let a = BoundaryAssignment::closure(vec![0, 50], &[0.0, 2.0], &bank).unwrap();
        assert_eq!(a.values()[0], 0.0);
        assert!((a.values()[1] - bank.distance(50, 0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn comparison_examples() {
        let (m, g) = setup(200);
        let bank = DistanceBank::new(&m, g, &[], &SchemeOptions::default()).unwrap();
        let s = Scheme::for_data(&m, &SchemeOptions::default(), &GridFunction::zeros(g)).unwrap();
        let w1 = solution_from_boundary(&BoundaryAssignment::new(vec![0, 100], vec![0.0, 0.3], &bank).unwrap(), &bank).unwrap();
        let w2 = solution_from_boundary(&BoundaryAssignment::new(vec![0, 100], vec![0.0, 0.5], &bank).unwrap(), &bank).unwrap();
        let same = check_comparison(&s, 0.0, &w1, &w1, &[0, 100], &[]).unwrap();
        assert_eq!(same.verdict, Verdict::Pass);
        assert_eq!(same.max_gap_global, 0.0);
        let r = check_comparison(&s, 0.0, &w1, &w2, &[0, 100], &[]).unwrap();
        assert_eq!(r.verdict, Verdict::Pass);
        assert!(r.max_gap_global <= r.tolerance_budget.total());
        let rev = check_comparison(&s, 0.0, &w2, &w1, &[0, 100], &[]).unwrap();
        assert_eq!(rev.verdict, Verdict::Pass);
        assert!((rev.max_gap_on_m - 0.2).abs() < 1e-6);

        let neg = negative_control(&s, &bank, &[0, 100], &[], 1, 0).unwrap();
        assert_eq!(neg.report.verdict, Verdict::Inapplicable);
        assert!(neg.passed());
    }

    #[test]
    fn small_randomized_run() {
        let (m, g) = setup(100);
        let bank = DistanceBank::new(&m, g, &[], &SchemeOptions::default()).unwrap();
        let s = Scheme::for_data(&m, &SchemeOptions::default(), &GridFunction::zeros(g)).unwrap();
        let plan = TrialPlan { ordered: 6, equal: 2, profile: 2 };
        let r = randomized_theorem_test(&s, &bank, &[0, 50], &[], 7, plan, &SchemeOptions::default()).unwrap();
        assert_eq!(r.count(TrialKind::Ordered), (6, 6));
        assert_eq!(r.count(TrialKind::Equal), (4, 4));
        assert_eq!(r.count(TrialKind::ProfileOrder), (2, 2));
        assert_eq!(r.count(TrialKind::NegativeControl), (1, 1));
        assert!(r.all_passed);
        let again = randomized_theorem_test(&s, &bank, &[0, 50], &[], 7, plan, &SchemeOptions::default()).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn singleton_mather_set_gives_shifts() {
        let m = HamiltonianModel::<f64>::cosine(1, 1.0, 1.0);
        let g = TorusGrid::line(64).unwrap();
        let bank = DistanceBank::new(&m, g, &[], &SchemeOptions::default()).unwrap();
        let w1 = solution_from_boundary(&BoundaryAssignment::new(vec![0], vec![0.2], &bank).unwrap(), &bank).unwrap();
        let w2 = solution_from_boundary(&BoundaryAssignment::new(vec![0], vec![-0.4], &bank).unwrap(), &bank).unwrap();
        assert!(w1.shifted(-0.6).sup_distance(&w2) < 1e-12);
    }

    #[test]
    fn viscous_pairs_agree() {
        let a = crate::hamiltonian::DiffusionCoefficient::new(
            crate::hamiltonian::TrigPolynomial::new(
                1,
                vec![
                    crate::hamiltonian::FourierTerm { k: [0, 0], cos: 0.5, sin: 0.0 },
                    crate::hamiltonian::FourierTerm { k: [2, 0], cos: -0.5, sin: 0.0 },
                ],
            )
            .unwrap(),
        )
        .unwrap();
        let m = HamiltonianModel::<f64>::cosine(1, 1.0, 1.0).with_diffusion(a).unwrap();
        let g = TorusGrid::line(64).unwrap();
        let opts = SchemeOptions::default().with_viscous(true);
        let inits = vec![GridFunction::zeros(g), crate::profile::builtin_initial_data("cos", g).unwrap()];
        let r = viscous_pair_test(&m, &opts, &inits, &[0], &[], 3).unwrap();
        assert_eq!(r.count(TrialKind::Viscous), (2, 2));
        assert!(!r.notes.is_empty());
        let first_order = SchemeOptions::default();
        assert!(viscous_pair_test(&m, &first_order, &inits, &[0], &[], 3).is_err());
    }
}
