use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde_json::{json, Value};
use weakkam::uniqueness::{TrialRecord, UniquenessSummary};
use weakkam::*;

use crate::args::*;
use crate::output::{sha256_hex, Run};

/// Outcome of a subcommand that ran to completion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Done,
    /// Not converged, inapplicable or failed checks.
    Incomplete,
}

impl Status {
    fn from_ok(ok: bool) -> Self {
        if ok {
            Status::Done
        } else {
            Status::Incomplete
        }
    }
}

pub fn run(cmd: Command) -> Result<Status> {
    match cmd {
        Command::SolveErgodic(a) => solve_ergodic(a),
        Command::SolveCauchy(a) => solve_cauchy(a),
        Command::MatherLp(a) => mather_lp(a),
        Command::AdjointMeasure(a) => adjoint_measure(a),
        Command::Distance(a) => distance(a),
        Command::Profile(a) => profile(a),
        Command::VerifyUniqueness(a) => verify_uniqueness(a),
        Command::AuditModel(a) => audit_model(a),
    }
}

fn load_model(path: &Path) -> Result<(HamiltonianModel64, (PathBuf, String))> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let spec: ModelSpec =
        serde_json::from_slice(&bytes).with_context(|| format!("parsing model {}", path.display()))?;
    let model = HamiltonianModel::from_spec(&spec)?;
    Ok((model, (path.to_path_buf(), sha256_hex(&bytes))))
}

fn grid_for(model: &HamiltonianModel64, n: usize) -> Result<TorusGrid> {
    Ok(TorusGrid::new(model.dim(), n)?)
}

fn scheme_options(s: &SchemeArgs) -> SchemeOptions {
    SchemeOptions {
        dt: s.dt,
        theta: s.theta,
        viscous: s.viscous,
        flux: match s.flux {
            FluxArg::Godunov => NumericalFlux::Godunov,
            FluxArg::LaxFriedrichs => NumericalFlux::LaxFriedrichs,
        },
        ..SchemeOptions::default()
    }
}

fn config<T: serde::Serialize>(args: &T) -> Result<Value> {
    Ok(serde_json::to_value(args)?)
}

fn parse_point(s: &str, dim: usize) -> Result<Vec<f64>> {
    let p = s
        .split(',')
        .map(|c| c.trim().parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .with_context(|| format!("bad point '{s}'"))?;
    if p.len() != dim {
        bail!("point '{s}' has {} coordinates, the model has dimension {dim}", p.len());
    }
    Ok(p)
}

fn node_of(grid: &TorusGrid, s: &str) -> Result<usize> {
    Ok(grid.nearest_node(&parse_point(s, grid.dim())?))
}

fn coords(grid: &TorusGrid, i: usize) -> Vec<f64> {
    grid.point::<f64>(i)[..grid.dim()].to_vec()
}

fn initial_data(spec: &str, grid: TorusGrid) -> Result<GridFunction64> {
    match spec.strip_prefix("builtin:") {
        Some(name) => Ok(builtin_initial_data(name, grid)?),
        None => {
            let f = File::open(spec).with_context(|| format!("opening initial data {spec}"))?;
            Ok(weakkam::io::read_field(f, grid)?)
        }
    }
}

fn model_dims(model: &HamiltonianModel64, grid: &TorusGrid) -> Value {
    json!({ "dim": model.dim(), "N": grid.n(), "h": grid.spacing::<f64>() })
}

fn solve_ergodic(a: ErgodicArgs) -> Result<Status> {
    let (model, hash) = load_model(&a.common.model)?;
    let grid = grid_for(&model, a.common.n)?;
    let mut run = Run::new("solve-ergodic", config(&a)?, Some(hash), None, a.common.out.as_deref(), a.common.plot)?;
    let opts = SchemeOptions { horizon: a.t, tol: a.tol, ..scheme_options(&a.scheme) };
    let z = GridFunction::zeros(grid);
    let scheme = Scheme::for_data(&model, &opts, &z)?;
    let sol = run.phase("evolve", || scheme.ergodic_solve(&z))?;
    run.field("w", &sol.w)?;
    let cfg = scheme.config();
    run.finish(json!({
        "grid": model_dims(&model, &grid),
        "c_estimate": sol.c_estimate,
        "residual": sol.residual,
        "converged": sol.converged,
        "rate": sol.rate,
        "time": sol.time,
        "theta": cfg.theta,
        "dt": cfg.dt,
        "c_history": sol.history,
    }))?;
    Ok(Status::from_ok(sol.converged))
}

fn solve_cauchy(a: CauchyArgs) -> Result<Status> {
    let (model, hash) = load_model(&a.common.model)?;
    let grid = grid_for(&model, a.common.n)?;
    let u0 = initial_data(&a.u0, grid)?;
    let mut run = Run::new("solve-cauchy", config(&a)?, Some(hash), None, a.common.out.as_deref(), a.common.plot)?;
    let opts = SchemeOptions { horizon: a.t, ..scheme_options(&a.scheme) };
    let scheme = Scheme::for_data(&model, &opts, &u0)?;
    let r = run.phase("evolve", || scheme.solve_cauchy(&u0))?;
    run.field("u0", &u0)?;
    run.field("u_final", &r.final_state)?;
    run.finish(json!({
        "grid": model_dims(&model, &grid),
        "final_time": a.t,
        "steps": r.steps,
        "dt": r.dt,
        "theta": scheme.config().theta,
        "sup_norm_rate": r.sup_norm_rate,
        "min": r.final_state.min(),
        "max": r.final_state.max(),
    }))?;
    Ok(Status::Done)
}

fn mather_lp(a: MatherArgs) -> Result<Status> {
    let (model, hash) = load_model(&a.common.model)?;
    let grid = grid_for(&model, a.common.n)?;
    let mut run = Run::new("mather-lp", config(&a)?, Some(hash), None, a.common.out.as_deref(), a.common.plot)?;
    let lp = build_lp(&model, grid, model.velocity_grid(a.m)?, a.viscous)?;
    let base = run.phase("solve", || solve_lp(&lp))?;
    let set = run.phase("projected set", || projected_mather_set(&lp, &base, a.threshold, a.union))?;
    run.measure("measure", &base.measure)?;
    run.finish(json!({
        "grid": model_dims(&model, &grid),
        "velocity_nodes": a.m,
        "v_max": lp.vgrid().v_max(),
        "variables": lp.num_variables(),
        "rows": lp.num_rows(),
        "viscous": a.viscous,
        "status": base.status,
        "optimal_value": base.optimal_value,
        "ergodic_constant": -base.optimal_value,
        "feasibility_residual": base.feasibility_residual,
        "max_speed": base.max_speed,
        "projected_set": set.nodes.iter().map(|&i| coords(&grid, i)).collect::<Vec<_>>(),
        "projected_nodes": set.nodes,
        "lp_solves": set.solves + 1,
    }))?;
    Ok(Status::Done)
}

fn adjoint_measure(a: AdjointArgs) -> Result<Status> {
    let (model, hash) = load_model(&a.common.model)?;
    let grid = grid_for(&model, a.common.n)?;
    let x0 = node_of(&grid, &a.x0)?;
    let mut run = Run::new("adjoint-measure", config(&a)?, Some(hash), None, a.common.out.as_deref(), a.common.plot)?;
    let base = scheme_options(&a.scheme);
    let z = GridFunction::zeros(grid);
    let erg = Scheme::for_data(&model, &base, &z)?;
    let w = run.phase("ergodic", || erg.ergodic_solve(&z))?;
    let reg_opts = SchemeOptions { epsilon: a.eps, horizon: 1.0, ..base };
    let reg = Scheme::for_data(&model, &reg_opts, &w.w)?;
    let fwd = run.phase("forward", || reg.solve_regularized(&w.w))?;
    let traj = fwd.evolution.trajectory.as_ref().expect("recorded");
    let adj = run.phase("adjoint", || solve_adjoint(&reg, traj, x0))?;
    let (mu, diag) = run.phase("measure", || build_measure(&reg, traj, &adj, model.velocity_grid(a.m)?))?;
    let residual = holonomy_residual(&model, &mu, TestBasis::Fourier { max_frequency: 8 }, a.scheme.viscous)?;
    let hat = holonomy_residual(&model, &mu, TestBasis::Hat, a.scheme.viscous)?;
    run.field("sigma0", adj.initial())?;
    run.measure("measure", &mu)?;
    run.finish(json!({
        "grid": model_dims(&model, &grid),
        "epsilon": a.eps,
        "x0": coords(&grid, x0),
        "ergodic_constant": w.c_estimate,
        "max_deviation": fwd.max_deviation,
        "adjoint_mass_error": adj.max_mass_error,
        "adjoint_min": adj.min_value,
        "mass_defect": diag.mass_defect,
        "velocity_overflow": diag.velocity_overflow,
        "max_drift": diag.max_drift,
        "action": mu.action(&model),
        "holonomy_residual_fourier": residual,
        "holonomy_residual_hat": hat,
    }))?;
    Ok(Status::from_ok(w.converged))
}

fn distance(a: DistanceArgs) -> Result<Status> {
    let (model, hash) = load_model(&a.common.model)?;
    let grid = grid_for(&model, a.common.n)?;
    let y = node_of(&grid, &a.y)?;
    let mut run = Run::new("distance", config(&a)?, Some(hash), None, a.common.out.as_deref(), a.common.plot)?;
    let field = run.phase("distance", || distance_field(&model, grid, y, &SchemeOptions::default()))?;
    let check = is_subsolution(&model, &field.values, 5.0 * grid.spacing::<f64>());
    run.field("distance", &field.values)?;
    let converged = match field.method {
        DistanceMethod::TimeMarching2d { converged, .. } => converged,
        DistanceMethod::Quadrature1d { .. } => true,
    };
    run.finish(json!({
        "grid": model_dims(&model, &grid),
        "base": coords(&grid, y),
        "method": field.method,
        "max": field.values.max(),
        "argmax": coords(&grid, field.values.argmax()),
        "subsolution_violation": check.max_violation,
    }))?;
    Ok(Status::from_ok(converged))
}

/// Mather nodes from the LP or from a `;`/`,` separated point list.
fn mather_nodes(spec: &str, model: &HamiltonianModel64, grid: TorusGrid, m: usize) -> Result<Vec<usize>> {
    if spec == "auto" {
        let lp = build_lp(model, grid, model.velocity_grid(m)?, false)?;
        let base = solve_lp(&lp)?;
        return Ok(projected_mather_set(&lp, &base, mather_lp::DEFAULT_THRESHOLD, true)?.nodes);
    }
    let pieces: Vec<&str> = if grid.dim() == 1 {
        spec.split([',', ';']).collect()
    } else {
        spec.split(';').collect()
    };
    let mut nodes = pieces
        .iter()
        .filter(|s| !s.trim().is_empty())
        .map(|s| node_of(&grid, s))
        .collect::<Result<Vec<_>>>()?;
    nodes.sort_unstable();
    nodes.dedup();
    if nodes.is_empty() {
        bail!("--mather lists no points");
    }
    Ok(nodes)
}

fn profile(a: ProfileArgs) -> Result<Status> {
    let (model, hash) = load_model(&a.common.model)?;
    let grid = grid_for(&model, a.common.n)?;
    let u0 = initial_data(&a.u0, grid)?;
    let mut run = Run::new("profile", config(&a)?, Some(hash), None, a.common.out.as_deref(), a.common.plot)?;
    let nodes = run.phase("mather set", || mather_nodes(&a.mather, &model, grid, a.m))?;
    let opts = SchemeOptions { horizon: a.t, ..scheme_options(&a.scheme) };
    let bank = run.phase("distance bank", || -> Result<DistanceBank<f64>> {
        if grid.dim() == 1 {
            return Ok(DistanceBank::new(&model, grid, &[], &opts)?);
        }
        let stride = a.stride.max(1);
        let mut bases: Vec<usize> = (0..grid.len())
            .filter(|&i| grid.multi_index(i).iter().all(|m| m % stride == 0))
            .chain(nodes.iter().copied())
            .collect();
        bases.sort_unstable();
        bases.dedup();
        Ok(DistanceBank::new(&model, grid, &bases, &SchemeOptions::default())?)
    })?;
    let r = run.phase("profiles", || compare_profiles(&model, &u0, &nodes, &bank, &opts))?;
    run.field("direct", &r.direct.field)?;
    run.field("formula", &r.formula)?;
    run.field("u0_minus", &r.u0_minus)?;
    let trace: Vec<Value> = r
        .mather_trace
        .iter()
        .map(|(y, d, m)| json!({ "node": coords(&grid, *y), "direct": d, "u0_minus": m }))
        .collect();
    run.finish(json!({
        "grid": model_dims(&model, &grid),
        "mather_nodes": nodes.iter().map(|&i| coords(&grid, i)).collect::<Vec<_>>(),
        "sup_gap": r.sup_gap,
        "trace_gap": r.trace_gap(),
        "mather_trace": trace,
        "converged": r.direct.converged,
        "rate": r.direct.rate,
        "time": r.direct.time,
        "c_estimate": r.direct.c_estimate,
        "direct_residual": r.direct.residual,
    }))?;
    Ok(Status::from_ok(r.direct.converged))
}

fn trial_rows(s: &UniquenessSummary) -> Vec<Vec<String>> {
    s.trials
        .iter()
        .map(|t: &TrialRecord| {
            let r = &t.report;
            vec![
                t.index.to_string(),
                serde_json::to_value(t.kind).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default(),
                serde_json::to_value(r.verdict).map(|v| v.as_str().unwrap_or("").to_string()).unwrap_or_default(),
                t.passed().to_string(),
                format!("{:.16e}", r.max_gap_on_m),
                format!("{:.16e}", r.max_gap_global),
                format!("{:.16e}", r.tolerance_budget.residual_w1),
                format!("{:.16e}", r.tolerance_budget.residual_w2),
                format!("{:.16e}", r.tolerance_budget.grid_error),
                format!("{:.16e}", r.tolerance_budget.total()),
            ]
        })
        .collect()
}

fn verify_uniqueness(a: UniquenessArgs) -> Result<Status> {
    let (model, hash) = load_model(&a.common.model)?;
    let grid = grid_for(&model, a.common.n)?;
    let mut run = Run::new(
        "verify-uniqueness",
        config(&a)?,
        Some(hash),
        Some(a.seed),
        a.common.out.as_deref(),
        a.common.plot,
    )?;
    let lp = build_lp(&model, grid, model.velocity_grid(a.m)?, a.viscous)?;
    let base = run.phase("mather lp", || solve_lp(&lp))?;
    let set = run.phase("projected set", || projected_mather_set(&lp, &base, mather_lp::DEFAULT_THRESHOLD, true))?;
    let measures = [base.measure.clone()];
    let summary = if a.viscous {
        let opts = SchemeOptions::default().with_viscous(true);
        let mut inits = vec![GridFunction::zeros(grid)];
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(a.seed);
        for _ in 0..a.trials.clamp(1, 3) {
            inits.push(weakkam::profile::random_lipschitz_data(grid, 2.0, &mut rng));
        }
        run.phase("viscous pairs", || viscous_pair_test(&model, &opts, &inits, &set.nodes, &measures, a.seed))?
    } else {
        let opts = SchemeOptions::default();
        let bank = run.phase("distance bank", || DistanceBank::new(&model, grid, &set.nodes, &opts))?;
        let scheme = Scheme::for_data(&model, &opts, &GridFunction::zeros(grid))?;
        run.phase("trials", || {
            randomized_theorem_test(&scheme, &bank, &set.nodes, &measures, a.seed, TrialPlan::new(a.trials), &opts)
        })?
    };
    run.csv_rows(
        "trials",
        &[
            "index", "kind", "verdict", "passed", "max_gap_on_m", "max_gap_global", "residual_w1",
            "residual_w2", "grid_error", "budget",
        ],
        &trial_rows(&summary),
    )?;
    run.finish(json!({
        "grid": model_dims(&model, &grid),
        "viscous": a.viscous,
        "seed": a.seed,
        "mather_nodes": set.nodes.iter().map(|&i| coords(&grid, i)).collect::<Vec<_>>(),
        "by_kind": summary.by_kind,
        "all_passed": summary.all_passed,
        "notes": summary.notes,
    }))?;
    Ok(Status::from_ok(summary.all_passed))
}

fn audit_model(a: AuditArgs) -> Result<Status> {
    let (model, hash) = load_model(&a.model)?;
    let audit = model.audit();
    if !audit.passes {
        bail!("model audit failed: {}", serde_json::to_string(&audit)?);
    }
    let run = Run::new("audit-model", config(&a)?, Some(hash), None, None, false)?;
    run.finish(serde_json::to_value(&audit)?)?;
    Ok(Status::Done)
}
