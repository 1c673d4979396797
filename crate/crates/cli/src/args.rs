use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "weakkam", version, about = "Weak KAM toolkit for Hamilton-Jacobi equations on the torus")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ergodic constant and a min-normalized solution by long-time evolution.
    SolveErgodic(ErgodicArgs),
    /// Cauchy problem on [0, T].
    SolveCauchy(CauchyArgs),
    /// Mather measure by linear programming, with the projected Mather set.
    MatherLp(MatherArgs),
    /// Occupation measure from the regularized adjoint equation.
    AdjointMeasure(AdjointArgs),
    /// Critical potential d(., y).
    Distance(DistanceArgs),
    /// Asymptotic profile by evolution and by the representation formula.
    Profile(ProfileArgs),
    /// Randomized comparison-principle tests.
    VerifyUniqueness(UniquenessArgs),
    /// Growth, convexity and normalization report of a model file.
    AuditModel(AuditArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FluxArg {
    #[default]
    Godunov,
    LaxFriedrichs,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct Common {
    /// Model description (JSON).
    #[arg(long)]
    pub model: PathBuf,
    /// Grid points per axis.
    #[arg(long = "N", default_value_t = 200)]
    pub n: usize,
    /// Output directory [default: ./out/<run-id>].
    #[arg(long)]
    #[serde(skip)]
    pub out: Option<PathBuf>,
    /// Also write gnuplot scripts next to every CSV.
    #[arg(long)]
    pub plot: bool,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct SchemeArgs {
    /// Time step [default: largest stable step].
    #[arg(long)]
    pub dt: Option<f64>,
    /// Dissipation constant and speed cap [default: from the model and data].
    #[arg(long)]
    pub theta: Option<f64>,
    /// Numerical Hamiltonian.
    #[arg(long, value_enum, default_value_t = FluxArg::Godunov)]
    pub flux: FluxArg,
    /// Use the diffusion coefficient of the model.
    #[arg(long)]
    pub viscous: bool,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ErgodicArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Time horizon.
    #[arg(long = "T", default_value_t = 50.0)]
    pub t: f64,
    /// Stationarity tolerance per unit time.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct CauchyArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Final time.
    #[arg(long = "T", default_value_t = 1.0)]
    pub t: f64,
    /// Initial data: a CSV file or builtin:{zero,sin,cos,bump}.
    #[arg(long, default_value = "builtin:zero")]
    pub u0: String,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct MatherArgs {
    #[command(flatten)]
    pub common: Common,
    /// Velocity nodes per axis (odd).
    #[arg(long, default_value_t = 41)]
    pub m: usize,
    /// Union of supports over perturbed costs and the optimal face.
    #[arg(long)]
    pub union: bool,
    /// Use the diffusion coefficient of the model.
    #[arg(long)]
    pub viscous: bool,
    /// Support threshold in units of the cell volume.
    #[arg(long, default_value_t = weakkam::mather_lp::DEFAULT_THRESHOLD)]
    pub threshold: f64,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct AdjointArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Regularization parameter.
    #[arg(long, default_value_t = 0.05)]
    pub eps: f64,
    /// Terminal point, one coordinate per axis separated by commas.
    #[arg(long, default_value = "0.5")]
    pub x0: String,
    /// Velocity nodes per axis (odd).
    #[arg(long, default_value_t = 41)]
    pub m: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct DistanceArgs {
    #[command(flatten)]
    pub common: Common,
    /// Base point, one coordinate per axis separated by commas.
    #[arg(long, default_value = "0")]
    pub y: String,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct ProfileArgs {
    #[command(flatten)]
    pub common: Common,
    #[command(flatten)]
    pub scheme: SchemeArgs,
    /// Initial data: a CSV file or builtin:{zero,sin,cos,bump}.
    #[arg(long, default_value = "builtin:zero")]
    pub u0: String,
    /// Time horizon.
    #[arg(long = "T", default_value_t = 50.0)]
    pub t: f64,
    /// `auto` for the LP, or Mather points: `x1,x2,...` in 1D, `x,y;x,y;...` in 2D.
    #[arg(long, default_value = "auto")]
    pub mather: String,
    /// Velocity nodes per axis for `--mather auto`.
    #[arg(long, default_value_t = 41)]
    pub m: usize,
    /// 2D only: base lattice stride of the distance bank.
    #[arg(long, default_value_t = 8)]
    pub stride: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct UniquenessArgs {
    #[command(flatten)]
    pub common: Common,
    /// Ordered boundary-value trials.
    #[arg(long, default_value_t = 50)]
    pub trials: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Compare viscous solutions instead.
    #[arg(long)]
    pub viscous: bool,
    /// Velocity nodes per axis.
    #[arg(long, default_value_t = 41)]
    pub m: usize,
}

#[derive(Clone, Debug, Args, Serialize)]
pub struct AuditArgs {
    /// Model description (JSON).
    #[arg(long)]
    pub model: PathBuf,
}
