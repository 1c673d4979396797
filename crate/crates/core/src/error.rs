use thiserror::Error;

/// Errors raised by the weak-KAM toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("no real root of H(x, p) = 0 at x = {x}: H(x, 0) = {h0} > 0 (model not normalized?)")]
    NoRealRoot { x: f64, h0: f64 },

    #[error("Legendre maximizer on the boundary of the momentum grid (radius {radius} too small)")]
    LegendreBoundary { radius: f64 },

    #[error("CFL condition violated: {0}")]
    Cfl(String),

    #[error("evolution blew up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("adjoint produced negative mass {min} (below -1e-8)")]
    NegativeMass { min: f64 },

    #[error("velocity overflow: {fraction} of the mass has |v| > v_max = {v_max}")]
    VelocityOverflow { fraction: f64, v_max: f64 },

    #[error("linear program is infeasible")]
    Infeasible,

    #[error("linear program is unbounded (objective not bounded below on the truncated grid)")]
    Unbounded,

    #[error("inadmissible boundary assignment: a[{i}] - a[{j}] = {gap} exceeds d(y_{i}, y_{j}) = {dist}")]
    Inadmissible { i: usize, j: usize, gap: f64, dist: f64 },

    #[error("empty Mather node set")]
    EmptyMatherSet,

    #[error("initial data is not a subsolution (max violation {violation})")]
    NotSubsolution { violation: f64 },

    #[error("cone cap {cap} is below max d = {max_d}")]
    ConeCap { cap: f64, max_d: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("io: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
