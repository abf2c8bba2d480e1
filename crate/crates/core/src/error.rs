use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input value lies outside the domain of the function.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// Temperature at or above the critical temperature.
    #[error("normal state: T = {t} K is not below Tc = {tc} K")]
    NormalState { t: f64, tc: f64 },

    #[error("circuit is not solvable: {0}")]
    InvalidCircuit(String),

    #[error("frequency {freq_hz} Hz lies outside S-parameter coverage [{min_hz}, {max_hz}] Hz")]
    Extrapolation { freq_hz: f64, min_hz: f64, max_hz: f64 },

    #[error("touchstone parse error at line {line}: {msg}")]
    Touchstone { line: usize, msg: String },

    #[error("singular matrix in {0}")]
    Singular(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no grid entry for mixing vector {0:?}")]
    Lookup(Vec<i32>),

    /// Newton iteration (with continuation) failed; carries the last residual norm.
    #[error("harmonic balance did not converge (relative residual {residual:.3e} after {iterations} iterations)")]
    NoConvergence { residual: f64, iterations: usize },

    #[error("transient Newton failure at t = {time:.6e} s")]
    Integration { time: f64 },

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("search failed: {0}")]
    Search(String),

    #[error("oracle failed: {0}")]
    Oracle(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// True for failures of the numerical solvers, as opposed to bad input.
    pub fn is_solver_failure(&self) -> bool {
        matches!(
            self,
            Error::NoConvergence { .. }
                | Error::Integration { .. }
                | Error::Singular(_)
                | Error::Search(_)
                | Error::Oracle(_)
        )
    }
}
