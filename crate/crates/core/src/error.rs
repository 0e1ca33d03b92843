use std::fmt;

/// Errors raised by every stage of the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A physical parameter or configuration value violated a precondition.
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("degenerate intermediate telescope (L1+L2 combination is afocal)")]
    DegenerateTelescope,

    #[error("no real Gaussian solution at this zoom position (b = {b:.6}, need |b| >= 2)")]
    NoRealSolution { b: f64 },

    #[error("zoom infeasible: |b| < 2 for m2 in ({lo:.9}, {hi:.9})")]
    InfeasibleZoom { lo: f64, hi: f64 },

    #[error("lens collision: gap between {between} is {gap_mm:.6} mm")]
    LensCollision { between: &'static str, gap_mm: f64 },

    #[error("expansion {target} outside achievable range [{min:.9}, {max:.9}]")]
    ExpansionOutOfRange { target: f64, min: f64, max: f64 },

    #[error(
        "fluence grid too small: need |x| up to {need_x_mm:.3} mm and |y| up to {need_y_mm:.3} mm"
    )]
    GridTooSmall { need_x_mm: f64, need_y_mm: f64 },

    #[error("absorber {index} at ({x_mm:.3}, {z_mm:.3}) mm lies outside the fluence grid")]
    AbsorberOutsideGrid { index: usize, x_mm: f64, z_mm: f64 },

    #[error("phantom packing infeasible: {0}")]
    InfeasiblePacking(String),

    #[error("degenerate background (mean over background mask is {0})")]
    DegenerateBackground(f64),

    #[error("zero reference signal")]
    ZeroReference,

    #[error("{msg} at byte offset {offset}")]
    Format { offset: u64, msg: String },

    /// A sweep entry failed; wraps the underlying error.
    #[error("scheme d = {d_mm} mm, theta = {theta_deg} deg: {source}")]
    Scheme {
        d_mm: f64,
        theta_deg: f64,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Coarse failure category, used to pick a process exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Validation,
    Numerical,
    Io,
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl fmt::Display) -> Self {
        Error::Invalid {
            what,
            reason: reason.to_string(),
        }
    }

    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Invalid { .. }
            | Error::ExpansionOutOfRange { .. }
            | Error::GridTooSmall { .. }
            | Error::AbsorberOutsideGrid { .. } => ErrorKind::Validation,
            Error::DegenerateTelescope
            | Error::NoRealSolution { .. }
            | Error::InfeasibleZoom { .. }
            | Error::LensCollision { .. }
            | Error::InfeasiblePacking(_)
            | Error::DegenerateBackground(_)
            | Error::ZeroReference => ErrorKind::Numerical,
            Error::Format { .. } | Error::Io(_) => ErrorKind::Io,
            Error::Scheme { source, .. } => source.kind(),
        }
    }

    /// 0 success, 1 validation error, 2 numerical infeasibility, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        match self.kind() {
            ErrorKind::Validation => 1,
            ErrorKind::Numerical => 2,
            ErrorKind::Io => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
