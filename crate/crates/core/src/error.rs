use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("field does not match grid: {0}")]
    GridMismatch(String),

    #[error("non-finite field value at index {0}")]
    NonFinite(usize),

    #[error("inverse transform is not real (imaginary residue {residue:e})")]
    NonRealResult { residue: f64 },

    #[error("negative order {order} applied to a field with nonzero mean (zero mode {zero_mode:e})")]
    NegativeOrderOnNonMeanZero { order: f64, zero_mode: f64 },

    #[error("order s = {0} is not supported by the Gagliardo quadrature (requires 0 < s < 1)")]
    UnsupportedOrder(f64),

    #[error("invalid order: {0}")]
    InvalidOrder(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("unit constraint violated: squared norm {0} exceeds 1")]
    ConstraintViolated(f64),

    #[error("invalid mask: {0}")]
    InvalidMask(String),

    #[error("bubble tail too fat for the box: boundary density ratio {ratio:e} > {threshold:e}")]
    TailTooFat { ratio: f64, threshold: f64 },

    #[error("bubble under-resolved: core width {width} below {min_width}")]
    UnderResolved { width: f64, min_width: f64 },

    #[error("invalid spec: {0}")]
    InvalidSpec(String),

    #[error("atom localization balls overlap: {0}")]
    OverlappingAtoms(String),

    #[error("energy budget exceeded: {0}")]
    EnergyBudgetExceeded(String),

    #[error("gamma-limit budget exceeded: energy {energy} + atom mass {atom_mass} > 1")]
    BudgetExceeded { energy: f64, atom_mass: f64 },

    #[error("solver did not converge after {iters} iterations")]
    NotConverged { iters: usize },

    #[error("config error for key `{key}`: {reason}")]
    Config { key: String, reason: String },

    #[error("io: {0}")]
    Io(String),
}

impl Error {
    pub fn config(key: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            reason: reason.into(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
