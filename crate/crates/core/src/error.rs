use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid universe: {0}")]
    InvalidUniverse(String),
    #[error("invalid menu mask {0:#b}")]
    InvalidMenu(u32),
    #[error("line {line}: malformed row: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("line {line}: choice `{choice}` is not in menu `{menu}`")]
    ChoiceOutsideMenu { line: usize, menu: String, choice: String },
    #[error("line {line}: unknown treatment `{treatment}`")]
    UnknownTreatment { line: usize, treatment: String },
    #[error("no observations for menus {0:?}")]
    IncompleteCoverage(Vec<String>),
    #[error("choice rule is not a distribution on menu {menu}: {reason}")]
    InvalidRule { menu: String, reason: String },
    #[error("too many preference orders: {0}")]
    CapExceeded(String),
    #[error("single-crossing violated for pair ({0}, {1})")]
    SingleCrossingViolation(String, String),
    #[error("invalid lottery: {0}")]
    InvalidLottery(String),
    #[error("attention index is not proper: {0}")]
    ImproperIndex(String),
    #[error("default is never chosen from menu {0}; calibration divides by zero")]
    DivisionByDefaultZero(String),
    #[error("zero full-consideration mass on menu {0}")]
    ZeroFullConsiderationMass(String),
    #[error("cone solver did not converge within {0} iterations")]
    NonConvergence(usize),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("treatments disagree: {0}")]
    TreatmentMismatch(String),
    #[error("improper generator parameters: {0}")]
    ImproperParameters(String),
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Input problems the CLI reports with exit status 2.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::MalformedRow { .. }
                | Error::ChoiceOutsideMenu { .. }
                | Error::UnknownTreatment { .. }
                | Error::IncompleteCoverage(_)
                | Error::InvalidUniverse(_)
                | Error::InvalidMenu(_)
                | Error::InvalidLottery(_)
                | Error::Config(_)
                | Error::Io(_)
                | Error::Csv(_)
                | Error::Json(_)
        )
    }
}
