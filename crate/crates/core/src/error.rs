use thiserror::Error;

/// Errors raised by the analysis engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("no data rows")]
    NoDataRows,
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("ragged row {row}: expected {expected} fields, found {found}")]
    RaggedRow { row: usize, expected: usize, found: usize },
    #[error("malformed CSV at row {row}: {message}")]
    Csv { row: usize, message: String },
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("categorical-text driver `{0}`")]
    CategoricalDriver(String),
    #[error("KPI column `{0}` is categorical text")]
    CategoricalKpi(String),
    #[error("KPI column `{0}` is listed among the drivers")]
    KpiAmongDrivers(String),
    #[error("duplicate driver `{0}`")]
    DuplicateDriver(String),
    #[error("no eligible drivers")]
    NoDrivers,
    #[error("not enough rows: need at least {needed}, have {have}")]
    TooFewRows { needed: usize, have: usize },
    #[error("KPI `{0}` has a single class")]
    SingleClass(String),
    #[error("singular design matrix")]
    SingularDesign,
    #[error("row width {found} does not match driver count {expected}")]
    WidthMismatch { expected: usize, found: usize },
    #[error("model was trained on a different frame: {0}")]
    FrameMismatch(String),
    #[error("row index {index} out of range (row count {len})")]
    RowOutOfRange { index: usize, len: usize },
    #[error("percentage perturbation of binary driver `{0}` is undefined")]
    PercentageOnBinary(String),
    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),
    #[error("invalid hyperparameters: {0}")]
    InvalidHyperparameters(String),
    #[error("invalid sweep: {0}")]
    InvalidSweep(String),
    #[error("invalid goal: {0}")]
    InvalidGoal(String),
    #[error("constraint violated for `{driver}`: {value} not in [{lo}, {hi}]")]
    ConstraintViolation {
        driver: String,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("unknown use case `{0}`")]
    UnknownUseCase(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("malformed JSON: {0}")]
    MalformedJson(String),
    #[error("non-finite value in output field `{0}`")]
    NonFinite(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("serialization: {0}")]
    Serialization(String),
}

/// Coarse classification used to map errors onto exit codes and HTTP statuses.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    /// The request or input is malformed.
    Validation,
    /// The input is well formed but cannot be modeled (single-class KPI).
    Conflict,
    /// Internal or numerical failure.
    Runtime,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        match self {
            Error::SingleClass(_) => ErrorClass::Conflict,
            Error::Numerical(_) | Error::NonFinite(_) | Error::Serialization(_) => ErrorClass::Runtime,
            _ => ErrorClass::Validation,
        }
    }

    /// Stable machine-readable code for the wire format.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyInput => "empty_input",
            Error::NoDataRows => "no_data_rows",
            Error::DuplicateColumn(_) => "duplicate_column",
            Error::RaggedRow { .. } => "ragged_row",
            Error::Csv { .. } => "malformed_csv",
            Error::UnknownColumn(_) => "unknown_column",
            Error::CategoricalDriver(_) => "categorical_driver",
            Error::CategoricalKpi(_) => "categorical_kpi",
            Error::KpiAmongDrivers(_) => "kpi_among_drivers",
            Error::DuplicateDriver(_) => "duplicate_driver",
            Error::NoDrivers => "no_drivers",
            Error::TooFewRows { .. } => "too_few_rows",
            Error::SingleClass(_) => "single_class",
            Error::SingularDesign => "singular_design",
            Error::WidthMismatch { .. } => "width_mismatch",
            Error::FrameMismatch(_) => "frame_mismatch",
            Error::RowOutOfRange { .. } => "row_out_of_range",
            Error::PercentageOnBinary(_) => "percentage_on_binary",
            Error::InvalidPerturbation(_) => "invalid_perturbation",
            Error::InvalidHyperparameters(_) => "invalid_hyperparameters",
            Error::InvalidSweep(_) => "invalid_sweep",
            Error::InvalidGoal(_) => "invalid_goal",
            Error::ConstraintViolation { .. } => "constraint_violation",
            Error::UnknownUseCase(_) => "unknown_use_case",
            Error::Invalid(_) => "invalid",
            Error::MalformedJson(_) => "malformed_json",
            Error::NonFinite(_) => "non_finite",
            Error::Numerical(_) => "numerical",
            Error::Serialization(_) => "serialization",
        }
    }

    /// Wraps a deserialization failure of caller-supplied JSON.
    pub fn malformed_json(e: serde_json::Error) -> Self {
        Error::MalformedJson(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
