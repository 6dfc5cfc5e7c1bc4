use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: column `{column}` is not numeric: `{value}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("pair `{0}`: expected exactly two units")]
    IncompletePair(String),

    #[error("pair `{pair_id}`: duplicate unit `{unit_id}`")]
    DuplicateUnit { pair_id: String, unit_id: String },

    #[error("pair `{0}`: tied doses")]
    TiedDoses(String),

    #[error("pair `{0}`: covariate vectors differ in length")]
    CovariateLength(String),

    #[error("duplicate pair id `{0}`")]
    DuplicatePairId(String),

    #[error("sample has no pairs")]
    EmptySample,

    #[error("invalid dose link: {0}")]
    InvalidLink(String),

    #[error("invalid effect model: {0}")]
    InvalidModel(String),

    #[error("invalid score specification: {0}")]
    InvalidScore(String),

    #[error("tied absolute differences are not allowed in strict mode")]
    TiedRanks,

    #[error("negative or non-finite score {value} at pair {index}")]
    NegativeScore { index: usize, value: f64 },

    #[error("expression error: {0}")]
    Expression(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value out of representable range: {0}")]
    Range(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("index {index} out of range for {len} pairs")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("{pairs} pairs is too many for exact enumeration (limit {limit})")]
    TooLargeForEnumeration { pairs: usize, limit: usize },

    #[error("root bracket failure: {0}")]
    Bracket(String),

    #[error("gamma_bar {gamma_bar} is not below the design sensitivity {design_sensitivity}")]
    AboveDesignSensitivity {
        gamma_bar: f64,
        design_sensitivity: f64,
    },

    #[error("degenerate problem: {0}")]
    Degenerate(String),

    #[error("infeasible: {0}")]
    Infeasible(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no crossing found: {0}")]
    NoCrossing(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code, used by the command-line front end.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io(_) => "io",
            Error::Csv(_) => "csv",
            Error::MissingColumn(_) => "missing_column",
            Error::NonNumeric { .. } => "non_numeric",
            Error::IncompletePair(_) => "incomplete_pair",
            Error::DuplicateUnit { .. } => "duplicate_unit",
            Error::TiedDoses(_) => "tied_doses",
            Error::CovariateLength(_) => "covariate_length",
            Error::DuplicatePairId(_) => "duplicate_pair_id",
            Error::EmptySample => "empty_sample",
            Error::InvalidLink(_) => "invalid_link",
            Error::InvalidModel(_) => "invalid_model",
            Error::InvalidScore(_) => "invalid_score",
            Error::TiedRanks => "tied_ranks",
            Error::NegativeScore { .. } => "negative_score",
            Error::Expression(_) => "expression",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Range(_) => "range",
            Error::LengthMismatch(_) => "length_mismatch",
            Error::IndexOutOfRange { .. } => "index_out_of_range",
            Error::TooLargeForEnumeration { .. } => "too_large_for_enumeration",
            Error::Bracket(_) => "bracket",
            Error::AboveDesignSensitivity { .. } => "above_design_sensitivity",
            Error::Degenerate(_) => "degenerate",
            Error::Infeasible(_) => "infeasible",
            Error::Config(_) => "config",
            Error::NoCrossing(_) => "no_crossing",
            Error::Json(_) => "json",
        }
    }
}
