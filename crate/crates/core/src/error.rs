use thiserror::Error;

/// Errors raised by the design, questionnaire, scoring and modelling code.
#[derive(Debug, Error)]
pub enum Error {
    #[error("schema error: {0}")]
    Schema(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("design infeasible: {0}")]
    DesignInfeasible(String),

    #[error("study plan infeasible: {0}")]
    PlanInfeasible(String),

    #[error("incomplete questionnaire: {0}")]
    IncompleteQuestionnaire(String),

    #[error("invalid response: {0}")]
    InvalidResponse(String),

    #[error("rank deficient system: {0}")]
    Rank(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Stable machine-readable code, used by the service layer and the CLI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Schema(_) => "schema",
            Error::Input(_) => "input",
            Error::DesignInfeasible(_) => "design_infeasible",
            Error::PlanInfeasible(_) => "plan_infeasible",
            Error::IncompleteQuestionnaire(_) => "incomplete_questionnaire",
            Error::InvalidResponse(_) => "invalid_response",
            Error::Rank(_) => "rank",
            Error::DegenerateLabels(_) => "degenerate_labels",
            Error::Io(_) | Error::Json(_) | Error::Csv(_) => "persistence",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
