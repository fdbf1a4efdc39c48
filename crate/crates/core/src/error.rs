use thiserror::Error;

/// Errors produced by curve construction, scenario parsing, and market evaluation.
#[derive(Debug, Clone, Error)]
pub enum MarketError {
    #[error("invalid utility curve: {0}")]
    InvalidCurve(String),

    /// The curve would be identically zero.
    #[error("degenerate utility curve (identically zero)")]
    DegenerateCurve,

    #[error("invalid soft budget {budget} for value {value}")]
    InvalidBudget { value: f64, budget: f64 },

    #[error("utility curves are defined on non-negative payoffs, got {0}")]
    NegativeArgument(f64),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("{}{message}", .line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    InvalidScenario {
        line: Option<usize>,
        message: String,
    },

    #[error("transformed curve is not weakly more risk-averse at value {value}")]
    NotMoreAverse { value: f64 },

    #[error("assumption violated: {0}")]
    AssumptionViolated(String),

    #[error("no reservation price in the grid satisfies the standing assumptions")]
    NoValidPrice,
}

impl MarketError {
    pub fn scenario(message: impl Into<String>) -> Self {
        MarketError::InvalidScenario {
            line: None,
            message: message.into(),
        }
    }

    pub fn scenario_at(line: usize, message: impl Into<String>) -> Self {
        MarketError::InvalidScenario {
            line: Some(line),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, MarketError>;
