use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("tied scores at school {school}: types {first} and {second} share a score")]
    TiedScores {
        school: usize,
        first: usize,
        second: usize,
    },

    #[error("this solver requires l = 1 (got l = {0})")]
    BadEll(usize),

    #[error("schools do not share one scoring function (school {0} differs from school 1)")]
    NonIdenticalScores(usize),

    #[error("type distribution is not uniform over the support; only the Monte Carlo oracle handles weights")]
    NonUniformTypes,

    #[error("stalled after {sweeps} sweeps with {unassigned} unassigned: {condition} violated along the elimination path")]
    Stalled {
        sweeps: usize,
        unassigned: usize,
        condition: &'static str,
    },

    #[error("{what} needs {required} terms, over the budget of {budget}")]
    BudgetExceeded {
        what: &'static str,
        required: f64,
        budget: f64,
    },

    #[error("brute force refused: n + m = {size} exceeds the cap of {cap}")]
    SizeCap { size: usize, cap: usize },

    #[error("{attempts} consecutive draws collided on a score level set; level sets of scoring functions must be negligible under the type distribution")]
    LevelSetCollision { attempts: usize },

    #[error("unknown example: {0}")]
    UnknownExample(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code: 2 for validation problems, 3 for budget or stall.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::BudgetExceeded { .. }
            | Error::Stalled { .. }
            | Error::SizeCap { .. }
            | Error::LevelSetCollision { .. } => 3,
            _ => 2,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}
