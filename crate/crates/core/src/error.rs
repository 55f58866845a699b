use crate::pilots::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid `{field}`: {reason}")]
    InvalidParameter { field: String, reason: String },

    #[error("pilot assignment is not a partition of the users: {}", join_violations(.0))]
    InvalidAssignment(Vec<Violation>),

    #[error("tau = {tau} exceeds the number of users N = {n_users}")]
    TauExceedsUsers { tau: usize, n_users: usize },

    #[error("estimated channel of user {user} has zero norm")]
    DegenerateChannel { user: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("exhaustive search needs {count} balanced partitions, limit is {limit}")]
    InstanceTooLarge { count: u128, limit: u128 },
}

impl Error {
    pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

fn join_violations(v: &[Violation]) -> String {
    v.iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}
