use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("no interactions left after {k}-core filtering")]
    EmptyAfterFilter { k: usize },
    #[error("user {user} has no eligible negative item")]
    NoEligibleNegative { user: usize },
    #[error("user has no relevant items")]
    NoRelevantItems,
    #[error("prompt template `{template}` is missing slot {{{slot}}}")]
    MissingSlot { template: &'static str, slot: &'static str },
    #[error("missing attribute embedding for item `{0}`")]
    MissingAttributes(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
}
