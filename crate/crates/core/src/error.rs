use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: &'static str },
    #[error("point lies outside the simulation domain")]
    OutsideDomain,
    #[error("the point process is empty")]
    EmptyProcess,
    #[error("seed {0} does not own its probe centre")]
    CentreNotOwned(u32),
    #[error("censoring rate {rate:.3} exceeds the 5% limit")]
    ExcessiveCensoring { rate: f64 },
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: &'static str) -> Error {
    Error::InvalidParameter { name, reason }
}
