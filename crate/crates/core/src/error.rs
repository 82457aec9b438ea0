use thiserror::Error;

use crate::network::Violation;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },

    #[error("{context} references undeclared bus {bus}")]
    UndeclaredBus { bus: u32, context: String },

    #[error("branch {branch} ({from_bus}-{to_bus}) has zero impedance")]
    ZeroImpedance {
        branch: usize,
        from_bus: u32,
        to_bus: u32,
    },

    #[error("network has no slack bus")]
    NoSlack,

    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("invalid network: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("HVDC link {link}: P-V converter end cannot sit on slack bus {bus}")]
    PvEndOnSlack { link: usize, bus: u32 },

    #[error("warm start does not match the network ({0})")]
    WarmStartMismatch(String),

    #[error("base power flow is not converged")]
    BaseNotConverged,

    #[error("bus {0} is not in the network")]
    UnknownBus(u32),

    #[error("study bus {0} is the slack bus")]
    StudyBusIsSlack(u32),

    #[error("Q-V curve has no converged point")]
    EmptyCurve,

    #[error("no branch matches {0}")]
    UnknownBranch(String),

    #[error("branch {0} is out of service")]
    BranchOutOfService(usize),

    #[error(
        "branch {branch} carries no base-case real power; the power factor is undefined, \
         use the explicit setpoint policy"
    )]
    ZeroBaseFlow { branch: usize },

    #[error("invalid cluster count k = {k} for {rows} feature rows")]
    InvalidClusterCount { k: usize, rows: usize },

    #[error("feature matrix is empty")]
    EmptyFeatures,

    #[error("invalid option: {0}")]
    InvalidOption(String),
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}
