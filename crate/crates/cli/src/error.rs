use std::io;
use std::path::PathBuf;

use brwld_core::convex::ConvexError;
use brwld_core::oracle::OracleError;
use brwld_core::ratefn::RateError;
use brwld_core::simulate::SimError;
use brwld_core::ModelError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("cannot read config {}: {source}", path.display())]
    ConfigIo { path: PathBuf, source: io::Error },
    #[error("invalid config {}: {source}", path.display())]
    ConfigParse { path: PathBuf, source: serde_json::Error },
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error(transparent)]
    Convex(#[from] ConvexError),
    #[error(transparent)]
    Rate(#[from] RateError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error("cannot write output: {0}")]
    Output(#[from] io::Error),
    #[error("cannot write output: {0}")]
    Csv(#[from] csv::Error),
    #[error("{0} verification check(s) failed")]
    VerificationFailed(usize),
}

fn convex_code(e: &ConvexError) -> u8 {
    match e {
        ConvexError::NoConvergence => 4,
        _ => 2,
    }
}

impl CliError {
    /// 0 success, 1 verification failure, 2 usage or config error,
    /// 3 resource cap, 4 numeric guard.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::VerificationFailed(_) => 1,
            CliError::Convex(e) => convex_code(e),
            CliError::Rate(RateError::Convex(e)) => convex_code(e),
            CliError::Sim(SimError::PopulationCap { .. }) => 3,
            CliError::Sim(SimError::DegenerateEstimate(_)) => 4,
            CliError::Sim(SimError::Convex(e)) => convex_code(e),
            CliError::Oracle(OracleError::CombinatorialBlowup) => 3,
            CliError::Oracle(OracleError::Underflow { .. }) => 4,
            CliError::Oracle(OracleError::Convex(e)) => convex_code(e),
            _ => 2,
        }
    }
}
