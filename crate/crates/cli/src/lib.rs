//! Commands behind the `askcap` binary: world generation, experiment runs,
//! metric scoring, result aggregation and the human teacher endpoint.

pub mod report;
pub mod runner;
pub mod score;
pub mod server;

use std::fmt;

/// Environment variable naming the default output root of `run`.
pub const OUT_ENV: &str = "ASKCAP_OUT";

/// A failed command, split by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags, config or input files. Exit code 2.
    Usage(String),
    /// Anything that went wrong while doing the work. Exit code 3.
    Runtime(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) | Failure::Runtime(m) => f.write_str(m),
        }
    }
}

impl From<askcap::error::Error> for Failure {
    fn from(e: askcap::error::Error) -> Self {
        use askcap::error::Error;
        match e {
            Error::Config(_) | Error::Parse { .. } | Error::InvalidArgument(_) => {
                Failure::Usage(e.to_string())
            }
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}
