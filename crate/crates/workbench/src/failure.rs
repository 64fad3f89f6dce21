use std::fmt;
use std::process::ExitCode;

/// Exit status classes of the command-line tool.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Success = 0,
    Usage = 1,
    Data = 2,
    Numerical = 3,
}

impl From<Status> for ExitCode {
    fn from(s: Status) -> Self {
        ExitCode::from(s as u8)
    }
}

/// A command failure together with its exit status.
#[derive(Debug)]
pub struct Failure {
    pub status: Status,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Self {
        Failure { status: Status::Usage, error: anyhow::anyhow!("{msg}") }
    }

    pub fn data(msg: impl fmt::Display) -> Self {
        Failure { status: Status::Data, error: anyhow::anyhow!("{msg}") }
    }

    pub fn numerical(msg: impl fmt::Display) -> Self {
        Failure { status: Status::Numerical, error: anyhow::anyhow!("{msg}") }
    }

    /// Prefixes the message, keeping the status.
    pub fn context(self, ctx: impl fmt::Display + Send + Sync + 'static) -> Self {
        Failure { status: self.status, error: self.error.context(ctx) }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

impl From<strateval::Error> for Failure {
    fn from(e: strateval::Error) -> Self {
        let status = match &e {
            strateval::Error::Config(_) => Status::Usage,
            e if e.is_numerical() => Status::Numerical,
            _ => Status::Data,
        };
        Failure { status, error: e.into() }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure { status: Status::Data, error: e.into() }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure { status: Status::Data, error: e.into() }
    }
}

impl From<toml::de::Error> for Failure {
    fn from(e: toml::de::Error) -> Self {
        Failure { status: Status::Usage, error: e.into() }
    }
}

pub type Outcome<T = ()> = Result<T, Failure>;

/// Attaches context to any result convertible into a [`Failure`].
pub trait WithContext<T> {
    fn ctx(self, what: impl fmt::Display + Send + Sync + 'static) -> Outcome<T>;
}

impl<T, E: Into<Failure>> WithContext<T> for Result<T, E> {
    fn ctx(self, what: impl fmt::Display + Send + Sync + 'static) -> Outcome<T> {
        self.map_err(|e| e.into().context(what))
    }
}
