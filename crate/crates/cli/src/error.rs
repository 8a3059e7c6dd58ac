use thiserror::Error;

use crate::config::Diagnostic;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] famseq::Error),

    #[error("config: {0}")]
    Config(String),

    #[error("{}", render_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),

    #[error("thread pool: {0}")]
    Pool(String),
}

fn render_diagnostics(d: &[Diagnostic]) -> String {
    d.iter().map(|d| d.to_string()).collect::<Vec<_>>().join("; ")
}

impl CliError {
    /// Machine-parsable class printed on failure.
    pub fn class(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.class(),
            CliError::Config(_) => "config",
            CliError::Invalid(d) => d.first().map_or("invalid_config", |d| d.code),
            CliError::Pool(_) => "thread_pool",
        }
    }

    /// `error[<class>]: <message>` on one line.
    pub fn one_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {msg}", self.class())
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
