use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{stage}: {message}")]
    Stage { stage: &'static str, message: String },
    #[error("unknown study `{name}`; valid studies: {}", valid.join(", "))]
    UnknownStudy { name: String, valid: Vec<&'static str> },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Tags a stage error with the stage that raised it.
pub(crate) fn stage<E: std::fmt::Display>(stage: &'static str) -> impl FnOnce(E) -> HarnessError {
    move |e| HarnessError::Stage {
        stage,
        message: e.to_string(),
    }
}
