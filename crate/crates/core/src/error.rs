use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("constant week: standard deviation {0:e} below floor")]
    ConstantWeek(f64),
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("incomplete history for {series} before {date}")]
    IncompleteHistory { series: String, date: chrono::NaiveDate },
    #[error("non-positive level: week mean {0}")]
    NonPositiveLevel(f64),
    #[error("no trainable samples")]
    NoTrainableSamples,
    #[error("invalid series: {0}")]
    InvalidSeries(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stale tape: {0}")]
    StaleTape(String),
    #[error("quantile order {0} outside (0, 1)")]
    QuantileOrder(f64),
    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("non-contiguous samples: {0}")]
    NonContiguous(String),
    #[error("invalid input data: {0}")]
    Data(String),
    #[error("evaluation error: {0}")]
    Evaluation(String),
    #[error("unsupported model file version {0}")]
    ModelVersion(u32),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
