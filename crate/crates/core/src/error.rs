use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("ungroundable utterance: {0:?}")]
    UngroundableUtterance(String),

    #[error("unresolvable referent: region {0} overlaps no object")]
    UnresolvableReferent(String),

    #[error("no candidates: the grounder returned no regions and none were accumulated")]
    NoCandidates,

    #[error("empty candidate pool")]
    EmptyPool,

    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("empty region: no points fall inside the box")]
    EmptyRegion,

    #[error("object not found above plane: {remaining} points remain, {required} required")]
    ObjectNotFound { remaining: usize, required: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("scene generation failed: {0}")]
    Generation(String),

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("dataset schema violation at {field}: {message}")]
    Schema { field: String, message: String },

    #[error("could not parse {kind} {text:?}")]
    Parse { kind: &'static str, text: String },

    #[error("answer script exhausted after {0} answers")]
    ScriptExhausted(usize),

    #[error("invalid benchmark config: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
