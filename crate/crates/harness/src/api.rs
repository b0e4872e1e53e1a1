//! Wire types of the session service.

use std::fmt;

use intent_grasp::agents::{Polarity, Question};
use intent_grasp::dialogue::{EpisodeResult, Policy};
use intent_grasp::grasp::GraspTarget;
use intent_grasp::world::{generate_task, Descriptor, GeneratorConfig, Scene, Split, Task};
use intent_grasp::{Error, RegionBox};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    NotFound,
    InvalidState,
    BadRequest,
    EngineError,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::NotFound => "not_found",
            ErrorCode::InvalidState => "invalid_state",
            ErrorCode::BadRequest => "bad_request",
            ErrorCode::EngineError => "engine_error",
        }
    }

    pub fn status(&self) -> u16 {
        match self {
            ErrorCode::NotFound => 404,
            ErrorCode::InvalidState => 409,
            ErrorCode::BadRequest => 400,
            ErrorCode::EngineError => 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApiError {
    pub code: ErrorCode,
    pub message: String,
}

impl ApiError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        ApiError { code, message: message.into() }
    }

    pub fn not_found(what: &str, id: &str) -> Self {
        ApiError::new(ErrorCode::NotFound, format!("{what} {id:?} not found"))
    }

    pub fn invalid_state(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::InvalidState, message)
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::BadRequest, message)
    }

    pub fn engine(message: impl Into<String>) -> Self {
        ApiError::new(ErrorCode::EngineError, message)
    }
}

impl fmt::Display for ApiError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code.as_str(), self.message)
    }
}

impl std::error::Error for ApiError {}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidState(_) => ErrorCode::InvalidState,
            Error::Parse { .. }
            | Error::Schema { .. }
            | Error::InvalidHyperparameter(_)
            | Error::InvalidScene(_)
            | Error::Config(_) => ErrorCode::BadRequest,
            _ => ErrorCode::EngineError,
        };
        ApiError::new(code, e.to_string())
    }
}

/// Scene drawn from the generator for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub split: Split,
    pub seed: u64,
    /// Force more than one object to satisfy the intent.
    #[serde(default)]
    pub ambiguous: bool,
}

impl GeneratorSpec {
    /// The generated scene and its opening utterance. Ambiguous scenes get their own id space.
    pub fn task(&self) -> intent_grasp::Result<Task> {
        let mut gen = GeneratorConfig::for_split(self.split);
        if self.ambiguous {
            gen = gen.ambiguous();
            gen.id_prefix = format!("{}-ambiguous", gen.id_prefix);
        }
        generate_task(&gen, self.seed)
    }
}

fn default_lambda() -> f64 {
    0.9
}

fn default_rounds() -> usize {
    3
}

fn default_policy() -> Policy {
    Policy::Pragmatic
}

/// Body of `POST /sessions`. Exactly one of `scene_id`, `scene` and `generator` names the scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSessionRequest {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Scene>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    /// Required unless the scene comes from `generator`, which supplies one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub utterance: Option<String>,
    #[serde(default = "default_policy")]
    pub policy: Policy,
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(rename = "T", default = "default_rounds")]
    pub rounds: usize,
    #[serde(default)]
    pub seed: u64,
}

impl CreateSessionRequest {
    pub fn generated(split: Split, seed: u64, policy: Policy) -> Self {
        CreateSessionRequest {
            scene_id: None,
            scene: None,
            generator: Some(GeneratorSpec { split, seed, ambiguous: false }),
            utterance: None,
            policy,
            lambda: default_lambda(),
            rounds: default_rounds(),
            seed,
        }
    }
}

/// A correction given either as a phrase ("the pink candle") or a structured descriptor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Correction {
    Phrase(String),
    Descriptor(Descriptor),
}

/// Body of `POST /sessions/{id}/answer`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AnswerRequest {
    Structured {
        polarity: Polarity,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        correction: Option<Correction>,
    },
    Text {
        text: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionStatus {
    AwaitingAnswer,
    /// Round limit reached (or a silent session); only finalize remains.
    Done,
    Finalized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateView {
    #[serde(rename = "box")]
    pub region: RegionBox,
    /// Round in which the region was first detected.
    pub round: usize,
    /// Grounding probability under the current dialogue, normalized over the candidates.
    pub p_v: f64,
}

/// Every session endpoint answers with the full current view.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionView {
    pub session_id: String,
    pub scene_id: String,
    pub utterance: String,
    pub policy: Policy,
    pub lambda: Option<f64>,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub round: usize,
    pub status: SessionStatus,
    pub done: bool,
    pub question: Option<Question>,
    pub estimate: Option<RegionBox>,
    pub transcript: Vec<(String, String)>,
    pub candidates: Vec<CandidateView>,
    pub grasp: Option<GraspTarget>,
    /// The episode as the in-process runner would report it; present once no question is pending.
    pub episode: Option<EpisodeResult>,
}

/// Body of `GET /scenes/{id}/render`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneRender {
    pub svg: String,
    pub scene: Scene,
}
