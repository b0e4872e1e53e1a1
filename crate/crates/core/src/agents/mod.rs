//! Grounding, question-generation and answer-interpretation agents.
//!
//! Every agent exposes explicit, normalized probabilities so that the
//! selection rule in [`crate::dialogue`] can be evaluated exactly.

mod tabular;
mod text;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RegionBox;
use crate::world::{Descriptor, Scene};

pub use tabular::{answer_likelihood, consistent_with, simulate_answer, TabularAgents, LOCALIZATION_WEIGHT};
pub use text::{parse_answer, parse_descriptor, parse_question};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub text: String,
    pub referent_box: RegionBox,
    pub descriptor: Descriptor,
}

impl Question {
    pub fn new(descriptor: Descriptor, referent_box: RegionBox) -> Self {
        Question { text: format!("Should I get the {descriptor}?"), referent_box, descriptor }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Polarity {
    Yes,
    No,
}

/// A human reply. The text is always rendered from polarity and correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "AnswerParts")]
pub struct Answer {
    pub text: String,
    pub polarity: Polarity,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub correction: Option<Descriptor>,
}

#[derive(Deserialize)]
struct AnswerParts {
    polarity: Polarity,
    #[serde(default)]
    correction: Option<Descriptor>,
}

impl TryFrom<AnswerParts> for Answer {
    type Error = Error;

    fn try_from(p: AnswerParts) -> Result<Self> {
        Answer::from_parts(p.polarity, p.correction)
    }
}

impl Answer {
    pub fn yes() -> Self {
        Answer { text: "Yes".into(), polarity: Polarity::Yes, correction: None }
    }

    pub fn no() -> Self {
        Answer { text: "No".into(), polarity: Polarity::No, correction: None }
    }

    pub fn corrective(d: Descriptor) -> Self {
        Answer { text: format!("No, I want the {d}"), polarity: Polarity::No, correction: Some(d) }
    }

    pub fn from_parts(polarity: Polarity, correction: Option<Descriptor>) -> Result<Self> {
        match (polarity, correction) {
            (Polarity::Yes, None) => Ok(Answer::yes()),
            (Polarity::Yes, Some(_)) => {
                Err(Error::InvalidState("a correction requires a negative answer".into()))
            }
            (Polarity::No, None) => Ok(Answer::no()),
            (Polarity::No, Some(d)) => Ok(Answer::corrective(d)),
        }
    }
}

impl fmt::Display for Answer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueState {
    pub utterance: String,
    pub qa_pairs: Vec<(Question, Answer)>,
}

impl DialogueState {
    pub fn new(utterance: impl Into<String>) -> Result<Self> {
        let utterance = utterance.into();
        if utterance.trim().is_empty() {
            return Err(Error::UngroundableUtterance(utterance));
        }
        Ok(DialogueState { utterance, qa_pairs: Vec::new() })
    }

    pub fn transcript(&self) -> Vec<(String, String)> {
        self.qa_pairs.iter().map(|(q, a)| (q.text.clone(), a.text.clone())).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoredRegion {
    #[serde(rename = "box")]
    pub region: RegionBox,
    pub log_prob: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AgentNoiseParams {
    pub epsilon_answer: f64,
    pub p_corrective: f64,
    pub grounder_jitter_px: f64,
    pub distractor_rate: f64,
    pub p_floor: f64,
}

impl Default for AgentNoiseParams {
    fn default() -> Self {
        AgentNoiseParams {
            epsilon_answer: 0.1,
            p_corrective: 0.5,
            grounder_jitter_px: 2.0,
            distractor_rate: 0.3,
            p_floor: 0.01,
        }
    }
}

impl AgentNoiseParams {
    /// Error-free answers and detections; keeps the default floor and correction rate.
    pub fn noiseless() -> Self {
        AgentNoiseParams { epsilon_answer: 0.0, grounder_jitter_px: 0.0, distractor_rate: 0.0, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidHyperparameter(m.into()));
        if !(0.0..0.5).contains(&self.epsilon_answer) {
            return bad("epsilon_answer must lie in [0, 0.5)");
        }
        if !(0.0..=1.0).contains(&self.p_corrective) {
            return bad("p_corrective must lie in [0, 1]");
        }
        if !(self.grounder_jitter_px.is_finite() && self.grounder_jitter_px >= 0.0) {
            return bad("grounder_jitter_px must be finite and nonnegative");
        }
        if !(self.distractor_rate.is_finite() && self.distractor_rate >= 0.0) {
            return bad("distractor_rate must be finite and nonnegative");
        }
        if !(0.0..0.5).contains(&self.p_floor) {
            return bad("p_floor must lie in [0, 0.5)");
        }
        Ok(())
    }
}

/// P_V: a distribution over image regions given the dialogue so far.
pub trait VisualGrounding: Send + Sync {
    /// Intent tag for an utterance, or an ungroundable-utterance error.
    fn intent(&self, utterance: &str) -> Result<String>;

    fn ground(&self, scene: &Scene, dialogue: &DialogueState, rng: &mut dyn rand::RngCore) -> Result<Vec<ScoredRegion>>;

    /// P_V of every pool member, normalized over the pool.
    fn likelihoods(&self, scene: &Scene, dialogue: &DialogueState, pool: &[RegionBox]) -> Result<Vec<f64>>;

    fn region_likelihood(
        &self,
        scene: &Scene,
        dialogue: &DialogueState,
        region: &RegionBox,
        pool: &[RegionBox],
    ) -> Result<f64> {
        let i = pool
            .iter()
            .position(|r| r == region)
            .ok_or_else(|| Error::InvalidState(format!("region {region} is not in the pool")))?;
        Ok(self.likelihoods(scene, dialogue, pool)?[i])
    }
}

/// P_Q realized as a deterministic template.
pub trait QuestionGeneration: Send + Sync {
    fn generate_question(&self, scene: &Scene, dialogue: &DialogueState, referent: &RegionBox) -> Result<Question>;
}

/// P_A: how likely an answer is if `region` were the intended object.
/// Takes no dialogue state: the answer depends only on region and question.
pub trait AnswerInterpretation: Send + Sync {
    fn answer_likelihood(&self, scene: &Scene, region: &RegionBox, question: &Question, answer: &Answer) -> f64;
}

pub trait AgentSuite: VisualGrounding + QuestionGeneration + AnswerInterpretation {}

impl<T: VisualGrounding + QuestionGeneration + AnswerInterpretation> AgentSuite for T {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn answer_text_follows_parts() {
        let d = Descriptor::with("candle", "color", "pink");
        assert_eq!(Answer::from_parts(Polarity::No, Some(d.clone())).unwrap().text, "No, I want the pink candle");
        assert_eq!(Answer::from_parts(Polarity::Yes, None).unwrap().text, "Yes");
        assert!(Answer::from_parts(Polarity::Yes, Some(d)).is_err());
    }

    #[test]
    fn structured_answer_json_rerenders_text() {
        let a: Answer = serde_json::from_str(
            r#"{"polarity":"no","correction":{"category":"kiwi"},"text":"ignored"}"#,
        )
        .unwrap();
        assert_eq!(a.text, "No, I want the kiwi");
        assert!(serde_json::from_str::<Answer>(r#"{"polarity":"yes","correction":{"category":"kiwi"}}"#).is_err());
    }

    #[test]
    fn question_template() {
        let q = Question::new(Descriptor::category("banana"), RegionBox::new(0.0, 0.0, 5.0, 5.0).unwrap());
        assert_eq!(q.text, "Should I get the banana?");
    }

    #[test]
    fn noise_params_are_range_checked() {
        AgentNoiseParams::default().validate().unwrap();
        assert!(AgentNoiseParams { epsilon_answer: 0.5, ..Default::default() }.validate().is_err());
        assert!(AgentNoiseParams { p_corrective: 1.5, ..Default::default() }.validate().is_err());
        assert!(AgentNoiseParams { distractor_rate: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn empty_utterance_is_rejected() {
        assert!(matches!(DialogueState::new("  "), Err(Error::UngroundableUtterance(_))));
    }
}
