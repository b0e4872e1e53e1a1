//! The interactive inference loop: candidate accumulation, question-target
//! sampling, answer incorporation and the selection policies.

mod episode;
mod session;

use serde::{Deserialize, Serialize};

use crate::agents::{AgentSuite, DialogueState};
use crate::error::{Error, Result};
use crate::geometry::{iou, RegionBox};
use crate::world::Scene;

pub use episode::{run_episode, AnswerOracle, EpisodeResult, ScriptedAnswers, SimulatedUser};
pub use session::{stream_rng, Phase, Session, CLOUD_STREAM, GROUNDER_STREAM, POLICY_STREAM, USER_STREAM};

/// Log-space slack within which two weighted scores count as tied.
pub const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Policy {
    /// Weighted combination of answer interpretation and grounding.
    #[serde(rename = "prograsp")]
    Pragmatic,
    /// Grounding alone (weight 0 on the answer term).
    #[serde(rename = "literal")]
    Literal,
    /// Answer interpretation alone (weight 1).
    #[serde(rename = "aint_only")]
    AintOnly,
    /// No questions: best grounding of the utterance.
    #[serde(rename = "silent")]
    Silent,
    /// Uniform choice among accumulated candidates.
    #[serde(rename = "random")]
    Random,
}

impl Policy {
    pub const ALL: [Policy; 5] = [Policy::Pragmatic, Policy::Literal, Policy::AintOnly, Policy::Silent, Policy::Random];

    pub fn name(&self) -> &'static str {
        match self {
            Policy::Pragmatic => "prograsp",
            Policy::Literal => "literal",
            Policy::AintOnly => "aint_only",
            Policy::Silent => "silent",
            Policy::Random => "random",
        }
    }

    pub fn parse(s: &str) -> Option<Policy> {
        Policy::ALL.into_iter().find(|p| p.name() == s)
    }

    /// The weight this policy puts on the answer term, if it uses one.
    pub fn lambda(&self, configured: f64) -> Option<f64> {
        match self {
            Policy::Pragmatic => Some(configured),
            Policy::Literal => Some(0.0),
            Policy::AintOnly => Some(1.0),
            Policy::Silent | Policy::Random => None,
        }
    }
}

impl std::fmt::Display for Policy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuestionSampling {
    /// In proportion to grounding probability.
    Proportional,
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Hyperparams {
    #[serde(rename = "T")]
    pub rounds: usize,
    pub lambda: f64,
    pub dedup_iou: f64,
    pub question_sampling: QuestionSampling,
}

impl Default for Hyperparams {
    fn default() -> Self {
        Hyperparams { rounds: 3, lambda: 0.9, dedup_iou: 0.9, question_sampling: QuestionSampling::Proportional }
    }
}

impl Hyperparams {
    pub fn new(rounds: usize, lambda: f64) -> Self {
        Hyperparams { rounds, lambda, ..Default::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return Err(Error::InvalidHyperparameter("T must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidHyperparameter(format!("lambda {} outside [0, 1]", self.lambda)));
        }
        if !(self.dedup_iou > 0.0 && self.dedup_iou <= 1.0) {
            return Err(Error::InvalidHyperparameter(format!("dedup_iou {} outside (0, 1]", self.dedup_iou)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    #[serde(rename = "box")]
    pub region: RegionBox,
    pub round: usize,
}

/// Accumulated regions in insertion order; a region overlapping a stored one
/// at `dedup_iou` or more is dropped in favour of the earlier box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    entries: Vec<Candidate>,
    dedup_iou: f64,
}

impl CandidateSet {
    pub fn new(dedup_iou: f64) -> Self {
        CandidateSet { entries: Vec::new(), dedup_iou }
    }

    pub fn insert(&mut self, region: RegionBox, round: usize) -> bool {
        if self.entries.iter().any(|c| iou(&c.region, &region) >= self.dedup_iou) {
            return false;
        }
        self.entries.push(Candidate { region, round });
        true
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Candidate] {
        &self.entries
    }

    pub fn regions(&self) -> Vec<RegionBox> {
        self.entries.iter().map(|c| c.region).collect()
    }
}

fn weighted_log(p_a: f64, p_v: f64, lambda: f64) -> f64 {
    let a = if lambda > 0.0 { lambda * p_a.ln() } else { 0.0 };
    let v = if lambda < 1.0 { (1.0 - lambda) * p_v.ln() } else { 0.0 };
    a + v
}

/// Index maximizing `λ·log p_a + (1−λ)·log p_v`.
///
/// Scores within [`TIE_EPS`] of the best are tied; ties go to the higher
/// `p_v`, then to the earlier index. At λ = 0 or 1 the unused factor is
/// ignored entirely, so a zero there cannot poison the score.
pub fn select(p_a: &[f64], p_v: &[f64], lambda: f64) -> Result<usize> {
    if p_a.is_empty() {
        return Err(Error::EmptyPool);
    }
    if p_a.len() != p_v.len() {
        return Err(Error::InvalidState(format!("{} answer scores for {} regions", p_a.len(), p_v.len())));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidHyperparameter(format!("lambda {lambda} outside [0, 1]")));
    }
    let scores: Vec<f64> = p_a.iter().zip(p_v).map(|(a, v)| weighted_log(*a, *v, lambda)).collect();
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut pick: Option<usize> = None;
    for (i, s) in scores.iter().enumerate() {
        let tied = if best == f64::NEG_INFINITY { true } else { *s >= best - TIE_EPS };
        if tied && pick.is_none_or(|j| p_v[i] > p_v[j]) {
            pick = Some(i);
        }
    }
    Ok(pick.expect("nonempty"))
}

/// Selects among `candidates` given the dialogue's most recent exchange.
/// Without any exchange the answer factor is uniform.
pub fn pragmatic_select(
    candidates: &[RegionBox],
    scene: &Scene,
    dialogue: &DialogueState,
    agents: &dyn AgentSuite,
    lambda: f64,
) -> Result<RegionBox> {
    if candidates.is_empty() {
        return Err(Error::EmptyPool);
    }
    let p_v = agents.likelihoods(scene, dialogue, candidates)?;
    let p_a: Vec<f64> = match dialogue.qa_pairs.last() {
        Some((q, a)) => candidates.iter().map(|r| agents.answer_likelihood(scene, r, q, a)).collect(),
        None => vec![1.0; candidates.len()],
    };
    Ok(candidates[select(&p_a, &p_v, lambda)?])
}
