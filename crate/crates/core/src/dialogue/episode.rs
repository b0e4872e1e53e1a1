use std::sync::Arc;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::session::{stream_rng, Session, USER_STREAM};
use super::{Hyperparams, Policy};
use crate::agents::{simulate_answer, AgentNoiseParams, AgentSuite, Answer, Question};
use crate::error::{Error, Result};
use crate::geometry::{iou, RegionBox};
use crate::world::Scene;

/// Supplies the human side of the dialogue.
pub trait AnswerOracle {
    fn answer(&mut self, scene: &Scene, question: &Question) -> Result<Answer>;
}

/// Noisy user who wants the scene's target.
#[derive(Debug, Clone)]
pub struct SimulatedUser {
    params: AgentNoiseParams,
    rng: ChaCha8Rng,
}

impl SimulatedUser {
    /// Draws from the user stream of `seed`.
    pub fn new(params: AgentNoiseParams, seed: u64) -> Self {
        SimulatedUser { params, rng: stream_rng(seed, USER_STREAM) }
    }
}

impl AnswerOracle for SimulatedUser {
    fn answer(&mut self, scene: &Scene, question: &Question) -> Result<Answer> {
        Ok(simulate_answer(scene, &scene.target_box(), question, &self.params, &mut self.rng))
    }
}

/// Replays fixed answers in order.
#[derive(Debug, Clone)]
pub struct ScriptedAnswers {
    answers: Vec<Answer>,
    next: usize,
}

impl ScriptedAnswers {
    pub fn new(answers: Vec<Answer>) -> Self {
        ScriptedAnswers { answers, next: 0 }
    }
}

impl AnswerOracle for ScriptedAnswers {
    fn answer(&mut self, _scene: &Scene, _question: &Question) -> Result<Answer> {
        let a = self.answers.get(self.next).cloned().ok_or(Error::ScriptExhausted(self.next))?;
        self.next += 1;
        Ok(a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scene_id: String,
    pub policy: Policy,
    pub lambda: f64,
    #[serde(rename = "T")]
    pub rounds: usize,
    pub rounds_used: usize,
    pub per_round_estimates: Vec<RegionBox>,
    pub final_iou: f64,
    pub transcript: Vec<(String, String)>,
    /// Accumulated candidate regions at the end of the episode.
    pub candidates: Vec<RegionBox>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl EpisodeResult {
    /// Snapshot of a session as a finished episode, scored against the scene's target.
    pub fn from_session(session: &Session) -> Self {
        let hyper = session.hyperparams();
        let scene = session.scene();
        EpisodeResult {
            scene_id: scene.id.clone(),
            policy: session.policy(),
            lambda: session.lambda().unwrap_or(hyper.lambda),
            rounds: hyper.rounds,
            rounds_used: session.round(),
            per_round_estimates: session.per_round_estimates().to_vec(),
            final_iou: session.estimate().map_or(0.0, |e| iou(&e, &scene.target_box())),
            transcript: session.dialogue().transcript(),
            candidates: session.candidates().regions(),
            error: None,
        }
    }

    pub fn final_estimate(&self) -> Option<RegionBox> {
        if self.error.is_some() {
            return None;
        }
        self.per_round_estimates.last().copied()
    }
}

/// Runs one episode to completion.
///
/// With `early_stop = Some(τ)` the dialogue ends after the first round whose
/// estimate has IoU above τ with the target. An agent error ends the episode
/// as a failure: IoU 0 and, for questioning policies, all T rounds counted.
#[allow(clippy::too_many_arguments)]
pub fn run_episode(
    scene: &Arc<Scene>,
    utterance: &str,
    policy: Policy,
    hyper: &Hyperparams,
    agents: &Arc<dyn AgentSuite>,
    oracle: &mut dyn AnswerOracle,
    early_stop: Option<f64>,
    seed: u64,
) -> EpisodeResult {
    let target = scene.target_box();
    let mut failed = EpisodeResult {
        scene_id: scene.id.clone(),
        policy,
        lambda: policy.lambda(hyper.lambda).unwrap_or(hyper.lambda),
        rounds: hyper.rounds,
        rounds_used: 0,
        per_round_estimates: Vec::new(),
        final_iou: 0.0,
        transcript: Vec::new(),
        candidates: Vec::new(),
        error: None,
    };
    let mut session = match Session::begin(scene.clone(), utterance, *hyper, policy, agents.clone(), seed) {
        Ok(s) => s,
        Err(e) => {
            failed.error = Some(e.to_string());
            if policy != Policy::Silent {
                failed.rounds_used = hyper.rounds;
            }
            return failed;
        }
    };
    let mut step = || -> Result<()> {
        if policy == Policy::Silent {
            return Ok(());
        }
        while session.round() < hyper.rounds {
            let q = session.next_question()?;
            let a = oracle.answer(scene, &q)?;
            let est = session.receive_answer(a)?;
            if early_stop.is_some_and(|t| iou(&est, &target) > t) {
                break;
            }
        }
        Ok(())
    };
    let status = step();
    let mut out = EpisodeResult::from_session(&session);
    if let Err(e) = status {
        out.error = Some(e.to_string());
        out.final_iou = 0.0;
        if policy != Policy::Silent {
            out.rounds_used = hyper.rounds;
        }
    }
    out
}
