use std::sync::Arc;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{select, CandidateSet, Hyperparams, Policy, QuestionSampling};
use crate::agents::{AgentSuite, Answer, DialogueState, Question};
use crate::error::{Error, Result};
use crate::geometry::RegionBox;
use crate::world::Scene;

pub const GROUNDER_STREAM: u64 = 0;
pub const POLICY_STREAM: u64 = 1;
pub const USER_STREAM: u64 = 2;
/// Point-cloud rendering for the grasp step.
pub const CLOUD_STREAM: u64 = 3;

/// One of the independent random streams derived from an episode seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Ready for the next question.
    Asking,
    /// A question is out; waiting for the answer.
    Awaiting,
    /// No further questions (round limit reached, or a silent session).
    Done,
}

/// A single interactive episode. Operations on one session must be
/// serialized by the caller; sessions share nothing mutable.
#[derive(Clone)]
pub struct Session {
    scene: Arc<Scene>,
    agents: Arc<dyn AgentSuite>,
    dialogue: DialogueState,
    candidates: CandidateSet,
    hyper: Hyperparams,
    policy: Policy,
    round: usize,
    estimate: Option<RegionBox>,
    per_round: Vec<RegionBox>,
    pending: Option<Question>,
    questioned: Vec<String>,
    grounder_rng: ChaCha8Rng,
    policy_rng: ChaCha8Rng,
}

impl std::fmt::Debug for Session {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Session")
            .field("scene", &self.scene.id)
            .field("policy", &self.policy)
            .field("round", &self.round)
            .field("estimate", &self.estimate)
            .finish_non_exhaustive()
    }
}

impl Session {
    pub fn begin(
        scene: Arc<Scene>,
        utterance: &str,
        hyper: Hyperparams,
        policy: Policy,
        agents: Arc<dyn AgentSuite>,
        seed: u64,
    ) -> Result<Session> {
        hyper.validate()?;
        agents.intent(utterance)?;
        let mut s = Session {
            dialogue: DialogueState::new(utterance)?,
            candidates: CandidateSet::new(hyper.dedup_iou),
            hyper,
            policy,
            round: 0,
            estimate: None,
            per_round: Vec::new(),
            pending: None,
            questioned: Vec::new(),
            grounder_rng: stream_rng(seed, GROUNDER_STREAM),
            policy_rng: stream_rng(seed, POLICY_STREAM),
            scene,
            agents,
        };
        if policy == Policy::Silent {
            s.accumulate()?;
            let pool = s.candidates.regions();
            let p_v = s.agents.likelihoods(&s.scene, &s.dialogue, &pool)?;
            let est = pool[select(&vec![1.0; pool.len()], &p_v, 0.0)?];
            s.estimate = Some(est);
            s.per_round.push(est);
        }
        Ok(s)
    }

    pub fn scene(&self) -> &Arc<Scene> {
        &self.scene
    }

    pub fn dialogue(&self) -> &DialogueState {
        &self.dialogue
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn hyperparams(&self) -> &Hyperparams {
        &self.hyper
    }

    pub fn policy(&self) -> Policy {
        self.policy
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn estimate(&self) -> Option<RegionBox> {
        self.estimate
    }

    pub fn per_round_estimates(&self) -> &[RegionBox] {
        &self.per_round
    }

    pub fn pending_question(&self) -> Option<&Question> {
        self.pending.as_ref()
    }

    pub fn phase(&self) -> Phase {
        if self.pending.is_some() {
            Phase::Awaiting
        } else if self.policy == Policy::Silent || self.round >= self.hyper.rounds {
            Phase::Done
        } else {
            Phase::Asking
        }
    }

    /// Answer-term weight used by this session's selection rule, if any.
    pub fn lambda(&self) -> Option<f64> {
        self.policy.lambda(self.hyper.lambda)
    }

    /// Grounds the current dialogue and merges the detections into the candidate set.
    fn accumulate(&mut self) -> Result<()> {
        let found = self.agents.ground(&self.scene, &self.dialogue, &mut self.grounder_rng)?;
        for r in found {
            self.candidates.insert(r.region, self.round + 1);
        }
        if self.candidates.is_empty() {
            return Err(Error::NoCandidates);
        }
        Ok(())
    }

    pub fn next_question(&mut self) -> Result<Question> {
        match self.phase() {
            Phase::Awaiting => return Err(Error::InvalidState("a question is already pending".into())),
            Phase::Done if self.policy == Policy::Silent => {
                return Err(Error::InvalidState("the silent policy asks no questions".into()))
            }
            Phase::Done => {
                return Err(Error::InvalidState(format!("all {} rounds are used", self.hyper.rounds)))
            }
            Phase::Asking => {}
        }
        self.accumulate()?;
        let pool = self.candidates.regions();
        let p_v = self.agents.likelihoods(&self.scene, &self.dialogue, &pool)?;
        let owners: Vec<Option<&str>> = pool.iter().map(|r| self.scene.resolve(r).map(|o| o.id.as_str())).collect();
        let mut eligible: Vec<usize> = (0..pool.len())
            .filter(|i| owners[*i].is_some_and(|id| !self.questioned.iter().any(|q| q == id)))
            .collect();
        if eligible.is_empty() {
            eligible = (0..pool.len()).filter(|i| owners[*i].is_some()).collect();
        }
        if eligible.is_empty() {
            return Err(Error::UnresolvableReferent("no accumulated candidate overlaps an object".into()));
        }
        let weights: Vec<f64> = match self.hyper.question_sampling {
            QuestionSampling::Proportional => eligible.iter().map(|i| p_v[*i]).collect(),
            QuestionSampling::Uniform => vec![1.0; eligible.len()],
        };
        let k = match WeightedIndex::new(&weights) {
            Ok(d) => d.sample(&mut self.policy_rng),
            Err(_) => self.policy_rng.random_range(0..eligible.len()),
        };
        let i = eligible[k];
        let q = self.agents.generate_question(&self.scene, &self.dialogue, &pool[i])?;
        let owner = owners[i].expect("eligible regions resolve").to_string();
        if !self.questioned.contains(&owner) {
            self.questioned.push(owner);
        }
        self.pending = Some(q.clone());
        Ok(q)
    }

    /// Records the answer to the pending question and returns the new estimate.
    pub fn receive_answer(&mut self, answer: Answer) -> Result<RegionBox> {
        let q = self.pending.take().ok_or_else(|| Error::InvalidState("no question is pending".into()))?;
        self.dialogue.qa_pairs.push((q, answer));
        self.round += 1;
        let pool = self.candidates.regions();
        let i = match self.lambda() {
            None => self.policy_rng.random_range(0..pool.len()),
            Some(lambda) => {
                let (q, a) = self.dialogue.qa_pairs.last().expect("just pushed");
                let p_v = self.agents.likelihoods(&self.scene, &self.dialogue, &pool)?;
                let p_a: Vec<f64> = pool.iter().map(|r| self.agents.answer_likelihood(&self.scene, r, q, a)).collect();
                select(&p_a, &p_v, lambda)?
            }
        };
        self.estimate = Some(pool[i]);
        self.per_round.push(pool[i]);
        Ok(pool[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{AgentNoiseParams, TabularAgents};
    use crate::world::fixtures::*;
    use crate::world::Descriptor;

    fn agents(p: AgentNoiseParams) -> Arc<dyn AgentSuite> {
        Arc::new(TabularAgents::with_params(p).unwrap())
    }

    fn begin(scene: crate::world::Scene, utterance: &str, policy: Policy, p: AgentNoiseParams) -> Session {
        Session::begin(Arc::new(scene), utterance, Hyperparams::default(), policy, agents(p), 1).unwrap()
    }

    fn unambiguous() -> crate::world::Scene {
        scene(
            vec![
                object("o0", "banana", "yellow", "edible", [10.0, 10.0, 80.0, 90.0]),
                object("o1", "pen", "blue", "writing", [200.0, 10.0, 260.0, 90.0]),
            ],
            "o0",
        )
    }

    #[test]
    fn silent_estimates_at_round_zero() {
        let s = begin(unambiguous(), "I am hungry", Policy::Silent, AgentNoiseParams::noiseless());
        assert_eq!(s.estimate(), Some(s.scene().target_box()));
        assert_eq!((s.round(), s.phase()), (0, Phase::Done));
        let mut s = s;
        assert!(matches!(s.next_question(), Err(Error::InvalidState(_))));
    }

    #[test]
    fn questioning_session_starts_empty() {
        let s = begin(unambiguous(), "I am hungry", Policy::Pragmatic, AgentNoiseParams::default());
        assert_eq!((s.round(), s.estimate(), s.candidates().len()), (0, None, 0));
        assert_eq!(s.phase(), Phase::Asking);
    }

    #[test]
    fn zero_rounds_and_bad_utterances_are_rejected() {
        let a = agents(AgentNoiseParams::default());
        let sc = Arc::new(unambiguous());
        let r = Session::begin(sc.clone(), "I am hungry", Hyperparams::new(0, 0.9), Policy::Pragmatic, a.clone(), 0);
        assert!(matches!(r, Err(Error::InvalidHyperparameter(_))));
        let r = Session::begin(sc, "Sing", Hyperparams::default(), Policy::Pragmatic, a, 0);
        assert!(matches!(r, Err(Error::UngroundableUtterance(_))));
    }

    #[test]
    fn single_candidate_is_asked_about() {
        let mut s = begin(unambiguous(), "I am hungry", Policy::Pragmatic, AgentNoiseParams::noiseless());
        let q = s.next_question().unwrap();
        assert_eq!(q.text, "Should I get the banana?");
        assert_eq!(q.referent_box, s.scene().target_box());
        assert!(matches!(s.next_question(), Err(Error::InvalidState(_))));
    }

    #[test]
    fn questioned_objects_are_not_asked_again() {
        let mut s = begin(two_drinks(), "I am thirsty", Policy::Pragmatic, AgentNoiseParams::noiseless());
        let first = s.next_question().unwrap();
        s.receive_answer(Answer::no()).unwrap();
        let second = s.next_question().unwrap();
        assert_ne!(first.descriptor, second.descriptor);
    }

    #[test]
    fn answer_without_question_is_invalid() {
        let mut s = begin(two_drinks(), "I am thirsty", Policy::Pragmatic, AgentNoiseParams::noiseless());
        assert!(matches!(s.receive_answer(Answer::yes()), Err(Error::InvalidState(_))));
    }

    #[test]
    fn correction_flips_to_the_pink_candle() {
        let mut s = begin(candles(), "It is too dark in here", Policy::Pragmatic, AgentNoiseParams::noiseless());
        let white = s.scene().objects[0].bbox;
        let pink = s.scene().objects[1].bbox;
        let flashlight = s.scene().objects[2].bbox;
        // Force round one onto the white candle: say yes to it.
        loop {
            let q = s.next_question().unwrap();
            if q.descriptor == Descriptor::with("candle", "color", "white") {
                assert_eq!(s.receive_answer(Answer::yes()).unwrap(), white);
                break;
            }
            s.receive_answer(Answer::no()).unwrap();
            assert!(s.round() < 2, "white candle never asked about");
        }
        let pink_d = Descriptor::with("candle", "color", "pink");
        let q = s.next_question().unwrap();
        let reply = if q.descriptor == pink_d { Answer::yes() } else { Answer::corrective(pink_d) };
        let est = s.receive_answer(reply).unwrap();
        assert_eq!(est, pink);
        assert_ne!(est, flashlight);
    }

    #[test]
    fn round_limit_ends_the_session() {
        let mut s = Session::begin(
            Arc::new(two_drinks()),
            "I am thirsty",
            Hyperparams::new(1, 0.9),
            Policy::Pragmatic,
            agents(AgentNoiseParams::noiseless()),
            4,
        )
        .unwrap();
        s.next_question().unwrap();
        s.receive_answer(Answer::no()).unwrap();
        assert_eq!(s.phase(), Phase::Done);
        assert!(matches!(s.next_question(), Err(Error::InvalidState(_))));
    }
}
