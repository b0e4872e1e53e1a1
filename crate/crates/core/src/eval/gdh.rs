use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::agents::{
    consistent_with, parse_answer, parse_question, AgentNoiseParams, AgentSuite, DialogueState,
    TabularAgents, VisualGrounding,
};
use crate::dialogue::{select, stream_rng, AnswerOracle, Hyperparams, Policy, Session, SimulatedUser, GROUNDER_STREAM};
use crate::error::{Error, Result};
use crate::geometry::{iou, RegionBox};
use crate::world::{generate_task, DatasetRecord, GeneratorConfig, Scene, Split};

use super::scene_seed;

/// Attempts at a target-consistent dialogue before a scene is skipped.
const DIALOGUE_ATTEMPTS: usize = 50;

fn intent_boxes(scene: &Scene, intent: &str, qa: &[(crate::agents::Question, crate::agents::Answer)]) -> Vec<RegionBox> {
    scene.objects_satisfying(intent).filter(|o| consistent_with(o, qa)).map(|o| o.bbox).collect()
}

/// Builds scripted dialogue records over generated scenes.
///
/// A noiseless questioner asks until one intent-satisfying object remains
/// consistent or `max_rounds` questions have been asked. Answers come from a
/// simulated user with `user` noise; dialogues whose answers rule out the
/// target are redrawn. Region labels are the true boxes still consistent
/// after each prefix of the dialogue.
pub fn generate_dialogue_records(
    gen: &GeneratorConfig,
    n: usize,
    seed: u64,
    user: AgentNoiseParams,
    max_rounds: usize,
) -> Result<Vec<DatasetRecord>> {
    if max_rounds == 0 {
        return Err(Error::InvalidHyperparameter("max_rounds must be at least 1".into()));
    }
    user.validate()?;
    let agents: Arc<dyn AgentSuite> =
        Arc::new(TabularAgents::new(gen.lexicon.clone(), AgentNoiseParams::noiseless())?);
    let mut records = Vec::with_capacity(n);
    let mut index = 0;
    while records.len() < n {
        if index >= n.saturating_mul(10).max(100) {
            return Err(Error::Generation(format!("only {} of {n} dialogue records could be built", records.len())));
        }
        let s_seed = scene_seed(seed, Split::Seen, index);
        index += 1;
        let task = generate_task(gen, s_seed)?;
        let scene = Arc::new(task.scene);
        for attempt in 0..DIALOGUE_ATTEMPTS {
            let d_seed = scene_seed(s_seed, Split::Unseen, attempt);
            if let Some(r) = scripted_dialogue(&scene, &task.utterance, &task.intent, &agents, user, max_rounds, d_seed)? {
                records.push(r);
                break;
            }
        }
    }
    Ok(records)
}

fn scripted_dialogue(
    scene: &Arc<Scene>,
    utterance: &str,
    intent: &str,
    agents: &Arc<dyn AgentSuite>,
    user: AgentNoiseParams,
    max_rounds: usize,
    seed: u64,
) -> Result<Option<DatasetRecord>> {
    let hyper = Hyperparams::new(max_rounds, 0.9);
    let Ok(mut session) = Session::begin(scene.clone(), utterance, hyper, Policy::Pragmatic, agents.clone(), seed) else {
        return Ok(None);
    };
    let mut oracle = SimulatedUser::new(user, seed);
    let mut labels = vec![intent_boxes(scene, intent, &[])];
    loop {
        let Ok(q) = session.next_question() else { return Ok(None) };
        let a = oracle.answer(scene, &q)?;
        let mut qa = session.dialogue().qa_pairs.clone();
        qa.push((q, a.clone()));
        if !consistent_with(scene.target(), &qa) {
            return Ok(None);
        }
        labels.push(intent_boxes(scene, intent, &qa));
        if session.receive_answer(a).is_err() {
            return Ok(None);
        }
        if labels.last().map_or(0, Vec::len) <= 1 || session.round() >= max_rounds {
            break;
        }
    }
    Ok(Some(DatasetRecord {
        scene: (**scene).clone(),
        utterance: utterance.to_string(),
        qa_pairs: session.dialogue().transcript(),
        region_labels: labels,
        target_box: scene.target_box(),
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GdhReport {
    pub thresholds: Vec<f64>,
    pub acc: Vec<f64>,
    pub n: usize,
    /// Per-record argmax region; absent when grounding failed.
    pub estimates: Vec<Option<RegionBox>>,
}

fn ground_best(grounder: &dyn VisualGrounding, scene: &Scene, dialogue: &DialogueState, seed: u64) -> Option<RegionBox> {
    let pool = grounder.ground(scene, dialogue, &mut stream_rng(seed, GROUNDER_STREAM)).ok()?;
    let p_v: Vec<f64> = pool.iter().map(|r| r.log_prob.exp()).collect();
    let i = select(&vec![1.0; pool.len()], &p_v, 0.0).ok()?;
    Some(pool[i].region)
}

fn report(records: &[DatasetRecord], estimates: Vec<Option<RegionBox>>, thresholds: &[f64]) -> GdhReport {
    let acc = thresholds
        .iter()
        .map(|t| {
            let hits = records.iter().zip(&estimates).filter(|(r, e)| e.is_some_and(|e| iou(&e, &r.target_box) > *t)).count();
            hits as f64 / records.len() as f64
        })
        .collect();
    GdhReport { thresholds: thresholds.to_vec(), acc, n: records.len(), estimates }
}

fn check(records: &[DatasetRecord], thresholds: &[f64]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::InvalidState("no records to evaluate".into()));
    }
    if thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
        return Err(Error::Config("iou thresholds must lie in (0, 1]".into()));
    }
    Ok(())
}

/// Grounds each record's full scripted dialogue in one shot and scores the argmax.
///
/// Record `i` is grounded with the grounder stream of `seed + i`.
pub fn run_gdh(records: &[DatasetRecord], grounder: &dyn VisualGrounding, thresholds: &[f64], seed: u64) -> Result<GdhReport> {
    check(records, thresholds)?;
    let mut estimates = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        if r.qa_pairs.is_empty() {
            return Err(Error::Schema { field: format!("[{i}].qa_pairs"), message: "record has no dialogue".into() });
        }
        let mut dialogue = DialogueState::new(r.utterance.clone())?;
        for (q, a) in &r.qa_pairs {
            dialogue.qa_pairs.push((parse_question(q, &r.scene)?, parse_answer(a, &r.scene)?));
        }
        estimates.push(ground_best(grounder, &r.scene, &dialogue, seed.wrapping_add(i as u64)));
    }
    Ok(report(records, estimates, thresholds))
}

/// The silent baseline on the same records: the utterance alone, same grounder draws as [`run_gdh`].
pub fn run_utterance_only(records: &[DatasetRecord], grounder: &dyn VisualGrounding, thresholds: &[f64], seed: u64) -> Result<GdhReport> {
    check(records, thresholds)?;
    let mut estimates = Vec::with_capacity(records.len());
    for (i, r) in records.iter().enumerate() {
        let dialogue = DialogueState::new(r.utterance.clone())?;
        estimates.push(ground_best(grounder, &r.scene, &dialogue, seed.wrapping_add(i as u64)));
    }
    Ok(report(records, estimates, thresholds))
}
