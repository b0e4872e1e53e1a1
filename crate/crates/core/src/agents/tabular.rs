use rand::distr::weighted::WeightedIndex;
use rand::distr::{Distribution, Uniform};
use rand::{Rng, RngCore};
use rand_distr::{Poisson, StandardNormal};

use super::{
    AgentNoiseParams, Answer, AnswerInterpretation, DialogueState, Polarity, Question, QuestionGeneration,
    ScoredRegion, VisualGrounding,
};
use crate::error::{Error, Result};
use crate::geometry::{iou, RegionBox};
use crate::world::{default_lexicon, minimal_descriptor, Descriptor, Lexicon, ObjectSpec, Scene};

/// Score penalty per unit of missing overlap between a region and its object.
pub const LOCALIZATION_WEIGHT: f64 = 10.0;

const DISTRACTOR_SIDE_PX: (f64, f64) = (30.0, 120.0);

/// Exact agents over the synthetic world.
#[derive(Debug, Clone, Default)]
pub struct TabularAgents {
    pub lexicon: Lexicon,
    pub params: AgentNoiseParams,
}

impl TabularAgents {
    pub fn new(lexicon: Lexicon, params: AgentNoiseParams) -> Result<Self> {
        params.validate()?;
        lexicon.validate().map_err(Error::InvalidHyperparameter)?;
        Ok(TabularAgents { lexicon, params })
    }

    pub fn with_params(params: AgentNoiseParams) -> Result<Self> {
        Self::new(default_lexicon(), params)
    }

    fn score(&self, region: &RegionBox, obj: Option<&ObjectSpec>, intent: &str) -> f64 {
        match obj {
            Some(o) => self.lexicon.typicality(&o.category, intent) - LOCALIZATION_WEIGHT * (1.0 - iou(region, &o.bbox)),
            None => -LOCALIZATION_WEIGHT,
        }
    }

    fn jitter(&self, b: &RegionBox, scene: &Scene, rng: &mut dyn RngCore) -> RegionBox {
        let s = self.params.grounder_jitter_px;
        let mut d = [0.0; 4];
        for v in &mut d {
            let z: f64 = StandardNormal.sample(rng);
            *v = z * s;
        }
        if s == 0.0 {
            return *b;
        }
        let j = RegionBox { x1: b.x1 + d[0], y1: b.y1 + d[1], x2: b.x2 + d[2], y2: b.y2 + d[3] }
            .clamped(scene.width as f64, scene.height as f64);
        if j.width() >= 1.0 && j.height() >= 1.0 {
            j
        } else {
            *b
        }
    }

    fn distractors(&self, scene: &Scene, rng: &mut dyn RngCore) -> Vec<RegionBox> {
        let rate = self.params.distractor_rate;
        if rate == 0.0 {
            return Vec::new();
        }
        let n = Poisson::new(rate).expect("validated rate").sample(rng) as usize;
        let (w, h) = (scene.width as f64, scene.height as f64);
        let side = Uniform::new(DISTRACTOR_SIDE_PX.0, DISTRACTOR_SIDE_PX.1).expect("static range");
        (0..n)
            .map(|_| {
                let bw = side.sample(rng).min(w);
                let bh = side.sample(rng).min(h);
                let x1 = rng.random_range(0.0..=w - bw).round();
                let y1 = rng.random_range(0.0..=h - bh).round();
                RegionBox { x1, y1, x2: (x1 + bw.round()).min(w), y2: (y1 + bh.round()).min(h) }
            })
            .collect()
    }
}

/// Whether an object survives every answered question.
///
/// A yes keeps objects the question's descriptor matches, a no removes them,
/// and a correction additionally keeps only objects the correction matches.
pub fn consistent_with(obj: &ObjectSpec, qa_pairs: &[(Question, Answer)]) -> bool {
    qa_pairs.iter().all(|(q, a)| match a.polarity {
        Polarity::Yes => q.descriptor.matches(obj),
        Polarity::No => !q.descriptor.matches(obj) && a.correction.as_ref().is_none_or(|c| c.matches(obj)),
    })
}

fn correction_weights(scene: &Scene, obj: Option<&ObjectSpec>, eps: f64, extra: Option<&Descriptor>) -> (Vec<Descriptor>, Vec<f64>) {
    let mut ds = scene.correction_descriptors();
    if let Some(d) = extra {
        if !ds.contains(d) {
            ds.push(d.clone());
        }
    }
    let w = ds.iter().map(|d| if obj.is_some_and(|o| d.matches(o)) { 1.0 } else { eps }).collect();
    (ds, w)
}

/// P_A(answer | region, question) under the noisy-user model.
pub fn answer_likelihood(
    scene: &Scene,
    region: &RegionBox,
    question: &Question,
    answer: &Answer,
    params: &AgentNoiseParams,
) -> f64 {
    let eps = params.epsilon_answer;
    let obj = scene.resolve(region);
    let m = obj.is_some_and(|o| question.descriptor.matches(o));
    let p_yes = if m { 1.0 - eps } else { eps };
    let p_no = 1.0 - p_yes;
    match (&answer.polarity, &answer.correction) {
        (Polarity::Yes, _) => p_yes,
        (Polarity::No, None) => p_no * (1.0 - params.p_corrective),
        (Polarity::No, Some(d)) => {
            let (ds, w) = correction_weights(scene, obj, eps, Some(d));
            let total: f64 = w.iter().sum();
            let i = ds.iter().position(|x| x == d).expect("inserted above");
            let share = if total > 0.0 { w[i] / total } else { 1.0 / ds.len() as f64 };
            p_no * params.p_corrective * share
        }
    }
}

/// Draws the reply of a user whose intended object is at `target_box`.
pub fn simulate_answer(
    scene: &Scene,
    target_box: &RegionBox,
    question: &Question,
    params: &AgentNoiseParams,
    rng: &mut dyn RngCore,
) -> Answer {
    let eps = params.epsilon_answer;
    let obj = scene.resolve(target_box);
    let m = obj.is_some_and(|o| question.descriptor.matches(o));
    let p_yes = if m { 1.0 - eps } else { eps };
    if rng.random::<f64>() < p_yes {
        return Answer::yes();
    }
    if rng.random::<f64>() >= params.p_corrective {
        return Answer::no();
    }
    let (ds, w) = correction_weights(scene, obj, eps, None);
    let i = match WeightedIndex::new(&w) {
        Ok(dist) => dist.sample(rng),
        Err(_) => rng.random_range(0..ds.len()),
    };
    Answer::corrective(ds[i].clone())
}

impl VisualGrounding for TabularAgents {
    fn intent(&self, utterance: &str) -> Result<String> {
        self.lexicon
            .intent_for_utterance(utterance)
            .map(str::to_string)
            .ok_or_else(|| Error::UngroundableUtterance(utterance.to_string()))
    }

    /// Detects every intent-satisfying, dialogue-consistent visible object.
    ///
    /// Jitter is drawn for every intent-satisfying object, detected or not,
    /// so that two dialogues over the same scene and seed see the same boxes.
    fn ground(&self, scene: &Scene, dialogue: &DialogueState, rng: &mut dyn RngCore) -> Result<Vec<ScoredRegion>> {
        let intent = self.intent(&dialogue.utterance)?;
        let mut pool = Vec::new();
        for o in scene.objects_satisfying(&intent) {
            let Some(seen) = scene.visible_extent(o) else {
                self.jitter(&o.bbox, scene, rng);
                continue;
            };
            let b = self.jitter(&seen, scene, rng);
            if consistent_with(o, &dialogue.qa_pairs) {
                pool.push(b);
            }
        }
        pool.extend(self.distractors(scene, rng));
        if pool.is_empty() {
            return Ok(Vec::new());
        }
        let p = self.likelihoods(scene, dialogue, &pool)?;
        Ok(pool
            .into_iter()
            .zip(p)
            .filter(|(_, p)| *p > 0.0)
            .map(|(region, p)| ScoredRegion { region, log_prob: p.ln() })
            .collect())
    }

    /// Inconsistent regions get `p_floor` each (at most half the mass in
    /// total); consistent regions share the rest in proportion to
    /// `exp(score)`. With no consistent region the whole pool is scored.
    fn likelihoods(&self, scene: &Scene, dialogue: &DialogueState, pool: &[RegionBox]) -> Result<Vec<f64>> {
        if pool.is_empty() {
            return Err(Error::EmptyPool);
        }
        let intent = self.intent(&dialogue.utterance)?;
        let mut scores = Vec::with_capacity(pool.len());
        let mut consistent = Vec::with_capacity(pool.len());
        for r in pool {
            let obj = scene.resolve(r);
            scores.push(self.score(r, obj, &intent));
            consistent.push(obj.is_some_and(|o| o.satisfies(&intent) && consistent_with(o, &dialogue.qa_pairs)));
        }
        let n_in = consistent.iter().filter(|c| **c).count();
        let n_out = pool.len() - n_in;
        let (floor_each, share) = if n_in == 0 || n_out == 0 {
            (0.0, 1.0)
        } else {
            let total = (n_out as f64 * self.params.p_floor).min(0.5);
            (total / n_out as f64, 1.0 - total)
        };
        let max = scores
            .iter()
            .zip(&consistent)
            .filter(|(_, c)| **c || n_in == 0)
            .map(|(s, _)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores
            .iter()
            .zip(&consistent)
            .map(|(s, c)| if *c || n_in == 0 { (s - max).exp() } else { 0.0 })
            .collect();
        let z: f64 = weights.iter().sum();
        Ok(weights
            .iter()
            .zip(&consistent)
            .map(|(w, c)| if *c || n_in == 0 { share * w / z } else { floor_each })
            .collect())
    }
}

impl QuestionGeneration for TabularAgents {
    fn generate_question(&self, scene: &Scene, dialogue: &DialogueState, referent: &RegionBox) -> Result<Question> {
        let obj = scene.resolve(referent).ok_or_else(|| Error::UnresolvableReferent(referent.to_string()))?;
        let descriptor = match self.intent(&dialogue.utterance) {
            Ok(intent) => minimal_descriptor(obj, scene.objects_satisfying(&intent)),
            Err(_) => minimal_descriptor(obj, &scene.objects),
        };
        Ok(Question::new(descriptor, *referent))
    }
}

impl AnswerInterpretation for TabularAgents {
    fn answer_likelihood(&self, scene: &Scene, region: &RegionBox, question: &Question, answer: &Answer) -> f64 {
        answer_likelihood(scene, region, question, answer, &self.params)
    }
}
