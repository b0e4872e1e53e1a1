//! In-memory sessions and scenes behind an append-only JSON-lines log.
//!
//! Each mutation is computed on a copy, appended to the log, and only then
//! committed, so the log and memory never disagree. Reopening a store
//! replays the log; a torn final line (a crash mid-append) is dropped.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use intent_grasp::agents::{parse_answer, parse_descriptor, AgentNoiseParams, AgentSuite, Answer, TabularAgents};
use intent_grasp::dialogue::{stream_rng, EpisodeResult, Hyperparams, Phase, Policy, Session, CLOUD_STREAM};
use intent_grasp::grasp::{grasp_target, GraspTarget, RansacParams};
use intent_grasp::world::{render_point_cloud_with, RenderOptions, Scene};
use serde::{Deserialize, Serialize};

use crate::api::{
    AnswerRequest, ApiError, CandidateView, Correction, CreateSessionRequest, SceneRender, SessionStatus, SessionView,
};
use crate::render::scene_svg;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub agent: AgentNoiseParams,
    /// Depth noise (meters) of the point cloud rendered at finalize.
    pub cloud_noise: f64,
    pub ransac: RansacParams,
    /// Session log; without one, state lives only in memory.
    pub log: Option<PathBuf>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig { agent: AgentNoiseParams::default(), cloud_noise: 0.001, ransac: RansacParams::default(), log: None }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
enum LogEntry {
    Scene { scene: Scene },
    DeleteScene { scene_id: String },
    Create { session_id: String, scene: Scene, utterance: String, policy: Policy, hyper: Hyperparams, seed: u64 },
    Answer { session_id: String, answer: Answer },
    Finalize { session_id: String, grasp: GraspTarget },
}

struct Entry {
    session: Session,
    seed: u64,
    grasp: Option<GraspTarget>,
}

pub struct Store {
    config: ServiceConfig,
    agents: Arc<dyn AgentSuite>,
    scenes: RwLock<BTreeMap<String, Arc<Scene>>>,
    sessions: RwLock<HashMap<String, Arc<Mutex<Entry>>>>,
    next_id: AtomicU64,
    log: Option<Mutex<File>>,
}

fn start(
    agents: &Arc<dyn AgentSuite>,
    scene: Arc<Scene>,
    utterance: &str,
    policy: Policy,
    hyper: Hyperparams,
    seed: u64,
) -> Result<Session, ApiError> {
    let mut s = Session::begin(scene, utterance, hyper, policy, agents.clone(), seed)?;
    if policy != Policy::Silent {
        s.next_question()?;
    }
    Ok(s)
}

/// Applies an answer and, when rounds remain, asks the next question.
fn advance(session: &Session, answer: Answer) -> Result<Session, ApiError> {
    let mut next = session.clone();
    next.receive_answer(answer)?;
    if next.phase() == Phase::Asking {
        next.next_question()?;
    }
    Ok(next)
}

fn to_answer(req: AnswerRequest, scene: &Scene) -> Result<Answer, ApiError> {
    match req {
        AnswerRequest::Text { text } => Ok(parse_answer(&text, scene)?),
        AnswerRequest::Structured { polarity, correction } => {
            let correction = match correction {
                None => None,
                Some(Correction::Phrase(p)) => Some(parse_descriptor(&p, scene)?),
                Some(Correction::Descriptor(d)) => {
                    if !scene.descriptor_vocabulary().contains(&d) {
                        return Err(ApiError::bad_request(format!("correction {d:?} names nothing in the scene")));
                    }
                    Some(d)
                }
            };
            Answer::from_parts(polarity, correction).map_err(|e| ApiError::bad_request(e.to_string()))
        }
    }
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix('s')?.parse().ok()
}

impl Store {
    /// Opens a store, replaying the configured log if it exists.
    pub fn open(config: ServiceConfig) -> anyhow::Result<Store> {
        let agents: Arc<dyn AgentSuite> = Arc::new(TabularAgents::with_params(config.agent)?);
        let mut store = Store {
            agents,
            scenes: RwLock::default(),
            sessions: RwLock::default(),
            next_id: AtomicU64::new(1),
            log: None,
            config,
        };
        if let Some(path) = store.config.log.clone() {
            if path.exists() {
                store.replay(&path)?;
            }
            let file = OpenOptions::new().create(true).append(true).open(&path)?;
            store.log = Some(Mutex::new(file));
        }
        Ok(store)
    }

    pub fn config(&self) -> &ServiceConfig {
        &self.config
    }

    fn replay(&mut self, path: &std::path::Path) -> anyhow::Result<()> {
        let text = std::fs::read_to_string(path)?;
        let complete = text.ends_with('\n');
        let lines: Vec<&str> = text.lines().collect();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let entry: LogEntry = match serde_json::from_str(line) {
                Ok(e) => e,
                Err(_) if i + 1 == lines.len() && !complete => break,
                Err(e) => anyhow::bail!("{}:{}: {e}", path.display(), i + 1),
            };
            self.apply(entry).map_err(|e| anyhow::anyhow!("{}:{}: {e}", path.display(), i + 1))?;
        }
        if !complete && !text.is_empty() {
            // Drop the torn tail so later appends start on a fresh line.
            let keep = text.rfind('\n').map_or(0, |i| i + 1);
            std::fs::write(path, &text[..keep])?;
        }
        Ok(())
    }

    fn apply(&mut self, entry: LogEntry) -> Result<(), ApiError> {
        let scenes = self.scenes.get_mut().expect("scene lock");
        let sessions = self.sessions.get_mut().expect("session lock");
        match entry {
            LogEntry::Scene { scene } => {
                scenes.insert(scene.id.clone(), Arc::new(scene));
            }
            LogEntry::DeleteScene { scene_id } => {
                scenes.remove(&scene_id);
            }
            LogEntry::Create { session_id, scene, utterance, policy, hyper, seed } => {
                let session = start(&self.agents, Arc::new(scene), &utterance, policy, hyper, seed)?;
                if let Some(n) = session_number(&session_id) {
                    self.next_id.fetch_max(n + 1, Ordering::Relaxed);
                }
                sessions.insert(session_id, Arc::new(Mutex::new(Entry { session, seed, grasp: None })));
            }
            LogEntry::Answer { session_id, answer } => {
                let e = sessions.get(&session_id).ok_or_else(|| ApiError::not_found("session", &session_id))?;
                let mut e = e.lock().expect("session lock");
                e.session = advance(&e.session, answer)?;
            }
            LogEntry::Finalize { session_id, grasp } => {
                let e = sessions.get(&session_id).ok_or_else(|| ApiError::not_found("session", &session_id))?;
                e.lock().expect("session lock").grasp = Some(grasp);
            }
        }
        Ok(())
    }

    fn append(&self, entry: &LogEntry) -> Result<(), ApiError> {
        let Some(log) = &self.log else { return Ok(()) };
        let mut line = serde_json::to_string(entry).map_err(|e| ApiError::engine(e.to_string()))?;
        line.push('\n');
        let mut f = log.lock().expect("log lock");
        f.write_all(line.as_bytes()).and_then(|_| f.flush()).map_err(|e| ApiError::engine(format!("session log: {e}")))
    }

    /// Adds a scene, or reuses an identical one already registered under its id.
    fn register(&self, scene: Scene) -> Result<Arc<Scene>, ApiError> {
        scene.validate()?;
        let mut scenes = self.scenes.write().expect("scene lock");
        if let Some(existing) = scenes.get(&scene.id) {
            if **existing == scene {
                return Ok(existing.clone());
            }
            return Err(ApiError::bad_request(format!("scene id {:?} is taken by a different scene", scene.id)));
        }
        self.append(&LogEntry::Scene { scene: scene.clone() })?;
        let scene = Arc::new(scene);
        scenes.insert(scene.id.clone(), scene.clone());
        Ok(scene)
    }

    pub fn add_scene(&self, scene: Scene) -> Result<String, ApiError> {
        Ok(self.register(scene)?.id.clone())
    }

    pub fn scene(&self, id: &str) -> Result<Arc<Scene>, ApiError> {
        self.scenes.read().expect("scene lock").get(id).cloned().ok_or_else(|| ApiError::not_found("scene", id))
    }

    pub fn render_scene(&self, id: &str) -> Result<SceneRender, ApiError> {
        let scene = self.scene(id)?;
        Ok(SceneRender { svg: scene_svg(&scene), scene: (*scene).clone() })
    }

    /// Removes a scene from the registry. Sessions already running on it are unaffected.
    pub fn delete_scene(&self, id: &str) -> Result<(), ApiError> {
        let mut scenes = self.scenes.write().expect("scene lock");
        if !scenes.contains_key(id) {
            return Err(ApiError::not_found("scene", id));
        }
        self.append(&LogEntry::DeleteScene { scene_id: id.to_string() })?;
        scenes.remove(id);
        Ok(())
    }

    fn resolve_scene(&self, req: &CreateSessionRequest) -> Result<(Arc<Scene>, Option<String>), ApiError> {
        match (&req.scene_id, &req.scene, &req.generator) {
            (Some(id), None, None) => Ok((self.scene(id)?, None)),
            (None, Some(scene), None) => Ok((self.register(scene.clone())?, None)),
            (None, None, Some(g)) => {
                let task = g.task()?;
                Ok((self.register(task.scene)?, Some(task.utterance)))
            }
            _ => Err(ApiError::bad_request("give exactly one of scene_id, scene and generator")),
        }
    }

    fn entry(&self, id: &str) -> Result<Arc<Mutex<Entry>>, ApiError> {
        self.sessions.read().expect("session lock").get(id).cloned().ok_or_else(|| ApiError::not_found("session", id))
    }

    pub fn create_session(&self, req: CreateSessionRequest) -> Result<SessionView, ApiError> {
        let (scene, generated) = self.resolve_scene(&req)?;
        let utterance = req
            .utterance
            .clone()
            .or(generated)
            .ok_or_else(|| ApiError::bad_request("utterance is required"))?;
        let hyper = Hyperparams::new(req.rounds, req.lambda);
        hyper.validate()?;
        let session = start(&self.agents, scene.clone(), &utterance, req.policy, hyper, req.seed)?;
        let id = format!("s{:06}", self.next_id.fetch_add(1, Ordering::Relaxed));
        self.append(&LogEntry::Create {
            session_id: id.clone(),
            scene: (*scene).clone(),
            utterance,
            policy: req.policy,
            hyper,
            seed: req.seed,
        })?;
        let entry = Entry { session, seed: req.seed, grasp: None };
        let view = self.view(&id, &entry)?;
        self.sessions.write().expect("session lock").insert(id, Arc::new(Mutex::new(entry)));
        Ok(view)
    }

    pub fn check_session(&self, id: &str) -> Result<(), ApiError> {
        self.entry(id).map(|_| ())
    }

    pub fn get_session(&self, id: &str) -> Result<SessionView, ApiError> {
        let e = self.entry(id)?;
        let e = e.lock().expect("session lock");
        self.view(id, &e)
    }

    pub fn answer(&self, id: &str, req: AnswerRequest) -> Result<SessionView, ApiError> {
        let e = self.entry(id)?;
        let mut e = e.lock().expect("session lock");
        if e.grasp.is_some() {
            return Err(ApiError::invalid_state("session is finalized"));
        }
        if e.session.pending_question().is_none() {
            return Err(ApiError::invalid_state(match e.session.policy() {
                Policy::Silent => "the silent policy asks no questions".to_string(),
                _ => format!("no question is pending: all {} rounds are used", e.session.hyperparams().rounds),
            }));
        }
        let answer = to_answer(req, e.session.scene())?;
        let next = advance(&e.session, answer.clone())?;
        self.append(&LogEntry::Answer { session_id: id.to_string(), answer })?;
        e.session = next;
        self.view(id, &e)
    }

    /// Renders the scene's point cloud and grasps the current estimate; closes the session.
    pub fn finalize(&self, id: &str) -> Result<SessionView, ApiError> {
        let e = self.entry(id)?;
        let mut e = e.lock().expect("session lock");
        if e.grasp.is_some() {
            return Err(ApiError::invalid_state("session is already finalized"));
        }
        let estimate = e.session.estimate().ok_or_else(|| ApiError::invalid_state("no estimate yet: answer a question first"))?;
        let opts = RenderOptions { noise_sigma: self.config.cloud_noise, ..Default::default() };
        let cloud = render_point_cloud_with(e.session.scene(), &opts, &mut stream_rng(e.seed, CLOUD_STREAM));
        let grasp = grasp_target(&cloud, &estimate, &self.config.ransac)?;
        self.append(&LogEntry::Finalize { session_id: id.to_string(), grasp })?;
        e.grasp = Some(grasp);
        self.view(id, &e)
    }

    fn view(&self, id: &str, e: &Entry) -> Result<SessionView, ApiError> {
        let s = &e.session;
        let status = match (e.grasp.is_some(), s.phase()) {
            (true, _) => SessionStatus::Finalized,
            (false, Phase::Awaiting) => SessionStatus::AwaitingAnswer,
            (false, _) => SessionStatus::Done,
        };
        let pool = s.candidates().regions();
        let p_v = if pool.is_empty() { Vec::new() } else { self.agents.likelihoods(s.scene(), s.dialogue(), &pool)? };
        let candidates = s
            .candidates()
            .entries()
            .iter()
            .zip(p_v)
            .map(|(c, p_v)| CandidateView { region: c.region, round: c.round, p_v })
            .collect();
        Ok(SessionView {
            session_id: id.to_string(),
            scene_id: s.scene().id.clone(),
            utterance: s.dialogue().utterance.clone(),
            policy: s.policy(),
            lambda: s.lambda(),
            rounds: s.hyperparams().rounds,
            round: s.round(),
            status,
            done: status != SessionStatus::AwaitingAnswer,
            question: if status == SessionStatus::AwaitingAnswer { s.pending_question().cloned() } else { None },
            estimate: s.estimate(),
            transcript: s.dialogue().transcript(),
            candidates,
            grasp: e.grasp,
            episode: (status != SessionStatus::AwaitingAnswer).then(|| EpisodeResult::from_session(s)),
        })
    }
}
