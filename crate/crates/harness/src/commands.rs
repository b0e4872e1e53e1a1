//! Batch subcommands: dataset generation, benchmark, sweep and episode replay.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context};
use intent_grasp::agents::{parse_answer, AgentNoiseParams, AgentSuite, TabularAgents};
use intent_grasp::dialogue::{run_episode, AnswerOracle, EpisodeResult, Hyperparams, Policy, ScriptedAnswers, SimulatedUser};
use intent_grasp::eval::{generate_dialogue_records, run_benchmark, run_sweep, BenchmarkConfig, BenchmarkOutput, ReportRow};
use intent_grasp::iou;
use intent_grasp::world::{save_dataset, GeneratorConfig, Scene, Split};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::api::GeneratorSpec;

pub fn load_json<T: DeserializeOwned>(path: &Path) -> anyhow::Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_file(path: &Path, contents: &str) -> anyhow::Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

/// Command-line overrides shared by the batch subcommands.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub lambdas: Option<Vec<f64>>,
    pub rounds: Option<Vec<usize>>,
    pub policies: Option<Vec<Policy>>,
}

fn single<T: Copy>(flag: &str, v: &Option<Vec<T>>) -> anyhow::Result<Option<T>> {
    match v.as_deref() {
        None => Ok(None),
        Some([x]) => Ok(Some(*x)),
        Some(_) => bail!("{flag} takes a single value here"),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenDataConfig {
    pub split: Split,
    pub num_records: usize,
    pub seed: u64,
    /// Only scenes where several objects satisfy the intent.
    pub ambiguous: bool,
    /// Answer noise of the simulated human.
    pub user: AgentNoiseParams,
    pub max_rounds: usize,
}

impl Default for GenDataConfig {
    fn default() -> Self {
        GenDataConfig {
            split: Split::Seen,
            num_records: 200,
            seed: 0,
            ambiguous: true,
            user: AgentNoiseParams::default(),
            max_rounds: 3,
        }
    }
}

/// Writes scripted dialogue records as a JSON array; returns how many.
pub fn gen_data(mut cfg: GenDataConfig, o: &Overrides, out: &Path) -> anyhow::Result<usize> {
    cfg.seed = o.seed.unwrap_or(cfg.seed);
    cfg.max_rounds = single("--rounds", &o.rounds)?.unwrap_or(cfg.max_rounds);
    let mut gen = GeneratorConfig::for_split(cfg.split);
    if cfg.ambiguous {
        gen = gen.ambiguous();
    }
    let records = generate_dialogue_records(&gen, cfg.num_records, cfg.seed, cfg.user, cfg.max_rounds)?;
    save_dataset(&records, out).with_context(|| format!("writing {}", out.display()))?;
    Ok(records.len())
}

fn apply(cfg: &mut BenchmarkConfig, o: &Overrides) {
    if let Some(s) = o.seed {
        cfg.seed = s;
    }
    if let Some(l) = &o.lambdas {
        cfg.lambdas = l.clone();
    }
    if let Some(r) = &o.rounds {
        cfg.rounds = r.clone();
    }
    if let Some(p) = &o.policies {
        cfg.policies = p.clone();
    }
}

/// Raw episodes go next to the report: `report.csv` pairs with `report.episodes.jsonl`.
pub fn episodes_path(report: &Path) -> PathBuf {
    let stem = report.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    report.with_file_name(format!("{stem}.episodes.jsonl"))
}

pub fn bench(mut cfg: BenchmarkConfig, o: &Overrides, out: &Path) -> anyhow::Result<BenchmarkOutput> {
    apply(&mut cfg, o);
    let result = run_benchmark(&cfg)?;
    write_file(out, &result.table.to_csv())?;
    write_file(&episodes_path(out), &result.episodes_jsonl()?)?;
    Ok(result)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub seed: u64,
    pub thresholds: Vec<f64>,
    pub cells: Vec<ReportRow>,
}

pub fn sweep(mut cfg: BenchmarkConfig, o: &Overrides) -> anyhow::Result<SweepResult> {
    apply(&mut cfg, o);
    let cells = run_sweep(&cfg)?;
    Ok(SweepResult { seed: cfg.seed, thresholds: cfg.iou_thresholds.clone(), cells })
}

fn default_policy() -> Policy {
    Policy::Pragmatic
}

fn default_lambda() -> f64 {
    0.9
}

fn default_rounds() -> usize {
    3
}

/// One episode to rerun: a scene, the session settings, and either scripted
/// answers or a simulated user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplaySpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<Scene>,
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
    #[serde(default)]
    pub agent: AgentNoiseParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<f64>,
    /// Human replies in order; the simulated user answers when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answers: Option<Vec<String>>,
}

/// A rerun episode with the scene and opening utterance it ran on.
#[derive(Debug, Clone, PartialEq)]
pub struct Replayed {
    pub scene: Scene,
    pub utterance: String,
    pub episode: EpisodeResult,
}

pub fn replay_episode(mut spec: ReplaySpec, o: &Overrides) -> anyhow::Result<Replayed> {
    spec.seed = o.seed.unwrap_or(spec.seed);
    spec.lambda = single("--lambda", &o.lambdas)?.unwrap_or(spec.lambda);
    spec.rounds = single("--rounds", &o.rounds)?.unwrap_or(spec.rounds);
    spec.policy = single("--policy", &o.policies)?.unwrap_or(spec.policy);
    let (scene, utterance) = match (spec.scene, &spec.generator) {
        (Some(scene), None) => (scene, spec.utterance),
        (None, Some(g)) => {
            let task = g.task()?;
            (task.scene, spec.utterance.or(Some(task.utterance)))
        }
        _ => bail!("episode needs exactly one of scene and generator"),
    };
    scene.validate()?;
    let utterance = utterance.context("episode needs an utterance")?;
    let agents: Arc<dyn AgentSuite> = Arc::new(TabularAgents::with_params(spec.agent)?);
    let mut oracle: Box<dyn AnswerOracle> = match &spec.answers {
        Some(texts) => {
            let answers = texts.iter().map(|t| parse_answer(t, &scene)).collect::<Result<Vec<_>, _>>()?;
            Box::new(ScriptedAnswers::new(answers))
        }
        None => Box::new(SimulatedUser::new(spec.agent, spec.seed)),
    };
    let hyper = Hyperparams::new(spec.rounds, spec.lambda);
    hyper.validate()?;
    let scene = Arc::new(scene);
    let episode = run_episode(&scene, &utterance, spec.policy, &hyper, &agents, oracle.as_mut(), spec.early_stop, spec.seed);
    Ok(Replayed { scene: Arc::unwrap_or_clone(scene), utterance, episode })
}

fn fmt_box(b: &intent_grasp::RegionBox) -> String {
    format!("[{:.1}, {:.1}, {:.1}, {:.1}]", b.x1, b.y1, b.x2, b.y2)
}

/// Human-readable transcript of a replayed episode.
pub fn transcript(scene: &Scene, utterance: &str, r: &EpisodeResult) -> String {
    let target = scene.target();
    let mut s = String::new();
    let _ = writeln!(s, "scene {} ({} objects), target {} {}", scene.id, scene.objects.len(), target.id, fmt_box(&target.bbox));
    let _ = writeln!(s, "policy {}, lambda {}, T {}", r.policy, r.lambda, r.rounds);
    let _ = writeln!(s, "human: {utterance}");
    if r.policy == Policy::Silent {
        if let Some(e) = r.per_round_estimates.first() {
            let _ = writeln!(s, "estimate {} (IoU {:.3})", fmt_box(e), iou(e, &target.bbox));
        }
    }
    for (i, (q, a)) in r.transcript.iter().enumerate() {
        let _ = writeln!(s, "round {}", i + 1);
        let _ = writeln!(s, "  robot: {q}");
        let _ = writeln!(s, "  human: {a}");
        if let Some(e) = r.per_round_estimates.get(i) {
            let _ = writeln!(s, "  estimate {} (IoU {:.3})", fmt_box(e), iou(e, &target.bbox));
        }
    }
    match (&r.error, r.final_estimate()) {
        (Some(err), _) => {
            let _ = writeln!(s, "failed: {err}");
        }
        (None, Some(e)) => {
            let _ = writeln!(s, "final {} after {} rounds, IoU {:.3}", fmt_box(&e), r.rounds_used, r.final_iou);
        }
        (None, None) => {
            let _ = writeln!(s, "no estimate");
        }
    }
    s
}

pub fn replay(spec: ReplaySpec, o: &Overrides) -> anyhow::Result<String> {
    let r = replay_episode(spec, o)?;
    Ok(transcript(&r.scene, &r.utterance, &r.episode))
}
