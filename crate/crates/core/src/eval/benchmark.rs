use std::collections::HashMap;
use std::fmt::Write as _;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{AgentNoiseParams, AgentSuite, TabularAgents};
use crate::dialogue::{
    run_episode, stream_rng, EpisodeResult, Hyperparams, Policy, QuestionSampling, SimulatedUser, CLOUD_STREAM,
};
use crate::error::{Error, Result};
use crate::geometry::RegionBox;
use crate::grasp::{grasp_target, RansacParams};
use crate::world::{generate_task, render_point_cloud_with, GeneratorConfig, RenderOptions, Split};

use super::{accuracy_at, communicative_efficiency, grasp_hits_target, oracle_upper_bound};


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BenchmarkConfig {
    pub seed: u64,
    /// Scenes generated per split.
    pub num_scenes: usize,
    pub splits: Vec<Split>,
    pub policies: Vec<Policy>,
    /// Weights swept for prograsp; the other policies have fixed or no weight.
    pub lambdas: Vec<f64>,
    #[serde(rename = "T")]
    pub rounds: Vec<usize>,
    pub agent: AgentNoiseParams,
    /// IoU that ends an efficiency episode.
    pub early_stop: f64,
    pub iou_thresholds: Vec<f64>,
    pub dedup_iou: f64,
    pub question_sampling: QuestionSampling,
    /// Score grasps on a rendered cloud for every final estimate.
    pub grasp: bool,
    pub cloud_noise: f64,
    pub ransac: RansacParams,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        BenchmarkConfig {
            seed: 0,
            num_scenes: 200,
            splits: Split::ALL.to_vec(),
            policies: vec![Policy::Pragmatic, Policy::Literal, Policy::AintOnly, Policy::Silent, Policy::Random],
            lambdas: vec![0.9],
            rounds: vec![3],
            agent: AgentNoiseParams::default(),
            early_stop: 0.5,
            iou_thresholds: vec![0.1, 0.5, 0.9],
            dedup_iou: 0.9,
            question_sampling: QuestionSampling::Proportional,
            grasp: true,
            cloud_noise: 0.001,
            ransac: RansacParams::default(),
        }
    }
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.num_scenes == 0 {
            return bad("num_scenes must be positive");
        }
        if self.splits.is_empty() || self.policies.is_empty() || self.lambdas.is_empty() || self.rounds.is_empty() {
            return bad("splits, policies and the lambda and T grids must be nonempty");
        }
        if self.iou_thresholds.is_empty() || self.iou_thresholds.iter().any(|t| !(*t > 0.0 && *t <= 1.0)) {
            return bad("iou thresholds must be nonempty and lie in (0, 1]");
        }
        if self.lambdas.iter().any(|l| !(0.0..=1.0).contains(l)) {
            return bad("lambda grid values must lie in [0, 1]");
        }
        if self.rounds.contains(&0) {
            return bad("T grid values must be at least 1");
        }
        if !(self.early_stop > 0.0 && self.early_stop <= 1.0) {
            return bad("early_stop must lie in (0, 1]");
        }
        if !(self.cloud_noise >= 0.0 && self.cloud_noise.is_finite()) {
            return bad("cloud_noise must be a nonnegative number");
        }
        self.agent.validate()?;
        self.ransac.validate()?;
        for &t in &self.rounds {
            Hyperparams { rounds: t, lambda: 0.9, dedup_iou: self.dedup_iou, question_sampling: self.question_sampling }
                .validate()?;
        }
        Ok(())
    }

    fn thresholds(&self) -> Vec<f64> {
        let mut t = self.iou_thresholds.clone();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }

    /// Every (policy, λ, T) cell in table order.
    fn cells(&self, split: Split) -> Vec<CellKey> {
        let mut policies = self.policies.clone();
        policies.sort();
        policies.dedup();
        let mut lambdas = self.lambdas.clone();
        lambdas.sort_by(f64::total_cmp);
        lambdas.dedup();
        let mut rounds = self.rounds.clone();
        rounds.sort();
        rounds.dedup();
        let mut out = Vec::new();
        for p in policies {
            let ls: Vec<Option<f64>> = match p {
                Policy::Pragmatic => lambdas.iter().map(|l| Some(*l)).collect(),
                other => vec![other.lambda(0.0)],
            };
            for l in ls {
                for &t in &rounds {
                    out.push(CellKey { split, policy: p, lambda: l, rounds: t });
                }
            }
        }
        out
    }

    fn hyper(&self, cell: &CellKey) -> Hyperparams {
        Hyperparams {
            rounds: cell.rounds,
            lambda: cell.lambda.unwrap_or(0.9),
            dedup_iou: self.dedup_iou,
            question_sampling: self.question_sampling,
        }
    }
}

/// Seed for scene `index` of `split`; also seeds that scene's episodes.
pub fn scene_seed(base: u64, split: Split, index: usize) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    let s = Split::ALL.iter().position(|x| *x == split).unwrap_or(0) as u64;
    mix(mix(mix(base) ^ s) ^ index as u64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellKey {
    pub split: Split,
    pub policy: Policy,
    pub lambda: Option<f64>,
    #[serde(rename = "T")]
    pub rounds: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunKind {
    /// All T rounds.
    Accuracy,
    /// Stops once the estimate passes the early-stop IoU.
    Efficiency,
}

/// One raw episode with the context needed to score it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub split: Split,
    pub run: RunKind,
    pub scene_index: usize,
    pub target_box: RegionBox,
    #[serde(flatten)]
    pub episode: EpisodeResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub split: Split,
    pub policy: Policy,
    pub lambda: Option<f64>,
    #[serde(rename = "T")]
    pub rounds: usize,
    /// Accuracy at each of the table's thresholds, in ascending threshold order.
    pub acc: Vec<f64>,
    /// Absent for policies that never ask.
    pub avg_interactions: Option<f64>,
    /// Candidate-set upper bound at each threshold.
    pub upper_bound: Vec<f64>,
    pub grasp_success: Option<f64>,
    pub n: usize,
    /// Episodes that ended in an agent error; they count as misses.
    pub errors: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportTable {
    pub thresholds: Vec<f64>,
    pub rows: Vec<ReportRow>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl ReportTable {
    pub fn csv_header(&self) -> String {
        let mut h = String::from("split,policy,lambda,T");
        for t in &self.thresholds {
            let _ = write!(h, ",acc_{t}");
        }
        h.push_str(",avg_interactions,upper_bound,grasp_success,n");
        h
    }

    /// The upper-bound column reports the strictest threshold.
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        out.push('\n');
        for r in &self.rows {
            let _ = write!(out, "{},{},{},{}", r.split.name(), r.policy, opt(r.lambda), r.rounds);
            for a in &r.acc {
                let _ = write!(out, ",{a}");
            }
            let _ = writeln!(
                out,
                ",{},{},{},{}",
                opt(r.avg_interactions),
                opt(r.upper_bound.last().copied()),
                opt(r.grasp_success),
                r.n
            );
        }
        out
    }

    pub fn row(&self, split: Split, policy: Policy, lambda: Option<f64>, rounds: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.split == split && r.policy == policy && r.lambda == lambda && r.rounds == rounds)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkOutput {
    pub table: ReportTable,
    pub episodes: Vec<EpisodeRecord>,
    /// Scenes the generator could not produce, as (split, index, message).
    pub generation_failures: Vec<(Split, usize, String)>,
}

impl BenchmarkOutput {
    pub fn episodes_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        for e in &self.episodes {
            out.push_str(&serde_json::to_string(e).map_err(|e| Error::Io(e.to_string()))?);
            out.push('\n');
        }
        Ok(out)
    }
}

struct SceneRun {
    index: usize,
    target: RegionBox,
    /// Per cell: accuracy episode, efficiency episode, grasp outcome.
    cells: Vec<(EpisodeResult, EpisodeResult, Option<bool>)>,
}

fn run_scene(config: &BenchmarkConfig, agents: &Arc<dyn AgentSuite>, cells: &[CellKey], split: Split, index: usize) -> Result<SceneRun> {
    let seed = scene_seed(config.seed, split, index);
    let task = generate_task(&GeneratorConfig::for_split(split), seed)?;
    let scene = Arc::new(task.scene);
    let cloud = config.grasp.then(|| {
        let opts = RenderOptions { noise_sigma: config.cloud_noise, ..Default::default() };
        render_point_cloud_with(&scene, &opts, &mut stream_rng(seed, CLOUD_STREAM))
    });
    let mut grasp_cache: HashMap<[u64; 4], bool> = HashMap::new();
    let mut out = Vec::with_capacity(cells.len());
    for cell in cells {
        let hyper = config.hyper(cell);
        let episode = |stop| {
            let mut user = SimulatedUser::new(config.agent, seed);
            run_episode(&scene, &task.utterance, cell.policy, &hyper, agents, &mut user, stop, seed)
        };
        let acc = episode(None);
        let eff = if cell.policy == Policy::Silent { acc.clone() } else { episode(Some(config.early_stop)) };
        let grasp = cloud.as_ref().map(|cloud| match acc.final_estimate() {
            None => false,
            Some(est) => {
                let key = [est.x1.to_bits(), est.y1.to_bits(), est.x2.to_bits(), est.y2.to_bits()];
                *grasp_cache.entry(key).or_insert_with(|| {
                    grasp_target(cloud, &est, &config.ransac).is_ok_and(|g| grasp_hits_target(&g, &scene))
                })
            }
        });
        out.push((acc, eff, grasp));
    }
    Ok(SceneRun { index, target: scene.target_box(), cells: out })
}

/// Runs every cell over freshly generated scenes of each split.
///
/// Scenes run in parallel; every cell of a scene shares that scene's seed,
/// so policies are compared on identical grounder draws and user noise.
pub fn run_benchmark(config: &BenchmarkConfig) -> Result<BenchmarkOutput> {
    config.validate()?;
    let thresholds = config.thresholds();
    let agents: Arc<dyn AgentSuite> = Arc::new(TabularAgents::with_params(config.agent)?);
    let mut splits = config.splits.clone();
    splits.sort();
    splits.dedup();
    let jobs: Vec<(Split, usize)> =
        splits.iter().flat_map(|s| (0..config.num_scenes).map(move |i| (*s, i))).collect();
    let runs: Vec<(Split, usize, Result<SceneRun>)> = jobs
        .par_iter()
        .map(|&(split, i)| (split, i, run_scene(config, &agents, &config.cells(split), split, i)))
        .collect();

    let mut table = ReportTable { thresholds: thresholds.clone(), rows: Vec::new() };
    let mut episodes = Vec::new();
    let mut generation_failures = Vec::new();
    for split in splits {
        let scenes: Vec<&SceneRun> = runs
            .iter()
            .filter_map(|(s, i, r)| match r {
                Ok(run) if *s == split => Some(run),
                Err(e) if *s == split => {
                    generation_failures.push((split, *i, e.to_string()));
                    None
                }
                _ => None,
            })
            .collect();
        if scenes.is_empty() {
            continue;
        }
        let targets: Vec<RegionBox> = scenes.iter().map(|s| s.target).collect();
        for (c, cell) in config.cells(split).iter().enumerate() {
            let acc_eps: Vec<EpisodeResult> = scenes.iter().map(|s| s.cells[c].0.clone()).collect();
            let eff_eps: Vec<EpisodeResult> = scenes.iter().map(|s| s.cells[c].1.clone()).collect();
            let acc = thresholds.iter().map(|t| accuracy_at(&acc_eps, &targets, *t)).collect::<Result<Vec<_>>>()?;
            let upper_bound =
                thresholds.iter().map(|t| oracle_upper_bound(&acc_eps, &targets, *t)).collect::<Result<Vec<_>>>()?;
            let avg_interactions =
                if cell.policy == Policy::Silent { None } else { Some(communicative_efficiency(&eff_eps)?) };
            let grasp_success = config.grasp.then(|| {
                scenes.iter().filter(|s| s.cells[c].2 == Some(true)).count() as f64 / scenes.len() as f64
            });
            let errors = acc_eps.iter().filter(|e| e.error.is_some()).count();
            table.rows.push(ReportRow {
                split,
                policy: cell.policy,
                lambda: cell.lambda,
                rounds: cell.rounds,
                acc,
                avg_interactions,
                upper_bound,
                grasp_success,
                n: scenes.len(),
                errors,
            });
        }
        for s in &scenes {
            for (acc, eff, _) in &s.cells {
                for (run, ep) in [(RunKind::Accuracy, acc), (RunKind::Efficiency, eff)] {
                    episodes.push(EpisodeRecord {
                        split,
                        run,
                        scene_index: s.index,
                        target_box: s.target,
                        episode: ep.clone(),
                    });
                }
            }
        }
    }
    Ok(BenchmarkOutput { table, episodes, generation_failures })
}

/// λ×T grid over prograsp alone, without grasp scoring.
pub fn run_sweep(config: &BenchmarkConfig) -> Result<Vec<ReportRow>> {
    let cfg = BenchmarkConfig { policies: vec![Policy::Pragmatic], grasp: false, ..config.clone() };
    Ok(run_benchmark(&cfg)?.table.rows)
}
