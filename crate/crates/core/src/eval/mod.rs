//! Metrics, the benchmark runner, parameter sweeps and one-shot grounding
//! from scripted dialogues.

mod benchmark;
mod gdh;

use crate::dialogue::EpisodeResult;
use crate::error::{Error, Result};
use crate::grasp::{grasp_target, GraspTarget, RansacParams};
use crate::world::{PointCloud, Scene};

pub use crate::geometry::iou;
pub use benchmark::{
    run_benchmark, run_sweep, scene_seed, BenchmarkConfig, BenchmarkOutput, CellKey, EpisodeRecord, ReportRow,
    ReportTable, RunKind,
};
pub use gdh::{generate_dialogue_records, run_gdh, run_utterance_only, GdhReport};

/// Largest distance (meters) between a grasp point and the true centroid that still counts as a success.
pub const GRASP_SUCCESS_RADIUS_M: f64 = 0.02;

fn check_pairs(results: &[EpisodeResult], targets: &[crate::geometry::RegionBox]) -> Result<()> {
    if results.is_empty() {
        return Err(Error::InvalidState("no episodes to score".into()));
    }
    if results.len() != targets.len() {
        return Err(Error::InvalidState(format!("{} episodes but {} target boxes", results.len(), targets.len())));
    }
    Ok(())
}

/// Fraction of episodes whose final estimate has IoU strictly above `tau`.
pub fn accuracy_at(results: &[EpisodeResult], targets: &[crate::geometry::RegionBox], tau: f64) -> Result<f64> {
    check_pairs(results, targets)?;
    let hits = results
        .iter()
        .zip(targets)
        .filter(|(r, t)| r.final_estimate().is_some_and(|e| iou(&e, t) > tau))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

/// Mean rounds used across episodes run with early stopping. All episodes must share T.
pub fn communicative_efficiency(results: &[EpisodeResult]) -> Result<f64> {
    let first = results.first().ok_or_else(|| Error::InvalidState("no episodes to score".into()))?;
    if let Some(r) = results.iter().find(|r| r.rounds != first.rounds) {
        return Err(Error::InvalidState(format!("mixed T: {} and {}", first.rounds, r.rounds)));
    }
    Ok(results.iter().map(|r| r.rounds_used as f64).sum::<f64>() / results.len() as f64)
}

/// Fraction of episodes whose accumulated candidates include some region with IoU above `tau`.
pub fn oracle_upper_bound(results: &[EpisodeResult], targets: &[crate::geometry::RegionBox], tau: f64) -> Result<f64> {
    check_pairs(results, targets)?;
    let hits = results
        .iter()
        .zip(targets)
        .filter(|(r, t)| r.candidates.iter().any(|c| iou(c, t) > tau))
        .count();
    Ok(hits as f64 / results.len() as f64)
}

/// Whether a grasp lands within [`GRASP_SUCCESS_RADIUS_M`] of the target's centroid and above the table.
pub fn grasp_hits_target(g: &GraspTarget, scene: &Scene) -> bool {
    g.distance_to(scene.target().centroid(scene.table_z)) <= GRASP_SUCCESS_RADIUS_M && g.z > scene.table_z
}

/// Runs the grasp pipeline on `region` and scores it against the scene's target.
pub fn grasp_success(cloud: &PointCloud, scene: &Scene, region: &crate::geometry::RegionBox, params: &RansacParams) -> bool {
    grasp_target(cloud, region, params).is_ok_and(|g| grasp_hits_target(&g, scene))
}
