//! 3D grasp point from a selected region: segment, drop the table plane, average.

use nalgebra::{Matrix3, Vector3};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::RegionBox;
use crate::world::PointCloud;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneModel {
    /// Unit normal, oriented with a nonnegative z component.
    pub normal: [f64; 3],
    /// Offset such that `normal · p + d = 0` on the plane.
    pub d: f64,
    pub inlier_count: usize,
}

impl PlaneModel {
    pub fn distance(&self, p: &[f64; 3]) -> f64 {
        (self.normal[0] * p[0] + self.normal[1] * p[1] + self.normal[2] * p[2] + self.d).abs()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub iterations: usize,
    /// Meters.
    pub inlier_tol: f64,
    pub min_remaining: usize,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        RansacParams { iterations: 200, inlier_tol: 0.005, min_remaining: 10, seed: 0 }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidHyperparameter("RANSAC needs at least one iteration".into()));
        }
        if !(self.inlier_tol > 0.0 && self.inlier_tol.is_finite()) {
            return Err(Error::InvalidHyperparameter("inlier_tol must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GraspTarget {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub points_used: usize,
}

impl GraspTarget {
    pub fn distance_to(&self, p: [f64; 3]) -> f64 {
        ((self.x - p[0]).powi(2) + (self.y - p[1]).powi(2) + (self.z - p[2]).powi(2)).sqrt()
    }
}

/// Points whose source pixel lies inside `region` (half-open, tested at the pixel center).
pub fn segment_region_points(cloud: &PointCloud, region: &RegionBox) -> Vec<[f64; 3]> {
    cloud
        .points
        .iter()
        .zip(&cloud.pixel_map)
        .filter(|(_, m)| region.contains_pixel(m[0], m[1]))
        .map(|(p, _)| *p)
        .collect()
}

fn plane_through(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> Option<([f64; 3], f64)> {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [u[1] * v[2] - u[2] * v[1], u[2] * v[0] - u[0] * v[2], u[0] * v[1] - u[1] * v[0]];
    let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
    if len < 1e-12 {
        return None;
    }
    let s = if n[2] < 0.0 { -1.0 / len } else { 1.0 / len };
    let n = [n[0] * s, n[1] * s, n[2] * s];
    Some((n, -(n[0] * a[0] + n[1] * a[1] + n[2] * a[2])))
}

const REFIT_ROUNDS: usize = 20;

/// Least-squares plane through `points`: their mean and the direction of least spread.
fn fit_plane(points: &[[f64; 3]]) -> Option<([f64; 3], f64)> {
    let c = centroid(points)?;
    let mut cov = Matrix3::zeros();
    for p in points {
        let v = Vector3::new(p[0] - c[0], p[1] - c[1], p[2] - c[2]);
        cov += v * v.transpose();
    }
    let eig = cov.symmetric_eigen();
    let n = eig.eigenvectors.column(eig.eigenvalues.imin()).into_owned();
    let len = n.norm();
    if !(len > 0.0 && len.is_finite()) {
        return None;
    }
    let s = if n[2] < 0.0 { -1.0 / len } else { 1.0 / len };
    let n = [n[0] * s, n[1] * s, n[2] * s];
    Some((n, -(n[0] * c[0] + n[1] * c[1] + n[2] * c[2])))
}

/// Three-point RANSAC. The first hypothesis with the most inliers is then
/// refit by least squares to its consensus set until the set stops changing.
///
/// Points of an object standing on the plane sit inside the tolerance band near
/// its base, so the raw best-count hypothesis drifts upward off the table; the
/// refit pulls it back.
pub fn ransac_plane(points: &[[f64; 3]], params: &RansacParams) -> Result<(PlaneModel, Vec<bool>)> {
    params.validate()?;
    if points.len() < 3 {
        return Err(Error::DegenerateGeometry(format!("{} points cannot define a plane", points.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut best: Option<PlaneModel> = None;
    for _ in 0..params.iterations {
        let idx = sample(&mut rng, points.len(), 3);
        let Some((normal, d)) = plane_through(&points[idx.index(0)], &points[idx.index(1)], &points[idx.index(2)])
        else {
            continue;
        };
        let mut m = PlaneModel { normal, d, inlier_count: 0 };
        m.inlier_count = points.iter().filter(|p| m.distance(p) <= params.inlier_tol).count();
        if best.is_none_or(|b| m.inlier_count > b.inlier_count) {
            best = Some(m);
        }
    }
    let mut plane = best.ok_or_else(|| {
        Error::DegenerateGeometry(format!("every sample was collinear after {} iterations", params.iterations))
    })?;
    let mut mask: Vec<bool> = points.iter().map(|p| plane.distance(p) <= params.inlier_tol).collect();
    for _ in 0..REFIT_ROUNDS {
        let consensus: Vec<[f64; 3]> = points.iter().zip(&mask).filter(|(_, m)| **m).map(|(p, _)| *p).collect();
        let Some((normal, d)) = fit_plane(&consensus) else { break };
        let refit = PlaneModel { normal, d, inlier_count: 0 };
        let next: Vec<bool> = points.iter().map(|p| refit.distance(p) <= params.inlier_tol).collect();
        let count = next.iter().filter(|m| **m).count();
        if count < 3 {
            break;
        }
        plane = PlaneModel { inlier_count: count, ..refit };
        if next == mask {
            break;
        }
        mask = next;
    }
    let mask = points.iter().map(|p| plane.distance(p) <= params.inlier_tol).collect();
    Ok((plane, mask))
}

/// Mean of the given points.
pub fn centroid(points: &[[f64; 3]]) -> Option<[f64; 3]> {
    if points.is_empty() {
        return None;
    }
    let n = points.len() as f64;
    let s = points.iter().fold([0.0; 3], |a, p| [a[0] + p[0], a[1] + p[1], a[2] + p[2]]);
    Some([s[0] / n, s[1] / n, s[2] / n])
}

pub fn grasp_target(cloud: &PointCloud, region: &RegionBox, params: &RansacParams) -> Result<GraspTarget> {
    let seg = segment_region_points(cloud, region);
    if seg.is_empty() {
        return Err(Error::EmptyRegion);
    }
    let (_, inliers) = ransac_plane(&seg, params)?;
    let rest: Vec<[f64; 3]> = seg.iter().zip(&inliers).filter(|(_, i)| !**i).map(|(p, _)| *p).collect();
    if rest.len() < params.min_remaining {
        return Err(Error::ObjectNotFound { remaining: rest.len(), required: params.min_remaining });
    }
    let c = centroid(&rest).expect("nonempty");
    Ok(GraspTarget { x: c[0], y: c[1], z: c[2], points_used: rest.len() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::world::fixtures::*;
    use crate::world::{render_point_cloud, render_point_cloud_with, RenderOptions, METERS_PER_PIXEL};
    use proptest::prelude::*;
    use rand::Rng;

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> RegionBox {
        RegionBox::new(x1, y1, x2, y2).unwrap()
    }

    fn cube_scene() -> crate::world::Scene {
        // 40 x 40 px footprint centered on (300, 200) px = (0.3, 0.2) m, 0.04 m tall.
        let mut cube = object("o0", "sponge", "yellow", "cleaning", [280.0, 180.0, 320.0, 220.0]);
        cube.height_m = 0.04;
        scene(vec![cube], "o0")
    }

    fn cloud(s: &crate::world::Scene, sigma: f64, seed: u64) -> PointCloud {
        render_point_cloud_with(s, &RenderOptions { noise_sigma: sigma, step_px: 1 }, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn full_box_segments_everything() {
        let s = cube_scene();
        let c = render_point_cloud(&s, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(segment_region_points(&c, &b(0.0, 0.0, 640.0, 480.0)).len(), c.len());
    }

    #[test]
    fn bare_table_segment_is_flat() {
        let s = cube_scene();
        let c = cloud(&s, 0.0, 0);
        let seg = segment_region_points(&c, &b(400.0, 300.0, 450.0, 350.0));
        assert_eq!(seg.len(), 2500);
        assert!(seg.iter().all(|p| p[2] == 0.0));
    }

    #[test]
    fn half_box_matches_pixel_membership() {
        let s = cube_scene();
        let c = cloud(&s, 0.0, 0);
        let half = b(260.5, 170.0, 300.5, 240.0);
        let brute = c
            .pixel_map
            .iter()
            .filter(|m| {
                let (x, y) = (m[0] as f64 + 0.5, m[1] as f64 + 0.5);
                (260.5..300.5).contains(&x) && (170.0..240.0).contains(&y)
            })
            .count();
        assert_eq!(segment_region_points(&c, &half).len(), brute);
        assert_eq!(brute, 40 * 70);
    }

    #[test]
    fn flat_points_give_the_table_plane() {
        let mut r = ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<[f64; 3]> = (0..500).map(|_| [r.random::<f64>(), r.random::<f64>(), 0.0]).collect();
        let (plane, mask) = ransac_plane(&pts, &RansacParams::default()).unwrap();
        assert!((plane.normal[2].abs() - 1.0).abs() < 1e-6);
        assert!(plane.d.abs() < 1e-6);
        assert!(mask.iter().all(|m| *m));
        assert_eq!(plane.inlier_count, 500);
    }

    #[test]
    fn raised_outliers_are_excluded() {
        let mut r = ChaCha8Rng::seed_from_u64(2);
        let mut pts: Vec<[f64; 3]> = (0..1000).map(|_| [r.random::<f64>(), r.random::<f64>(), 0.0]).collect();
        pts.extend((0..10).map(|_| [r.random::<f64>(), r.random::<f64>(), 0.05]));
        let (plane, mask) = ransac_plane(&pts, &RansacParams::default()).unwrap();
        // Exhaustive residual check against the returned model.
        for (p, m) in pts.iter().zip(&mask) {
            assert_eq!(*m, plane.distance(p) <= 0.005);
        }
        assert!(mask[..1000].iter().all(|m| *m));
        assert!(mask[1000..].iter().all(|m| !*m));
    }

    #[test]
    fn too_few_or_collinear_points_are_degenerate() {
        let two = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
        assert!(matches!(ransac_plane(&two, &RansacParams::default()), Err(Error::DegenerateGeometry(_))));
        let line: Vec<[f64; 3]> = (0..20).map(|i| [i as f64, 0.0, 0.0]).collect();
        assert!(matches!(ransac_plane(&line, &RansacParams::default()), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn mean_of_three_points() {
        assert_eq!(centroid(&[[0.0, 0.0, 1.0], [2.0, 0.0, 1.0], [1.0, 3.0, 1.0]]), Some([1.0, 1.0, 1.0]));
    }

    #[test]
    fn cube_grasp_is_its_raised_point_mean() {
        let s = cube_scene();
        let c = cloud(&s, 0.0, 5);
        let region = b(270.0, 170.0, 330.0, 230.0);
        let g = grasp_target(&c, &region, &RansacParams::default()).unwrap();
        // Oracle: mean of the generated object points above the inlier band.
        let raised: Vec<[f64; 3]> = segment_region_points(&c, &region).into_iter().filter(|p| p[2] > 0.005).collect();
        let want = centroid(&raised).unwrap();
        assert!(g.points_used.abs_diff(raised.len()) <= raised.len() / 20, "{} vs {}", g.points_used, raised.len());
        assert!(g.distance_to(want) < 1e-3, "{g:?} vs {want:?}");
        assert!((g.x - 0.3).abs() < 1e-3 && (g.y - 0.2).abs() < 1e-3);
        // Uniform heights over (0.005, 0.04] average 0.0225.
        assert!((g.z - 0.0225).abs() < 1e-3, "{}", g.z);
        assert!((300.0 * METERS_PER_PIXEL - g.x).abs() < 1e-3);
    }

    #[test]
    fn bare_table_has_no_object() {
        let s = cube_scene();
        let c = cloud(&s, 0.0, 0);
        let err = grasp_target(&c, &b(400.0, 300.0, 450.0, 350.0), &RansacParams::default()).unwrap_err();
        assert!(matches!(err, Error::ObjectNotFound { remaining: 0, required: 10 }));
        let off = b(0.0, 0.0, 1.0, 1.0);
        let sparse = render_point_cloud(&s, 0.0, &mut ChaCha8Rng::seed_from_u64(0));
        assert!(matches!(grasp_target(&sparse, &b(1.0, 1.0, 2.0, 2.0), &RansacParams::default()), Err(Error::EmptyRegion)));
        assert!(grasp_target(&c, &off, &RansacParams::default()).is_err());
    }

    /// A 60 x 60 mm noisy table patch with a 40 x 40 mm block standing on it;
    /// block points start above the tolerance band so every label is recoverable.
    fn labeled_cloud(seed: u64, sigma: f64) -> (Vec<[f64; 3]>, Vec<bool>) {
        let mut r = ChaCha8Rng::seed_from_u64(seed);
        let noise = rand_distr::Normal::new(0.0, sigma).unwrap();
        let (mut pts, mut is_plane) = (Vec::new(), Vec::new());
        for i in 0..60 {
            for j in 0..60 {
                let (x, y) = (i as f64 * 0.001, j as f64 * 0.001);
                let block = (10..50).contains(&i) && (10..50).contains(&j);
                let z = if block { r.random_range(0.015..0.06) } else { 0.0 };
                pts.push([x + r.sample(noise), y + r.sample(noise), z + r.sample(noise)]);
                is_plane.push(!block);
            }
        }
        (pts, is_plane)
    }

    #[test]
    fn labeled_cloud_recall_and_precision() {
        for seed in 0..100u64 {
            let (pts, is_plane) = labeled_cloud(seed, 0.005 / 3.0);
            let (_, mask) = ransac_plane(&pts, &RansacParams { seed, ..Default::default() }).unwrap();
            let table = is_plane.iter().filter(|l| **l).count();
            let found = is_plane.iter().zip(&mask).filter(|(l, m)| **l && **m).count();
            assert!(found as f64 / table as f64 >= 0.99, "seed {seed}: recall {found}/{table}");
            let kept: Vec<bool> = is_plane.iter().zip(&mask).filter(|(_, m)| !**m).map(|(l, _)| *l).collect();
            let wrong = kept.iter().filter(|l| **l).count();
            assert!(1.0 - wrong as f64 / kept.len() as f64 >= 0.99, "seed {seed}: precision {wrong}/{}", kept.len());
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn translation_moves_the_target(dx in -1.0f64..1.0, dy in -1.0f64..1.0, dz in -1.0f64..1.0, seed in 0u64..50) {
            let s = cube_scene();
            let c = cloud(&s, 0.001, seed);
            let region = b(260.0, 160.0, 340.0, 240.0);
            let p = RansacParams { seed, ..Default::default() };
            let g = grasp_target(&c, &region, &p).unwrap();
            let t = grasp_target(&c.translated([dx, dy, dz]), &region, &p).unwrap();
            prop_assert!((t.x - g.x - dx).abs() < 1e-9 && (t.y - g.y - dy).abs() < 1e-9 && (t.z - g.z - dz).abs() < 1e-9);
            prop_assert_eq!(t.points_used, g.points_used);
        }

        #[test]
        fn plane_removal_keeps_far_points(seed in 0u64..200) {
            let s = cube_scene();
            let c = cloud(&s, 0.001, seed);
            let seg = segment_region_points(&c, &b(250.0, 150.0, 350.0, 250.0));
            let p = RansacParams { seed, ..Default::default() };
            let (plane, mask) = ransac_plane(&seg, &p).unwrap();
            for (pt, m) in seg.iter().zip(&mask) {
                if plane.distance(pt) > p.inlier_tol {
                    prop_assert!(!*m);
                }
            }
            prop_assert_eq!(ransac_plane(&seg, &p).unwrap().1, mask);
        }
    }
}
