//! Orthographic top-down point clouds aligned with the scene's pixel grid.
//!
//! Serialized as JSON `{"width", "height", "points": [[x, y, z, u, v], ...]}`
//! with metric coordinates and integer pixel indices.

use rand::seq::SliceRandom;
use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Scene;

/// Metric size of one pixel on the table plane.
pub const METERS_PER_PIXEL: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    pub noise_sigma: f64,
    /// Grid spacing in pixels for both plane and object samples.
    pub step_px: u32,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions { noise_sigma: 0.0, step_px: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub width: u32,
    pub height: u32,
    pub points: Vec<[f64; 3]>,
    pub pixel_map: Vec<[u32; 2]>,
}

impl PointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn translated(&self, by: [f64; 3]) -> PointCloud {
        PointCloud {
            points: self.points.iter().map(|p| [p[0] + by[0], p[1] + by[1], p[2] + by[2]]).collect(),
            ..self.clone()
        }
    }
}

#[derive(Serialize, Deserialize)]
struct FlatCloud {
    width: u32,
    height: u32,
    points: Vec<[f64; 5]>,
}

impl Serialize for PointCloud {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        FlatCloud {
            width: self.width,
            height: self.height,
            points: self
                .points
                .iter()
                .zip(&self.pixel_map)
                .map(|(p, m)| [p[0], p[1], p[2], m[0] as f64, m[1] as f64])
                .collect(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for PointCloud {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let flat = FlatCloud::deserialize(d)?;
        let mut cloud = PointCloud { width: flat.width, height: flat.height, ..Default::default() };
        for p in flat.points {
            let (u, v) = (p[3], p[4]);
            if u < 0.0 || v < 0.0 || u >= flat.width as f64 || v >= flat.height as f64 || u.fract() != 0.0 || v.fract() != 0.0 {
                return Err(serde::de::Error::custom(format!("pixel ({u}, {v}) outside the image")));
            }
            cloud.points.push([p[0], p[1], p[2]]);
            cloud.pixel_map.push([u as u32, v as u32]);
        }
        Ok(cloud)
    }
}

pub fn render_point_cloud(scene: &Scene, noise_sigma: f64, rng: &mut dyn RngCore) -> PointCloud {
    render_point_cloud_with(scene, &RenderOptions { noise_sigma, ..Default::default() }, rng)
}

/// Table points on every grid pixel not covered by an object, plus for each
/// object one point per covered grid pixel with heights stratified over
/// `(table_z, table_z + height_m]`.
pub fn render_point_cloud_with(scene: &Scene, opts: &RenderOptions, rng: &mut dyn RngCore) -> PointCloud {
    assert!(opts.noise_sigma >= 0.0, "noise_sigma must be nonnegative");
    let step = opts.step_px.max(1);
    let mut cloud = PointCloud { width: scene.width, height: scene.height, ..Default::default() };
    let center = |u: u32, v: u32| ((u as f64 + 0.5) * METERS_PER_PIXEL, (v as f64 + 0.5) * METERS_PER_PIXEL);

    for v in (0..scene.height).step_by(step as usize) {
        for u in (0..scene.width).step_by(step as usize) {
            if scene.objects.iter().any(|o| o.bbox.contains_pixel(u, v)) {
                continue;
            }
            let (x, y) = center(u, v);
            cloud.points.push([x, y, scene.table_z]);
            cloud.pixel_map.push([u, v]);
        }
    }

    for obj in &scene.objects {
        let (us, vs) = obj.bbox.pixel_range(scene.width, scene.height);
        let pixels: Vec<(u32, u32)> = vs
            .flat_map(|v| us.clone().map(move |u| (u, v)))
            .filter(|(u, v)| u % step == 0 && v % step == 0)
            .collect();
        let n = pixels.len();
        let mut levels: Vec<usize> = (1..=n).collect();
        levels.shuffle(rng);
        for ((u, v), k) in pixels.into_iter().zip(levels) {
            let (x, y) = center(u, v);
            cloud.points.push([x, y, scene.table_z + obj.height_m * k as f64 / n as f64]);
            cloud.pixel_map.push([u, v]);
        }
    }

    if opts.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, opts.noise_sigma).expect("finite sigma");
        for p in &mut cloud.points {
            for c in p.iter_mut() {
                *c += normal.sample(rng);
            }
        }
    }
    cloud
}
