//! The synthetic tabletop world: scenes, objects, descriptors, point clouds
//! and the dialogue dataset format.

mod cloud;
mod dataset;
mod generate;
mod lexicon;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{iou, RegionBox};

pub use cloud::{render_point_cloud, render_point_cloud_with, PointCloud, RenderOptions, METERS_PER_PIXEL};
pub use dataset::{load_dataset, save_dataset, validate_record, DatasetRecord};
pub use generate::{generate_scene, generate_task, GeneratorConfig, Split, Task};
pub use lexicon::{
    default_lexicon, default_novel_categories, normalize_utterance, CategorySpec, IntentSpec, Lexicon,
};

/// Minimum IoU for a region to be read as referring to an object.
pub const REFERENT_MIN_IOU: f64 = 0.1;

/// Attribute names tried, in order, when building a distinguishing descriptor.
pub const ATTRIBUTE_ORDER: [&str; 2] = ["color", "size"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectSpec {
    pub id: String,
    pub category: String,
    pub attributes: BTreeMap<String, String>,
    pub affordances: BTreeSet<String>,
    #[serde(rename = "box")]
    pub bbox: RegionBox,
    pub height_m: f64,
}

impl ObjectSpec {
    pub fn satisfies(&self, intent: &str) -> bool {
        self.affordances.contains(intent)
    }

    /// True 3D centroid of the object's solid, in meters.
    pub fn centroid(&self, table_z: f64) -> [f64; 3] {
        let (cx, cy) = self.bbox.center();
        [cx * METERS_PER_PIXEL, cy * METERS_PER_PIXEL, table_z + self.height_m / 2.0]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub value: String,
}

/// A structured reference to objects: a category, optionally narrowed by one attribute.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Descriptor {
    pub category: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attribute: Option<Attribute>,
}

impl Descriptor {
    pub fn category(category: impl Into<String>) -> Self {
        Descriptor { category: category.into(), attribute: None }
    }

    pub fn with(category: impl Into<String>, name: impl Into<String>, value: impl Into<String>) -> Self {
        Descriptor {
            category: category.into(),
            attribute: Some(Attribute { name: name.into(), value: value.into() }),
        }
    }

    pub fn matches(&self, obj: &ObjectSpec) -> bool {
        obj.category == self.category
            && self
                .attribute
                .as_ref()
                .is_none_or(|a| obj.attributes.get(&a.name) == Some(&a.value))
    }
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.attribute {
            Some(a) => write!(f, "{} {}", a.value, self.category),
            None => f.write_str(&self.category),
        }
    }
}

/// Shortest descriptor singling out `obj` among `others` (which may include `obj`).
///
/// Category alone when unique; otherwise the first attribute in
/// [`ATTRIBUTE_ORDER`] (then any remaining attribute name) whose value no
/// same-category object shares. When nothing is unique, the attribute leaving
/// the fewest look-alikes wins.
pub fn minimal_descriptor<'a>(obj: &ObjectSpec, others: impl IntoIterator<Item = &'a ObjectSpec>) -> Descriptor {
    let rivals: Vec<&ObjectSpec> = others
        .into_iter()
        .filter(|o| o.id != obj.id && o.category == obj.category)
        .collect();
    if rivals.is_empty() {
        return Descriptor::category(&obj.category);
    }
    let mut names: Vec<&str> = ATTRIBUTE_ORDER.to_vec();
    names.extend(obj.attributes.keys().map(String::as_str).filter(|k| !ATTRIBUTE_ORDER.contains(k)));
    let mut best: Option<(usize, &str)> = None;
    for name in names {
        let Some(value) = obj.attributes.get(name) else { continue };
        let clashes = rivals.iter().filter(|r| r.attributes.get(name) == Some(value)).count();
        if best.is_none_or(|(c, _)| clashes < c) {
            best = Some((clashes, name));
        }
        if clashes == 0 {
            break;
        }
    }
    match best {
        Some((_, name)) => Descriptor::with(&obj.category, name, &obj.attributes[name]),
        None => Descriptor::category(&obj.category),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scene {
    pub id: String,
    pub width: u32,
    pub height: u32,
    pub objects: Vec<ObjectSpec>,
    pub target_id: String,
    pub table_z: f64,
    pub clutter_mode: bool,
}

impl Scene {
    pub fn object(&self, id: &str) -> Option<&ObjectSpec> {
        self.objects.iter().find(|o| o.id == id)
    }

    pub fn target(&self) -> &ObjectSpec {
        self.object(&self.target_id).expect("validated scene has its target")
    }

    pub fn target_box(&self) -> RegionBox {
        self.target().bbox
    }

    /// Object a region refers to: highest IoU above [`REFERENT_MIN_IOU`], earliest on ties.
    pub fn resolve(&self, region: &RegionBox) -> Option<&ObjectSpec> {
        let mut best: Option<(f64, &ObjectSpec)> = None;
        for o in &self.objects {
            let v = iou(region, &o.bbox);
            if v > REFERENT_MIN_IOU && best.is_none_or(|(b, _)| v > b) {
                best = Some((v, o));
            }
        }
        best.map(|(_, o)| o)
    }

    pub fn objects_satisfying<'a>(&'a self, intent: &'a str) -> impl Iterator<Item = &'a ObjectSpec> + 'a {
        self.objects.iter().filter(move |o| o.satisfies(intent))
    }

    /// Descriptor a human would use for the object, distinguishing it among the whole scene.
    pub fn canonical_descriptor(&self, obj: &ObjectSpec) -> Descriptor {
        minimal_descriptor(obj, &self.objects)
    }

    /// Distinct canonical descriptors in object order: the correction vocabulary.
    pub fn correction_descriptors(&self) -> Vec<Descriptor> {
        let mut out: Vec<Descriptor> = Vec::new();
        for o in &self.objects {
            let d = self.canonical_descriptor(o);
            if !out.contains(&d) {
                out.push(d);
            }
        }
        out
    }

    /// Every descriptor string that could refer to some object, for text parsing.
    pub fn descriptor_vocabulary(&self) -> Vec<Descriptor> {
        let mut out: Vec<Descriptor> = Vec::new();
        for o in &self.objects {
            let mut ds = vec![Descriptor::category(&o.category)];
            for (k, v) in &o.attributes {
                ds.push(Descriptor::with(&o.category, k, v));
            }
            for d in ds {
                if !out.contains(&d) {
                    out.push(d);
                }
            }
        }
        out
    }

    /// Objects drawn over `obj` from the top-down camera: overlapping and taller
    /// (or equally tall and later in the list).
    pub fn occluders<'a>(&'a self, obj: &'a ObjectSpec) -> impl Iterator<Item = &'a ObjectSpec> + 'a {
        let idx = self.objects.iter().position(|o| o.id == obj.id).unwrap_or(usize::MAX);
        self.objects.iter().enumerate().filter_map(move |(i, o)| {
            let above = o.height_m > obj.height_m || (o.height_m == obj.height_m && i > idx);
            (o.id != obj.id && above && o.bbox.intersects(&obj.bbox)).then_some(o)
        })
    }

    /// Bounding box of the object's unoccluded pixels, or `None` if fully hidden.
    pub fn visible_extent(&self, obj: &ObjectSpec) -> Option<RegionBox> {
        let occluders: Vec<&ObjectSpec> = self.occluders(obj).collect();
        if occluders.is_empty() {
            return Some(obj.bbox);
        }
        let (fu, fv) = obj.bbox.pixel_range(self.width, self.height);
        let (mut umin, mut vmin, mut umax, mut vmax) = (u32::MAX, u32::MAX, 0, 0);
        let mut any = false;
        for v in fv.clone() {
            for u in fu.clone() {
                if occluders.iter().any(|o| o.bbox.contains_pixel(u, v)) {
                    continue;
                }
                any = true;
                umin = umin.min(u);
                vmin = vmin.min(v);
                umax = umax.max(u);
                vmax = vmax.max(v);
            }
        }
        if !any {
            return None;
        }
        // Keep the true sub-pixel edge wherever the extent reaches it.
        let x1 = if umin == fu.start { obj.bbox.x1 } else { umin as f64 };
        let y1 = if vmin == fv.start { obj.bbox.y1 } else { vmin as f64 };
        let x2 = if umax + 1 == fu.end { obj.bbox.x2 } else { (umax + 1) as f64 };
        let y2 = if vmax + 1 == fv.end { obj.bbox.y2 } else { (vmax + 1) as f64 };
        Some(RegionBox { x1, y1, x2, y2 })
    }

    /// Checks the structural invariants of a scene.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScene(m));
        if self.width == 0 || self.height == 0 {
            return bad("zero image dimension".into());
        }
        let mut ids = BTreeSet::new();
        for o in &self.objects {
            if !ids.insert(o.id.as_str()) {
                return bad(format!("duplicate object id {:?}", o.id));
            }
            if !o.bbox.within(self.width as f64, self.height as f64) {
                return bad(format!("object {:?} box {} outside the image", o.id, o.bbox));
            }
            if o.affordances.is_empty() {
                return bad(format!("object {:?} has no affordances", o.id));
            }
            if !(o.height_m.is_finite() && o.height_m > 0.0) {
                return bad(format!("object {:?} has non-positive height", o.id));
            }
        }
        if self.object(&self.target_id).is_none() {
            return bad(format!("target {:?} is not an object of the scene", self.target_id));
        }
        if !self.clutter_mode {
            for (i, a) in self.objects.iter().enumerate() {
                for b in &self.objects[i + 1..] {
                    if iou(&a.bbox, &b.bbox) > 0.05 {
                        return bad(format!("objects {:?} and {:?} overlap outside clutter mode", a.id, b.id));
                    }
                }
            }
        }
        Ok(())
    }
}
