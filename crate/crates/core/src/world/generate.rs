//! Seeded scene generation for the seen, unseen and cluttered splits.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{default_novel_categories, CategorySpec, Lexicon, ObjectSpec, Scene};
use crate::error::{Error, Result};
use crate::geometry::{iou, RegionBox};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Seen,
    Unseen,
    Cluttered,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Seen, Split::Unseen, Split::Cluttered];

    pub fn name(&self) -> &'static str {
        match self {
            Split::Seen => "seen",
            Split::Unseen => "unseen",
            Split::Cluttered => "cluttered",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        Split::ALL.into_iter().find(|x| x.name() == s)
    }
}

/// Side-length ranges in pixels for the `size` attribute.
pub const SIZE_CLASSES: [(&str, f64, f64); 3] = [("small", 45.0, 65.0), ("medium", 65.0, 90.0), ("large", 90.0, 125.0)];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub width: u32,
    pub height: u32,
    /// Inclusive range of objects per scene.
    pub object_count: (usize, usize),
    /// Probability that a scene has more than one object satisfying the intent.
    pub ambiguous_rate: f64,
    /// Inclusive range of intent-satisfying objects in an ambiguous scene.
    pub matching_count: (usize, usize),
    pub clutter_mode: bool,
    /// Largest pairwise IoU allowed in clutter mode.
    pub max_pair_iou: f64,
    /// Minimum free space between boxes outside clutter mode.
    pub min_gap_px: f64,
    pub edge_margin_px: f64,
    /// Area objects are placed in; the whole image (minus margin) when absent.
    pub placement_region: Option<RegionBox>,
    /// Categories never generated.
    pub holdout: BTreeSet<String>,
    /// When set, the target's category is drawn from this set.
    pub target_categories: Option<BTreeSet<String>>,
    pub max_placement_attempts: usize,
    pub id_prefix: String,
    pub lexicon: Lexicon,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig {
            width: 640,
            height: 480,
            object_count: (4, 7),
            ambiguous_rate: 0.6,
            matching_count: (2, 4),
            clutter_mode: false,
            max_pair_iou: 0.5,
            min_gap_px: 10.0,
            edge_margin_px: 10.0,
            placement_region: None,
            holdout: BTreeSet::new(),
            target_categories: None,
            max_placement_attempts: 500,
            id_prefix: "scene".into(),
            lexicon: Lexicon::default(),
        }
    }
}

impl GeneratorConfig {
    /// Generator settings for a benchmark split.
    ///
    /// Seen scenes never contain the novel categories; unseen scenes always
    /// target one; cluttered scenes are denser seen scenes with overlap.
    pub fn for_split(split: Split) -> Self {
        let novel = default_novel_categories();
        let base = GeneratorConfig { id_prefix: split.name().into(), ..Default::default() };
        match split {
            Split::Seen => GeneratorConfig { holdout: novel, ..base },
            Split::Unseen => GeneratorConfig { target_categories: Some(novel), ..base },
            Split::Cluttered => GeneratorConfig {
                holdout: novel,
                clutter_mode: true,
                object_count: (7, 10),
                placement_region: Some(RegionBox { x1: 120.0, y1: 90.0, x2: 520.0, y2: 390.0 }),
                ..base
            },
        }
    }

    pub fn ambiguous(mut self) -> Self {
        self.ambiguous_rate = 1.0;
        self
    }
}

/// A generated scene together with the intention-oriented utterance that opens its dialogue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub scene: Scene,
    pub intent: String,
    pub utterance: String,
}

pub fn generate_scene(config: &GeneratorConfig, seed: u64) -> Result<Scene> {
    generate_task(config, seed).map(|t| t.scene)
}

struct Draft {
    category: String,
    color: String,
    size: &'static str,
    affordances: BTreeSet<String>,
    w: f64,
    h: f64,
    height_m: f64,
    is_target: bool,
}

pub fn generate_task(config: &GeneratorConfig, seed: u64) -> Result<Task> {
    let gen = |m: String| Error::Generation(m);
    config.lexicon.validate().map_err(gen)?;
    let (lo, hi) = config.object_count;
    if lo == 0 || lo > hi {
        return Err(gen(format!("invalid object count range {lo}..={hi}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = &config.lexicon;
    let allowed: Vec<&CategorySpec> = lex.categories.iter().filter(|c| !config.holdout.contains(&c.name)).collect();
    if allowed.is_empty() {
        return Err(gen("every category is held out".into()));
    }
    let target_ok =
        |c: &CategorySpec| config.target_categories.as_ref().is_none_or(|set| set.contains(&c.name));

    let intents: Vec<_> = lex
        .intents
        .iter()
        .filter(|i| allowed.iter().any(|c| c.affordances.contains_key(&i.tag) && target_ok(c)))
        .collect();
    let intent = *intents.choose(&mut rng).ok_or_else(|| gen("no intent has an eligible target category".into()))?;
    let utterance = intent.templates.choose(&mut rng).expect("validated").clone();

    let ambiguous = rng.random::<f64>() < config.ambiguous_rate;
    let matching = if ambiguous {
        let (a, b) = config.matching_count;
        rng.random_range(a.max(2)..=b.max(a.max(2)))
    } else {
        1
    };
    let total = rng.random_range(lo..=hi).max(matching);

    let matching_cats: Vec<&CategorySpec> =
        allowed.iter().copied().filter(|c| c.affordances.contains_key(&intent.tag)).collect();
    let other_cats: Vec<&CategorySpec> =
        allowed.iter().copied().filter(|c| !c.affordances.contains_key(&intent.tag)).collect();
    let target_cats: Vec<&CategorySpec> = matching_cats.iter().copied().filter(|c| target_ok(c)).collect();

    let mut used: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    let mut drafts = Vec::with_capacity(total);
    drafts.push(draft(&mut rng, &target_cats, &mut used, true).ok_or_else(|| gen("no target category".into()))?);
    for _ in 1..matching {
        let d = draft(&mut rng, &matching_cats, &mut used, false)
            .ok_or_else(|| gen(format!("too few distinct {:?} objects for an ambiguous scene", intent.tag)))?;
        drafts.push(d);
    }
    for _ in matching..total {
        match draft(&mut rng, &other_cats, &mut used, false) {
            Some(d) => drafts.push(d),
            None => break,
        }
    }
    drafts.shuffle(&mut rng);

    let placed = place(config, &drafts, &mut rng)?;
    let mut objects = Vec::with_capacity(drafts.len());
    let mut target_id = String::new();
    for (i, (d, bbox)) in drafts.iter().zip(placed).enumerate() {
        let id = format!("o{i}");
        if d.is_target {
            target_id = id.clone();
        }
        objects.push(ObjectSpec {
            id,
            category: d.category.clone(),
            attributes: [("color".to_string(), d.color.clone()), ("size".to_string(), d.size.to_string())]
                .into_iter()
                .collect(),
            affordances: d.affordances.clone(),
            bbox,
            height_m: d.height_m,
        });
    }
    let scene = Scene {
        id: format!("{}-{seed}", config.id_prefix),
        width: config.width,
        height: config.height,
        objects,
        target_id,
        table_z: 0.0,
        clutter_mode: config.clutter_mode,
    };
    scene.validate()?;
    Ok(Task { scene, intent: intent.tag.clone(), utterance })
}

/// Draws a category and a color not yet used for that category in the scene.
fn draft(
    rng: &mut ChaCha8Rng,
    cats: &[&CategorySpec],
    used: &mut BTreeMap<String, BTreeSet<String>>,
    is_target: bool,
) -> Option<Draft> {
    let open: Vec<&CategorySpec> = cats
        .iter()
        .copied()
        .filter(|c| c.colors.iter().any(|col| !used.get(&c.name).is_some_and(|u| u.contains(col))))
        .collect();
    let cat = *open.choose(rng)?;
    let taken = used.entry(cat.name.clone()).or_default();
    let colors: Vec<&String> = cat.colors.iter().filter(|c| !taken.contains(*c)).collect();
    let color = (*colors.choose(rng)?).clone();
    taken.insert(color.clone());
    let (size, smin, smax) = *SIZE_CLASSES.choose(rng).expect("nonempty");
    let side = rng.random_range(smin..smax);
    let aspect: f64 = rng.random_range(0.8..1.25);
    let (hmin, hmax) = cat.height_range_m;
    Some(Draft {
        category: cat.name.clone(),
        color,
        size,
        affordances: cat.affordances.keys().cloned().collect(),
        w: (side * aspect).round(),
        h: (side / aspect).round(),
        height_m: if hmax > hmin { rng.random_range(hmin..hmax) } else { hmin },
        is_target,
    })
}

fn place(config: &GeneratorConfig, drafts: &[Draft], rng: &mut ChaCha8Rng) -> Result<Vec<RegionBox>> {
    let (w, h) = (config.width as f64, config.height as f64);
    let m = config.edge_margin_px;
    let region = config
        .placement_region
        .unwrap_or(RegionBox { x1: m, y1: m, x2: w - m, y2: h - m });
    let mut placed: Vec<RegionBox> = Vec::with_capacity(drafts.len());
    for (i, d) in drafts.iter().enumerate() {
        let fits_x = region.width() - d.w;
        let fits_y = region.height() - d.h;
        if fits_x < 0.0 || fits_y < 0.0 {
            return Err(Error::Generation(format!("object {i} larger than the placement region")));
        }
        let mut ok = None;
        for _ in 0..config.max_placement_attempts {
            let x1 = (region.x1 + rng.random_range(0.0..=fits_x)).round();
            let y1 = (region.y1 + rng.random_range(0.0..=fits_y)).round();
            let cand = RegionBox { x1, y1, x2: x1 + d.w, y2: y1 + d.h };
            let clear = placed.iter().all(|p| {
                if config.clutter_mode {
                    iou(p, &cand) <= config.max_pair_iou
                } else {
                    !p.expanded(config.min_gap_px / 2.0).intersects(&cand.expanded(config.min_gap_px / 2.0))
                }
            });
            if clear && cand.within(w, h) {
                ok = Some(cand);
                break;
            }
        }
        match ok {
            Some(b) => placed.push(b),
            None => {
                return Err(Error::Generation(format!(
                    "cannot place object {} of {} within capacity after {} attempts",
                    i + 1,
                    drafts.len(),
                    config.max_placement_attempts
                )))
            }
        }
    }
    Ok(placed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ambiguous_mode_has_two_matching_objects() {
        let cfg = GeneratorConfig::for_split(Split::Seen).ambiguous();
        let t = generate_task(&cfg, 7).unwrap();
        assert!(t.scene.objects_satisfying(&t.intent).count() >= 2);
        assert!(t.scene.target().satisfies(&t.intent));
    }

    #[test]
    fn generation_is_deterministic() {
        let cfg = GeneratorConfig::default();
        let a = serde_json::to_vec(&generate_task(&cfg, 11).unwrap()).unwrap();
        let b = serde_json::to_vec(&generate_task(&cfg, 11).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn holdout_categories_never_appear() {
        let cfg = GeneratorConfig { holdout: ["banana".to_string()].into(), ..Default::default() };
        for seed in 0..200 {
            let s = generate_scene(&cfg, seed).unwrap();
            assert!(s.objects.iter().all(|o| o.category != "banana"));
        }
    }

    #[test]
    fn unseen_split_targets_novel_categories() {
        let cfg = GeneratorConfig::for_split(Split::Unseen);
        let novel = default_novel_categories();
        for seed in 0..50 {
            let s = generate_scene(&cfg, seed).unwrap();
            assert!(novel.contains(&s.target().category));
        }
    }

    #[test]
    fn every_split_produces_valid_scenes() {
        for split in Split::ALL {
            let cfg = GeneratorConfig::for_split(split);
            for seed in 0..100 {
                let t = generate_task(&cfg, seed).unwrap_or_else(|e| panic!("{split:?} {seed}: {e}"));
                t.scene.validate().unwrap();
                assert!(t.scene.target().satisfies(&t.intent));
                assert_eq!(cfg.lexicon.intent_for_utterance(&t.utterance), Some(t.intent.as_str()));
            }
        }
    }

    #[test]
    fn cluttered_scenes_overlap_somewhere() {
        let cfg = GeneratorConfig::for_split(Split::Cluttered);
        let overlapping = (0..50)
            .filter(|&seed| {
                let s = generate_scene(&cfg, seed).unwrap();
                s.objects.iter().enumerate().any(|(i, a)| s.objects[i + 1..].iter().any(|b| a.bbox.intersects(&b.bbox)))
            })
            .count();
        assert!(overlapping > 40, "{overlapping}");
    }

    #[test]
    fn over_capacity_is_an_error() {
        let cfg = GeneratorConfig {
            object_count: (30, 30),
            max_placement_attempts: 50,
            ..Default::default()
        };
        assert!(matches!(generate_scene(&cfg, 1), Err(Error::Generation(_))));
    }

    #[test]
    fn empty_lexicon_is_an_error() {
        let cfg = GeneratorConfig {
            lexicon: Lexicon { categories: vec![], intents: vec![] },
            ..Default::default()
        };
        assert!(matches!(generate_scene(&cfg, 1), Err(Error::Generation(_))));
    }
}
