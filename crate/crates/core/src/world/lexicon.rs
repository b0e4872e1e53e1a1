//! Object categories, their attribute palettes and affordances, and the
//! intention-oriented utterances that select among them.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategorySpec {
    pub name: String,
    pub colors: Vec<String>,
    /// Intent tag → how prototypical this category is for the intent.
    pub affordances: BTreeMap<String, f64>,
    /// Physical height range in meters.
    #[serde(default = "default_height_range")]
    pub height_range_m: (f64, f64),
}

fn default_height_range() -> (f64, f64) {
    (0.03, 0.15)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentSpec {
    pub tag: String,
    pub templates: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Lexicon {
    pub categories: Vec<CategorySpec>,
    pub intents: Vec<IntentSpec>,
}

/// Lowercases and strips surrounding whitespace and terminal punctuation.
pub fn normalize_utterance(s: &str) -> String {
    s.trim()
        .trim_end_matches(['.', '!', '?'])
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

impl Lexicon {
    pub fn category(&self, name: &str) -> Option<&CategorySpec> {
        self.categories.iter().find(|c| c.name == name)
    }

    pub fn intent(&self, tag: &str) -> Option<&IntentSpec> {
        self.intents.iter().find(|i| i.tag == tag)
    }

    /// Resolves an utterance to its intent tag by template match.
    pub fn intent_for_utterance(&self, utterance: &str) -> Option<&str> {
        let needle = normalize_utterance(utterance);
        self.intents
            .iter()
            .find(|i| i.templates.iter().any(|t| normalize_utterance(t) == needle))
            .map(|i| i.tag.as_str())
    }

    /// Prototypicality of a category for an intent; 0 for unknown pairs.
    pub fn typicality(&self, category: &str, intent: &str) -> f64 {
        self.category(category)
            .and_then(|c| c.affordances.get(intent).copied())
            .unwrap_or(0.0)
    }

    pub fn categories_for(&self, intent: &str) -> impl Iterator<Item = &CategorySpec> + '_ {
        let intent = intent.to_string();
        self.categories
            .iter()
            .filter(move |c| c.affordances.contains_key(&intent))
    }

    /// Checks that every affordance resolves to an intent and every template is nonempty.
    pub fn validate(&self) -> Result<(), String> {
        if self.categories.is_empty() {
            return Err("lexicon has no categories".into());
        }
        if self.intents.is_empty() {
            return Err("lexicon has no intents".into());
        }
        let tags: BTreeSet<&str> = self.intents.iter().map(|i| i.tag.as_str()).collect();
        for c in &self.categories {
            if c.affordances.is_empty() {
                return Err(format!("category {:?} has no affordances", c.name));
            }
            if c.colors.is_empty() {
                return Err(format!("category {:?} has no colors", c.name));
            }
            for a in c.affordances.keys() {
                if !tags.contains(a.as_str()) {
                    return Err(format!("affordance {a:?} of {:?} has no intent entry", c.name));
                }
            }
        }
        for i in &self.intents {
            if i.templates.is_empty() || i.templates.iter().any(|t| t.trim().is_empty()) {
                return Err(format!("intent {:?} has an empty template", i.tag));
            }
        }
        Ok(())
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        default_lexicon()
    }
}

/// Categories held out of the seen split and used as targets of the unseen split.
pub fn default_novel_categories() -> BTreeSet<String> {
    ["kiwi", "juice box", "usb cable", "hex key", "marker", "towel", "cutter", "lighter"]
        .into_iter()
        .map(String::from)
        .collect()
}

fn cat(name: &str, colors: &[&str], affordances: &[(&str, f64)]) -> CategorySpec {
    CategorySpec {
        name: name.to_string(),
        colors: colors.iter().map(|s| s.to_string()).collect(),
        affordances: affordances.iter().map(|(t, w)| (t.to_string(), *w)).collect(),
        height_range_m: default_height_range(),
    }
}

fn intent(tag: &str, templates: &[&str]) -> IntentSpec {
    IntentSpec {
        tag: tag.to_string(),
        templates: templates.iter().map(|s| s.to_string()).collect(),
    }
}

/// Thirty everyday categories over eight intents.
pub fn default_lexicon() -> Lexicon {
    let categories = vec![
        cat("water bottle", &["blue", "clear", "green"], &[("drinkable", 1.0)]),
        cat("coke can", &["red", "silver"], &[("drinkable", 0.8)]),
        cat("juice box", &["orange", "yellow", "green"], &[("drinkable", 0.6)]),
        cat("milk carton", &["white", "blue"], &[("drinkable", 0.5)]),
        cat("coffee mug", &["white", "black", "red", "blue"], &[("drinkable", 0.7)]),
        cat("banana", &["yellow", "green"], &[("edible", 0.9)]),
        cat("apple", &["red", "green", "yellow"], &[("edible", 0.9)]),
        cat("kiwi", &["brown", "green"], &[("edible", 0.6)]),
        cat("strawberry", &["red", "white"], &[("edible", 0.6)]),
        cat("bread", &["brown", "white"], &[("edible", 0.7)]),
        cat("phone charger", &["white", "black"], &[("charging", 1.0)]),
        cat("power bank", &["black", "white", "silver"], &[("charging", 0.9)]),
        cat("usb cable", &["black", "white"], &[("charging", 0.6)]),
        cat("battery", &["silver", "black"], &[("charging", 0.7)]),
        cat("screwdriver", &["red", "yellow", "black"], &[("fastening", 1.0)]),
        cat("wrench", &["silver", "black"], &[("fastening", 0.8)]),
        cat("hex key", &["silver", "black"], &[("fastening", 0.6)]),
        cat("pen", &["black", "blue", "red"], &[("writing", 1.0)]),
        cat("pencil", &["yellow", "green"], &[("writing", 0.9)]),
        cat("marker", &["black", "red", "blue"], &[("writing", 0.7)]),
        cat("memo pad", &["yellow", "pink"], &[("writing", 0.5)]),
        cat("sponge", &["yellow", "green", "pink"], &[("cleaning", 1.0)]),
        cat("tissue box", &["white", "blue"], &[("cleaning", 0.8)]),
        cat("towel", &["white", "blue", "gray"], &[("cleaning", 0.7)]),
        cat("scissors", &["red", "black", "blue"], &[("cutting", 1.0)]),
        cat("cutter", &["yellow", "orange"], &[("cutting", 0.9)]),
        cat("knife", &["silver", "black"], &[("cutting", 0.6)]),
        cat("candle", &["white", "pink", "red", "yellow"], &[("lighting", 0.8)]),
        cat("flashlight", &["black", "red"], &[("lighting", 1.0)]),
        cat("lighter", &["red", "blue", "yellow"], &[("lighting", 0.5)]),
    ];
    let intents = vec![
        intent("drinkable", &["I am thirsty", "I need something to drink", "My throat is dry"]),
        intent("edible", &["I am hungry", "I am starving", "I want a snack"]),
        intent("charging", &["My device runs out of battery", "My phone is dying"]),
        intent("fastening", &["I want to tighten the screws of my chair", "This bolt is loose"]),
        intent("writing", &["I need to write something down", "I want to take a note"]),
        intent("cleaning", &["I spilled something on the table", "The desk is dirty"]),
        intent("cutting", &["I need to open this package", "I want to cut this paper"]),
        intent("lighting", &["It is too dark in here", "I want to set a cozy mood"]),
    ];
    Lexicon { categories, intents }
}
