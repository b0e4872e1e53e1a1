//! Dialogue dataset records: a scene, an opening utterance, scripted
//! question/answer turns, and the regions a grounder should predict after
//! each dialogue prefix.

use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Scene;
use crate::error::{Error, Result};
use crate::geometry::RegionBox;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub scene: Scene,
    pub utterance: String,
    pub qa_pairs: Vec<(String, String)>,
    /// `region_labels[n]` holds the regions valid after the first `n` turns.
    pub region_labels: Vec<Vec<RegionBox>>,
    pub target_box: RegionBox,
}

fn schema(field: String, message: impl Into<String>) -> Error {
    Error::Schema { field, message: message.into() }
}

/// Checks the per-record invariants; `at` prefixes the reported field path.
pub fn validate_record(r: &DatasetRecord, at: &str) -> Result<()> {
    r.scene.validate().map_err(|e| schema(format!("{at}.scene"), e.to_string()))?;
    if r.utterance.trim().is_empty() {
        return Err(schema(format!("{at}.utterance"), "empty utterance"));
    }
    if r.region_labels.len() != r.qa_pairs.len() + 1 {
        return Err(schema(
            format!("{at}.region_labels"),
            format!("expected {} label sets for {} turns, found {}", r.qa_pairs.len() + 1, r.qa_pairs.len(), r.region_labels.len()),
        ));
    }
    let last = r.region_labels.last().expect("nonempty");
    if !last.contains(&r.target_box) {
        return Err(schema(format!("{at}.target_box"), "target box is not in the final region-label set"));
    }
    Ok(())
}

pub fn save_dataset(records: &[DatasetRecord], path: impl AsRef<Path>) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    serde_json::to_writer(&mut w, records).map_err(|e| Error::Io(e.to_string()))?;
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Vec<DatasetRecord>> {
    let reader = BufReader::new(fs::File::open(path)?);
    let de = &mut serde_json::Deserializer::from_reader(reader);
    let records: Vec<DatasetRecord> =
        serde_path_to_error::deserialize(de).map_err(|e| schema(e.path().to_string(), e.inner().to_string()))?;
    for (i, r) in records.iter().enumerate() {
        validate_record(r, &format!("[{i}]"))?;
    }
    Ok(records)
}
