//! JSONL manifest ingestion. One record per clip; validation failures name
//! the record index and field.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tags2v_core::pairs::ClipCaptions;

use crate::error::AppError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundingRecord {
    pub phrase: String,
    /// (t_s, t_e) spans in seconds.
    pub spans: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestRecord {
    pub clip_id: String,
    /// Relative to the manifest's directory.
    pub audio_path: String,
    pub captions: Vec<String>,
    /// Manual phrase override, one list per caption; bypasses extraction.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phrases: Option<Vec<Vec<String>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<Vec<GroundingRecord>>,
}

pub fn load_manifest(path: &Path) -> Result<Vec<ManifestRecord>, AppError> {
    let text = fs::read_to_string(path)
        .map_err(|e| AppError::data(format!("{}: {e}", path.display())))?;
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record: ManifestRecord = serde_json::from_str(line)
            .map_err(|e| AppError::data(format!("manifest record {i}: {e}")))?;
        records.push(record);
    }
    validate(&records)?;
    Ok(records)
}

pub fn save_manifest(path: &Path, records: &[ManifestRecord]) -> Result<(), AppError> {
    let mut out = String::new();
    for record in records {
        out.push_str(
            &serde_json::to_string(record)
                .map_err(|e| AppError::data(format!("manifest serialization failed: {e}")))?,
        );
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn validate(records: &[ManifestRecord]) -> Result<(), AppError> {
    if records.is_empty() {
        return Err(AppError::data("manifest has no records"));
    }
    let fail = |i: usize, field: &str, why: &str| {
        Err(AppError::data(format!("manifest record {i}: field {field}: {why}")))
    };
    let mut seen = std::collections::BTreeSet::new();
    for (i, r) in records.iter().enumerate() {
        if r.clip_id.is_empty() {
            return fail(i, "clip_id", "must be non-empty");
        }
        if !seen.insert(r.clip_id.as_str()) {
            return fail(i, "clip_id", &format!("duplicate clip_id {:?}", r.clip_id));
        }
        if r.audio_path.is_empty() {
            return fail(i, "audio_path", "must be non-empty");
        }
        if r.captions.is_empty() || r.captions.iter().any(|c| c.trim().is_empty()) {
            return fail(i, "captions", "must be non-empty, with no blank captions");
        }
        if let Some(phrases) = &r.phrases {
            if phrases.len() != r.captions.len() {
                return fail(
                    i,
                    "phrases",
                    &format!(
                        "override must cover every caption: {} lists for {} captions",
                        phrases.len(),
                        r.captions.len()
                    ),
                );
            }
            if phrases.iter().any(|p| p.is_empty() || p.iter().any(|t| t.trim().is_empty())) {
                return fail(i, "phrases", "each caption's phrase list must be non-empty");
            }
        }
        if let Some(grounding) = &r.grounding {
            for (j, g) in grounding.iter().enumerate() {
                if g.phrase.trim().is_empty() {
                    return fail(i, "grounding", &format!("entry {j}: empty phrase"));
                }
                if g.spans.is_empty() {
                    return fail(i, "grounding", &format!("entry {j}: no spans"));
                }
                for &(t_s, t_e) in &g.spans {
                    if !(t_s >= 0.0 && t_s < t_e && t_e.is_finite()) {
                        return fail(
                            i,
                            "grounding",
                            &format!("entry {j}: bad span ({t_s}, {t_e})"),
                        );
                    }
                }
            }
        }
    }
    Ok(())
}

/// The caption view the pair builder consumes, in manifest order.
pub fn clip_captions(records: &[ManifestRecord]) -> Vec<ClipCaptions> {
    records
        .iter()
        .map(|r| ClipCaptions { clip_id: r.clip_id.clone(), captions: r.captions.clone() })
        .collect()
}

// ── tests ───────────────────────────────────────────────────────────────────
