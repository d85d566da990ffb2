//! Dataset assembly: synthetic generation to disk (WAVs + manifests) and
//! loading manifests back into training examples.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use tags2v_core::model::GroundingExample;
use tags2v_core::phrase::{Phrase, Tagger};
use tags2v_core::rng::{derive_seed, sub_rng};
use tags2v_core::synth::{gen_clip, SoundClass};

use crate::audio::{log_mel, read_wav, write_wav, MEL_BINS};
use crate::config::RunConfig;
use crate::error::AppError;
use crate::manifest::{save_manifest, GroundingRecord, ManifestRecord};

/// Paths and counts produced by [`gen_dataset`].
#[derive(Debug, Clone)]
pub struct GenSummary {
    pub manifest: PathBuf,
    pub train_manifest: PathBuf,
    pub eval_manifest: PathBuf,
    pub n_train: usize,
    pub n_eval: usize,
    /// Classes with one alias grounded in train and a different one in eval.
    pub alias_pairs_across_split: usize,
}

/// Generates `n_clips` synthetic clips and writes WAVs, the full manifest,
/// the 80/20 train/eval split manifests, and the effective config.
///
/// Each clip gets 1-3 distinct classes from the bank and a seed derived from
/// the root by clip index, so regeneration with the same seed is
/// byte-identical file by file.
pub fn gen_dataset(
    bank: &[SoundClass],
    config: &RunConfig,
    out_dir: &Path,
) -> Result<GenSummary, AppError> {
    let n_clips = config.synth.n_clips;
    if n_clips < 2 {
        return Err(AppError::usage(format!("n_clips must be at least 2, got {n_clips}")));
    }
    let audio_dir = out_dir.join("audio");
    fs::create_dir_all(&audio_dir)
        .map_err(|e| AppError::data(format!("{}: {e}", audio_dir.display())))?;

    let mut records = Vec::with_capacity(n_clips);
    let mut layout_rng = sub_rng(config.seed, "dataset/layout");
    for i in 0..n_clips {
        let k = layout_rng.random_range(1..=3usize.min(bank.len()));
        let mut order: Vec<usize> = (0..bank.len()).collect();
        let (chosen, _) = order.partial_shuffle(&mut layout_rng, k);
        let classes: Vec<SoundClass> = chosen.iter().map(|&c| bank[c].clone()).collect();
        let clip_seed = derive_seed(config.seed, &format!("clip/{i}"));
        let clip = gen_clip(&classes, config.synth.duration_s, clip_seed)?;

        let clip_id = format!("clip-{i:04}");
        let wav_rel = format!("audio/{clip_id}.wav");
        write_wav(&out_dir.join(&wav_rel), &clip.samples)?;
        records.push(ManifestRecord {
            clip_id,
            audio_path: wav_rel,
            captions: clip.captions,
            phrases: None,
            grounding: Some(
                clip.grounding
                    .into_iter()
                    .map(|g| GroundingRecord { phrase: g.phrase, spans: g.spans })
                    .collect(),
            ),
        });
    }

    // 80/20 split by clip, seeded independently of generation.
    let mut split_rng = sub_rng(config.seed, "dataset/split");
    let mut indices: Vec<usize> = (0..n_clips).collect();
    indices.shuffle(&mut split_rng);
    let n_eval = (n_clips / 5).max(1);
    let eval_set: BTreeSet<usize> = indices[..n_eval].iter().copied().collect();
    let train: Vec<ManifestRecord> =
        records.iter().enumerate().filter(|(i, _)| !eval_set.contains(i)).map(|(_, r)| r.clone()).collect();
    let eval: Vec<ManifestRecord> =
        records.iter().enumerate().filter(|(i, _)| eval_set.contains(i)).map(|(_, r)| r.clone()).collect();

    // With five captions per clip a clip almost always grounds both aliases of
    // each of its classes, so at scale some class is guaranteed to appear with
    // different aliases on the two sides. Tiny datasets can legitimately miss
    // (the lone eval clip may hold the only occurrence of its classes), so the
    // invariant is only enforced once the split is big enough to make a miss a
    // real defect.
    let alias_pairs = alias_pairs_across_split(bank, &train, &eval);
    if alias_pairs == 0 && n_clips >= 20 {
        return Err(AppError::data(
            "generation invariant violated: no sound class has different aliases grounded \
             on the two sides of the split",
        ));
    }

    let manifest = out_dir.join("manifest.jsonl");
    let train_manifest = out_dir.join("train.jsonl");
    let eval_manifest = out_dir.join("eval.jsonl");
    save_manifest(&manifest, &records)?;
    save_manifest(&train_manifest, &train)?;
    save_manifest(&eval_manifest, &eval)?;
    let config_json = serde_json::to_string_pretty(config)
        .map_err(|e| AppError::data(format!("config serialization failed: {e}")))?;
    fs::write(out_dir.join("effective_config.json"), config_json + "\n")?;

    Ok(GenSummary {
        manifest,
        train_manifest,
        eval_manifest,
        n_train: train.len(),
        n_eval: eval.len(),
        alias_pairs_across_split: alias_pairs,
    })
}

/// Counts classes with one alias grounded in `train` and a textually
/// different alias grounded in `eval` — the precondition for testing
/// generalization across naming.
fn alias_pairs_across_split(
    bank: &[SoundClass],
    train: &[ManifestRecord],
    eval: &[ManifestRecord],
) -> usize {
    let grounded = |records: &[ManifestRecord]| -> BTreeSet<String> {
        records
            .iter()
            .flat_map(|r| r.grounding.iter().flatten())
            .map(|g| g.phrase.clone())
            .collect()
    };
    let in_train = grounded(train);
    let in_eval = grounded(eval);
    bank.iter()
        .filter(|class| {
            class.aliases.iter().enumerate().any(|(i, a)| {
                in_train.contains(a)
                    && class
                        .aliases
                        .iter()
                        .enumerate()
                        .any(|(j, b)| j != i && in_eval.contains(b))
            })
        })
        .count()
}

// ── manifest → examples ─────────────────────────────────────────────────────

/// One grounding example per distinct (clip, phrase text) with spans, plus
/// the sorted vocabulary of the phrase words.
pub fn load_examples(
    manifest_path: &Path,
    records: &[ManifestRecord],
) -> Result<(Vec<GroundingExample>, Vec<String>), AppError> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let tagger = Tagger::new();
    let mut examples = Vec::new();
    let mut seen = BTreeSet::new();
    let mut vocab = BTreeSet::new();
    for record in records {
        let Some(grounding) = &record.grounding else { continue };
        let wav = read_wav(&base.join(&record.audio_path))?;
        let features = log_mel(&wav, MEL_BINS)?;
        // Merge duplicate phrase texts within a clip before building
        // examples, so a phrase maps to the union of its spans.
        let mut by_text: BTreeMap<&str, Vec<(f64, f64)>> = BTreeMap::new();
        for g in grounding {
            by_text.entry(g.phrase.as_str()).or_default().extend(g.spans.iter().copied());
        }
        for (text, spans) in by_text {
            if !seen.insert((record.clip_id.clone(), text.to_string())) {
                continue;
            }
            let phrase = Phrase::manual(text, &tagger)
                .map_err(|e| AppError::data(format!("clip {}: {e}", record.clip_id)))?;
            for w in phrase.words() {
                vocab.insert(w.to_string());
            }
            examples.push(
                GroundingExample::new(
                    record.clip_id.clone(),
                    features.clone(),
                    phrase,
                    spans,
                )
                .map_err(|e| AppError::data(format!("clip {}: {e}", record.clip_id)))?,
            );
        }
    }
    if examples.is_empty() {
        return Err(AppError::data("manifest has no grounding annotations to train on"));
    }
    Ok((examples, vocab.into_iter().collect()))
}

/// Feature matrices for every clip in the manifest, keyed by clip id.
pub fn load_features(
    manifest_path: &Path,
    records: &[ManifestRecord],
) -> Result<BTreeMap<String, tags2v_core::features::FeatureMatrix>, AppError> {
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let mut features = BTreeMap::new();
    for record in records {
        let wav = read_wav(&base.join(&record.audio_path))?;
        features.insert(record.clip_id.clone(), log_mel(&wav, MEL_BINS)?);
    }
    Ok(features)
}

// ── tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::load_manifest;
    use tags2v_core::synth::default_bank;
    use tempfile::tempdir;

    fn small_config(n_clips: usize, seed: u64) -> RunConfig {
        let mut config = RunConfig::default();
        config.synth.n_clips = n_clips;
        config.synth.duration_s = 2.5;
        config.seed = seed;
        config
    }

    #[test]
    fn generation_writes_split_manifests_and_wavs() {
        let dir = tempdir().unwrap();
        let bank = default_bank();
        let summary = gen_dataset(&bank, &small_config(10, 3), dir.path()).unwrap();
        assert_eq!(summary.n_train + summary.n_eval, 10);
        assert_eq!(summary.n_eval, 2);
        assert!(summary.alias_pairs_across_split >= 1);
        let records = load_manifest(&summary.manifest).unwrap();
        assert_eq!(records.len(), 10);
        for r in &records {
            assert!(dir.path().join(&r.audio_path).exists());
            assert!(r.captions.len() >= 2);
            assert!(r.grounding.as_ref().is_some_and(|g| !g.is_empty()));
        }
        assert!(dir.path().join("effective_config.json").exists());
    }

    #[test]
    fn regeneration_is_byte_identical() {
        let bank = default_bank();
        let dir_a = tempdir().unwrap();
        let dir_b = tempdir().unwrap();
        gen_dataset(&bank, &small_config(6, 9), dir_a.path()).unwrap();
        gen_dataset(&bank, &small_config(6, 9), dir_b.path()).unwrap();
        for file in ["manifest.jsonl", "train.jsonl", "eval.jsonl", "audio/clip-0003.wav"] {
            let a = fs::read(dir_a.path().join(file)).unwrap();
            let b = fs::read(dir_b.path().join(file)).unwrap();
            assert_eq!(a, b, "{file} differs between identical runs");
        }
        let c_dir = tempdir().unwrap();
        gen_dataset(&bank, &small_config(6, 10), c_dir.path()).unwrap();
        assert_ne!(
            fs::read(dir_a.path().join("manifest.jsonl")).unwrap(),
            fs::read(c_dir.path().join("manifest.jsonl")).unwrap()
        );
    }

    #[test]
    fn examples_load_with_labels_and_vocab() {
        let dir = tempdir().unwrap();
        let bank = default_bank();
        let summary = gen_dataset(&bank, &small_config(6, 5), dir.path()).unwrap();
        let records = load_manifest(&summary.train_manifest).unwrap();
        let (examples, vocab) = load_examples(&summary.train_manifest, &records).unwrap();
        assert!(!examples.is_empty());
        assert!(vocab.iter().any(|w| w == "a" || w == "an"));
        for ex in &examples {
            let pf = ex.positive_fraction();
            assert!(pf > 0.0 && pf < 1.0, "degenerate labels for {}", ex.clip_id);
        }
        // Distinct (clip, phrase) keys.
        let keys: BTreeSet<(String, String)> =
            examples.iter().map(|e| (e.clip_id.clone(), e.phrase.text())).collect();
        assert_eq!(keys.len(), examples.len());
    }
}

