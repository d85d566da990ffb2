//! Run configuration: one JSON file plus flag overrides (flags win).
//! Unknown keys are rejected up front, and the fully resolved config is
//! echoed into every output artifact so runs are reproducible from the
//! artifact alone.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tags2v_core::model::{CellKind, TagModelConfig};
use tags2v_core::train::TrainConfig;

use crate::audio::MEL_BINS;
use crate::error::AppError;

/// Where phrases are grounded at metric time: each pair's own first clip, or
/// one fixed clip for every pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProbeMode {
    Own,
    Fixed(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub embed_dim: usize,
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    pub subsample_total: usize,
    pub pool_p: f64,
    pub cell: CellKind,
    pub hidden: usize,
    pub recurrent_layers: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let desk = TagModelConfig::desk(MEL_BINS, Vec::new(), 0);
        ModelSection {
            embed_dim: desk.embed_dim,
            channels: desk.channels,
            kernel_size: desk.kernel_size,
            subsample_total: desk.subsample_total,
            pool_p: desk.pool_p,
            cell: desk.cell,
            hidden: desk.hidden,
            recurrent_layers: desk.recurrent_layers,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub lr: f64,
    pub clip_norm: f64,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection { epochs: 15, lr: 2e-3, clip_norm: 5.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub n_clips: usize,
    pub duration_s: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        SynthSection { n_clips: 200, duration_s: 2.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Root seed. Every random stream in a run is derived from it by name
    /// (model init, epoch shuffles, pair sampling, per-clip synthesis), so
    /// partial reruns stay stable.
    pub seed: u64,
    pub model: ModelSection,
    pub train: TrainSection,
    pub synth: SynthSection,
    /// "own" or "fixed:<clip_id>".
    pub probe: String,
    pub metrics: Vec<String>,
    pub n_ccp: usize,
    pub n_icp: usize,
    /// Span-decoding threshold for `ground`.
    pub threshold: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            model: ModelSection::default(),
            train: TrainSection::default(),
            synth: SynthSection::default(),
            probe: "own".into(),
            metrics: vec!["tags2v".into(), "static".into(), "bleu1".into(), "rougel".into()],
            n_ccp: 1000,
            n_icp: 1000,
            threshold: 0.5,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig, AppError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| AppError::usage(format!("{}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| AppError::usage(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), AppError> {
        self.probe_mode()?;
        if !(self.threshold > 0.0 && self.threshold < 1.0) {
            return Err(AppError::usage(format!(
                "threshold {} outside (0, 1)",
                self.threshold
            )));
        }
        // Full model validation happens when the vocabulary is known.
        self.tag_model_config(vec!["x".into()]).validate().map_err(AppError::from)?;
        Ok(())
    }

    pub fn probe_mode(&self) -> Result<ProbeMode, AppError> {
        if self.probe == "own" {
            Ok(ProbeMode::Own)
        } else if let Some(id) = self.probe.strip_prefix("fixed:") {
            if id.is_empty() {
                Err(AppError::usage("probe mode fixed: needs a clip id"))
            } else {
                Ok(ProbeMode::Fixed(id.to_string()))
            }
        } else {
            Err(AppError::usage(format!(
                "probe mode {:?} not recognized; use \"own\" or \"fixed:<clip_id>\"",
                self.probe
            )))
        }
    }

    /// The core model config for this run, with the vocabulary resolved.
    pub fn tag_model_config(&self, vocab: Vec<String>) -> TagModelConfig {
        TagModelConfig {
            feat_dim: MEL_BINS,
            embed_dim: self.model.embed_dim,
            channels: self.model.channels.clone(),
            kernel_size: self.model.kernel_size,
            subsample_total: self.model.subsample_total,
            pool_p: self.model.pool_p,
            cell: self.model.cell,
            hidden: self.model.hidden,
            recurrent_layers: self.model.recurrent_layers,
            vocab,
            seed: self.seed,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut tc = TrainConfig::new(self.train.epochs, self.train.lr, self.seed);
        tc.clip_norm = self.train.clip_norm;
        tc
    }
}

// ── tests ───────────────────────────────────────────────────────────────────
