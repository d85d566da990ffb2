//! The grounding model: a convolutional-recurrent audio encoder paired with a
//! mean-of-word-embeddings phrase encoder, trained so that the per-frame
//! similarity `s_t = exp(−‖e_{A,t} − e_P‖₂)` predicts where the phrase's
//! sound is audible.
//!
//! The audio branch runs conv blocks with ReLU, subsamples time by a fixed
//! power-of-two factor with Lp pooling, encodes context with a recurrent
//! layer, projects to the shared embedding width, and upsamples back so the
//! output always has exactly one embedding per input frame.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureMatrix, FrameTiming};
use crate::graph::{Graph, GraphError, NodeId};
use crate::num;
use crate::ops::{self, Padding};
use crate::phrase::Phrase;
use crate::rng::sub_rng;
use crate::tensor::{Tensor, TensorError};

/// Floor for the per-clip feature standard deviation. A constant matrix
/// (digital silence) centers to exact zeros, so the floor only guards the
/// division.
pub const STD_FLOOR: f64 = 1e-6;

// ── errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("config `{field}`: {why}")]
    Config { field: &'static str, why: String },
    #[error("feature dim mismatch: model expects {expected} bins, got {actual}")]
    FeatureDim { expected: usize, actual: usize },
    #[error("phrase has no words")]
    EmptyPhrase,
    #[error("span {index} ({t_s} s .. {t_e} s) invalid for a clip of {duration} s")]
    SpanOutOfRange { index: usize, t_s: f64, t_e: f64, duration: f64 },
    #[error("threshold {value} outside (0, 1)")]
    Threshold { value: f64 },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

// ── config ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Gru,
    Lstm,
}

/// Architecture and identity of one model. Everything needed to rebuild the
/// parameter shapes (and re-run initialization) lives here, so a checkpoint is
/// `config + parameter blocks` and nothing else.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TagModelConfig {
    /// Input feature bins per frame (F).
    pub feat_dim: usize,
    /// Shared audio/phrase embedding width.
    pub embed_dim: usize,
    /// Output channels of each conv block.
    pub channels: Vec<usize>,
    pub kernel_size: usize,
    /// Total temporal subsampling before the recurrent layer; a power of two,
    /// realized as ×2 Lp-pool stages after the leading conv blocks. The
    /// decoder upsamples back to the input length.
    pub subsample_total: usize,
    /// Pool exponent (p = 1 is mean-of-abs, large p approaches max).
    pub pool_p: f64,
    pub cell: CellKind,
    /// Recurrent state width per layer.
    pub hidden: usize,
    pub recurrent_layers: usize,
    /// Known phrase words, in embedding-row order; one extra OOV row is
    /// appended after these.
    pub vocab: Vec<String>,
    /// Seed for parameter initialization.
    pub seed: u64,
}

impl TagModelConfig {
    /// Desk-scale defaults: small enough to train on a laptop in seconds per
    /// epoch while keeping the full architecture shape.
    pub fn desk(feat_dim: usize, vocab: Vec<String>, seed: u64) -> Self {
        TagModelConfig {
            feat_dim,
            embed_dim: 48,
            channels: vec![32, 48, 48],
            kernel_size: 5,
            subsample_total: 4,
            pool_p: 4.0,
            cell: CellKind::Gru,
            hidden: 48,
            recurrent_layers: 1,
            vocab,
            seed,
        }
    }

    fn pool_stages(&self) -> usize {
        self.subsample_total.trailing_zeros() as usize
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field: &'static str, why: &str| {
            Err(ModelError::Config { field, why: why.to_string() })
        };
        if self.feat_dim == 0 {
            return bad("feat_dim", "must be at least 1");
        }
        if self.embed_dim == 0 {
            return bad("embed_dim", "must be at least 1");
        }
        if self.channels.is_empty() || self.channels.contains(&0) {
            return bad("channels", "need at least one block, all widths nonzero");
        }
        if self.kernel_size == 0 {
            return bad("kernel_size", "must be at least 1");
        }
        if self.subsample_total == 0 || !self.subsample_total.is_power_of_two() {
            return bad("subsample_total", "must be a power of two");
        }
        if self.pool_stages() > self.channels.len() {
            return bad("subsample_total", "more ×2 pool stages than conv blocks");
        }
        if self.pool_p < 1.0 {
            return bad("pool_p", "must be ≥ 1");
        }
        if self.hidden == 0 {
            return bad("hidden", "must be at least 1");
        }
        if self.recurrent_layers == 0 {
            return bad("recurrent_layers", "must be at least 1");
        }
        if self.vocab.iter().any(|w| w.is_empty()) {
            return bad("vocab", "empty word");
        }
        Ok(())
    }
}

// ── model ───────────────────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct RecurrentParams {
    pub w_ih: Tensor,
    pub w_hh: Tensor,
    pub b_ih: Tensor,
    pub b_hh: Tensor,
}

/// Parameter set for the paired encoders. Parameter traversal order (conv
/// blocks, recurrent layers, projection, embedding table) is part of the
/// checkpoint format and must not change.
#[derive(Debug, Clone)]
pub struct TagModel {
    pub config: TagModelConfig,
    conv_w: Vec<Tensor>,
    conv_b: Vec<Tensor>,
    rec: Vec<RecurrentParams>,
    proj_w: Tensor,
    proj_b: Tensor,
    /// (|vocab| + 1) × embed_dim; the last row embeds out-of-vocabulary words.
    embed: Tensor,
    vocab_index: BTreeMap<String, usize>,
}

fn gaussian(
    rng: &mut impl rand::Rng,
    shape: Vec<usize>,
    sigma: f64,
) -> Result<Tensor, TensorError> {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and positive");
    let n: usize = shape.iter().product();
    let data: Vec<f64> = (0..n).map(|_| normal.sample(rng)).collect();
    Tensor::new(shape, data)
}

impl TagModel {
    /// Builds a freshly initialized model. Weights are seeded Gaussians with
    /// σ = 1/√fan_in (1/√embed_dim for the embedding table); biases start at
    /// zero. Same config ⇒ bit-identical parameters.
    pub fn new(config: TagModelConfig) -> Result<TagModel, ModelError> {
        config.validate()?;
        let mut vocab_index = BTreeMap::new();
        for (i, w) in config.vocab.iter().enumerate() {
            if vocab_index.insert(w.to_string(), i).is_some() {
                return Err(ModelError::Config {
                    field: "vocab",
                    why: alloc::format!("duplicate word {w:?}"),
                });
            }
        }
        let mut rng = sub_rng(config.seed, "model/init");
        let k = config.kernel_size;
        let mut conv_w = Vec::new();
        let mut conv_b = Vec::new();
        let mut in_ch = config.feat_dim;
        for &out_ch in &config.channels {
            let sigma = 1.0 / num::sqrt((in_ch * k) as f64);
            conv_w.push(gaussian(&mut rng, vec![out_ch, in_ch, k], sigma)?);
            conv_b.push(Tensor::zeros(vec![out_ch]));
            in_ch = out_ch;
        }
        let gates = match config.cell {
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        };
        let h = config.hidden;
        let mut rec = Vec::new();
        let mut d = *config.channels.last().expect("validated nonempty");
        for _ in 0..config.recurrent_layers {
            rec.push(RecurrentParams {
                w_ih: gaussian(&mut rng, vec![gates * h, d], 1.0 / num::sqrt(d as f64))?,
                w_hh: gaussian(&mut rng, vec![gates * h, h], 1.0 / num::sqrt(h as f64))?,
                b_ih: Tensor::zeros(vec![gates * h]),
                b_hh: Tensor::zeros(vec![gates * h]),
            });
            d = h;
        }
        let proj_w = gaussian(&mut rng, vec![h, config.embed_dim], 1.0 / num::sqrt(h as f64))?;
        let proj_b = Tensor::zeros(vec![config.embed_dim]);
        let embed = gaussian(
            &mut rng,
            vec![config.vocab.len() + 1, config.embed_dim],
            1.0 / num::sqrt(config.embed_dim as f64),
        )?;
        Ok(TagModel { config, conv_w, conv_b, rec, proj_w, proj_b, embed, vocab_index })
    }

    /// Rebuilds a model around existing parameter tensors (checkpoint load).
    /// Tensors must arrive in `params()` order; shapes are re-validated by
    /// simply assigning into a freshly initialized model.
    pub fn from_parts(config: TagModelConfig, parts: Vec<Tensor>) -> Result<TagModel, ModelError> {
        let mut model = TagModel::new(config)?;
        {
            let slots = model.params_mut();
            if slots.len() != parts.len() {
                return Err(ModelError::Config {
                    field: "parameters",
                    why: alloc::format!("expected {} blocks, got {}", slots.len(), parts.len()),
                });
            }
        }
        for (slot, part) in model.params_mut().into_iter().zip(parts) {
            if slot.shape() != part.shape() {
                return Err(ModelError::Config {
                    field: "parameters",
                    why: alloc::format!(
                        "block shape mismatch: expected {:?}, got {:?}",
                        slot.shape(),
                        part.shape()
                    ),
                });
            }
            *slot = part;
        }
        Ok(model)
    }

    /// Index of the out-of-vocabulary embedding row.
    pub fn oov_index(&self) -> usize {
        self.config.vocab.len()
    }

    /// Embedding-row indices for a phrase's words (OOV for unknown words).
    pub fn phrase_indices(&self, phrase: &Phrase) -> Result<Vec<usize>, ModelError> {
        if phrase.tokens.is_empty() {
            return Err(ModelError::EmptyPhrase);
        }
        Ok(phrase
            .words()
            .map(|w| self.vocab_index.get(w).copied().unwrap_or(self.config.vocab.len()))
            .collect())
    }

    // ── parameter traversal (checkpoint order) ──────────────────────────────

    pub fn params(&self) -> Vec<&Tensor> {
        let mut v = Vec::new();
        for (w, b) in self.conv_w.iter().zip(&self.conv_b) {
            v.push(w);
            v.push(b);
        }
        for r in &self.rec {
            v.push(&r.w_ih);
            v.push(&r.w_hh);
            v.push(&r.b_ih);
            v.push(&r.b_hh);
        }
        v.push(&self.proj_w);
        v.push(&self.proj_b);
        v.push(&self.embed);
        v
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor> {
        let TagModel { conv_w, conv_b, rec, proj_w, proj_b, embed, .. } = self;
        let mut v = Vec::new();
        for (w, b) in conv_w.iter_mut().zip(conv_b.iter_mut()) {
            v.push(w);
            v.push(b);
        }
        for r in rec.iter_mut() {
            v.push(&mut r.w_ih);
            v.push(&mut r.w_hh);
            v.push(&mut r.b_ih);
            v.push(&mut r.b_hh);
        }
        v.push(proj_w);
        v.push(proj_b);
        v.push(embed);
        v
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut v = Vec::new();
        for i in 0..self.conv_w.len() {
            v.push(alloc::format!("conv{i}.w"));
            v.push(alloc::format!("conv{i}.b"));
        }
        for l in 0..self.rec.len() {
            for part in ["w_ih", "w_hh", "b_ih", "b_hh"] {
                v.push(alloc::format!("rec{l}.{part}"));
            }
        }
        v.push("proj.w".to_string());
        v.push("proj.b".to_string());
        v.push("embed".to_string());
        v
    }

    // ── wiring ──────────────────────────────────────────────────────────────

    /// Per-clip feature standardization: zero mean, unit variance over the
    /// whole matrix. Keeps optimizer scales comparable across clips; the
    /// transform is fixed (not learned) so it lives outside the graph.
    fn standardize(frames: &Tensor) -> Tensor {
        let n = frames.numel() as f64;
        let mean = frames.data().iter().sum::<f64>() / n;
        let var = frames.data().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let std = num::sqrt(var).max(STD_FLOOR);
        let data = frames.data().iter().map(|v| (v - mean) / std).collect();
        Tensor::new(frames.shape().to_vec(), data).expect("same shape, finite by construction")
    }

    fn add(g: &mut Graph, t: &Tensor, trainable: bool) -> Result<NodeId, GraphError> {
        if trainable {
            g.param(t.clone())
        } else {
            g.input(t.clone())
        }
    }

    /// Wires the audio branch into `g`; returns the [T × embed_dim] output
    /// node and the audio-side parameter nodes in `params()` order.
    fn wire_audio(
        &self,
        g: &mut Graph,
        feats: &FeatureMatrix,
        trainable: bool,
    ) -> Result<(NodeId, Vec<NodeId>), ModelError> {
        if feats.dim() != self.config.feat_dim {
            return Err(ModelError::FeatureDim {
                expected: self.config.feat_dim,
                actual: feats.dim(),
            });
        }
        let t = feats.num_frames();
        let mut x = g.input(Self::standardize(&feats.frames))?;
        let mut params = Vec::new();
        let stages = self.config.pool_stages();
        for i in 0..self.conv_w.len() {
            let w = Self::add(g, &self.conv_w[i], trainable)?;
            let b = Self::add(g, &self.conv_b[i], trainable)?;
            params.push(w);
            params.push(b);
            x = g.conv1d(x, w, b, Padding::Same)?;
            x = g.relu(x)?;
            if i < stages {
                x = g.lp_pool(x, self.config.pool_p, 2)?;
            }
        }
        for r in &self.rec {
            let w_ih = Self::add(g, &r.w_ih, trainable)?;
            let w_hh = Self::add(g, &r.w_hh, trainable)?;
            let b_ih = Self::add(g, &r.b_ih, trainable)?;
            let b_hh = Self::add(g, &r.b_hh, trainable)?;
            params.extend([w_ih, w_hh, b_ih, b_hh]);
            x = match self.config.cell {
                CellKind::Gru => g.gru(x, w_ih, w_hh, b_ih, b_hh)?,
                CellKind::Lstm => g.lstm(x, w_ih, w_hh, b_ih, b_hh)?,
            };
        }
        let pw = Self::add(g, &self.proj_w, trainable)?;
        let pb = Self::add(g, &self.proj_b, trainable)?;
        params.push(pw);
        params.push(pb);
        x = g.affine(x, pw, pb)?;
        x = g.upsample_linear(x, t)?;
        Ok((x, params))
    }

    // ── inference ───────────────────────────────────────────────────────────

    /// Audio embedding sequence e_{A,t}, one row per input frame.
    pub fn encode_audio(&self, feats: &FeatureMatrix) -> Result<Tensor, ModelError> {
        let mut g = Graph::new();
        let (out, _) = self.wire_audio(&mut g, feats, false)?;
        Ok(g.value(out).clone())
    }

    /// Phrase embedding e_P: mean of the word-embedding rows.
    pub fn encode_phrase(&self, phrase: &Phrase) -> Result<Tensor, ModelError> {
        let indices = self.phrase_indices(phrase)?;
        Ok(ops::embed_mean(&self.embed, &indices)?)
    }

    /// Frame similarities for one (clip, phrase) pair.
    pub fn frame_scores(
        &self,
        feats: &FeatureMatrix,
        phrase: &Phrase,
    ) -> Result<Tensor, ModelError> {
        let e_a = self.encode_audio(feats)?;
        let e_p = self.encode_phrase(phrase)?;
        similarity_sequence(&e_a, &e_p)
    }

    /// Builds the full differentiable loss for one example. `params` aligns
    /// with `self.params()`, so gradients can be read back in order.
    pub fn build_loss_graph(&self, ex: &GroundingExample) -> Result<LossGraph, ModelError> {
        let mut g = Graph::new();
        let (e_a, mut params) = self.wire_audio(&mut g, &ex.features, true)?;
        let table = g.param(self.embed.clone())?;
        let indices = self.phrase_indices(&ex.phrase)?;
        let e_p = g.embed_mean(table, &indices)?;
        params.push(table);
        let s = g.exp_neg_l2(e_a, e_p)?;
        let loss = g.bce_mean(s, &ex.y)?;
        Ok(LossGraph { graph: g, loss, params })
    }
}

/// A wired-up loss computation for one example.
pub struct LossGraph {
    pub graph: Graph,
    pub loss: NodeId,
    /// Parameter nodes in `TagModel::params()` order (embedding table last).
    pub params: Vec<NodeId>,
}

// ── similarity and loss ─────────────────────────────────────────────────────

/// s_t = exp(−‖e_{A,t} − e_P‖₂) for every frame t; each s_t ∈ (0, 1].
pub fn similarity_sequence(e_a: &Tensor, e_p: &Tensor) -> Result<Tensor, ModelError> {
    Ok(ops::exp_neg_l2(e_a, e_p)?)
}

/// Mean binary cross-entropy between frame scores and 0/1 labels.
pub fn bce_loss(s: &Tensor, y: &[f64]) -> Result<f64, ModelError> {
    Ok(ops::bce_mean(s, y)?.data()[0])
}

// ── grounding examples ──────────────────────────────────────────────────────

/// One training/eval item: a clip, one phrase, and where that phrase's sound
/// occurs. Frame labels are derived once at construction: y_t = 1 iff the
/// frame's center time lies inside some annotated span.
#[derive(Debug, Clone)]
pub struct GroundingExample {
    pub clip_id: String,
    pub features: FeatureMatrix,
    pub phrase: Phrase,
    pub spans: Vec<(f64, f64)>,
    pub y: Vec<f64>,
}

impl GroundingExample {
    pub fn new(
        clip_id: String,
        features: FeatureMatrix,
        phrase: Phrase,
        spans: Vec<(f64, f64)>,
    ) -> Result<GroundingExample, ModelError> {
        let t = features.num_frames();
        let duration = features.timing.frame_end_s(t - 1);
        for (index, &(t_s, t_e)) in spans.iter().enumerate() {
            // Tiny slack so spans ending exactly at the clip edge survive
            // float roundtrips through manifests.
            if !(t_s >= 0.0 && t_s < t_e && t_e <= duration + 1e-9) {
                return Err(ModelError::SpanOutOfRange { index, t_s, t_e, duration });
            }
        }
        let y = (0..t)
            .map(|f| {
                let c = features.timing.frame_center_s(f);
                if spans.iter().any(|&(t_s, t_e)| t_s <= c && c < t_e) {
                    1.0
                } else {
                    0.0
                }
            })
            .collect();
        Ok(GroundingExample { clip_id, features, phrase, spans, y })
    }

    /// Fraction of frames labeled positive.
    pub fn positive_fraction(&self) -> f64 {
        self.y.iter().sum::<f64>() / self.y.len() as f64
    }
}

// ── span decoding ───────────────────────────────────────────────────────────

/// Thresholds frame scores into time spans. Maximal runs of `s_t ≥ threshold`
/// become spans from the first frame's start time to the last frame's end
/// time; runs separated by a single below-threshold frame are merged.
pub fn predict_spans(
    s: &[f64],
    threshold: f64,
    timing: FrameTiming,
) -> Result<Vec<(f64, f64)>, ModelError> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(ModelError::Threshold { value: threshold });
    }
    // Inclusive frame runs above threshold.
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (t, &v) in s.iter().enumerate() {
        if v >= threshold {
            match runs.last_mut() {
                Some(run) if run.1 + 1 == t => run.1 = t,
                _ => runs.push((t, t)),
            }
        }
    }
    let mut merged: Vec<(usize, usize)> = Vec::new();
    for run in runs {
        match merged.last_mut() {
            // Gap of one frame (< 2 frames) between runs: treat as dropout.
            Some(prev) if run.0 - prev.1 <= 2 => prev.1 = run.1,
            _ => merged.push(run),
        }
    }
    Ok(merged
        .into_iter()
        .map(|(a, b)| (timing.frame_start_s(a), timing.frame_end_s(b)))
        .collect())
}

// ── tests ───────────────────────────────────────────────────────────────────
