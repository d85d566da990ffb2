//! Core algorithms for grounding-based audio-caption similarity (TAGS2V).
//!
//! A caption scored against another caption is first split into sound-event
//! phrases. Each phrase is run through a trained text-to-audio grounding
//! model against a probe clip, producing a per-frame similarity sequence
//! (the "s2v embedding"). Caption-level precision/recall/F1 come from greedy
//! cosine matching between the two phrase sets' embeddings.
//!
//! This crate is `no_std`-compatible (`alloc` required) and holds the pure
//! parts of the system:
//!
//! - [`tensor`] / [`ops`] / [`graph`]: a small dense-tensor engine with
//!   reverse-mode autodiff covering exactly the grounding model's primitives
//! - [`phrase`]: rule-based POS tagging and sound-event phrase extraction
//! - [`model`] / [`train`]: the grounding model (CRNN audio encoder, mean
//!   word-embedding phrase encoder, exp(-L2) frame similarity, BCE training)
//! - [`scoring`]: s2v embeddings and the precision/recall/F1 caption scorer
//! - [`baseline`]: BLEU-n, ROUGE-L and a static word-embedding scorer
//! - [`stats`] / [`pairs`]: point-biserial + ROC-AUC and the CCP/ICP caption
//!   pair protocol
//! - [`synth`]: deterministic synthetic clips whose sound classes carry
//!   textually disjoint phrase aliases
//!
//! Audio decoding, spectrogram features, checkpoints and the CLI live in the
//! companion `tags2v` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod baseline;
pub mod features;
pub mod graph;
pub mod model;
pub mod num;
pub mod ops;
pub mod pairs;
pub mod phrase;
pub mod rng;
pub mod scoring;
pub mod stats;
pub mod synth;
pub mod train;
pub mod tensor;

pub use baseline::{bleu_n, rouge_l, BaselineError, EmbeddingTable, Smoothing, StaticEmbedder};
pub use features::{FeatureMatrix, FrameTiming};
pub use graph::{Graph, GraphError, NodeId};
pub use model::{GroundingExample, ModelError, TagModel, TagModelConfig};
pub use pairs::{build_pairs, CaptionPair, ClipCaptions, PairError};
pub use phrase::{Phrase, PhraseSource, Tag, TaggedToken, Tagger};
pub use scoring::{PhraseEmbedder, S2vEmbedding, S2vScorer, ScoreTriple, ScoringError};
pub use stats::{correlate, point_biserial, roc_auc, StatsError};
pub use synth::{default_bank, gen_clip, Recipe, SoundClass, SynthClip, SynthError};
pub use tensor::Tensor;
pub use train::{train, TrainConfig, TrainError, TrainReport};
