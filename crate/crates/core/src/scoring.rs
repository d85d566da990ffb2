//! s2v embeddings and caption-pair scoring.
//!
//! A phrase's s2v embedding is the length-T vector of frame similarities the
//! grounding model assigns it against a fixed probe clip. Whatever the phrase
//! length, the embedding lives in R^T, so phrases are compared by cosine in
//! "where does this sound occur" space rather than in word space.
//!
//! Caption scoring aggregates a candidate phrase set against a reference
//! phrase set: precision is the mean over candidate phrases of their best
//! cosine match among reference phrases, recall is the mirror image, and F1
//! is their harmonic mean. The aggregation is backend-agnostic: anything that
//! can embed a phrase into a fixed-length vector (s2v, static word vectors, a
//! test mock) plugs in via [`PhraseEmbedder`] and shares this one code path.

use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::FeatureMatrix;
use crate::model::{similarity_sequence, ModelError, TagModel};
use crate::num;
use crate::phrase::{Phrase, PhraseError, Tagger};
use crate::tensor::Tensor;

// ── errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("{side} caption produced no phrases")]
    NoPhrases { side: &'static str },
    #[error("probe mismatch: embedding from clip {a:?} is not comparable with clip {b:?}")]
    ProbeMismatch { a: String, b: String },
    #[error("embedding length mismatch: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Phrase(#[from] PhraseError),
}

// ── score triple ────────────────────────────────────────────────────────────

/// Precision/recall/F1 for one (candidate, reference) caption pair, plus the
/// phrase counts and whether either side fell back to whole-caption mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreTriple {
    pub p: f64,
    pub r: f64,
    pub f: f64,
    /// Number of candidate phrases (α).
    pub alpha: usize,
    /// Number of reference phrases (β).
    pub beta: usize,
    pub candidate_fallback: bool,
    pub reference_fallback: bool,
}

// ── embedding backends ──────────────────────────────────────────────────────

/// Anything that maps a phrase to a fixed-length real vector. All backends
/// feeding one aggregation must embed into the same space.
pub trait PhraseEmbedder {
    fn embed(&self, phrase: &Phrase) -> Result<Vec<f64>, ScoringError>;
}

/// One phrase's s2v representation against a specific probe clip.
#[derive(Debug, Clone)]
pub struct S2vEmbedding {
    /// Frame similarities, one per probe frame, each in (0, 1].
    pub scores: Vec<f64>,
    pub probe_clip_id: String,
    pub phrase: Phrase,
}

/// Embeds phrases against one probe clip, encoding the audio exactly once.
pub struct S2vScorer<'m> {
    model: &'m TagModel,
    e_a: Tensor,
    probe_clip_id: String,
}

impl<'m> S2vScorer<'m> {
    pub fn new(
        model: &'m TagModel,
        probe: &FeatureMatrix,
        probe_clip_id: &str,
    ) -> Result<Self, ScoringError> {
        let e_a = model.encode_audio(probe)?;
        Ok(S2vScorer { model, e_a, probe_clip_id: probe_clip_id.to_string() })
    }

    pub fn probe_len(&self) -> usize {
        self.e_a.rows()
    }

    pub fn embed_phrase(&self, phrase: &Phrase) -> Result<S2vEmbedding, ScoringError> {
        let e_p = self.model.encode_phrase(phrase)?;
        let s = similarity_sequence(&self.e_a, &e_p)?;
        Ok(S2vEmbedding {
            scores: s.data().to_vec(),
            probe_clip_id: self.probe_clip_id.clone(),
            phrase: phrase.clone(),
        })
    }
}

impl PhraseEmbedder for S2vScorer<'_> {
    fn embed(&self, phrase: &Phrase) -> Result<Vec<f64>, ScoringError> {
        Ok(self.embed_phrase(phrase)?.scores)
    }
}

/// Convenience one-shot embedding (re-encodes the probe every call; use
/// [`S2vScorer`] when embedding many phrases against one clip).
pub fn s2v_embed(
    model: &TagModel,
    probe: &FeatureMatrix,
    probe_clip_id: &str,
    phrase: &Phrase,
) -> Result<S2vEmbedding, ScoringError> {
    S2vScorer::new(model, probe, probe_clip_id)?.embed_phrase(phrase)
}

// ── similarity ──────────────────────────────────────────────────────────────

/// Cosine similarity. Zero-magnitude vectors compare as 0 (nothing matches
/// nothing); s2v embeddings are strictly positive so this only concerns
/// degenerate static backends.
pub fn cosine(a: &[f64], b: &[f64]) -> Result<f64, ScoringError> {
    if a.len() != b.len() {
        return Err(ScoringError::LengthMismatch { a: a.len(), b: b.len() });
    }
    let mut dot = 0.0;
    let mut na = 0.0;
    let mut nb = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(0.0);
    }
    Ok(dot / (num::sqrt(na) * num::sqrt(nb)))
}

/// ε_{i,j}-style similarity between two s2v embeddings. Both must come from
/// the same probe clip, otherwise the frame axes do not line up.
pub fn phrase_similarity(a: &S2vEmbedding, b: &S2vEmbedding) -> Result<f64, ScoringError> {
    if a.probe_clip_id != b.probe_clip_id {
        return Err(ScoringError::ProbeMismatch {
            a: a.probe_clip_id.clone(),
            b: b.probe_clip_id.clone(),
        });
    }
    cosine(&a.scores, &b.scores)
}

// ── aggregation ─────────────────────────────────────────────────────────────

/// Reduces a full ε matrix (rows: candidate phrases, columns: reference
/// phrases) to (p, r, f): p is the row-wise best-match mean, r the
/// column-wise, f their harmonic mean (0 when p + r ≤ 0).
pub fn aggregate_epsilon(eps: &[Vec<f64>]) -> (f64, f64, f64) {
    let alpha = eps.len();
    let beta = eps[0].len();
    let max = |it: &mut dyn Iterator<Item = f64>| it.fold(f64::NEG_INFINITY, f64::max);
    let p = (0..alpha)
        .map(|i| max(&mut eps[i].iter().copied()))
        .sum::<f64>()
        / alpha as f64;
    let r = (0..beta)
        .map(|j| max(&mut eps.iter().map(|row| row[j])))
        .sum::<f64>()
        / beta as f64;
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Keeps the first occurrence of each distinct surface form: phrase sets are
/// sets, so a caption naming the same sound twice counts it once.
fn distinct(phrases: &[Phrase]) -> Vec<&Phrase> {
    let mut seen = BTreeSet::new();
    phrases.iter().filter(|p| seen.insert(p.text())).collect()
}

/// Scores a candidate phrase set against a reference phrase set under any
/// embedding backend. Duplicate phrases collapse before aggregation, so α and
/// β count distinct phrases.
pub fn score_phrase_sets<E: PhraseEmbedder + ?Sized>(
    embedder: &E,
    candidates: &[Phrase],
    references: &[Phrase],
) -> Result<ScoreTriple, ScoringError> {
    if candidates.is_empty() {
        return Err(ScoringError::NoPhrases { side: "candidate" });
    }
    if references.is_empty() {
        return Err(ScoringError::NoPhrases { side: "reference" });
    }
    let candidates = distinct(candidates);
    let references = distinct(references);
    let ce: Vec<Vec<f64>> =
        candidates.iter().map(|p| embedder.embed(p)).collect::<Result<_, _>>()?;
    let re: Vec<Vec<f64>> =
        references.iter().map(|p| embedder.embed(p)).collect::<Result<_, _>>()?;
    let mut eps = vec![vec![0.0; re.len()]; ce.len()];
    for (i, c) in ce.iter().enumerate() {
        for (j, r) in re.iter().enumerate() {
            eps[i][j] = cosine(c, r)?;
        }
    }
    let (p, r, f) = aggregate_epsilon(&eps);
    Ok(ScoreTriple {
        p,
        r,
        f,
        alpha: ce.len(),
        beta: re.len(),
        candidate_fallback: false,
        reference_fallback: false,
    })
}

/// Extracts phrases from a caption; if the pattern matcher finds none, falls
/// back to the whole caption as a single phrase and reports it.
pub fn phrases_or_fallback(
    tagger: &Tagger,
    caption: &str,
) -> Result<(Vec<Phrase>, bool), ScoringError> {
    let phrases = tagger.phrases_of(caption)?;
    if phrases.is_empty() {
        Ok((vec![Phrase::manual(caption, tagger)?], true))
    } else {
        Ok((phrases, false))
    }
}

/// End-to-end caption-pair scoring: extract phrases on both sides (with
/// whole-caption fallback), embed, aggregate.
pub fn score_captions<E: PhraseEmbedder + ?Sized>(
    embedder: &E,
    tagger: &Tagger,
    candidate: &str,
    reference: &str,
) -> Result<ScoreTriple, ScoringError> {
    let (cand, cand_fb) = phrases_or_fallback(tagger, candidate)?;
    let (refs, ref_fb) = phrases_or_fallback(tagger, reference)?;
    let mut triple = score_phrase_sets(embedder, &cand, &refs)?;
    triple.candidate_fallback = cand_fb;
    triple.reference_fallback = ref_fb;
    Ok(triple)
}

// ── tests ───────────────────────────────────────────────────────────────────
