//! String-overlap reference metrics and a static word-embedding scorer.
//!
//! These are the comparison arms for the evaluation harness: sentence-level
//! BLEU-n and ROUGE-L F1 over the same tokenizer the phrase extractor uses,
//! plus an [`EmbeddingTable`] backend that scores caption pairs through the
//! exact aggregation path of [`crate::scoring`], differing only in how a
//! phrase becomes a vector (mean of static word vectors instead of s2v).

use alloc::collections::btree_map::Entry;
use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use thiserror::Error;

use crate::num;
use crate::phrase::{tokenize, Phrase};
use crate::scoring::{PhraseEmbedder, ScoringError};
use crate::tensor::Tensor;

/// Smoothing constant for zero n-gram counts.
pub const BLEU_EPS: f64 = 1e-9;

// ── errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("bleu order must be in 1..=4, got {n}")]
    BadN { n: usize },
    #[error("{side} text has no tokens")]
    Empty { side: &'static str },
    #[error("embedding table line {line}: {why}")]
    Table { line: usize, why: String },
}

// ── BLEU ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Smoothing {
    /// Zero clipped counts contribute `BLEU_EPS` instead of collapsing the
    /// geometric mean (sensible for single short captions).
    AddEpsilon,
    /// Strict definition: any zero n-gram precision zeroes the score.
    None,
}

fn ngram_counts(words: &[String], k: usize) -> BTreeMap<&[String], usize> {
    let mut counts: BTreeMap<&[String], usize> = BTreeMap::new();
    if words.len() >= k {
        for i in 0..=(words.len() - k) {
            *counts.entry(&words[i..i + k]).or_insert(0) += 1;
        }
    }
    counts
}

/// Sentence-level BLEU-n: geometric mean of clipped 1..n-gram precisions
/// times the brevity penalty against the closest-length reference (ties go to
/// the shorter reference).
pub fn bleu_n(
    candidate: &str,
    references: &[&str],
    n: usize,
    smoothing: Smoothing,
) -> Result<f64, BaselineError> {
    if !(1..=4).contains(&n) {
        return Err(BaselineError::BadN { n });
    }
    let cand = tokenize(candidate);
    if cand.is_empty() {
        return Err(BaselineError::Empty { side: "candidate" });
    }
    let refs: Vec<Vec<String>> = references.iter().map(|r| tokenize(r)).collect();
    if refs.is_empty() || refs.iter().any(Vec::is_empty) {
        return Err(BaselineError::Empty { side: "reference" });
    }
    let mut log_sum = 0.0;
    for k in 1..=n {
        let cg = ngram_counts(&cand, k);
        let total: usize = cg.values().sum();
        let ref_counts: Vec<BTreeMap<&[String], usize>> =
            refs.iter().map(|r| ngram_counts(r, k)).collect();
        let clipped: usize = cg
            .iter()
            .map(|(g, &cnt)| {
                let best = ref_counts.iter().map(|rc| *rc.get(g).unwrap_or(&0)).max().unwrap_or(0);
                cnt.min(best)
            })
            .sum();
        let p = if total > 0 && clipped > 0 {
            clipped as f64 / total as f64
        } else {
            match smoothing {
                Smoothing::AddEpsilon => BLEU_EPS,
                Smoothing::None => return Ok(0.0),
            }
        };
        log_sum += num::ln(p) / n as f64;
    }
    let c = cand.len();
    let r = refs
        .iter()
        .map(Vec::len)
        .min_by_key(|&l| (l.abs_diff(c), l))
        .expect("at least one reference");
    let bp = if c > r { 1.0 } else { num::exp(1.0 - r as f64 / c as f64) };
    Ok(bp * num::exp(log_sum))
}

// ── ROUGE-L ─────────────────────────────────────────────────────────────────

fn lcs_len(a: &[String], b: &[String]) -> usize {
    let n = b.len();
    let mut prev = vec![0usize; n + 1];
    let mut cur = vec![0usize; n + 1];
    for ai in a {
        for (j, bj) in b.iter().enumerate() {
            cur[j + 1] = if ai == bj { prev[j] + 1 } else { cur[j].max(prev[j + 1]) };
        }
        core::mem::swap(&mut prev, &mut cur);
    }
    prev[n]
}

/// ROUGE-L F1: longest-common-subsequence precision/recall, harmonic mean.
pub fn rouge_l(candidate: &str, reference: &str) -> Result<f64, BaselineError> {
    let c = tokenize(candidate);
    if c.is_empty() {
        return Err(BaselineError::Empty { side: "candidate" });
    }
    let r = tokenize(reference);
    if r.is_empty() {
        return Err(BaselineError::Empty { side: "reference" });
    }
    let lcs = lcs_len(&c, &r);
    if lcs == 0 {
        return Ok(0.0);
    }
    let p = lcs as f64 / c.len() as f64;
    let rec = lcs as f64 / r.len() as f64;
    Ok(2.0 * p * rec / (p + rec))
}

// ── static embedding table ──────────────────────────────────────────────────

/// Word → vector lookup with a trailing OOV row. For parsed tables the OOV
/// row is all-zero (unknown words match nothing); the one-hot constructor
/// gives OOV its own axis instead.
#[derive(Debug, Clone)]
pub struct EmbeddingTable {
    vocab_index: BTreeMap<String, usize>,
    /// (n + 1) × m; row n is OOV.
    vectors: Tensor,
}

impl EmbeddingTable {
    /// One-hot table over `vocab` plus a dedicated OOV axis: m = n + 1.
    /// Phrase means become (scaled) bag-of-words vectors, so cosine reduces
    /// to token-overlap similarity.
    pub fn one_hot(vocab: &[String]) -> Result<EmbeddingTable, BaselineError> {
        let n = vocab.len();
        let mut vocab_index = BTreeMap::new();
        for (i, w) in vocab.iter().enumerate() {
            if vocab_index.insert(w.clone(), i).is_some() {
                return Err(BaselineError::Table {
                    line: i + 1,
                    why: alloc::format!("duplicate word {w:?}"),
                });
            }
        }
        let m = n + 1;
        let vectors = Tensor::from_fn(vec![n + 1, m], |idx| {
            if idx / m == idx % m {
                1.0
            } else {
                0.0
            }
        })
        .expect("finite by construction");
        Ok(EmbeddingTable { vocab_index, vectors })
    }

    /// Parses the plain-text format: first line `n m`, then n lines
    /// `word v1 … vm`. Line numbers in errors are 1-based.
    pub fn parse(text: &str) -> Result<EmbeddingTable, BaselineError> {
        let bad = |line: usize, why: String| BaselineError::Table { line, why };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (hline, header) = lines
            .next()
            .ok_or_else(|| bad(1, "empty table".to_string()))?;
        let parts: Vec<&str> = header.split_whitespace().collect();
        let (n, m) = match parts.as_slice() {
            [n, m] => (
                n.parse::<usize>().map_err(|_| bad(hline + 1, "bad word count".to_string()))?,
                m.parse::<usize>().map_err(|_| bad(hline + 1, "bad dimension".to_string()))?,
            ),
            _ => return Err(bad(hline + 1, "expected header `n m`".to_string())),
        };
        if m == 0 {
            return Err(bad(hline + 1, "dimension must be ≥ 1".to_string()));
        }
        let mut vocab_index = BTreeMap::new();
        let mut data = Vec::with_capacity((n + 1) * m);
        let mut rows = 0usize;
        for (li, line) in lines {
            let lineno = li + 1;
            if rows == n {
                return Err(bad(lineno, alloc::format!("more than {n} vector lines")));
            }
            let mut it = line.split_whitespace();
            let word = it.next().expect("non-empty line");
            match vocab_index.entry(word.to_string()) {
                Entry::Occupied(_) => {
                    return Err(bad(lineno, alloc::format!("duplicate word {word:?}")));
                }
                Entry::Vacant(e) => {
                    e.insert(rows);
                }
            }
            let vals: Vec<&str> = it.collect();
            if vals.len() != m {
                return Err(bad(
                    lineno,
                    alloc::format!("expected {m} values, got {}", vals.len()),
                ));
            }
            for v in vals {
                let x: f64 = v
                    .parse()
                    .map_err(|_| bad(lineno, alloc::format!("bad number {v:?}")))?;
                if !x.is_finite() {
                    return Err(bad(lineno, alloc::format!("non-finite value {v:?}")));
                }
                data.push(x);
            }
            rows += 1;
        }
        if rows != n {
            return Err(bad(0, alloc::format!("header promised {n} words, found {rows}")));
        }
        data.extend(core::iter::repeat_n(0.0, m)); // OOV row
        let vectors = Tensor::matrix(n + 1, m, data).expect("validated finite");
        Ok(EmbeddingTable { vocab_index, vectors })
    }

    pub fn dim(&self) -> usize {
        self.vectors.cols()
    }

    pub fn vocab_len(&self) -> usize {
        self.vectors.rows() - 1
    }

    /// True when every vocabulary row is identical: all similarities collapse
    /// to 1 and scores carry no signal. Callers should warn.
    pub fn is_degenerate(&self) -> bool {
        let n = self.vocab_len();
        if n < 2 {
            return false;
        }
        let first = self.vectors.row(0);
        (1..n).all(|i| self.vectors.row(i) == first)
    }

    fn row_of(&self, word: &str) -> &[f64] {
        let idx = self.vocab_index.get(word).copied().unwrap_or(self.vocab_len());
        self.vectors.row(idx)
    }

    /// Mean of the words' vectors (OOV rows included in the mean).
    pub fn embed_words<'a>(&self, words: impl Iterator<Item = &'a str>) -> Vec<f64> {
        let mut acc = vec![0.0; self.dim()];
        let mut k = 0usize;
        for w in words {
            for (a, v) in acc.iter_mut().zip(self.row_of(w)) {
                *a += v;
            }
            k += 1;
        }
        if k > 0 {
            for a in &mut acc {
                *a /= k as f64;
            }
        }
        acc
    }
}

/// [`PhraseEmbedder`] over a static table: plugs the Table-2-style ablation
/// into the same aggregation as the s2v backend.
pub struct StaticEmbedder<'t>(pub &'t EmbeddingTable);

impl PhraseEmbedder for StaticEmbedder<'_> {
    fn embed(&self, phrase: &Phrase) -> Result<Vec<f64>, ScoringError> {
        Ok(self.0.embed_words(phrase.words()))
    }
}

// ── tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phrase::Tagger;
    use crate::scoring::{score_captions, score_phrase_sets};

    /// Frozen oracle corpus: (candidate, reference, [bleu1..bleu4 smoothed,
    /// rouge_l]), values computed independently from the metric definitions.
    /// Some entries happen to land on named constants (sqrt(1/2)); they stay
    /// as the oracle printed them.
    #[allow(clippy::approx_constant)]
    const CORPUS: &[(&str, &str, [f64; 5])] = &[
        (
            "a dog barking in the yard",
            "a dog barking in the yard",
            [1.000000000000, 1.000000000000, 1.000000000000, 1.000000000000, 1.000000000000],
        ),
        (
            "the the the",
            "the cat",
            [0.333333333333, 0.000018257419, 0.000000693361, 0.000000135120, 0.400000000000],
        ),
        (
            "a b c d",
            "a c d",
            [0.750000000000, 0.500000000000, 0.000629960525, 0.000022360680, 0.857142857143],
        ),
        (
            "heavy rain falling on the roof",
            "rain falling on a roof",
            [0.666666666667, 0.516397779494, 0.405480133038, 0.002857440430, 0.727272727273],
        ),
        (
            "a clock ticking steadily",
            "a clock ticks in a quiet room",
            [0.236183276371, 0.192842837629, 0.000259953332, 0.000009544239, 0.363636363636],
        ),
        (
            "birds chirping and wind blowing",
            "wind blowing and birds chirping",
            [1.000000000000, 0.707106781187, 0.000793700526, 0.000026591479, 0.400000000000],
        ),
        (
            "an engine idles nearby",
            "a car engine idling nearby",
            [0.389400391536, 0.000017414515, 0.000000618135, 0.000000116458, 0.444444444444],
        ),
        (
            "completely different words here",
            "nothing matches at all",
            [0.000000001000, 0.000000001000, 0.000000001000, 0.000000001000, 0.000000000000],
        ),
        (
            "a a a a",
            "a a",
            [0.500000000000, 0.408248290464, 0.000550321208, 0.000020205155, 0.666666666667],
        ),
        (
            "music playing",
            "loud music playing in the background",
            [0.135335283237, 0.135335283237, 0.000135335283, 0.000004279677, 0.500000000000],
        ),
    ];

    #[test]
    fn corpus_matches_frozen_oracles() {
        for (cand, reference, want) in CORPUS {
            for n in 1..=4usize {
                let got = bleu_n(cand, &[reference], n, Smoothing::AddEpsilon).unwrap();
                assert!(
                    (got - want[n - 1]).abs() < 1e-9,
                    "bleu_{n}({cand:?}, {reference:?}) = {got}, want {}",
                    want[n - 1]
                );
            }
            let got = rouge_l(cand, reference).unwrap();
            assert!(
                (got - want[4]).abs() < 1e-9,
                "rouge_l({cand:?}, {reference:?}) = {got}, want {}",
                want[4]
            );
        }
    }

    #[test]
    fn bleu_multi_reference_uses_best_match_and_closest_length() {
        let refs = ["a cat on the mat", "the cat"];
        for n in 1..=2 {
            let got = bleu_n("a cat", &refs, n, Smoothing::AddEpsilon).unwrap();
            assert!((got - 1.0).abs() < 1e-12, "n={n}: {got}");
        }
    }

    #[test]
    fn bleu_unsmoothed_zeroes_out() {
        let z = bleu_n(
            "completely different words here",
            &["nothing matches at all"],
            1,
            Smoothing::None,
        )
        .unwrap();
        assert_eq!(z, 0.0);
        let z = bleu_n(
            "heavy rain falling on the roof",
            &["rain falling on a roof"],
            4,
            Smoothing::None,
        )
        .unwrap();
        assert_eq!(z, 0.0);
        // Nonzero orders are unaffected by smoothing choice.
        let a = bleu_n("a b c d", &["a c d"], 2, Smoothing::None).unwrap();
        let b = bleu_n("a b c d", &["a c d"], 2, Smoothing::AddEpsilon).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn bleu_contract_errors() {
        assert!(matches!(
            bleu_n("a", &["b"], 0, Smoothing::AddEpsilon),
            Err(BaselineError::BadN { n: 0 })
        ));
        assert!(matches!(
            bleu_n("a", &["b"], 5, Smoothing::AddEpsilon),
            Err(BaselineError::BadN { n: 5 })
        ));
        assert!(matches!(
            bleu_n("...", &["b"], 1, Smoothing::AddEpsilon),
            Err(BaselineError::Empty { side: "candidate" })
        ));
        assert!(matches!(
            bleu_n("a", &[], 1, Smoothing::AddEpsilon),
            Err(BaselineError::Empty { side: "reference" })
        ));
        assert!(matches!(
            rouge_l("a", "!!"),
            Err(BaselineError::Empty { side: "reference" })
        ));
    }

    #[test]
    fn one_hot_phrase_score_matches_bag_of_words_oracle() {
        let vocab: Vec<String> =
            ["a", "dog", "barking"].iter().map(|s| s.to_string()).collect();
        let table = EmbeddingTable::one_hot(&vocab).unwrap();
        assert!(!table.is_degenerate());
        let tagger = Tagger::new();
        let cand = vec![Phrase::manual("a dog barking", &tagger).unwrap()];
        let refs = vec![Phrase::manual("a dog", &tagger).unwrap()];
        let t = score_phrase_sets(&StaticEmbedder(&table), &cand, &refs).unwrap();
        // tf vectors (1,1,1)/3 and (1,1,0)/2: cosine = 2/(√3·√2) = √(2/3).
        let want = num::sqrt(2.0 / 3.0);
        assert!((t.p - want).abs() < 1e-12);
        assert!((t.r - want).abs() < 1e-12);
    }

    #[test]
    fn degenerate_table_scores_everything_one() {
        let table = EmbeddingTable::parse("2 2\ndog 1 1\ncat 1 1\n").unwrap();
        assert!(table.is_degenerate());
        let tagger = Tagger::new();
        let t = score_captions(&StaticEmbedder(&table), &tagger, "a dog", "a cat").unwrap();
        assert!((t.f - 1.0).abs() < 1e-12);
    }

    #[test]
    fn oov_words_match_nothing_in_parsed_tables() {
        let table = EmbeddingTable::parse("1 2\ndog 1.0 0.5\n").unwrap();
        let tagger = Tagger::new();
        let t = score_captions(&StaticEmbedder(&table), &tagger, "zebra noise", "a dog").unwrap();
        // "zebra noise" embeds to the zero OOV mean; cosine against anything is 0.
        assert_eq!(t.p, 0.0);
        assert_eq!(t.f, 0.0);
    }

    #[test]
    fn table_parsing_round_trip_and_errors() {
        let table = EmbeddingTable::parse("2 3\ndog 1 2 3\ncat 0.5 -1 2e-1\n").unwrap();
        assert_eq!(table.vocab_len(), 2);
        assert_eq!(table.dim(), 3);
        assert_eq!(table.embed_words(["cat"].into_iter()), vec![0.5, -1.0, 0.2]);
        assert_eq!(table.embed_words(["unknown"].into_iter()), vec![0.0, 0.0, 0.0]);
        let mean = table.embed_words(["dog", "cat"].into_iter());
        assert!((mean[0] - 0.75).abs() < 1e-12);

        let err = |s: &str| EmbeddingTable::parse(s).unwrap_err().to_string();
        assert!(err("").contains("empty table"));
        assert!(err("x y\n").contains("bad word count"));
        assert!(err("1 2\ndog 1\n").contains("expected 2 values"));
        assert!(err("1 2\ndog 1 nan\n").contains("non-finite"));
        assert!(err("2 1\ndog 1\ndog 2\n").contains("duplicate"));
        assert!(err("2 1\ndog 1\n").contains("promised 2 words"));
        assert!(err("1 1\ndog 1\ncat 2\n").contains("more than 1"));
    }
}
