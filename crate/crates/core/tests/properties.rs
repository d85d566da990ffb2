//! Randomized property tests for the numeric kernels, the scorer's
//! aggregation algebra, and the phrase extractor's structural invariants.

use proptest::collection::vec as pvec;
use proptest::prelude::*;

use tags2v_core::ops::{self, Padding};
use tags2v_core::phrase::{Phrase, Tagger};
use tags2v_core::scoring::{aggregate_epsilon, score_phrase_sets, PhraseEmbedder, ScoringError};
use tags2v_core::tensor::Tensor;
use tags2v_core::{bleu_n, Smoothing};

// ── helpers ─────────────────────────────────────────────────────────────────

fn finite(lo: f64, hi: f64) -> impl Strategy<Value = f64> {
    (lo..hi).prop_map(|x| (x * 1e6).round() / 1e6)
}

fn tensor2(t: usize, c: usize, lo: f64, hi: f64) -> impl Strategy<Value = Tensor> {
    pvec(finite(lo, hi), t * c).prop_map(move |data| Tensor::new(vec![t, c], data).unwrap())
}

/// Brute-force cross-correlation with explicit padding, the oracle conv1d
/// must match.
fn conv_oracle(x: &Tensor, w: &Tensor, b: &Tensor, same: bool) -> Vec<f64> {
    let (t, cin) = (x.rows(), x.cols());
    let (cout, k) = (w.shape()[0], w.shape()[2]);
    let (t_out, left) = if same { (t, (k - 1) / 2) } else { (t - k + 1, 0) };
    let mut out = vec![0.0; t_out * cout];
    for ti in 0..t_out {
        for co in 0..cout {
            let mut acc = b.data()[co];
            for ci in 0..cin {
                for kj in 0..k {
                    let src = ti + kj;
                    if same {
                        if src < left || src - left >= t {
                            continue;
                        }
                        acc += x.at2(src - left, ci) * w.data()[co * cin * k + ci * k + kj];
                    } else {
                        acc += x.at2(src, ci) * w.data()[co * cin * k + ci * k + kj];
                    }
                }
            }
            out[ti * cout + co] = acc;
        }
    }
    out
}

/// Embedder that maps each phrase to a fixed pseudo-random unit-free vector
/// derived from its text, so equal text means equal embedding.
struct HashEmbedder;

impl PhraseEmbedder for HashEmbedder {
    fn embed(&self, phrase: &Phrase) -> Result<Vec<f64>, ScoringError> {
        let text = phrase.text();
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in text.bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        Ok((0..6)
            .map(|i| {
                h = h.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407 + i);
                ((h >> 33) as f64 / (1u64 << 31) as f64) - 0.5 + 0.1
            })
            .collect())
    }
}

fn phrases_from_words(words: &[String]) -> Vec<Phrase> {
    let tagger = Tagger::new();
    words.iter().map(|w| Phrase::manual(w, &tagger).unwrap()).collect()
}

fn word() -> impl Strategy<Value = String> {
    // Letter-only words so one word is always one token.
    "[a-z]{2,8}"
}

// ── numeric kernels ─────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn conv1d_matches_brute_force(
        t in 3usize..10,
        cin in 1usize..4,
        cout in 1usize..4,
        k in prop::sample::select(vec![1usize, 3, 5]),
        seed_x in 0u64..1000,
    ) {
        prop_assume!(k <= t);
        let x = Tensor::from_fn(vec![t, cin], |i| {
            (((i as u64 + seed_x) * 2654435761 % 1000) as f64) / 500.0 - 1.0
        }).unwrap();
        let w = Tensor::from_fn(vec![cout, cin, k], |i| {
            (((i as u64 + 7 + seed_x) * 40503 % 1000) as f64) / 500.0 - 1.0
        }).unwrap();
        let b = Tensor::from_fn(vec![cout], |i| i as f64 / 10.0 - 0.1).unwrap();
        for same in [true, false] {
            let pad = if same { Padding::Same } else { Padding::Valid };
            let got = ops::conv1d(&x, &w, &b, pad).unwrap();
            let want = conv_oracle(&x, &w, &b, same);
            for (g, w_) in got.data().iter().zip(&want) {
                prop_assert!((g - w_).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn pool_then_upsample_restores_length(
        t in 1usize..40,
        c in 1usize..4,
        window in 1usize..6,
    ) {
        let x = Tensor::from_fn(vec![t, c], |i| (i % 7) as f64 - 3.0).unwrap();
        let pooled = ops::lp_pool(&x, 4.0, window).unwrap();
        prop_assert_eq!(pooled.rows(), t.div_ceil(window));
        let up = ops::upsample_linear(&pooled, t).unwrap();
        prop_assert_eq!(up.shape(), &[t, c]);
        // Endpoints are preserved exactly by the interpolation.
        prop_assert_eq!(up.row(0), pooled.row(0));
        prop_assert_eq!(up.row(t - 1), pooled.row(pooled.rows() - 1));
    }

    #[test]
    fn s2v_similarities_stay_in_unit_interval(
        e_a in tensor2(6, 4, -3.0, 3.0),
        e_p in pvec(finite(-3.0, 3.0), 4),
    ) {
        let e_p = Tensor::vector(e_p).unwrap();
        let s = ops::exp_neg_l2(&e_a, &e_p).unwrap();
        for &v in s.data() {
            prop_assert!(v > 0.0 && v <= 1.0);
        }
    }
}

// ── scoring algebra ─────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn aggregate_matches_brute_force(
        alpha in 1usize..7,
        beta in 1usize..7,
        seed in 0u64..10_000,
    ) {
        let sim = |i: usize, j: usize| -> f64 {
            let h = (i as u64 * 31 + j as u64 * 17 + seed) * 2654435761 % 1000;
            h as f64 / 1000.0 + 0.0005
        };
        let matrix: Vec<Vec<f64>> =
            (0..alpha).map(|i| (0..beta).map(|j| sim(i, j)).collect()).collect();
        let (p, r, f) = aggregate_epsilon(&matrix);
        // Brute force directly off the definition.
        let bp: f64 = matrix
            .iter()
            .map(|row| row.iter().cloned().fold(f64::MIN, f64::max))
            .sum::<f64>() / alpha as f64;
        let br: f64 = (0..beta)
            .map(|j| (0..alpha).map(|i| matrix[i][j]).fold(f64::MIN, f64::max))
            .sum::<f64>() / beta as f64;
        let bf = if bp + br > 0.0 { 2.0 * bp * br / (bp + br) } else { 0.0 };
        prop_assert!((p - bp).abs() < 1e-12);
        prop_assert!((r - br).abs() < 1e-12);
        prop_assert!((f - bf).abs() < 1e-12);
    }

    #[test]
    fn identical_phrase_sets_score_one(words in pvec(word(), 1..5)) {
        let phrases = phrases_from_words(&words);
        let triple = score_phrase_sets(&HashEmbedder, &phrases, &phrases).unwrap();
        prop_assert!((triple.p - 1.0).abs() < 1e-9);
        prop_assert!((triple.r - 1.0).abs() < 1e-9);
        prop_assert!((triple.f - 1.0).abs() < 1e-9);
    }

    #[test]
    fn swapping_sides_swaps_precision_and_recall(
        cand in pvec(word(), 1..5),
        refs in pvec(word(), 1..5),
    ) {
        let c = phrases_from_words(&cand);
        let r = phrases_from_words(&refs);
        let ab = score_phrase_sets(&HashEmbedder, &c, &r).unwrap();
        let ba = score_phrase_sets(&HashEmbedder, &r, &c).unwrap();
        prop_assert!((ab.p - ba.r).abs() < 1e-12);
        prop_assert!((ab.r - ba.p).abs() < 1e-12);
        prop_assert!((ab.f - ba.f).abs() < 1e-12);
        prop_assert_eq!(ab.alpha, ba.beta);
        prop_assert_eq!(ab.beta, ba.alpha);
    }

    #[test]
    fn duplicating_candidate_phrases_changes_nothing(
        cand in pvec(word(), 1..4),
        refs in pvec(word(), 1..4),
        dup_index in 0usize..4,
    ) {
        let mut c = phrases_from_words(&cand);
        let r = phrases_from_words(&refs);
        let base = score_phrase_sets(&HashEmbedder, &c, &r).unwrap();
        c.push(c[dup_index % c.len()].clone());
        let dup = score_phrase_sets(&HashEmbedder, &c, &r).unwrap();
        prop_assert_eq!(base, dup);
    }
}

// ── phrase extraction invariants ────────────────────────────────────────────

fn caption() -> impl Strategy<Value = String> {
    pvec(
        prop::sample::select(vec![
            "a", "the", "dog", "barking", "heavy", "rain", "fan", "noise", "in", "background",
            "distant", "footsteps", "and", "then", "loud", "engine", "birds", "is", "very",
            "thunder", "rumbling", "with", "people", "talking", "water",
        ]),
        1..12,
    )
    .prop_map(|ws| ws.join(" "))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn extraction_is_ordered_disjoint_and_idempotent(text in caption()) {
        let tagger = Tagger::new();
        let phrases = tagger.phrases_of(&text).unwrap();
        let mut last_end = 0usize;
        for (i, p) in phrases.iter().enumerate() {
            prop_assert!(!p.tokens.is_empty());
            let (s, e) = p.span;
            prop_assert!(s < e, "empty span");
            if i > 0 {
                prop_assert!(s >= last_end, "phrases overlap or disorder in {text:?}");
            }
            last_end = e;
            // Idempotence: a phrase's own text re-extracts as one identical
            // phrase.
            let again = tagger.phrases_of(&p.text()).unwrap();
            prop_assert_eq!(again.len(), 1, "re-extraction of {:?} split", p.text());
            prop_assert_eq!(again[0].text(), p.text());
        }
    }
}

// ── baseline metrics ────────────────────────────────────────────────────────

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn bleu1_ignores_word_order_bleu_stays_in_unit_range(
        words in pvec(word(), 1..8),
        rot in 0usize..8,
    ) {
        let cand = words.join(" ");
        let mut rotated = words.clone();
        rotated.rotate_left(rot % words.len());
        let cand_rot = rotated.join(" ");
        let reference = words.join(" ");
        let b1 = bleu_n(&cand, &[&reference], 1, Smoothing::AddEpsilon).unwrap();
        let b1_rot = bleu_n(&cand_rot, &[&reference], 1, Smoothing::AddEpsilon).unwrap();
        // Unigram BLEU is a bag-of-words statistic.
        prop_assert!((b1 - b1_rot).abs() < 1e-12);
        for n in 1..=4 {
            let b = bleu_n(&cand_rot, &[&reference], n, Smoothing::AddEpsilon).unwrap();
            prop_assert!((0.0..=1.0 + 1e-12).contains(&b));
        }
    }
}
