//! Rule-based part-of-speech tagging and sound-event phrase extraction.
//!
//! Captions are tokenized, each token is assigned a coarse tag from a small
//! closed-class lexicon plus suffix heuristics, and candidate sound-event
//! phrases are matched greedily left to right with the pattern
//!
//! ```text
//! DET? ADV? ADJ* NOUN+ VERB?
//! ```
//!
//! where the trailing verb slot only accepts present participles ("a dog
//! barking"), not finite or past forms. Phrases whose head noun is a bare
//! locative governed by a preposition ("in the background") are dropped.
//!
//! The tagger is intentionally tiny and deterministic: no learned weights, no
//! external models, so extraction is reproducible byte for byte everywhere.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

// ── errors ──────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PhraseError {
    /// The caption contained no alphanumeric tokens after normalization.
    #[error("caption contains no words")]
    EmptyCaption,
}

// ── tags ────────────────────────────────────────────────────────────────────

/// Coarse part-of-speech tag set used by the extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Tag {
    Det,
    Adj,
    Noun,
    Verb,
    Adv,
    Prep,
    Pron,
    Conj,
    Num,
    Other,
}

impl Tag {
    pub fn as_str(self) -> &'static str {
        match self {
            Tag::Det => "DET",
            Tag::Adj => "ADJ",
            Tag::Noun => "NOUN",
            Tag::Verb => "VERB",
            Tag::Adv => "ADV",
            Tag::Prep => "PREP",
            Tag::Pron => "PRON",
            Tag::Conj => "CONJ",
            Tag::Num => "NUM",
            Tag::Other => "OTHER",
        }
    }
}

impl core::fmt::Display for Tag {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A normalized token together with its tag and position in the caption.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaggedToken {
    pub text: String,
    pub tag: Tag,
    /// Token index within the caption (not a byte offset).
    pub index: usize,
}

// ── phrases ─────────────────────────────────────────────────────────────────

/// How a phrase came into existence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhraseSource {
    /// Matched by the extractor from a full caption.
    Automatic,
    /// Supplied directly (annotation files, CLI arguments).
    Manual,
}

/// A contiguous run of caption tokens naming one sound event.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Phrase {
    pub tokens: Vec<TaggedToken>,
    /// Half-open token span `[start, end)` in the source caption.
    pub span: (usize, usize),
    pub source: PhraseSource,
}

impl Phrase {
    /// Space-joined surface form, already lowercase.
    pub fn text(&self) -> String {
        let words: Vec<&str> = self.tokens.iter().map(|t| t.text.as_str()).collect();
        words.join(" ")
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.tokens.iter().map(|t| t.text.as_str())
    }

    /// Wraps externally supplied phrase text. The text is tokenized and tagged
    /// but not pattern-matched: manual phrases are trusted as given.
    pub fn manual(text: &str, tagger: &Tagger) -> Result<Phrase, PhraseError> {
        let tokens = tagger.pos_tag(text)?;
        let span = (0, tokens.len());
        Ok(Phrase { tokens, span, source: PhraseSource::Manual })
    }
}

// ── tokenization ────────────────────────────────────────────────────────────

/// Lowercases and splits a caption into word tokens. Any character that is not
/// ASCII-alphanumeric or an apostrophe separates tokens, so hyphenated words
/// split into their parts. Shared by the tagger and the string-overlap
/// baselines so every consumer sees identical tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut cur = String::new();
    for ch in text.chars() {
        let ch = ch.to_ascii_lowercase();
        if ch.is_ascii_alphanumeric() || ch == '\'' {
            cur.push(ch);
        } else if !cur.is_empty() {
            out.push(core::mem::take(&mut cur));
        }
    }
    if !cur.is_empty() {
        out.push(cur);
    }
    // Trim apostrophes that only quoted the word, keep internal ones ("dog's").
    out.iter_mut().for_each(|w| {
        while w.starts_with('\'') {
            w.remove(0);
        }
        while w.ends_with('\'') {
            w.pop();
        }
    });
    out.retain(|w| !w.is_empty());
    out
}

// ── tagger ──────────────────────────────────────────────────────────────────

fn parse_lexicon(src: &'static str) -> BTreeSet<&'static str> {
    src.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

/// Lexicon-driven tagger. Construction parses the bundled word lists; reuse
/// one instance when tagging many captions.
pub struct Tagger {
    det: BTreeSet<&'static str>,
    prep: BTreeSet<&'static str>,
    pron: BTreeSet<&'static str>,
    conj: BTreeSet<&'static str>,
    aux: BTreeSet<&'static str>,
    num: BTreeSet<&'static str>,
    noun: BTreeSet<&'static str>,
    adj: BTreeSet<&'static str>,
    adv: BTreeSet<&'static str>,
    stop_heads: BTreeSet<&'static str>,
}

impl Default for Tagger {
    fn default() -> Self {
        Self::new()
    }
}

impl Tagger {
    pub fn new() -> Self {
        Tagger {
            det: parse_lexicon(include_str!("../resources/determiners.txt")),
            prep: parse_lexicon(include_str!("../resources/prepositions.txt")),
            pron: parse_lexicon(include_str!("../resources/pronouns.txt")),
            conj: parse_lexicon(include_str!("../resources/conjunctions.txt")),
            aux: parse_lexicon(include_str!("../resources/auxiliaries.txt")),
            num: parse_lexicon(include_str!("../resources/numbers.txt")),
            noun: parse_lexicon(include_str!("../resources/nouns.txt")),
            adj: parse_lexicon(include_str!("../resources/adjectives.txt")),
            adv: parse_lexicon(include_str!("../resources/adverbs.txt")),
            stop_heads: parse_lexicon(include_str!("../resources/stop_heads.txt")),
        }
    }

    /// Tags one token. `prev` is the tag of the preceding token, used to
    /// disambiguate third-person verb forms from plural nouns.
    fn tag_word(&self, word: &str, prev: Option<Tag>) -> Tag {
        if word.chars().all(|c| c.is_ascii_digit()) || self.num.contains(word) {
            return Tag::Num;
        }
        if self.det.contains(word) {
            return Tag::Det;
        }
        if self.prep.contains(word) {
            return Tag::Prep;
        }
        if self.pron.contains(word) {
            return Tag::Pron;
        }
        if self.conj.contains(word) {
            return Tag::Conj;
        }
        if self.aux.contains(word) {
            return Tag::Verb;
        }
        // Explicit nouns beat the suffix rules ("morning", "recording", "bed").
        if self.noun.contains(word) {
            return Tag::Noun;
        }
        if self.adj.contains(word) {
            return Tag::Adj;
        }
        if self.adv.contains(word) {
            return Tag::Adv;
        }
        let n = word.len();
        if word.ends_with("ly") && n > 3 {
            return Tag::Adv;
        }
        if word.ends_with("ing") && n > 4 {
            return Tag::Verb;
        }
        if word.ends_with("ed") && n > 3 {
            return Tag::Verb;
        }
        // "-s" is a verb ending only after a subject-like word: "a dog barks".
        if word.ends_with('s') && !word.ends_with("ss") && n > 3 {
            if matches!(prev, Some(Tag::Noun) | Some(Tag::Pron)) {
                return Tag::Verb;
            }
        }
        Tag::Noun
    }

    /// Tokenizes and tags a caption.
    pub fn pos_tag(&self, caption: &str) -> Result<Vec<TaggedToken>, PhraseError> {
        let words = tokenize(caption);
        if words.is_empty() {
            return Err(PhraseError::EmptyCaption);
        }
        let mut out: Vec<TaggedToken> = Vec::with_capacity(words.len());
        for (index, text) in words.into_iter().enumerate() {
            let prev = out.last().map(|t| t.tag);
            let tag = self.tag_word(&text, prev);
            out.push(TaggedToken { text, tag, index });
        }
        Ok(out)
    }

    /// Matches `DET? ADV? ADJ* NOUN+ VERB?` anchored at `start`; returns the
    /// exclusive end index of the longest match, or `None`. The verb slot only
    /// accepts "-ing" forms so clause boundaries ("rainfall followed by ...")
    /// do not leak into the phrase.
    fn match_pattern(&self, tokens: &[TaggedToken], start: usize) -> Option<usize> {
        let mut j = start;
        if j < tokens.len() && tokens[j].tag == Tag::Det {
            j += 1;
        }
        if j < tokens.len() && tokens[j].tag == Tag::Adv {
            j += 1;
        }
        while j < tokens.len() && tokens[j].tag == Tag::Adj {
            j += 1;
        }
        let noun_start = j;
        while j < tokens.len() && tokens[j].tag == Tag::Noun {
            j += 1;
        }
        if j == noun_start {
            return None;
        }
        if j < tokens.len() && tokens[j].tag == Tag::Verb && tokens[j].text.ends_with("ing") {
            j += 1;
        }
        Some(j)
    }

    /// Greedy left-to-right extraction. Matches never overlap and are returned
    /// in caption order. A match whose head noun (its last noun) is a bare
    /// locative and whose determiner is governed by a preceding preposition is
    /// discarded ("in the background" names a place, not a sound).
    pub fn extract_phrases(&self, tokens: &[TaggedToken]) -> Vec<Phrase> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let Some(end) = self.match_pattern(tokens, i) else {
                i += 1;
                continue;
            };
            let slice = tokens[i..end].to_owned();
            let governed = i > 0 && tokens[i - 1].tag == Tag::Prep;
            let head = slice.iter().rev().find(|t| t.tag == Tag::Noun);
            let drop = governed
                && head.is_some_and(|h| self.stop_heads.contains(h.text.as_str()));
            if !drop {
                out.push(Phrase { tokens: slice, span: (i, end), source: PhraseSource::Automatic });
            }
            i = end;
        }
        out
    }

    /// Convenience: tag a caption and extract its candidate phrases.
    pub fn phrases_of(&self, caption: &str) -> Result<Vec<Phrase>, PhraseError> {
        Ok(self.extract_phrases(&self.pos_tag(caption)?))
    }
}

// ── tests ───────────────────────────────────────────────────────────────────
