//! Synthetic clip generation: seeded event placement over a noise floor,
//! template captions, and exact grounding spans. The class bank is built so
//! that alias pairs are textually disjoint at the content-noun level while
//! mapping to identical synthesis recipes, which is the substrate for the
//! acoustic-coherence tests.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use core::f64::consts::PI;

use crate::num;
use crate::rng::sub_rng;

// ── constants ───────────────────────────────────────────────────────────────

/// Generated audio sample rate, fixed by the frontend contract.
pub const SAMPLE_RATE: u32 = 16_000;
/// Peak amplitude of a placed event after normalization.
pub const EVENT_AMP: f64 = 0.3;
/// Noise-floor amplitude: -40 dBFS.
pub const NOISE_AMP: f64 = 0.01;
/// Event length bounds in seconds.
pub const EVENT_MIN_S: f64 = 0.3;
pub const EVENT_MAX_S: f64 = 1.0;
/// Minimum silence between events and at clip edges.
const MIN_GAP_S: f64 = 0.1;
/// Attack ramp baked into each event onset, seconds.
const ATTACK_S: f64 = 0.005;
/// Captions generated per clip.
pub const CAPTIONS_PER_CLIP: usize = 5;
/// Root seed for per-class canonical waveforms. Class audio must depend only
/// on the class name, never on the clip seed, so that every event of a class
/// is an identical recording.
const CLASS_STREAM_ROOT: u64 = 0x7461_6773_3276_5f63;

// ── types ───────────────────────────────────────────────────────────────────

/// Synthesis recipe. All frequency parameters live in the audible band
/// checked by [`SoundClass::validate`]; `rate` is temporal, not spectral.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Recipe {
    Tone { freq: f64 },
    NoiseBurst { low: f64, high: f64 },
    ClickTrain { rate: f64, carrier: f64 },
    Chirp { f0: f64, f1: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoundClass {
    pub name: String,
    pub recipe: Recipe,
    /// Textually distinct phrases naming this sound; every alias must extract
    /// as a single phrase equal to itself.
    pub aliases: Vec<String>,
}

/// One placed event; `class` names a [`SoundClass`]. Times in seconds,
/// quantized to whole samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthEvent {
    pub class: String,
    pub t_s: f64,
    pub t_e: f64,
}

/// Grounding entry: a phrase (an alias used by some caption) and the spans of
/// the events it names.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundingEntry {
    pub phrase: String,
    pub spans: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthClip {
    pub clip_id: String,
    /// 16 kHz mono samples in [-1, 1], length a multiple of the 10 ms hop.
    pub samples: Vec<f64>,
    pub events: Vec<SynthEvent>,
    pub captions: Vec<String>,
    pub grounding: Vec<GroundingEntry>,
}

/// Generation profile. The default has no labeling noise; the noisy profile
/// jitters reported spans by up to ±50 ms without touching the audio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthProfile {
    pub span_jitter_s: f64,
}

impl Default for SynthProfile {
    fn default() -> Self {
        SynthProfile { span_jitter_s: 0.0 }
    }
}

impl SynthProfile {
    pub fn noisy() -> Self {
        SynthProfile { span_jitter_s: 0.05 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthError {
    #[error("class {class:?}: {field} = {value} Hz outside audible band 100-7000 Hz")]
    BandError { class: String, field: &'static str, value: f64 },
    #[error("class {class:?}: {why}")]
    BadRecipe { class: String, why: String },
    #[error("class {class:?} needs at least 2 aliases")]
    TooFewAliases { class: String },
    #[error("gen_clip needs at least one class")]
    NoClasses,
    #[error("clip duration {duration_s} s is below the 2 s minimum")]
    DurationTooShort { duration_s: f64 },
    #[error("{events} events cannot fit in {duration_s} s")]
    CannotFit { events: usize, duration_s: f64 },
}

// ── class bank ──────────────────────────────────────────────────────────────

const AUDIBLE_LOW_HZ: f64 = 100.0;
const AUDIBLE_HIGH_HZ: f64 = 7000.0;

impl SoundClass {
    pub fn new(name: &str, recipe: Recipe, aliases: &[&str]) -> Result<Self, SynthError> {
        let class = SoundClass {
            name: name.to_string(),
            recipe,
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
        };
        class.validate()?;
        Ok(class)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let band = |field: &'static str, value: f64| -> Result<(), SynthError> {
            if !(AUDIBLE_LOW_HZ..=AUDIBLE_HIGH_HZ).contains(&value) {
                return Err(SynthError::BandError { class: self.name.clone(), field, value });
            }
            Ok(())
        };
        match self.recipe {
            Recipe::Tone { freq } => band("freq", freq)?,
            Recipe::NoiseBurst { low, high } => {
                band("low", low)?;
                band("high", high)?;
                if low >= high {
                    return Err(SynthError::BadRecipe {
                        class: self.name.clone(),
                        why: format!("noise band low {low} must be below high {high}"),
                    });
                }
            }
            Recipe::ClickTrain { rate, carrier } => {
                band("carrier", carrier)?;
                if !(0.5..=100.0).contains(&rate) {
                    return Err(SynthError::BadRecipe {
                        class: self.name.clone(),
                        why: format!("click rate {rate} Hz outside 0.5-100 Hz"),
                    });
                }
            }
            Recipe::Chirp { f0, f1 } => {
                band("f0", f0)?;
                band("f1", f1)?;
            }
        }
        if self.aliases.len() < 2 {
            return Err(SynthError::TooFewAliases { class: self.name.clone() });
        }
        Ok(())
    }
}

/// Six classes, two aliases each. Alias pairs never share a content noun, and
/// each alias extracts as exactly one phrase equal to its own text.
pub fn default_bank() -> Vec<SoundClass> {
    vec![
        SoundClass::new("tone-440", Recipe::Tone { freq: 440.0 }, &[
            "an alarm beeping",
            "a phone ringing",
        ])
        .expect("bank entry"),
        SoundClass::new("tone-180", Recipe::Tone { freq: 180.0 }, &[
            "a deep engine humming",
            "a low motor droning",
        ])
        .expect("bank entry"),
        SoundClass::new("hiss-high", Recipe::NoiseBurst { low: 1800.0, high: 4200.0 }, &[
            "heavy rain falling",
            "a waterfall roaring",
        ])
        .expect("bank entry"),
        SoundClass::new("rumble-low", Recipe::NoiseBurst { low: 300.0, high: 900.0 }, &[
            "strong wind blowing",
            "a furnace rumbling",
        ])
        .expect("bank entry"),
        SoundClass::new("clicks-7", Recipe::ClickTrain { rate: 7.0, carrier: 2200.0 }, &[
            "a clock ticking",
            "a turn signal clicking",
        ])
        .expect("bank entry"),
        SoundClass::new("sweep-up", Recipe::Chirp { f0: 500.0, f1: 2500.0 }, &[
            "a siren wailing",
            "an ambulance passing",
        ])
        .expect("bank entry"),
    ]
}

// ── waveform synthesis ──────────────────────────────────────────────────────

/// Canonical 1 s waveform for a class: every event is a prefix of this
/// buffer, so two events of the same class are identical recordings over
/// their common length. Peak-normalized to EVENT_AMP with the attack ramp
/// applied at the start.
fn canonical_buffer(class: &SoundClass) -> Vec<f64> {
    let sr = SAMPLE_RATE as f64;
    let n = SAMPLE_RATE as usize;
    let mut buf = vec![0.0f64; n];
    match class.recipe {
        Recipe::Tone { freq } => {
            for (i, s) in buf.iter_mut().enumerate() {
                *s = num::sin(2.0 * PI * freq * i as f64 / sr);
            }
        }
        Recipe::NoiseBurst { low, high } => {
            let mut rng = sub_rng(CLASS_STREAM_ROOT, &format!("class/{}", class.name));
            let parts = 32;
            for _ in 0..parts {
                let f = low + (high - low) * rng.random::<f64>();
                let phase = 2.0 * PI * rng.random::<f64>();
                for (i, s) in buf.iter_mut().enumerate() {
                    *s += num::sin(2.0 * PI * f * i as f64 / sr + phase);
                }
            }
        }
        Recipe::ClickTrain { rate, carrier } => {
            let click_len = (0.005 * sr) as usize;
            let mut t = 0.0;
            while t < 1.0 {
                let start = (t * sr) as usize;
                for j in 0..click_len.min(n - start.min(n)) {
                    let tau = j as f64 / sr;
                    buf[start + j] +=
                        num::exp(-tau / 0.0015) * num::sin(2.0 * PI * carrier * tau);
                }
                t += 1.0 / rate;
            }
        }
        Recipe::Chirp { f0, f1 } => {
            for (i, s) in buf.iter_mut().enumerate() {
                let t = i as f64 / sr;
                *s = num::sin(2.0 * PI * (f0 * t + 0.5 * (f1 - f0) * t * t));
            }
        }
    }
    let peak = buf.iter().fold(0.0f64, |m, &x| m.max(num::abs(x)));
    let scale = if peak > 0.0 { EVENT_AMP / peak } else { 0.0 };
    let attack = (ATTACK_S * sr) as usize;
    for (i, s) in buf.iter_mut().enumerate() {
        let ramp = if i < attack {
            0.5 * (1.0 - num::cos(PI * i as f64 / attack as f64))
        } else {
            1.0
        };
        *s *= scale * ramp;
    }
    buf
}

// ── clip generation ─────────────────────────────────────────────────────────

/// Caption templates per event count; `{a}`/`{b}`/`{c}` are alias slots. Every
/// template mentions every event, and the extra words never extract as
/// phrases of their own.
fn templates(k: usize) -> &'static [&'static str] {
    match k {
        1 => &["{a}", "{a} in the background", "{a} is audible", "{a} recorded outdoors"],
        2 => &[
            "{a} followed by {b}",
            "{a} and {b}",
            "{b} with {a} in the background",
            "{a} before {b}",
        ],
        _ => &[
            "{a} followed by {b} and {c}",
            "{a} and {b} with {c} in the background",
            "{a} before {b} and {c}",
        ],
    }
}

fn render_caption(template: &str, aliases: &[&str]) -> String {
    let mut out = template
        .replace("{a}", aliases[0])
        .replace("{b}", aliases.get(1).copied().unwrap_or(""))
        .replace("{c}", aliases.get(2).copied().unwrap_or(""));
    if let Some(first) = out.get(..1) {
        let upper = first.to_uppercase();
        out.replace_range(..1, &upper);
    }
    out
}

/// Generate one clip containing exactly one event per entry of `classes`.
///
/// Everything (placement, alias choice, captions, noise) is a pure function
/// of `(classes, duration_s, seed, profile)`. The clip length is quantized
/// down to the 10 ms feature hop so grounding spans always land inside the
/// frame grid.
pub fn gen_clip_with_profile(
    classes: &[SoundClass],
    duration_s: f64,
    seed: u64,
    profile: SynthProfile,
) -> Result<SynthClip, SynthError> {
    if classes.is_empty() {
        return Err(SynthError::NoClasses);
    }
    if !(duration_s >= 2.0) {
        return Err(SynthError::DurationTooShort { duration_s });
    }
    for class in classes {
        class.validate()?;
    }
    let sr = SAMPLE_RATE as f64;
    let hop = 160usize;
    let n_samples = ((duration_s * sr) as usize / hop) * hop;
    let duration = n_samples as f64 / sr;
    let k = classes.len();

    // Event lengths: cap so k events plus margins always fit if any choice
    // can. A clip that cannot hold `k` minimum-length events is an error.
    let budget = duration - MIN_GAP_S * (k + 1) as f64;
    let d_max = EVENT_MAX_S.min(budget / k as f64);
    if d_max < EVENT_MIN_S {
        return Err(SynthError::CannotFit { events: k, duration_s });
    }

    let mut rng = sub_rng(seed, "clip/layout");
    let mut order: Vec<usize> = (0..k).collect();
    order.shuffle(&mut rng);
    let durs: Vec<f64> = (0..k).map(|_| rng.random_range(EVENT_MIN_S..=d_max)).collect();
    let slack = budget - durs.iter().sum::<f64>();
    let weights: Vec<f64> = (0..=k).map(|_| rng.random::<f64>() + 1e-9).collect();
    let wsum: f64 = weights.iter().sum();

    let mut events = Vec::with_capacity(k);
    let mut cursor = 0.0;
    for (slot, &ci) in order.iter().enumerate() {
        cursor += MIN_GAP_S + slack * weights[slot] / wsum;
        let start_idx = (cursor * sr) as usize;
        let len_idx = (durs[slot] * sr) as usize;
        events.push((ci, start_idx, start_idx + len_idx));
        cursor = (start_idx + len_idx) as f64 / sr;
    }

    // Mix: noise floor plus canonical-prefix events.
    let mut noise_rng = sub_rng(seed, "clip/noise");
    let mut samples: Vec<f64> =
        (0..n_samples).map(|_| NOISE_AMP * (2.0 * noise_rng.random::<f64>() - 1.0)).collect();
    for &(ci, start, end) in &events {
        let buf = canonical_buffer(&classes[ci]);
        for (j, s) in samples[start..end].iter_mut().enumerate() {
            *s += buf[j];
        }
    }

    // Captions: sample distinct (template, alias combo, slot order) entries.
    let alias_counts: Vec<usize> = classes.iter().map(|c| c.aliases.len()).collect();
    let tpls = templates(k);
    let mut perms: Vec<Vec<usize>> = Vec::new();
    permutations(k, &mut vec![], &mut vec![false; k], &mut perms);
    let mut pool: Vec<(usize, usize, usize)> = Vec::new();
    let combo_count: usize = alias_counts.iter().product();
    for t in 0..tpls.len() {
        for combo in 0..combo_count {
            for p in 0..perms.len() {
                pool.push((t, combo, p));
            }
        }
    }
    let mut cap_rng = sub_rng(seed, "clip/captions");
    let n_caps = CAPTIONS_PER_CLIP.min(pool.len());
    let (chosen, _) = pool.partial_shuffle(&mut cap_rng, n_caps);
    let mut captions = Vec::with_capacity(n_caps);
    let mut used_aliases: Vec<Vec<bool>> = alias_counts.iter().map(|&n| vec![false; n]).collect();
    for &(t, combo, p) in chosen.iter() {
        // Decode the mixed-radix alias combo: one alias index per class.
        let mut alias_idx = Vec::with_capacity(k);
        let mut rest = combo;
        for &n in &alias_counts {
            alias_idx.push(rest % n);
            rest /= n;
        }
        // Slot s of the template holds the perm[s]-th class.
        let slot_aliases: Vec<&str> = perms[p]
            .iter()
            .map(|&ci| classes[ci].aliases[alias_idx[ci]].as_str())
            .collect();
        for (ci, &ai) in alias_idx.iter().enumerate() {
            used_aliases[ci][ai] = true;
        }
        captions.push(render_caption(tpls[t], &slot_aliases));
    }

    // Grounding: every alias used by some caption maps to its class's spans.
    let mut jitter_rng = sub_rng(seed, "clip/jitter");
    let mut spans_by_class: Vec<Vec<(f64, f64)>> = vec![Vec::new(); k];
    for &(ci, start, end) in &events {
        let (mut t_s, mut t_e) = (start as f64 / sr, end as f64 / sr);
        if profile.span_jitter_s > 0.0 {
            let j = profile.span_jitter_s;
            t_s = (t_s + rng_jitter(&mut jitter_rng, j)).max(0.0);
            t_e = (t_e + rng_jitter(&mut jitter_rng, j)).min(duration);
            if t_e <= t_s {
                t_e = (t_s + 0.05).min(duration);
            }
        }
        spans_by_class[ci].push((t_s, t_e));
    }
    let mut grounding = Vec::new();
    for (ci, class) in classes.iter().enumerate() {
        for (ai, alias) in class.aliases.iter().enumerate() {
            if used_aliases[ci][ai] {
                grounding
                    .push(GroundingEntry { phrase: alias.clone(), spans: spans_by_class[ci].clone() });
            }
        }
    }

    let mut events_out: Vec<SynthEvent> = events
        .iter()
        .map(|&(ci, start, end)| SynthEvent {
            class: classes[ci].name.clone(),
            t_s: start as f64 / sr,
            t_e: end as f64 / sr,
        })
        .collect();
    events_out.sort_by(|a, b| a.t_s.partial_cmp(&b.t_s).expect("finite"));

    Ok(SynthClip {
        clip_id: format!("synth-{seed:016x}"),
        samples,
        events: events_out,
        captions,
        grounding,
    })
}

/// [`gen_clip_with_profile`] with the clean default profile.
pub fn gen_clip(classes: &[SoundClass], duration_s: f64, seed: u64) -> Result<SynthClip, SynthError> {
    gen_clip_with_profile(classes, duration_s, seed, SynthProfile::default())
}

fn rng_jitter<R: Rng>(rng: &mut R, limit: f64) -> f64 {
    limit * (2.0 * rng.random::<f64>() - 1.0)
}

fn permutations(k: usize, cur: &mut Vec<usize>, used: &mut Vec<bool>, out: &mut Vec<Vec<usize>>) {
    if cur.len() == k {
        out.push(cur.clone());
        return;
    }
    for i in 0..k {
        if !used[i] {
            used[i] = true;
            cur.push(i);
            permutations(k, cur, used, out);
            cur.pop();
            used[i] = false;
        }
    }
}

// ── tests ───────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phrase::{Tag, Tagger};
    use alloc::collections::BTreeSet;

    #[test]
    fn bank_is_valid_and_aliases_share_no_content_noun() {
        let bank = default_bank();
        assert_eq!(bank.len(), 6);
        let tagger = Tagger::new();
        let mut all_aliases = BTreeSet::new();
        for class in &bank {
            class.validate().unwrap();
            let noun_sets: Vec<BTreeSet<String>> = class
                .aliases
                .iter()
                .map(|a| {
                    tagger
                        .pos_tag(a)
                        .unwrap()
                        .into_iter()
                        .filter(|t| t.tag == Tag::Noun)
                        .map(|t| t.text)
                        .collect()
                })
                .collect();
            for i in 0..noun_sets.len() {
                assert!(!noun_sets[i].is_empty(), "alias without a content noun in {}", class.name);
                for j in i + 1..noun_sets.len() {
                    assert!(
                        noun_sets[i].is_disjoint(&noun_sets[j]),
                        "aliases of {} share a content noun",
                        class.name
                    );
                }
            }
            for alias in &class.aliases {
                assert!(all_aliases.insert(alias.clone()), "alias reused across bank: {alias}");
            }
        }
    }

    #[test]
    fn every_alias_extracts_as_itself() {
        let tagger = Tagger::new();
        for class in default_bank() {
            for alias in &class.aliases {
                let phrases = tagger.phrases_of(alias).unwrap();
                assert_eq!(phrases.len(), 1, "alias {alias:?} must be a single phrase");
                assert_eq!(phrases[0].text(), *alias);
            }
        }
    }

    #[test]
    fn captions_extract_to_exactly_the_event_aliases() {
        let tagger = Tagger::new();
        let bank = default_bank();
        for seed in 0..8u64 {
            let k = 1 + (seed as usize) % 3;
            let clip = gen_clip(&bank[..k], 4.0, seed).unwrap();
            assert!(clip.captions.len() >= 2);
            let alias_pool: BTreeSet<&str> = bank[..k]
                .iter()
                .flat_map(|c| c.aliases.iter().map(|a| a.as_str()))
                .collect();
            for caption in &clip.captions {
                let phrases = tagger.phrases_of(caption).unwrap();
                assert_eq!(phrases.len(), k, "caption {caption:?} extracted {phrases:?}");
                // One phrase per event, each an alias of a distinct class.
                let mut classes_seen = BTreeSet::new();
                for p in &phrases {
                    let text = p.text();
                    assert!(alias_pool.contains(text.as_str()), "unexpected phrase {text:?}");
                    let class = bank.iter().position(|c| c.aliases.contains(&text)).unwrap();
                    assert!(classes_seen.insert(class));
                }
            }
        }
    }

    #[test]
    fn spans_match_placement_and_do_not_overlap() {
        let bank = default_bank();
        let clip = gen_clip(&bank[..3], 4.0, 9).unwrap();
        assert_eq!(clip.events.len(), 3);
        for w in clip.events.windows(2) {
            assert!(w[0].t_e <= w[1].t_s, "events overlap: {:?}", clip.events);
        }
        for e in &clip.events {
            let d = e.t_e - e.t_s;
            assert!((EVENT_MIN_S - 1e-3..=EVENT_MAX_S + 1e-3).contains(&d));
            assert!(e.t_s >= MIN_GAP_S - 1e-9);
            assert!(e.t_e <= clip.samples.len() as f64 / 16000.0 - MIN_GAP_S + 1e-9);
        }
        // Grounding spans are exactly the event spans for the alias's class.
        for g in &clip.grounding {
            let class = bank.iter().find(|c| c.aliases.contains(&g.phrase)).unwrap();
            let expected: Vec<(f64, f64)> = clip
                .events
                .iter()
                .filter(|e| e.class == class.name)
                .map(|e| (e.t_s, e.t_e))
                .collect();
            assert_eq!(g.spans, expected);
        }
        // Sample count sits on the 10 ms hop grid.
        assert_eq!(clip.samples.len() % 160, 0);
    }

    #[test]
    fn single_tone_event_in_four_seconds() {
        let bank = default_bank();
        let clip = gen_clip(&bank[..1], 4.0, 3).unwrap();
        assert_eq!(clip.events.len(), 1);
        let spans = &clip.grounding[0].spans;
        assert_eq!(spans.len(), 1);
        let d = spans[0].1 - spans[0].0;
        assert!((EVENT_MIN_S..=EVENT_MAX_S).contains(&d));
        // Event frames carry far more energy than the noise floor.
        let (start, end) =
            ((spans[0].0 * 16000.0) as usize, (spans[0].1 * 16000.0) as usize);
        let rms = |xs: &[f64]| {
            num::sqrt(xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64)
        };
        let inside = rms(&clip.samples[start..end]);
        let outside = rms(&clip.samples[..start]);
        assert!(inside > 10.0 * outside, "inside {inside} vs outside {outside}");
        assert!(clip.samples.iter().all(|x| x.abs() <= 1.0));
    }

    #[test]
    fn same_seed_is_bit_identical_different_seed_is_not() {
        let bank = default_bank();
        let a = gen_clip(&bank, 4.0, 77).unwrap();
        let b = gen_clip(&bank, 4.0, 77).unwrap();
        assert_eq!(a.captions, b.captions);
        assert_eq!(a.events, b.events);
        assert!(a
            .samples
            .iter()
            .zip(&b.samples)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = gen_clip(&bank, 4.0, 78).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn shared_class_means_acoustically_identical_segments() {
        let bank = default_bank();
        let a = gen_clip(&bank[2..3], 4.0, 100).unwrap();
        let b = gen_clip(&bank[2..3], 4.0, 200).unwrap();
        let (sa, sb) = (&a.grounding[0].spans[0], &b.grounding[0].spans[0]);
        let ia = (sa.0 * 16000.0) as usize;
        let ib = (sb.0 * 16000.0) as usize;
        let la = ((sa.1 - sa.0) * 16000.0) as usize;
        let lb = ((sb.1 - sb.0) * 16000.0) as usize;
        let common = la.min(lb);
        assert!(common > 4000);
        // Same class ⇒ same canonical buffer; only the noise floors differ.
        for j in 0..common {
            let diff = (a.samples[ia + j] - b.samples[ib + j]).abs();
            assert!(diff <= 2.0 * NOISE_AMP + 1e-12, "sample {j} differs by {diff}");
        }
    }

    #[test]
    fn noisy_profile_jitters_spans_only() {
        let bank = default_bank();
        let clean = gen_clip(&bank[..2], 4.0, 55).unwrap();
        let noisy =
            gen_clip_with_profile(&bank[..2], 4.0, 55, SynthProfile::noisy()).unwrap();
        assert_eq!(clean.samples, noisy.samples);
        assert_eq!(clean.events, noisy.events);
        let mut moved = 0;
        for (g_clean, g_noisy) in clean.grounding.iter().zip(&noisy.grounding) {
            assert_eq!(g_clean.phrase, g_noisy.phrase);
            for (s_clean, s_noisy) in g_clean.spans.iter().zip(&g_noisy.spans) {
                assert!((s_clean.0 - s_noisy.0).abs() <= 0.05 + 1e-12);
                assert!((s_clean.1 - s_noisy.1).abs() <= 0.05 + 1e-12);
                assert!(s_noisy.0 < s_noisy.1);
                if s_clean != s_noisy {
                    moved += 1;
                }
            }
        }
        assert!(moved > 0, "noisy profile must actually jitter spans");
    }

    #[test]
    fn generation_errors() {
        let bank = default_bank();
        assert_eq!(gen_clip(&[], 4.0, 0), Err(SynthError::NoClasses));
        assert_eq!(
            gen_clip(&bank[..1], 1.0, 0),
            Err(SynthError::DurationTooShort { duration_s: 1.0 })
        );
        // Six 0.3 s events need 1.8 s of sound plus 0.7 s of gaps: > 2.0 s.
        assert_eq!(
            gen_clip(&bank, 2.0, 0),
            Err(SynthError::CannotFit { events: 6, duration_s: 2.0 })
        );
        let bad = SoundClass::new("bad", Recipe::Tone { freq: 50.0 }, &["a", "b"]);
        assert_eq!(
            bad,
            Err(SynthError::BandError { class: "bad".into(), field: "freq", value: 50.0 })
        );
        let inverted =
            SoundClass::new("inv", Recipe::NoiseBurst { low: 900.0, high: 300.0 }, &["a", "b"]);
        assert!(matches!(inverted, Err(SynthError::BadRecipe { .. })));
        let lonely = SoundClass::new("one", Recipe::Tone { freq: 440.0 }, &["only alias"]);
        assert_eq!(lonely, Err(SynthError::TooFewAliases { class: "one".into() }));
    }
}
