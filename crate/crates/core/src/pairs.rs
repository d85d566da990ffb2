//! Caption-pair construction for the evaluation harness. Two pair kinds:
//! correct pairs (CCP, two captions of the same clip, label 1) and incorrect
//! pairs (ICP, captions of different clips, label 0). Both pools are
//! enumerated exactly and sampled without replacement, so pair sets are a
//! pure function of (input, counts, seed).

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::rng::sub_rng;

// ── types ───────────────────────────────────────────────────────────────────

/// One clip's caption list, the unit pairs are built from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipCaptions {
    pub clip_id: String,
    pub captions: Vec<String>,
}

/// A labeled caption pair. `label` is 1 for same-clip (CCP), 0 for
/// cross-clip (ICP).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionPair {
    pub pair_id: String,
    pub clip_a: String,
    pub clip_b: String,
    pub caption_a: String,
    pub caption_b: String,
    pub label: u8,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PairError {
    #[error("duplicate clip id {0:?}")]
    DuplicateClip(String),
    #[error("clip {clip_id:?} has an empty caption list")]
    NoCaptions { clip_id: String },
    #[error("{kind} pool holds {available} pairs, {requested} requested")]
    PoolTooSmall { kind: &'static str, requested: usize, available: usize },
}

// ── pool sizes ──────────────────────────────────────────────────────────────

/// Number of distinct same-clip caption pairs: Σ C(c_i, 2).
pub fn ccp_pool_size(clips: &[ClipCaptions]) -> usize {
    clips.iter().map(|c| c.captions.len() * c.captions.len().saturating_sub(1) / 2).sum()
}

/// Number of distinct cross-clip caption pairs: (S² − Σ c_i²) / 2.
pub fn icp_pool_size(clips: &[ClipCaptions]) -> usize {
    let total: usize = clips.iter().map(|c| c.captions.len()).sum();
    let same: usize = clips.iter().map(|c| c.captions.len() * c.captions.len()).sum();
    (total * total - same) / 2
}

// ── sampling ────────────────────────────────────────────────────────────────

/// Draw `n` distinct elements from `pool` with a partial Fisher-Yates pass.
fn sample_without_replacement<T: Copy, R: Rng>(pool: &mut [T], n: usize, rng: &mut R) -> Vec<T> {
    debug_assert!(n <= pool.len());
    let (taken, _) = pool.partial_shuffle(rng, n);
    taken.to_vec()
}

/// Build `n_ccp` same-clip and `n_icp` cross-clip pairs.
///
/// Within a pair, captions keep enumeration order: CCP pairs order by caption
/// index, ICP pairs by (clip index, caption index). Pair ids are
/// "ccp-0000".."" then "icp-0000".."" in sampled order.
pub fn build_pairs(
    clips: &[ClipCaptions],
    n_ccp: usize,
    n_icp: usize,
    seed: u64,
) -> Result<Vec<CaptionPair>, PairError> {
    let mut seen = BTreeSet::new();
    for clip in clips {
        if !seen.insert(clip.clip_id.as_str()) {
            return Err(PairError::DuplicateClip(clip.clip_id.clone()));
        }
        if clip.captions.is_empty() {
            return Err(PairError::NoCaptions { clip_id: clip.clip_id.clone() });
        }
    }

    let ccp_avail = ccp_pool_size(clips);
    if n_ccp > ccp_avail {
        return Err(PairError::PoolTooSmall { kind: "ccp", requested: n_ccp, available: ccp_avail });
    }
    let icp_avail = icp_pool_size(clips);
    if n_icp > icp_avail {
        return Err(PairError::PoolTooSmall { kind: "icp", requested: n_icp, available: icp_avail });
    }

    // (clip, caption, caption) triples; clip indices fit u32 comfortably.
    let mut ccp_pool: Vec<(u32, u32, u32)> = Vec::with_capacity(ccp_avail);
    for (ci, clip) in clips.iter().enumerate() {
        for a in 0..clip.captions.len() {
            for b in a + 1..clip.captions.len() {
                ccp_pool.push((ci as u32, a as u32, b as u32));
            }
        }
    }
    let mut icp_pool: Vec<(u32, u32, u32, u32)> = Vec::with_capacity(icp_avail);
    for (ci, clip_i) in clips.iter().enumerate() {
        for cj in ci + 1..clips.len() {
            for a in 0..clip_i.captions.len() {
                for b in 0..clips[cj].captions.len() {
                    icp_pool.push((ci as u32, a as u32, cj as u32, b as u32));
                }
            }
        }
    }
    debug_assert_eq!(ccp_pool.len(), ccp_avail);
    debug_assert_eq!(icp_pool.len(), icp_avail);

    let mut pairs = Vec::with_capacity(n_ccp + n_icp);
    let mut rng = sub_rng(seed, "pairs/ccp");
    for (i, (ci, a, b)) in
        sample_without_replacement(&mut ccp_pool, n_ccp, &mut rng).into_iter().enumerate()
    {
        let clip = &clips[ci as usize];
        pairs.push(CaptionPair {
            pair_id: format!("ccp-{i:04}"),
            clip_a: clip.clip_id.clone(),
            clip_b: clip.clip_id.clone(),
            caption_a: clip.captions[a as usize].clone(),
            caption_b: clip.captions[b as usize].clone(),
            label: 1,
        });
    }
    let mut rng = sub_rng(seed, "pairs/icp");
    for (i, (ci, a, cj, b)) in
        sample_without_replacement(&mut icp_pool, n_icp, &mut rng).into_iter().enumerate()
    {
        pairs.push(CaptionPair {
            pair_id: format!("icp-{i:04}"),
            clip_a: clips[ci as usize].clip_id.clone(),
            clip_b: clips[cj as usize].clip_id.clone(),
            caption_a: clips[ci as usize].captions[a as usize].clone(),
            caption_b: clips[cj as usize].captions[b as usize].clone(),
            label: 0,
        });
    }
    Ok(pairs)
}

// ── tests ───────────────────────────────────────────────────────────────────
