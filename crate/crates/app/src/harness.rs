//! CCP/ICP evaluation harness: run registered metrics over one seed-pinned
//! caption-pair list and report per-class means, point-biserial correlation,
//! and ROC-AUC per metric.
//!
//! Every metric sees the identical pair list (checksummed over pair ids). A
//! pair that fails under any metric is excluded for all metrics so the
//! comparison stays paired; exclusions are counted and named in the report.

use std::cell::RefCell;
use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};
use tags2v_core::baseline::{bleu_n, rouge_l, EmbeddingTable, Smoothing, StaticEmbedder};
use tags2v_core::features::FeatureMatrix;
use tags2v_core::model::TagModel;
use tags2v_core::pairs::CaptionPair;
use tags2v_core::phrase::Tagger;
use tags2v_core::scoring::{score_captions, S2vScorer};
use tags2v_core::stats::correlate;

use crate::config::{ProbeMode, RunConfig};
use crate::error::AppError;
use crate::manifest::ManifestRecord;

// ── metrics ─────────────────────────────────────────────────────────────────

/// A caption-pair scorer. Scores must be finite and, for every metric here,
/// orderable so that higher means "more alike".
pub trait Metric {
    fn name(&self) -> &str;
    fn score(&self, pair: &CaptionPair) -> Result<f64, AppError>;
}

/// TAGS2V f-score. Both captions of a pair embed against the same probe
/// audio (the pair's first clip in `Own` mode, one pinned clip in `Fixed`),
/// so their s2v embeddings live in a comparable space.
pub struct Tags2vMetric<'a> {
    model: &'a TagModel,
    features: &'a BTreeMap<String, FeatureMatrix>,
    probe: ProbeMode,
    tagger: Tagger,
    // Audio encoding dominates the cost; one scorer per distinct probe clip.
    cache: RefCell<BTreeMap<String, S2vScorer<'a>>>,
}

impl<'a> Tags2vMetric<'a> {
    pub fn new(
        model: &'a TagModel,
        features: &'a BTreeMap<String, FeatureMatrix>,
        probe: ProbeMode,
    ) -> Result<Self, AppError> {
        if let ProbeMode::Fixed(id) = &probe {
            if !features.contains_key(id) {
                return Err(AppError::usage(format!(
                    "fixed probe clip {id:?} is not in the manifest"
                )));
            }
        }
        Ok(Tags2vMetric {
            model,
            features,
            probe,
            tagger: Tagger::new(),
            cache: RefCell::new(BTreeMap::new()),
        })
    }
}

impl Metric for Tags2vMetric<'_> {
    fn name(&self) -> &str {
        "tags2v"
    }

    fn score(&self, pair: &CaptionPair) -> Result<f64, AppError> {
        let probe_id = match &self.probe {
            ProbeMode::Own => pair.clip_a.as_str(),
            ProbeMode::Fixed(id) => id.as_str(),
        };
        {
            let mut cache = self.cache.borrow_mut();
            if !cache.contains_key(probe_id) {
                let feats = self.features.get(probe_id).ok_or_else(|| {
                    AppError::data(format!("probe clip {probe_id:?} has no features"))
                })?;
                let scorer = S2vScorer::new(self.model, feats, probe_id)?;
                cache.insert(probe_id.to_string(), scorer);
            }
        }
        let cache = self.cache.borrow();
        let scorer = cache.get(probe_id).expect("scorer cached above");
        let triple = score_captions(scorer, &self.tagger, &pair.caption_a, &pair.caption_b)?;
        Ok(triple.f)
    }
}

/// Static word-embedding f-score: same aggregation as TAGS2V but phrases
/// embed as mean one-hot word vectors, blind to how anything sounds.
pub struct StaticMetric<'a> {
    table: &'a EmbeddingTable,
    tagger: Tagger,
}

impl<'a> StaticMetric<'a> {
    pub fn new(table: &'a EmbeddingTable) -> StaticMetric<'a> {
        StaticMetric { table, tagger: Tagger::new() }
    }
}

impl Metric for StaticMetric<'_> {
    fn name(&self) -> &str {
        "static"
    }

    fn score(&self, pair: &CaptionPair) -> Result<f64, AppError> {
        let embedder = StaticEmbedder(self.table);
        let triple = score_captions(&embedder, &self.tagger, &pair.caption_a, &pair.caption_b)?;
        Ok(triple.f)
    }
}

/// Sentence BLEU-n, symmetrized as the mean of both directions so one
/// unordered pair gets one score.
pub struct BleuMetric {
    n: usize,
    name: String,
}

impl BleuMetric {
    pub fn new(n: usize) -> Result<BleuMetric, AppError> {
        if !(1..=4).contains(&n) {
            return Err(AppError::usage(format!("bleu order {n} outside 1..=4")));
        }
        Ok(BleuMetric { n, name: format!("bleu{n}") })
    }
}

impl Metric for BleuMetric {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, pair: &CaptionPair) -> Result<f64, AppError> {
        let ab = bleu_n(&pair.caption_a, &[&pair.caption_b], self.n, Smoothing::AddEpsilon)?;
        let ba = bleu_n(&pair.caption_b, &[&pair.caption_a], self.n, Smoothing::AddEpsilon)?;
        Ok(0.5 * (ab + ba))
    }
}

/// ROUGE-L F1 (already symmetric in candidate/reference).
pub struct RougeMetric;

impl Metric for RougeMetric {
    fn name(&self) -> &str {
        "rougel"
    }

    fn score(&self, pair: &CaptionPair) -> Result<f64, AppError> {
        Ok(rouge_l(&pair.caption_a, &pair.caption_b)?)
    }
}

/// Oracle that returns the pair label itself. Wiring check: its correlation
/// must come out exactly 1.
pub struct LabelMetric;

impl Metric for LabelMetric {
    fn name(&self) -> &str {
        "label"
    }

    fn score(&self, pair: &CaptionPair) -> Result<f64, AppError> {
        Ok(f64::from(pair.label))
    }
}

// ── registry ────────────────────────────────────────────────────────────────

/// Everything a metric might need; commands fill in what they loaded.
pub struct MetricContext<'a> {
    pub model: Option<&'a TagModel>,
    pub features: Option<&'a BTreeMap<String, FeatureMatrix>>,
    pub probe: ProbeMode,
    pub static_table: Option<&'a EmbeddingTable>,
}

pub const METRIC_NAMES: &[&str] = &["tags2v", "static", "bleu1", "bleu4", "rougel", "label"];

pub fn build_metric<'a>(
    name: &str,
    ctx: &MetricContext<'a>,
) -> Result<Box<dyn Metric + 'a>, AppError> {
    match name {
        "tags2v" => {
            let (Some(model), Some(features)) = (ctx.model, ctx.features) else {
                return Err(AppError::usage(
                    "metric \"tags2v\" needs a model checkpoint and clip audio",
                ));
            };
            Ok(Box::new(Tags2vMetric::new(model, features, ctx.probe.clone())?))
        }
        "static" => {
            let Some(table) = ctx.static_table else {
                return Err(AppError::usage("metric \"static\" needs an embedding table"));
            };
            Ok(Box::new(StaticMetric::new(table)))
        }
        "bleu1" => Ok(Box::new(BleuMetric::new(1)?)),
        "bleu4" => Ok(Box::new(BleuMetric::new(4)?)),
        "rougel" => Ok(Box::new(RougeMetric)),
        "label" => Ok(Box::new(LabelMetric)),
        other => Err(AppError::usage(format!(
            "unknown metric {other:?}; known metrics: {}",
            METRIC_NAMES.join(", ")
        ))),
    }
}

pub fn build_metrics<'a>(
    names: &[String],
    ctx: &MetricContext<'a>,
) -> Result<Vec<Box<dyn Metric + 'a>>, AppError> {
    if names.is_empty() {
        return Err(AppError::usage("no metrics requested"));
    }
    names.iter().map(|n| build_metric(n, ctx)).collect()
}

/// Sorted vocabulary of every caption word in the manifest, tokenized the
/// same way phrases are, for building the static baseline's one-hot table.
pub fn caption_vocab(records: &[ManifestRecord]) -> Result<Vec<String>, AppError> {
    let tagger = Tagger::new();
    let mut vocab = std::collections::BTreeSet::new();
    for record in records {
        for caption in &record.captions {
            for token in tagger.pos_tag(caption)? {
                vocab.insert(token.text);
            }
        }
    }
    Ok(vocab.into_iter().collect())
}

// ── report ──────────────────────────────────────────────────────────────────

/// One metric's aggregate row. Undefined statistics (constant scores, one
/// class empty) are reported in `error` instead of poisoning the run.
#[derive(Debug, Clone, Serialize)]
pub struct MetricRow {
    pub metric: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_ccp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_icp: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub point_biserial: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub auc: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExcludedPair {
    pub pair_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// Fully resolved configuration the run used.
    pub config: RunConfig,
    pub n_ccp: usize,
    pub n_icp: usize,
    pub pairs_used: usize,
    pub excluded: Vec<ExcludedPair>,
    /// SHA-256 over the sorted pair ids; equal checksums mean every metric
    /// row was computed over the identical pair list.
    pub pair_checksum: String,
    pub rows: Vec<MetricRow>,
}

/// Per-pair scores (parallel to `report.rows`), for the optional CSV dump.
#[derive(Debug, Clone)]
pub struct PairScores {
    pub pair_id: String,
    pub label: u8,
    pub clip_a: String,
    pub clip_b: String,
    pub excluded: bool,
    pub scores: Vec<Option<f64>>,
}

pub struct EvalOutcome {
    pub report: EvalReport,
    pub per_pair: Vec<PairScores>,
}

pub fn pair_checksum(pairs: &[CaptionPair]) -> String {
    let mut hasher = Sha256::new();
    for pair in pairs {
        hasher.update(pair.pair_id.as_bytes());
        hasher.update(b"\n");
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn mean(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        None
    } else {
        Some(values.iter().sum::<f64>() / values.len() as f64)
    }
}

/// Scores every pair with every metric and aggregates. Pairs are processed
/// in pair-id order; a pair failing under any metric is dropped from all of
/// them so the per-metric statistics stay paired.
pub fn run_eval(
    pairs: &[CaptionPair],
    metrics: &[Box<dyn Metric + '_>],
    config: &RunConfig,
) -> Result<EvalOutcome, AppError> {
    if metrics.is_empty() {
        return Err(AppError::usage("no metrics to evaluate"));
    }
    let mut sorted: Vec<&CaptionPair> = pairs.iter().collect();
    sorted.sort_by(|a, b| a.pair_id.cmp(&b.pair_id));

    let mut per_pair = Vec::with_capacity(sorted.len());
    let mut excluded = Vec::new();
    for pair in &sorted {
        let mut scores = Vec::with_capacity(metrics.len());
        let mut reason: Option<String> = None;
        for metric in metrics {
            match metric.score(pair) {
                Ok(s) if s.is_finite() => scores.push(Some(s)),
                Ok(s) => {
                    reason.get_or_insert(format!("{}: non-finite score {s}", metric.name()));
                    scores.push(None);
                }
                Err(e) => {
                    reason.get_or_insert(format!("{}: {e}", metric.name()));
                    scores.push(None);
                }
            }
        }
        if let Some(reason) = &reason {
            excluded.push(ExcludedPair { pair_id: pair.pair_id.clone(), reason: reason.clone() });
        }
        per_pair.push(PairScores {
            pair_id: pair.pair_id.clone(),
            label: pair.label,
            clip_a: pair.clip_a.clone(),
            clip_b: pair.clip_b.clone(),
            excluded: reason.is_some(),
            scores,
        });
    }

    let used: Vec<&PairScores> = per_pair.iter().filter(|p| !p.excluded).collect();
    let mut rows = Vec::with_capacity(metrics.len());
    for (m, metric) in metrics.iter().enumerate() {
        let scores: Vec<f64> =
            used.iter().map(|p| p.scores[m].expect("used pairs have all scores")).collect();
        let labels: Vec<u8> = used.iter().map(|p| p.label).collect();
        let ccp: Vec<f64> = scores
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == 1)
            .map(|(s, _)| *s)
            .collect();
        let icp: Vec<f64> = scores
            .iter()
            .zip(&labels)
            .filter(|(_, l)| **l == 0)
            .map(|(s, _)| *s)
            .collect();
        let (point_biserial, auc, error) = match correlate(&scores, &labels) {
            Ok((r, auc)) => (Some(r), Some(auc), None),
            Err(e) => (None, None, Some(e.to_string())),
        };
        rows.push(MetricRow {
            metric: metric.name().to_string(),
            mean_ccp: mean(&ccp),
            mean_icp: mean(&icp),
            point_biserial,
            auc,
            error,
        });
    }

    let report = EvalReport {
        config: config.clone(),
        n_ccp: sorted.iter().filter(|p| p.label == 1).count(),
        n_icp: sorted.iter().filter(|p| p.label == 0).count(),
        pairs_used: used.len(),
        excluded,
        pair_checksum: {
            let owned: Vec<CaptionPair> = sorted.iter().map(|p| (*p).clone()).collect();
            pair_checksum(&owned)
        },
        rows,
    };
    Ok(EvalOutcome { report, per_pair })
}

// ── rendering ───────────────────────────────────────────────────────────────

/// Stable pretty JSON (trailing newline) for the report artifact.
pub fn report_json(report: &EvalReport) -> Result<String, AppError> {
    let json = serde_json::to_string_pretty(report)
        .map_err(|e| AppError::data(format!("report serialization failed: {e}")))?;
    Ok(json + "\n")
}

fn cell(value: Option<f64>) -> String {
    match value {
        Some(v) => format!("{v:>12.6}"),
        None => format!("{:>12}", "-"),
    }
}

/// Aligned plain-text table for terminals.
pub fn render_table(report: &EvalReport) -> String {
    let name_w = report.rows.iter().map(|r| r.metric.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_w$} {:>12} {:>12} {:>12} {:>12}\n",
        "metric", "mean_ccp", "mean_icp", "r_pb", "auc"
    ));
    out.push_str(&format!("{}\n", "-".repeat(name_w + 4 * 13)));
    for row in &report.rows {
        out.push_str(&format!(
            "{:<name_w$} {} {} {} {}",
            row.metric,
            cell(row.mean_ccp),
            cell(row.mean_icp),
            cell(row.point_biserial),
            cell(row.auc),
        ));
        if let Some(err) = &row.error {
            out.push_str(&format!("  ({err})"));
        }
        out.push('\n');
    }
    out.push_str(&format!(
        "pairs: {} used ({} ccp, {} icp, {} excluded)  checksum: {}\n",
        report.pairs_used,
        report.n_ccp,
        report.n_icp,
        report.excluded.len(),
        &report.pair_checksum[..12],
    ));
    out
}

/// Per-pair CSV with the effective config as a leading comment. Failed
/// scores are left empty; `excluded` marks pairs dropped from aggregation.
pub fn per_pair_csv(outcome: &EvalOutcome) -> Result<String, AppError> {
    let config = serde_json::to_string(&outcome.report.config)
        .map_err(|e| AppError::data(format!("config serialization failed: {e}")))?;
    let mut out = format!("# config: {config}\n");
    out.push_str("pair_id,label,clip_a,clip_b,excluded");
    for row in &outcome.report.rows {
        out.push(',');
        out.push_str(&row.metric);
    }
    out.push('\n');
    for pair in &outcome.per_pair {
        out.push_str(&format!(
            "{},{},{},{},{}",
            pair.pair_id,
            pair.label,
            pair.clip_a,
            pair.clip_b,
            u8::from(pair.excluded)
        ));
        for score in &pair.scores {
            out.push(',');
            if let Some(s) = score {
                out.push_str(&format!("{s}"));
            }
        }
        out.push('\n');
    }
    Ok(out)
}

// ── tests ───────────────────────────────────────────────────────────────────
