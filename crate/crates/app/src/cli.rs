//! Command-line entry point. One binary, six subcommands, one config file
//! whose values individual flags may override (flags win). Failures print a
//! single-line JSON object to stderr and exit 2 (usage), 3 (data/format), or
//! 4 (numeric); success writes only to the declared outputs.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind as ClapErrorKind;
use clap::{ArgGroup, Args, Parser, Subcommand};
use serde::Serialize;
use tags2v_core::baseline::EmbeddingTable;
use tags2v_core::model::{predict_spans, TagModel};
use tags2v_core::pairs::build_pairs;
use tags2v_core::phrase::{Phrase, Tag, Tagger};
use tags2v_core::scoring::{score_captions, S2vScorer, ScoreTriple};
use tags2v_core::synth::default_bank;
use tags2v_core::train::train;

use crate::audio::{dump_features, log_mel, read_wav};
use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::config::RunConfig;
use crate::dataset::{gen_dataset, load_examples, load_features};
use crate::error::AppError;
use crate::harness::{build_metrics, caption_vocab, per_pair_csv, render_table, report_json, run_eval, MetricContext};
use crate::manifest::{clip_captions, load_manifest, validate};

// ── argument grammar ────────────────────────────────────────────────────────

#[derive(Parser)]
#[command(name = "tags2v", version, about = "Grounding-based audio caption similarity")]
struct Cli {
    /// JSON run configuration; flags override individual values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset: audio, manifests, grounding.
    GenSynth(GenSynthArgs),
    /// Train the grounding model on a manifest with grounding annotations.
    TrainTag(TrainTagArgs),
    /// Extract sound-event phrases from a caption or a whole manifest.
    ExtractPhrases(ExtractPhrasesArgs),
    /// Locate one phrase's time spans in one audio file.
    Ground(GroundArgs),
    /// Score a candidate caption against a reference caption.
    Score(ScoreArgs),
    /// Build CCP/ICP caption pairs and evaluate the configured metrics.
    EvalPairs(EvalPairsArgs),
}

#[derive(Args)]
struct GenSynthArgs {
    /// Output directory (created if missing).
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    #[arg(long)]
    n_clips: Option<usize>,
    #[arg(long)]
    duration_s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct TrainTagArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Checkpoint path to write.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Loss trace CSV (default: checkpoint path with a .loss.csv extension).
    #[arg(long, value_name = "FILE")]
    loss_csv: Option<PathBuf>,
}

#[derive(Args)]
#[command(group(ArgGroup::new("source").required(true).args(["caption", "manifest"])))]
struct ExtractPhrasesArgs {
    /// One caption to extract from.
    #[arg(long)]
    caption: Option<String>,
    /// Manifest whose captions are all extracted (one JSON line per caption).
    #[arg(long, value_name = "FILE")]
    manifest: Option<PathBuf>,
}

#[derive(Args)]
struct GroundArgs {
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    /// 16 kHz mono 16-bit PCM WAV.
    #[arg(long, value_name = "FILE")]
    audio: PathBuf,
    #[arg(long)]
    phrase: String,
    #[arg(long)]
    threshold: Option<f64>,
    /// Also dump the clip's feature matrix to this path.
    #[arg(long, value_name = "FILE")]
    dump_features: Option<PathBuf>,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long, value_name = "FILE")]
    checkpoint: PathBuf,
    #[arg(long)]
    candidate: String,
    #[arg(long)]
    reference: String,
    /// Probe audio both caption's phrases are grounded against.
    #[arg(long, value_name = "FILE")]
    probe: PathBuf,
}

#[derive(Args)]
struct EvalPairsArgs {
    #[arg(long, value_name = "FILE")]
    manifest: PathBuf,
    /// Needed whenever the metric list contains "tags2v".
    #[arg(long, value_name = "FILE")]
    checkpoint: Option<PathBuf>,
    #[arg(long)]
    n_ccp: Option<usize>,
    #[arg(long)]
    n_icp: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated metric names.
    #[arg(long, value_delimiter = ',')]
    metrics: Vec<String>,
    /// "own" or "fixed:<clip_id>".
    #[arg(long)]
    probe: Option<String>,
    /// Write the full report JSON here.
    #[arg(long, value_name = "FILE")]
    out_json: Option<PathBuf>,
    /// Write per-pair scores CSV here.
    #[arg(long, value_name = "FILE")]
    out_csv: Option<PathBuf>,
}

// ── entry point ─────────────────────────────────────────────────────────────

pub fn main() -> ExitCode {
    match run(std::env::args_os()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.kind.exit_code())
        }
    }
}

/// Parses and dispatches. Separated from [`main`] so tests can drive the
/// full pipeline without spawning processes.
pub fn run<I, T>(args: I) -> Result<(), AppError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            return match e.kind() {
                ClapErrorKind::DisplayHelp | ClapErrorKind::DisplayVersion => {
                    print!("{e}");
                    Ok(())
                }
                _ => Err(AppError::usage(first_line(&e.to_string()))),
            };
        }
    };
    let config = RunConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::GenSynth(args) => cmd_gen_synth(args, config),
        Command::TrainTag(args) => cmd_train_tag(args, config),
        Command::ExtractPhrases(args) => cmd_extract_phrases(args),
        Command::Ground(args) => cmd_ground(args, config),
        Command::Score(args) => cmd_score(args, config),
        Command::EvalPairs(args) => cmd_eval_pairs(args, config),
    }
}

fn first_line(text: &str) -> String {
    text.lines().next().unwrap_or("bad arguments").to_string()
}

fn set<T>(target: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *target = v;
    }
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

// ── subcommands ─────────────────────────────────────────────────────────────

#[derive(Serialize)]
struct GenOut {
    out_dir: String,
    manifest: String,
    n_clips: usize,
    n_train: usize,
    n_eval: usize,
    alias_pairs_across_split: usize,
}

fn cmd_gen_synth(args: GenSynthArgs, mut config: RunConfig) -> Result<(), AppError> {
    set(&mut config.synth.n_clips, args.n_clips);
    set(&mut config.synth.duration_s, args.duration_s);
    set(&mut config.seed, args.seed);
    config.validate()?;
    let bank = default_bank();
    let summary = gen_dataset(&bank, &config, &args.out)?;
    let out = GenOut {
        out_dir: args.out.display().to_string(),
        manifest: summary.manifest.display().to_string(),
        n_clips: config.synth.n_clips,
        n_train: summary.n_train,
        n_eval: summary.n_eval,
        alias_pairs_across_split: summary.alias_pairs_across_split,
    };
    println!("{}", to_json_line(&out)?);
    Ok(())
}

#[derive(Serialize)]
struct TrainOut {
    checkpoint: String,
    loss_csv: String,
    epochs: usize,
    final_loss: f64,
    examples: usize,
    vocab_size: usize,
    config: RunConfig,
}

fn cmd_train_tag(args: TrainTagArgs, mut config: RunConfig) -> Result<(), AppError> {
    set(&mut config.train.epochs, args.epochs);
    set(&mut config.train.lr, args.lr);
    set(&mut config.seed, args.seed);
    config.validate()?;
    let records = load_manifest(&args.manifest)?;
    validate(&records)?;
    let (examples, vocab) = load_examples(&args.manifest, &records)?;
    let vocab_size = vocab.len();
    let mut model = TagModel::new(config.tag_model_config(vocab))?;
    let report = train(&mut model, &examples, &config.train_config())?;
    for (epoch, loss) in report.epoch_loss.iter().enumerate() {
        eprintln!("epoch {}/{}: loss {loss:.6}", epoch + 1, report.epoch_loss.len());
    }
    save_checkpoint(&model, &args.out)?;

    let loss_csv = args.loss_csv.unwrap_or_else(|| args.out.with_extension("loss.csv"));
    let mut csv = format!(
        "# config: {}\nepoch,loss\n",
        serde_json::to_string(&config)
            .map_err(|e| AppError::data(format!("config serialization failed: {e}")))?
    );
    for (epoch, loss) in report.epoch_loss.iter().enumerate() {
        csv.push_str(&format!("{},{loss}\n", epoch + 1));
    }
    fs::write(&loss_csv, csv)?;

    let out = TrainOut {
        checkpoint: args.out.display().to_string(),
        loss_csv: loss_csv.display().to_string(),
        epochs: report.epoch_loss.len(),
        final_loss: *report.epoch_loss.last().unwrap_or(&f64::NAN),
        examples: examples.len(),
        vocab_size,
        config,
    };
    println!("{}", to_json_line(&out)?);
    Ok(())
}

#[derive(Serialize)]
struct PhraseOut {
    text: String,
    tags: Vec<Tag>,
    span: [usize; 2],
}

#[derive(Serialize)]
struct ExtractOut<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    clip_id: Option<&'a str>,
    caption: &'a str,
    phrases: Vec<PhraseOut>,
}

fn phrase_out(phrase: &Phrase) -> PhraseOut {
    PhraseOut {
        text: phrase.text(),
        tags: phrase.tokens.iter().map(|t| t.tag).collect(),
        span: [phrase.span.0, phrase.span.1],
    }
}

fn cmd_extract_phrases(args: ExtractPhrasesArgs) -> Result<(), AppError> {
    let tagger = Tagger::new();
    if let Some(caption) = &args.caption {
        let phrases = tagger.phrases_of(caption)?;
        let out = ExtractOut {
            clip_id: None,
            caption,
            phrases: phrases.iter().map(phrase_out).collect(),
        };
        println!("{}", to_json_line(&out)?);
        return Ok(());
    }
    let manifest = args.manifest.expect("clap group guarantees one source");
    let records = load_manifest(&manifest)?;
    validate(&records)?;
    for record in &records {
        for caption in &record.captions {
            let phrases = tagger.phrases_of(caption)?;
            let out = ExtractOut {
                clip_id: Some(&record.clip_id),
                caption,
                phrases: phrases.iter().map(phrase_out).collect(),
            };
            println!("{}", to_json_line(&out)?);
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct GroundOut {
    audio: String,
    phrase: String,
    threshold: f64,
    spans: Vec<(f64, f64)>,
    config: RunConfig,
}

fn cmd_ground(args: GroundArgs, mut config: RunConfig) -> Result<(), AppError> {
    set(&mut config.threshold, args.threshold);
    config.validate()?;
    let model = load_checkpoint(&args.checkpoint)?;
    let wav = read_wav(&args.audio)?;
    let features = log_mel(&wav, model.config.feat_dim)?;
    if let Some(path) = &args.dump_features {
        dump_features(path, &features)?;
    }
    let tagger = Tagger::new();
    let phrase = Phrase::manual(&args.phrase, &tagger)?;
    let scorer = S2vScorer::new(&model, &features, &file_stem(&args.audio))?;
    let embedding = scorer.embed_phrase(&phrase)?;
    let spans = predict_spans(&embedding.scores, config.threshold, features.timing)?;
    let out = GroundOut {
        audio: args.audio.display().to_string(),
        phrase: phrase.text(),
        threshold: config.threshold,
        spans,
        config,
    };
    println!("{}", to_json_line(&out)?);
    Ok(())
}

#[derive(Serialize)]
struct ScoreOut {
    candidate: String,
    reference: String,
    probe: String,
    #[serde(flatten)]
    triple: ScoreTriple,
    config: RunConfig,
}

fn cmd_score(args: ScoreArgs, config: RunConfig) -> Result<(), AppError> {
    config.validate()?;
    let model = load_checkpoint(&args.checkpoint)?;
    let wav = read_wav(&args.probe)?;
    let features = log_mel(&wav, model.config.feat_dim)?;
    let tagger = Tagger::new();
    let scorer = S2vScorer::new(&model, &features, &file_stem(&args.probe))?;
    let triple = score_captions(&scorer, &tagger, &args.candidate, &args.reference)?;
    let out = ScoreOut {
        candidate: args.candidate,
        reference: args.reference,
        probe: args.probe.display().to_string(),
        triple,
        config,
    };
    println!("{}", to_json_line(&out)?);
    Ok(())
}

fn cmd_eval_pairs(args: EvalPairsArgs, mut config: RunConfig) -> Result<(), AppError> {
    set(&mut config.n_ccp, args.n_ccp);
    set(&mut config.n_icp, args.n_icp);
    set(&mut config.seed, args.seed);
    set(&mut config.probe, args.probe);
    if !args.metrics.is_empty() {
        config.metrics = args.metrics;
    }
    config.validate()?;

    let records = load_manifest(&args.manifest)?;
    validate(&records)?;
    let clips = clip_captions(&records);
    let pairs = build_pairs(&clips, config.n_ccp, config.n_icp, config.seed)?;

    let needs_model = config.metrics.iter().any(|m| m == "tags2v");
    let needs_table = config.metrics.iter().any(|m| m == "static");
    let model = match (&args.checkpoint, needs_model) {
        (Some(path), _) => Some(load_checkpoint(path)?),
        (None, true) => {
            return Err(AppError::usage("metric \"tags2v\" requires --checkpoint"));
        }
        (None, false) => None,
    };
    let features = if needs_model {
        load_features(&args.manifest, &records)?
    } else {
        BTreeMap::new()
    };
    let table = if needs_table {
        Some(EmbeddingTable::one_hot(&caption_vocab(&records)?)?)
    } else {
        None
    };
    let ctx = MetricContext {
        model: model.as_ref(),
        features: if needs_model { Some(&features) } else { None },
        probe: config.probe_mode()?,
        static_table: table.as_ref(),
    };
    let metrics = build_metrics(&config.metrics, &ctx)?;
    let outcome = run_eval(&pairs, &metrics, &config)?;

    if let Some(path) = &args.out_json {
        fs::write(path, report_json(&outcome.report)?)?;
    }
    if let Some(path) = &args.out_csv {
        fs::write(path, per_pair_csv(&outcome)?)?;
    }
    print!("{}", render_table(&outcome.report));
    Ok(())
}

fn to_json_line<T: Serialize>(value: &T) -> Result<String, AppError> {
    serde_json::to_string(value)
        .map_err(|e| AppError::data(format!("output serialization failed: {e}")))
}
