//! The `namegate` command line.

use std::collections::BTreeSet;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint;
use crate::config::RunConfig;
use crate::corpus::Corpus;
use crate::dataio::{load_dataset, pool_mean, read_embedding_file};
use crate::error::{Error, Result};
use crate::evaluation::{
    compute_metrics, crossval_models, layer_sweep, metric_table_csv, summary_csv, ConfusionMatrix,
    CvSummary, MetricsReport, SweepReport,
};
use crate::model::{Model, Objective};
use crate::prompts::{gate_to_target, ClassSpace, PromptLabel};
use crate::selfcheck::gradient_suite;
use crate::synthdata::{generate, SynthSpec};

pub const EXIT_NEGATIVE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

pub const JOBS_ENV: &str = "NAMEGATE_JOBS";

#[derive(Debug, Parser)]
#[command(
    name = "namegate",
    version,
    about = "Word-naming verification over speech embeddings"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic corpus.
    GenSynth(GenSynthArgs),
    /// Leave-one-speaker-out cross-validation.
    Crossval(CrossvalArgs),
    /// Score one recording against a trained checkpoint.
    Infer(InferArgs),
    /// Finite-difference check of every analytic gradient.
    Gradcheck(GradcheckArgs),
    /// Rank encoder layers by classification-baseline accuracy.
    LayerSweep(LayerSweepArgs),
    /// Metrics from predictions, summaries or a checkpoint.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
pub struct GenSynthArgs {
    /// JSON spec; may name a `preset` and override its fields.
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct CrossvalArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Overrides `model.kind`.
    #[arg(long, value_parser = parse_objective)]
    pub model: Option<Objective>,
    /// Parallel folds; falls back to NAMEGATE_JOBS, then 1.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    /// Checkpoint directory (or its checkpoint.json).
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// EMB1 frame matrix of the recording.
    #[arg(long)]
    pub embedding: PathBuf,
    #[arg(long)]
    pub target: String,
    /// Report the raw prediction without target gating.
    #[arg(long)]
    pub no_gate: bool,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of consecutive seeds starting at `--seed`.
    #[arg(long, default_value_t = 10)]
    pub seeds: u64,
}

#[derive(Debug, Args)]
pub struct LayerSweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// JSON-lines predictions with `truth` and `predicted` labels.
    #[arg(long, conflicts_with_all = ["summary", "checkpoint"])]
    pub predictions: Option<PathBuf>,
    /// Crossval summaries to tabulate side by side (repeatable).
    #[arg(long, conflicts_with = "checkpoint")]
    pub summary: Vec<PathBuf>,
    /// Checkpoint to evaluate over `--manifest`.
    #[arg(long, requires = "manifest")]
    pub checkpoint: Option<PathBuf>,
    /// Vocabulary source, or the data for `--checkpoint`.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Restrict `--checkpoint` evaluation to one speaker.
    #[arg(long, requires = "checkpoint")]
    pub speaker: Option<String>,
    #[arg(long)]
    pub no_gate: bool,
    /// Also write the output here.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_objective(s: &str) -> std::result::Result<Objective, String> {
    match s {
        "matcher" => Ok(Objective::Matcher),
        "classifier" => Ok(Objective::Classifier),
        "ctc" => Ok(Objective::Ctc),
        _ => Err(format!("expected matcher, classifier or ctc, got {s:?}")),
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. } | Error::Format { .. } | Error::Truncated { .. } | Error::Load { .. } => {
            EXIT_IO
        }
        Error::Diverged(_)
        | Error::DegenerateVector { .. }
        | Error::InfeasibleAlignment { .. }
        | Error::UndefinedWer
        | Error::BatchTooSmall(_) => EXIT_NUMERIC,
        _ => EXIT_CONFIG,
    }
}

pub fn resolve_jobs(flag: Option<usize>) -> Result<usize> {
    if let Some(j) = flag {
        return Ok(j.max(1));
    }
    match std::env::var(JOBS_ENV) {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map(|j| j.max(1))
            .map_err(|_| Error::Config(format!("{JOBS_ENV}={v:?} is not a count"))),
        Err(_) => Ok(1),
    }
}

fn now_secs() -> Option<u64> {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .ok()
        .map(|d| d.as_secs())
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, &(serde_json::to_string_pretty(value)? + "\n"))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&text)?)
}

pub fn gen_synth(args: &GenSynthArgs) -> Result<i32> {
    let text = fs::read_to_string(&args.spec).map_err(|e| Error::io(&args.spec, e))?;
    let spec = SynthSpec::from_json(&text)?;
    let g = generate(&spec, &args.out)?;
    // A ready-to-run config pointing at the generated files.
    let mut data = json!({
        "manifest": "manifest.jsonl",
        "provider": {"mode": "file_backed", "manifest": "prompts.jsonl"},
    });
    if !g.truth.layer_manifests.is_empty() {
        let layers: serde_json::Map<String, serde_json::Value> = g
            .truth
            .layer_manifests
            .iter()
            .map(|(k, p)| {
                let rel = p.strip_prefix(&args.out).unwrap_or(p);
                (k.to_string(), json!(rel))
            })
            .collect();
        data["layers"] = serde_json::Value::Object(layers);
    }
    write_json(
        &args.out.join("config.json"),
        &json!({"data": data, "seed": spec.seed}),
    )?;
    println!("{}", g.manifest.display());
    Ok(0)
}

pub fn run_crossval(args: &CrossvalArgs) -> Result<i32> {
    let mut config = RunConfig::load(&args.config)?;
    if let Some(kind) = args.model {
        config = config.with_objective(kind);
    }
    let jobs = resolve_jobs(args.jobs)?;
    let train = config.train_config();
    train.validate()?;
    let provider = config.provider()?;
    let corpus = config.corpus()?;
    let (mut summary, models) = crossval_models(&train, &corpus, provider.as_deref(), jobs)?;
    summary.metadata.generated_unix_secs = now_secs();
    let eval = &config.eval;
    write_json(&args.out.join(&eval.summary_json), &summary)?;
    write(&args.out.join(&eval.summary_csv), &summary_csv(&[&summary]))?;
    write(
        &args.out.join(&eval.table_csv),
        &metric_table_csv(&[&summary]),
    )?;
    if let Some(dir) = &eval.checkpoints {
        for (fold, model) in summary.folds.iter().zip(&models) {
            let name = format!("fold_{:02}_{}", fold.fold.index, fold.fold.test_speaker);
            checkpoint::save(model, args.out.join(dir).join(name))?;
        }
    }
    println!(
        "{} over {} folds: accuracy {:.4} ± {:.4}, macro F1 {:.4} ± {:.4}",
        summary.objective,
        summary.folds.len(),
        summary.accuracy.mean,
        summary.accuracy.std,
        summary.macro_f1.mean,
        summary.macro_f1.std
    );
    Ok(0)
}

fn softmax(logits: &[f32]) -> Vec<f32> {
    let max = logits.iter().copied().fold(f32::NEG_INFINITY, f32::max);
    let exp: Vec<f32> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f32 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

/// Scores one frame matrix; the JSON report and whether the (gated)
/// prediction names `target`.
pub fn infer_report(
    model: &Model,
    frames: &crate::numerics::Matrix<f32>,
    target: &str,
    gate: bool,
) -> Result<(serde_json::Value, bool)> {
    let labels = model.classes().labels();
    let scored = |scores: Vec<f32>| -> Vec<serde_json::Value> {
        labels
            .iter()
            .zip(scores)
            .map(|(l, s)| json!({"label": l.to_string(), "score": s}))
            .collect()
    };
    let (raw, extra) = match model {
        Model::Matcher(m) => {
            let (scores, label) = m.score(&pool_mean(frames)?)?;
            (label, json!({"scores": scored(scores)}))
        }
        Model::Classifier(m) => {
            let logits = m.params.logits(&pool_mean(frames)?)?;
            let label = labels[logits.argmax_rows()[0]].clone();
            (label, json!({"scores": scored(softmax(logits.as_slice()))}))
        }
        Model::Ctc(m) => {
            let (text, label) = m.decide(frames, target)?;
            (label, json!({"transcription": text}))
        }
    };
    let predicted = if gate {
        gate_to_target(raw.clone(), target)
    } else {
        raw.clone()
    };
    let named = predicted.is_word(target);
    let mut report = json!({
        "model": model.objective().name(),
        "target": target,
        "raw_prediction": raw.to_string(),
        "predicted": predicted.to_string(),
        "verdict": if named { "named" } else { "not_named" },
    });
    if let (Some(r), serde_json::Value::Object(e)) = (report.as_object_mut(), extra) {
        r.extend(e);
    }
    Ok((report, named))
}

pub fn infer(args: &InferArgs) -> Result<i32> {
    let model = checkpoint::load(&args.checkpoint)?;
    let frames = read_embedding_file(&args.embedding)?;
    let (report, named) = infer_report(&model, &frames, &args.target, !args.no_gate)?;
    println!("{}", serde_json::to_string(&report)?);
    Ok(if named { 0 } else { EXIT_NEGATIVE })
}

pub fn gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let seeds: Vec<u64> = (args.seed..args.seed + args.seeds.max(1)).collect();
    let report = gradient_suite(&seeds)?;
    for (model, err) in report.worst_by_model() {
        println!("{model}: max relative error {err:.3e}");
    }
    let ok = report.passed();
    println!(
        "{} across {} seeds (tolerance {:e})",
        if ok { "PASS" } else { "FAIL" },
        seeds.len(),
        report.tolerance
    );
    Ok(if ok { 0 } else { EXIT_NUMERIC })
}

pub fn run_layer_sweep(args: &LayerSweepArgs) -> Result<i32> {
    let config = RunConfig::load(&args.config)?;
    let jobs = resolve_jobs(args.jobs)?;
    let layers = config.layer_corpora()?;
    let mut report: SweepReport = layer_sweep(&layers, &config.train_config(), jobs)?;
    let stamp = now_secs();
    for s in report.summaries.values_mut() {
        s.metadata.generated_unix_secs = stamp;
    }
    write_json(&args.out.join(&config.eval.sweep_json), &report)?;
    for (rank, r) in report.ranking.iter().enumerate() {
        println!(
            "{:>2}. layer {:>3}  accuracy {:.4} ± {:.4}  macro F1 {:.4}",
            rank + 1,
            r.layer,
            r.accuracy.mean,
            r.accuracy.std,
            r.macro_f1.mean
        );
    }
    Ok(0)
}

/// One line of a predictions file.
#[derive(Clone, Debug, Deserialize)]
struct PredictionLine {
    truth: PromptLabel,
    predicted: PromptLabel,
}

fn read_predictions(path: &Path) -> Result<Vec<PredictionLine>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Load {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Metrics for a predictions file. The class set is the manifest
/// vocabulary when given, otherwise every word seen in the file.
pub fn eval_predictions(path: &Path, manifest: Option<&Path>) -> Result<MetricsReport> {
    let lines = read_predictions(path)?;
    let classes = match manifest {
        Some(m) => load_dataset(m)?.class_space(),
        None => {
            let words: BTreeSet<String> = lines
                .iter()
                .flat_map(|l| [&l.truth, &l.predicted])
                .filter_map(|l| match l {
                    PromptLabel::Word(w) => Some(w.clone()),
                    PromptLabel::Mispronounced => None,
                })
                .collect();
            ClassSpace::new(words)
        }
    };
    let truth: Vec<PromptLabel> = lines.iter().map(|l| l.truth.clone()).collect();
    let predicted: Vec<PromptLabel> = lines.into_iter().map(|l| l.predicted).collect();
    compute_metrics(&ConfusionMatrix::from_labels(&classes, &truth, &predicted)?)
}

fn eval_checkpoint(
    ckpt: &Path,
    manifest: &Path,
    speaker: Option<&str>,
    gate: bool,
) -> Result<MetricsReport> {
    let model = checkpoint::load(ckpt)?;
    let corpus = Corpus::from_manifest(manifest, model.objective() == Objective::Ctc)?;
    let idx: Vec<usize> = (0..corpus.len())
        .filter(|&i| speaker.is_none_or(|s| corpus.entry(i).speaker_id == s))
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyInput("no recordings to evaluate"));
    }
    let predicted = model.predict(&corpus, &idx, gate)?;
    let truth: Vec<PromptLabel> = idx.iter().map(|&i| corpus.label(i)).collect();
    compute_metrics(&ConfusionMatrix::from_labels(
        corpus.classes(),
        &truth,
        &predicted,
    )?)
}

pub fn eval(args: &EvalArgs) -> Result<i32> {
    let text = if let Some(p) = &args.predictions {
        serde_json::to_string_pretty(&eval_predictions(p, args.manifest.as_deref())?)? + "\n"
    } else if let Some(c) = &args.checkpoint {
        let manifest = args.manifest.as_deref().expect("clap requires --manifest");
        let report = eval_checkpoint(c, manifest, args.speaker.as_deref(), !args.no_gate)?;
        serde_json::to_string_pretty(&report)? + "\n"
    } else if !args.summary.is_empty() {
        let summaries = args
            .summary
            .iter()
            .map(|p| read_json::<CvSummary>(p))
            .collect::<Result<Vec<_>>>()?;
        let refs: Vec<&CvSummary> = summaries.iter().collect();
        summary_csv(&refs)
    } else {
        return Err(Error::Config(
            "eval needs --predictions, --summary or --checkpoint".into(),
        ));
    };
    print!("{text}");
    if let Some(out) = &args.out {
        write(out, &text)?;
    }
    Ok(0)
}

pub fn run(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::GenSynth(a) => gen_synth(a),
        Command::Crossval(a) => run_crossval(a),
        Command::Infer(a) => infer(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::LayerSweep(a) => run_layer_sweep(a),
        Command::Eval(a) => eval(a),
    }
}

/// Parses the process arguments, runs the command and returns the exit code.
pub fn main() -> i32 {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_is_well_formed() {
        Cli::command().debug_assert();
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(
            exit_code(&Error::io("p", std::io::ErrorKind::NotFound.into())),
            EXIT_IO
        );
        assert_eq!(exit_code(&Error::Diverged("nan".into())), EXIT_NUMERIC);
        let json = serde_json::from_str::<u8>("{").unwrap_err();
        assert_eq!(exit_code(&Error::Json(json)), EXIT_CONFIG);
    }

    #[test]
    fn jobs_flag_wins() {
        assert_eq!(resolve_jobs(Some(3)).unwrap(), 3);
        assert_eq!(resolve_jobs(Some(0)).unwrap(), 1);
    }
}
