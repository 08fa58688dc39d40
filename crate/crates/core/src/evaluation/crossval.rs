use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, ConfusionMatrix, MetricsReport};
use crate::corpus::Corpus;
use crate::dataio::{loso_folds, FoldSpec};
use crate::error::{Error, Result};
use crate::model::{Model, Objective};
use crate::prompts::{PromptLabel, TextEmbeddingProvider};
use crate::training::{select_lr, TrainConfig, TrainReport};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub recording_id: String,
    pub target_word: String,
    pub truth: PromptLabel,
    pub predicted: PromptLabel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldEvaluation {
    pub metrics: MetricsReport,
    pub confusion: ConfusionMatrix,
    pub predictions: Vec<Prediction>,
}

/// Scores every test-speaker recording of `fold` with `model`.
pub fn evaluate_fold(
    model: &Model,
    fold: &FoldSpec,
    corpus: &Corpus,
    gate: bool,
) -> Result<FoldEvaluation> {
    let test = corpus.split(fold).test;
    if test.is_empty() {
        return Err(Error::EmptyInput("test speaker has no recordings"));
    }
    let predicted = model.predict(corpus, &test, gate)?;
    let truth: Vec<PromptLabel> = test.iter().map(|&i| corpus.label(i)).collect();
    let confusion = ConfusionMatrix::from_labels(corpus.classes(), &truth, &predicted)?;
    let metrics = compute_metrics(&confusion)?;
    let predictions = test
        .iter()
        .zip(truth)
        .zip(predicted)
        .map(|((&i, truth), predicted)| Prediction {
            recording_id: corpus.entry(i).recording_id.clone(),
            target_word: corpus.entry(i).target_word.clone(),
            truth,
            predicted,
        })
        .collect();
    Ok(FoldEvaluation {
        metrics,
        confusion,
        predictions,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Population standard deviation (divides by the fold count).
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        MeanStd {
            mean,
            std: var.sqrt(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: FoldSpec,
    pub selected_lr: f64,
    pub runs: Vec<TrainReport>,
    pub evaluation: FoldEvaluation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub zero_division: String,
    pub class_set: String,
    pub std: String,
    pub target_gating: bool,
    pub generated_unix_secs: Option<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CvSummary {
    pub objective: Objective,
    pub seed: u64,
    pub folds: Vec<FoldResult>,
    pub accuracy: MeanStd,
    pub macro_precision: MeanStd,
    pub macro_recall: MeanStd,
    pub macro_f1: MeanStd,
    pub metadata: ReportMetadata,
}

impl CvSummary {
    pub fn fold_metrics(&self) -> Vec<&MetricsReport> {
        self.folds.iter().map(|f| &f.evaluation.metrics).collect()
    }

    fn aggregate(objective: Objective, seed: u64, folds: Vec<FoldResult>, gate: bool) -> Self {
        let col = |f: fn(&MetricsReport) -> f64| {
            MeanStd::of(
                &folds
                    .iter()
                    .map(|r| f(&r.evaluation.metrics))
                    .collect::<Vec<_>>(),
            )
        };
        CvSummary {
            objective,
            seed,
            accuracy: col(|m| m.accuracy),
            macro_precision: col(|m| m.macro_precision),
            macro_recall: col(|m| m.macro_recall),
            macro_f1: col(|m| m.macro_f1),
            folds,
            metadata: ReportMetadata {
                zero_division:
                    "undefined precision, recall or F1 counts as 0 and stays in the macro average"
                        .into(),
                class_set: "full vocabulary plus mispronounced in every fold".into(),
                std: "population".into(),
                target_gating: gate,
                generated_unix_secs: None,
            },
        }
    }
}

/// Leave-one-speaker-out cross-validation: per fold, learning-rate
/// selection on the validation speaker, then evaluation on the test
/// speaker. Folds run on up to `jobs` threads; results are ordered by
/// test speaker.
pub fn crossval(
    config: &TrainConfig,
    corpus: &Corpus,
    provider: Option<&dyn TextEmbeddingProvider>,
    jobs: usize,
) -> Result<CvSummary> {
    Ok(crossval_models(config, corpus, provider, jobs)?.0)
}

/// Like [`crossval`], also returning each fold's selected model.
pub fn crossval_models(
    config: &TrainConfig,
    corpus: &Corpus,
    provider: Option<&dyn TextEmbeddingProvider>,
    jobs: usize,
) -> Result<(CvSummary, Vec<Model>)> {
    config.validate()?;
    let folds = loso_folds(corpus.dataset(), config.seed)?;
    let gate = config.model.target_gating;
    let run = |fold: &FoldSpec| -> Result<(FoldResult, Model)> {
        let sel = select_lr(config, fold, corpus, provider)?;
        let evaluation = evaluate_fold(&sel.model, fold, corpus, gate)?;
        let result = FoldResult {
            fold: fold.clone(),
            selected_lr: sel.selected_lr,
            runs: sel.runs,
            evaluation,
        };
        Ok((result, sel.model))
    };
    let results: Vec<(FoldResult, Model)> = if jobs <= 1 {
        folds.iter().map(run).collect::<Result<_>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(|| folds.par_iter().map(run).collect::<Result<_>>())?
    };
    let (results, models): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    Ok((
        CvSummary::aggregate(config.objective(), config.seed, results, gate),
        models,
    ))
}

const METRICS: [(&str, fn(&CvSummary) -> MeanStd); 4] = [
    ("accuracy", |s| s.accuracy),
    ("precision", |s| s.macro_precision),
    ("recall", |s| s.macro_recall),
    ("f1", |s| s.macro_f1),
];

/// One row per approach: `approach,accuracy_mean,accuracy_std,...`.
pub fn summary_csv(summaries: &[&CvSummary]) -> String {
    let mut out = String::from("approach");
    for (name, _) in METRICS {
        out.push_str(&format!(",{name}_mean,{name}_std"));
    }
    out.push('\n');
    for s in summaries {
        out.push_str(s.objective.name());
        for (_, get) in METRICS {
            let m = get(s);
            out.push_str(&format!(",{:.6},{:.6}", m.mean, m.std));
        }
        out.push('\n');
    }
    out
}

/// Metric rows against approach columns, cells formatted `mean ± std`.
pub fn metric_table_csv(summaries: &[&CvSummary]) -> String {
    let mut out = String::from("metric");
    for s in summaries {
        out.push(',');
        out.push_str(s.objective.name());
    }
    out.push('\n');
    for (name, get) in METRICS {
        out.push_str(name);
        for s in summaries {
            let m = get(s);
            out.push_str(&format!(",{:.2} ± {:.2}", m.mean, m.std));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let m = MeanStd::of(&[1.0, 3.0]);
        assert_eq!((m.mean, m.std), (2.0, 1.0));
        assert_eq!(MeanStd::of(&[0.5; 5]).std, 0.0);
    }
}
