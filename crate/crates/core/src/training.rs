//! Training loops: seeded epochs, periodic validation, early stopping and
//! learning-rate selection.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baselines::{
    ctc::min_frames, edit_distance, tokens, Alphabet, CtcParams, MatchRule, MlpParams,
};
use crate::corpus::Corpus;
use crate::dataio::FoldSpec;
use crate::error::{Error, Result};
use crate::evaluation::{compute_metrics, ConfusionMatrix};
use crate::matcher::{duplicate_text_mask, MatcherParams, DEFAULT_SHARED_DIM};
use crate::model::{
    candidate_text_matrix, ClassifierModel, CtcModel, MatcherModel, Model, Objective,
};
use crate::numerics::{Matrix, Parameters};
use crate::optim::{OptimConfig, OptimState, OptimizerKind};
use crate::prompts::{PromptTemplate, TextEmbeddingProvider};
use crate::seeding;

pub const DEFAULT_LR_GRID: [f64; 2] = [5e-5, 1e-5];
pub const CTC_LR: f64 = 5e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    MacroF1,
    Wer,
}

impl SelectionMetric {
    /// Strict improvement of `a` over `b`.
    pub fn improves(self, a: f64, b: f64) -> bool {
        match self {
            SelectionMetric::MacroF1 => a > b,
            SelectionMetric::Wer => a < b,
        }
    }
}

/// Head architecture and decision-rule options.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelOptions {
    pub kind: Objective,
    pub shared_dim: usize,
    pub hidden_dim: usize,
    /// Mask in-batch negatives whose prompt equals the row's own prompt.
    pub drop_duplicate_negatives: bool,
    pub keep_accents: bool,
    pub match_rule: MatchRule,
    /// Report a predicted word other than the prompted target as
    /// mispronounced.
    pub target_gating: bool,
    pub template: PromptTemplate,
}

impl Default for ModelOptions {
    fn default() -> Self {
        ModelOptions {
            kind: Objective::Matcher,
            shared_dim: DEFAULT_SHARED_DIM,
            hidden_dim: crate::baselines::DEFAULT_HIDDEN,
            drop_duplicate_negatives: false,
            keep_accents: false,
            match_rule: MatchRule::TokenBoundary,
            target_gating: true,
            template: PromptTemplate::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub batch_size: usize,
    pub validate_every: usize,
    /// Validation points without improvement before stopping.
    pub patience: usize,
    /// Defaults to {5e-5, 1e-5}, or {5e-4} for CTC.
    pub lr_grid: Option<Vec<f64>>,
    /// Defaults to macro-F1, or WER for CTC.
    pub selection_metric: Option<SelectionMetric>,
    /// Defaults to Adam, or AdamW for CTC.
    pub optimizer: Option<OptimizerKind>,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub exempt_scalars: bool,
    #[serde(skip)]
    pub seed: u64,
    #[serde(skip)]
    pub model: ModelOptions,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let o = OptimConfig::default();
        TrainConfig {
            max_epochs: 30,
            batch_size: 32,
            validate_every: 5,
            patience: 3,
            lr_grid: None,
            selection_metric: None,
            optimizer: None,
            beta1: o.beta1,
            beta2: o.beta2,
            eps: o.eps,
            weight_decay: o.weight_decay,
            exempt_scalars: false,
            seed: 0,
            model: ModelOptions::default(),
        }
    }
}

impl TrainConfig {
    pub fn for_objective(objective: Objective, seed: u64) -> Self {
        TrainConfig {
            seed,
            model: ModelOptions {
                kind: objective,
                ..Default::default()
            },
            ..Default::default()
        }
    }

    pub fn objective(&self) -> Objective {
        self.model.kind
    }

    pub fn lr_grid(&self) -> Vec<f64> {
        match (&self.lr_grid, self.objective()) {
            (Some(g), _) => g.clone(),
            (None, Objective::Ctc) => vec![CTC_LR],
            (None, _) => DEFAULT_LR_GRID.to_vec(),
        }
    }

    pub fn selection_metric(&self) -> SelectionMetric {
        self.selection_metric.unwrap_or(match self.objective() {
            Objective::Ctc => SelectionMetric::Wer,
            _ => SelectionMetric::MacroF1,
        })
    }

    pub fn optim_config(&self, lr: f64) -> OptimConfig {
        OptimConfig {
            kind: self.optimizer.unwrap_or(match self.objective() {
                Objective::Ctc => OptimizerKind::AdamW,
                _ => OptimizerKind::Adam,
            }),
            lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
            weight_decay: self.weight_decay,
            exempt_scalars: self.exempt_scalars,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.max_epochs == 0
            || self.batch_size == 0
            || self.validate_every == 0
            || self.patience == 0
        {
            return bad("max_epochs, batch_size, validate_every and patience must be ≥ 1".into());
        }
        if !self.max_epochs.is_multiple_of(self.validate_every) {
            return bad(format!(
                "validate_every ({}) must divide max_epochs ({})",
                self.validate_every, self.max_epochs
            ));
        }
        let grid = self.lr_grid();
        if grid.is_empty() {
            return bad("lr_grid must be nonempty".into());
        }
        if let Some(lr) = grid.iter().find(|lr| !lr.is_finite() || **lr < 0.0) {
            return bad(format!("learning rate {lr} must be finite and ≥ 0"));
        }
        if self.model.shared_dim == 0 || self.model.hidden_dim == 0 {
            return bad("shared_dim and hidden_dim must be ≥ 1".into());
        }
        self.model.template.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationPoint {
    pub epoch: usize,
    pub metric: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub objective: Objective,
    pub fold: usize,
    pub test_speaker: String,
    pub val_speaker: String,
    pub lr: f64,
    pub run_seed: u64,
    pub selection_metric: SelectionMetric,
    /// Recording ids the head was fitted on, in manifest order.
    pub train_recordings: Vec<String>,
    /// Training entries dropped because their frames cannot emit the target.
    pub infeasible_skipped: usize,
    /// Mean batch loss per completed epoch.
    pub epoch_losses: Vec<f64>,
    pub validation: Vec<ValidationPoint>,
    /// Epoch of the retained checkpoint.
    pub best_epoch: usize,
    pub best_metric: f64,
    pub stopped_epoch: usize,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Best-validation checkpoint.
    pub model: Model,
}

#[derive(Clone, Debug)]
pub struct LrSelection {
    pub selected_lr: f64,
    /// One report per grid entry, in grid order.
    pub runs: Vec<TrainReport>,
    pub model: Model,
}

/// Seed of the run for `fold` and grid position `lr_index`.
pub fn run_seed(seed: u64, fold: usize, lr_index: usize) -> u64 {
    seeding::derive(seed, &[fold as u64, lr_index as u64])
}

enum Head {
    Matcher {
        params: MatcherParams<f32>,
        candidate_text: Matrix<f32>,
    },
    Classifier(MlpParams<f32>),
    Ctc {
        params: CtcParams<f32>,
        targets: Vec<Vec<usize>>,
    },
}

impl Head {
    fn snapshot(&self, corpus: &Corpus, config: &TrainConfig) -> Model {
        let classes = corpus.classes().clone();
        match self {
            Head::Matcher {
                params,
                candidate_text,
            } => Model::Matcher(MatcherModel {
                params: params.clone(),
                classes,
                template: config.model.template.clone(),
                candidate_text: candidate_text.clone(),
            }),
            Head::Classifier(p) => Model::Classifier(ClassifierModel {
                params: p.clone(),
                classes,
            }),
            Head::Ctc { params, .. } => Model::Ctc(CtcModel {
                params: params.clone(),
                classes,
                match_rule: config.model.match_rule,
            }),
        }
    }

    /// Forward, backward and one optimizer step on `batch` (positions into
    /// `train`). Returns the batch loss.
    fn step(
        &mut self,
        corpus: &Corpus,
        train: &[usize],
        batch: &[usize],
        config: &TrainConfig,
        opt: &mut OptimState<f32>,
    ) -> Result<f32> {
        let loss = match self {
            Head::Matcher {
                params,
                candidate_text,
            } => {
                let idx: Vec<usize> = batch.iter().map(|&b| train[b]).collect();
                let labels: Vec<usize> = idx.iter().map(|&i| corpus.label_index(i)).collect();
                let audio = corpus.pooled_rows(&idx);
                let text = candidate_text.select_rows(&labels);
                let mask = if config.model.drop_duplicate_negatives {
                    duplicate_text_mask(&labels)
                } else {
                    None
                };
                let loss = params.loss_and_accumulate(&audio, &text, mask.as_deref())?;
                opt.step(&mut params.params_mut())?;
                params.zero_grad();
                loss
            }
            Head::Classifier(p) => {
                let idx: Vec<usize> = batch.iter().map(|&b| train[b]).collect();
                let labels: Vec<usize> = idx.iter().map(|&i| corpus.label_index(i)).collect();
                let loss = p.loss_and_accumulate(&corpus.pooled_rows(&idx), &labels)?;
                opt.step(&mut p.params_mut())?;
                p.zero_grad();
                loss
            }
            Head::Ctc { params, targets } => {
                let items = batch
                    .iter()
                    .map(|&b| Ok((corpus.frames(train[b])?, targets[b].as_slice())))
                    .collect::<Result<Vec<_>>>()?;
                let loss = params.batch_loss_and_accumulate(&items)?;
                opt.step(&mut params.params_mut())?;
                params.zero_grad();
                loss
            }
        };
        if !loss.is_finite() {
            return Err(Error::Diverged(format!("non-finite loss {loss}")));
        }
        Ok(loss)
    }
}

/// Corpus-level WER over `idx`: total word edits divided by total
/// reference words, references being the normalized targets.
pub fn corpus_wer(model: &CtcModel, corpus: &Corpus, idx: &[usize]) -> Result<f64> {
    let (mut edits, mut words) = (0usize, 0usize);
    for &i in idx {
        let reference = model
            .params
            .alphabet
            .normalize(&corpus.entry(i).target_word);
        let hypothesis = model.params.transcribe(corpus.frames(i)?)?;
        let r = tokens(&reference);
        edits += edit_distance(&r, &tokens(&hypothesis));
        words += r.len();
    }
    if words == 0 {
        return Err(Error::UndefinedWer);
    }
    Ok(edits as f64 / words as f64)
}

/// Validation metric of `model` on `idx`.
pub fn validation_metric(
    model: &Model,
    corpus: &Corpus,
    idx: &[usize],
    config: &TrainConfig,
) -> Result<f64> {
    match config.selection_metric() {
        SelectionMetric::Wer => {
            let Model::Ctc(m) = model else {
                return Err(Error::Config(
                    "WER selection requires the ctc objective".into(),
                ));
            };
            let correct: Vec<usize> = idx
                .iter()
                .copied()
                .filter(|&i| corpus.entry(i).correct)
                .collect();
            if correct.is_empty() {
                return Err(Error::Config(
                    "validation speaker has no correct recordings".into(),
                ));
            }
            corpus_wer(m, corpus, &correct)
        }
        SelectionMetric::MacroF1 => {
            let predicted = model.predict(corpus, idx, config.model.target_gating)?;
            let truth: Vec<_> = idx.iter().map(|&i| corpus.label(i)).collect();
            let cm = ConfusionMatrix::from_labels(corpus.classes(), &truth, &predicted)?;
            Ok(compute_metrics(&cm)?.macro_f1)
        }
    }
}

/// Trains one head for `fold` with the learning rate at `lr_index` of the
/// grid and returns the best-validation checkpoint.
pub fn train_one(
    config: &TrainConfig,
    fold: &FoldSpec,
    corpus: &Corpus,
    provider: Option<&dyn TextEmbeddingProvider>,
    lr_index: usize,
) -> Result<TrainOutcome> {
    config.validate()?;
    let grid = config.lr_grid();
    let lr = *grid.get(lr_index).ok_or(Error::IndexOutOfRange {
        index: lr_index,
        bound: grid.len(),
    })?;
    let objective = config.objective();
    let seed = run_seed(config.seed, fold.index, lr_index);
    let split = corpus.split(fold);
    if split.val.is_empty() {
        return Err(Error::Config(format!(
            "validation speaker {} has no recordings",
            fold.val_speaker
        )));
    }

    let mut infeasible_skipped = 0;
    let (train, mut head) = match objective {
        Objective::Matcher => {
            let provider = provider.ok_or_else(|| {
                Error::Config("the matcher needs a text embedding provider".into())
            })?;
            let candidate_text =
                candidate_text_matrix(corpus.classes(), &config.model.template, provider)?;
            let params = MatcherParams::init(
                corpus.audio_dim(),
                provider.dim(),
                config.model.shared_dim,
                seed,
            );
            (
                split.train,
                Head::Matcher {
                    params,
                    candidate_text,
                },
            )
        }
        Objective::Classifier => {
            let params = MlpParams::init(
                corpus.audio_dim(),
                config.model.hidden_dim,
                corpus.classes().len(),
                seed,
            );
            (split.train, Head::Classifier(params))
        }
        Objective::Ctc => {
            let alphabet = Alphabet::new(config.model.keep_accents);
            let mut train = Vec::new();
            let mut targets = Vec::new();
            for i in split.train {
                let e = corpus.entry(i);
                if !e.correct {
                    continue;
                }
                let target = alphabet.encode(&e.target_word);
                if target.is_empty() || corpus.frames(i)?.rows() < min_frames(&target) {
                    infeasible_skipped += 1;
                    continue;
                }
                train.push(i);
                targets.push(target);
            }
            let params = CtcParams::init(corpus.audio_dim(), alphabet, seed);
            (train, Head::Ctc { params, targets })
        }
    };
    let min_batch = if objective == Objective::Ctc { 1 } else { 2 };
    if train.len() < min_batch {
        return Err(Error::Config(format!(
            "fold {} has {} usable training recordings",
            fold.index,
            train.len()
        )));
    }

    let metric = config.selection_metric();
    let mut opt = OptimState::new(config.optim_config(lr));
    let mut report = TrainReport {
        objective,
        fold: fold.index,
        test_speaker: fold.test_speaker.clone(),
        val_speaker: fold.val_speaker.clone(),
        lr,
        run_seed: seed,
        selection_metric: metric,
        train_recordings: train
            .iter()
            .map(|&i| corpus.entry(i).recording_id.clone())
            .collect(),
        infeasible_skipped,
        epoch_losses: Vec::new(),
        validation: Vec::new(),
        best_epoch: 0,
        best_metric: f64::NAN,
        stopped_epoch: 0,
    };
    let mut best: Option<Model> = None;
    let mut stale = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();

    for epoch in 1..=config.max_epochs {
        let mut rng = seeding::rng(seed, &[0xE90C, epoch as u64]);
        order.shuffle(&mut rng);
        let mut total = 0.0f64;
        let mut batches = 0usize;
        for batch in order.chunks(config.batch_size) {
            if batch.len() < min_batch {
                continue;
            }
            total += head.step(corpus, &train, batch, config, &mut opt)? as f64;
            batches += 1;
        }
        report.epoch_losses.push(total / batches.max(1) as f64);
        report.stopped_epoch = epoch;

        if epoch % config.validate_every == 0 {
            let snapshot = head.snapshot(corpus, config);
            let value = validation_metric(&snapshot, corpus, &split.val, config)?;
            report.validation.push(ValidationPoint {
                epoch,
                metric: value,
            });
            if best.is_none() || metric.improves(value, report.best_metric) {
                report.best_metric = value;
                report.best_epoch = epoch;
                best = Some(snapshot);
                stale = 0;
            } else {
                stale += 1;
                if stale >= config.patience {
                    break;
                }
            }
        }
    }

    let model = best.ok_or_else(|| Error::State("no validation point was reached".into()))?;
    Ok(TrainOutcome { report, model })
}

/// Trains once per grid entry and keeps the run with the best validation
/// metric; ties go to the smaller learning rate.
pub fn select_lr(
    config: &TrainConfig,
    fold: &FoldSpec,
    corpus: &Corpus,
    provider: Option<&dyn TextEmbeddingProvider>,
) -> Result<LrSelection> {
    config.validate()?;
    let metric = config.selection_metric();
    let mut runs = Vec::new();
    let mut winner: Option<(f64, f64, Model)> = None;
    for lr_index in 0..config.lr_grid().len() {
        let out = train_one(config, fold, corpus, provider, lr_index)?;
        let (lr, score) = (out.report.lr, out.report.best_metric);
        let take = match &winner {
            None => true,
            Some((best_lr, best_score, _)) => {
                metric.improves(score, *best_score) || (score == *best_score && lr < *best_lr)
            }
        };
        runs.push(out.report);
        if take {
            winner = Some((lr, score, out.model));
        }
    }
    let (selected_lr, _, model) = winner.expect("grid is nonempty");
    Ok(LrSelection {
        selected_lr,
        runs,
        model,
    })
}
