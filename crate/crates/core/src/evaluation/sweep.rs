use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::crossval::{crossval, CvSummary, MeanStd};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::Objective;
use crate::training::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerResult {
    pub layer: u32,
    pub accuracy: MeanStd,
    pub macro_f1: MeanStd,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Best first; equal accuracies keep the lower layer first.
    pub ranking: Vec<LayerResult>,
    pub summaries: BTreeMap<u32, CvSummary>,
}

impl SweepReport {
    pub fn best_layer(&self) -> u32 {
        self.ranking[0].layer
    }
}

fn recording_key(corpus: &Corpus) -> Vec<(String, String, String, bool)> {
    let mut key: Vec<_> = corpus
        .entries()
        .iter()
        .map(|e| {
            (
                e.recording_id.clone(),
                e.speaker_id.clone(),
                e.target_word.clone(),
                e.correct,
            )
        })
        .collect();
    key.sort();
    key
}

/// Cross-validates the classification baseline on each layer's embeddings
/// under one config and ranks layers by mean accuracy.
pub fn layer_sweep(
    layers: &BTreeMap<u32, Corpus>,
    config: &TrainConfig,
    jobs: usize,
) -> Result<SweepReport> {
    let (&first_layer, first) = layers
        .iter()
        .next()
        .ok_or(Error::EmptyInput("layer sweep needs at least one layer"))?;
    let reference = recording_key(first);
    for (&layer, corpus) in layers {
        if recording_key(corpus) != reference {
            return Err(Error::Consistency(format!(
                "layer {layer} does not hold the same recordings and labels as layer {first_layer}"
            )));
        }
    }
    let mut config = config.clone();
    config.model.kind = Objective::Classifier;
    let mut summaries = BTreeMap::new();
    for (&layer, corpus) in layers {
        summaries.insert(layer, crossval(&config, corpus, None, jobs)?);
    }
    let mut ranking: Vec<LayerResult> = summaries
        .iter()
        .map(|(&layer, s)| LayerResult {
            layer,
            accuracy: s.accuracy,
            macro_f1: s.macro_f1,
        })
        .collect();
    ranking.sort_by(|a, b| b.accuracy.mean.total_cmp(&a.accuracy.mean));
    Ok(SweepReport { ranking, summaries })
}
