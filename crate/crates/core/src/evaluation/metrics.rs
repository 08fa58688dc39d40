use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prompts::{ClassSpace, PromptLabel};

/// Counts indexed as `[true][predicted]`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            counts: vec![vec![0; classes]; classes],
        }
    }

    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if let Some(row) = counts.iter().find(|r| r.len() != c) {
            return Err(Error::Shape {
                op: "confusion matrix",
                left: (c, c),
                right: (1, row.len()),
            });
        }
        Ok(ConfusionMatrix { counts })
    }

    /// Builds the matrix from parallel class-index lists.
    pub fn from_indices(classes: usize, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::Shape {
                op: "confusion matrix",
                left: (truth.len(), 1),
                right: (predicted.len(), 1),
            });
        }
        let mut cm = ConfusionMatrix::new(classes);
        for (&t, &p) in truth.iter().zip(predicted) {
            cm.record(t, p)?;
        }
        Ok(cm)
    }

    pub fn from_labels(
        classes: &ClassSpace,
        truth: &[PromptLabel],
        predicted: &[PromptLabel],
    ) -> Result<Self> {
        let index = |l: &PromptLabel| {
            classes
                .index_of(l)
                .ok_or_else(|| Error::UnknownPrompt(format!("label {l} is outside the class set")))
        };
        let t = truth.iter().map(index).collect::<Result<Vec<_>>>()?;
        let p = predicted.iter().map(index).collect::<Result<Vec<_>>>()?;
        ConfusionMatrix::from_indices(classes.len(), &t, &p)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        let c = self.classes();
        for i in [truth, predicted] {
            if i >= c {
                return Err(Error::IndexOutOfRange { index: i, bound: c });
            }
        }
        self.counts[truth][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> usize {
        self.counts.len()
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth][predicted]
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes()).map(|i| self.counts[i][i]).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub total: u64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and macro-averaged metrics. Undefined ratios count as 0 and
/// every class in the matrix enters the macro average.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 || cm.classes() == 0 {
        return Err(Error::EmptyInput("confusion matrix has no counts"));
    }
    let c = cm.classes();
    let per_class: Vec<ClassMetrics> = (0..c)
        .map(|k| {
            let tp = cm.get(k, k);
            let predicted: u64 = (0..c).map(|t| cm.get(t, k)).sum();
            let support: u64 = cm.counts()[k].iter().sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / c as f64;
    Ok(MetricsReport {
        accuracy: cm.trace() as f64 / total as f64,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        total,
    })
}
