//! A dataset with its embeddings loaded into memory.

use std::path::Path;

use crate::dataio::{load_dataset, pool_mean, Dataset, FoldSpec, ManifestEntry};
use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::prompts::{label_of, ClassSpace, PromptLabel};

#[derive(Clone, Debug)]
pub struct Corpus {
    dataset: Dataset,
    classes: ClassSpace,
    /// One mean-pooled row per entry.
    pooled: Matrix<f32>,
    frames: Option<Vec<Matrix<f32>>>,
    labels: Vec<usize>,
}

/// Entry indices of one fold, each in manifest order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Corpus {
    /// Reads every embedding file. Frame matrices are kept only when
    /// `keep_frames` is set (needed by the CTC path).
    pub fn load(dataset: Dataset, keep_frames: bool) -> Result<Self> {
        let mut pooled_rows = Vec::with_capacity(dataset.len());
        let mut frames = keep_frames.then(|| Vec::with_capacity(dataset.len()));
        let mut dim = None;
        for i in 0..dataset.len() {
            let f = dataset.load_frames(i)?;
            match dim {
                None => dim = Some(f.cols()),
                Some(d) if d != f.cols() => {
                    return Err(Error::Consistency(format!(
                        "recording {} has dimension {}, expected {d}",
                        dataset.entries[i].recording_id,
                        f.cols()
                    )))
                }
                _ => {}
            }
            pooled_rows.push(pool_mean(&f)?);
            if let Some(fs) = frames.as_mut() {
                fs.push(f);
            }
        }
        let refs: Vec<&Matrix<f32>> = pooled_rows.iter().collect();
        let pooled = Matrix::vstack(&refs)?;
        let classes = dataset.class_space();
        let labels = dataset
            .entries
            .iter()
            .map(|e| {
                classes
                    .index_of(&label_of(e))
                    .expect("vocabulary covers every target")
            })
            .collect();
        Ok(Corpus {
            dataset,
            classes,
            pooled,
            frames,
            labels,
        })
    }

    pub fn from_manifest(path: impl AsRef<Path>, keep_frames: bool) -> Result<Self> {
        Corpus::load(load_dataset(path)?, keep_frames)
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.dataset.entries
    }

    pub fn entry(&self, i: usize) -> &ManifestEntry {
        &self.dataset.entries[i]
    }

    pub fn len(&self) -> usize {
        self.dataset.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dataset.is_empty()
    }

    pub fn classes(&self) -> &ClassSpace {
        &self.classes
    }

    pub fn audio_dim(&self) -> usize {
        self.pooled.cols()
    }

    pub fn pooled(&self) -> &Matrix<f32> {
        &self.pooled
    }

    pub fn pooled_rows(&self, idx: &[usize]) -> Matrix<f32> {
        self.pooled.select_rows(idx)
    }

    pub fn has_frames(&self) -> bool {
        self.frames.is_some()
    }

    pub fn frames(&self, i: usize) -> Result<&Matrix<f32>> {
        self.frames
            .as_ref()
            .map(|f| &f[i])
            .ok_or_else(|| Error::State("corpus was loaded without frame matrices".into()))
    }

    /// Class index of the clinician label.
    pub fn label_index(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn label(&self, i: usize) -> PromptLabel {
        self.classes.label(self.labels[i])
    }

    pub fn split(&self, fold: &FoldSpec) -> FoldSplit {
        let mut split = FoldSplit {
            train: Vec::new(),
            val: Vec::new(),
            test: Vec::new(),
        };
        for (i, e) in self.dataset.entries.iter().enumerate() {
            if e.speaker_id == fold.test_speaker {
                split.test.push(i);
            } else if e.speaker_id == fold.val_speaker {
                split.val.push(i);
            } else {
                split.train.push(i);
            }
        }
        split
    }
}
