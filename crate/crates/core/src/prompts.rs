//! Class labels, prompt rendering and text-embedding providers.

use std::collections::HashMap;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{read_embedding_file, ManifestEntry};
use crate::error::{Error, Result};
use crate::numerics::{EmbeddingMatrix, Matrix, NORM_EPS};
use crate::seeding;

/// The label attached to one recording: the target word when the attempt
/// was judged correct, or the single shared negative class.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptLabel {
    Word(String),
    Mispronounced,
}

impl PromptLabel {
    pub fn word(w: impl Into<String>) -> Self {
        PromptLabel::Word(w.into())
    }

    pub fn is_word(&self, target: &str) -> bool {
        matches!(self, PromptLabel::Word(w) if w == target)
    }
}

impl fmt::Display for PromptLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PromptLabel::Word(w) => f.write_str(w),
            PromptLabel::Mispronounced => f.write_str("mispronounced"),
        }
    }
}

pub fn label_of(entry: &ManifestEntry) -> PromptLabel {
    label_for(&entry.target_word, entry.correct)
}

pub fn label_for(target_word: &str, correct: bool) -> PromptLabel {
    if correct {
        PromptLabel::Word(target_word.to_string())
    } else {
        PromptLabel::Mispronounced
    }
}

/// A prediction naming a word other than the prompted target counts as a
/// failed naming attempt.
pub fn gate_to_target(predicted: PromptLabel, target_word: &str) -> PromptLabel {
    match predicted {
        PromptLabel::Word(w) if w != target_word => PromptLabel::Mispronounced,
        other => other,
    }
}

/// Fixed class ordering: vocabulary in lexicographic order, then
/// `mispronounced` as the last class.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSpace {
    vocabulary: Vec<String>,
}

impl ClassSpace {
    /// `vocabulary` is sorted and deduplicated.
    pub fn new(vocabulary: impl IntoIterator<Item = String>) -> Self {
        let mut vocabulary: Vec<String> = vocabulary.into_iter().collect();
        vocabulary.sort();
        vocabulary.dedup();
        ClassSpace { vocabulary }
    }

    pub fn vocabulary(&self) -> &[String] {
        &self.vocabulary
    }

    /// Number of classes, including `mispronounced`.
    pub fn len(&self) -> usize {
        self.vocabulary.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mispronounced_index(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn index_of(&self, label: &PromptLabel) -> Option<usize> {
        match label {
            PromptLabel::Word(w) => self.vocabulary.binary_search(w).ok(),
            PromptLabel::Mispronounced => Some(self.mispronounced_index()),
        }
    }

    pub fn label(&self, index: usize) -> PromptLabel {
        if index < self.vocabulary.len() {
            PromptLabel::Word(self.vocabulary[index].clone())
        } else {
            PromptLabel::Mispronounced
        }
    }

    pub fn labels(&self) -> Vec<PromptLabel> {
        (0..self.len()).map(|i| self.label(i)).collect()
    }
}

/// How labels are turned into text.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub positive_template: String,
    pub negative_text: String,
}

pub const WORD_PLACEHOLDER: &str = "{word}";

impl Default for PromptTemplate {
    fn default() -> Self {
        PromptTemplate {
            positive_template: "Correct pronunciation of the word {word}".into(),
            negative_text: "Mispronounced word".into(),
        }
    }
}

impl PromptTemplate {
    pub fn new(positive_template: &str, negative_text: &str) -> Result<Self> {
        let t = PromptTemplate {
            positive_template: positive_template.into(),
            negative_text: negative_text.into(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.positive_template.matches(WORD_PLACEHOLDER).count();
        if n != 1 {
            return Err(Error::Config(format!(
                "positive template must contain exactly one {WORD_PLACEHOLDER}, found {n}"
            )));
        }
        Ok(())
    }

    pub fn render(&self, label: &PromptLabel) -> String {
        render_prompt(label, self)
    }
}

pub fn render_prompt(label: &PromptLabel, template: &PromptTemplate) -> String {
    match label {
        PromptLabel::Word(w) => template.positive_template.replacen(WORD_PLACEHOLDER, w, 1),
        PromptLabel::Mispronounced => template.negative_text.clone(),
    }
}

/// Source of fixed text-encoder outputs for prompt strings.
pub trait TextEmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    /// A 1×dim vector; the same prompt always yields the same vector.
    fn embed(&self, prompt: &str) -> Result<EmbeddingMatrix>;
}

pub fn text_embedding(
    provider: &dyn TextEmbeddingProvider,
    prompt: &str,
) -> Result<EmbeddingMatrix> {
    provider.embed(prompt)
}

/// Expands a 64-bit hash of the prompt into a unit-norm Gaussian direction.
#[derive(Clone, Debug)]
pub struct SyntheticProvider {
    dim: usize,
    seed: u64,
}

impl SyntheticProvider {
    pub fn new(dim: usize, seed: u64) -> Self {
        assert!(dim >= 1, "provider dimension must be positive");
        SyntheticProvider { dim, seed }
    }
}

impl TextEmbeddingProvider for SyntheticProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, prompt: &str) -> Result<EmbeddingMatrix> {
        let key = seeding::fnv1a64(prompt.as_bytes()) ^ seeding::splitmix64(self.seed);
        let mut rng = ChaCha20Rng::seed_from_u64(key);
        let v: Vec<f64> = (0..self.dim)
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let unit = Matrix::row_vector(&v).l2_normalize_rows(NORM_EPS)?;
        Ok(unit.cast())
    }
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PromptManifestEntry {
    pub prompt: String,
    pub embedding_path: PathBuf,
}

/// Looks prompts up in a JSON-lines manifest of precomputed vectors.
#[derive(Clone, Debug)]
pub struct FileBackedProvider {
    dim: usize,
    vectors: HashMap<String, EmbeddingMatrix>,
}

impl FileBackedProvider {
    pub fn load(manifest: impl AsRef<Path>) -> Result<Self> {
        let manifest = manifest.as_ref();
        let root = manifest.parent().unwrap_or(Path::new("."));
        let file = File::open(manifest).map_err(|e| Error::io(manifest, e))?;
        let mut vectors = HashMap::new();
        let mut dim = None;
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(manifest, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let load_err = |message: String| Error::Load {
                path: manifest.to_path_buf(),
                line: i + 1,
                message,
            };
            let entry: PromptManifestEntry =
                serde_json::from_str(&line).map_err(|e| load_err(e.to_string()))?;
            let m = read_embedding_file(root.join(&entry.embedding_path))
                .map_err(|e| load_err(e.to_string()))?;
            if m.rows() != 1 {
                return Err(load_err(format!(
                    "expected a 1×dim vector, got {:?}",
                    m.shape()
                )));
            }
            match dim {
                None => dim = Some(m.cols()),
                Some(d) if d != m.cols() => {
                    return Err(load_err(format!("dimension {} differs from {d}", m.cols())))
                }
                _ => {}
            }
            vectors.insert(entry.prompt, m);
        }
        let dim = dim.ok_or(Error::EmptyInput("prompt manifest"))?;
        Ok(FileBackedProvider { dim, vectors })
    }

    pub fn from_vectors(vectors: HashMap<String, EmbeddingMatrix>) -> Result<Self> {
        let dim = vectors
            .values()
            .next()
            .ok_or(Error::EmptyInput("prompt vectors"))?
            .cols();
        Ok(FileBackedProvider { dim, vectors })
    }
}

impl TextEmbeddingProvider for FileBackedProvider {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, prompt: &str) -> Result<EmbeddingMatrix> {
        self.vectors
            .get(prompt)
            .cloned()
            .ok_or_else(|| Error::UnknownPrompt(prompt.to_string()))
    }
}

/// Serializable provider selection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProviderConfig {
    FileBacked { manifest: PathBuf },
    Synthetic { dim: usize, seed: u64 },
}

impl ProviderConfig {
    /// Relative manifest paths are resolved against `base`.
    pub fn build(&self, base: &Path) -> Result<Box<dyn TextEmbeddingProvider>> {
        Ok(match self {
            ProviderConfig::FileBacked { manifest } => {
                Box::new(FileBackedProvider::load(base.join(manifest))?)
            }
            ProviderConfig::Synthetic { dim, seed } => {
                if *dim == 0 {
                    return Err(Error::Config("synthetic provider dim must be ≥ 1".into()));
                }
                Box::new(SyntheticProvider::new(*dim, *seed))
            }
        })
    }
}
