use std::collections::{BTreeSet, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::emb1::{read_embedding_file, read_header};
use crate::error::{Error, Result};
use crate::numerics::EmbeddingMatrix;
use crate::prompts::ClassSpace;

/// One recording in a dataset manifest (one JSON object per line).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub recording_id: String,
    pub speaker_id: String,
    pub target_word: String,
    /// Clinician annotation: the produced word matches the target.
    pub correct: bool,
    /// Relative to the manifest's directory.
    pub embedding_path: PathBuf,
    pub frames: usize,
    pub dim: usize,
}

/// A validated manifest.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub entries: Vec<ManifestEntry>,
    /// Sorted unique target words.
    pub vocabulary: Vec<String>,
    /// Sorted unique speaker ids.
    pub speakers: Vec<String>,
    root: PathBuf,
}

impl Dataset {
    /// Builds a dataset from entries whose paths are relative to `root`,
    /// deriving the sorted vocabulary and speaker list.
    pub fn from_entries(entries: Vec<ManifestEntry>, root: impl Into<PathBuf>) -> Self {
        let vocabulary: BTreeSet<String> = entries.iter().map(|e| e.target_word.clone()).collect();
        let speakers: BTreeSet<String> = entries.iter().map(|e| e.speaker_id.clone()).collect();
        Dataset {
            entries,
            vocabulary: vocabulary.into_iter().collect(),
            speakers: speakers.into_iter().collect(),
            root: root.into(),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn class_space(&self) -> ClassSpace {
        ClassSpace::new(self.vocabulary.iter().cloned())
    }

    pub fn embedding_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.embedding_path)
    }

    pub fn load_frames(&self, index: usize) -> Result<EmbeddingMatrix> {
        read_embedding_file(self.embedding_path(&self.entries[index]))
    }

    /// Indices of entries spoken by `speaker`, in manifest order.
    pub fn indices_for_speaker(&self, speaker: &str) -> Vec<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, e)| e.speaker_id == speaker)
            .map(|(i, _)| i)
            .collect()
    }
}

/// Loads and validates a JSON-lines manifest, checking every referenced
/// embedding file header against the declared shape.
pub fn load_dataset(manifest_path: impl AsRef<Path>) -> Result<Dataset> {
    let path = manifest_path.as_ref();
    let root = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut entries = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let err = |message: String| Error::Load {
            path: path.to_path_buf(),
            line: i + 1,
            message,
        };
        let entry: ManifestEntry = serde_json::from_str(&line).map_err(|e| err(e.to_string()))?;
        if entry.recording_id.is_empty() {
            return Err(err("empty recording_id".into()));
        }
        if entry.speaker_id.is_empty() {
            return Err(err("empty speaker_id".into()));
        }
        if entry.target_word.is_empty() || entry.target_word != entry.target_word.to_lowercase() {
            return Err(err(format!(
                "target_word {:?} must be nonempty and lowercase",
                entry.target_word
            )));
        }
        if !seen.insert(entry.recording_id.clone()) {
            return Err(err(format!(
                "duplicate recording_id {:?}",
                entry.recording_id
            )));
        }
        let header = read_header(root.join(&entry.embedding_path))
            .map_err(|e| err(format!("embedding file: {e}")))?;
        if header.rows != entry.frames as u64 || header.cols != entry.dim as u64 {
            return Err(err(format!(
                "declared {}×{} but {} holds {}×{}",
                entry.frames,
                entry.dim,
                entry.embedding_path.display(),
                header.rows,
                header.cols
            )));
        }
        entries.push(entry);
    }
    if entries.is_empty() {
        return Err(Error::Load {
            path: path.to_path_buf(),
            line: 0,
            message: "manifest has no entries".into(),
        });
    }
    Ok(Dataset::from_entries(entries, root))
}

/// Writes entries as JSON lines.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[ManifestEntry]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
