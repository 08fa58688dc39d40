//! Deterministic synthetic naming-task datasets.
//!
//! Every word owns a unit-norm centroid in frame space. A recording's
//! frames are the centroid of the word actually produced plus a speaker
//! offset and a per-recording deviation, overlaid with per-character codes
//! laid out in time (with blank gaps) and per-frame noise. Prompt vectors
//! are a fixed random linear image of the centroids, so a linear audio and
//! text projection pair can align them.

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dataio::{write_embedding_file, write_manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::numerics::{EmbeddingMatrix, Matrix, NORM_EPS};
use crate::prompts::{PromptLabel, PromptManifestEntry, PromptTemplate};
use crate::seeding;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MispronounceMode {
    /// A random direction unrelated to any word.
    Noise,
    /// Another vocabulary word's centroid.
    #[default]
    Swap,
    /// Convex mix of the target and another word, weight in [0.3, 0.7].
    Blend,
}

/// Extra per-layer copies of the dataset whose per-recording noise grows
/// with the distance from `best_layer`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSweepSpec {
    pub layers: Vec<u32>,
    pub best_layer: u32,
    /// Noise magnitude at the best layer.
    pub base_noise: f64,
    /// Added noise per layer of distance from the best layer.
    pub noise_slope: f64,
}

impl LayerSweepSpec {
    pub fn noise_at(&self, layer: u32) -> f64 {
        self.base_noise + self.noise_slope * (layer as f64 - self.best_layer as f64).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub n_speakers: usize,
    pub n_words: usize,
    pub repeats: usize,
    pub correct_rate: f64,
    pub frame_dim: usize,
    pub text_dim: usize,
    pub frames_min: usize,
    pub frames_max: usize,
    /// Norm scale of the per-recording deviation.
    pub cluster_spread: f64,
    /// Norm scale of the per-speaker offset.
    pub speaker_shift: f64,
    /// Norm scale of the per-frame noise.
    pub frame_noise: f64,
    /// Norm of each character code.
    pub char_scale: f64,
    /// Norm scale of noise added to word prompt vectors.
    pub text_noise: f64,
    /// Multiplier applied to every written frame value (and the stored
    /// centroids); the default gives roughly unit per-dimension spread.
    pub feature_scale: f64,
    pub mispronounce_mode: MispronounceMode,
    pub template: PromptTemplate,
    pub layer_sweep: Option<LayerSweepSpec>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_speakers: 10,
            n_words: 12,
            repeats: 4,
            correct_rate: 0.9,
            frame_dim: 64,
            text_dim: 48,
            frames_min: 20,
            frames_max: 120,
            cluster_spread: 0.05,
            speaker_shift: 0.05,
            frame_noise: 0.1,
            char_scale: 2.0,
            text_noise: 0.0,
            feature_scale: 8.0,
            mispronounce_mode: MispronounceMode::Swap,
            template: PromptTemplate::default(),
            layer_sweep: None,
            seed: 0,
        }
    }
}

impl SynthSpec {
    /// Named presets: `ds1-like` (34 speakers, 90 words, 90.3% correct)
    /// and `ds2-like` (16 speakers, 56 words, 57.5% correct).
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "ds1-like" => Ok(SynthSpec {
                n_speakers: 34,
                n_words: 90,
                repeats: 2,
                correct_rate: 0.903,
                ..Default::default()
            }),
            "ds2-like" => Ok(SynthSpec {
                n_speakers: 16,
                n_words: 56,
                repeats: 7,
                correct_rate: 0.575,
                ..Default::default()
            }),
            other => Err(Error::Config(format!(
                "unknown preset {other:?} (expected ds1-like or ds2-like)"
            ))),
        }
    }

    /// Parses a JSON spec. An optional `"preset"` key selects the base
    /// values the remaining keys override.
    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text)?;
        let serde_json::Value::Object(mut fields) = value else {
            return Err(Error::Config("spec must be a JSON object".into()));
        };
        let base = match fields.remove("preset") {
            None => SynthSpec::default(),
            Some(serde_json::Value::String(name)) => SynthSpec::preset(&name)?,
            Some(other) => {
                return Err(Error::Config(format!(
                    "preset must be a string, got {other}"
                )))
            }
        };
        let serde_json::Value::Object(mut merged) = serde_json::to_value(base)? else {
            unreachable!("specs serialize to objects")
        };
        for (k, v) in fields {
            if !merged.contains_key(&k) {
                return Err(Error::Config(format!("unknown spec field {k:?}")));
            }
            merged.insert(k, v);
        }
        let spec: SynthSpec = serde_json::from_value(serde_json::Value::Object(merged))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.n_speakers < 3 {
            return bad("n_speakers must be ≥ 3");
        }
        if self.n_words < 1 || self.repeats < 1 {
            return bad("n_words and repeats must be ≥ 1");
        }
        if !(self.correct_rate > 0.0 && self.correct_rate <= 1.0) {
            return bad("correct_rate must lie in (0, 1]");
        }
        if self.frame_dim < 2 || self.text_dim < 2 {
            return bad("frame_dim and text_dim must be ≥ 2");
        }
        if self.frames_min < 2 * MAX_WORD_LEN || self.frames_max < self.frames_min {
            return bad("frames range must satisfy 2·max word length ≤ frames_min ≤ frames_max");
        }
        if self.mispronounce_mode != MispronounceMode::Noise && self.n_words < 2 {
            return bad("swap and blend negatives need at least 2 words");
        }
        let scales = [
            self.cluster_spread,
            self.speaker_shift,
            self.frame_noise,
            self.char_scale,
            self.text_noise,
            self.feature_scale,
        ];
        if scales.iter().any(|s| !s.is_finite() || *s < 0.0) {
            return bad("noise scales must be finite and ≥ 0");
        }
        if let Some(sweep) = &self.layer_sweep {
            if sweep.layers.is_empty() {
                return bad("layer_sweep.layers must be nonempty");
            }
            if sweep.base_noise < 0.0 || sweep.noise_slope < 0.0 {
                return bad("layer noise must be ≥ 0");
            }
        }
        self.template.validate()
    }

    pub fn recordings(&self) -> usize {
        self.n_speakers * self.n_words * self.repeats
    }
}

const MAX_WORD_LEN: usize = 6;
/// Frames carrying each character; the rest of its slot is blank.
const CHAR_FRAMES: usize = 3;
const CONSONANTS: &[u8] = b"bcdfgjklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

// stream tags
const S_WORDS: u64 = 0x301;
const S_CENTROIDS: u64 = 0x302;
const S_CODES: u64 = 0x303;
const S_LABELS: u64 = 0x304;
const S_SPEAKERS: u64 = 0x305;
const S_RECORDING: u64 = 0x306;
const S_TEXT: u64 = 0x307;
const S_LAYER: u64 = 0x308;

/// `n` distinct lowercase consonant–vowel words of 2–3 syllables.
pub fn vocabulary(n: usize, seed: u64) -> Vec<String> {
    let mut rng = seeding::rng(seed, &[S_WORDS]);
    let mut seen = BTreeSet::new();
    let mut words = Vec::with_capacity(n);
    while words.len() < n {
        let syllables = rng.random_range(2..=3);
        let w: String = (0..syllables)
            .flat_map(|_| {
                [
                    CONSONANTS[rng.random_range(0..CONSONANTS.len())] as char,
                    VOWELS[rng.random_range(0..VOWELS.len())] as char,
                ]
            })
            .collect();
        if seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// Clinician labels in recording order (speaker, word, repeat), one
/// Bernoulli(correct_rate) draw each.
pub fn label_draws(spec: &SynthSpec) -> Vec<bool> {
    let mut rng = seeding::rng(spec.seed, &[S_LABELS]);
    (0..spec.recordings())
        .map(|_| rng.random_bool(spec.correct_rate))
        .collect()
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| StandardNormal.sample(rng)).collect()
}

fn unit(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    let v = gaussian(rng, dim);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Gaussian vector with expected norm close to `scale`.
fn spread(rng: &mut impl Rng, dim: usize, scale: f64) -> Vec<f64> {
    let k = scale / (dim as f64).sqrt();
    gaussian(rng, dim).into_iter().map(|x| x * k).collect()
}

fn axpy(acc: &mut [f64], a: f64, x: &[f64]) {
    for (y, v) in acc.iter_mut().zip(x) {
        *y += a * v;
    }
}

/// Ground truth for one generated recording.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordingTruth {
    pub recording_id: String,
    /// Character string laid out in the frames.
    pub spoken: String,
    /// Word whose centroid dominates, when there is one.
    pub produced_word: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub spec: SynthSpec,
    pub words: Vec<String>,
    pub speakers: Vec<String>,
    pub correct_count: usize,
    pub total: usize,
    /// Row i of this file is the centroid of `words[i]`.
    pub centroids_path: PathBuf,
    pub prompt_manifest: PathBuf,
    pub recordings: Vec<RecordingTruth>,
    /// Per-layer manifests when a layer sweep was requested.
    pub layer_manifests: Vec<(u32, PathBuf)>,
}

#[derive(Clone, Debug)]
pub struct Generated {
    pub manifest: PathBuf,
    pub prompt_manifest: PathBuf,
    pub ground_truth: PathBuf,
    pub truth: GroundTruth,
}

fn to_matrix(rows: &[Vec<f64>], scale: f64) -> EmbeddingMatrix {
    let cols = rows[0].len();
    let data = rows.iter().flatten().map(|&v| (v * scale) as f32).collect();
    Matrix::from_vec(rows.len(), cols, data).expect("rows share a length")
}

/// Symbol index per frame for `spoken` spread over `frames` frames: one
/// slot per character, the first ~60% of each slot carrying the character
/// and the rest blank.
fn frame_layout(spoken: &str, frames: usize) -> Vec<Option<usize>> {
    let chars: Vec<char> = spoken.chars().collect();
    let l = chars.len();
    let mut layout = vec![None; frames];
    for (k, _) in chars.iter().enumerate() {
        let start = k * frames / l;
        let end = (k + 1) * frames / l;
        let width = end - start;
        let active = CHAR_FRAMES.min(width - 1);
        for slot in layout.iter_mut().skip(start).take(active) {
            *slot = Some(k);
        }
    }
    layout
}

fn symbol_index(c: char) -> usize {
    // 1-based positions of a–z, matching the default CTC alphabet.
    (c as u8 - b'a') as usize + 1
}

/// Writes the dataset: `manifest.jsonl`, `frames/*.emb`, `prompts.jsonl`
/// with `prompts/*.emb`, `centroids.emb`, `ground_truth.json`, and
/// `layers/layer_KK/` copies when a layer sweep is configured.
pub fn generate(spec: &SynthSpec, out_dir: impl AsRef<Path>) -> Result<Generated> {
    spec.validate()?;
    let out = out_dir.as_ref();
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let d = spec.frame_dim;

    let words = vocabulary(spec.n_words, spec.seed);
    let mut crng = seeding::rng(spec.seed, &[S_CENTROIDS]);
    let centroids: Vec<Vec<f64>> = (0..spec.n_words).map(|_| unit(&mut crng, d)).collect();
    let mut code_rng = seeding::rng(spec.seed, &[S_CODES]);
    // index 0 is unused (blank frames carry no code)
    let codes: Vec<Vec<f64>> = (0..=26).map(|_| unit(&mut code_rng, d)).collect();
    let speakers: Vec<String> = (0..spec.n_speakers).map(|i| format!("spk{i:02}")).collect();
    let mut srng = seeding::rng(spec.seed, &[S_SPEAKERS]);
    let offsets: Vec<Vec<f64>> = speakers
        .iter()
        .map(|_| spread(&mut srng, d, spec.speaker_shift))
        .collect();
    let labels = label_draws(spec);

    let mut entries = Vec::with_capacity(spec.recordings());
    let mut truths = Vec::with_capacity(spec.recordings());
    let mut frame_sets = Vec::with_capacity(spec.recordings());
    let mut k = 0usize;
    for (s, speaker) in speakers.iter().enumerate() {
        for (w, word) in words.iter().enumerate() {
            for r in 0..spec.repeats {
                let correct = labels[k];
                let mut rng = seeding::rng(spec.seed, &[S_RECORDING, k as u64]);
                k += 1;
                let other = if spec.n_words > 1 {
                    let o = rng.random_range(0..spec.n_words - 1);
                    if o >= w {
                        o + 1
                    } else {
                        o
                    }
                } else {
                    w
                };
                let (content, spoken, produced) = if correct {
                    (centroids[w].clone(), word.clone(), Some(word.clone()))
                } else {
                    match spec.mispronounce_mode {
                        MispronounceMode::Swap => (
                            centroids[other].clone(),
                            words[other].clone(),
                            Some(words[other].clone()),
                        ),
                        MispronounceMode::Noise => {
                            let len = word.len();
                            let spoken: String = (0..len)
                                .map(|_| (b'a' + rng.random_range(0..26u8)) as char)
                                .collect();
                            (unit(&mut rng, d), spoken, None)
                        }
                        MispronounceMode::Blend => {
                            let lambda = rng.random_range(0.3..=0.7);
                            let mut c = vec![0.0; d];
                            axpy(&mut c, lambda, &centroids[w]);
                            axpy(&mut c, 1.0 - lambda, &centroids[other]);
                            let half = word.len() / 2;
                            let o = &words[other];
                            let spoken = format!("{}{}", &word[..half], &o[o.len() / 2..]);
                            (c, spoken, None)
                        }
                    }
                };
                let mut base = content;
                axpy(&mut base, 1.0, &offsets[s]);
                axpy(&mut base, 1.0, &spread(&mut rng, d, spec.cluster_spread));

                let t = rng.random_range(spec.frames_min..=spec.frames_max);
                let chars: Vec<char> = spoken.chars().collect();
                let layout = frame_layout(&spoken, t);
                let frames: Vec<Vec<f64>> = layout
                    .iter()
                    .map(|slot| {
                        let mut f = base.clone();
                        if let Some(c) = slot {
                            axpy(&mut f, spec.char_scale, &codes[symbol_index(chars[*c])]);
                        }
                        axpy(&mut f, 1.0, &spread(&mut rng, d, spec.frame_noise));
                        f
                    })
                    .collect();

                let id = format!("{speaker}_{word}_{r}");
                entries.push(ManifestEntry {
                    recording_id: id.clone(),
                    speaker_id: speaker.clone(),
                    target_word: word.clone(),
                    correct,
                    embedding_path: PathBuf::from("frames").join(format!("{id}.emb")),
                    frames: t,
                    dim: d,
                });
                truths.push(RecordingTruth {
                    recording_id: id,
                    spoken,
                    produced_word: produced,
                });
                frame_sets.push(frames);
            }
        }
    }

    for (e, frames) in entries.iter().zip(&frame_sets) {
        write_embedding_file(
            out.join(&e.embedding_path),
            &to_matrix(frames, spec.feature_scale),
        )?;
    }
    let manifest = out.join("manifest.jsonl");
    write_manifest(&manifest, &entries)?;

    let mut layer_manifests = Vec::new();
    if let Some(sweep) = &spec.layer_sweep {
        for &layer in &sweep.layers {
            let dir = out.join("layers").join(format!("layer_{layer:02}"));
            let sigma = sweep.noise_at(layer);
            for (i, (e, frames)) in entries.iter().zip(&frame_sets).enumerate() {
                let mut rng = seeding::rng(spec.seed, &[S_LAYER, layer as u64, i as u64]);
                let shift = spread(&mut rng, d, sigma);
                let shifted: Vec<Vec<f64>> = frames
                    .iter()
                    .map(|f| {
                        let mut g = f.clone();
                        axpy(&mut g, 1.0, &shift);
                        g
                    })
                    .collect();
                write_embedding_file(
                    dir.join(&e.embedding_path),
                    &to_matrix(&shifted, spec.feature_scale),
                )?;
            }
            let path = dir.join("manifest.jsonl");
            write_manifest(&path, &entries)?;
            layer_manifests.push((
                layer,
                PathBuf::from("layers")
                    .join(format!("layer_{layer:02}"))
                    .join("manifest.jsonl"),
            ));
        }
    }

    let prompt_manifest = write_prompts(spec, &words, &centroids, out)?;
    let centroids_path = PathBuf::from("centroids.emb");
    write_embedding_file(
        out.join(&centroids_path),
        &to_matrix(&centroids, spec.feature_scale),
    )?;

    let correct_count = labels.iter().filter(|&&c| c).count();
    let truth = GroundTruth {
        spec: spec.clone(),
        words,
        speakers,
        correct_count,
        total: labels.len(),
        centroids_path,
        prompt_manifest: PathBuf::from("prompts.jsonl"),
        recordings: truths,
        layer_manifests,
    };
    let ground_truth = out.join("ground_truth.json");
    fs::write(&ground_truth, serde_json::to_string_pretty(&truth)?)
        .map_err(|e| Error::io(&ground_truth, e))?;
    Ok(Generated {
        manifest,
        prompt_manifest,
        ground_truth,
        truth,
    })
}

/// Prompt vectors: `normalize(M · centroid + noise)` for each word under a
/// fixed random `M`, and an independent random direction for the
/// negative prompt.
fn write_prompts(
    spec: &SynthSpec,
    words: &[String],
    centroids: &[Vec<f64>],
    out: &Path,
) -> Result<PathBuf> {
    let mut rng = seeding::rng(spec.seed, &[S_TEXT]);
    let scale = 1.0 / (spec.frame_dim as f64).sqrt();
    let map: Vec<Vec<f64>> = (0..spec.text_dim)
        .map(|_| {
            gaussian(&mut rng, spec.frame_dim)
                .into_iter()
                .map(|x| x * scale)
                .collect()
        })
        .collect();
    let mut prompts: Vec<(String, Vec<f64>)> = Vec::new();
    for (word, c) in words.iter().zip(centroids) {
        let mut v: Vec<f64> = map
            .iter()
            .map(|row| row.iter().zip(c).map(|(a, b)| a * b).sum())
            .collect();
        axpy(
            &mut v,
            1.0,
            &spread(&mut rng, spec.text_dim, spec.text_noise),
        );
        prompts.push((spec.template.render(&PromptLabel::word(word.clone())), v));
    }
    prompts.push((
        spec.template.render(&PromptLabel::Mispronounced),
        unit(&mut rng, spec.text_dim),
    ));

    let mut lines = String::new();
    for (i, (prompt, v)) in prompts.iter().enumerate() {
        let rel = PathBuf::from("prompts").join(format!("p{i:04}.emb"));
        let m = to_matrix(std::slice::from_ref(v), 1.0).l2_normalize_rows(NORM_EPS)?;
        write_embedding_file(out.join(&rel), &m)?;
        let entry = PromptManifestEntry {
            prompt: prompt.clone(),
            embedding_path: rel,
        };
        lines.push_str(&serde_json::to_string(&entry)?);
        lines.push('\n');
    }
    let path = out.join("prompts.jsonl");
    fs::write(&path, lines).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::{load_dataset, pool_mean, read_embedding_file};
    use crate::prompts::{FileBackedProvider, TextEmbeddingProvider};

    fn small() -> SynthSpec {
        SynthSpec {
            n_speakers: 3,
            n_words: 5,
            repeats: 2,
            frames_min: 12,
            frames_max: 20,
            ..Default::default()
        }
    }

    #[test]
    fn presets_match_dataset_statistics() {
        let ds1 = SynthSpec::preset("ds1-like").unwrap();
        assert_eq!((ds1.n_speakers, ds1.n_words), (34, 90));
        let frac =
            label_draws(&ds1).iter().filter(|&&c| c).count() as f64 / ds1.recordings() as f64;
        assert!((frac - 0.903).abs() < 0.02, "{frac}");

        let ds2 = SynthSpec::preset("ds2-like").unwrap();
        assert_eq!((ds2.n_speakers, ds2.n_words), (16, 56));
        let frac =
            label_draws(&ds2).iter().filter(|&&c| c).count() as f64 / ds2.recordings() as f64;
        assert!((frac - 0.575).abs() < 0.02, "{frac}");
    }

    #[test]
    fn spec_json_merges_preset_and_rejects_unknown_keys() {
        let s = SynthSpec::from_json(r#"{"preset": "ds2-like", "seed": 9}"#).unwrap();
        assert_eq!((s.n_speakers, s.seed), (16, 9));
        assert!(SynthSpec::from_json(r#"{"n_speakerz": 3}"#).is_err());
        assert!(matches!(
            SynthSpec::from_json("{\n  \"seed\": }"),
            Err(Error::Json(_))
        ));
        assert!(SynthSpec::from_json(r#"{"n_speakers": 2}"#).is_err());
    }

    #[test]
    fn vocabulary_is_distinct_and_lowercase() {
        let v = vocabulary(90, 3);
        assert_eq!(v.iter().collect::<BTreeSet<_>>().len(), 90);
        assert!(v
            .iter()
            .all(|w| w.len() <= MAX_WORD_LEN && w.chars().all(|c| c.is_ascii_lowercase())));
    }

    #[test]
    fn layout_separates_characters_with_blanks() {
        let layout = frame_layout("aab", 12);
        assert_eq!(layout.len(), 12);
        // each character slot ends with at least one blank frame
        for k in 0..3 {
            let end = (k + 1) * 12 / 3;
            assert_eq!(layout[end - 1], None);
            assert_eq!(layout[k * 12 / 3], Some(k));
        }
    }

    #[test]
    fn generated_files_load_and_are_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let ga = generate(&small(), a.path()).unwrap();
        generate(&small(), b.path()).unwrap();
        let ds = load_dataset(&ga.manifest).unwrap();
        assert_eq!(ds.len(), 30);
        assert_eq!(ds.speakers.len(), 3);
        assert_eq!(
            ds.entries.iter().filter(|e| e.correct).count(),
            ga.truth.correct_count
        );
        assert_eq!(
            ga.truth.correct_count,
            label_draws(&small()).iter().filter(|&&c| c).count()
        );
        for rel in [
            "manifest.jsonl",
            "prompts.jsonl",
            "ground_truth.json",
            "centroids.emb",
        ] {
            assert_eq!(
                fs::read(a.path().join(rel)).unwrap(),
                fs::read(b.path().join(rel)).unwrap(),
                "{rel}"
            );
        }
        for e in &ds.entries {
            let rel = &e.embedding_path;
            assert_eq!(
                fs::read(a.path().join(rel)).unwrap(),
                fs::read(b.path().join(rel)).unwrap()
            );
        }
        let provider = FileBackedProvider::load(&ga.prompt_manifest).unwrap();
        assert_eq!(provider.dim(), small().text_dim);
        for w in &ga.truth.words {
            provider
                .embed(&small().template.render(&PromptLabel::word(w.clone())))
                .unwrap();
        }
        provider.embed("Mispronounced word").unwrap();
    }

    #[test]
    fn nearest_prototype_oracle_is_perfect_without_spread() {
        let spec = SynthSpec {
            cluster_spread: 0.0,
            speaker_shift: 0.0,
            frame_noise: 0.0,
            n_words: 8,
            ..small()
        };
        let dir = tempfile::tempdir().unwrap();
        let g = generate(&spec, dir.path()).unwrap();
        let ds = load_dataset(&g.manifest).unwrap();
        let pooled: Vec<Vec<f32>> = (0..ds.len())
            .map(|i| pool_mean(&ds.load_frames(i).unwrap()).unwrap().into_vec())
            .collect();
        // prototype of each word: pooled vector of one correct recording
        let mut protos: Vec<Option<&Vec<f32>>> = vec![None; g.truth.words.len()];
        for (i, t) in g.truth.recordings.iter().enumerate() {
            if let Some(w) = &t.produced_word {
                let k = g.truth.words.iter().position(|x| x == w).unwrap();
                protos[k].get_or_insert(&pooled[i]);
            }
        }
        let dist =
            |a: &[f32], b: &[f32]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f32>();
        for (i, e) in ds.entries.iter().enumerate() {
            let (k, _) = protos
                .iter()
                .enumerate()
                .filter_map(|(k, p)| p.map(|p| (k, dist(&pooled[i], p))))
                .min_by(|a, b| a.1.total_cmp(&b.1))
                .unwrap();
            let predicted_correct = g.truth.words[k] == e.target_word;
            assert_eq!(predicted_correct, e.correct, "{}", e.recording_id);
        }
        let c = read_embedding_file(dir.path().join("centroids.emb")).unwrap();
        assert_eq!(c.shape(), (8, spec.frame_dim));
    }

    #[test]
    fn layer_copies_share_recordings() {
        let spec = SynthSpec {
            layer_sweep: Some(LayerSweepSpec {
                layers: vec![4, 12],
                best_layer: 12,
                base_noise: 0.0,
                noise_slope: 0.1,
            }),
            ..small()
        };
        let dir = tempfile::tempdir().unwrap();
        let g = generate(&spec, dir.path()).unwrap();
        assert_eq!(g.truth.layer_manifests.len(), 2);
        let a = load_dataset(dir.path().join(&g.truth.layer_manifests[0].1)).unwrap();
        let b = load_dataset(dir.path().join(&g.truth.layer_manifests[1].1)).unwrap();
        assert_eq!(a.entries, b.entries);
        assert!((spec.layer_sweep.unwrap().noise_at(4) - 0.8).abs() < 1e-12);
    }
}
