//! Trained models on disk: a directory of EMB1 matrices next to a
//! `checkpoint.json` sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::baselines::{Alphabet, CtcParams, MatchRule, MlpParams};
use crate::dataio::{read_embedding_file, write_embedding_file};
use crate::error::{Error, Result};
use crate::matcher::MatcherParams;
use crate::model::{ClassifierModel, CtcModel, MatcherModel, Model};
use crate::numerics::{Matrix, Param};
use crate::prompts::{ClassSpace, PromptTemplate};

pub const SIDECAR: &str = "checkpoint.json";
pub const FORMAT_VERSION: u32 = 1;

/// `s_audio` and `s_text` are the log-domain scale parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Sidecar {
    Matcher {
        format_version: u32,
        vocabulary: Vec<String>,
        audio_dim: usize,
        text_dim: usize,
        shared_dim: usize,
        s_audio: f64,
        s_text: f64,
        template: PromptTemplate,
    },
    Classifier {
        format_version: u32,
        vocabulary: Vec<String>,
        input_dim: usize,
        hidden_dim: usize,
        running_mean: Vec<f64>,
        running_var: Vec<f64>,
        momentum: f64,
        eps: f64,
    },
    Ctc {
        format_version: u32,
        vocabulary: Vec<String>,
        input_dim: usize,
        keep_accents: bool,
        match_rule: MatchRule,
    },
}

impl Sidecar {
    fn format_version(&self) -> u32 {
        match self {
            Sidecar::Matcher { format_version, .. }
            | Sidecar::Classifier { format_version, .. }
            | Sidecar::Ctc { format_version, .. } => *format_version,
        }
    }
}

/// `path` may name the checkpoint directory or its sidecar file.
pub fn checkpoint_dir(path: &Path) -> PathBuf {
    if path.file_name().is_some_and(|n| n == SIDECAR) {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    } else {
        path.to_path_buf()
    }
}

fn put(dir: &Path, name: &str, m: &Matrix<f32>) -> Result<()> {
    write_embedding_file(dir.join(format!("{name}.emb")), m)
}

fn get(dir: &Path, name: &str, shape: (usize, usize)) -> Result<Matrix<f32>> {
    let path = dir.join(format!("{name}.emb"));
    let m = read_embedding_file(&path)?;
    if m.shape() != shape {
        return Err(Error::Consistency(format!(
            "{} has shape {:?}, sidecar implies {:?}",
            path.display(),
            m.shape(),
            shape
        )));
    }
    Ok(m)
}

fn widen(v: &[f32]) -> Vec<f64> {
    v.iter().map(|&x| x as f64).collect()
}

fn narrow(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

/// Writes `model` into `dir`, creating it if needed.
pub fn save(model: &Model, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let vocabulary = model.classes().vocabulary().to_vec();
    let sidecar = match model {
        Model::Matcher(m) => {
            let p = &m.params;
            put(dir, "w_audio", &p.w_audio.value)?;
            put(dir, "b_audio", &p.b_audio.value)?;
            put(dir, "w_text", &p.w_text.value)?;
            put(dir, "b_text", &p.b_text.value)?;
            put(dir, "candidate_text", &m.candidate_text)?;
            Sidecar::Matcher {
                format_version: FORMAT_VERSION,
                vocabulary,
                audio_dim: p.audio_dim(),
                text_dim: p.text_dim(),
                shared_dim: p.shared_dim(),
                s_audio: p.s_audio.value.item() as f64,
                s_text: p.s_text.value.item() as f64,
                template: m.template.clone(),
            }
        }
        Model::Classifier(m) => {
            let p = &m.params;
            for (name, v) in [
                ("w1", &p.w1),
                ("b1", &p.b1),
                ("gamma", &p.gamma),
                ("beta", &p.beta),
                ("w2", &p.w2),
                ("b2", &p.b2),
            ] {
                put(dir, name, &v.value)?;
            }
            Sidecar::Classifier {
                format_version: FORMAT_VERSION,
                vocabulary,
                input_dim: p.input_dim(),
                hidden_dim: p.hidden_dim(),
                running_mean: widen(&p.running_mean),
                running_var: widen(&p.running_var),
                momentum: p.momentum,
                eps: p.eps,
            }
        }
        Model::Ctc(m) => {
            put(dir, "w", &m.params.w.value)?;
            put(dir, "b", &m.params.b.value)?;
            Sidecar::Ctc {
                format_version: FORMAT_VERSION,
                vocabulary,
                input_dim: m.params.input_dim(),
                keep_accents: m.params.alphabet.keeps_accents(),
                match_rule: m.match_rule,
            }
        }
    };
    let path = dir.join(SIDECAR);
    let text = serde_json::to_string_pretty(&sidecar)?;
    fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<Model> {
    let dir = checkpoint_dir(path.as_ref());
    let side_path = dir.join(SIDECAR);
    let text = fs::read_to_string(&side_path).map_err(|e| Error::io(&side_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text)?;
    if sidecar.format_version() != FORMAT_VERSION {
        return Err(Error::Config(format!(
            "unsupported checkpoint format version {}",
            sidecar.format_version()
        )));
    }
    Ok(match sidecar {
        Sidecar::Matcher {
            vocabulary,
            audio_dim,
            text_dim,
            shared_dim,
            s_audio,
            s_text,
            template,
            ..
        } => {
            template.validate()?;
            let classes = ClassSpace::new(vocabulary);
            let params = MatcherParams {
                w_audio: Param::new(get(&dir, "w_audio", (audio_dim, shared_dim))?),
                b_audio: Param::new(get(&dir, "b_audio", (1, shared_dim))?),
                w_text: Param::new(get(&dir, "w_text", (text_dim, shared_dim))?),
                b_text: Param::new(get(&dir, "b_text", (1, shared_dim))?),
                s_audio: Param::scalar(s_audio as f32),
                s_text: Param::scalar(s_text as f32),
            };
            let candidate_text = get(&dir, "candidate_text", (classes.len(), text_dim))?;
            Model::Matcher(MatcherModel {
                params,
                classes,
                template,
                candidate_text,
            })
        }
        Sidecar::Classifier {
            vocabulary,
            input_dim,
            hidden_dim,
            running_mean,
            running_var,
            momentum,
            eps,
            ..
        } => {
            let classes = ClassSpace::new(vocabulary);
            if running_mean.len() != hidden_dim || running_var.len() != hidden_dim {
                return Err(Error::Consistency(
                    "running statistics do not match hidden_dim".into(),
                ));
            }
            let k = classes.len();
            let params = MlpParams {
                w1: Param::new(get(&dir, "w1", (input_dim, hidden_dim))?),
                b1: Param::new(get(&dir, "b1", (1, hidden_dim))?),
                gamma: Param::new(get(&dir, "gamma", (1, hidden_dim))?),
                beta: Param::new(get(&dir, "beta", (1, hidden_dim))?),
                w2: Param::new(get(&dir, "w2", (hidden_dim, k))?),
                b2: Param::new(get(&dir, "b2", (1, k))?),
                running_mean: narrow(&running_mean),
                running_var: narrow(&running_var),
                momentum,
                eps,
            };
            Model::Classifier(ClassifierModel { params, classes })
        }
        Sidecar::Ctc {
            vocabulary,
            input_dim,
            keep_accents,
            match_rule,
            ..
        } => {
            let alphabet = Alphabet::new(keep_accents);
            let v = alphabet.len();
            let params = CtcParams {
                w: Param::new(get(&dir, "w", (input_dim, v))?),
                b: Param::new(get(&dir, "b", (1, v))?),
                alphabet,
            };
            Model::Ctc(CtcModel {
                params,
                classes: ClassSpace::new(vocabulary),
                match_rule,
            })
        }
    })
}
