//! The JSON run configuration shared by `crossval` and `layer-sweep`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::model::Objective;
use crate::prompts::{ProviderConfig, TextEmbeddingProvider};
use crate::training::{ModelOptions, TrainConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// Recording manifest (JSON lines).
    pub manifest: PathBuf,
    /// Text-embedding source; required by the matcher.
    #[serde(default)]
    pub provider: Option<ProviderConfig>,
    /// Per-layer manifests for `layer-sweep`.
    #[serde(default)]
    pub layers: BTreeMap<u32, PathBuf>,
}

/// Output file names, written under the command's `--out` directory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub summary_json: String,
    pub summary_csv: String,
    pub table_csv: String,
    pub sweep_json: String,
    /// Directory for per-fold checkpoints; `None` skips them.
    pub checkpoints: Option<String>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            summary_json: "summary.json".into(),
            summary_csv: "summary.csv".into(),
            table_csv: "table.csv".into(),
            sweep_json: "sweep.json".into(),
            checkpoints: Some("checkpoints".into()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub model: ModelOptions,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub seed: u64,
    /// Directory the config was read from.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn from_json(text: &str, base_dir: impl Into<PathBuf>) -> Result<Self> {
        let mut c: RunConfig = serde_json::from_str(text)?;
        c.base_dir = base_dir.into();
        c.train_config().validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        RunConfig::from_json(&text, base)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.base_dir.join(p)
    }

    pub fn with_objective(mut self, kind: Objective) -> Self {
        self.model.kind = kind;
        self
    }

    /// The train section with the run seed and model options folded in.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            model: self.model.clone(),
            ..self.train.clone()
        }
    }

    /// Loads the main manifest, keeping frames only when the CTC head
    /// needs them.
    pub fn corpus(&self) -> Result<Corpus> {
        Corpus::from_manifest(
            self.resolve(&self.data.manifest),
            self.model.kind == Objective::Ctc,
        )
    }

    pub fn layer_corpora(&self) -> Result<BTreeMap<u32, Corpus>> {
        if self.data.layers.is_empty() {
            return Err(Error::Config("data.layers is empty".into()));
        }
        self.data
            .layers
            .iter()
            .map(|(&k, p)| Ok((k, Corpus::from_manifest(self.resolve(p), false)?)))
            .collect()
    }

    /// The configured provider, or `None` when the objective needs none.
    pub fn provider(&self) -> Result<Option<Box<dyn TextEmbeddingProvider>>> {
        match (&self.data.provider, self.model.kind) {
            (Some(p), Objective::Matcher) => Ok(Some(p.build(&self.base_dir)?)),
            (None, Objective::Matcher) => {
                Err(Error::Config("the matcher needs data.provider".into()))
            }
            _ => Ok(None),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_takes_defaults() {
        let c = RunConfig::from_json(r#"{"data": {"manifest": "m.jsonl"}, "seed": 7}"#, "/cfg")
            .unwrap();
        let t = c.train_config();
        assert_eq!(
            (t.seed, t.max_epochs, t.objective()),
            (7, 30, Objective::Matcher)
        );
        assert_eq!(c.resolve(&c.data.manifest), PathBuf::from("/cfg/m.jsonl"));
        assert!(matches!(c.provider(), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in [
            r#"{"data": {"manifest": "m"}, "extra": 1}"#,
            r#"{"data": {"manifest": "m", "x": 1}}"#,
            r#"{"data": {"manifest": "m"}, "train": {"epochs": 3}}"#,
            r#"{"data": {"manifest": "m"}, "model": {"kind": "matcher", "dim": 3}}"#,
        ] {
            assert!(
                matches!(RunConfig::from_json(text, ""), Err(Error::Json(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn nested_sections_parse() {
        let text = r#"{
            "data": {"manifest": "m", "provider": {"mode": "synthetic", "dim": 8, "seed": 1},
                     "layers": {"4": "l4.jsonl", "12": "l12.jsonl"}},
            "model": {"kind": "classifier", "hidden_dim": 32},
            "train": {"max_epochs": 10, "lr_grid": [0.001]},
            "eval": {"checkpoints": null}
        }"#;
        let c = RunConfig::from_json(text, "").unwrap();
        assert_eq!(c.data.layers.keys().copied().collect::<Vec<_>>(), [4, 12]);
        assert_eq!(c.train_config().lr_grid(), [0.001]);
        assert_eq!(c.eval.checkpoints, None);
        assert!(c.provider().unwrap().is_none());
    }

    #[test]
    fn invalid_train_section_is_a_config_error() {
        let err = RunConfig::from_json(
            r#"{"data": {"manifest": "m"}, "train": {"max_epochs": 7}}"#,
            "",
        )
        .unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }
}
