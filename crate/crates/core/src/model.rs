//! Trained heads and their decision paths.

use serde::{Deserialize, Serialize};

use crate::baselines::{asr_decide, classify, CtcParams, MatchRule, MlpParams};
use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::matcher::{embed_audio, embed_text, score_candidates, MatcherParams};
use crate::numerics::Matrix;
use crate::prompts::{
    gate_to_target, text_embedding, ClassSpace, PromptLabel, PromptTemplate, TextEmbeddingProvider,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    #[default]
    Matcher,
    Classifier,
    Ctc,
}

impl Objective {
    pub fn name(self) -> &'static str {
        match self {
            Objective::Matcher => "matcher",
            Objective::Classifier => "classifier",
            Objective::Ctc => "ctc",
        }
    }
}

impl std::fmt::Display for Objective {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Raw text-encoder vectors for every class prompt, one row per class in
/// class order.
pub fn candidate_text_matrix(
    classes: &ClassSpace,
    template: &PromptTemplate,
    provider: &dyn TextEmbeddingProvider,
) -> Result<Matrix<f32>> {
    let rows = classes
        .labels()
        .iter()
        .map(|l| text_embedding(provider, &template.render(l)))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&Matrix<f32>> = rows.iter().collect();
    Matrix::vstack(&refs)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MatcherModel {
    pub params: MatcherParams<f32>,
    pub classes: ClassSpace,
    pub template: PromptTemplate,
    /// Unprojected prompt vectors, one row per class.
    pub candidate_text: Matrix<f32>,
}

impl MatcherModel {
    /// Projected unit text vectors paired with their labels.
    pub fn candidates(&self) -> Result<Vec<(PromptLabel, Matrix<f32>)>> {
        let projected = embed_text(&self.params, &self.candidate_text)?;
        Ok(self
            .classes
            .labels()
            .into_iter()
            .enumerate()
            .map(|(i, l)| (l, projected.select_rows(&[i])))
            .collect())
    }

    /// Cosine scores against every candidate and the best label for one
    /// pooled recording (1×d_audio).
    pub fn score(&self, pooled: &Matrix<f32>) -> Result<(Vec<f32>, PromptLabel)> {
        let audio = embed_audio(&self.params, pooled)?;
        score_candidates(&audio, &self.candidates()?)
    }

    pub fn predict(&self, pooled: &Matrix<f32>) -> Result<Vec<PromptLabel>> {
        let candidates = self.candidates()?;
        let audio = embed_audio(&self.params, pooled)?;
        (0..audio.rows())
            .map(|r| Ok(score_candidates(&audio.select_rows(&[r]), &candidates)?.1))
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierModel {
    pub params: MlpParams<f32>,
    pub classes: ClassSpace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CtcModel {
    pub params: CtcParams<f32>,
    pub classes: ClassSpace,
    pub match_rule: MatchRule,
}

impl CtcModel {
    pub fn decide(&self, frames: &Matrix<f32>, target_word: &str) -> Result<(String, PromptLabel)> {
        let text = self.params.transcribe(frames)?;
        let label = asr_decide(&text, target_word, &self.params.alphabet, self.match_rule);
        Ok((text, label))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Matcher(MatcherModel),
    Classifier(ClassifierModel),
    Ctc(CtcModel),
}

impl Model {
    pub fn objective(&self) -> Objective {
        match self {
            Model::Matcher(_) => Objective::Matcher,
            Model::Classifier(_) => Objective::Classifier,
            Model::Ctc(_) => Objective::Ctc,
        }
    }

    pub fn classes(&self) -> &ClassSpace {
        match self {
            Model::Matcher(m) => &m.classes,
            Model::Classifier(m) => &m.classes,
            Model::Ctc(m) => &m.classes,
        }
    }

    /// Predicted labels for the given corpus entries. With `gate`, a word
    /// other than the entry's target is reported as mispronounced.
    pub fn predict(&self, corpus: &Corpus, idx: &[usize], gate: bool) -> Result<Vec<PromptLabel>> {
        if idx.is_empty() {
            return Ok(Vec::new());
        }
        if self.classes() != corpus.classes() {
            return Err(Error::Consistency(
                "model class set differs from the corpus vocabulary".into(),
            ));
        }
        let raw = match self {
            Model::Matcher(m) => m.predict(&corpus.pooled_rows(idx))?,
            Model::Classifier(m) => classify(&m.params, &corpus.pooled_rows(idx), &m.classes)?,
            Model::Ctc(m) => idx
                .iter()
                .map(|&i| Ok(m.decide(corpus.frames(i)?, &corpus.entry(i).target_word)?.1))
                .collect::<Result<Vec<_>>>()?,
        };
        Ok(if gate {
            raw.into_iter()
                .zip(idx)
                .map(|(l, &i)| gate_to_target(l, &corpus.entry(i).target_word))
                .collect()
        } else {
            raw
        })
    }
}
