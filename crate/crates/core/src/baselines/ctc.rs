//! CTC head over frozen frame embeddings: log-space forward–backward loss,
//! greedy decoding and the character alphabet.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matcher::uniform_weights;
use crate::numerics::{argmax, log_sum_exp, Matrix, Param, Parameters, Real, Tape, Var};
use crate::seeding;

pub const BLANK: usize = 0;

const BASE_SYMBOLS: &str = "abcdefghijklmnopqrstuvwxyz'- ";
const ACCENTED_SYMBOLS: &str = "àâäçéèêëîïôöùûüÿœæ";

/// Output symbols; index 0 is the blank.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    symbols: Vec<char>,
    keep_accents: bool,
}

impl Default for Alphabet {
    fn default() -> Self {
        Self::new(false)
    }
}

impl Alphabet {
    /// Lowercase a–z, apostrophe, hyphen and space, plus French accented
    /// letters when `keep_accents` is set.
    pub fn new(keep_accents: bool) -> Self {
        let mut symbols = vec!['_'];
        symbols.extend(BASE_SYMBOLS.chars());
        if keep_accents {
            symbols.extend(ACCENTED_SYMBOLS.chars());
        }
        Alphabet {
            symbols,
            keep_accents,
        }
    }

    /// Size including the blank.
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn keeps_accents(&self) -> bool {
        self.keep_accents
    }

    /// Lowercases, folds accents unless kept, maps every whitespace run to
    /// one space and drops symbols outside the alphabet.
    pub fn normalize(&self, text: &str) -> String {
        let mut out = String::new();
        for ch in text.to_lowercase().chars() {
            if ch.is_whitespace() {
                if !out.is_empty() && !out.ends_with(' ') {
                    out.push(' ');
                }
                continue;
            }
            if self.keep_accents && ACCENTED_SYMBOLS.contains(ch) {
                out.push(ch);
                continue;
            }
            match fold_accent(ch) {
                Some(folded) => out.push_str(folded),
                None if BASE_SYMBOLS.contains(ch) => out.push(ch),
                None => {}
            }
        }
        out.trim_end().to_string()
    }

    /// Normalized symbol indices of `text` (never containing the blank).
    pub fn encode(&self, text: &str) -> Vec<usize> {
        self.normalize(text)
            .chars()
            .filter_map(|c| self.symbols.iter().position(|&s| s == c))
            .collect()
    }

    pub fn decode(&self, ids: &[usize]) -> String {
        ids.iter()
            .filter(|&&i| i != BLANK && i < self.symbols.len())
            .map(|&i| self.symbols[i])
            .collect()
    }
}

fn fold_accent(ch: char) -> Option<&'static str> {
    Some(match ch {
        'à' | 'â' | 'ä' | 'á' | 'ã' | 'å' => "a",
        'ç' => "c",
        'é' | 'è' | 'ê' | 'ë' => "e",
        'î' | 'ï' | 'í' | 'ì' => "i",
        'ô' | 'ö' | 'ó' | 'ò' | 'õ' => "o",
        'ù' | 'û' | 'ü' | 'ú' => "u",
        'ÿ' | 'ý' => "y",
        'ñ' => "n",
        'œ' => "oe",
        'æ' => "ae",
        '’' => "'",
        _ => return None,
    })
}

/// Minimum frame count able to emit `target`: one per symbol plus one
/// separating blank per adjacent repeat.
pub fn min_frames(target: &[usize]) -> usize {
    target.len() + target.windows(2).filter(|w| w[0] == w[1]).count()
}

/// Loss and state occupancies from the forward–backward recursions.
#[derive(Clone, Debug)]
pub struct CtcForwardBackward<T> {
    pub loss: T,
    /// T×V posterior probability that frame t emits symbol k on a valid path.
    pub occupancy: Matrix<T>,
}

fn check_target<T: Real>(logprobs: &Matrix<T>, target: &[usize]) -> Result<()> {
    if logprobs.rows() == 0 {
        return Err(Error::EmptyInput("ctc over zero frames"));
    }
    for &s in target {
        if s == BLANK || s >= logprobs.cols() {
            return Err(Error::IndexOutOfRange {
                index: s,
                bound: logprobs.cols(),
            });
        }
    }
    let required = min_frames(target);
    if logprobs.rows() < required {
        return Err(Error::InfeasibleAlignment {
            frames: logprobs.rows(),
            required,
        });
    }
    Ok(())
}

fn extended(target: &[usize]) -> Vec<usize> {
    let mut ext = Vec::with_capacity(2 * target.len() + 1);
    ext.push(BLANK);
    for &s in target {
        ext.push(s);
        ext.push(BLANK);
    }
    ext
}

/// Whether state `s` may be entered directly from `s - 2`.
fn can_skip(ext: &[usize], s: usize) -> bool {
    s >= 2 && ext[s] != BLANK && ext[s] != ext[s - 2]
}

fn forward<T: Real>(logprobs: &Matrix<T>, ext: &[usize]) -> Matrix<T> {
    let (frames, states) = (logprobs.rows(), ext.len());
    let ninf = T::neg_infinity();
    let mut alpha = Matrix::from_vec(frames, states, vec![ninf; frames * states]).unwrap();
    alpha[(0, 0)] = logprobs[(0, ext[0])];
    if states > 1 {
        alpha[(0, 1)] = logprobs[(0, ext[1])];
    }
    for t in 1..frames {
        for s in 0..states {
            let mut terms = [ninf; 3];
            terms[0] = alpha[(t - 1, s)];
            if s >= 1 {
                terms[1] = alpha[(t - 1, s - 1)];
            }
            if can_skip(ext, s) {
                terms[2] = alpha[(t - 1, s - 2)];
            }
            let prev = log_sum_exp(&terms);
            if prev != ninf {
                alpha[(t, s)] = prev + logprobs[(t, ext[s])];
            }
        }
    }
    alpha
}

/// β'(t, s): log-probability of emitting frames t+1.. given state s at t.
fn backward<T: Real>(logprobs: &Matrix<T>, ext: &[usize]) -> Matrix<T> {
    let (frames, states) = (logprobs.rows(), ext.len());
    let ninf = T::neg_infinity();
    let mut beta = Matrix::from_vec(frames, states, vec![ninf; frames * states]).unwrap();
    beta[(frames - 1, states - 1)] = T::zero();
    if states > 1 {
        beta[(frames - 1, states - 2)] = T::zero();
    }
    for t in (0..frames - 1).rev() {
        for s in 0..states {
            let mut terms = [ninf; 3];
            terms[0] = beta[(t + 1, s)] + logprobs[(t + 1, ext[s])];
            if s + 1 < states {
                terms[1] = beta[(t + 1, s + 1)] + logprobs[(t + 1, ext[s + 1])];
            }
            if s + 2 < states && can_skip(ext, s + 2) {
                terms[2] = beta[(t + 1, s + 2)] + logprobs[(t + 1, ext[s + 2])];
            }
            beta[(t, s)] = log_sum_exp(&terms);
        }
    }
    beta
}

fn total_log_prob<T: Real>(alpha: &Matrix<T>) -> T {
    let (frames, states) = alpha.shape();
    if states == 1 {
        alpha[(frames - 1, 0)]
    } else {
        log_sum_exp(&[
            alpha[(frames - 1, states - 1)],
            alpha[(frames - 1, states - 2)],
        ])
    }
}

/// Negative log-likelihood of `target` given row-log-softmax `logprobs`
/// (T×V, blank at column 0), summed over all alignments.
pub fn ctc_loss<T: Real>(logprobs: &Matrix<T>, target: &[usize]) -> Result<T> {
    check_target(logprobs, target)?;
    let alpha = forward(logprobs, &extended(target));
    Ok(-total_log_prob(&alpha))
}

pub fn forward_backward<T: Real>(
    logprobs: &Matrix<T>,
    target: &[usize],
) -> Result<CtcForwardBackward<T>> {
    check_target(logprobs, target)?;
    let ext = extended(target);
    let alpha = forward(logprobs, &ext);
    let beta = backward(logprobs, &ext);
    let log_p = total_log_prob(&alpha);
    let (frames, vocab) = logprobs.shape();
    let mut occupancy = Matrix::zeros(frames, vocab);
    for t in 0..frames {
        for (s, &k) in ext.iter().enumerate() {
            let v = alpha[(t, s)] + beta[(t, s)];
            if v != T::neg_infinity() {
                occupancy[(t, k)] = occupancy[(t, k)] + (v - log_p).exp();
            }
        }
    }
    Ok(CtcForwardBackward {
        loss: -log_p,
        occupancy,
    })
}

/// Gradient of the loss with respect to the log-probabilities.
pub fn logprob_gradient<T: Real>(occupancy: &Matrix<T>) -> Matrix<T> {
    occupancy.map(|v| -v)
}

/// Gradient with respect to the pre-softmax logits: `softmax − occupancy`.
pub fn logit_gradient<T: Real>(logprobs: &Matrix<T>, occupancy: &Matrix<T>) -> Matrix<T> {
    let mut g = logprobs.map(|v| v.exp());
    for (a, &o) in g.as_mut_slice().iter_mut().zip(occupancy.as_slice()) {
        *a = *a - o;
    }
    g
}

/// Best-path symbol ids: per-frame argmax, repeats collapsed, blanks removed.
pub fn greedy_path<T: Real>(logprobs: &Matrix<T>) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for t in 0..logprobs.rows() {
        let k = argmax(logprobs.row(t));
        if Some(k) != prev && k != BLANK {
            out.push(k);
        }
        prev = Some(k);
    }
    out
}

pub fn ctc_greedy_decode<T: Real>(logprobs: &Matrix<T>, alphabet: &Alphabet) -> String {
    alphabet.decode(&greedy_path(logprobs))
}

/// Linear projection from frame embeddings to symbol logits.
#[derive(Clone, Debug, PartialEq)]
pub struct CtcParams<T> {
    /// d_in × V
    pub w: Param<T>,
    /// 1 × V
    pub b: Param<T>,
    pub alphabet: Alphabet,
}

impl<T: Real> CtcParams<T> {
    pub fn init(d_in: usize, alphabet: Alphabet, seed: u64) -> Self {
        let mut rng = seeding::rng(seed, &[0xC7C]);
        let v = alphabet.len();
        CtcParams {
            w: Param::new(uniform_weights(d_in, v, &mut rng)),
            b: Param::new(Matrix::zeros(1, v)),
            alphabet,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn logits(&self, frames: &Matrix<T>) -> Result<Matrix<T>> {
        frames
            .matmul(&self.w.value)?
            .add_row_broadcast(&self.b.value)
    }

    pub fn log_probs(&self, frames: &Matrix<T>) -> Result<Matrix<T>> {
        Ok(self.logits(frames)?.log_softmax_rows())
    }

    pub fn transcribe(&self, frames: &Matrix<T>) -> Result<String> {
        Ok(ctc_greedy_decode(&self.log_probs(frames)?, &self.alphabet))
    }

    fn record(
        &self,
        tape: &mut Tape<T>,
        batch: &[(&Matrix<T>, &[usize])],
    ) -> Result<(Var, [Var; 2])> {
        let w = self.w.track(tape);
        let b = self.b.track(tape);
        let mut losses = Vec::with_capacity(batch.len());
        for (frames, target) in batch {
            let x = tape.leaf((*frames).clone());
            let h = tape.matmul(x, w)?;
            let logits = tape.add_bias(h, b)?;
            losses.push(tape.ctc_loss(logits, target)?);
        }
        Ok((tape.mean(&losses)?, [w, b]))
    }

    /// Mean CTC loss over a batch of (frames, target ids).
    pub fn batch_loss(&self, batch: &[(&Matrix<T>, &[usize])]) -> Result<T> {
        let mut tape = Tape::new();
        let (loss, _) = self.record(&mut tape, batch)?;
        Ok(tape.value(loss).item())
    }

    pub fn batch_loss_and_accumulate(&mut self, batch: &[(&Matrix<T>, &[usize])]) -> Result<T> {
        let mut tape = Tape::new();
        let (loss, [w, b]) = self.record(&mut tape, batch)?;
        let grads = tape.backward(loss)?;
        self.w.accumulate_from(&grads, w);
        self.b.accumulate_from(&grads, b);
        Ok(tape.value(loss).item())
    }
}

impl<T: Real> Parameters<T> for CtcParams<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w, &self.b]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w, &mut self.b]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lp(rows: &[&[f64]]) -> Matrix<f64> {
        let m = Matrix::from_rows(rows);
        m.map(|v| v.ln())
    }

    #[test]
    fn two_frame_uniform_enumerates_three_paths() {
        let logprobs = lp(&[&[0.5, 0.5], &[0.5, 0.5]]);
        let loss = ctc_loss(&logprobs, &[1]).unwrap();
        assert!((loss + 0.75f64.ln()).abs() < 1e-12);
        assert!((loss - 0.28768).abs() < 1e-5);
    }

    #[test]
    fn single_forced_path() {
        let logprobs = Matrix::from_rows(&[[f64::NEG_INFINITY, 0.0]]);
        assert_eq!(ctc_loss(&logprobs, &[1]).unwrap(), 0.0);
    }

    #[test]
    fn infeasible_targets() {
        let logprobs = lp(&[&[0.5, 0.5]]);
        assert!(matches!(
            ctc_loss(&logprobs, &[1, 1]),
            Err(Error::InfeasibleAlignment {
                frames: 1,
                required: 3
            })
        ));
        assert!(ctc_loss(&logprobs, &[0]).is_err());
        assert_eq!(min_frames(&[1, 2, 2, 3, 3, 3]), 9);
    }

    #[test]
    fn occupancy_rows_sum_to_one() {
        let logits = Matrix::from_rows(&[
            [0.1, 0.5, -0.2],
            [0.3, -0.1, 0.9],
            [1.0, 0.0, 0.2],
            [0.0, 0.4, 0.1],
        ]);
        let fb = forward_backward(&logits.log_softmax_rows(), &[1, 2]).unwrap();
        for t in 0..4 {
            let s: f64 = fb.occupancy.row(t).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn greedy_collapse_rule() {
        let a = Alphabet::default();
        let ia = a.encode("a")[0];
        let ib = a.encode("b")[0];
        let one_hot = |ids: &[usize]| {
            let mut m = Matrix::<f64>::zeros(ids.len(), a.len());
            for (t, &k) in ids.iter().enumerate() {
                m[(t, k)] = 5.0;
            }
            m
        };
        assert_eq!(ctc_greedy_decode(&one_hot(&[ia, ia, BLANK, ib]), &a), "ab");
        assert_eq!(ctc_greedy_decode(&one_hot(&[BLANK, BLANK]), &a), "");
        assert_eq!(ctc_greedy_decode(&one_hot(&[ia, BLANK, ia]), &a), "aa");
    }

    #[test]
    fn normalization_folds_accents() {
        let a = Alphabet::default();
        assert_eq!(a.normalize("  Pâté  de  Canard! "), "pate de canard");
        assert_eq!(a.normalize("Cœur"), "coeur");
        let keep = Alphabet::new(true);
        assert_eq!(keep.normalize("Pâté"), "pâté");
        assert_eq!(a.decode(&a.encode("l'arbre-vert")), "l'arbre-vert");
    }
}
