//! Contrastive audio–text head.
//!
//! Pooled audio and text encoder outputs are projected into a shared
//! space, normalized, and compared with cosine similarity scaled by two
//! learnable logit scales `τ = exp(s)`. Training minimizes the symmetric
//! identity-label cross-entropy over in-batch pairs.

use rand::Rng;

use crate::error::{Error, Result};
use crate::numerics::{cross_entropy_mean, Matrix, Param, Parameters, Real, Tape, Var, NORM_EPS};
use crate::prompts::PromptLabel;
use crate::seeding;

pub const DEFAULT_SHARED_DIM: usize = 256;

/// Initial temperature; both logit scales start at `ln(1 / 0.07)`.
pub const INIT_TEMPERATURE: f64 = 0.07;

const UNIT_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct MatcherParams<T> {
    /// d_audio × d
    pub w_audio: Param<T>,
    /// 1 × d
    pub b_audio: Param<T>,
    /// d_text × d
    pub w_text: Param<T>,
    /// 1 × d
    pub b_text: Param<T>,
    /// Audio→text logit scale exponent.
    pub s_audio: Param<T>,
    /// Text→audio logit scale exponent.
    pub s_text: Param<T>,
}

/// Uniform ±1/sqrt(fan_in) weights.
pub(crate) fn uniform_weights<T: Real>(
    fan_in: usize,
    fan_out: usize,
    rng: &mut impl Rng,
) -> Matrix<T> {
    let bound = 1.0 / (fan_in as f64).sqrt();
    let data = (0..fan_in * fan_out)
        .map(|_| T::of_f64(rng.random_range(-bound..bound)))
        .collect();
    Matrix::from_vec(fan_in, fan_out, data).expect("sized by construction")
}

pub fn init_matcher<T: Real>(
    d_audio: usize,
    d_text: usize,
    d: usize,
    seed: u64,
) -> MatcherParams<T> {
    MatcherParams::init(d_audio, d_text, d, seed)
}

impl<T: Real> MatcherParams<T> {
    pub fn init(d_audio: usize, d_text: usize, d: usize, seed: u64) -> Self {
        assert!(
            d_audio >= 1 && d_text >= 1 && d >= 1,
            "dimensions must be positive"
        );
        let mut rng = seeding::rng(seed, &[0xA11]);
        let s0 = T::of_f64((1.0 / INIT_TEMPERATURE).ln());
        MatcherParams {
            w_audio: Param::new(uniform_weights(d_audio, d, &mut rng)),
            b_audio: Param::new(Matrix::zeros(1, d)),
            w_text: Param::new(uniform_weights(d_text, d, &mut rng)),
            b_text: Param::new(Matrix::zeros(1, d)),
            s_audio: Param::scalar(s0),
            s_text: Param::scalar(s0),
        }
    }

    pub fn audio_dim(&self) -> usize {
        self.w_audio.value.rows()
    }

    pub fn text_dim(&self) -> usize {
        self.w_text.value.rows()
    }

    pub fn shared_dim(&self) -> usize {
        self.w_audio.value.cols()
    }

    pub fn audio_scale(&self) -> T {
        self.s_audio.value.item().exp()
    }

    pub fn text_scale(&self) -> T {
        self.s_text.value.item().exp()
    }

    pub fn cast<U: Real>(&self) -> MatcherParams<U> {
        MatcherParams {
            w_audio: self.w_audio.cast(),
            b_audio: self.b_audio.cast(),
            w_text: self.w_text.cast(),
            b_text: self.b_text.cast(),
            s_audio: self.s_audio.cast(),
            s_text: self.s_text.cast(),
        }
    }

    /// Records the full symmetric loss on `tape`.
    fn record_loss(
        &self,
        tape: &mut Tape<T>,
        audio: &Matrix<T>,
        text: &Matrix<T>,
        mask: Option<&[bool]>,
    ) -> Result<(Var, [Var; 6])> {
        if audio.rows() != text.rows() {
            return Err(Error::Shape {
                op: "matcher batch",
                left: audio.shape(),
                right: text.shape(),
            });
        }
        let vars = [
            self.w_audio.track(tape),
            self.b_audio.track(tape),
            self.w_text.track(tape),
            self.b_text.track(tape),
            self.s_audio.track(tape),
            self.s_text.track(tape),
        ];
        let [wa, ba, wt, bt, sa, st] = vars;
        let xa = tape.leaf(audio.clone());
        let xt = tape.leaf(text.clone());

        let pa = tape.matmul(xa, wa)?;
        let pa = tape.add_bias(pa, ba)?;
        let a = tape.l2_normalize_rows(pa, NORM_EPS)?;
        let pt = tape.matmul(xt, wt)?;
        let pt = tape.add_bias(pt, bt)?;
        let t = tape.l2_normalize_rows(pt, NORM_EPS)?;

        let sim_at = tape.matmul_transposed(a, t)?;
        let l_at = tape.exp_scale(sim_at, sa)?;
        let sim_ta = tape.matmul_transposed(t, a)?;
        let l_ta = tape.exp_scale(sim_ta, st)?;

        let labels: Vec<usize> = (0..audio.rows()).collect();
        let ce_at = tape.softmax_cross_entropy(l_at, &labels, mask)?;
        let ce_ta = tape.softmax_cross_entropy(l_ta, &labels, mask)?;
        let loss = tape.mean(&[ce_at, ce_ta])?;
        Ok((loss, vars))
    }

    /// Loss for a batch of paired pooled audio (N×d_audio) and text
    /// (N×d_text) encoder outputs.
    pub fn loss(&self, audio: &Matrix<T>, text: &Matrix<T>, mask: Option<&[bool]>) -> Result<T> {
        let mut tape = Tape::new();
        let (loss, _) = self.record_loss(&mut tape, audio, text, mask)?;
        Ok(tape.value(loss).item())
    }

    /// Like [`loss`](Self::loss) but also accumulates gradients into
    /// every parameter.
    pub fn loss_and_accumulate(
        &mut self,
        audio: &Matrix<T>,
        text: &Matrix<T>,
        mask: Option<&[bool]>,
    ) -> Result<T> {
        let mut tape = Tape::new();
        let (loss, vars) = self.record_loss(&mut tape, audio, text, mask)?;
        let grads = tape.backward(loss)?;
        for (p, v) in self.params_mut().into_iter().zip(vars) {
            p.accumulate_from(&grads, v);
        }
        Ok(tape.value(loss).item())
    }
}

impl<T: Real> Parameters<T> for MatcherParams<T> {
    fn params(&self) -> Vec<&Param<T>> {
        vec![
            &self.w_audio,
            &self.b_audio,
            &self.w_text,
            &self.b_text,
            &self.s_audio,
            &self.s_text,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![
            &mut self.w_audio,
            &mut self.b_audio,
            &mut self.w_text,
            &mut self.b_text,
            &mut self.s_audio,
            &mut self.s_text,
        ]
    }
}

fn project<T: Real>(x: &Matrix<T>, w: &Param<T>, b: &Param<T>) -> Result<Matrix<T>> {
    x.matmul(&w.value)?
        .add_row_broadcast(&b.value)?
        .l2_normalize_rows(NORM_EPS)
}

/// `normalize(pooled · W_a + b_a)`, row-wise for a batch.
pub fn embed_audio<T: Real>(p: &MatcherParams<T>, pooled: &Matrix<T>) -> Result<Matrix<T>> {
    project(pooled, &p.w_audio, &p.b_audio)
}

/// `normalize(pooled · W_t + b_t)`, row-wise for a batch.
pub fn embed_text<T: Real>(p: &MatcherParams<T>, pooled: &Matrix<T>) -> Result<Matrix<T>> {
    project(pooled, &p.w_text, &p.b_text)
}

fn check_unit_rows<T: Real>(m: &Matrix<T>) -> Result<()> {
    for (row, n) in m.row_norms().into_iter().enumerate() {
        if (n.as_f64() - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::State(format!(
                "row {row} has norm {n}, expected a unit vector"
            )));
        }
    }
    Ok(())
}

/// `(τ_a · A·Tᵀ, τ_t · T·Aᵀ)` for unit-row embedding matrices.
pub fn pair_logits<T: Real>(
    p: &MatcherParams<T>,
    audio: &Matrix<T>,
    text: &Matrix<T>,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if audio.shape() != text.shape() {
        return Err(Error::Shape {
            op: "pair_logits",
            left: audio.shape(),
            right: text.shape(),
        });
    }
    check_unit_rows(audio)?;
    check_unit_rows(text)?;
    let l_at = audio.matmul_transposed(text)?.scale(p.audio_scale());
    let l_ta = text.matmul_transposed(audio)?.scale(p.text_scale());
    Ok((l_at, l_ta))
}

/// Half the sum of the two identity-label cross-entropies.
pub fn contrastive_loss<T: Real>(l_at: &Matrix<T>, l_ta: &Matrix<T>) -> Result<T> {
    let n = l_at.rows();
    if n == 0 {
        return Err(Error::EmptyInput("contrastive_loss"));
    }
    if l_at.shape() != (n, n) || l_ta.shape() != (n, n) {
        return Err(Error::Shape {
            op: "contrastive_loss",
            left: l_at.shape(),
            right: l_ta.shape(),
        });
    }
    let labels: Vec<usize> = (0..n).collect();
    let half = T::of_f64(0.5);
    Ok(half * (cross_entropy_mean(l_at, &labels)? + cross_entropy_mean(l_ta, &labels)?))
}

/// N×N mask excluding off-diagonal pairs whose texts are identical (the
/// same prompt appears twice in a batch). Returns `None` when nothing
/// would be masked.
pub fn duplicate_text_mask<K: PartialEq>(texts: &[K]) -> Option<Vec<bool>> {
    let n = texts.len();
    let mask: Vec<bool> = (0..n * n)
        .map(|k| {
            let (i, j) = (k / n, k % n);
            i != j && texts[i] == texts[j]
        })
        .collect();
    mask.iter().any(|&m| m).then_some(mask)
}

/// Cosine scores of `audio_emb` (1×d, unit) against each candidate text
/// vector, and the best-scoring label. Ties keep the earlier candidate.
pub fn score_candidates<T: Real>(
    audio_emb: &Matrix<T>,
    candidates: &[(PromptLabel, Matrix<T>)],
) -> Result<(Vec<T>, PromptLabel)> {
    if candidates.is_empty() {
        return Err(Error::EmptyInput("score_candidates needs candidates"));
    }
    let mut scores = Vec::with_capacity(candidates.len());
    for (_, t) in candidates {
        if t.shape() != audio_emb.shape() {
            return Err(Error::Shape {
                op: "score_candidates",
                left: audio_emb.shape(),
                right: t.shape(),
            });
        }
        let s = audio_emb
            .as_slice()
            .iter()
            .zip(t.as_slice())
            .fold(T::zero(), |a, (&x, &y)| a + x * y);
        scores.push(s);
    }
    let best = crate::numerics::argmax(&scores);
    Ok((scores, candidates[best].0.clone()))
}
