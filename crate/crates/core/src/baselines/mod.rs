//! Classification (MLP) and ASR-style (CTC) baselines.

pub mod ctc;
mod decide;
mod mlp;
mod wer;

pub use ctc::{ctc_greedy_decode, ctc_loss, Alphabet, CtcParams};
pub use decide::{asr_decide, MatchRule};
pub use mlp::{classify, MlpParams, BN_EPS, BN_MOMENTUM, DEFAULT_HIDDEN};
pub use wer::{edit_distance, tokens, wer};
