//! Word-naming verification over precomputed speech embeddings.
//!
//! A recording's pooled audio embedding is projected next to text-prompt
//! embeddings ("Correct pronunciation of the word {word}" per vocabulary
//! word, plus one "Mispronounced word" prompt) and the closest prompt by
//! cosine similarity is the decision. The projection heads and their logit
//! scales are trained with a symmetric contrastive loss.
//!
//! Alongside the matcher live two baselines (an MLP classifier over the
//! same pooled vectors and a linear CTC head over frames), a
//! leave-one-speaker-out harness, a layer sweep, a synthetic corpus
//! generator, and a finite-difference audit of every gradient.
//!
//! All training runs on a small reverse-mode tape ([`numerics::Tape`]);
//! randomness derives from one seed through [`seeding`].

pub mod baselines;
pub mod checkpoint;
pub mod commands;
pub mod config;
pub mod corpus;
pub mod dataio;
pub mod error;
pub mod evaluation;
pub mod matcher;
pub mod model;
pub mod numerics;
pub mod optim;
pub mod prompts;
pub mod seeding;
pub mod selfcheck;
pub mod synthdata;
pub mod training;

pub use error::{Error, Result};
