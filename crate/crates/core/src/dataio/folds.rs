use rand::Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seeding;

/// One leave-one-speaker-out split.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub index: usize,
    pub test_speaker: String,
    pub val_speaker: String,
    pub train_speakers: Vec<String>,
    pub seed: u64,
}

pub fn loso_folds(dataset: &Dataset, seed: u64) -> Result<Vec<FoldSpec>> {
    loso_folds_for(&dataset.speakers, seed)
}

/// One fold per speaker (in the given order) as test; the validation
/// speaker is drawn uniformly from the others.
pub fn loso_folds_for(speakers: &[String], seed: u64) -> Result<Vec<FoldSpec>> {
    if speakers.len() < 3 {
        return Err(Error::InsufficientSpeakers(speakers.len()));
    }
    let mut rng = seeding::rng(seed, &[0x1050]);
    Ok(speakers
        .iter()
        .enumerate()
        .map(|(index, test)| {
            let others: Vec<&String> = speakers.iter().filter(|s| *s != test).collect();
            let val = others[rng.random_range(0..others.len())].clone();
            let train_speakers = others.into_iter().filter(|s| **s != val).cloned().collect();
            FoldSpec {
                index,
                test_speaker: test.clone(),
                val_speaker: val,
                train_speakers,
                seed: seeding::derive(seed, &[index as u64]),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn speakers(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("spk{i:02}")).collect()
    }

    #[test]
    fn one_fold_per_speaker_partitioning() {
        let s = speakers(34);
        let folds = loso_folds_for(&s, 3).unwrap();
        assert_eq!(folds.len(), 34);
        let tests: BTreeSet<_> = folds.iter().map(|f| f.test_speaker.clone()).collect();
        assert_eq!(tests.len(), 34);
        for f in &folds {
            assert_ne!(f.test_speaker, f.val_speaker);
            let mut all: Vec<String> = f.train_speakers.clone();
            all.push(f.test_speaker.clone());
            all.push(f.val_speaker.clone());
            all.sort();
            assert_eq!(all, s);
        }
    }

    #[test]
    fn three_speakers_forced_structure_and_determinism() {
        let s = speakers(3);
        let a = loso_folds_for(&s, 0).unwrap();
        assert_eq!(a.len(), 3);
        for f in &a {
            assert_eq!(f.train_speakers.len(), 1);
        }
        assert_eq!(a, loso_folds_for(&s, 0).unwrap());
    }

    #[test]
    fn too_few_speakers() {
        assert!(matches!(
            loso_folds_for(&speakers(2), 0),
            Err(Error::InsufficientSpeakers(2))
        ));
    }
}
