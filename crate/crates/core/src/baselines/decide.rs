use serde::{Deserialize, Serialize};

use super::ctc::Alphabet;
use crate::prompts::PromptLabel;

/// How the target word must appear in a transcription to count as named.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchRule {
    /// The normalized target equals one whitespace-delimited token
    /// (a multi-word target must match consecutive tokens).
    #[default]
    TokenBoundary,
    /// Plain substring search; "pomme" is found inside "pommette".
    RawSubstring,
}

pub fn asr_decide(
    transcription: &str,
    target_word: &str,
    alphabet: &Alphabet,
    rule: MatchRule,
) -> PromptLabel {
    let text = alphabet.normalize(transcription);
    let target = alphabet.normalize(target_word);
    if target.is_empty() {
        return PromptLabel::Mispronounced;
    }
    let found = match rule {
        MatchRule::RawSubstring => text.contains(&target),
        MatchRule::TokenBoundary => {
            let hay: Vec<&str> = text.split(' ').collect();
            let needle: Vec<&str> = target.split(' ').collect();
            hay.windows(needle.len()).any(|w| w == needle.as_slice())
        }
    };
    if found {
        PromptLabel::Word(target_word.to_string())
    } else {
        PromptLabel::Mispronounced
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_rule() {
        let a = Alphabet::default();
        let r = MatchRule::TokenBoundary;
        assert_eq!(
            asr_decide("la pomme rouge", "pomme", &a, r),
            PromptLabel::word("pomme")
        );
        assert_eq!(
            asr_decide("pom", "pomme", &a, r),
            PromptLabel::Mispronounced
        );
        assert_eq!(asr_decide("", "pomme", &a, r), PromptLabel::Mispronounced);
        assert_eq!(
            asr_decide("la pommette", "pomme", &a, r),
            PromptLabel::Mispronounced
        );
        assert_eq!(
            asr_decide("LA POMME", "pomme", &a, r),
            PromptLabel::word("pomme")
        );
        assert_eq!(
            asr_decide("une tete", "tête", &a, r),
            PromptLabel::word("tête")
        );
    }

    #[test]
    fn raw_substring_rule() {
        let a = Alphabet::default();
        assert_eq!(
            asr_decide("la pommette", "pomme", &a, MatchRule::RawSubstring),
            PromptLabel::word("pomme")
        );
    }
}
