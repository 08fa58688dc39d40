use crate::error::{Error, Result};

/// Levenshtein distance over arbitrary tokens.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Word error rate: edit distance divided by the reference length.
pub fn wer<S: AsRef<str>>(reference: &[S], hypothesis: &[S]) -> Result<f64> {
    if reference.is_empty() {
        return Err(Error::UndefinedWer);
    }
    let r: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let h: Vec<&str> = hypothesis.iter().map(AsRef::as_ref).collect();
    Ok(edit_distance(&r, &h) as f64 / r.len() as f64)
}

/// Whitespace tokenization used for WER and the decision rule.
pub fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}
