//! Choosing the next reference phrase for a simulated editor.

use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PickMode {
    /// No token of the phrase may occur in the hypothesis.
    Strict,
    /// Only the first token must be absent from the hypothesis.
    Relaxed,
}

impl std::str::FromStr for PickMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "strict" => Ok(Self::Strict),
            "relaxed" => Ok(Self::Relaxed),
            _ => Err(format!("unknown mode `{s}`, expected strict or relaxed")),
        }
    }
}

/// Whether the reference span `start..start + n` may be picked.
pub fn eligible<T: PartialEq>(
    hypothesis: &[T],
    reference: &[T],
    start: usize,
    n: usize,
    mode: PickMode,
    excluded: &[bool],
) -> bool {
    let span = &reference[start..start + n];
    if excluded
        .get(start..start + n)
        .is_some_and(|m| m.iter().any(|&x| x))
    {
        return false;
    }
    match mode {
        PickMode::Strict => span.iter().all(|t| !hypothesis.contains(t)),
        PickMode::Relaxed => !hypothesis.contains(&span[0]),
    }
}

/// The reference span to add as the next constraint, as `(start, len)`.
///
/// Lengths are tried from `max_n` down to 1 and the leftmost eligible span
/// of the first length that has one is returned. Positions set in
/// `excluded` (spans picked earlier) are never reused. Nothing is picked
/// when the hypothesis already equals the reference.
pub fn pick_phrase<T: PartialEq>(
    hypothesis: &[T],
    reference: &[T],
    mode: PickMode,
    max_n: usize,
    excluded: &[bool],
) -> Option<(usize, usize)> {
    if hypothesis == reference {
        return None;
    }
    for n in (1..=max_n.min(reference.len())).rev() {
        for start in 0..=reference.len() - n {
            if eligible(hypothesis, reference, start, n, mode, excluded) {
                return Some((start, n));
            }
        }
    }
    None
}
