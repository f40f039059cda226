//! Corpus-level BLEU-4.

use std::collections::HashMap;
use std::hash::Hash;

use serde::Serialize;
use thiserror::Error;

pub const MAX_ORDER: usize = 4;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BleuError {
    #[error("{hypotheses} hypotheses for {references} references")]
    LengthMismatch {
        hypotheses: usize,
        references: usize,
    },
    #[error("no references")]
    Empty,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BleuReport {
    /// Clipped n-gram matches, n = 1..=4.
    pub matches: [u64; MAX_ORDER],
    /// Hypothesis n-gram counts, n = 1..=4.
    pub totals: [u64; MAX_ORDER],
    /// Modified precisions after smoothing.
    pub precisions: [f64; MAX_ORDER],
    pub brevity_penalty: f64,
    pub hyp_len: usize,
    pub ref_len: usize,
    /// In `[0, 100]`.
    pub bleu: f64,
}

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], u64> {
    let mut m = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *m.entry(w).or_default() += 1;
        }
    }
    m
}

/// BLEU with one reference per hypothesis.
///
/// A zero match count for n >= 2 is smoothed to `1 / (total + 1)`; a zero
/// unigram count gives a score of 0.
pub fn bleu<T, H, R>(hypotheses: &[H], references: &[R]) -> Result<BleuReport, BleuError>
where
    T: Eq + Hash,
    H: AsRef<[T]>,
    R: AsRef<[T]>,
{
    if hypotheses.len() != references.len() {
        return Err(BleuError::LengthMismatch {
            hypotheses: hypotheses.len(),
            references: references.len(),
        });
    }
    if references.is_empty() {
        return Err(BleuError::Empty);
    }
    let mut matches = [0u64; MAX_ORDER];
    let mut totals = [0u64; MAX_ORDER];
    let (mut hyp_len, mut ref_len) = (0, 0);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        for n in 1..=MAX_ORDER {
            let hc = ngram_counts(h, n);
            let rc = ngram_counts(r, n);
            for (g, c) in hc {
                totals[n - 1] += c;
                matches[n - 1] += c.min(rc.get(g).copied().unwrap_or(0));
            }
        }
    }
    let mut precisions = [0.0; MAX_ORDER];
    for n in 0..MAX_ORDER {
        precisions[n] = if n > 0 && matches[n] == 0 {
            1.0 / (totals[n] + 1) as f64
        } else if totals[n] == 0 {
            0.0
        } else {
            matches[n] as f64 / totals[n] as f64
        };
    }
    let brevity_penalty = if hyp_len == 0 {
        0.0
    } else if hyp_len < ref_len {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    } else {
        1.0
    };
    let bleu = if precisions[0] == 0.0 || brevity_penalty == 0.0 {
        0.0
    } else {
        let log_mean = precisions.iter().map(|p| p.ln()).sum::<f64>() / MAX_ORDER as f64;
        100.0 * brevity_penalty * log_mean.exp()
    };
    Ok(BleuReport {
        matches,
        totals,
        precisions,
        brevity_penalty,
        hyp_len,
        ref_len,
        bleu,
    })
}

/// BLEU over whitespace-tokenized lines.
pub fn bleu_text<S: AsRef<str>>(
    hypotheses: &[S],
    references: &[S],
) -> Result<BleuReport, BleuError> {
    let split = |xs: &[S]| -> Vec<Vec<String>> {
        xs.iter()
            .map(|s| s.as_ref().split_whitespace().map(str::to_string).collect())
            .collect()
    };
    bleu(&split(hypotheses), &split(references))
}
