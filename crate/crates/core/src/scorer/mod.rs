//! The model interface used by the decoders.
//!
//! A scorer turns a history into a distribution over the next token. The
//! decoders never look inside a state; they only ask for the distribution
//! and for the state after appending a token. Generate takes the k-argmax of
//! that distribution, while start and continue index into it directly.

mod ngram;
mod random;
mod table;
mod uniform;

use std::ops::Index;

use thiserror::Error;

pub use ngram::{NgramError, NgramModel, BOS_SURFACE};
pub use random::RandomScorer;
pub use table::{TableError, TableFile, TableInput, TableModel, TableRow, TableState};
pub use uniform::UniformScorer;

use crate::vocab::{TokenId, Vocabulary};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("input `{0}` is unknown to the table model")]
    UnknownInput(String),
}

/// Natural-log probabilities indexed by token id.
#[derive(Clone, Debug, PartialEq)]
pub struct LogProbs(Vec<f64>);

impl LogProbs {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    /// Log-softmax of raw logits.
    pub fn from_logits(logits: &[f64]) -> Self {
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + logits.iter().map(|&l| (l - max).exp()).sum::<f64>().ln();
        Self(logits.iter().map(|&l| l - log_z).collect())
    }

    /// Normalizes non-negative weights into log-probabilities.
    pub fn from_weights(weights: &[f64]) -> Self {
        let total: f64 = weights.iter().sum();
        Self(weights.iter().map(|&w| (w / total).ln()).collect())
    }

    pub fn uniform(size: usize) -> Self {
        Self(vec![-(size as f64).ln(); size])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, token: TokenId) -> f64 {
        self.0[token.index()]
    }

    /// Sum of probabilities; 1 for a proper distribution.
    pub fn total_mass(&self) -> f64 {
        self.0.iter().map(|l| l.exp()).sum()
    }

    /// The `k` most probable tokens outside `mask`, best first. Ties go to
    /// the lower id. Zero-probability tokens are never returned.
    pub fn top_k(&self, k: usize, mask: &[TokenId]) -> Vec<(TokenId, f64)> {
        let mut items: Vec<(TokenId, f64)> = self
            .0
            .iter()
            .enumerate()
            .map(|(i, &lp)| (TokenId(i as u32), lp))
            .filter(|(id, lp)| *lp > f64::NEG_INFINITY && !mask.contains(id))
            .collect();
        let cmp = |a: &(TokenId, f64), b: &(TokenId, f64)| {
            b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
        };
        if k < items.len() {
            items.select_nth_unstable_by(k, cmp);
            items.truncate(k);
        }
        items.sort_by(cmp);
        items
    }
}

impl Index<TokenId> for LogProbs {
    type Output = f64;

    fn index(&self, token: TokenId) -> &f64 {
        &self.0[token.index()]
    }
}

/// Where a hypothesis stands relative to the constraints. Passed to
/// [`Scorer::next_logprobs_in_context`] for constraint-aware models.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConstraintContext {
    /// A constraint is mid-placement.
    pub in_constraint: bool,
    pub covered: usize,
    pub total: usize,
}

/// A next-token model.
///
/// Implementations must be deterministic: the same state always yields the
/// same distribution, and advancing a state never mutates it.
pub trait Scorer: Send + Sync {
    type State: Clone + Send + Sync;

    fn vocab(&self) -> &Vocabulary;

    /// State for the empty history, conditioned on `input`.
    fn init(&self, input: &str) -> Result<Self::State, ScorerError>;

    /// Distribution over the whole vocabulary, EOS included.
    fn next_logprobs(&self, state: &Self::State) -> LogProbs;

    /// State after appending `token`.
    fn advance(&self, state: &Self::State, token: TokenId) -> Self::State;

    /// Same as [`next_logprobs`](Self::next_logprobs) unless the model wants
    /// to look at constraint progress. None of the built-in scorers do.
    fn next_logprobs_in_context(&self, state: &Self::State, _ctx: &ConstraintContext) -> LogProbs {
        self.next_logprobs(state)
    }

    fn generate_topk(
        &self,
        state: &Self::State,
        k: usize,
        mask: &[TokenId],
    ) -> Vec<(TokenId, f64)> {
        self.next_logprobs(state).top_k(k, mask)
    }

    /// Per-step log-probabilities of `tokens` replayed from `init(input)`.
    fn replay(&self, input: &str, tokens: &[TokenId]) -> Result<Vec<f64>, ScorerError> {
        let mut state = self.init(input)?;
        let mut out = Vec::with_capacity(tokens.len());
        for &tok in tokens {
            out.push(self.next_logprobs(&state)[tok]);
            state = self.advance(&state, tok);
        }
        Ok(out)
    }
}

/// One of the built-in scorers, chosen at run time.
#[derive(Clone, Debug)]
pub enum AnyScorer {
    Uniform(UniformScorer),
    Random(RandomScorer),
    Ngram(NgramModel),
    Table(TableModel),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum AnyState {
    Uniform,
    Random(<RandomScorer as Scorer>::State),
    Ngram(<NgramModel as Scorer>::State),
    Table(<TableModel as Scorer>::State),
}

impl Scorer for AnyScorer {
    type State = AnyState;

    fn vocab(&self) -> &Vocabulary {
        match self {
            Self::Uniform(s) => s.vocab(),
            Self::Random(s) => s.vocab(),
            Self::Ngram(s) => s.vocab(),
            Self::Table(s) => s.vocab(),
        }
    }

    fn init(&self, input: &str) -> Result<AnyState, ScorerError> {
        Ok(match self {
            Self::Uniform(s) => {
                s.init(input)?;
                AnyState::Uniform
            }
            Self::Random(s) => AnyState::Random(s.init(input)?),
            Self::Ngram(s) => AnyState::Ngram(s.init(input)?),
            Self::Table(s) => AnyState::Table(s.init(input)?),
        })
    }

    fn next_logprobs(&self, state: &AnyState) -> LogProbs {
        match (self, state) {
            (Self::Uniform(s), AnyState::Uniform) => s.next_logprobs(&()),
            (Self::Random(s), AnyState::Random(st)) => s.next_logprobs(st),
            (Self::Ngram(s), AnyState::Ngram(st)) => s.next_logprobs(st),
            (Self::Table(s), AnyState::Table(st)) => s.next_logprobs(st),
            _ => panic!("scorer state belongs to a different scorer"),
        }
    }

    fn advance(&self, state: &AnyState, token: TokenId) -> AnyState {
        match (self, state) {
            (Self::Uniform(_), AnyState::Uniform) => AnyState::Uniform,
            (Self::Random(s), AnyState::Random(st)) => AnyState::Random(s.advance(st, token)),
            (Self::Ngram(s), AnyState::Ngram(st)) => AnyState::Ngram(s.advance(st, token)),
            (Self::Table(s), AnyState::Table(st)) => AnyState::Table(s.advance(st, token)),
            _ => panic!("scorer state belongs to a different scorer"),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_tie_break_and_mask() {
        let lp = LogProbs::uniform(4);
        let top = lp.top_k(2, &[]);
        assert_eq!(
            top.iter().map(|x| x.0).collect::<Vec<_>>(),
            vec![TokenId(0), TokenId(1)]
        );
        for (_, l) in &top {
            assert!((l - 0.25f64.ln()).abs() < 1e-15);
        }
        let top = lp.top_k(10, &[TokenId(0)]);
        assert_eq!(top.len(), 3);
        assert!(top.iter().all(|x| x.0 != TokenId(0)));
    }

    #[test]
    fn top_k_skips_zero_probability() {
        let lp = LogProbs::new(vec![0.5f64.ln(), f64::NEG_INFINITY, 0.5f64.ln()]);
        let top = lp.top_k(3, &[]);
        assert_eq!(top.len(), 2);
    }

    #[test]
    fn from_logits_normalizes() {
        let lp = LogProbs::from_logits(&[1.0, 2.0, -3.0, 700.0]);
        assert!((lp.total_mass() - 1.0).abs() < 1e-12);
    }

    proptest::proptest! {
        #[test]
        fn top_k_equals_full_sort(logits in proptest::collection::vec(-5.0f64..5.0, 1..30), k in 1usize..40) {
            let lp = LogProbs::from_logits(&logits);
            let mut all: Vec<(TokenId, f64)> = lp.as_slice().iter().enumerate().map(|(i, &l)| (TokenId(i as u32), l)).collect();
            all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            all.truncate(k);
            proptest::prop_assert_eq!(lp.top_k(k, &[]), all);
        }
    }
}
