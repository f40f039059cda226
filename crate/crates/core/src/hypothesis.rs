//! Backtraceable search nodes and k-best beams.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::coverage::CoverageState;
use crate::vocab::TokenId;

/// How a hypothesis was created.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Origin {
    /// The empty start hypothesis.
    Init,
    Generate,
    Start,
    Continue,
}

impl Origin {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Init => "init",
            Self::Generate => "generate",
            Self::Start => "start",
            Self::Continue => "continue",
        }
    }
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// An immutable partial output. `S` is the scorer state type.
#[derive(Debug)]
pub struct Hypothesis<S> {
    parent: Option<Arc<Hypothesis<S>>>,
    last_token: Option<TokenId>,
    score: f64,
    state: S,
    coverage: CoverageState,
    t: usize,
    origin: Origin,
}

impl<S> Hypothesis<S> {
    pub fn start(state: S, coverage: CoverageState) -> Self {
        Self {
            parent: None,
            last_token: None,
            score: 0.0,
            state,
            coverage,
            t: 0,
            origin: Origin::Init,
        }
    }

    /// Extends `parent` by one token. `logprob` is that token's log-probability.
    pub fn extend(
        parent: &Arc<Self>,
        token: TokenId,
        logprob: f64,
        state: S,
        coverage: CoverageState,
        origin: Origin,
    ) -> Self {
        Self {
            parent: Some(Arc::clone(parent)),
            last_token: Some(token),
            score: parent.score + logprob,
            state,
            coverage,
            t: parent.t + 1,
            origin,
        }
    }

    pub fn parent(&self) -> Option<&Arc<Self>> {
        self.parent.as_ref()
    }

    pub fn last_token(&self) -> Option<TokenId> {
        self.last_token
    }

    /// Summed natural-log probability of all emitted tokens.
    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn state(&self) -> &S {
        &self.state
    }

    pub fn coverage(&self) -> &CoverageState {
        &self.coverage
    }

    /// Number of emitted tokens.
    pub fn t(&self) -> usize {
        self.t
    }

    /// Number of covered constraint tokens.
    pub fn c(&self) -> usize {
        self.coverage.covered_tokens()
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn is_open(&self) -> bool {
        self.coverage.is_open()
    }

    /// Emitted tokens, first to last.
    pub fn backtrace(&self) -> Vec<TokenId> {
        self.backtrace_with(|h| h.last_token)
            .into_iter()
            .flatten()
            .collect()
    }

    /// Origins of the emitted tokens, first to last.
    pub fn origins(&self) -> Vec<Origin> {
        self.backtrace_with(|h| h.last_token.map(|_| h.origin))
            .into_iter()
            .flatten()
            .collect()
    }

    fn backtrace_with<T>(&self, f: impl Fn(&Self) -> T) -> Vec<T> {
        let mut out = Vec::with_capacity(self.t);
        let mut node = Some(self);
        while let Some(h) = node {
            if h.parent.is_some() {
                out.push(f(h));
            }
            node = h.parent.as_deref();
        }
        out.reverse();
        out
    }
}

/// Up to `k` hypotheses, best first.
#[derive(Debug)]
pub struct Beam<S> {
    hyps: Vec<Arc<Hypothesis<S>>>,
    k: usize,
}

impl<S> Clone for Beam<S> {
    fn clone(&self) -> Self {
        Self {
            hyps: self.hyps.clone(),
            k: self.k,
        }
    }
}

impl<S> Beam<S> {
    pub fn new(k: usize) -> Self {
        Self {
            hyps: Vec::new(),
            k,
        }
    }

    /// Builds a beam from hypotheses already in rank order; keeps the first `k`.
    pub fn from_ranked(mut hyps: Vec<Arc<Hypothesis<S>>>, k: usize) -> Self {
        hyps.truncate(k);
        debug_assert!(hyps.windows(2).all(|w| w[0].score >= w[1].score));
        Self { hyps, k }
    }

    /// Inserts keeping score order; on equal scores the earlier insertion
    /// ranks first. Returns false when the hypothesis did not make the cut.
    pub fn insert(&mut self, hyp: Arc<Hypothesis<S>>) -> bool {
        let pos = self.hyps.partition_point(|h| h.score >= hyp.score);
        if pos >= self.k {
            return false;
        }
        self.hyps.insert(pos, hyp);
        self.hyps.truncate(self.k);
        true
    }

    pub fn hyps(&self) -> &[Arc<Hypothesis<S>>] {
        &self.hyps
    }

    pub fn len(&self) -> usize {
        self.hyps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hyps.is_empty()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn best(&self) -> Option<&Arc<Hypothesis<S>>> {
        self.hyps.first()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain(tokens: &[u32]) -> Arc<Hypothesis<()>> {
        let mut h = Arc::new(Hypothesis::start((), CoverageState::new(0)));
        for &t in tokens {
            h = Arc::new(Hypothesis::extend(
                &h,
                TokenId(t),
                -1.0,
                (),
                CoverageState::new(0),
                Origin::Generate,
            ));
        }
        h
    }

    #[test]
    fn start_backtraces_empty() {
        let h = chain(&[]);
        assert!(h.backtrace().is_empty());
        assert!(h.origins().is_empty());
        assert_eq!(h.t(), 0);
    }

    #[test]
    fn chain_backtrace() {
        let h = chain(&[3, 4, 0]);
        assert_eq!(h.backtrace(), vec![TokenId(3), TokenId(4), TokenId(0)]);
        assert_eq!(h.t(), 3);
        assert_eq!(h.score(), -3.0);
    }

    #[test]
    fn beam_keeps_k_best_in_order() {
        let root = chain(&[]);
        let mut beam = Beam::new(2);
        for (tok, lp) in [(1, -2.0), (2, -1.0), (3, -3.0), (4, -1.0)] {
            beam.insert(Arc::new(Hypothesis::extend(
                &root,
                TokenId(tok),
                lp,
                (),
                CoverageState::new(0),
                Origin::Generate,
            )));
        }
        let toks: Vec<_> = beam
            .hyps()
            .iter()
            .map(|h| h.last_token().unwrap().0)
            .collect();
        assert_eq!(toks, vec![2, 4]);
    }

    proptest::proptest! {
        #[test]
        fn construction_round_trips(tokens in proptest::collection::vec(0u32..50, 0..30)) {
            let h = chain(&tokens);
            let back: Vec<u32> = h.backtrace().into_iter().map(|t| t.0).collect();
            proptest::prop_assert_eq!(back, tokens);
        }

        #[test]
        fn beam_insertion_preserves_order(scores in proptest::collection::vec(-20.0f64..0.0, 0..40), k in 1usize..8) {
            let root = chain(&[]);
            let mut beam = Beam::new(k);
            for (i, s) in scores.iter().enumerate() {
                beam.insert(Arc::new(Hypothesis::extend(&root, TokenId(i as u32), *s, (), CoverageState::new(0), Origin::Generate)));
                proptest::prop_assert!(beam.len() <= k);
                proptest::prop_assert!(beam.hyps().windows(2).all(|w| w[0].score() >= w[1].score()));
            }
            let mut sorted = scores.clone();
            sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
            sorted.truncate(k);
            let kept: Vec<f64> = beam.hyps().iter().map(|h| h.score()).collect();
            proptest::prop_assert_eq!(kept, sorted);
        }
    }
}
