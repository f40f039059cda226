use super::{LogProbs, Scorer, ScorerError};
use crate::vocab::{TokenId, Vocabulary};

/// Every token, EOS included, gets probability `1 / |v|`.
#[derive(Clone, Debug)]
pub struct UniformScorer {
    vocab: Vocabulary,
}

impl UniformScorer {
    pub fn new(vocab: Vocabulary) -> Self {
        Self { vocab }
    }
}

impl Scorer for UniformScorer {
    type State = ();

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn init(&self, _input: &str) -> Result<(), ScorerError> {
        Ok(())
    }

    fn next_logprobs(&self, _state: &()) -> LogProbs {
        LogProbs::uniform(self.vocab.len())
    }

    fn advance(&self, _state: &(), _token: TokenId) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_each() {
        let s = UniformScorer::new(Vocabulary::from_symbols(["a", "b", "c"]).unwrap());
        let lp = s.next_logprobs(&s.init("whatever").unwrap());
        assert_eq!(lp.len(), 4);
        assert!(lp.as_slice().iter().all(|&l| l == 0.25f64.ln()));
        let top = s.generate_topk(&(), 2, &[]);
        assert_eq!(
            top,
            vec![(TokenId(0), 0.25f64.ln()), (TokenId(1), 0.25f64.ln())]
        );
    }
}
