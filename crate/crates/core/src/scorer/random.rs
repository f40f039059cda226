use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{LogProbs, Scorer, ScorerError};
use crate::vocab::{TokenId, Vocabulary};

/// Pseudo-random distributions keyed by `(seed, input, full history)`.
///
/// Every history gets its own distribution, so the model has no Markov
/// structure at all; this makes it a good adversary for search tests.
#[derive(Clone, Debug)]
pub struct RandomScorer {
    vocab: Vocabulary,
    seed: u64,
    spread: f64,
}

impl RandomScorer {
    /// Logits are drawn uniformly from `[0, 4)`.
    pub fn new(vocab: Vocabulary, seed: u64) -> Self {
        Self::with_spread(vocab, seed, 4.0)
    }

    /// `spread` is the width of the logit range; larger means peakier.
    pub fn with_spread(vocab: Vocabulary, seed: u64, spread: f64) -> Self {
        Self {
            vocab,
            seed,
            spread,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    bytes.iter().fold(0xcbf2_9ce4_8422_2325, |h, &b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

impl Scorer for RandomScorer {
    /// Hash of the input and every token consumed so far.
    type State = u64;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn init(&self, input: &str) -> Result<u64, ScorerError> {
        Ok(splitmix(fnv1a(input.as_bytes())))
    }

    fn next_logprobs(&self, state: &u64) -> LogProbs {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix(state ^ self.seed));
        let logits: Vec<f64> = (0..self.vocab.len())
            .map(|_| rng.random::<f64>() * self.spread)
            .collect();
        LogProbs::from_logits(&logits)
    }

    fn advance(&self, state: &u64, token: TokenId) -> u64 {
        splitmix(state.rotate_left(17) ^ (token.0 as u64 + 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vocab() -> Vocabulary {
        Vocabulary::from_symbols(["a", "b", "c", "d"]).unwrap()
    }

    #[test]
    fn deterministic_and_normalized() {
        let a = RandomScorer::new(vocab(), 7);
        let b = RandomScorer::new(vocab(), 7);
        let sa = a.advance(&a.init("x").unwrap(), TokenId(2));
        let sb = b.advance(&b.init("x").unwrap(), TokenId(2));
        assert_eq!(a.next_logprobs(&sa), b.next_logprobs(&sb));
        assert!((a.next_logprobs(&sa).total_mass() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn history_and_seed_matter() {
        let s = RandomScorer::new(vocab(), 7);
        let root = s.init("x").unwrap();
        let ab = s.advance(&s.advance(&root, TokenId(1)), TokenId(2));
        let ba = s.advance(&s.advance(&root, TokenId(2)), TokenId(1));
        assert_ne!(s.next_logprobs(&ab), s.next_logprobs(&ba));
        let other = RandomScorer::new(vocab(), 8);
        assert_ne!(s.next_logprobs(&root), other.next_logprobs(&root));
    }

    #[test]
    fn topk_matches_full_sort() {
        let s = RandomScorer::new(vocab(), 3);
        let mut st = s.init("q").unwrap();
        for tok in [1, 3, 2, 2] {
            let lp = s.next_logprobs(&st);
            let mut full: Vec<(TokenId, f64)> = s.vocab().ids().map(|id| (id, lp[id])).collect();
            full.sort_by(|x, y| y.1.partial_cmp(&x.1).unwrap().then(x.0.cmp(&y.0)));
            for k in 1..=5 {
                assert_eq!(s.generate_topk(&st, k, &[]), full[..k.min(5)].to_vec());
            }
            st = s.advance(&st, TokenId(tok));
        }
    }
}
