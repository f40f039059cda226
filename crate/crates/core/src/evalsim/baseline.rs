//! Placing constraints into an existing output without re-decoding.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Insertion {
    /// Each constraint goes to a uniformly chosen boundary of the original
    /// hypothesis.
    Random { seed: u64 },
    /// Constraints are prepended in order.
    Beginning,
}

/// Inserts each segment's constraints into its hypothesis. Hypothesis tokens
/// keep their order and constraints stay contiguous.
pub fn insert_baseline<T: Clone>(
    hypotheses: &[Vec<T>],
    constraints: &[Vec<Vec<T>>],
    mode: Insertion,
) -> Vec<Vec<T>> {
    let mut rng = match mode {
        Insertion::Random { seed } => Some(ChaCha8Rng::seed_from_u64(seed)),
        Insertion::Beginning => None,
    };
    hypotheses
        .iter()
        .zip(constraints)
        .map(|(hyp, cs)| {
            let at: Vec<usize> = match &mut rng {
                Some(r) => cs.iter().map(|_| r.random_range(0..=hyp.len())).collect(),
                None => vec![0; cs.len()],
            };
            let mut out = Vec::with_capacity(hyp.len() + cs.iter().map(Vec::len).sum::<usize>());
            for boundary in 0..=hyp.len() {
                for (c, _) in cs.iter().zip(&at).filter(|(_, &a)| a == boundary) {
                    out.extend(c.iter().cloned());
                }
                if let Some(t) = hyp.get(boundary) {
                    out.push(t.clone());
                }
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unchanged_without_constraints() {
        let h = vec![vec![1, 2, 3]];
        assert_eq!(
            insert_baseline(&h, &[vec![]], Insertion::Random { seed: 1 }),
            h
        );
        assert_eq!(insert_baseline(&h, &[vec![]], Insertion::Beginning), h);
    }

    #[test]
    fn beginning() {
        let got = insert_baseline(
            &[vec![1, 2]],
            &[vec![vec![8, 9], vec![7]]],
            Insertion::Beginning,
        );
        assert_eq!(got, vec![vec![8, 9, 7, 1, 2]]);
    }

    #[test]
    fn random_is_seeded_and_preserves_order() {
        let h: Vec<Vec<u32>> = (0..20).map(|i| (0..i).collect()).collect();
        let c: Vec<Vec<Vec<u32>>> = (0..20).map(|_| vec![vec![100, 101], vec![200]]).collect();
        let a = insert_baseline(&h, &c, Insertion::Random { seed: 5 });
        assert_eq!(a, insert_baseline(&h, &c, Insertion::Random { seed: 5 }));
        for (out, hyp) in a.iter().zip(&h) {
            let kept: Vec<u32> = out.iter().copied().filter(|&x| x < 100).collect();
            assert_eq!(&kept, hyp);
            assert!(out.windows(2).any(|w| w == [100, 101]));
            assert!(out.contains(&200));
        }
    }
}
