//! Fixtures shared by the benchmarks in `benches/`.

use gbs_core::{Constraint, ConstraintSet, TokenId, Vocabulary};

/// `size` symbols including EOS.
pub fn vocab(size: usize) -> Vocabulary {
    Vocabulary::from_symbols((1..size).map(|i| format!("w{i}"))).unwrap()
}

/// `n` one-token constraints over ids `1..=n`.
pub fn single_tokens(n: usize) -> ConstraintSet {
    ConstraintSet::new(
        (0..n)
            .map(|i| Constraint::new(vec![TokenId(1 + i as u32)]))
            .collect(),
    )
    .unwrap()
}
