//! Lexically constrained decoding with grid beam search.
//!
//! The decoder ([`engine::gbs_decode`]) searches for the most probable output
//! of a [`scorer::Scorer`] that contains every phrase of a
//! [`constraint::ConstraintSet`]. Around it sit the tools needed to run
//! constrained-decoding experiments: BPE segmentation ([`subword`]), NPMI
//! terminology extraction ([`terminology`]) and BLEU plus a simulated
//! post-editing loop ([`evalsim`]).

pub mod constraint;
pub mod coverage;
pub mod engine;
pub mod evalsim;
pub mod grid;
pub mod hypothesis;
pub mod scorer;
pub mod subword;
pub mod terminology;
pub mod vocab;

pub use constraint::{Constraint, ConstraintFilter, ConstraintSet};
pub use coverage::{CoverageAction, CoverageState, Placement};
pub use engine::{
    beam_search, brute_force_decode, gbs_decode, DecodeError, DecodeParams, DecodeResult,
    DecodeStats, MaxLen,
};
pub use hypothesis::{Beam, Hypothesis, Origin};
pub use scorer::{
    AnyScorer, LogProbs, NgramModel, RandomScorer, Scorer, TableModel, UniformScorer,
};
pub use vocab::{TokenId, Vocabulary};
