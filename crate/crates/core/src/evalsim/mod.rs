//! Evaluation: BLEU, the simulated Pick-Revise loop, insertion baselines and
//! generated toy data.

pub mod baseline;
pub mod bleu;
pub mod corpus;
pub mod pick;
pub mod simulate;
pub mod toydata;

pub use baseline::{insert_baseline, Insertion};
pub use bleu::{bleu, bleu_text, BleuError, BleuReport};
pub use corpus::{read_corpus, write_corpus, CorpusError, Segment};
pub use pick::{pick_phrase, PickMode};
pub use simulate::{
    format_cycle_table, format_term_table, simulate_pickrevise, terminology_experiment,
    CycleReport, SegmentState, SimConfig, SimError, TermReport,
};
