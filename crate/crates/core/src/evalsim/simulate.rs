//! Simulated post-editing and the terminology comparison.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::baseline::{insert_baseline, Insertion};
use super::bleu::{bleu, BleuError};
use super::corpus::Segment;
use super::pick::{pick_phrase, PickMode};
use crate::constraint::ConstraintSet;
use crate::engine::{gbs_decode, DecodeParams};
use crate::scorer::Scorer;
use crate::terminology::TermTable;
use crate::vocab::EOS_SURFACE;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("at least one cycle is required")]
    NoCycles,
    #[error(transparent)]
    Bleu(#[from] BleuError),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Clone, Debug)]
pub struct SimConfig {
    pub cycles: usize,
    pub mode: PickMode,
    pub max_n: usize,
    pub params: DecodeParams,
    /// Segments decoded concurrently; `None` uses the global pool.
    pub jobs: Option<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            cycles: 4,
            mode: PickMode::Strict,
            max_n: 3,
            params: DecodeParams::default(),
            jobs: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SegmentState {
    pub id: String,
    pub hypothesis: Vec<String>,
    pub constraints: Vec<Vec<String>>,
    /// The decode of this cycle failed and the previous output was kept.
    pub failed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CycleReport {
    pub cycle: usize,
    pub bleu: f64,
    /// Change against the previous cycle; 0 for cycle 0.
    pub delta: f64,
    pub constraints_added: usize,
    pub failures: usize,
    pub segments: Vec<SegmentState>,
}

struct Track {
    state: SegmentState,
    excluded: Vec<bool>,
}

/// Decodes `source` under `constraints`, returning the output without EOS.
pub fn decode_surface<S: Scorer>(
    scorer: &S,
    source: &str,
    constraints: &[Vec<String>],
    params: &DecodeParams,
) -> Option<Vec<String>> {
    let set = ConstraintSet::from_surface(scorer.vocab(), constraints, Vec::new()).ok()?;
    let r = gbs_decode(scorer, source, &set, params).ok()?;
    Some(
        scorer
            .vocab()
            .decode(r.tokens())
            .into_iter()
            .filter(|s| s != EOS_SURFACE)
            .collect(),
    )
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T, SimError> {
    match jobs {
        None => Ok(f()),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map(|p| p.install(f))
            .map_err(|e| SimError::Pool(e.to_string())),
    }
}

fn corpus_bleu(tracks: &[Track], refs: &[Vec<String>]) -> Result<f64, SimError> {
    let hyps: Vec<&[String]> = tracks
        .iter()
        .map(|t| t.state.hypothesis.as_slice())
        .collect();
    Ok(bleu(&hyps, refs)?.bleu)
}

/// Runs cycle 0 (no constraints) and `cycles` editing rounds. Each round
/// adds at most one reference phrase per segment and re-decodes with every
/// constraint collected so far. A phrase whose decode fails is dropped and
/// its reference span is not offered again.
pub fn simulate_pickrevise<S: Scorer>(
    scorer: &S,
    corpus: &[Segment],
    cfg: &SimConfig,
) -> Result<Vec<CycleReport>, SimError> {
    if corpus.is_empty() {
        return Err(SimError::EmptyCorpus);
    }
    if cfg.cycles == 0 {
        return Err(SimError::NoCycles);
    }
    let refs: Vec<Vec<String>> = corpus.iter().map(Segment::reference_tokens).collect();
    let mut tracks: Vec<Track> = in_pool(cfg.jobs, || {
        corpus
            .par_iter()
            .zip(&refs)
            .map(|(seg, r)| {
                let hyp = decode_surface(scorer, &seg.source, &[], &cfg.params);
                Track {
                    state: SegmentState {
                        id: seg.id.clone(),
                        failed: hyp.is_none(),
                        hypothesis: hyp.unwrap_or_default(),
                        constraints: Vec::new(),
                    },
                    excluded: vec![false; r.len()],
                }
            })
            .collect()
    })?;
    let first = corpus_bleu(&tracks, &refs)?;
    let mut reports = vec![CycleReport {
        cycle: 0,
        bleu: first,
        delta: 0.0,
        constraints_added: 0,
        failures: tracks.iter().filter(|t| t.state.failed).count(),
        segments: tracks.iter().map(|t| t.state.clone()).collect(),
    }];
    for cycle in 1..=cfg.cycles {
        let added: Vec<bool> = in_pool(cfg.jobs, || {
            tracks
                .par_iter_mut()
                .zip(corpus)
                .zip(&refs)
                .map(|((t, seg), r)| step(scorer, seg, r, t, cfg))
                .collect()
        })?;
        let score = corpus_bleu(&tracks, &refs)?;
        reports.push(CycleReport {
            cycle,
            bleu: score,
            delta: score - reports[cycle - 1].bleu,
            constraints_added: added.iter().filter(|&&a| a).count(),
            failures: tracks.iter().filter(|t| t.state.failed).count(),
            segments: tracks.iter().map(|t| t.state.clone()).collect(),
        });
    }
    Ok(reports)
}

fn step<S: Scorer>(
    scorer: &S,
    seg: &Segment,
    reference: &[String],
    t: &mut Track,
    cfg: &SimConfig,
) -> bool {
    t.state.failed = false;
    let Some((start, len)) = pick_phrase(
        &t.state.hypothesis,
        reference,
        cfg.mode,
        cfg.max_n,
        &t.excluded,
    ) else {
        return false;
    };
    t.excluded[start..start + len]
        .iter_mut()
        .for_each(|x| *x = true);
    let mut constraints = t.state.constraints.clone();
    constraints.push(reference[start..start + len].to_vec());
    match decode_surface(scorer, &seg.source, &constraints, &cfg.params) {
        Some(h) => {
            t.state.hypothesis = h;
            t.state.constraints = constraints;
            true
        }
        None => {
            t.state.failed = true;
            false
        }
    }
}

/// Text table with one row per cycle.
pub fn format_cycle_table(reports: &[CycleReport]) -> String {
    let mut s = String::from("cycle   BLEU    delta  added  failed\n");
    for r in reports {
        let delta = if r.cycle == 0 {
            "-".to_string()
        } else {
            format!("{:+.2}", r.delta)
        };
        let _ = writeln!(
            s,
            "{:>5} {:>6.2} {:>8} {:>6} {:>7}",
            r.cycle, r.bleu, delta, r.constraints_added, r.failures
        );
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermSystem {
    pub bleu: f64,
    pub hypotheses: Vec<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TermReport {
    pub segments: usize,
    pub segments_with_terms: usize,
    pub constraints: Vec<Vec<Vec<String>>>,
    /// Segments where constrained decoding failed; they keep the baseline
    /// output.
    pub gbs_failures: usize,
    pub baseline: TermSystem,
    pub gbs: TermSystem,
    pub random: TermSystem,
    pub beginning: TermSystem,
}

/// Decodes every segment without constraints, looks up its terms, then
/// scores three ways of adding them: constrained decoding, random insertion
/// and prepending.
pub fn terminology_experiment<S: Scorer>(
    scorer: &S,
    corpus: &[Segment],
    table: &TermTable,
    params: &DecodeParams,
    seed: u64,
    jobs: Option<usize>,
) -> Result<TermReport, SimError> {
    if corpus.is_empty() {
        return Err(SimError::EmptyCorpus);
    }
    let refs: Vec<Vec<String>> = corpus.iter().map(Segment::reference_tokens).collect();
    let constraints: Vec<Vec<Vec<String>>> = corpus
        .iter()
        .map(|s| table.match_constraints(&s.source_tokens()))
        .collect();
    let decoded: Vec<(Vec<String>, Option<Vec<String>>)> = in_pool(jobs, || {
        corpus
            .par_iter()
            .zip(&constraints)
            .map(|(seg, cs)| {
                let base = decode_surface(scorer, &seg.source, &[], params).unwrap_or_default();
                let con = if cs.is_empty() {
                    Some(base.clone())
                } else {
                    decode_surface(scorer, &seg.source, cs, params)
                };
                (base, con)
            })
            .collect()
    })?;
    let baseline: Vec<Vec<String>> = decoded.iter().map(|d| d.0.clone()).collect();
    let gbs_failures = decoded.iter().filter(|d| d.1.is_none()).count();
    let gbs: Vec<Vec<String>> = decoded
        .iter()
        .map(|(b, c)| c.clone().unwrap_or_else(|| b.clone()))
        .collect();
    let random = insert_baseline(&baseline, &constraints, Insertion::Random { seed });
    let beginning = insert_baseline(&baseline, &constraints, Insertion::Beginning);
    let system = |hyps: Vec<Vec<String>>| -> Result<TermSystem, SimError> {
        Ok(TermSystem {
            bleu: bleu(&hyps, &refs)?.bleu,
            hypotheses: hyps,
        })
    };
    Ok(TermReport {
        segments: corpus.len(),
        segments_with_terms: constraints.iter().filter(|c| !c.is_empty()).count(),
        gbs_failures,
        baseline: system(baseline)?,
        gbs: system(gbs)?,
        random: system(random)?,
        beginning: system(beginning)?,
        constraints,
    })
}

/// Text table with one row per system.
pub fn format_term_table(r: &TermReport) -> String {
    let mut s = String::from("system      BLEU\n");
    for (name, sys) in [
        ("baseline", &r.baseline),
        ("random", &r.random),
        ("beginning", &r.beginning),
        ("gbs", &r.gbs),
    ] {
        let _ = writeln!(s, "{name:<9} {:>6.2}", sys.bleu);
    }
    s
}
