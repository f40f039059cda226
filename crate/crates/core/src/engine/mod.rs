//! Grid beam search and the plain beam search it generalizes.
//!
//! Beams are arranged in a grid indexed by timestep `t` (tokens emitted)
//! and `c` (constraint tokens covered). Cell `(t, c)` is filled from three
//! sources: open hypotheses at `(t-1, c)` generating from the model's
//! k-argmax, open hypotheses at `(t-1, c-1)` starting an unused constraint,
//! and closed hypotheses at `(t-1, c-1)` continuing their constraint. A
//! hypothesis in the top row (`c = numC`) that emits EOS is finished.
//!
//! All cells of one timestep depend only on the previous timestep, so they
//! can be filled in parallel; results are bit-identical either way.

mod brute;

use std::cmp::Ordering;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use brute::{brute_force_decode, find_placements, SEARCH_SPACE_LIMIT};

use crate::constraint::ConstraintSet;
use crate::coverage::{CoverageAction, CoverageState, Placement};
use crate::grid::{row_bounds, Grid};
use crate::hypothesis::{Beam, Hypothesis, Origin};
use crate::scorer::{ConstraintContext, LogProbs, Scorer, ScorerError};
use crate::vocab::TokenId;

/// Default beam width.
pub const DEFAULT_BEAM: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxLen {
    /// Fixed maximum output length, EOS included.
    Fixed(usize),
    /// Multiple of the input length in whitespace tokens, rounded up.
    Factor(f64),
}

impl MaxLen {
    pub fn resolve(self, input: &str) -> usize {
        match self {
            Self::Fixed(n) => n,
            Self::Factor(f) => {
                let len = input.split_whitespace().count() as f64;
                ((f * len).ceil() as usize).max(1)
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeParams {
    pub k: usize,
    pub max_len: MaxLen,
    /// Rank finished hypotheses by score divided by length.
    pub length_normalize: bool,
    /// Number of distinct finished outputs to return.
    pub n_best: usize,
    /// Fill the cells of each timestep concurrently.
    pub parallel: bool,
    /// Worker count for parallel filling; `None` uses the global pool.
    pub workers: Option<usize>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        Self {
            k: DEFAULT_BEAM,
            max_len: MaxLen::Factor(2.0),
            length_normalize: false,
            n_best: 1,
            parallel: false,
            workers: None,
        }
    }
}

impl DecodeParams {
    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn with_max_len(mut self, max_len: usize) -> Self {
        self.max_len = MaxLen::Fixed(max_len);
        self
    }

    pub fn with_parallel(mut self, workers: Option<usize>) -> Self {
        self.parallel = true;
        self.workers = workers;
        self
    }
}

/// Search counters.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeStats {
    /// Full next-token distributions computed by the scorer.
    pub scorer_evaluations: u64,
    /// Grid cells visited.
    pub cells_filled: u64,
    /// Candidates built from the three sources before k-best selection.
    pub candidates_created: u64,
    pub finished_found: u64,
}

/// A complete output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Finished {
    /// Emitted tokens, ending with EOS.
    pub tokens: Vec<TokenId>,
    pub origins: Vec<Origin>,
    /// Summed log-probability.
    pub score: f64,
    /// Score used for ranking (equal to `score` unless length-normalized).
    pub rank_score: f64,
    /// Span of each constraint in `tokens`, by constraint index.
    pub placements: Vec<Placement>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub best: Finished,
    /// Distinct outputs, best first; `n_best[0]` equals `best`.
    pub n_best: Vec<Finished>,
    pub stats: DecodeStats,
    pub max_len: usize,
}

impl DecodeResult {
    pub fn tokens(&self) -> &[TokenId] {
        &self.best.tokens
    }

    pub fn score(&self) -> f64 {
        self.best.score
    }
}

/// Best unfinished hypothesis, reported when nothing finished.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Partial {
    pub tokens: Vec<TokenId>,
    pub score: f64,
    pub covered: usize,
}

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("constraints need {num_c} tokens plus EOS but the maximum length is {max_len}")]
    InfeasibleConstraints { num_c: usize, max_len: usize },
    #[error("no hypothesis covering all constraints emitted EOS within {max_len} tokens")]
    NoFinishedHypothesis {
        max_len: usize,
        best_partial: Option<Partial>,
        stats: DecodeStats,
    },
    #[error("beam width must be at least 1")]
    ZeroBeam,
    #[error("constraint token id {0} is outside the vocabulary")]
    TokenOutOfRange(TokenId),
    #[error("search space of {0} sequences exceeds the brute-force limit")]
    SearchSpaceTooLarge(f64),
    #[error("no sequence within the maximum length satisfies the constraints")]
    NoFeasibleSequence,
    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

type Hyp<S> = Arc<Hypothesis<<S as Scorer>::State>>;

/// Everything a finished search leaves behind.
pub struct SearchOutcome<St> {
    pub grid: Grid<St>,
    /// Finished hypotheses in creation order.
    pub finished: Vec<Arc<Hypothesis<St>>>,
    pub stats: DecodeStats,
    pub max_len: usize,
}

struct Candidate<St> {
    parent: Arc<Hypothesis<St>>,
    parent_rank: usize,
    token: TokenId,
    logprob: f64,
    score: f64,
    origin: Origin,
    constraint: usize,
    coverage: CoverageState,
}

fn candidate_order<St>(a: &Candidate<St>, b: &Candidate<St>) -> Ordering {
    b.score
        .total_cmp(&a.score)
        .then(a.origin.cmp(&b.origin))
        .then(a.token.cmp(&b.token))
        .then(a.parent_rank.cmp(&b.parent_rank))
        .then(a.constraint.cmp(&b.constraint))
}

/// Result of filling one cell.
pub struct CellExpansion<St> {
    pub beam: Beam<St>,
    /// Top-row hypotheses that emitted EOS, best first.
    pub finished: Vec<Arc<Hypothesis<St>>>,
    pub candidates: usize,
}

/// Predecessor beam and the distributions of its hypotheses.
type Source<'a, St> = (&'a Beam<St>, &'a [Arc<LogProbs>]);

fn fill_cell<S: Scorer>(
    scorer: &S,
    set: &ConstraintSet,
    t: usize,
    c: usize,
    k: usize,
    left: Option<Source<'_, S::State>>,
    below: Option<Source<'_, S::State>>,
) -> CellExpansion<S::State> {
    let num_c = set.num_tokens();
    let eos = scorer.vocab().eos();
    let position = t - 1;
    let mut cands: Vec<Candidate<S::State>> = Vec::new();

    if let Some((beam, dists)) = left {
        // EOS below the top row could never finish.
        let mask: &[TokenId] = if c < num_c { &[eos] } else { &[] };
        for (rank, (hyp, dist)) in beam.hyps().iter().zip(dists).enumerate() {
            if !hyp.is_open() {
                continue;
            }
            for (token, logprob) in dist.top_k(k, mask) {
                cands.push(Candidate {
                    parent: Arc::clone(hyp),
                    parent_rank: rank,
                    token,
                    logprob,
                    score: hyp.score() + logprob,
                    origin: Origin::Generate,
                    constraint: usize::MAX,
                    coverage: hyp.coverage().after_generate(),
                });
            }
        }
    }

    if let Some((beam, dists)) = below {
        for (rank, (hyp, dist)) in beam.hyps().iter().zip(dists).enumerate() {
            let cov = hyp.coverage();
            if hyp.is_open() {
                for i in cov.startable(set) {
                    let token = set.constraints()[i].tokens()[0];
                    let logprob = dist[token];
                    if logprob == f64::NEG_INFINITY {
                        continue;
                    }
                    let coverage = cov
                        .advance(CoverageAction::Start(i), set, position)
                        .expect("startable constraint");
                    cands.push(Candidate {
                        parent: Arc::clone(hyp),
                        parent_rank: rank,
                        token,
                        logprob,
                        score: hyp.score() + logprob,
                        origin: Origin::Start,
                        constraint: i,
                        coverage,
                    });
                }
            } else {
                let token = cov
                    .next_token(set)
                    .expect("closed hypothesis has a next token");
                let logprob = dist[token];
                if logprob == f64::NEG_INFINITY {
                    continue;
                }
                let coverage = cov
                    .advance(CoverageAction::Continue, set, position)
                    .expect("closed hypothesis can continue");
                cands.push(Candidate {
                    parent: Arc::clone(hyp),
                    parent_rank: rank,
                    token,
                    logprob,
                    score: hyp.score() + logprob,
                    origin: Origin::Continue,
                    constraint: cov.active().unwrap_or(usize::MAX),
                    coverage,
                });
            }
        }
    }

    let candidates = cands.len();
    cands.sort_by(candidate_order);
    let mut kept = Vec::with_capacity(k.min(cands.len()));
    let mut finished = Vec::new();
    for cand in cands {
        let is_eos = cand.token == eos;
        if !is_eos && kept.len() == k {
            continue;
        }
        let state = scorer.advance(cand.parent.state(), cand.token);
        let hyp = Arc::new(Hypothesis::extend(
            &cand.parent,
            cand.token,
            cand.logprob,
            state,
            cand.coverage,
            cand.origin,
        ));
        if is_eos {
            finished.push(hyp);
        } else {
            kept.push(hyp);
        }
    }
    CellExpansion {
        beam: Beam::from_ranked(kept, k),
        finished,
        candidates,
    }
}

fn distributions<S: Scorer>(
    scorer: &S,
    set: &ConstraintSet,
    beam: &Beam<S::State>,
) -> Vec<Arc<LogProbs>> {
    beam.hyps()
        .iter()
        .map(|h| {
            let ctx = ConstraintContext {
                in_constraint: !h.is_open(),
                covered: h.c(),
                total: set.num_tokens(),
            };
            Arc::new(scorer.next_logprobs_in_context(h.state(), &ctx))
        })
        .collect()
}

/// Fills cell `(t, c)` from the predecessor cells of `grid`, computing the
/// predecessor distributions on the spot. The cell must be in bounds and
/// `t >= 1`.
pub fn expand_cell<S: Scorer>(
    grid: &Grid<S::State>,
    t: usize,
    c: usize,
    scorer: &S,
    set: &ConstraintSet,
    k: usize,
) -> CellExpansion<S::State> {
    assert!(
        t >= 1 && grid.in_bounds(t, c),
        "cell ({t}, {c}) is outside the grid band"
    );
    let left_beam = grid.cell(t - 1, c);
    let left_dists = distributions(scorer, set, left_beam);
    let below = (c > 0).then(|| grid.cell(t - 1, c - 1));
    let below_dists = below.map(|b| distributions(scorer, set, b));
    fill_cell(
        scorer,
        set,
        t,
        c,
        k,
        Some((left_beam, &left_dists)),
        below.zip(below_dists.as_deref()),
    )
}

fn check_tokens<S: Scorer>(scorer: &S, set: &ConstraintSet) -> Result<(), DecodeError> {
    let size = scorer.vocab().len();
    for c in set.constraints() {
        for &tok in c.tokens() {
            if tok.index() >= size {
                return Err(DecodeError::TokenOutOfRange(tok));
            }
        }
    }
    Ok(())
}

/// Runs the grid search and returns the grid with every finished hypothesis.
pub fn gbs_search<S: Scorer>(
    scorer: &S,
    input: &str,
    set: &ConstraintSet,
    params: &DecodeParams,
) -> Result<SearchOutcome<S::State>, DecodeError> {
    if params.k == 0 {
        return Err(DecodeError::ZeroBeam);
    }
    check_tokens(scorer, set)?;
    let max_len = params.max_len.resolve(input);
    let num_c = set.num_tokens();
    if num_c + 1 > max_len {
        return Err(DecodeError::InfeasibleConstraints { num_c, max_len });
    }
    let start = Hypothesis::start(scorer.init(input)?, CoverageState::new(set.len()));
    match (params.parallel, params.workers) {
        (true, Some(workers)) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(workers.max(1))
                .build()
                .expect("thread pool");
            Ok(pool.install(|| run_grid(scorer, set, params.k, max_len, start, true)))
        }
        (parallel, _) => Ok(run_grid(scorer, set, params.k, max_len, start, parallel)),
    }
}

fn run_grid<S: Scorer>(
    scorer: &S,
    set: &ConstraintSet,
    k: usize,
    max_len: usize,
    start: Hypothesis<S::State>,
    parallel: bool,
) -> SearchOutcome<S::State> {
    let num_c = set.num_tokens();
    let mut grid = Grid::new(max_len, num_c, k);
    grid.set_cell(0, 0, Beam::from_ranked(vec![Arc::new(start)], k));
    let mut stats = DecodeStats::default();
    let mut finished: Vec<Hyp<S>> = Vec::new();

    for t in 1..=max_len {
        let rows: Vec<usize> = row_bounds(t, num_c, max_len).collect();
        // Predecessor cells feeding this timestep: c (generate) and c - 1.
        let prev_bounds = row_bounds(t - 1, num_c, max_len);
        let needed: Vec<usize> = (0..=num_c)
            .filter(|&pc| {
                prev_bounds.contains(&pc) && (rows.contains(&pc) || rows.contains(&(pc + 1)))
            })
            .collect();
        let prev_row = grid.row(t - 1);
        let compute = |&pc: &usize| (pc, distributions(scorer, set, &prev_row[pc]));
        let dist_list: Vec<(usize, Vec<Arc<LogProbs>>)> = if parallel {
            needed.par_iter().map(compute).collect()
        } else {
            needed.iter().map(compute).collect()
        };
        let mut dists: Vec<Option<Vec<Arc<LogProbs>>>> = vec![None; num_c + 1];
        for (pc, d) in dist_list {
            stats.scorer_evaluations += d.len() as u64;
            dists[pc] = Some(d);
        }

        let source = |pc: usize| dists[pc].as_deref().map(|d| (&prev_row[pc], d));
        let fill = |&c: &usize| {
            let below = if c > 0 { source(c - 1) } else { None };
            (c, fill_cell(scorer, set, t, c, k, source(c), below))
        };
        let expansions: Vec<(usize, CellExpansion<S::State>)> = if parallel {
            rows.par_iter().map(fill).collect()
        } else {
            rows.iter().map(fill).collect()
        };
        for (c, exp) in expansions {
            stats.cells_filled += 1;
            stats.candidates_created += exp.candidates as u64;
            stats.finished_found += exp.finished.len() as u64;
            finished.extend(exp.finished);
            grid.set_cell(t, c, exp.beam);
        }
    }

    SearchOutcome {
        grid,
        finished,
        stats,
        max_len,
    }
}

fn rank_score(score: f64, len: usize, normalize: bool) -> f64 {
    if normalize {
        score / len.max(1) as f64
    } else {
        score
    }
}

/// Orders finished outputs: rank score descending, then shorter, then
/// lexicographically smaller token sequence. Stable for exact duplicates.
pub(crate) fn finished_order(a: &Finished, b: &Finished) -> Ordering {
    b.rank_score
        .total_cmp(&a.rank_score)
        .then(a.tokens.len().cmp(&b.tokens.len()))
        .then(a.tokens.cmp(&b.tokens))
}

fn to_finished<St>(hyp: &Hypothesis<St>, normalize: bool) -> Finished {
    let tokens = hyp.backtrace();
    Finished {
        rank_score: rank_score(hyp.score(), tokens.len(), normalize),
        origins: hyp.origins(),
        score: hyp.score(),
        placements: hyp
            .coverage()
            .placements()
            .iter()
            .map(|p| p.expect("finished hypotheses place every constraint"))
            .collect(),
        tokens,
    }
}

fn best_partial<St>(grid: &Grid<St>) -> Option<Partial> {
    grid.iter()
        .flat_map(|(_, _, beam)| beam.hyps().iter())
        .filter(|h| h.t() > 0)
        .max_by(|a, b| {
            a.c()
                .cmp(&b.c())
                .then(a.t().cmp(&b.t()))
                .then(a.score().total_cmp(&b.score()))
        })
        .map(|h| Partial {
            tokens: h.backtrace(),
            score: h.score(),
            covered: h.c(),
        })
}

/// Constrained decoding: the best EOS-terminated output containing every
/// constraint as a contiguous span, subject to the filters.
pub fn gbs_decode<S: Scorer>(
    scorer: &S,
    input: &str,
    set: &ConstraintSet,
    params: &DecodeParams,
) -> Result<DecodeResult, DecodeError> {
    let outcome = gbs_search(scorer, input, set, params)?;
    if outcome.finished.is_empty() {
        return Err(DecodeError::NoFinishedHypothesis {
            max_len: outcome.max_len,
            best_partial: best_partial(&outcome.grid),
            stats: outcome.stats,
        });
    }
    let mut all: Vec<Finished> = outcome
        .finished
        .iter()
        .map(|h| to_finished(h, params.length_normalize))
        .collect();
    all.sort_by(finished_order);
    let mut n_best: Vec<Finished> = Vec::new();
    for f in all {
        if n_best.len() >= params.n_best.max(1) {
            break;
        }
        if n_best.iter().all(|g| g.tokens != f.tokens) {
            n_best.push(f);
        }
    }
    Ok(DecodeResult {
        best: n_best[0].clone(),
        n_best,
        stats: outcome.stats,
        max_len: outcome.max_len,
    })
}

/// Unconstrained beam search: grid search with a single row.
pub fn beam_search<S: Scorer>(
    scorer: &S,
    input: &str,
    params: &DecodeParams,
) -> Result<DecodeResult, DecodeError> {
    gbs_decode(scorer, input, &ConstraintSet::empty(), params)
}

/// The counters of an instrumented decode.
pub fn decode_stats(result: &DecodeResult) -> DecodeStats {
    result.stats
}
