//! Exhaustive search over every output up to the length limit. Only usable
//! on tiny vocabularies; it exists to check the grid search.

use std::cmp::Ordering;

use super::{finished_order, DecodeError, DecodeResult, DecodeStats, Finished};
use crate::constraint::{ConstraintFilter, ConstraintSet};
use crate::coverage::Placement;
use crate::hypothesis::Origin;
use crate::scorer::Scorer;
use crate::vocab::TokenId;

/// Largest `|v|^maxLen` the exhaustive search accepts.
pub const SEARCH_SPACE_LIMIT: f64 = 1e7;

/// Finds non-overlapping spans for every constraint in `tokens` that satisfy
/// the filters, trying constraints in index order and positions left to
/// right. Tokens not covered by a span count as generated.
pub fn find_placements(tokens: &[TokenId], set: &ConstraintSet) -> Option<Vec<Placement>> {
    let mut spans: Vec<(usize, usize)> = Vec::with_capacity(set.len());
    let mut used = vec![false; tokens.len()];
    if assign(tokens, set, 0, &mut spans, &mut used) {
        Some(
            spans
                .into_iter()
                .map(|(start, end)| Placement { start, end })
                .collect(),
        )
    } else {
        None
    }
}

fn assign(
    tokens: &[TokenId],
    set: &ConstraintSet,
    index: usize,
    spans: &mut Vec<(usize, usize)>,
    used: &mut [bool],
) -> bool {
    if index == set.len() {
        return filters_hold(set, spans, used);
    }
    let phrase = set.constraints()[index].tokens();
    if phrase.len() > tokens.len() {
        return false;
    }
    for start in 0..=tokens.len() - phrase.len() {
        let end = start + phrase.len() - 1;
        if tokens[start..=end] != *phrase || used[start..=end].iter().any(|&u| u) {
            continue;
        }
        used[start..=end].iter_mut().for_each(|u| *u = true);
        spans.push((start, end));
        if assign(tokens, set, index + 1, spans, used) {
            return true;
        }
        spans.pop();
        used[start..=end].iter_mut().for_each(|u| *u = false);
    }
    false
}

fn filters_hold(set: &ConstraintSet, spans: &[(usize, usize)], used: &[bool]) -> bool {
    set.filters().iter().all(|f| match *f {
        ConstraintFilter::OrderBefore { before, after } => spans[before].1 < spans[after].0,
        ConstraintFilter::MinGap { first, second, gap } => {
            let (a, b) = if spans[first].0 < spans[second].0 {
                (spans[first], spans[second])
            } else {
                (spans[second], spans[first])
            };
            let generated = used[a.1 + 1..b.0].iter().filter(|&&u| !u).count();
            generated >= gap
        }
    })
}

/// The highest-scoring EOS-terminated sequence of at most `max_len` tokens
/// that contains every constraint, found by enumerating all of them.
/// Ties prefer the shorter, then the lexicographically smaller sequence.
pub fn brute_force_decode<S: Scorer>(
    scorer: &S,
    input: &str,
    set: &ConstraintSet,
    max_len: usize,
) -> Result<DecodeResult, DecodeError> {
    let v = scorer.vocab().len();
    let space = (v as f64).powi(max_len as i32);
    if space > SEARCH_SPACE_LIMIT {
        return Err(DecodeError::SearchSpaceTooLarge(space));
    }
    let eos = scorer.vocab().eos();
    let root = scorer.init(input)?;
    let mut stats = DecodeStats::default();
    let mut best: Option<Finished> = None;
    let mut prefix = Vec::with_capacity(max_len);

    struct Walk<'a, S: Scorer> {
        scorer: &'a S,
        set: &'a ConstraintSet,
        max_len: usize,
        eos: TokenId,
    }

    fn visit<S: Scorer>(
        w: &Walk<'_, S>,
        state: &S::State,
        score: f64,
        prefix: &mut Vec<TokenId>,
        stats: &mut DecodeStats,
        best: &mut Option<Finished>,
    ) {
        let dist = w.scorer.next_logprobs(state);
        stats.scorer_evaluations += 1;
        let end_score = score + dist[w.eos];
        if end_score > f64::NEG_INFINITY {
            if let Some(placements) = find_placements(prefix, w.set) {
                let mut tokens = prefix.clone();
                tokens.push(w.eos);
                let cand = Finished {
                    origins: origins_for(&tokens, &placements),
                    tokens,
                    score: end_score,
                    rank_score: end_score,
                    placements,
                };
                stats.finished_found += 1;
                let better = match best {
                    None => true,
                    Some(b) => finished_order(&cand, b) == Ordering::Less,
                };
                if better {
                    *best = Some(cand);
                }
            }
        }
        if prefix.len() + 1 >= w.max_len {
            return;
        }
        for id in w.scorer.vocab().ids() {
            if id == w.eos || dist[id] == f64::NEG_INFINITY {
                continue;
            }
            prefix.push(id);
            let next = w.scorer.advance(state, id);
            visit(w, &next, score + dist[id], prefix, stats, best);
            prefix.pop();
        }
    }

    let walk = Walk {
        scorer,
        set,
        max_len,
        eos,
    };
    if max_len > 0 {
        visit(&walk, &root, 0.0, &mut prefix, &mut stats, &mut best);
    }
    let best = best.ok_or(DecodeError::NoFeasibleSequence)?;
    Ok(DecodeResult {
        n_best: vec![best.clone()],
        best,
        stats,
        max_len,
    })
}

fn origins_for(tokens: &[TokenId], placements: &[Placement]) -> Vec<Origin> {
    let mut origins = vec![Origin::Generate; tokens.len()];
    for p in placements {
        origins[p.start] = Origin::Start;
        for o in &mut origins[p.start + 1..=p.end] {
            *o = Origin::Continue;
        }
    }
    origins
}
