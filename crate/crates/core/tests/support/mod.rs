//! Test-only oracles and instance generators, written without reusing the
//! decoder's coverage or placement code.

#![allow(dead_code)]

use gbs_core::constraint::{Constraint, ConstraintFilter, ConstraintSet};
use gbs_core::engine::DecodeResult;
use gbs_core::scorer::{AnyScorer, NgramModel, RandomScorer, Scorer, TableModel, UniformScorer};
use gbs_core::vocab::{TokenId, Vocabulary};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn vocab_of(size: usize) -> Vocabulary {
    Vocabulary::from_symbols((1..size).map(|i| format!("w{i}"))).unwrap()
}

/// A random small decoding problem.
pub struct Instance {
    pub scorer: AnyScorer,
    pub set: ConstraintSet,
    pub max_len: usize,
    pub input: String,
}

pub struct InstanceSpec {
    pub vocab: std::ops::RangeInclusive<usize>,
    pub max_len: std::ops::RangeInclusive<usize>,
    pub max_constraints: usize,
    pub max_constraint_tokens: usize,
    pub filters: bool,
    pub uniform_allowed: bool,
    pub ngram_allowed: bool,
}

pub fn random_constraints(
    r: &mut ChaCha8Rng,
    vocab_size: usize,
    max_constraints: usize,
    max_tokens: usize,
    filters: bool,
) -> ConstraintSet {
    let n = r.random_range(0..=max_constraints);
    let mut budget = max_tokens;
    let mut constraints = Vec::new();
    for _ in 0..n {
        if budget == 0 {
            break;
        }
        let len = r.random_range(1..=budget.min(3));
        budget -= len;
        constraints.push(Constraint::new(
            (0..len)
                .map(|_| TokenId(r.random_range(1..vocab_size as u32)))
                .collect(),
        ));
    }
    let mut fs = Vec::new();
    if filters && constraints.len() >= 2 {
        let a = r.random_range(0..constraints.len());
        let mut b = r.random_range(0..constraints.len());
        while b == a {
            b = r.random_range(0..constraints.len());
        }
        match r.random_range(0..3) {
            0 => fs.push(ConstraintFilter::OrderBefore {
                before: a,
                after: b,
            }),
            1 => fs.push(ConstraintFilter::MinGap {
                first: a,
                second: b,
                gap: r.random_range(1..=2),
            }),
            _ => {
                fs.push(ConstraintFilter::OrderBefore {
                    before: a,
                    after: b,
                });
                fs.push(ConstraintFilter::MinGap {
                    first: a,
                    second: b,
                    gap: 1,
                });
            }
        }
    }
    ConstraintSet::with_filters(constraints, fs).unwrap()
}

pub fn random_instance(seed: u64, spec: &InstanceSpec) -> Instance {
    let mut r = rng(seed);
    let v = r.random_range(spec.vocab.clone());
    let set = random_constraints(
        &mut r,
        v,
        spec.max_constraints,
        spec.max_constraint_tokens,
        spec.filters,
    );
    let lo = (*spec.max_len.start()).max(set.num_tokens() + 1);
    let max_len = r.random_range(lo..=(*spec.max_len.end()).max(lo));
    let vocab = vocab_of(v);
    let input = format!("input {seed}");
    let kinds = if spec.uniform_allowed { 3 } else { 2 };
    let kind = if spec.ngram_allowed && r.random_bool(0.25) {
        3
    } else {
        r.random_range(0..kinds)
    };
    let scorer = match kind {
        0 => AnyScorer::Random(RandomScorer::new(vocab, r.random())),
        1 => AnyScorer::Table(TableModel::random(vocab, &[&input], 2, r.random())),
        2 => AnyScorer::Uniform(UniformScorer::new(vocab)),
        _ => AnyScorer::Ngram(random_ngram(&mut r, vocab)),
    };
    Instance {
        scorer,
        set,
        max_len,
        input,
    }
}

fn random_ngram(r: &mut ChaCha8Rng, vocab: Vocabulary) -> NgramModel {
    let v = vocab.len() as u32;
    let corpus: Vec<Vec<TokenId>> = (0..r.random_range(2..8))
        .map(|_| {
            (0..r.random_range(0..6))
                .map(|_| TokenId(r.random_range(1..v)))
                .collect()
        })
        .collect();
    let order = r.random_range(1..=3);
    let alpha = r.random_range(0.05..1.0);
    NgramModel::train(vocab, &corpus, order, alpha).unwrap()
}

/// Whether every constraint occurs as a contiguous span at its recorded
/// placement, spans are disjoint, lie before EOS, and filters hold.
pub fn satisfies(result: &DecodeResult, set: &ConstraintSet, eos: TokenId) -> Result<(), String> {
    let toks = result.tokens();
    if toks.last() != Some(&eos) || toks[..toks.len() - 1].contains(&eos) {
        return Err("output must end with its only EOS".into());
    }
    let pl = &result.best.placements;
    if pl.len() != set.len() {
        return Err(format!(
            "{} placements for {} constraints",
            pl.len(),
            set.len()
        ));
    }
    let mut covered = vec![false; toks.len()];
    for (i, (p, c)) in pl.iter().zip(set.constraints()).enumerate() {
        if p.end + 1 - p.start != c.len() || p.end + 1 >= toks.len() {
            return Err(format!("constraint {i}: bad span {p:?}"));
        }
        if toks[p.start..=p.end] != *c.tokens() {
            return Err(format!("constraint {i}: tokens differ at {p:?}"));
        }
        for x in &mut covered[p.start..=p.end] {
            if *x {
                return Err(format!("constraint {i} overlaps another"));
            }
            *x = true;
        }
    }
    for f in set.filters() {
        match *f {
            ConstraintFilter::OrderBefore { before, after } => {
                if pl[before].end >= pl[after].start {
                    return Err(format!("order {before} < {after} violated"));
                }
            }
            ConstraintFilter::MinGap { first, second, gap } => {
                let (a, b) = if pl[first].start < pl[second].start {
                    (pl[first], pl[second])
                } else {
                    (pl[second], pl[first])
                };
                let generated = (a.end + 1..b.start).filter(|&i| !covered[i]).count();
                if generated < gap {
                    return Err(format!("gap {first}/{second} is {generated} < {gap}"));
                }
            }
        }
    }
    Ok(())
}

/// Sum of the scorer's per-step log-probabilities along `tokens`.
pub fn replay_score<S: Scorer>(scorer: &S, input: &str, tokens: &[TokenId]) -> f64 {
    scorer.replay(input, tokens).unwrap().iter().sum()
}

/// Second exhaustive search: walks every labelled action sequence
/// (generate / start / continue / end) rather than every token sequence.
/// Returns the best (tokens, score); ties prefer shorter then smaller.
pub fn enumerate_actions<S: Scorer>(
    scorer: &S,
    input: &str,
    set: &ConstraintSet,
    max_len: usize,
) -> Option<(Vec<TokenId>, f64)> {
    #[derive(Clone)]
    struct Node<St> {
        state: St,
        tokens: Vec<TokenId>,
        score: f64,
        // 0 = unused, usize::MAX = done, otherwise tokens emitted so far
        progress: Vec<usize>,
        active: Option<usize>,
        generated: usize,
        generated_when_placed: Vec<Option<usize>>,
    }
    let eos = scorer.vocab().eos();
    let n = set.len();
    let phrases: Vec<Vec<TokenId>> = set
        .constraints()
        .iter()
        .map(|c| c.tokens().to_vec())
        .collect();
    let may_start = |node: &Node<S::State>, i: usize| -> bool {
        if node.active.is_some() || node.progress[i] != 0 {
            return false;
        }
        set.filters().iter().all(|f| match *f {
            ConstraintFilter::OrderBefore { before, after } => {
                after != i || node.progress[before] == usize::MAX
            }
            ConstraintFilter::MinGap { first, second, gap } => {
                let other = if first == i {
                    second
                } else if second == i {
                    first
                } else {
                    return true;
                };
                match node.generated_when_placed[other] {
                    Some(g) => node.generated - g >= gap,
                    None => true,
                }
            }
        })
    };
    let mut best: Option<(Vec<TokenId>, f64)> = None;
    let mut stack = vec![Node {
        state: scorer.init(input).unwrap(),
        tokens: vec![],
        score: 0.0,
        progress: vec![0; n],
        active: None,
        generated: 0,
        generated_when_placed: vec![None; n],
    }];
    while let Some(node) = stack.pop() {
        if node.tokens.len() >= max_len {
            continue;
        }
        let dist = scorer.next_logprobs(&node.state);
        let push = |stack: &mut Vec<Node<S::State>>, mut next: Node<S::State>, tok: TokenId| {
            let lp = dist[tok];
            if lp == f64::NEG_INFINITY {
                return;
            }
            next.state = scorer.advance(&node.state, tok);
            next.tokens.push(tok);
            next.score += lp;
            stack.push(next);
        };
        if let Some(i) = node.active {
            let mut next = node.clone();
            let done = next.progress[i];
            let tok = phrases[i][done];
            if done + 1 == phrases[i].len() {
                next.progress[i] = usize::MAX;
                next.active = None;
            } else {
                next.progress[i] = done + 1;
            }
            push(&mut stack, next, tok);
            continue;
        }
        if node.progress.iter().all(|&p| p == usize::MAX) && dist[eos] > f64::NEG_INFINITY {
            let mut tokens = node.tokens.clone();
            tokens.push(eos);
            let score = node.score + dist[eos];
            let better = match &best {
                None => true,
                Some((bt, bs)) => {
                    score > *bs || (score == *bs && (tokens.len(), &tokens) < (bt.len(), bt))
                }
            };
            if better {
                best = Some((tokens, score));
            }
        }
        for id in scorer.vocab().ids().skip(1) {
            let mut next = node.clone();
            next.generated += 1;
            push(&mut stack, next, id);
        }
        for (i, phrase) in phrases.iter().enumerate() {
            if !may_start(&node, i) {
                continue;
            }
            let mut next = node.clone();
            next.generated_when_placed[i] = Some(node.generated);
            if phrase.len() == 1 {
                next.progress[i] = usize::MAX;
            } else {
                next.progress[i] = 1;
                next.active = Some(i);
            }
            push(&mut stack, next, phrase[0]);
        }
    }
    best
}

/// Every sequence over `vocab_size - 1` non-EOS tokens of length `< max_len`,
/// followed by EOS, scored by replay; exhaustive argmax of the sequence
/// probability without constraints.
pub fn exhaustive_argmax<S: Scorer>(
    scorer: &S,
    input: &str,
    max_len: usize,
) -> (Vec<TokenId>, f64) {
    let v = scorer.vocab().len() as u32;
    let eos = scorer.vocab().eos();
    let mut best: Option<(Vec<TokenId>, f64)> = None;
    for len in 0..max_len {
        let total = (v as u64 - 1).pow(len as u32);
        for code in 0..total {
            let mut c = code;
            let mut toks = Vec::with_capacity(len + 1);
            for _ in 0..len {
                toks.push(TokenId(1 + (c % (v as u64 - 1)) as u32));
                c /= v as u64 - 1;
            }
            toks.push(eos);
            let s = replay_score(scorer, input, &toks);
            let better = match &best {
                None => true,
                Some((bt, bs)) => s > *bs || (s == *bs && (toks.len(), &toks) < (bt.len(), bt)),
            };
            if better {
                best = Some((toks, s));
            }
        }
    }
    best.unwrap()
}

/// Textbook left-to-right beam search kept independent of the grid: each
/// step expands every live hypothesis with its `k` best tokens, ranks all
/// candidates by (score desc, token, parent rank), moves EOS candidates to
/// the finished pool and keeps the best `k` others. The winner is the best
/// finished output by (score desc, length, tokens).
pub fn reference_beam_search<S: Scorer>(
    scorer: &S,
    input: &str,
    k: usize,
    max_len: usize,
) -> Option<(Vec<TokenId>, f64)> {
    let eos = scorer.vocab().eos();
    let mut beam: Vec<(S::State, Vec<TokenId>, f64)> =
        vec![(scorer.init(input).unwrap(), vec![], 0.0)];
    let mut finished: Vec<(Vec<TokenId>, f64)> = Vec::new();
    for _ in 0..max_len {
        let mut cands: Vec<(f64, TokenId, usize)> = Vec::new();
        for (rank, (state, _, score)) in beam.iter().enumerate() {
            let dist = scorer.next_logprobs(state);
            let mut toks: Vec<(TokenId, f64)> = scorer
                .vocab()
                .ids()
                .map(|t| (t, dist[t]))
                .filter(|(_, lp)| *lp > f64::NEG_INFINITY)
                .collect();
            toks.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
            toks.truncate(k);
            for (t, lp) in toks {
                cands.push((score + lp, t, rank));
            }
        }
        cands.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap()
                .then(a.1.cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let mut next = Vec::new();
        for (score, t, rank) in cands {
            let (state, toks, _) = &beam[rank];
            let mut toks = toks.clone();
            toks.push(t);
            if t == eos {
                finished.push((toks, score));
            } else if next.len() < k {
                next.push((scorer.advance(state, t), toks, score));
            }
        }
        beam = next;
    }
    finished.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap()
            .then(a.0.len().cmp(&b.0.len()))
            .then(a.0.cmp(&b.0))
    });
    finished.into_iter().next()
}

/// Exact optimum of constrained decoding (no filters) by dynamic
/// programming over (scorer state, coverage). Free tokens are drawn from
/// `alphabet` only, so callers must pass every token that can matter.
pub fn exact_constrained_optimum<S>(
    scorer: &S,
    input: &str,
    phrases: &[Vec<TokenId>],
    max_len: usize,
    alphabet: &[TokenId],
) -> Option<f64>
where
    S: Scorer,
    S::State: std::hash::Hash + Eq + Clone,
{
    use std::collections::HashMap;
    type Key<St> = (St, Vec<usize>, Option<usize>);
    let eos = scorer.vocab().eos();
    let done = usize::MAX;
    let mut layer: HashMap<Key<S::State>, f64> = HashMap::new();
    layer.insert(
        (scorer.init(input).unwrap(), vec![0; phrases.len()], None),
        0.0,
    );
    let mut best: Option<f64> = None;
    for _ in 0..max_len {
        let mut next: HashMap<Key<S::State>, f64> = HashMap::new();
        let mut relax = |key: Key<S::State>, score: f64| {
            let e = next.entry(key).or_insert(f64::NEG_INFINITY);
            if score > *e {
                *e = score;
            }
        };
        for ((state, progress, active), score) in &layer {
            let dist = scorer.next_logprobs(state);
            let step = |tok: TokenId| {
                let lp = dist[tok];
                (lp > f64::NEG_INFINITY).then(|| (scorer.advance(state, tok), score + lp))
            };
            if let Some(i) = *active {
                let mut p = progress.clone();
                let tok = phrases[i][p[i]];
                p[i] += 1;
                let a = if p[i] == phrases[i].len() {
                    p[i] = done;
                    None
                } else {
                    Some(i)
                };
                if let Some((s, sc)) = step(tok) {
                    relax((s, p, a), sc);
                }
                continue;
            }
            if progress.iter().all(|&p| p == done) && dist[eos] > f64::NEG_INFINITY {
                let s = score + dist[eos];
                if best.is_none_or(|b| s > b) {
                    best = Some(s);
                }
            }
            for &tok in alphabet.iter().filter(|&&t| t != eos) {
                if let Some((s, sc)) = step(tok) {
                    relax((s, progress.clone(), None), sc);
                }
            }
            for i in (0..phrases.len()).filter(|&i| progress[i] == 0) {
                let mut p = progress.clone();
                let (a, v) = if phrases[i].len() == 1 {
                    (None, done)
                } else {
                    (Some(i), 1)
                };
                p[i] = v;
                if let Some((s, sc)) = step(phrases[i][0]) {
                    relax((s, p, a), sc);
                }
            }
        }
        layer = next;
    }
    best
}

/// Tokens a table model can tell apart for `input`: everything named in one
/// of its rows plus one stand-in for the rest, which all score alike.
pub fn table_alphabet(model: &TableModel, input: &str, extra: &[TokenId]) -> Vec<TokenId> {
    let vocab = &model.file().vocab;
    let mut named: std::collections::BTreeSet<TokenId> = extra.iter().copied().collect();
    named.insert(vocab.eos());
    for inp in model.file().inputs.iter().filter(|i| i.source == input) {
        for row in &inp.rows {
            for s in row.history.iter().chain(row.probs.keys()) {
                if let Ok(id) = vocab.lookup(s) {
                    named.insert(id);
                }
            }
        }
    }
    if let Some(rest) = vocab.ids().find(|id| !named.contains(id)) {
        named.insert(rest);
    }
    named.into_iter().collect()
}
