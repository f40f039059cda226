use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

use super::{LogProbs, Scorer, ScorerError};
use crate::vocab::{TokenId, VocabError, Vocabulary};

/// Sentence-start padding symbol. Only ever appears in contexts.
pub const BOS_SURFACE: &str = "<s>";

const BOS: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum NgramError {
    #[error("training corpus is empty")]
    EmptyCorpus,
    #[error("n-gram order must be at least 1")]
    BadOrder,
    #[error("smoothing constant must be positive and finite, got {0}")]
    BadAlpha(f64),
    #[error("training sentence {0} contains the end-of-sequence symbol")]
    EosInCorpus(usize),
    #[error("n-gram file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Add-alpha smoothed n-gram model without backoff.
///
/// `p(w | h) = (count(h w) + alpha) / (count(h) + alpha * |v|)` where `h` is
/// the previous `order - 1` tokens, padded with `<s>` at sentence start, and
/// `|v|` counts every predictable symbol including EOS.
#[derive(Clone, Debug, PartialEq)]
pub struct NgramModel {
    vocab: Vocabulary,
    order: usize,
    alpha: f64,
    /// `counts[o - 1]` holds the o-gram counts.
    counts: Vec<BTreeMap<Vec<u32>, u64>>,
    successors: HashMap<Vec<u32>, Vec<(TokenId, u64)>>,
}

impl NgramModel {
    pub fn train(
        vocab: Vocabulary,
        corpus: &[Vec<TokenId>],
        order: usize,
        alpha: f64,
    ) -> Result<Self, NgramError> {
        if corpus.is_empty() {
            return Err(NgramError::EmptyCorpus);
        }
        if order == 0 {
            return Err(NgramError::BadOrder);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(NgramError::BadAlpha(alpha));
        }
        let eos = vocab.eos();
        let mut counts = vec![BTreeMap::new(); order];
        for (i, sentence) in corpus.iter().enumerate() {
            if sentence.contains(&eos) {
                return Err(NgramError::EosInCorpus(i));
            }
            for o in 1..=order {
                let padded: Vec<u32> = std::iter::repeat_n(BOS, o - 1)
                    .chain(sentence.iter().map(|t| t.0))
                    .chain(std::iter::once(eos.0))
                    .collect();
                for gram in padded.windows(o) {
                    *counts[o - 1].entry(gram.to_vec()).or_insert(0) += 1;
                }
            }
        }
        Ok(Self::from_counts(vocab, order, alpha, counts))
    }

    /// Builds the vocabulary from whitespace-tokenized lines, then trains.
    pub fn train_on_text<S: AsRef<str>>(
        lines: &[S],
        order: usize,
        alpha: f64,
    ) -> Result<Self, NgramError> {
        let mut vocab = Vocabulary::new();
        let mut corpus = Vec::with_capacity(lines.len());
        for line in lines {
            let ids = line
                .as_ref()
                .split_whitespace()
                .map(|w| vocab.intern(w))
                .collect::<Result<Vec<_>, _>>()?;
            corpus.push(ids);
        }
        Self::train(vocab, &corpus, order, alpha)
    }

    fn from_counts(
        vocab: Vocabulary,
        order: usize,
        alpha: f64,
        counts: Vec<BTreeMap<Vec<u32>, u64>>,
    ) -> Self {
        let mut successors: HashMap<Vec<u32>, Vec<(TokenId, u64)>> = HashMap::new();
        for (gram, &n) in &counts[order - 1] {
            let (ctx, last) = gram.split_at(order - 1);
            successors
                .entry(ctx.to_vec())
                .or_default()
                .push((TokenId(last[0]), n));
        }
        Self {
            vocab,
            order,
            alpha,
            counts,
            successors,
        }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Raw count of an n-gram given by surface forms (`<s>` allowed).
    pub fn count(&self, gram: &[&str]) -> u64 {
        if gram.is_empty() || gram.len() > self.order {
            return 0;
        }
        let mut ids = Vec::with_capacity(gram.len());
        for &s in gram {
            let id = match s {
                BOS_SURFACE => BOS,
                crate::vocab::EOS_SURFACE => self.vocab.eos().0,
                _ => match self.vocab.lookup(s) {
                    Ok(id) => id.0,
                    Err(_) => return 0,
                },
            };
            ids.push(id);
        }
        self.counts[gram.len() - 1].get(&ids).copied().unwrap_or(0)
    }

    /// All o-gram counts for `1 <= o <= order`, keyed by surface forms.
    pub fn counts_by_surface(&self) -> BTreeMap<Vec<String>, u64> {
        self.counts
            .iter()
            .flat_map(|m| m.iter())
            .map(|(gram, &n)| {
                (
                    gram.iter().map(|&t| self.symbol(t).to_string()).collect(),
                    n,
                )
            })
            .collect()
    }

    fn symbol(&self, id: u32) -> &str {
        if id == BOS {
            BOS_SURFACE
        } else {
            self.vocab.surface(TokenId(id))
        }
    }

    /// Writes the count file and the vocabulary file.
    pub fn save<W1: Write, W2: Write>(&self, mut model: W1, vocab: W2) -> std::io::Result<()> {
        writeln!(model, "ngram {} {}", self.order, self.alpha)?;
        for (o, grams) in self.counts.iter().enumerate() {
            for (gram, n) in grams {
                write!(model, "{}", o + 1)?;
                for &t in gram {
                    write!(model, " {}", self.symbol(t))?;
                }
                writeln!(model, " {n}")?;
            }
        }
        self.vocab.write_to(vocab)
    }

    pub fn load<R1: BufRead, R2: BufRead>(model: R1, vocab: R2) -> Result<Self, NgramError> {
        let vocab = Vocabulary::read_from(vocab)?;
        let mut lines = model.lines().enumerate();
        let parse_err = |line: usize, message: String| NgramError::Parse { line, message };
        let header = match lines.next() {
            Some((_, l)) => l?,
            None => return Err(parse_err(1, "missing header".into())),
        };
        let fields: Vec<&str> = header.split_whitespace().collect();
        let (order, alpha) = match fields.as_slice() {
            ["ngram", o, a] => (
                o.parse::<usize>()
                    .map_err(|_| parse_err(1, format!("bad order `{o}`")))?,
                a.parse::<f64>()
                    .map_err(|_| parse_err(1, format!("bad alpha `{a}`")))?,
            ),
            _ => return Err(parse_err(1, "expected `ngram <order> <alpha>`".into())),
        };
        if order == 0 {
            return Err(NgramError::BadOrder);
        }
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(NgramError::BadAlpha(alpha));
        }
        let mut counts = vec![BTreeMap::new(); order];
        for (i, line) in lines {
            let line = line?;
            let lineno = i + 1;
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.is_empty() {
                continue;
            }
            let o: usize = fields[0]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad order `{}`", fields[0])))?;
            if o == 0 || o > order || fields.len() != o + 2 {
                return Err(parse_err(lineno, "field count does not match order".into()));
            }
            let n: u64 = fields[o + 1]
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad count `{}`", fields[o + 1])))?;
            let gram = fields[1..=o]
                .iter()
                .map(|&s| match s {
                    BOS_SURFACE => Ok(BOS),
                    crate::vocab::EOS_SURFACE => Ok(vocab.eos().0),
                    _ => vocab.lookup(s).map(|id| id.0),
                })
                .collect::<Result<Vec<_>, _>>()?;
            counts[o - 1].insert(gram, n);
        }
        Ok(Self::from_counts(vocab, order, alpha, counts))
    }
}

impl Scorer for NgramModel {
    /// The last `order - 1` tokens, `<s>`-padded.
    type State = Vec<u32>;

    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn init(&self, _input: &str) -> Result<Vec<u32>, ScorerError> {
        Ok(vec![BOS; self.order - 1])
    }

    fn next_logprobs(&self, state: &Vec<u32>) -> LogProbs {
        let mut weights = vec![self.alpha; self.vocab.len()];
        if let Some(succ) = self.successors.get(state) {
            for &(tok, n) in succ {
                weights[tok.index()] += n as f64;
            }
        }
        LogProbs::from_weights(&weights)
    }

    fn advance(&self, state: &Vec<u32>, token: TokenId) -> Vec<u32> {
        if self.order == 1 {
            return Vec::new();
        }
        let mut next = state[1..].to_vec();
        next.push(token.0);
        next
    }
}
