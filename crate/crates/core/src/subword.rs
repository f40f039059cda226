//! Byte-pair encoding.
//!
//! A word is split into characters and the learned merges are applied in
//! table order. Every piece except the last carries a trailing `-`, so
//! `Modifique` may come out as `Modi- fique`. Literal `-` and `\` inside a
//! word are written as `\-` and `\\`; an unescaped `-` can then only ever be
//! the continuation marker.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use thiserror::Error;

pub const CONTINUATION: char = '-';
const ESCAPE: char = '\\';

#[derive(Debug, Error)]
pub enum SubwordError {
    #[error("cannot train on an empty corpus")]
    EmptyCorpus,
    #[error("malformed segment `{token}` at position {index}")]
    MalformedSegments { index: usize, token: String },
    #[error("duplicate merge `{0} {1}`")]
    DuplicatePair(String, String),
    #[error("merge table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Ordered merge operations. Symbols are stored escaped and without the
/// continuation marker.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MergeTable {
    merges: Vec<(String, String)>,
    ranks: HashMap<(String, String), usize>,
}

impl MergeTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_merges<I>(merges: I) -> Result<Self, SubwordError>
    where
        I: IntoIterator<Item = (String, String)>,
    {
        let mut table = Self::new();
        for (l, r) in merges {
            table.push(l, r)?;
        }
        Ok(table)
    }

    fn push(&mut self, left: String, right: String) -> Result<(), SubwordError> {
        let key = (left, right);
        if self.ranks.contains_key(&key) {
            return Err(SubwordError::DuplicatePair(key.0, key.1));
        }
        self.ranks.insert(key.clone(), self.merges.len());
        self.merges.push(key);
        Ok(())
    }

    pub fn merges(&self) -> &[(String, String)] {
        &self.merges
    }

    pub fn len(&self) -> usize {
        self.merges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.merges.is_empty()
    }

    pub fn rank(&self, left: &str, right: &str) -> Option<usize> {
        self.ranks
            .get(&(left.to_string(), right.to_string()))
            .copied()
    }

    /// Writes `bpe <n>` followed by one `left right` line per merge.
    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "bpe {}", self.merges.len())?;
        for (l, r) in &self.merges {
            writeln!(w, "{l} {r}")?;
        }
        Ok(())
    }

    pub fn read_from<R: BufRead>(r: R) -> Result<Self, SubwordError> {
        let mut lines = r.lines();
        let header = lines.next().transpose()?.unwrap_or_default();
        let bad = |line: usize, message: &str| SubwordError::Parse {
            line,
            message: message.to_string(),
        };
        let n: usize = header
            .strip_prefix("bpe ")
            .and_then(|n| n.trim().parse().ok())
            .ok_or_else(|| bad(1, "expected `bpe <num_merges>`"))?;
        let mut table = Self::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            match (parts.next(), parts.next(), parts.next()) {
                (Some(l), Some(r), None) => table.push(l.to_string(), r.to_string())?,
                _ => return Err(bad(i + 2, "expected `left right`")),
            }
        }
        if table.len() != n {
            return Err(bad(
                1,
                &format!("header says {n} merges, found {}", table.len()),
            ));
        }
        Ok(table)
    }
}

fn escape_char(c: char) -> String {
    match c {
        CONTINUATION | ESCAPE => format!("{ESCAPE}{c}"),
        c => c.to_string(),
    }
}

fn split_word(word: &str) -> Vec<String> {
    word.chars().map(escape_char).collect()
}

fn merge_pair(symbols: &mut Vec<String>, left: &str, right: &str) {
    let mut i = 0;
    while i + 1 < symbols.len() {
        if symbols[i] == left && symbols[i + 1] == right {
            let r = symbols.remove(i + 1);
            symbols[i].push_str(&r);
        }
        i += 1;
    }
}

/// Learns up to `num_merges` merges from whitespace-tokenized lines. The most
/// frequent adjacent pair wins; ties go to the lexicographically smallest
/// pair. Training stops early once no word has two symbols left.
pub fn bpe_train<I, S>(corpus: I, num_merges: usize) -> Result<MergeTable, SubwordError>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut counts: BTreeMap<String, u64> = BTreeMap::new();
    for line in corpus {
        for w in line.as_ref().split_whitespace() {
            *counts.entry(w.to_string()).or_default() += 1;
        }
    }
    if counts.is_empty() {
        return Err(SubwordError::EmptyCorpus);
    }
    let mut words: Vec<(Vec<String>, u64)> = counts
        .into_iter()
        .map(|(w, n)| (split_word(&w), n))
        .collect();
    let mut table = MergeTable::new();
    for _ in 0..num_merges {
        let mut pairs: HashMap<(&str, &str), u64> = HashMap::new();
        for (symbols, n) in &words {
            for p in symbols.windows(2) {
                *pairs.entry((&p[0], &p[1])).or_default() += n;
            }
        }
        let Some(best) = pairs
            .into_iter()
            .max_by(|a, b| a.1.cmp(&b.1).then_with(|| b.0.cmp(&a.0)))
            .map(|((l, r), _)| (l.to_string(), r.to_string()))
        else {
            break;
        };
        for (symbols, _) in &mut words {
            merge_pair(symbols, &best.0, &best.1);
        }
        table.push(best.0, best.1)?;
    }
    Ok(table)
}

/// Segments one word. Non-final pieces end with the continuation marker.
pub fn bpe_apply(table: &MergeTable, word: &str) -> Vec<String> {
    let mut symbols = split_word(word);
    if symbols.len() > 1 {
        for (l, r) in &table.merges {
            merge_pair(&mut symbols, l, r);
            if symbols.len() == 1 {
                break;
            }
        }
    }
    let last = symbols.len().saturating_sub(1);
    for s in &mut symbols[..last] {
        s.push(CONTINUATION);
    }
    symbols
}

/// Segments every whitespace-separated word of `line`.
pub fn bpe_apply_line(table: &MergeTable, line: &str) -> Vec<String> {
    line.split_whitespace()
        .flat_map(|w| bpe_apply(table, w))
        .collect()
}

/// Unescapes one piece; the flag says whether it carried the marker.
fn decode_piece(index: usize, token: &str) -> Result<(String, bool), SubwordError> {
    let malformed = || SubwordError::MalformedSegments {
        index,
        token: token.to_string(),
    };
    let mut out = String::new();
    let mut chars = token.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            ESCAPE => match chars.next() {
                Some(e @ (CONTINUATION | ESCAPE)) => out.push(e),
                _ => return Err(malformed()),
            },
            CONTINUATION => {
                if chars.peek().is_some() || out.is_empty() {
                    return Err(malformed());
                }
                return Ok((out, true));
            }
            c => out.push(c),
        }
    }
    if out.is_empty() {
        return Err(malformed());
    }
    Ok((out, false))
}

/// Joins pieces back into space-separated words.
pub fn bpe_detok<S: AsRef<str>>(tokens: &[S]) -> Result<String, SubwordError> {
    let mut words: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut open = false;
    for (i, t) in tokens.iter().enumerate() {
        let (piece, cont) = decode_piece(i, t.as_ref())?;
        current.push_str(&piece);
        open = cont;
        if !cont {
            words.push(std::mem::take(&mut current));
        }
    }
    if open {
        return Err(SubwordError::MalformedSegments {
            index: tokens.len() - 1,
            token: tokens[tokens.len() - 1].as_ref().to_string(),
        });
    }
    Ok(words.join(" "))
}

/// Every piece `bpe_apply` can emit for words built from the corpus's
/// characters: each character and each merged symbol, with and without the
/// continuation marker. Sorted.
pub fn bpe_vocabulary<I, S>(table: &MergeTable, corpus: I) -> Vec<String>
where
    I: IntoIterator<Item = S>,
    S: AsRef<str>,
{
    let mut base: BTreeSet<String> = BTreeSet::new();
    for line in corpus {
        for c in line.as_ref().chars().filter(|c| !c.is_whitespace()) {
            base.insert(escape_char(c));
        }
    }
    for (l, r) in &table.merges {
        base.insert(format!("{l}{r}"));
    }
    let mut out: BTreeSet<String> = BTreeSet::new();
    for s in base {
        out.insert(format!("{s}{CONTINUATION}"));
        out.insert(s);
    }
    out.into_iter().collect()
}
