//! Terminology extraction by normalized pointwise mutual information over a
//! sentence-aligned corpus, and lookup of extracted terms in new segments.
//!
//! Counts are per segment pair: a phrase seen twice in one segment counts
//! once.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, Write};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TermError {
    #[error("joint count is zero")]
    ZeroJoint,
    #[error("phrases co-occur in every segment, entropy is zero")]
    DegenerateEntropy,
    #[error("inconsistent counts: n_xy={n_xy} n_x={n_x} n_y={n_y} N={n}")]
    InvalidCounts {
        n_xy: u64,
        n_x: u64,
        n_y: u64,
        n: u64,
    },
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("n-gram range {0}..={1} is empty")]
    BadRange(usize, usize),
    #[error("term table line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Phrase = Vec<String>;

/// Counts for one source/target phrase pair.
#[derive(Clone, Debug, PartialEq)]
pub struct PhrasePairStats {
    pub source: Phrase,
    pub target: Phrase,
    pub n_xy: u64,
    pub n_x: u64,
    pub n_y: u64,
    pub n: u64,
}

impl PhrasePairStats {
    pub fn npmi(&self) -> Result<f64, TermError> {
        npmi(self.n_xy, self.n_x, self.n_y, self.n)
    }
}

/// Pointwise mutual information, natural log.
pub fn pmi(n_xy: u64, n_x: u64, n_y: u64, n: u64) -> Result<f64, TermError> {
    check_counts(n_xy, n_x, n_y, n)?;
    Ok(((n_xy as f64 * n as f64) / (n_x as f64 * n_y as f64)).ln())
}

/// PMI divided by `-ln p(x, y)`, in `[-1, 1]`.
pub fn npmi(n_xy: u64, n_x: u64, n_y: u64, n: u64) -> Result<f64, TermError> {
    let p = pmi(n_xy, n_x, n_y, n)?;
    if n_xy == n {
        return Err(TermError::DegenerateEntropy);
    }
    let h = (n as f64 / n_xy as f64).ln();
    Ok((p / h).clamp(-1.0, 1.0))
}

fn check_counts(n_xy: u64, n_x: u64, n_y: u64, n: u64) -> Result<(), TermError> {
    if n_xy == 0 {
        return Err(TermError::ZeroJoint);
    }
    if n_xy > n_x.min(n_y) || n_x.max(n_y) > n {
        return Err(TermError::InvalidCounts { n_xy, n_x, n_y, n });
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtractParams {
    pub n_min: usize,
    pub n_max: usize,
    pub min_npmi: f64,
    pub min_count: u64,
}

impl Default for ExtractParams {
    fn default() -> Self {
        Self {
            n_min: 2,
            n_max: 5,
            min_npmi: 0.9,
            min_count: 5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TermEntry {
    pub target: Phrase,
    pub npmi: f64,
    pub n_x: u64,
    pub n_y: u64,
    pub n_xy: u64,
}

/// Source phrase to its chosen target phrase.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TermTable {
    entries: BTreeMap<Phrase, TermEntry>,
    /// Thresholds the table was built with; unknown for loaded tables.
    pub params: Option<ExtractParams>,
}

/// Distinct n-grams of `tokens` with lengths in `n_min..=n_max`.
pub fn distinct_ngrams<S: AsRef<str> + PartialEq + Eq + std::hash::Hash>(
    tokens: &[S],
    n_min: usize,
    n_max: usize,
) -> HashSet<&[S]> {
    let mut out = HashSet::new();
    for n in n_min..=n_max.min(tokens.len()) {
        for w in tokens.windows(n) {
            out.insert(w);
        }
    }
    out
}

/// Distinct n-grams of one side of a segment, in a fixed order.
type Grams<'a> = Vec<&'a [String]>;

fn ordered(set: HashSet<&[String]>) -> Vec<&[String]> {
    let mut v: Vec<_> = set.into_iter().collect();
    v.sort();
    v
}

/// Whether `a` should be kept over `b` as the target of one source phrase.
fn better_target(a: &TermEntry, b: &TermEntry) -> bool {
    a.npmi
        .total_cmp(&b.npmi)
        .then(a.n_xy.cmp(&b.n_xy))
        .then(a.target.len().cmp(&b.target.len()))
        .then(b.target.cmp(&a.target))
        .is_gt()
}

/// Counts every source and target n-gram, scores each co-occurring pair
/// whose phrases both occur at least `min_count` times and keeps, per source
/// phrase, the best target with `npmi >= min_npmi`.
///
/// Among surviving targets the highest npmi wins, then the highest joint
/// count, then the longer phrase, then the lexicographically smaller one.
pub fn extract_terminology(
    corpus: &[(Phrase, Phrase)],
    params: &ExtractParams,
) -> Result<TermTable, TermError> {
    if corpus.is_empty() {
        return Err(TermError::EmptyCorpus);
    }
    if params.n_min == 0 || params.n_min > params.n_max {
        return Err(TermError::BadRange(params.n_min, params.n_max));
    }
    let n = corpus.len() as u64;
    let grams: Vec<(Grams, Grams)> = corpus
        .iter()
        .map(|(s, t)| {
            (
                ordered(distinct_ngrams(s, params.n_min, params.n_max)),
                ordered(distinct_ngrams(t, params.n_min, params.n_max)),
            )
        })
        .collect();
    let mut n_x: HashMap<&[String], u64> = HashMap::new();
    let mut n_y: HashMap<&[String], u64> = HashMap::new();
    for (s, t) in &grams {
        for &g in s {
            *n_x.entry(g).or_default() += 1;
        }
        for &g in t {
            *n_y.entry(g).or_default() += 1;
        }
    }
    let mut joint: HashMap<(&[String], &[String]), u64> = HashMap::new();
    for (s, t) in &grams {
        let t: Vec<&[String]> = t
            .iter()
            .copied()
            .filter(|g| n_y[g] >= params.min_count)
            .collect();
        for &x in s.iter().filter(|g| n_x[*g] >= params.min_count) {
            for &y in &t {
                *joint.entry((x, y)).or_default() += 1;
            }
        }
    }
    let mut entries: BTreeMap<Phrase, TermEntry> = BTreeMap::new();
    for ((x, y), n_xy) in joint {
        let (cx, cy) = (n_x[x], n_y[y]);
        let score = match npmi(n_xy, cx, cy, n) {
            Ok(s) => s,
            Err(TermError::DegenerateEntropy) => 1.0,
            Err(e) => return Err(e),
        };
        if score < params.min_npmi {
            continue;
        }
        let cand = TermEntry {
            target: y.to_vec(),
            npmi: score,
            n_x: cx,
            n_y: cy,
            n_xy,
        };
        match entries.get_mut(x) {
            Some(cur) if !better_target(&cand, cur) => {}
            Some(cur) => *cur = cand,
            None => {
                entries.insert(x.to_vec(), cand);
            }
        }
    }
    Ok(TermTable {
        entries,
        params: Some(*params),
    })
}

impl TermTable {
    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (Phrase, TermEntry)>,
    {
        Self {
            entries: entries.into_iter().collect(),
            params: None,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, source: &[String]) -> Option<&TermEntry> {
        self.entries.get(source)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Phrase, &TermEntry)> {
        self.entries.iter()
    }

    /// Target phrases for the table keys found in `segment`.
    ///
    /// All key occurrences are collected, then accepted longest first (and
    /// leftmost among equals) unless they overlap an accepted one. Targets
    /// come out in source order with duplicates dropped.
    pub fn match_constraints<S: AsRef<str>>(&self, segment: &[S]) -> Vec<Phrase> {
        let tokens: Vec<String> = segment.iter().map(|s| s.as_ref().to_string()).collect();
        let longest = self.entries.keys().map(Vec::len).max().unwrap_or(0);
        let mut found: Vec<(usize, usize)> = Vec::new();
        for len in 1..=longest.min(tokens.len()) {
            for start in 0..=tokens.len() - len {
                if self.entries.contains_key(&tokens[start..start + len]) {
                    found.push((start, len));
                }
            }
        }
        found.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let mut used = vec![false; tokens.len()];
        let mut accepted: Vec<(usize, usize)> = Vec::new();
        for (start, len) in found {
            if used[start..start + len].iter().any(|&u| u) {
                continue;
            }
            used[start..start + len].iter_mut().for_each(|u| *u = true);
            accepted.push((start, len));
        }
        accepted.sort();
        let mut out: Vec<Phrase> = Vec::new();
        for (start, len) in accepted {
            let target = &self.entries[&tokens[start..start + len]].target;
            if !out.contains(target) {
                out.push(target.clone());
            }
        }
        out
    }

    /// One `source<TAB>target<TAB>npmi<TAB>n_x<TAB>n_y<TAB>n_xy` line per
    /// entry, sorted by source phrase.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for (src, e) in &self.entries {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}",
                src.join(" "),
                e.target.join(" "),
                e.npmi,
                e.n_x,
                e.n_y,
                e.n_xy
            )?;
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(r: R) -> Result<Self, TermError> {
        let mut entries = BTreeMap::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |message: String| TermError::Parse {
                line: i + 1,
                message,
            };
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 6 {
                return Err(bad(format!("expected 6 columns, found {}", cols.len())));
            }
            let phrase = |s: &str| -> Result<Phrase, TermError> {
                let p: Phrase = s.split_whitespace().map(str::to_string).collect();
                if p.is_empty() {
                    return Err(bad("empty phrase".into()));
                }
                Ok(p)
            };
            let num = |s: &str| s.parse::<u64>().map_err(|e| bad(format!("`{s}`: {e}")));
            let source = phrase(cols[0])?;
            let entry = TermEntry {
                target: phrase(cols[1])?,
                npmi: cols[2]
                    .parse()
                    .map_err(|e| bad(format!("`{}`: {e}", cols[2])))?,
                n_x: num(cols[3])?,
                n_y: num(cols[4])?,
                n_xy: num(cols[5])?,
            };
            if entries.insert(source, entry).is_some() {
                return Err(bad(format!("duplicate source phrase `{}`", cols[0])));
            }
        }
        Ok(Self {
            entries,
            params: None,
        })
    }
}
