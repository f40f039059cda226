//! Lexical constraints and placement filters.

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vocab::{TokenId, VocabError, Vocabulary};

#[derive(Debug, Error)]
pub enum ConstraintError {
    #[error("constraint {0} is empty")]
    Empty(usize),
    #[error("constraint {0} contains the end-of-sequence symbol")]
    ContainsEos(usize),
    #[error("constraint {index} token `{token}` is not in the vocabulary")]
    UnknownToken { index: usize, token: String },
    #[error("filter refers to constraint {0}, which does not exist")]
    BadIndex(usize),
    #[error("filter relates constraint {0} to itself")]
    SelfReference(usize),
    #[error("min_gap filter needs a positive gap")]
    ZeroGap,
    #[error("ordering filters form a cycle through constraint {0}")]
    Cycle(usize),
    #[error("constraints file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A token sequence that must appear contiguously in the output.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Constraint(Vec<TokenId>);

impl Constraint {
    pub fn new(tokens: Vec<TokenId>) -> Self {
        Self(tokens)
    }

    pub fn tokens(&self) -> &[TokenId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<TokenId>> for Constraint {
    fn from(tokens: Vec<TokenId>) -> Self {
        Self(tokens)
    }
}

/// Extra placement conditions checked whenever a constraint is started.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConstraintFilter {
    /// Constraint `after` may only start once `before` is done.
    OrderBefore { before: usize, after: usize },
    /// At least `gap` generated tokens separate the spans of the two
    /// constraints, in whichever order they are placed.
    MinGap {
        first: usize,
        second: usize,
        gap: usize,
    },
}

impl ConstraintFilter {
    fn indices(&self) -> (usize, usize) {
        match *self {
            Self::OrderBefore { before, after } => (before, after),
            Self::MinGap { first, second, .. } => (first, second),
        }
    }
}

/// Validated constraints for one decode.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConstraintSet {
    constraints: Vec<Constraint>,
    filters: Vec<ConstraintFilter>,
    num_tokens: usize,
}

impl ConstraintSet {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(constraints: Vec<Constraint>) -> Result<Self, ConstraintError> {
        Self::with_filters(constraints, Vec::new())
    }

    pub fn with_filters(
        constraints: Vec<Constraint>,
        filters: Vec<ConstraintFilter>,
    ) -> Result<Self, ConstraintError> {
        // EOS is always id 0.
        let eos = TokenId(0);
        for (i, c) in constraints.iter().enumerate() {
            if c.is_empty() {
                return Err(ConstraintError::Empty(i));
            }
            if c.tokens().contains(&eos) {
                return Err(ConstraintError::ContainsEos(i));
            }
        }
        for f in &filters {
            let (a, b) = f.indices();
            for idx in [a, b] {
                if idx >= constraints.len() {
                    return Err(ConstraintError::BadIndex(idx));
                }
            }
            if a == b {
                return Err(ConstraintError::SelfReference(a));
            }
            if let ConstraintFilter::MinGap { gap: 0, .. } = f {
                return Err(ConstraintError::ZeroGap);
            }
        }
        check_acyclic(constraints.len(), &filters)?;
        let num_tokens = constraints.iter().map(Constraint::len).sum();
        Ok(Self {
            constraints,
            filters,
            num_tokens,
        })
    }

    /// Maps surface-form phrases through `vocab`.
    pub fn from_surface<S: AsRef<str>>(
        vocab: &Vocabulary,
        phrases: &[Vec<S>],
        filters: Vec<ConstraintFilter>,
    ) -> Result<Self, ConstraintError> {
        let mut constraints = Vec::with_capacity(phrases.len());
        for (index, phrase) in phrases.iter().enumerate() {
            let mut ids = Vec::with_capacity(phrase.len());
            for tok in phrase {
                let tok = tok.as_ref();
                match vocab.lookup(tok) {
                    Ok(id) => ids.push(id),
                    Err(VocabError::Reserved) => return Err(ConstraintError::ContainsEos(index)),
                    Err(_) => {
                        return Err(ConstraintError::UnknownToken {
                            index,
                            token: tok.to_string(),
                        })
                    }
                }
            }
            constraints.push(Constraint::new(ids));
        }
        Self::with_filters(constraints, filters)
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn filters(&self) -> &[ConstraintFilter] {
        &self.filters
    }

    pub fn get(&self, index: usize) -> Option<&Constraint> {
        self.constraints.get(index)
    }

    /// Number of constraints.
    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Total token count over all constraints.
    pub fn num_tokens(&self) -> usize {
        self.num_tokens
    }

    /// Appends a constraint, revalidating the set.
    pub fn push(&mut self, constraint: Constraint) -> Result<(), ConstraintError> {
        let mut constraints = self.constraints.clone();
        constraints.push(constraint);
        *self = Self::with_filters(constraints, self.filters.clone())?;
        Ok(())
    }
}

fn check_acyclic(n: usize, filters: &[ConstraintFilter]) -> Result<(), ConstraintError> {
    let mut succ = vec![Vec::new(); n];
    for f in filters {
        if let ConstraintFilter::OrderBefore { before, after } = *f {
            succ[before].push(after);
        }
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut mark = vec![0u8; n];
    fn visit(v: usize, succ: &[Vec<usize>], mark: &mut [u8]) -> Result<(), ConstraintError> {
        match mark[v] {
            1 => return Err(ConstraintError::Cycle(v)),
            2 => return Ok(()),
            _ => {}
        }
        mark[v] = 1;
        for &w in &succ[v] {
            visit(w, succ, mark)?;
        }
        mark[v] = 2;
        Ok(())
    }
    for v in 0..n {
        visit(v, &succ, &mut mark)?;
    }
    Ok(())
}

/// One filter as written in a constraints file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    #[serde(rename = "type")]
    pub kind: FilterKind,
    pub before: usize,
    pub after: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gap: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    Order,
    MinGap,
}

impl FilterSpec {
    pub fn to_filter(&self) -> Result<ConstraintFilter, ConstraintError> {
        Ok(match self.kind {
            FilterKind::Order => ConstraintFilter::OrderBefore {
                before: self.before,
                after: self.after,
            },
            FilterKind::MinGap => ConstraintFilter::MinGap {
                first: self.before,
                second: self.after,
                gap: self.gap.ok_or(ConstraintError::ZeroGap)?,
            },
        })
    }
}

impl From<ConstraintFilter> for FilterSpec {
    fn from(f: ConstraintFilter) -> Self {
        match f {
            ConstraintFilter::OrderBefore { before, after } => Self {
                kind: FilterKind::Order,
                before,
                after,
                gap: None,
            },
            ConstraintFilter::MinGap { first, second, gap } => Self {
                kind: FilterKind::MinGap,
                before: first,
                after: second,
                gap: Some(gap),
            },
        }
    }
}

/// One line of a constraints file: surface-form constraints for a segment.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConstraintRecord {
    pub id: String,
    #[serde(default)]
    pub constraints: Vec<Vec<String>>,
    #[serde(default)]
    pub filters: Vec<FilterSpec>,
}

impl ConstraintRecord {
    pub fn filters(&self) -> Result<Vec<ConstraintFilter>, ConstraintError> {
        self.filters.iter().map(FilterSpec::to_filter).collect()
    }

    /// Resolves surface tokens to a validated set.
    pub fn resolve(&self, vocab: &Vocabulary) -> Result<ConstraintSet, ConstraintError> {
        ConstraintSet::from_surface(vocab, &self.constraints, self.filters()?)
    }
}

/// Reads a JSON Lines constraints file. Blank lines are skipped.
pub fn read_constraint_records<R: BufRead>(
    input: R,
) -> Result<Vec<ConstraintRecord>, ConstraintError> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ConstraintRecord =
            serde_json::from_str(&line).map_err(|e| ConstraintError::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        out.push(rec);
    }
    Ok(out)
}
