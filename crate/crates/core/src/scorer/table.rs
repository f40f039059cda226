use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{LogProbs, Scorer, ScorerError};
use crate::vocab::{TokenId, VocabError, Vocabulary};

const MASS_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("input {input:?}, history {history:?}: {message}")]
    BadRow {
        input: String,
        history: Vec<String>,
        message: String,
    },
    #[error("input {0:?} is listed twice")]
    DuplicateInput(String),
    #[error(transparent)]
    Vocab(#[from] VocabError),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// One conditional distribution as stored on disk.
///
/// Tokens missing from `probs` share whatever mass is left over equally.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub history: Vec<String>,
    pub probs: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableInput {
    pub source: String,
    pub rows: Vec<TableRow>,
}

/// On-disk form of a [`TableModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableFile {
    pub vocab: Vocabulary,
    pub context: usize,
    pub inputs: Vec<TableInput>,
}

/// Explicit conditional tables keyed by input and the last `context` tokens.
///
/// Histories without a row fall back to the uniform distribution.
#[derive(Clone, Debug)]
pub struct TableModel {
    file: Arc<TableFile>,
    inputs: HashMap<String, usize>,
    rows: HashMap<(usize, Vec<TokenId>), Arc<LogProbs>>,
    fallback: Arc<LogProbs>,
}

impl TableModel {
    pub fn from_file(file: TableFile) -> Result<Self, TableError> {
        let vocab = &file.vocab;
        let mut inputs = HashMap::new();
        let mut rows = HashMap::new();
        for (idx, input) in file.inputs.iter().enumerate() {
            if inputs.insert(input.source.clone(), idx).is_some() {
                return Err(TableError::DuplicateInput(input.source.clone()));
            }
            for row in &input.rows {
                let bad = |message: String| TableError::BadRow {
                    input: input.source.clone(),
                    history: row.history.clone(),
                    message,
                };
                if row.history.len() > file.context {
                    return Err(bad("history longer than the context size".into()));
                }
                let history = vocab.encode(&row.history)?;
                let logprobs = row_logprobs(vocab, &row.probs).map_err(bad)?;
                rows.insert((idx, history), Arc::new(logprobs));
            }
        }
        let fallback = Arc::new(LogProbs::uniform(vocab.len()));
        Ok(Self {
            file: Arc::new(file),
            inputs,
            rows,
            fallback,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, TableError> {
        Self::from_file(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String, TableError> {
        Ok(serde_json::to_string_pretty(&*self.file)?)
    }

    pub fn file(&self) -> &TableFile {
        &self.file
    }

    pub fn context(&self) -> usize {
        self.file.context
    }

    /// Dense random rows for every history of length `<= context` over the
    /// non-EOS tokens, for each input.
    pub fn random(vocab: Vocabulary, inputs: &[&str], context: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let symbols: Vec<String> = vocab
            .ids()
            .skip(1)
            .map(|id| vocab.surface(id).to_string())
            .collect();
        let mut histories: Vec<Vec<String>> = vec![Vec::new()];
        let mut frontier = histories.clone();
        for _ in 0..context {
            let mut next = Vec::new();
            for h in &frontier {
                for s in &symbols {
                    let mut h = h.clone();
                    h.push(s.clone());
                    next.push(h);
                }
            }
            histories.extend(next.iter().cloned());
            frontier = next;
        }
        let inputs = inputs
            .iter()
            .map(|&source| TableInput {
                source: source.to_string(),
                rows: histories
                    .iter()
                    .map(|history| {
                        let weights: Vec<f64> = (0..vocab.len())
                            .map(|_| (rng.random::<f64>() * 4.0).exp())
                            .collect();
                        let total: f64 = weights.iter().sum();
                        TableRow {
                            history: history.clone(),
                            probs: vocab
                                .ids()
                                .zip(&weights)
                                .map(|(id, w)| (vocab.surface(id).to_string(), w / total))
                                .collect(),
                        }
                    })
                    .collect(),
            })
            .collect();
        Self::from_file(TableFile {
            vocab,
            context,
            inputs,
        })
        .expect("generated rows are normalized")
    }
}

fn row_logprobs(vocab: &Vocabulary, probs: &BTreeMap<String, f64>) -> Result<LogProbs, String> {
    let mut p = vec![f64::NAN; vocab.len()];
    let mut listed = 0.0;
    for (surface, &prob) in probs {
        let id = if surface == crate::vocab::EOS_SURFACE {
            vocab.eos()
        } else {
            vocab.lookup(surface).map_err(|e| e.to_string())?
        };
        if !(0.0..=1.0).contains(&prob) {
            return Err(format!(
                "probability {prob} for `{surface}` is out of range"
            ));
        }
        p[id.index()] = prob;
        listed += prob;
    }
    if listed > 1.0 + MASS_TOLERANCE {
        return Err(format!("listed mass {listed} exceeds 1"));
    }
    let unlisted = p.iter().filter(|x| x.is_nan()).count();
    if unlisted == 0 {
        if (listed - 1.0).abs() > MASS_TOLERANCE {
            return Err(format!("row mass {listed} is not 1"));
        }
        return Ok(LogProbs::new(p.iter().map(|x| (x / listed).ln()).collect()));
    }
    let residual = (1.0 - listed).max(0.0) / unlisted as f64;
    Ok(LogProbs::new(
        p.iter()
            .map(|&x| if x.is_nan() { residual.ln() } else { x.ln() })
            .collect(),
    ))
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct TableState {
    input: usize,
    suffix: Vec<TokenId>,
}

impl Scorer for TableModel {
    type State = TableState;

    fn vocab(&self) -> &Vocabulary {
        &self.file.vocab
    }

    fn init(&self, input: &str) -> Result<TableState, ScorerError> {
        let input = *self
            .inputs
            .get(input)
            .ok_or_else(|| ScorerError::UnknownInput(input.to_string()))?;
        Ok(TableState {
            input,
            suffix: Vec::new(),
        })
    }

    fn next_logprobs(&self, state: &TableState) -> LogProbs {
        self.rows
            .get(&(state.input, state.suffix.clone()))
            .unwrap_or(&self.fallback)
            .as_ref()
            .clone()
    }

    fn advance(&self, state: &TableState, token: TokenId) -> TableState {
        let mut suffix = state.suffix.clone();
        suffix.push(token);
        if suffix.len() > self.file.context {
            suffix.remove(0);
        }
        TableState {
            input: state.input,
            suffix,
        }
    }
}
