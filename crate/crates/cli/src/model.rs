//! Loading scorers from disk and turning decode results into JSON.

use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gbs_core::constraint::{ConstraintError, ConstraintSet, FilterSpec};
use gbs_core::engine::{gbs_decode, DecodeError, DecodeParams, DecodeResult, DecodeStats};
use gbs_core::scorer::{AnyScorer, NgramModel, RandomScorer, Scorer, TableModel, UniformScorer};
use gbs_core::subword::{bpe_apply, bpe_detok, MergeTable};
use gbs_core::vocab::{Vocabulary, EOS_SURFACE};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Ngram,
    Table,
    Uniform,
    Random,
}

/// Where a model lives on disk.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub id: String,
    pub kind: ModelKind,
    /// N-gram counts file or table JSON.
    #[serde(default)]
    pub path: Option<PathBuf>,
    /// Vocabulary file; needed by every kind except `table`.
    #[serde(default)]
    pub vocab: Option<PathBuf>,
    /// Merge table applied to constraint words.
    #[serde(default)]
    pub bpe: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

/// Service configuration file: `{"models": [...]}`.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct ServiceConfig {
    pub models: Vec<ModelConfig>,
}

pub struct Model {
    pub id: String,
    pub scorer: AnyScorer,
    pub merges: Option<MergeTable>,
}

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| {
        format!("cannot open {}", path.display())
    })?))
}

fn read_vocab(cfg: &ModelConfig) -> Result<Vocabulary> {
    let Some(path) = &cfg.vocab else {
        bail!("model `{}` needs a vocabulary file", cfg.id)
    };
    Vocabulary::read_from(open(path)?).with_context(|| format!("reading {}", path.display()))
}

impl Model {
    pub fn load(cfg: &ModelConfig) -> Result<Self> {
        let need_path = || {
            cfg.path
                .as_deref()
                .with_context(|| format!("model `{}` needs a model file", cfg.id))
        };
        let scorer = match cfg.kind {
            ModelKind::Table => {
                let path = need_path()?;
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("cannot open {}", path.display()))?;
                AnyScorer::Table(
                    TableModel::from_json(&text)
                        .with_context(|| format!("reading {}", path.display()))?,
                )
            }
            ModelKind::Ngram => {
                let path = need_path()?;
                let vocab_path = cfg
                    .vocab
                    .as_deref()
                    .with_context(|| format!("model `{}` needs a vocabulary file", cfg.id))?;
                AnyScorer::Ngram(
                    NgramModel::load(open(path)?, open(vocab_path)?)
                        .with_context(|| format!("reading {}", path.display()))?,
                )
            }
            ModelKind::Uniform => AnyScorer::Uniform(UniformScorer::new(read_vocab(cfg)?)),
            ModelKind::Random => AnyScorer::Random(RandomScorer::new(read_vocab(cfg)?, cfg.seed)),
        };
        let merges = match &cfg.bpe {
            Some(p) => Some(
                MergeTable::read_from(open(p)?)
                    .with_context(|| format!("reading {}", p.display()))?,
            ),
            None => None,
        };
        Ok(Self {
            id: cfg.id.clone(),
            scorer,
            merges,
        })
    }

    pub fn vocab(&self) -> &Vocabulary {
        self.scorer.vocab()
    }

    /// Segments each word of a constraint phrase when a merge table is set.
    pub fn segment(&self, phrase: &[String]) -> Vec<String> {
        match &self.merges {
            Some(t) => phrase
                .iter()
                .flat_map(|w| w.split_whitespace().flat_map(|w| bpe_apply(t, w)))
                .collect(),
            None => phrase
                .iter()
                .flat_map(|w| w.split_whitespace().map(str::to_string))
                .collect(),
        }
    }

    pub fn constraint_set(
        &self,
        phrases: &[Vec<String>],
        filters: &[FilterSpec],
    ) -> Result<ConstraintSet, ConstraintError> {
        let segmented: Vec<Vec<String>> = phrases.iter().map(|p| self.segment(p)).collect();
        let filters = filters
            .iter()
            .map(FilterSpec::to_filter)
            .collect::<Result<Vec<_>, _>>()?;
        ConstraintSet::from_surface(self.vocab(), &segmented, filters)
    }

    pub fn decode(
        &self,
        source: &str,
        set: &ConstraintSet,
        params: &DecodeParams,
    ) -> Result<DecodeOutput, DecodeError> {
        let r = gbs_decode(&self.scorer, source, set, params)?;
        Ok(self.output(&r, params.n_best > 1))
    }

    fn surfaces(&self, tokens: &[gbs_core::vocab::TokenId]) -> Vec<String> {
        self.vocab()
            .decode(tokens)
            .into_iter()
            .filter(|s| s != EOS_SURFACE)
            .collect()
    }

    fn detokenize(&self, tokens: &[String]) -> String {
        match &self.merges {
            Some(_) => bpe_detok(tokens).unwrap_or_else(|_| tokens.join(" ")),
            None => tokens.join(" "),
        }
    }

    fn output(&self, r: &DecodeResult, with_n_best: bool) -> DecodeOutput {
        let tokens = self.surfaces(r.tokens());
        DecodeOutput {
            text: tokens.join(" "),
            detokenized: self.detokenize(&tokens),
            score: r.score(),
            n_best: with_n_best.then(|| {
                r.n_best
                    .iter()
                    .map(|f| {
                        let tokens = self.surfaces(&f.tokens);
                        Alternative {
                            text: tokens.join(" "),
                            detokenized: self.detokenize(&tokens),
                            score: f.score,
                            tokens,
                        }
                    })
                    .collect()
            }),
            stats: r.stats,
            tokens,
        }
    }
}

/// Decode result as emitted by both `gbs decode` and the service.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeOutput {
    /// Output symbols without EOS.
    pub tokens: Vec<String>,
    /// Symbols joined by spaces.
    pub text: String,
    /// Text with subword pieces joined back into words.
    pub detokenized: String,
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_best: Option<Vec<Alternative>>,
    pub stats: DecodeStats,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Alternative {
    pub tokens: Vec<String>,
    pub text: String,
    pub detokenized: String,
    pub score: f64,
}
