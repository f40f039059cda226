//! Batch subcommands.

use std::collections::HashMap;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use gbs_core::constraint::{read_constraint_records, ConstraintSet};
use gbs_core::engine::{DecodeError, DecodeParams, MaxLen};
use gbs_core::evalsim::{
    format_cycle_table, format_term_table, read_corpus, simulate_pickrevise,
    terminology_experiment, toydata, PickMode, SimConfig,
};
use gbs_core::scorer::NgramModel;
use gbs_core::subword::{bpe_apply_line, bpe_detok, bpe_train, bpe_vocabulary, MergeTable};
use gbs_core::terminology::{extract_terminology, ExtractParams, TermTable};
use gbs_core::vocab::Vocabulary;
use rayon::prelude::*;
use serde::Serialize;

use crate::model::{DecodeOutput, Model, ModelConfig, ModelKind};

/// Exit status for a run where some segments failed to decode.
pub const PARTIAL_FAILURE: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "gbs",
    version,
    about = "Lexically constrained decoding with grid beam search"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Decode input segments, optionally under constraints.
    Decode(DecodeArgs),
    /// Build a term table from a sentence-aligned corpus.
    ExtractTerms(ExtractArgs),
    /// Run the simulated editing loop or the terminology baselines.
    Simulate(SimulateArgs),
    /// Byte-pair encoding tools.
    #[command(subcommand)]
    Bpe(BpeCommand),
    /// Train an add-alpha n-gram model.
    TrainNgram(TrainNgramArgs),
    /// Serve the HTTP API.
    Serve(crate::service::ServeArgs),
    /// Generate the bundled toy corpora and models.
    ToyData(ToyArgs),
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "table")]
    pub model_kind: ModelKind,
    /// N-gram counts file or table JSON.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Merge table applied to constraint words.
    #[arg(long)]
    pub bpe: Option<PathBuf>,
    /// Seed for the random scorer and random insertion.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "default")]
    pub model_id: String,
}

impl ModelArgs {
    pub fn config(&self) -> ModelConfig {
        ModelConfig {
            id: self.model_id.clone(),
            kind: self.model_kind,
            path: self.model.clone(),
            vocab: self.vocab.clone(),
            bpe: self.bpe.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug, Clone)]
pub struct ParamArgs {
    /// Beam size per grid cell.
    #[arg(short = 'k', long = "beam", default_value_t = 10)]
    pub k: usize,
    /// Fixed maximum output length including EOS.
    #[arg(long, conflicts_with = "max_len_factor")]
    pub max_len: Option<usize>,
    /// Maximum output length as a multiple of the input length.
    #[arg(long, default_value_t = 2.0)]
    pub max_len_factor: f64,
    #[arg(long, default_value_t = 1)]
    pub n_best: usize,
    #[arg(long)]
    pub length_normalize: bool,
    /// Fill the cells of each timestep concurrently.
    #[arg(long)]
    pub parallel: bool,
    #[arg(long)]
    pub workers: Option<usize>,
}

impl ParamArgs {
    pub fn params(&self) -> Result<DecodeParams> {
        if self.k == 0 {
            bail!("beam size must be at least 1");
        }
        if self.n_best == 0 {
            bail!("--n-best must be at least 1");
        }
        Ok(DecodeParams {
            k: self.k,
            max_len: match self.max_len {
                Some(n) => MaxLen::Fixed(n),
                None => MaxLen::Factor(self.max_len_factor),
            },
            length_normalize: self.length_normalize,
            n_best: self.n_best,
            parallel: self.parallel || self.workers.is_some(),
            workers: self.workers,
        })
    }
}

#[derive(Args, Debug)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// One segment per line, either `source` or `id<TAB>source[<TAB>...]`;
    /// `-` reads standard input.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    /// JSON Lines constraints keyed by segment id.
    #[arg(long)]
    pub constraints: Option<PathBuf>,
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
    /// Segments decoded concurrently.
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Args, Debug)]
pub struct ExtractArgs {
    /// Source side, one segment per line.
    #[arg(long, requires = "tgt", conflicts_with = "corpus")]
    pub src: Option<PathBuf>,
    /// Target side, line-aligned with `--src`.
    #[arg(long)]
    pub tgt: Option<PathBuf>,
    /// Tab-separated `id, source, target` corpus instead of two files.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, default_value_t = 2)]
    pub n_min: usize,
    #[arg(long, default_value_t = 5)]
    pub n_max: usize,
    #[arg(long, default_value_t = 0.9)]
    pub min_npmi: f64,
    #[arg(long, default_value_t = 5)]
    pub min_count: u64,
    #[arg(long, default_value = "-")]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum BaselineArg {
    Random,
    Beginning,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub params: ParamArgs,
    /// Tab-separated `id, source, reference` corpus.
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, default_value_t = 4)]
    pub cycles: usize,
    #[arg(long, default_value = "strict")]
    pub mode: PickMode,
    /// Longest phrase the simulated editor picks.
    #[arg(long, default_value_t = 3)]
    pub max_n: usize,
    /// Compare constrained decoding with an insertion baseline instead.
    #[arg(long, value_enum, requires = "terms")]
    pub baseline: Option<BaselineArg>,
    /// Term table used with `--baseline`.
    #[arg(long)]
    pub terms: Option<PathBuf>,
    /// Write the full report, including every hypothesis, here.
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Subcommand, Debug)]
pub enum BpeCommand {
    /// Learn a merge table.
    Train {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long)]
        merges: usize,
        #[arg(long, default_value = "-")]
        output: PathBuf,
    },
    /// Segment whitespace-tokenized text line by line.
    Apply {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long, default_value = "-")]
        output: PathBuf,
    },
    /// Join segmented lines back into words.
    Detok {
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long, default_value = "-")]
        output: PathBuf,
    },
    /// Write the vocabulary file covering a corpus after segmentation.
    Vocab {
        #[arg(long)]
        table: PathBuf,
        #[arg(long, default_value = "-")]
        input: PathBuf,
        #[arg(long, default_value = "-")]
        output: PathBuf,
    },
}

#[derive(Args, Debug)]
pub struct TrainNgramArgs {
    /// Whitespace-tokenized training text.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub order: usize,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub vocab_output: PathBuf,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[arg(long, default_value = "data")]
    pub output: PathBuf,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
}

pub fn reader(path: &Path) -> Result<Box<dyn BufRead>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufReader::new(io::stdin())));
    }
    let f = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    Ok(Box::new(BufReader::new(f)))
}

pub fn writer(path: &Path) -> Result<Box<dyn Write>> {
    if path == Path::new("-") {
        return Ok(Box::new(BufWriter::new(io::stdout())));
    }
    let f = File::create(path).with_context(|| format!("cannot create {}", path.display()))?;
    Ok(Box::new(BufWriter::new(f)))
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut s = String::new();
    reader(path)?
        .read_to_string(&mut s)
        .with_context(|| format!("reading {}", path.display()))?;
    Ok(s.lines().map(str::to_string).collect())
}

fn in_pool<T: Send>(jobs: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match jobs {
        None => Ok(f()),
        Some(n) => Ok(rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()?
            .install(f)),
    }
}

/// Runs a batch command and returns the process exit status.
pub fn run(command: Command) -> Result<u8> {
    match command {
        Command::Decode(a) => decode(a),
        Command::ExtractTerms(a) => extract_terms(a).map(|_| 0),
        Command::Simulate(a) => simulate(a).map(|_| 0),
        Command::Bpe(c) => bpe(c).map(|_| 0),
        Command::TrainNgram(a) => train_ngram(a).map(|_| 0),
        Command::ToyData(a) => {
            toydata::write_bundle(&a.output, a.seed)?;
            Ok(0)
        }
        Command::Serve(a) => crate::service::serve_blocking(a).map(|_| 0),
    }
}

/// One line of `gbs decode` output.
#[derive(Debug, Serialize)]
pub struct DecodeLine {
    pub id: String,
    #[serde(flatten, skip_serializing_if = "Option::is_none")]
    pub output: Option<DecodeOutput>,
    #[serde(skip_serializing_if = "std::ops::Not::not")]
    pub failed: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub best_partial: Option<Vec<String>>,
}

pub fn decode_line(
    model: &Model,
    id: &str,
    source: &str,
    set: &ConstraintSet,
    params: &DecodeParams,
) -> DecodeLine {
    match model.decode(source, set, params) {
        Ok(out) => DecodeLine {
            id: id.to_string(),
            output: Some(out),
            failed: false,
            error: None,
            best_partial: None,
        },
        Err(e) => {
            let best_partial = match &e {
                DecodeError::NoFinishedHypothesis {
                    best_partial: Some(p),
                    ..
                } => Some(model.vocab().decode(&p.tokens)),
                _ => None,
            };
            DecodeLine {
                id: id.to_string(),
                output: None,
                failed: true,
                error: Some(e.to_string()),
                best_partial,
            }
        }
    }
}

/// Splits an input line into id and source.
fn parse_input_line(n: usize, line: &str) -> (String, String) {
    let mut cols = line.split('\t');
    match (cols.next(), cols.next()) {
        (Some(id), Some(src)) => (id.to_string(), src.trim().to_string()),
        _ => ((n + 1).to_string(), line.trim().to_string()),
    }
}

fn decode(a: DecodeArgs) -> Result<u8> {
    let params = a.params.params()?;
    let model = Model::load(&a.model.config())?;
    let segments: Vec<(String, String)> = read_lines(&a.input)?
        .iter()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| parse_input_line(n, l))
        .collect();
    let mut sets: HashMap<String, ConstraintSet> = HashMap::new();
    if let Some(path) = &a.constraints {
        let ids: std::collections::HashSet<&str> = segments.iter().map(|s| s.0.as_str()).collect();
        for rec in read_constraint_records(reader(path)?)
            .with_context(|| format!("reading {}", path.display()))?
        {
            if !ids.contains(rec.id.as_str()) {
                bail!("constraints given for unknown segment `{}`", rec.id);
            }
            let set = model
                .constraint_set(&rec.constraints, &rec.filters)
                .with_context(|| format!("segment `{}`", rec.id))?;
            sets.insert(rec.id.clone(), set);
        }
    }
    let empty = ConstraintSet::empty();
    let lines: Vec<DecodeLine> = in_pool(a.jobs, || {
        segments
            .par_iter()
            .map(|(id, src)| decode_line(&model, id, src, sets.get(id).unwrap_or(&empty), &params))
            .collect()
    })?;
    let mut out = writer(&a.output)?;
    let mut failed = 0;
    for l in &lines {
        failed += l.failed as usize;
        serde_json::to_writer(&mut out, l)?;
        writeln!(out)?;
    }
    out.flush()?;
    if failed > 0 {
        tracing::warn!(failed, total = lines.len(), "some segments did not decode");
        return Ok(PARTIAL_FAILURE);
    }
    Ok(0)
}

fn extract_terms(a: ExtractArgs) -> Result<()> {
    let split = |s: &str| s.split_whitespace().map(str::to_string).collect::<Vec<_>>();
    let pairs: Vec<(Vec<String>, Vec<String>)> = match (&a.corpus, &a.src, &a.tgt) {
        (Some(c), _, _) => read_corpus(reader(c)?)?
            .iter()
            .map(|s| (s.source_tokens(), s.reference_tokens()))
            .collect(),
        (None, Some(s), Some(t)) => {
            let (src, tgt) = (read_lines(s)?, read_lines(t)?);
            if src.len() != tgt.len() {
                bail!("{} source lines but {} target lines", src.len(), tgt.len());
            }
            src.iter()
                .zip(&tgt)
                .map(|(s, t)| (split(s), split(t)))
                .collect()
        }
        _ => bail!("give either --corpus or both --src and --tgt"),
    };
    let params = ExtractParams {
        n_min: a.n_min,
        n_max: a.n_max,
        min_npmi: a.min_npmi,
        min_count: a.min_count,
    };
    let table = extract_terminology(&pairs, &params)?;
    tracing::info!(
        entries = table.len(),
        segments = pairs.len(),
        "extracted terms"
    );
    let mut out = writer(&a.output)?;
    table.write_tsv(&mut out)?;
    out.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct CycleLine {
    cycle: usize,
    bleu: f64,
    delta: f64,
    constraints_added: usize,
    failures: usize,
}

#[derive(Serialize)]
struct BaselineLine<'a> {
    baseline: &'a str,
    segments: usize,
    segments_with_terms: usize,
    gbs_failures: usize,
    unconstrained_bleu: f64,
    gbs_bleu: f64,
    baseline_bleu: f64,
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let params = a.params.params()?;
    let model = Model::load(&a.model.config())?;
    let corpus = read_corpus(reader(&a.corpus)?)?;
    let mut out = io::stdout().lock();
    if let Some(kind) = a.baseline {
        let terms_path = a.terms.as_deref().context("--baseline needs --terms")?;
        let table = TermTable::read_tsv(reader(terms_path)?)?;
        let r = terminology_experiment(
            &model.scorer,
            &corpus,
            &table,
            &params,
            a.model.seed,
            a.jobs,
        )?;
        eprint!("{}", format_term_table(&r));
        let (name, sys) = match kind {
            BaselineArg::Random => ("random", &r.random),
            BaselineArg::Beginning => ("beginning", &r.beginning),
        };
        let line = BaselineLine {
            baseline: name,
            segments: r.segments,
            segments_with_terms: r.segments_with_terms,
            gbs_failures: r.gbs_failures,
            unconstrained_bleu: r.baseline.bleu,
            gbs_bleu: r.gbs.bleu,
            baseline_bleu: sys.bleu,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
        if let Some(p) = &a.report {
            serde_json::to_writer_pretty(writer(p)?, &r)?;
        }
        return Ok(());
    }
    let cfg = SimConfig {
        cycles: a.cycles,
        mode: a.mode,
        max_n: a.max_n,
        params,
        jobs: a.jobs,
    };
    let reports = simulate_pickrevise(&model.scorer, &corpus, &cfg)?;
    eprint!("{}", format_cycle_table(&reports));
    for r in &reports {
        let line = CycleLine {
            cycle: r.cycle,
            bleu: r.bleu,
            delta: r.delta,
            constraints_added: r.constraints_added,
            failures: r.failures,
        };
        serde_json::to_writer(&mut out, &line)?;
        writeln!(out)?;
    }
    if let Some(p) = &a.report {
        let mut w = writer(p)?;
        serde_json::to_writer_pretty(&mut w, &reports)?;
        w.flush()?;
    }
    Ok(())
}

fn bpe(c: BpeCommand) -> Result<()> {
    match c {
        BpeCommand::Train {
            input,
            merges,
            output,
        } => {
            let lines = read_lines(&input)?;
            let table = bpe_train(&lines, merges)?;
            if table.len() < merges {
                tracing::warn!(
                    learned = table.len(),
                    requested = merges,
                    "ran out of pairs to merge"
                );
            }
            let mut w = writer(&output)?;
            table.write_to(&mut w)?;
            w.flush()?;
        }
        BpeCommand::Apply {
            table,
            input,
            output,
        } => {
            let table = MergeTable::read_from(reader(&table)?)?;
            let mut w = writer(&output)?;
            for line in reader(&input)?.lines() {
                writeln!(w, "{}", bpe_apply_line(&table, &line?).join(" "))?;
            }
            w.flush()?;
        }
        BpeCommand::Detok { input, output } => {
            let mut w = writer(&output)?;
            for (i, line) in reader(&input)?.lines().enumerate() {
                let line = line?;
                let toks: Vec<&str> = line.split_whitespace().collect();
                let text = bpe_detok(&toks).with_context(|| format!("line {}", i + 1))?;
                writeln!(w, "{text}")?;
            }
            w.flush()?;
        }
        BpeCommand::Vocab {
            table,
            input,
            output,
        } => {
            let table = MergeTable::read_from(reader(&table)?)?;
            let lines = read_lines(&input)?;
            let vocab = Vocabulary::from_symbols(bpe_vocabulary(&table, &lines))?;
            let mut w = writer(&output)?;
            vocab.write_to(&mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn train_ngram(a: TrainNgramArgs) -> Result<()> {
    let lines = read_lines(&a.input)?;
    let model = NgramModel::train_on_text(&lines, a.order, a.alpha)?;
    let mut m = writer(&a.output)?;
    let mut v = writer(&a.vocab_output)?;
    model.save(&mut m, &mut v)?;
    m.flush()?;
    v.flush()?;
    Ok(())
}
