//! Generated corpora and table models for the bundled experiments.
//!
//! A toy "language pair": every source word has two target renderings, and
//! a set of planted multi-word terms translate as fixed target phrases. The
//! table model for a segment prefers a corrupted version of the reference
//! but keeps some probability on the reference itself, so adding reference
//! phrases as constraints steers it back towards the reference.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::corpus::{write_corpus, Segment};
use crate::scorer::{TableFile, TableInput, TableModel, TableRow};
use crate::terminology::{extract_terminology, ExtractParams, Phrase};
use crate::vocab::{Vocabulary, EOS_SURFACE};

const CONTEXT: usize = 2;
const HYP_WEIGHT: f64 = 0.6;
const REF_WEIGHT: f64 = 0.25;
const ROW_CAP: f64 = 0.95;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlantedTerm {
    pub source: Phrase,
    pub target: Phrase,
    /// Segments of the training corpus containing the pair.
    pub count: usize,
}

struct Lexicon {
    /// Source word to its two target renderings.
    words: Vec<(String, [String; 2])>,
    targets: Vec<String>,
    used: HashSet<String>,
}

fn syllable_word(rng: &mut ChaCha8Rng, onsets: &[&str], nuclei: &[&str], codas: &[&str]) -> String {
    let n = rng.random_range(2..=3);
    let mut w = String::new();
    for _ in 0..n {
        w.push_str(onsets.choose(rng).unwrap());
        w.push_str(nuclei.choose(rng).unwrap());
    }
    w.push_str(codas.choose(rng).unwrap());
    w
}

impl Lexicon {
    fn new(rng: &mut ChaCha8Rng, size: usize) -> Self {
        let mut lex = Self {
            words: Vec::new(),
            targets: Vec::new(),
            used: HashSet::new(),
        };
        for _ in 0..size {
            let s = lex.source_word(rng);
            let t = [lex.target_word(rng), lex.target_word(rng)];
            lex.targets.extend(t.iter().cloned());
            lex.words.push((s, t));
        }
        lex
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng, make: impl Fn(&mut ChaCha8Rng) -> String) -> String {
        loop {
            let w = make(rng);
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }

    fn source_word(&mut self, rng: &mut ChaCha8Rng) -> String {
        self.fresh(rng, |r| {
            syllable_word(
                r,
                &["k", "t", "m", "s", "r", "n", "h", "y"],
                &["a", "o", "u"],
                &["", "n", "k"],
            )
        })
    }

    fn target_word(&mut self, rng: &mut ChaCha8Rng) -> String {
        self.fresh(rng, |r| {
            syllable_word(
                r,
                &["b", "d", "f", "g", "l", "p", "v", "z"],
                &["e", "i", "a"],
                &["", "s", "r"],
            )
        })
    }

    /// Zipf-like word index.
    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let n = self.words.len() as f64;
        let u: f64 = rng.random();
        ((n + 1.0).powf(u) - 1.0).floor().min(n - 1.0) as usize
    }

    /// A source sentence of general words and its reference, with an
    /// occasional swap of neighbouring target words.
    fn sentence(&self, rng: &mut ChaCha8Rng, len: usize) -> (Phrase, Phrase) {
        let mut src = Vec::with_capacity(len);
        let mut tgt = Vec::with_capacity(len);
        for _ in 0..len {
            let (s, t) = &self.words[self.sample(rng)];
            src.push(s.clone());
            tgt.push(t[rng.random_range(0..2)].clone());
        }
        if len >= 2 && rng.random_bool(0.3) {
            let i = rng.random_range(0..len - 1);
            tgt.swap(i, i + 1);
        }
        (src, tgt)
    }

    fn term(&mut self, rng: &mut ChaCha8Rng) -> (Phrase, Phrase) {
        let sl = rng.random_range(2..=3);
        let tl = rng.random_range(2..=3);
        let s = (0..sl).map(|_| self.source_word(rng)).collect();
        let t: Phrase = (0..tl).map(|_| self.target_word(rng)).collect();
        self.targets.extend(t.iter().cloned());
        (s, t)
    }
}

/// Inserts `(src, tgt)` at random positions of a sentence pair.
fn plant(rng: &mut ChaCha8Rng, pair: &mut (Phrase, Phrase), term: &(Phrase, Phrase)) -> usize {
    let i = rng.random_range(0..=pair.0.len());
    let j = (i * pair.1.len()) / pair.0.len().max(1);
    pair.0.splice(i..i, term.0.iter().cloned());
    pair.1.splice(j..j, term.1.iter().cloned());
    j
}

/// A corrupted copy of `reference`. Positions with `fragile` set are always
/// replaced; others are replaced, dropped or doubled with small
/// probabilities.
fn corrupt(rng: &mut ChaCha8Rng, lex: &Lexicon, reference: &[String], fragile: &[bool]) -> Phrase {
    let alt: BTreeMap<&str, &str> = lex
        .words
        .iter()
        .flat_map(|(_, t)| {
            [
                (t[0].as_str(), t[1].as_str()),
                (t[1].as_str(), t[0].as_str()),
            ]
        })
        .collect();
    let mut out = Vec::with_capacity(reference.len());
    for (tok, &f) in reference.iter().zip(fragile) {
        let x: f64 = rng.random();
        if f || x < 0.25 {
            let wrong = match alt.get(tok.as_str()) {
                Some(a) if rng.random_bool(0.6) => a.to_string(),
                _ => lex.targets.choose(rng).unwrap().clone(),
            };
            out.push(wrong);
        } else if x < 0.33 {
            continue;
        } else {
            out.push(tok.clone());
            if x > 0.97 {
                out.push(lex.targets.choose(rng).unwrap().clone());
            }
        }
    }
    if out.is_empty() {
        out.push(reference[0].clone());
    }
    out
}

/// Sparse rows for one input: most mass on `preferred`, some on
/// `reference`, keyed by the previous two tokens of each path.
fn rows_for(preferred: &[String], reference: &[String]) -> Vec<TableRow> {
    let mut rows: BTreeMap<Vec<String>, BTreeMap<String, f64>> = BTreeMap::new();
    for (path, w) in [(preferred, HYP_WEIGHT), (reference, REF_WEIGHT)] {
        for j in 0..=path.len() {
            let history = path[j.saturating_sub(CONTEXT)..j].to_vec();
            let next = path.get(j).map_or(EOS_SURFACE, String::as_str);
            *rows
                .entry(history)
                .or_default()
                .entry(next.to_string())
                .or_default() += w;
        }
    }
    rows.into_iter()
        .map(|(history, mut probs)| {
            let total: f64 = probs.values().sum();
            if total > ROW_CAP {
                probs.values_mut().for_each(|p| *p *= ROW_CAP / total);
            }
            TableRow { history, probs }
        })
        .collect()
}

fn table_model(lex: &Lexicon, inputs: Vec<TableInput>) -> TableModel {
    let symbols: BTreeSet<&String> = lex.targets.iter().collect();
    let vocab = Vocabulary::from_symbols(symbols).expect("generated words are not reserved");
    TableModel::from_file(TableFile {
        vocab,
        context: CONTEXT,
        inputs,
    })
    .expect("generated rows are valid")
}

fn segment_id(prefix: &str, i: usize) -> String {
    format!("{prefix}{:04}", i + 1)
}

/// Distinct source sentences with references.
fn sentences(
    rng: &mut ChaCha8Rng,
    lex: &Lexicon,
    n: usize,
    lens: std::ops::RangeInclusive<usize>,
) -> Vec<(Phrase, Phrase)> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let len = rng.random_range(lens.clone());
        let pair = lex.sentence(rng, len);
        if seen.insert(pair.0.clone()) {
            out.push(pair);
        }
    }
    out
}

/// The editing-simulation corpus and its table model.
pub fn pickrevise_data(seed: u64, segments: usize) -> (Vec<Segment>, TableModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lex = Lexicon::new(&mut rng, 150);
    let pairs = sentences(&mut rng, &lex, segments, 5..=12);
    let mut corpus = Vec::with_capacity(segments);
    let mut inputs = Vec::with_capacity(segments);
    for (i, (src, reference)) in pairs.into_iter().enumerate() {
        let hyp = corrupt(&mut rng, &lex, &reference, &vec![false; reference.len()]);
        let source = src.join(" ");
        inputs.push(TableInput {
            source: source.clone(),
            rows: rows_for(&hyp, &reference),
        });
        corpus.push(Segment::new(
            segment_id("pr", i),
            source,
            reference.join(" "),
        ));
    }
    (corpus, table_model(&lex, inputs))
}

/// A parallel corpus with planted term pairs: `strong` pairs occurring
/// 6–20 times and `weak` pairs occurring 3–4 times.
pub fn planted_corpus(
    seed: u64,
    segments: usize,
    strong: usize,
    weak: usize,
) -> (Vec<(Phrase, Phrase)>, Vec<PlantedTerm>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lex = Lexicon::new(&mut rng, 150);
    let (pairs, planted) = planted_with(&mut rng, &mut lex, segments, strong, weak);
    (pairs, planted)
}

fn planted_with(
    rng: &mut ChaCha8Rng,
    lex: &mut Lexicon,
    segments: usize,
    strong: usize,
    weak: usize,
) -> (Vec<(Phrase, Phrase)>, Vec<PlantedTerm>) {
    let mut pairs = sentences(rng, lex, segments, 4..=10);
    let mut planted = Vec::new();
    let mut slots: Vec<usize> = (0..segments).collect();
    slots.shuffle(rng);
    let mut slots = slots.into_iter();
    for i in 0..strong + weak {
        let term = lex.term(rng);
        let count = if i < strong {
            rng.random_range(6..=20)
        } else {
            rng.random_range(3..=4)
        };
        let mut placed = 0;
        for idx in slots.by_ref().take(count) {
            plant(rng, &mut pairs[idx], &term);
            placed += 1;
        }
        planted.push(PlantedTerm {
            source: term.0,
            target: term.1,
            count: placed,
        });
    }
    (pairs, planted)
}

/// Data for the terminology comparison.
pub struct TermData {
    pub train: Vec<Segment>,
    pub test: Vec<Segment>,
    pub model: TableModel,
    pub planted: Vec<PlantedTerm>,
}

/// Training pairs with planted terms, plus test segments where about two
/// thirds contain a strong term. The test model never produces term
/// translations on its own.
pub fn terminology_data(seed: u64, train_segments: usize, test_segments: usize) -> TermData {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut lex = Lexicon::new(&mut rng, 150);
    let (train_pairs, planted) = planted_with(&mut rng, &mut lex, train_segments, 15, 5);
    let strong: Vec<(Phrase, Phrase)> = planted
        .iter()
        .filter(|p| p.count >= 5)
        .map(|p| (p.source.clone(), p.target.clone()))
        .collect();
    let train_sources: HashSet<&Phrase> = train_pairs.iter().map(|p| &p.0).collect();
    let mut seen = HashSet::new();
    let mut test = Vec::with_capacity(test_segments);
    let mut inputs = Vec::with_capacity(test_segments);
    while test.len() < test_segments {
        let len = rng.random_range(5..=10);
        let mut pair = lex.sentence(&mut rng, len);
        let mut fragile = vec![false; pair.1.len()];
        if rng.random_bool(0.67) {
            let term = strong.choose(&mut rng).unwrap();
            let j = plant(&mut rng, &mut pair, term);
            fragile.splice(j..j, std::iter::repeat_n(true, term.1.len()));
        }
        if train_sources.contains(&pair.0) || !seen.insert(pair.0.clone()) {
            continue;
        }
        let hyp = corrupt(&mut rng, &lex, &pair.1, &fragile);
        let source = pair.0.join(" ");
        inputs.push(TableInput {
            source: source.clone(),
            rows: rows_for(&hyp, &pair.1),
        });
        test.push(Segment::new(
            segment_id("te", test.len()),
            source,
            pair.1.join(" "),
        ));
    }
    let train = train_pairs
        .into_iter()
        .enumerate()
        .map(|(i, (s, t))| Segment::new(segment_id("tr", i), s.join(" "), t.join(" ")))
        .collect();
    TermData {
        train,
        test,
        model: table_model(&lex, inputs),
        planted,
    }
}

/// Writes the bundled data set under `dir`:
///
/// ```text
/// pickrevise/corpus.tsv  pickrevise/model.json
/// terminology/train.tsv  terminology/test.tsv  terminology/model.json
/// terminology/terms.tsv  terminology/planted.json
/// ```
pub fn write_bundle(dir: &Path, seed: u64) -> io::Result<()> {
    let json_err = |e: crate::scorer::TableError| io::Error::other(e.to_string());
    let pr = dir.join("pickrevise");
    fs::create_dir_all(&pr)?;
    let (corpus, model) = pickrevise_data(seed, 200);
    write_corpus(fs::File::create(pr.join("corpus.tsv"))?, &corpus)?;
    fs::write(pr.join("model.json"), model.to_json().map_err(json_err)?)?;

    let td = dir.join("terminology");
    fs::create_dir_all(&td)?;
    let data = terminology_data(seed.wrapping_add(1), 1000, 200);
    write_corpus(fs::File::create(td.join("train.tsv"))?, &data.train)?;
    write_corpus(fs::File::create(td.join("test.tsv"))?, &data.test)?;
    fs::write(
        td.join("model.json"),
        data.model.to_json().map_err(json_err)?,
    )?;
    let pairs: Vec<(Phrase, Phrase)> = data
        .train
        .iter()
        .map(|s| (s.source_tokens(), s.reference_tokens()))
        .collect();
    let table = extract_terminology(&pairs, &ExtractParams::default())
        .map_err(|e| io::Error::other(e.to_string()))?;
    table.write_tsv(fs::File::create(td.join("terms.tsv"))?)?;
    fs::write(
        td.join("planted.json"),
        serde_json::to_string_pretty(&data.planted).map_err(io::Error::other)?,
    )?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic() {
        let (a, _) = pickrevise_data(3, 20);
        let (b, _) = pickrevise_data(3, 20);
        assert_eq!(a, b);
        assert_eq!(planted_corpus(4, 100, 3, 2), planted_corpus(4, 100, 3, 2));
    }

    #[test]
    fn references_are_in_the_model_vocabulary() {
        let (corpus, model) = pickrevise_data(1, 30);
        for s in &corpus {
            assert!(model.file().vocab.encode(&s.reference_tokens()).is_ok());
        }
        let d = terminology_data(2, 200, 30);
        for s in &d.test {
            assert!(d.model.file().vocab.encode(&s.reference_tokens()).is_ok());
        }
    }

    #[test]
    fn planted_counts() {
        let (pairs, planted) = planted_corpus(5, 300, 4, 2);
        for p in &planted {
            let n = pairs
                .iter()
                .filter(|(s, t)| {
                    s.windows(p.source.len()).any(|w| w == p.source.as_slice())
                        && t.windows(p.target.len()).any(|w| w == p.target.as_slice())
                })
                .count();
            assert_eq!(n, p.count);
        }
    }
}
