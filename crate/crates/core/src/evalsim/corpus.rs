//! Tab-separated evaluation corpora: `id<TAB>source<TAB>reference`.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("corpus line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub id: String,
    pub source: String,
    pub reference: String,
}

impl Segment {
    pub fn new(
        id: impl Into<String>,
        source: impl Into<String>,
        reference: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            source: source.into(),
            reference: reference.into(),
        }
    }

    pub fn source_tokens(&self) -> Vec<String> {
        tokenize(&self.source)
    }

    pub fn reference_tokens(&self) -> Vec<String> {
        tokenize(&self.reference)
    }
}

pub fn tokenize(s: &str) -> Vec<String> {
    s.split_whitespace().map(str::to_string).collect()
}

pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<Segment>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(CorpusError::Parse {
                line: i + 1,
                message: format!("expected 3 tab-separated columns, found {}", cols.len()),
            });
        }
        out.push(Segment::new(cols[0], cols[1].trim(), cols[2].trim()));
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(mut w: W, corpus: &[Segment]) -> std::io::Result<()> {
    for s in corpus {
        writeln!(w, "{}\t{}\t{}", s.id, s.source, s.reference)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let c = vec![Segment::new("1", "a b", "x y"), Segment::new("2", "c", "z")];
        let mut buf = Vec::new();
        write_corpus(&mut buf, &c).unwrap();
        assert_eq!(read_corpus(&buf[..]).unwrap(), c);
        assert!(read_corpus(&b"1\tonly two\n"[..]).is_err());
    }
}
