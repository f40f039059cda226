//! Interned output symbols.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Surface form of the end-of-sequence symbol.
///
/// Whitespace tokenization can in principle produce this string, so
/// [`Vocabulary::intern`] and [`Vocabulary::lookup`] refuse it; the only way
/// to obtain the id is [`Vocabulary::eos`].
pub const EOS_SURFACE: &str = "</s>";

/// Dense integer id of an output symbol.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenId(pub u32);

impl TokenId {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for TokenId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum VocabError {
    #[error("token `{0}` is not in the vocabulary")]
    Unknown(String),
    #[error("`{EOS_SURFACE}` is reserved for the end-of-sequence symbol")]
    Reserved,
    #[error("vocabulary line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Bijection between surface strings and dense ids. Id 0 is always EOS.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Vocabulary {
    symbols: Vec<String>,
    index: HashMap<String, TokenId>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Self::new()
    }
}

impl Vocabulary {
    /// A vocabulary holding only EOS.
    pub fn new() -> Self {
        let mut index = HashMap::new();
        index.insert(EOS_SURFACE.to_string(), TokenId(0));
        Self {
            symbols: vec![EOS_SURFACE.to_string()],
            index,
        }
    }

    /// Builds a vocabulary from surface forms, skipping duplicates.
    pub fn from_symbols<I, S>(symbols: I) -> Result<Self, VocabError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab = Self::new();
        for s in symbols {
            vocab.intern(s.as_ref())?;
        }
        Ok(vocab)
    }

    #[inline]
    pub fn eos(&self) -> TokenId {
        TokenId(0)
    }

    /// Number of symbols, EOS included.
    #[inline]
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Returns the id of `surface`, adding it if absent.
    pub fn intern(&mut self, surface: &str) -> Result<TokenId, VocabError> {
        if surface == EOS_SURFACE {
            return Err(VocabError::Reserved);
        }
        if let Some(&id) = self.index.get(surface) {
            return Ok(id);
        }
        let id = TokenId(self.symbols.len() as u32);
        self.symbols.push(surface.to_string());
        self.index.insert(surface.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, surface: &str) -> Result<TokenId, VocabError> {
        if surface == EOS_SURFACE {
            return Err(VocabError::Reserved);
        }
        self.index
            .get(surface)
            .copied()
            .ok_or_else(|| VocabError::Unknown(surface.to_string()))
    }

    pub fn contains(&self, surface: &str) -> bool {
        surface != EOS_SURFACE && self.index.contains_key(surface)
    }

    /// Surface form of `id`. Panics on an out-of-range id.
    pub fn surface(&self, id: TokenId) -> &str {
        &self.symbols[id.index()]
    }

    pub fn get(&self, id: TokenId) -> Option<&str> {
        self.symbols.get(id.index()).map(String::as_str)
    }

    pub fn ids(&self) -> impl Iterator<Item = TokenId> {
        (0..self.symbols.len() as u32).map(TokenId)
    }

    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<Vec<TokenId>, VocabError> {
        tokens.iter().map(|t| self.lookup(t.as_ref())).collect()
    }

    pub fn decode(&self, ids: &[TokenId]) -> Vec<String> {
        ids.iter().map(|&id| self.surface(id).to_string()).collect()
    }

    /// Writes `id<TAB>surface` lines.
    pub fn write_to<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (id, s) in self.symbols.iter().enumerate() {
            writeln!(out, "{id}\t{s}")?;
        }
        Ok(())
    }

    /// Reads `id<TAB>surface` lines. Ids must be dense, start at 0 and
    /// list EOS first.
    pub fn read_from<R: BufRead>(input: R) -> Result<Self, VocabError> {
        let mut vocab = Self::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.is_empty() {
                continue;
            }
            let (id, surface) = line.split_once('\t').ok_or_else(|| VocabError::Parse {
                line: lineno,
                message: "expected `id<TAB>surface`".into(),
            })?;
            let id: usize = id.parse().map_err(|_| VocabError::Parse {
                line: lineno,
                message: format!("bad id `{id}`"),
            })?;
            if id == 0 {
                if surface != EOS_SURFACE {
                    return Err(VocabError::Parse {
                        line: lineno,
                        message: format!("id 0 must be `{EOS_SURFACE}`"),
                    });
                }
                continue;
            }
            if id != vocab.len() || vocab.contains(surface) {
                return Err(VocabError::Parse {
                    line: lineno,
                    message: format!("id {id} is out of order or `{surface}` is duplicated"),
                });
            }
            vocab.intern(surface).map_err(|e| VocabError::Parse {
                line: lineno,
                message: e.to_string(),
            })?;
        }
        Ok(vocab)
    }
}

impl Serialize for Vocabulary {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.symbols[1..].serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Vocabulary {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let symbols = Vec::<String>::deserialize(deserializer)?;
        let mut vocab = Self::new();
        for s in &symbols {
            if vocab.contains(s) {
                return Err(serde::de::Error::custom(format!("duplicate symbol `{s}`")));
            }
            vocab.intern(s).map_err(serde::de::Error::custom)?;
        }
        Ok(vocab)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eos_is_reserved() {
        let mut v = Vocabulary::new();
        assert_eq!(v.surface(v.eos()), EOS_SURFACE);
        assert!(matches!(v.intern(EOS_SURFACE), Err(VocabError::Reserved)));
        assert!(matches!(v.lookup(EOS_SURFACE), Err(VocabError::Reserved)));
    }

    #[test]
    fn bijection() {
        let v = Vocabulary::from_symbols(["a", "b", "a", "c"]).unwrap();
        assert_eq!(v.len(), 4);
        for id in v.ids() {
            if id == v.eos() {
                continue;
            }
            assert_eq!(v.lookup(v.surface(id)).unwrap(), id);
        }
    }

    #[test]
    fn file_round_trip() {
        let v = Vocabulary::from_symbols(["x", "y z", "ü"]).unwrap();
        let mut buf = Vec::new();
        v.write_to(&mut buf).unwrap();
        let back = Vocabulary::read_from(&buf[..]).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn rejects_gaps() {
        let err = Vocabulary::read_from("0\t</s>\n2\ta\n".as_bytes()).unwrap_err();
        assert!(matches!(err, VocabError::Parse { line: 2, .. }));
    }
}
