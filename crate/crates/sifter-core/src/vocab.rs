//! Token vocabulary: a stable token → id map with a reserved unknown slot.
//!
//! Ids are assignment order, with id 0 always the unknown token, so a
//! vocabulary serializes as a plain text file (one token per line, line
//! number = id) and reloads bit-identically. Lookup folds case; entries are
//! stored lowercased.

use std::collections::HashMap;
use std::io::Read as _;
use std::path::Path;

use crate::error::{Error, Result};

/// The reserved unknown token, always id 0.
pub const UNK: &str = "<unk>";

#[derive(Debug, Clone)]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocab {
    fn with_unk() -> Self {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        v.insert(UNK);
        v
    }

    fn insert(&mut self, token: &str) -> usize {
        let key = token.to_lowercase();
        if let Some(&id) = self.index.get(&key) {
            return id;
        }
        let id = self.tokens.len();
        self.tokens.push(key.clone());
        self.index.insert(key, id);
        id
    }

    /// Builds from token streams, ids in first-seen order after the unknown
    /// slot.
    pub fn build<'a, I, T>(docs: I) -> Self
    where
        I: IntoIterator<Item = T>,
        T: IntoIterator<Item = &'a String>,
    {
        let mut v = Vocab::with_unk();
        for doc in docs {
            for tok in doc {
                v.insert(tok);
            }
        }
        v
    }

    /// Id for a token, falling back to the unknown id 0.
    pub fn id(&self, token: &str) -> usize {
        self.index
            .get(&token.to_lowercase())
            .copied()
            .unwrap_or(0)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// One token per line, line number = id.
    pub fn to_lines(&self) -> String {
        let mut out = String::new();
        for t in &self.tokens {
            out.push_str(t);
            out.push('\n');
        }
        out
    }

    pub fn from_lines(text: &str) -> Result<Self> {
        let mut v = Vocab {
            tokens: Vec::new(),
            index: HashMap::new(),
        };
        for (i, line) in text.lines().enumerate() {
            let tok = line.trim();
            if tok.is_empty() {
                return Err(Error::invalid(format!("vocabulary line {} is empty", i + 1)));
            }
            if v.index.contains_key(tok) {
                return Err(Error::invalid(format!(
                    "vocabulary line {} duplicates \"{tok}\"",
                    i + 1
                )));
            }
            v.tokens.push(tok.to_string());
            v.index.insert(tok.to_string(), i);
        }
        if v.token(0) != Some(UNK) {
            return Err(Error::invalid(format!(
                "vocabulary must start with {UNK} at id 0"
            )));
        }
        Ok(v)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_lines()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut text = String::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_string(&mut text))
            .map_err(|e| Error::io(path, e))?;
        Vocab::from_lines(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn unknown_is_id_zero_and_case_folds() {
        let docs = [toks(&["Apple", "pie"]), toks(&["apple", "cart"])];
        let v = Vocab::build(docs.iter());
        assert_eq!(v.len(), 4); // <unk>, apple, pie, cart
        assert_eq!(v.id(UNK), 0);
        assert_eq!(v.id("APPLE"), 1);
        assert_eq!(v.id("pie"), 2);
        assert_eq!(v.id("never-seen"), 0);
        assert_eq!(v.ids(&toks(&["cart", "pie", "zzz"])), vec![3, 2, 0]);
    }

    #[test]
    fn line_round_trip_is_exact() {
        let docs = [toks(&["b", "a", "c"])];
        let v = Vocab::build(docs.iter());
        let text = v.to_lines();
        assert_eq!(text, "<unk>\nb\na\nc\n");
        let w = Vocab::from_lines(&text).unwrap();
        assert_eq!(w.len(), v.len());
        for id in 0..v.len() {
            assert_eq!(v.token(id), w.token(id));
        }
    }

    #[test]
    fn malformed_files_rejected() {
        assert!(Vocab::from_lines("a\nb\n").is_err(), "missing <unk>");
        assert!(Vocab::from_lines("<unk>\na\na\n").is_err(), "duplicate");
        assert!(Vocab::from_lines("<unk>\n\na\n").is_err(), "empty line");
    }
}
