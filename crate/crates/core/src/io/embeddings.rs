//! Word embedding tables in the plain-text `word v1 v2 ...` layout.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{read_file, write_file};
use crate::error::{Error, Result};
use crate::sentence::SentenceTokens;

/// Word vectors of uniform dimension, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    words: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingTable {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            words: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        }
    }

    /// Adds a word. Duplicates and dimension mismatches are rejected.
    pub fn insert(&mut self, word: &str, vector: Vec<f64>) -> Result<()> {
        if vector.len() != self.dim {
            return Err(Error::Data(format!(
                "word `{word}` has dimension {}, table has {}",
                vector.len(),
                self.dim
            )));
        }
        if word.is_empty() || word.chars().any(char::is_whitespace) {
            return Err(Error::Data(format!("invalid word {word:?}")));
        }
        if self.index.contains_key(word) {
            return Err(Error::Data(format!("duplicate word `{word}`")));
        }
        self.index.insert(word.to_string(), self.words.len());
        self.words.push(word.to_string());
        self.vectors.push(vector);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    pub fn get(&self, word: &str) -> Option<&[f64]> {
        self.index.get(word).map(|&i| self.vectors[i].as_slice())
    }

    /// Vector for `word`; unknown words map to zeros with a warning.
    pub fn lookup(&self, word: &str) -> Vec<f64> {
        match self.get(word) {
            Some(v) => v.to_vec(),
            None => {
                log::warn!("out-of-vocabulary word `{word}`, using zero vector");
                vec![0.0; self.dim]
            }
        }
    }

    pub fn sentence<S: AsRef<str>>(&self, words: &[S]) -> Result<SentenceTokens> {
        if words.is_empty() {
            return Err(Error::Data("empty sentence".into()));
        }
        let vecs: Vec<Vec<f64>> = words.iter().map(|w| self.lookup(w.as_ref())).collect();
        SentenceTokens::from_words(&vecs)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (w, v) in self.words.iter().zip(&self.vectors) {
            out.push_str(w);
            for x in v {
                write!(out, " {x}").expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

/// Parses the text layout. Blank lines are skipped.
pub fn parse_embeddings(text: &str, path: &Path) -> Result<EmbeddingTable> {
    let err = |line: usize, msg: String| Error::TextFormat {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut table: Option<EmbeddingTable> = None;
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut fields = line.split_whitespace();
        let Some(word) = fields.next() else { continue };
        let vector = fields
            .map(|f| {
                f.parse::<f64>()
                    .map_err(|_| err(lineno, format!("cannot parse `{f}` as a number")))
                    .and_then(|v| {
                        if v.is_finite() {
                            Ok(v)
                        } else {
                            Err(err(lineno, format!("non-finite value `{f}`")))
                        }
                    })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vector.is_empty() {
            return Err(err(lineno, format!("word `{word}` has no values")));
        }
        let t = table.get_or_insert_with(|| EmbeddingTable::new(vector.len()));
        if vector.len() != t.dim {
            return Err(err(
                lineno,
                format!("dimension {} differs from {} on earlier lines", vector.len(), t.dim),
            ));
        }
        t.insert(word, vector).map_err(|e| err(lineno, e.to_string()))?;
    }
    table.ok_or_else(|| err(0, "no embeddings found".into()))
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingTable> {
    let bytes = read_file(path)?;
    let text = String::from_utf8(bytes).map_err(|e| Error::TextFormat {
        path: path.to_path_buf(),
        line: 0,
        msg: format!("not utf-8: {e}"),
    })?;
    parse_embeddings(&text, path)
}

pub fn write_embeddings(path: &Path, table: &EmbeddingTable) -> Result<()> {
    write_file(path, table.to_text().as_bytes())
}
