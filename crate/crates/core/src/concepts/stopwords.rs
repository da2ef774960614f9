//! Stopword list, shipped as data so results are reproducible bit-for-bit.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{PipelineError, Result};

#[derive(Debug, Clone)]
pub struct Stopwords {
    words: HashSet<String>,
}

impl Stopwords {
    /// The embedded default English list.
    pub fn default_set() -> Self {
        Self::from_text(include_str!("../../data/stopwords.txt"))
    }

    /// Load a custom list: one word per line.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        Ok(Self::from_text(&text))
    }

    pub fn from_text(text: &str) -> Self {
        Stopwords {
            words: text
                .lines()
                .map(|l| l.trim().to_lowercase())
                .filter(|l| !l.is_empty())
                .collect(),
        }
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(word)
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// A token can carry content if it has at least one alphanumeric character
/// and is not a stopword. Punctuation tokens never qualify.
pub fn is_content_token(token: &str, stopwords: &Stopwords) -> bool {
    token.chars().any(|c| c.is_alphanumeric()) && !stopwords.contains(token)
}
