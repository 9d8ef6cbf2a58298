//! Word-level vocabulary with fixed special-token ids.

use std::collections::HashMap;
use std::fs;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const PAD: TokenId = 0;
pub const UNK: TokenId = 1;
pub const MASK: TokenId = 2;
pub const INSERT: TokenId = 3;
pub const DUM: TokenId = 4;

/// Number of reserved ids; every id below this is a special token.
pub const NUM_SPECIAL: usize = 5;

pub const SPECIAL_TOKENS: [&str; NUM_SPECIAL] = ["[PAD]", "[UNK]", "[MASK]", "[INSERT]", "[DUM]"];

pub fn is_special(id: TokenId) -> bool {
    (id as usize) < NUM_SPECIAL
}

/// A sequence of vocabulary ids.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenSeq(pub Vec<TokenId>);

impl TokenSeq {
    pub fn new(ids: Vec<TokenId>) -> Self {
        TokenSeq(ids)
    }

    pub fn ids(&self) -> &[TokenId] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<TokenId> {
        self.0
    }

    /// Copy of the sequence with every `[DUM]` removed.
    pub fn without_dum(&self) -> TokenSeq {
        TokenSeq(self.0.iter().copied().filter(|&t| t != DUM).collect())
    }
}

impl Deref for TokenSeq {
    type Target = [TokenId];

    fn deref(&self) -> &[TokenId] {
        &self.0
    }
}

impl AsRef<[TokenId]> for TokenSeq {
    fn as_ref(&self) -> &[TokenId] {
        &self.0
    }
}

impl From<Vec<TokenId>> for TokenSeq {
    fn from(ids: Vec<TokenId>) -> Self {
        TokenSeq(ids)
    }
}

impl FromIterator<TokenId> for TokenSeq {
    fn from_iter<I: IntoIterator<Item = TokenId>>(iter: I) -> Self {
        TokenSeq(iter.into_iter().collect())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocabulary {
    id_to_token: Vec<String>,
    token_to_id: HashMap<String, TokenId>,
}

impl Vocabulary {
    /// Builds a vocabulary from raw text lines.
    ///
    /// Words are lowercased and split on whitespace. Words seen at least
    /// `min_count` times are kept, ordered by descending count and then
    /// lexicographically, after the five special tokens.
    pub fn build<I, S>(corpus: I, min_count: usize) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut counts: HashMap<String, usize> = HashMap::new();
        let mut lines = 0usize;
        for line in corpus {
            lines += 1;
            for word in line.as_ref().split_whitespace() {
                *counts.entry(word.to_lowercase()).or_default() += 1;
            }
        }
        if lines == 0 {
            return Err(Error::EmptyCorpus);
        }
        let min_count = min_count.max(1);
        let mut words: Vec<(String, usize)> = counts
            .into_iter()
            .filter(|(w, c)| *c >= min_count && !SPECIAL_TOKENS.contains(&w.as_str()))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        Self::from_words(words.into_iter().map(|(w, _)| w))
    }

    /// Creates a vocabulary from non-special words in id order.
    pub fn from_words<I: IntoIterator<Item = String>>(words: I) -> Result<Self> {
        let tokens = SPECIAL_TOKENS
            .iter()
            .map(|s| s.to_string())
            .chain(words)
            .collect();
        Self::from_tokens(tokens)
    }

    fn from_tokens(id_to_token: Vec<String>) -> Result<Self> {
        for (i, special) in SPECIAL_TOKENS.iter().enumerate() {
            if id_to_token.get(i).map(String::as_str) != Some(special) {
                return Err(Error::InvalidVocab(format!(
                    "expected {special} at id {i}"
                )));
            }
        }
        let mut token_to_id = HashMap::with_capacity(id_to_token.len());
        for (id, tok) in id_to_token.iter().enumerate() {
            if tok.is_empty() || tok.chars().any(char::is_whitespace) {
                return Err(Error::InvalidVocab(format!("bad token {tok:?} at id {id}")));
            }
            if token_to_id.insert(tok.clone(), id as TokenId).is_some() {
                return Err(Error::InvalidVocab(format!("duplicate token {tok:?}")));
            }
        }
        Ok(Vocabulary {
            id_to_token,
            token_to_id,
        })
    }

    /// Reads a vocabulary file: one token per line, line number = id.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        Self::from_tokens(text.lines().map(str::to_string).collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for tok in &self.id_to_token {
            out.push_str(tok);
            out.push('\n');
        }
        fs::write(path, out)?;
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn is_empty(&self) -> bool {
        self.id_to_token.is_empty()
    }

    /// Number of ordinary (non-special) tokens.
    pub fn num_regular(&self) -> usize {
        self.len() - NUM_SPECIAL
    }

    pub fn id(&self, token: &str) -> Option<TokenId> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: TokenId) -> Option<&str> {
        self.id_to_token.get(id as usize).map(String::as_str)
    }

    pub fn tokens(&self) -> &[String] {
        &self.id_to_token
    }

    /// Lowercases and splits on whitespace; unknown words become `[UNK]`.
    pub fn tokenize(&self, text: &str) -> TokenSeq {
        text.split_whitespace()
            .map(|w| {
                let w = w.to_lowercase();
                match self.token_to_id.get(&w) {
                    Some(&id) if !is_special(id) => id,
                    _ => UNK,
                }
            })
            .collect()
    }

    /// Joins tokens with single spaces, skipping `[PAD]` and `[DUM]`.
    pub fn detokenize(&self, ids: &[TokenId]) -> Result<String> {
        let mut words = Vec::with_capacity(ids.len());
        for &id in ids {
            let tok = self.token(id).ok_or(Error::IdOutOfRange {
                id,
                size: self.len(),
            })?;
            if id != PAD && id != DUM {
                words.push(tok);
            }
        }
        Ok(words.join(" "))
    }

    /// Checks that every id is in range.
    pub fn check(&self, ids: &[TokenId]) -> Result<()> {
        match ids.iter().find(|&&id| id as usize >= self.len()) {
            Some(&id) => Err(Error::IdOutOfRange {
                id,
                size: self.len(),
            }),
            None => Ok(()),
        }
    }
}

/// Lowercases and collapses whitespace.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
