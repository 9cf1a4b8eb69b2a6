//! Word-level tokenizer and frequency-capped vocabulary.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type TokenId = u32;

pub const BOS: &str = "<bos>";
pub const EOS: &str = "<eos>";
pub const UNK: &str = "<unk>";

pub const BOS_ID: TokenId = 0;
pub const EOS_ID: TokenId = 1;
pub const UNK_ID: TokenId = 2;

/// Default vocabulary cap, reserved tokens included.
pub const DEFAULT_VOCAB_SIZE: usize = 8192;

/// Lowercases `text` and splits it into alphanumeric words and single
/// punctuation marks. Whitespace only separates.
pub fn split_words(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut word = String::new();
    for ch in text.chars() {
        if ch.is_alphanumeric() {
            word.extend(ch.to_lowercase());
            continue;
        }
        if !word.is_empty() {
            out.push(std::mem::take(&mut word));
        }
        if !ch.is_whitespace() {
            out.push(ch.to_string());
        }
    }
    if !word.is_empty() {
        out.push(word);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    ids: HashMap<String, TokenId>,
}

impl TryFrom<Vec<String>> for Vocabulary {
    type Error = Error;

    fn try_from(tokens: Vec<String>) -> Result<Self> {
        Vocabulary::from_tokens(tokens)
    }
}

impl From<Vocabulary> for Vec<String> {
    fn from(v: Vocabulary) -> Self {
        v.tokens
    }
}

impl Vocabulary {
    /// Builds a vocabulary from the most frequent words of `texts`, keeping at
    /// most `max_size` entries including the reserved tokens. Frequency ties
    /// are broken alphabetically.
    pub fn build<S: AsRef<str>>(texts: impl IntoIterator<Item = S>, max_size: usize) -> Self {
        let mut freq: HashMap<String, u64> = HashMap::new();
        for t in texts {
            for w in split_words(t.as_ref()) {
                *freq.entry(w).or_default() += 1;
            }
        }
        let mut words: Vec<(String, u64)> = freq
            .into_iter()
            .filter(|(w, _)| ![BOS, EOS, UNK].contains(&w.as_str()))
            .collect();
        words.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let keep = max_size.saturating_sub(3);
        let tokens = [BOS, EOS, UNK]
            .into_iter()
            .map(str::to_owned)
            .chain(words.into_iter().take(keep).map(|(w, _)| w))
            .collect();
        Self::from_tokens(tokens).expect("reserved tokens are present and words are unique")
    }

    /// Rebuilds a vocabulary from its ordered token list.
    pub fn from_tokens(tokens: Vec<String>) -> Result<Self> {
        if tokens.len() < 3 || tokens[0] != BOS || tokens[1] != EOS || tokens[2] != UNK {
            return Err(Error::Snapshot(
                "vocabulary must start with <bos>, <eos>, <unk>".into(),
            ));
        }
        let mut ids = HashMap::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i as TokenId).is_some() {
                return Err(Error::Snapshot(format!("token `{t}` appears twice")));
            }
        }
        Ok(Self { tokens, ids })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> TokenId {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: TokenId) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Ids of `text` without boundary markers.
    pub fn encode(&self, text: &str) -> Vec<TokenId> {
        split_words(text).iter().map(|w| self.id(w)).collect()
    }

    /// `<bos>`, the ids of `text`, `<eos>`.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        let mut ids = vec![BOS_ID];
        ids.extend(self.encode(text));
        ids.push(EOS_ID);
        ids
    }

    /// Joins tokens into text, dropping `<bos>`/`<eos>` and attaching
    /// punctuation to the preceding word.
    pub fn decode(&self, ids: &[TokenId]) -> String {
        let mut out = String::new();
        for &id in ids {
            if id == BOS_ID || id == EOS_ID {
                continue;
            }
            let t = self.token(id);
            let is_punct = t.chars().all(|c| !c.is_alphanumeric()) && t != UNK;
            if !out.is_empty() && !is_punct {
                out.push(' ');
            }
            out.push_str(t);
        }
        out
    }
}
