//! Whitespace + punctuation tokenizer with a closed vocabulary.
//!
//! Six special tokens occupy the reserved ids 0..=5; everything else is
//! assigned ids in decreasing frequency order when the vocabulary is built.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

pub const CLS: usize = 0;
pub const SEP: usize = 1;
pub const PAD: usize = 2;
pub const HMARK: usize = 3;
pub const TMARK: usize = 4;
pub const UNK: usize = 5;

pub const SPECIAL_TOKENS: [&str; 6] = ["[CLS]", "[SEP]", "[PAD]", "[HMARK]", "[TMARK]", "[UNK]"];

pub fn is_special(token: &str) -> bool {
    SPECIAL_TOKENS.contains(&token)
}

/// Lowercases, splits on whitespace, and splits ASCII punctuation off as
/// single-character tokens. Special tokens survive untouched when they stand
/// alone as a whitespace-delimited chunk.
///
/// `"Barack Obama (politician)"` becomes `barack obama ( politician )`.
pub fn tokenize(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for chunk in text.split_whitespace() {
        if is_special(chunk) {
            out.push(chunk.to_string());
            continue;
        }
        let mut word = String::new();
        for ch in chunk.to_lowercase().chars() {
            if ch.is_ascii_punctuation() {
                if !word.is_empty() {
                    out.push(std::mem::take(&mut word));
                }
                out.push(ch.to_string());
            } else {
                word.push(ch);
            }
        }
        if !word.is_empty() {
            out.push(word);
        }
    }
    out
}

/// Closed token vocabulary. Ids 0..=5 are the special tokens; regular tokens
/// start at id 6, ordered by descending count and then lexicographically so
/// the assignment is deterministic for a given corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocab {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocab {
    pub fn build<'a, I>(corpus: I, min_count: usize) -> Vocab
    where
        I: IntoIterator<Item = &'a str>,
    {
        let mut counts: HashMap<String, u64> = HashMap::new();
        for text in corpus {
            for tok in tokenize(text) {
                if !is_special(&tok) {
                    *counts.entry(tok).or_insert(0) += 1;
                }
            }
        }
        let mut ranked: Vec<(String, u64)> = counts
            .into_iter()
            .filter(|(_, c)| *c >= min_count.max(1) as u64)
            .collect();
        ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));

        let mut tokens: Vec<String> = SPECIAL_TOKENS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ranked.into_iter().map(|(t, _)| t));
        Vocab::from_token_list(tokens)
    }

    /// Rebuilds a vocabulary from its serialized token list (specials first).
    pub fn from_token_list(tokens: Vec<String>) -> Vocab {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocab { tokens, index }
    }

    /// Called after deserialization to restore the lookup map.
    pub fn rebuild_index(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Id for a token, or [UNK]'s id when out of vocabulary.
    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn token(&self, id: usize) -> &str {
        &self.tokens[id]
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn encode(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    /// Tokenize then encode in one step.
    pub fn encode_text(&self, text: &str) -> Vec<usize> {
        self.encode(&tokenize(text))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_punctuation_and_lowercases() {
        assert_eq!(
            tokenize("Barack Obama (politician)"),
            vec!["barack", "obama", "(", "politician", ")"]
        );
        assert_eq!(tokenize("a,b"), vec!["a", ",", "b"]);
    }

    #[test]
    fn empty_and_whitespace_only() {
        assert!(tokenize("").is_empty());
        assert!(tokenize("  \t\n ").is_empty());
    }

    #[test]
    fn special_tokens_stay_atomic() {
        assert_eq!(
            tokenize("[CLS] hello [TMARK] world [SEP]"),
            vec!["[CLS]", "hello", "[TMARK]", "world", "[SEP]"]
        );
    }

    #[test]
    fn vocab_reserves_special_ids() {
        let v = Vocab::build(["a b c"], 1);
        for (i, s) in SPECIAL_TOKENS.iter().enumerate() {
            assert_eq!(v.id(s), i);
            assert_eq!(v.token(i), *s);
        }
        assert_eq!(v.id("a"), 6);
    }

    #[test]
    fn vocab_orders_by_count_then_token() {
        // "b" occurs three times, "a" and "c" twice each.
        let v = Vocab::build(["b a c", "b a c", "b"], 1);
        assert_eq!(v.id("b"), 6);
        assert_eq!(v.id("a"), 7);
        assert_eq!(v.id("c"), 8);
    }

    #[test]
    fn min_count_filters_and_unk_maps() {
        let v = Vocab::build(["a a b"], 2);
        assert_eq!(v.id("a"), 6);
        assert_eq!(v.id("b"), UNK);
        assert_eq!(v.id("never-seen"), UNK);
        assert_eq!(v.len(), 7);
    }

    #[test]
    fn encode_round_trip() {
        let v = Vocab::build(["x y z"], 1);
        let ids = v.encode_text("x z q");
        assert_eq!(ids, vec![v.id("x"), v.id("z"), UNK]);
    }
}
