//! Token vocabulary for the tabular policy.
//!
//! The four tag tokens are atomic vocabulary items, so the policy learns the
//! tag grammar at the token level rather than character by character. Text is
//! produced by joining token texts with single spaces, which makes
//! tokenization the exact inverse of detokenization.

use std::collections::HashMap;

pub type TokenId = usize;

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// Default filler words for chain-of-thought content. The first few are
/// deliberately reflective-sounding so generated corpora exercise the marker
/// statistics the same way real reasoning traces do.
const DEFAULT_FILLERS: [&str; 4] = ["hmm", "wait", "so", "thus"];

#[derive(Clone, Debug)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, TokenId>,
    num_fillers: usize,
}

impl Vocabulary {
    /// Build a vocabulary with the four tags, digits 0-9, `num_fillers`
    /// filler words, and a trailing end-of-sequence token.
    pub fn new(num_fillers: usize) -> Self {
        let mut tokens: Vec<String> = vec![
            THINK_OPEN.to_string(),
            THINK_CLOSE.to_string(),
            ANSWER_OPEN.to_string(),
            ANSWER_CLOSE.to_string(),
        ];
        for d in 0..10u8 {
            tokens.push(d.to_string());
        }
        for i in 0..num_fillers {
            match DEFAULT_FILLERS.get(i) {
                Some(word) => tokens.push((*word).to_string()),
                None => tokens.push(format!("f{i}")),
            }
        }
        tokens.push("<eos>".to_string());
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Self {
            tokens,
            index,
            num_fillers,
        }
    }

    /// The default vocabulary: 4 tags + 10 digits + 4 fillers + eos (V = 19).
    pub fn standard() -> Self {
        Self::new(4)
    }

    pub fn size(&self) -> usize {
        self.tokens.len()
    }

    pub fn eos(&self) -> TokenId {
        self.tokens.len() - 1
    }

    pub fn num_fillers(&self) -> usize {
        self.num_fillers
    }

    pub fn think_open(&self) -> TokenId {
        0
    }

    pub fn think_close(&self) -> TokenId {
        1
    }

    pub fn answer_open(&self) -> TokenId {
        2
    }

    pub fn answer_close(&self) -> TokenId {
        3
    }

    pub fn digit(&self, d: u8) -> TokenId {
        debug_assert!(d < 10);
        4 + d as usize
    }

    pub fn digit_ids(&self) -> impl Iterator<Item = TokenId> {
        4..14
    }

    pub fn filler_ids(&self) -> impl Iterator<Item = TokenId> {
        14..14 + self.num_fillers
    }

    pub fn is_tag(&self, id: TokenId) -> bool {
        id < 4
    }

    pub fn text(&self, id: TokenId) -> &str {
        &self.tokens[id]
    }

    pub fn id_of(&self, text: &str) -> Option<TokenId> {
        self.index.get(text).copied()
    }

    /// Join token texts with single spaces. The eos token carries no text.
    pub fn detokenize(&self, tokens: &[TokenId]) -> String {
        let mut out = String::new();
        for &t in tokens {
            if t == self.eos() {
                continue;
            }
            if !out.is_empty() {
                out.push(' ');
            }
            out.push_str(&self.tokens[t]);
        }
        out
    }

    /// Whitespace-split the text and map each piece to its vocabulary id.
    /// Pieces that are not vocabulary items are skipped, so the count of a
    /// tokenized policy rollout always equals the number of emitted tokens.
    pub fn tokenize(&self, text: &str) -> Vec<TokenId> {
        text.split_whitespace()
            .filter_map(|w| self.index.get(w).copied())
            .collect()
    }
}
