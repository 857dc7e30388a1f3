use std::collections::{BTreeSet, HashMap};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use super::SubwordAlignment;

pub const UNK: &str = "[UNK]";
pub const CLS: &str = "[CLS]";
pub const SEP: &str = "[SEP]";
const CONTINUATION: &str = "##";

/// Greedy longest-match-first subword vocabulary.
#[derive(Debug, Serialize, Deserialize)]
pub struct WordPieceVocab {
    pieces: Vec<String>,
    #[serde(skip)]
    index: OnceLock<HashMap<String, usize>>,
}

impl Clone for WordPieceVocab {
    fn clone(&self) -> Self {
        WordPieceVocab::new(self.pieces.clone())
    }
}

impl PartialEq for WordPieceVocab {
    fn eq(&self, other: &Self) -> bool {
        self.pieces == other.pieces
    }
}

impl WordPieceVocab {
    /// Special pieces are prepended when missing.
    pub fn new(pieces: Vec<String>) -> Self {
        let mut all: Vec<String> = [UNK, CLS, SEP]
            .iter()
            .filter(|s| !pieces.iter().any(|p| p == *s))
            .map(|s| s.to_string())
            .collect();
        all.extend(pieces);
        WordPieceVocab {
            pieces: all,
            index: OnceLock::new(),
        }
    }

    /// Whole words plus every single character as both an initial and a
    /// continuation piece, so any word over the seen alphabet is representable.
    pub fn from_words<'a>(words: impl IntoIterator<Item = &'a str>) -> Self {
        let mut whole = BTreeSet::new();
        let mut chars = BTreeSet::new();
        for w in words {
            whole.insert(w.to_string());
            chars.extend(w.chars());
        }
        let mut pieces: Vec<String> = whole.into_iter().collect();
        for c in &chars {
            let s = c.to_string();
            if !pieces.contains(&s) {
                pieces.push(s);
            }
        }
        pieces.extend(chars.iter().map(|c| format!("{CONTINUATION}{c}")));
        Self::new(pieces)
    }

    fn index(&self) -> &HashMap<String, usize> {
        self.index
            .get_or_init(|| self.pieces.iter().enumerate().map(|(i, p)| (p.clone(), i)).collect())
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<usize> {
        self.index().get(piece).copied()
    }

    pub fn piece(&self, id: usize) -> &str {
        &self.pieces[id]
    }

    fn split_word(&self, word: &str) -> Vec<usize> {
        if let Some(id) = self.id(word) {
            return vec![id];
        }
        let chars: Vec<char> = word.chars().collect();
        let mut out = Vec::new();
        let mut start = 0;
        while start < chars.len() {
            let mut found = None;
            for end in (start + 1..=chars.len()).rev() {
                let body: String = chars[start..end].iter().collect();
                let cand = if start == 0 { body } else { format!("{CONTINUATION}{body}") };
                if let Some(id) = self.id(&cand) {
                    found = Some((id, end));
                    break;
                }
            }
            match found {
                Some((id, end)) => {
                    out.push(id);
                    start = end;
                }
                None => return vec![self.id(UNK).expect("UNK is always present")],
            }
        }
        out
    }

    /// Piece ids for `[CLS] words… [SEP]` and each word's piece rows.
    pub fn tokenize(&self, words: &[String]) -> (Vec<usize>, SubwordAlignment) {
        let mut ids = vec![self.id(CLS).expect("CLS is always present")];
        let mut pieces = Vec::with_capacity(words.len());
        for w in words {
            let split = self.split_word(w);
            pieces.push((ids.len()..ids.len() + split.len()).collect());
            ids.extend(split);
        }
        ids.push(self.id(SEP).expect("SEP is always present"));
        (ids, SubwordAlignment { pieces })
    }
}
