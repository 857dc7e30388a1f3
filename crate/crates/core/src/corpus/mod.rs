//! Sentence-level data model for event extraction corpora, plus ingestion from
//! BioNLP standoff and JSON-lines files.

mod jsonl;
mod pairs;
mod standoff;
mod tags;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::depgraph::DepEdge;
use crate::error::{BeeError, Result};

pub use jsonl::{load_json_corpus, parse_json_corpus, save_json_corpus, sentence_to_json, write_json_corpus};
pub use pairs::{generate_candidate_pairs, CandidatePair, NONE_ROLE};
pub use standoff::{
    default_tokenize, load_standoff, load_standoff_dir, load_standoff_files, load_standoff_with,
    write_standoff, StandoffLoad, StandoffOptions,
};
pub use tags::{encode_tags, LabelInventory, Tag, TagEncoding, TagSequence};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub index: usize,
    pub text: String,
    pub char_start: usize,
    pub char_end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MentionKind {
    Entity,
    Trigger,
}

impl fmt::Display for MentionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MentionKind::Entity => f.write_str("entity"),
            MentionKind::Trigger => f.write_str("trigger"),
        }
    }
}

/// Inclusive token range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        debug_assert!(start <= end);
        Span { start, end }
    }

    pub fn token_count(&self) -> usize {
        self.end - self.start + 1
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    pub fn tokens(&self) -> std::ops::RangeInclusive<usize> {
        self.start..=self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mention {
    pub id: String,
    pub kind: MentionKind,
    pub label: String,
    pub span: Span,
}

impl Mention {
    pub fn new(id: impl Into<String>, kind: MentionKind, label: impl Into<String>, span: Span) -> Self {
        Mention {
            id: id.into(),
            kind,
            label: label.into(),
            span,
        }
    }

    pub fn is_trigger(&self) -> bool {
        self.kind == MentionKind::Trigger
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventArg {
    pub role: String,
    pub arg_id: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStructure {
    pub trigger_id: String,
    pub args: Vec<EventArg>,
}

impl EventStructure {
    pub fn new(trigger_id: impl Into<String>) -> Self {
        EventStructure {
            trigger_id: trigger_id.into(),
            args: Vec::new(),
        }
    }

    pub fn with_arg(mut self, role: impl Into<String>, arg_id: impl Into<String>) -> Self {
        self.args.push(EventArg {
            role: role.into(),
            arg_id: arg_id.into(),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Sentence {
    pub doc_id: String,
    pub tokens: Vec<Token>,
    pub mentions: Vec<Mention>,
    pub events: Vec<EventStructure>,
    /// Dependency arcs when the corpus carries its parse inline.
    pub dep_edges: Option<Vec<DepEdge>>,
}

impl Sentence {
    /// Tokens with synthetic character offsets (single-space separated).
    pub fn from_words<S: AsRef<str>>(doc_id: impl Into<String>, words: &[S]) -> Self {
        let mut tokens = Vec::with_capacity(words.len());
        let mut offset = 0;
        for (index, w) in words.iter().enumerate() {
            let len = w.as_ref().chars().count().max(1);
            tokens.push(Token {
                index,
                text: w.as_ref().to_string(),
                char_start: offset,
                char_end: offset + len,
            });
            offset += len + 1;
        }
        Sentence {
            doc_id: doc_id.into(),
            tokens,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn words(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    pub fn mention(&self, id: &str) -> Option<&Mention> {
        self.mentions.iter().find(|m| m.id == id)
    }

    pub fn triggers(&self) -> impl Iterator<Item = &Mention> {
        self.mentions.iter().filter(|m| m.kind == MentionKind::Trigger)
    }

    pub fn entities(&self) -> impl Iterator<Item = &Mention> {
        self.mentions.iter().filter(|m| m.kind == MentionKind::Entity)
    }

    /// Directed trigger→trigger edges induced by nested event arguments.
    pub fn nesting_edges(&self) -> Vec<(String, String)> {
        let triggers: HashSet<&str> = self.triggers().map(|m| m.id.as_str()).collect();
        let mut edges = Vec::new();
        for ev in &self.events {
            for arg in &ev.args {
                if triggers.contains(arg.arg_id.as_str()) {
                    edges.push((ev.trigger_id.clone(), arg.arg_id.clone()));
                }
            }
        }
        edges
    }

    pub fn nesting_is_acyclic(&self) -> bool {
        is_acyclic(&self.nesting_edges())
    }

    /// Checks the structural invariants shared by every loader.
    pub fn validate(&self) -> Result<()> {
        for (i, t) in self.tokens.iter().enumerate() {
            if t.index != i {
                return Err(BeeError::Schema(format!("token {i} carries index {}", t.index)));
            }
            if t.char_start >= t.char_end {
                return Err(BeeError::Schema(format!(
                    "token {i} has empty character span {}..{}",
                    t.char_start, t.char_end
                )));
            }
            if i > 0 && self.tokens[i - 1].char_end > t.char_start {
                return Err(BeeError::Schema(format!("token {i} overlaps or precedes token {}", i - 1)));
            }
        }
        let mut ids = HashSet::new();
        for m in &self.mentions {
            if !ids.insert(m.id.as_str()) {
                return Err(BeeError::Schema(format!("duplicate mention id {}", m.id)));
            }
            if m.span.start > m.span.end || m.span.end >= self.tokens.len() {
                return Err(BeeError::Schema(format!(
                    "mention {} span ({}, {}) outside sentence of {} tokens",
                    m.id,
                    m.span.start,
                    m.span.end,
                    self.tokens.len()
                )));
            }
        }
        for ev in &self.events {
            match self.mention(&ev.trigger_id) {
                Some(m) if m.is_trigger() => {}
                Some(_) => {
                    return Err(BeeError::Reference(format!(
                        "event trigger {} is not a trigger mention",
                        ev.trigger_id
                    )))
                }
                None => return Err(BeeError::Reference(format!("unknown event trigger {}", ev.trigger_id))),
            }
            for arg in &ev.args {
                if self.mention(&arg.arg_id).is_none() {
                    return Err(BeeError::Reference(format!(
                        "event on {} has dangling argument {}",
                        ev.trigger_id, arg.arg_id
                    )));
                }
            }
        }
        if let Some(edges) = &self.dep_edges {
            for e in edges {
                e.check(self.tokens.len())?;
            }
        }
        if !self.nesting_is_acyclic() {
            return Err(BeeError::Schema(format!(
                "document {}: nested events form a cycle",
                self.doc_id
            )));
        }
        Ok(())
    }
}

/// Cycle test on a directed edge list (self-loops count as cycles).
pub(crate) fn is_acyclic(edges: &[(String, String)]) -> bool {
    let mut adj: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (a, b) in edges {
        adj.entry(a.as_str()).or_default().push(b.as_str());
        adj.entry(b.as_str()).or_default();
    }
    // 0 = unvisited, 1 = on stack, 2 = done
    let mut state: HashMap<&str, u8> = HashMap::new();
    fn visit<'a>(v: &'a str, adj: &BTreeMap<&'a str, Vec<&'a str>>, state: &mut HashMap<&'a str, u8>) -> bool {
        match state.get(v) {
            Some(1) => return false,
            Some(2) => return true,
            _ => {}
        }
        state.insert(v, 1);
        for &w in &adj[v] {
            if !visit(w, adj, state) {
                return false;
            }
        }
        state.insert(v, 2);
        true
    }
    let nodes: Vec<&str> = adj.keys().copied().collect();
    nodes.into_iter().all(|v| visit(v, &adj, &mut state))
}
