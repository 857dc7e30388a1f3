use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Mention, MentionKind, Sentence};
use crate::error::{BeeError, Result};

/// One BIO label.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tag {
    Outside,
    Begin(String),
    Inside(String),
}

impl Tag {
    pub fn label(&self) -> Option<&str> {
        match self {
            Tag::Outside => None,
            Tag::Begin(t) | Tag::Inside(t) => Some(t),
        }
    }
}

impl fmt::Display for Tag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tag::Outside => f.write_str("O"),
            Tag::Begin(t) => write!(f, "B-{t}"),
            Tag::Inside(t) => write!(f, "I-{t}"),
        }
    }
}

impl FromStr for Tag {
    type Err = BeeError;

    fn from_str(s: &str) -> Result<Self> {
        if s == "O" {
            return Ok(Tag::Outside);
        }
        match s.split_once('-') {
            Some(("B", t)) if !t.is_empty() => Ok(Tag::Begin(t.to_string())),
            Some(("I", t)) if !t.is_empty() => Ok(Tag::Inside(t.to_string())),
            _ => Err(BeeError::Decode(format!("malformed BIO tag {s:?}"))),
        }
    }
}

impl Serialize for Tag {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Tag {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TagSequence {
    pub tags: Vec<Tag>,
}

impl TagSequence {
    pub fn len(&self) -> usize {
        self.tags.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tags.is_empty()
    }

    pub fn to_strings(&self) -> Vec<String> {
        self.tags.iter().map(Tag::to_string).collect()
    }
}

/// The closed entity and trigger type inventories of a dataset.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct LabelInventory {
    pub entity_types: BTreeSet<String>,
    pub trigger_types: BTreeSet<String>,
}

impl LabelInventory {
    pub fn new<I, J, S, U>(entities: I, triggers: J) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        J: IntoIterator<Item = U>,
        S: Into<String>,
        U: Into<String>,
    {
        let inv = LabelInventory {
            entity_types: entities.into_iter().map(Into::into).collect(),
            trigger_types: triggers.into_iter().map(Into::into).collect(),
        };
        if let Some(clash) = inv.entity_types.intersection(&inv.trigger_types).next() {
            return Err(BeeError::Schema(format!(
                "type {clash} is used both as an entity and a trigger type"
            )));
        }
        Ok(inv)
    }

    pub fn from_sentences<'a>(sentences: impl IntoIterator<Item = &'a Sentence>) -> Result<Self> {
        let mut entities = BTreeSet::new();
        let mut triggers = BTreeSet::new();
        for s in sentences {
            for m in &s.mentions {
                match m.kind {
                    MentionKind::Entity => entities.insert(m.label.clone()),
                    MentionKind::Trigger => triggers.insert(m.label.clone()),
                };
            }
        }
        Self::new(entities, triggers)
    }

    pub fn kind_of(&self, label: &str) -> Option<MentionKind> {
        if self.entity_types.contains(label) {
            Some(MentionKind::Entity)
        } else if self.trigger_types.contains(label) {
            Some(MentionKind::Trigger)
        } else {
            None
        }
    }

    /// Joint tag vocabulary: `O`, then `B-t`/`I-t` for each entity type and
    /// then each trigger type, in sorted order.
    pub fn tag_vocab(&self) -> Vec<Tag> {
        let mut v = vec![Tag::Outside];
        for t in self.entity_types.iter().chain(&self.trigger_types) {
            v.push(Tag::Begin(t.clone()));
            v.push(Tag::Inside(t.clone()));
        }
        v
    }
}

/// Output of [`encode_tags`]: the tags, the mentions they encode and how many
/// overlapping mentions had to be dropped.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagEncoding {
    pub tags: TagSequence,
    pub kept: Vec<Mention>,
    pub dropped: usize,
}

/// BIO-encodes a sentence's mentions over the joint entity/trigger label space.
///
/// Overlapping mentions cannot share a BIO sequence: the longer span wins, and
/// on equal length the entity wins (then earlier start, then id).
pub fn encode_tags(s: &Sentence) -> TagEncoding {
    let mut order: Vec<&Mention> = s.mentions.iter().collect();
    order.sort_by(|a, b| {
        b.span
            .token_count()
            .cmp(&a.span.token_count())
            .then(a.kind.cmp(&b.kind))
            .then(a.span.start.cmp(&b.span.start))
            .then(a.id.cmp(&b.id))
    });
    let mut kept: Vec<Mention> = Vec::new();
    for m in order {
        if kept.iter().all(|k| !k.span.overlaps(&m.span)) {
            kept.push(m.clone());
        }
    }
    let dropped = s.mentions.len() - kept.len();
    if dropped > 0 {
        log::debug!("{}: dropped {dropped} overlapping mention(s)", s.doc_id);
    }
    kept.sort_by(|a, b| a.span.cmp(&b.span).then(a.id.cmp(&b.id)));

    let mut tags = vec![Tag::Outside; s.tokens.len()];
    for m in &kept {
        tags[m.span.start] = Tag::Begin(m.label.clone());
        for t in &mut tags[m.span.start + 1..=m.span.end] {
            *t = Tag::Inside(m.label.clone());
        }
    }
    TagEncoding {
        tags: TagSequence { tags },
        kept,
        dropped,
    }
}
