//! JSON-lines corpus format: one sentence per line.
//!
//! ```text
//! {"doc_id": "PMID-1", "tokens": ["p53", "binds"], "char_spans": [[0,3],[4,9]],
//!  "entities": [{"id": "T1", "label": "Protein", "start": 0, "end": 0}],
//!  "triggers": [{"id": "T2", "label": "Binding", "start": 1, "end": 1}],
//!  "events": [{"trigger_id": "T2", "args": [["Theme", "T1"]]}],
//!  "dep_edges": [[1, 0, "nsubj"]]}
//! ```
//!
//! `start`/`end` are inclusive token indices. `doc_id`, `char_spans` and
//! `dep_edges` are optional; without `char_spans` tokens are laid out
//! separated by single spaces.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{EventArg, EventStructure, Mention, MentionKind, Sentence, Span, Token};
use crate::depgraph::DepEdge;
use crate::error::{BeeError, Result};

#[derive(Debug, Serialize, Deserialize)]
struct MentionRecord {
    id: String,
    label: String,
    start: usize,
    end: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct EventRecord {
    trigger_id: String,
    args: Vec<(String, String)>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    #[serde(default)]
    doc_id: String,
    tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    char_spans: Option<Vec<(usize, usize)>>,
    entities: Vec<MentionRecord>,
    triggers: Vec<MentionRecord>,
    events: Vec<EventRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dep_edges: Option<Vec<(usize, usize, String)>>,
}

fn to_sentence(rec: Record, line: usize) -> Result<Sentence> {
    let mut s = Sentence::from_words(rec.doc_id, &rec.tokens);
    if let Some(spans) = rec.char_spans {
        if spans.len() != s.tokens.len() {
            return Err(BeeError::Schema(format!(
                "line {line}: {} char_spans for {} tokens",
                spans.len(),
                s.tokens.len()
            )));
        }
        for (t, (a, b)) in s.tokens.iter_mut().zip(spans) {
            t.char_start = a;
            t.char_end = b;
        }
    }
    let mk = |m: MentionRecord, kind| -> Result<Mention> {
        if m.start > m.end {
            return Err(BeeError::Schema(format!("line {line}: mention {} has start > end", m.id)));
        }
        Ok(Mention::new(m.id, kind, m.label, Span::new(m.start, m.end)))
    };
    for m in rec.entities {
        s.mentions.push(mk(m, MentionKind::Entity)?);
    }
    for m in rec.triggers {
        s.mentions.push(mk(m, MentionKind::Trigger)?);
    }
    s.events = rec
        .events
        .into_iter()
        .map(|e| EventStructure {
            trigger_id: e.trigger_id,
            args: e
                .args
                .into_iter()
                .map(|(role, arg_id)| EventArg { role, arg_id })
                .collect(),
        })
        .collect();
    s.dep_edges = rec.dep_edges.map(|edges| {
        edges
            .into_iter()
            .map(|(head, dependent, relation)| DepEdge {
                head,
                dependent,
                relation,
            })
            .collect()
    });
    s.validate().map_err(|e| match e {
        BeeError::Reference(m) => BeeError::Reference(format!("line {line}: {m}")),
        BeeError::Schema(m) => BeeError::Schema(format!("line {line}: {m}")),
        other => other,
    })?;
    Ok(s)
}

fn to_record(s: &Sentence) -> Record {
    let rec = |m: &Mention| MentionRecord {
        id: m.id.clone(),
        label: m.label.clone(),
        start: m.span.start,
        end: m.span.end,
    };
    Record {
        doc_id: s.doc_id.clone(),
        tokens: s.tokens.iter().map(|t| t.text.clone()).collect(),
        char_spans: Some(s.tokens.iter().map(|t: &Token| (t.char_start, t.char_end)).collect()),
        entities: s.entities().map(rec).collect(),
        triggers: s.triggers().map(rec).collect(),
        events: s
            .events
            .iter()
            .map(|e| EventRecord {
                trigger_id: e.trigger_id.clone(),
                args: e.args.iter().map(|a| (a.role.clone(), a.arg_id.clone())).collect(),
            })
            .collect(),
        dep_edges: s.dep_edges.as_ref().map(|edges| {
            edges
                .iter()
                .map(|e| (e.head, e.dependent, e.relation.clone()))
                .collect()
        }),
    }
}

pub fn parse_json_corpus(src: &str) -> Result<Vec<Sentence>> {
    let mut out = Vec::new();
    for (i, line) in src.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record =
            serde_json::from_str(line).map_err(|e| BeeError::Schema(format!("line {}: {e}", i + 1)))?;
        out.push(to_sentence(rec, i + 1)?);
    }
    Ok(out)
}

pub fn load_json_corpus(path: &Path) -> Result<Vec<Sentence>> {
    parse_json_corpus(&fs::read_to_string(path)?)
}

pub fn sentence_to_json(s: &Sentence) -> String {
    serde_json::to_string(&to_record(s)).expect("corpus records always serialize")
}

pub fn write_json_corpus(sentences: &[Sentence]) -> String {
    let mut out = String::new();
    for s in sentences {
        out.push_str(&sentence_to_json(s));
        out.push('\n');
    }
    out
}

pub fn save_json_corpus(path: &Path, sentences: &[Sentence]) -> Result<()> {
    fs::write(path, write_json_corpus(sentences))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const LINE: &str = r#"{"doc_id":"d1","tokens":["p53","binds","MDM2"],"entities":[{"id":"T1","label":"Protein","start":0,"end":0},{"id":"T3","label":"Protein","start":2,"end":2}],"triggers":[{"id":"T2","label":"Binding","start":1,"end":1}],"events":[{"trigger_id":"T2","args":[["Theme","T1"],["Theme2","T3"]]}]}"#;

    #[test]
    fn empty_file_is_empty_corpus() {
        assert!(parse_json_corpus("").unwrap().is_empty());
        assert!(parse_json_corpus("\n\n").unwrap().is_empty());
    }

    #[test]
    fn round_trip_is_identity() {
        let first = parse_json_corpus(LINE).unwrap();
        let again = parse_json_corpus(&write_json_corpus(&first)).unwrap();
        assert_eq!(first, again);
        assert_eq!(first[0].tokens[2].char_start, 10);
    }

    #[test]
    fn missing_field_is_schema_error() {
        let err = parse_json_corpus(r#"{"tokens":["a"],"entities":[],"triggers":[]}"#).unwrap_err();
        assert!(matches!(err, BeeError::Schema(ref m) if m.contains("events")), "{err}");
    }

    #[test]
    fn dangling_argument_is_reference_error() {
        let bad = LINE.replace(r#"["Theme2","T3"]"#, r#"["Theme2","T9"]"#);
        assert!(matches!(parse_json_corpus(&bad), Err(BeeError::Reference(_))));
    }

    #[test]
    fn dep_edges_are_carried() {
        let line = LINE.replace(r#""events""#, r#""dep_edges":[[1,0,"nsubj"],[1,2,"dobj"]],"events""#);
        let s = &parse_json_corpus(&line).unwrap()[0];
        assert_eq!(s.dep_edges.as_ref().unwrap().len(), 2);
        let bad = LINE.replace(r#""events""#, r#""dep_edges":[[1,7,"x"]],"events""#);
        assert!(parse_json_corpus(&bad).is_err());
    }
}
