//! BioNLP shared-task standoff (`.txt` / `.a1` / `.a2`) reader and writer.
//!
//! Offsets in standoff files are character (not byte) offsets into the
//! document text, end-exclusive.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use super::{EventArg, EventStructure, Mention, MentionKind, Sentence, Span, Token};
use crate::error::{BeeError, Result};

#[derive(Debug, Clone, Default)]
pub struct StandoffOptions {
    /// Sentence character ranges `[start, end)`; the text is split on newlines when absent.
    pub sentence_spans: Option<Vec<(usize, usize)>>,
    /// Token character ranges `[start, end)`; [`default_tokenize`] runs when absent.
    pub token_spans: Option<Vec<(usize, usize)>>,
}

#[derive(Debug, Clone, Default)]
pub struct StandoffLoad {
    pub sentences: Vec<Sentence>,
    /// Events whose trigger and arguments fall in different sentences.
    pub dropped_cross_sentence: usize,
}

/// Whitespace tokenizer that also splits off every ASCII punctuation character.
pub fn default_tokenize(text: &str) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start: Option<usize> = None;
    for (i, c) in text.chars().enumerate() {
        if c.is_whitespace() || c.is_ascii_punctuation() {
            if let Some(s) = start.take() {
                out.push((s, i));
            }
            if c.is_ascii_punctuation() {
                out.push((i, i + 1));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push((s, text.chars().count()));
    }
    out
}

fn newline_sentences(chars: &[char]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = 0;
    for (i, &c) in chars.iter().enumerate() {
        if c == '\n' {
            out.push((start, i));
            start = i + 1;
        }
    }
    out.push((start, chars.len()));
    out
}

#[derive(Debug)]
struct TextBound {
    id: String,
    label: String,
    start: usize,
    end: usize,
    line: usize,
    file: &'static str,
}

#[derive(Debug)]
struct EventLine {
    id: String,
    trigger: String,
    args: Vec<(String, String)>,
    line: usize,
}

fn parse_text_bound(line_no: usize, file: &'static str, id: &str, rest: &[&str]) -> Result<TextBound> {
    let fields = rest
        .first()
        .ok_or_else(|| BeeError::parse(line_no, format!("{file}: {id} has no type/offset field")))?;
    let mut parts = fields.splitn(2, ' ');
    let label = parts.next().unwrap_or_default();
    let offsets = parts
        .next()
        .ok_or_else(|| BeeError::parse(line_no, format!("{file}: {id} has no offsets")))?;
    let mut start = usize::MAX;
    let mut end = 0;
    // discontinuous spans ("0 3;5 8") are read as their overall extent
    for frag in offsets.split(';') {
        let nums: Vec<&str> = frag.split_whitespace().collect();
        if nums.len() != 2 {
            return Err(BeeError::parse(line_no, format!("{file}: {id} has malformed offsets {offsets:?}")));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| BeeError::parse(line_no, format!("{file}: {id} offset {s:?} is not an integer")))
        };
        let (s, e) = (parse(nums[0])?, parse(nums[1])?);
        if s >= e {
            return Err(BeeError::parse(line_no, format!("{file}: {id} has empty span {s}..{e}")));
        }
        start = start.min(s);
        end = end.max(e);
    }
    if label.is_empty() {
        return Err(BeeError::parse(line_no, format!("{file}: {id} has no type")));
    }
    Ok(TextBound {
        id: id.to_string(),
        label: label.to_string(),
        start,
        end,
        line: line_no,
        file,
    })
}

fn parse_event(line_no: usize, id: &str, rest: &[&str]) -> Result<EventLine> {
    let body = rest
        .first()
        .ok_or_else(|| BeeError::parse(line_no, format!("a2: {id} has no body")))?;
    let mut items = body.split_whitespace();
    let head = items
        .next()
        .ok_or_else(|| BeeError::parse(line_no, format!("a2: {id} is empty")))?;
    let (_, trigger) = head
        .split_once(':')
        .filter(|(t, g)| !t.is_empty() && !g.is_empty())
        .ok_or_else(|| BeeError::parse(line_no, format!("a2: {id} trigger {head:?} is not Type:Id")))?;
    let mut args = Vec::new();
    for item in items {
        let (role, arg) = item
            .split_once(':')
            .filter(|(r, a)| !r.is_empty() && !a.is_empty())
            .ok_or_else(|| BeeError::parse(line_no, format!("a2: {id} argument {item:?} is not Role:Id")))?;
        args.push((role.to_string(), arg.to_string()));
    }
    Ok(EventLine {
        id: id.to_string(),
        trigger: trigger.to_string(),
        args,
        line: line_no,
    })
}

fn parse_annotations(
    src: &str,
    file: &'static str,
    bounds: &mut Vec<TextBound>,
    events: &mut Vec<EventLine>,
) -> Result<()> {
    for (i, raw) in src.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        let id = fields[0].trim();
        match id.chars().next() {
            Some('T') => bounds.push(parse_text_bound(line_no, file, id, &fields[1..])?),
            Some('E') if file == "a2" => events.push(parse_event(line_no, id, &fields[1..])?),
            // modifications, attributes, normalizations, relations, equivalences, comments
            Some('M' | 'A' | 'N' | 'R' | '*' | '#') => {}
            _ => return Err(BeeError::parse(line_no, format!("{file}: unrecognised annotation {line:?}"))),
        }
    }
    Ok(())
}

/// Loads one standoff document, splitting sentences on newlines and
/// tokenizing with [`default_tokenize`].
pub fn load_standoff(doc_id: &str, text: &str, a1: &str, a2: &str) -> Result<Vec<Sentence>> {
    Ok(load_standoff_with(doc_id, text, a1, a2, &StandoffOptions::default())?.sentences)
}

pub fn load_standoff_with(
    doc_id: &str,
    text: &str,
    a1: &str,
    a2: &str,
    opts: &StandoffOptions,
) -> Result<StandoffLoad> {
    let chars: Vec<char> = text.chars().collect();
    let sentence_spans = opts
        .sentence_spans
        .clone()
        .unwrap_or_else(|| newline_sentences(&chars));
    let token_spans = opts
        .token_spans
        .clone()
        .unwrap_or_else(|| default_tokenize(text));

    // token → sentence assignment
    let mut sentences: Vec<Sentence> = sentence_spans
        .iter()
        .map(|_| Sentence {
            doc_id: doc_id.to_string(),
            ..Default::default()
        })
        .collect();
    let mut starts: HashMap<usize, (usize, usize)> = HashMap::new();
    let mut ends: HashMap<usize, (usize, usize)> = HashMap::new();
    for &(s, e) in &token_spans {
        if s >= e || e > chars.len() {
            return Err(BeeError::Alignment(format!("token span {s}..{e} outside document")));
        }
        let sid = sentence_spans
            .iter()
            .position(|&(ss, se)| ss <= s && e <= se)
            .ok_or_else(|| BeeError::Alignment(format!("token {s}..{e} crosses a sentence boundary")))?;
        let sent = &mut sentences[sid];
        let index = sent.tokens.len();
        sent.tokens.push(Token {
            index,
            text: chars[s..e].iter().collect(),
            char_start: s,
            char_end: e,
        });
        starts.insert(s, (sid, index));
        ends.insert(e, (sid, index));
    }

    let mut bounds = Vec::new();
    let mut events = Vec::new();
    parse_annotations(a1, "a1", &mut bounds, &mut events)?;
    parse_annotations(a2, "a2", &mut bounds, &mut events)?;

    let used_as_trigger: std::collections::HashSet<&str> = events.iter().map(|e| e.trigger.as_str()).collect();
    let mut located: HashMap<String, usize> = HashMap::new();
    for tb in &bounds {
        let (sid, first) = starts.get(&tb.start).copied().unwrap_or((usize::MAX, 0));
        let last = ends.get(&tb.end).filter(|(s2, _)| *s2 == sid).map(|&(_, t)| t);
        let last = match last {
            Some(l) if sid != usize::MAX && l >= first => l,
            _ => {
                return Err(BeeError::Alignment(format!(
                    "{} line {}: {} offsets {}..{} do not fall on token boundaries",
                    tb.file, tb.line, tb.id, tb.start, tb.end
                )))
            }
        };
        let kind = if tb.file == "a2" && used_as_trigger.contains(tb.id.as_str()) {
            MentionKind::Trigger
        } else {
            MentionKind::Entity
        };
        if located.insert(tb.id.clone(), sid).is_some() {
            return Err(BeeError::parse(tb.line, format!("{}: duplicate id {}", tb.file, tb.id)));
        }
        sentences[sid]
            .mentions
            .push(Mention::new(tb.id.clone(), kind, tb.label.clone(), Span::new(first, last)));
    }

    let event_trigger: HashMap<&str, &str> = events.iter().map(|e| (e.id.as_str(), e.trigger.as_str())).collect();
    let resolve = |id: &str, line: usize| -> Result<String> {
        let target = if id.starts_with('E') {
            *event_trigger
                .get(id)
                .ok_or_else(|| BeeError::Reference(format!("a2 line {line}: unknown event {id}")))?
        } else {
            id
        };
        if located.contains_key(target) {
            Ok(target.to_string())
        } else {
            Err(BeeError::Reference(format!("a2 line {line}: unknown annotation {id}")))
        }
    };

    let mut dropped = 0;
    for ev in &events {
        let trigger = resolve(&ev.trigger, ev.line)?;
        let sid = located[&trigger];
        let mut structure = EventStructure::new(trigger);
        let mut crosses = false;
        for (role, arg) in &ev.args {
            let arg_id = resolve(arg, ev.line)?;
            crosses |= located[&arg_id] != sid;
            structure.args.push(EventArg {
                role: role.clone(),
                arg_id,
            });
        }
        if crosses {
            dropped += 1;
            continue;
        }
        sentences[sid].events.push(structure);
    }
    if dropped > 0 {
        log::info!("{doc_id}: dropped {dropped} cross-sentence event(s)");
    }

    sentences.retain(|s| !s.tokens.is_empty());
    for s in &sentences {
        s.validate()?;
    }
    Ok(StandoffLoad {
        sentences,
        dropped_cross_sentence: dropped,
    })
}

/// Reads `<stem>.txt` with its sibling `.a1` / `.a2` files (missing ones read as empty).
pub fn load_standoff_files(txt_path: &Path) -> Result<StandoffLoad> {
    let text = fs::read_to_string(txt_path)?;
    let read_opt = |ext: &str| -> Result<String> {
        let p = txt_path.with_extension(ext);
        if p.exists() {
            Ok(fs::read_to_string(p)?)
        } else {
            Ok(String::new())
        }
    };
    let doc_id = txt_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    load_standoff_with(&doc_id, &text, &read_opt("a1")?, &read_opt("a2")?, &StandoffOptions::default())
}

/// Loads every `*.txt` document in a directory, in file-name order.
pub fn load_standoff_dir(dir: &Path) -> Result<StandoffLoad> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "txt"))
        .collect();
    paths.sort();
    let mut all = StandoffLoad::default();
    for p in paths {
        let doc = load_standoff_files(&p)?;
        all.sentences.extend(doc.sentences);
        all.dropped_cross_sentence += doc.dropped_cross_sentence;
    }
    Ok(all)
}

/// Serializes the sentences of one document back to `(a1, a2)` contents.
///
/// Nested arguments are written as references to the first event anchored on
/// the argument trigger.
pub fn write_standoff(sentences: &[Sentence], text: &str) -> (String, String) {
    let chars: Vec<char> = text.chars().collect();
    let mut a1 = String::new();
    let mut a2 = String::new();
    let surface = |s: &Sentence, m: &Mention| -> (usize, usize, String) {
        let start = s.tokens[m.span.start].char_start;
        let end = s.tokens[m.span.end].char_end;
        let covered = if end <= chars.len() {
            chars[start..end].iter().collect()
        } else {
            s.tokens[m.span.tokens()]
                .iter()
                .map(|t| t.text.as_str())
                .collect::<Vec<_>>()
                .join(" ")
        };
        (start, end, covered)
    };
    for s in sentences {
        for m in &s.mentions {
            let (start, end, covered) = surface(s, m);
            let out = match m.kind {
                MentionKind::Entity => &mut a1,
                MentionKind::Trigger => &mut a2,
            };
            out.push_str(&format!("{}\t{} {} {}\t{}\n", m.id, m.label, start, end, covered));
        }
    }
    let mut event_ids: BTreeMap<(usize, usize), String> = BTreeMap::new();
    let mut first_event: HashMap<(usize, &str), String> = HashMap::new();
    let mut counter = 0;
    for (si, s) in sentences.iter().enumerate() {
        for (ei, ev) in s.events.iter().enumerate() {
            counter += 1;
            let id = format!("E{counter}");
            first_event.entry((si, ev.trigger_id.as_str())).or_insert_with(|| id.clone());
            event_ids.insert((si, ei), id);
        }
    }
    for (si, s) in sentences.iter().enumerate() {
        for (ei, ev) in s.events.iter().enumerate() {
            let label = s.mention(&ev.trigger_id).map_or("Event", |m| m.label.as_str());
            let mut line = format!("{}\t{}:{}", event_ids[&(si, ei)], label, ev.trigger_id);
            for arg in &ev.args {
                let target = first_event
                    .get(&(si, arg.arg_id.as_str()))
                    .cloned()
                    .unwrap_or_else(|| arg.arg_id.clone());
                line.push_str(&format!(" {}:{}", arg.role, target));
            }
            a2.push_str(&line);
            a2.push('\n');
        }
    }
    (a1, a2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tokenizer_splits_punctuation() {
        let spans = default_tokenize("p53-mediated (IL-2) x");
        let text: Vec<char> = "p53-mediated (IL-2) x".chars().collect();
        let toks: Vec<String> = spans.iter().map(|&(s, e)| text[s..e].iter().collect()).collect();
        assert_eq!(toks, ["p53", "-", "mediated", "(", "IL", "-", "2", ")", "x"]);
    }

    #[test]
    fn single_entity_aligns_to_first_token() {
        let s = load_standoff("d", "p53 binds", "T1\tProtein 0 3\tp53\n", "").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(
            s[0].mentions,
            vec![Mention::new("T1", MentionKind::Entity, "Protein", Span::new(0, 0))]
        );
    }

    #[test]
    fn one_event_file() {
        let s = load_standoff(
            "d",
            "p53 binds",
            "T1\tProtein 0 3\tp53\n",
            "T2\tBinding 4 9\tbinds\nE1\tBinding:T2 Theme:T1\n",
        )
        .unwrap();
        assert_eq!(s[0].events, vec![EventStructure::new("T2").with_arg("Theme", "T1")]);
        assert!(s[0].mention("T2").unwrap().is_trigger());
    }

    #[test]
    fn nested_reference_resolves_to_trigger() {
        let text = "TNF induces phosphorylation of p53";
        let a1 = "T1\tProtein 0 3\tTNF\nT2\tProtein 31 34\tp53\n";
        let a2 = "T3\tPositive_regulation 4 11\tinduces\n\
                  T4\tPhosphorylation 12 27\tphosphorylation\n\
                  E1\tPhosphorylation:T4 Theme:T2\n\
                  E2\tPositive_regulation:T3 Theme:E1 Cause:T1\n";
        let s = &load_standoff("d", text, a1, a2).unwrap()[0];
        assert_eq!(s.events.len(), 2);
        assert_eq!(s.events[1].args[0].arg_id, "T4");
        assert_eq!(s.nesting_edges(), vec![("T3".to_string(), "T4".to_string())]);
    }

    #[test]
    fn forward_event_reference() {
        let text = "A activates B binding";
        let a1 = "T1\tProtein 0 1\tA\nT2\tProtein 12 13\tB\n";
        let a2 = "T3\tPositive_regulation 2 11\tactivates\nT4\tBinding 14 21\tbinding\n\
                  E1\tPositive_regulation:T3 Theme:E2 Cause:T1\nE2\tBinding:T4 Theme:T2\n";
        let s = &load_standoff("d", text, a1, a2).unwrap()[0];
        assert_eq!(s.events[0].args[0].arg_id, "T4");
    }

    #[test]
    fn malformed_line_names_line_number() {
        let err = load_standoff("d", "p53 binds", "T1\tProtein 0 3\tp53\n", "T2\tBinding 4 9\tbinds\nE1\tBinding T2\n")
            .unwrap_err();
        match err {
            BeeError::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let err = load_standoff("d", "p53 binds", "T1\tProtein zero 3\tp53\n", "").unwrap_err();
        assert!(matches!(err, BeeError::Parse { line: 1, .. }));
    }

    #[test]
    fn unaligned_span_lists_offsets() {
        let err = load_standoff("d", "p53 binds", "T1\tProtein 0 2\tp5\n", "").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, BeeError::Alignment(_)));
        assert!(msg.contains("0..2"), "{msg}");
    }

    #[test]
    fn cross_sentence_events_are_dropped() {
        let text = "p53 is here\nit binds";
        let a1 = "T1\tProtein 0 3\tp53\n";
        let a2 = "T2\tBinding 15 20\tbinds\nE1\tBinding:T2 Theme:T1\n";
        let load = load_standoff_with("d", text, a1, a2, &StandoffOptions::default()).unwrap();
        assert_eq!(load.sentences.len(), 2);
        assert_eq!(load.dropped_cross_sentence, 1);
        assert!(load.sentences.iter().all(|s| s.events.is_empty()));
    }

    #[test]
    fn explicit_sentence_and_token_spans() {
        let opts = StandoffOptions {
            sentence_spans: Some(vec![(0, 9)]),
            token_spans: Some(vec![(0, 3), (4, 9)]),
        };
        let load = load_standoff_with("d", "p53 binds", "T1\tProtein 0 3\tp53\n", "", &opts).unwrap();
        assert_eq!(load.sentences[0].tokens.len(), 2);
    }

    #[test]
    fn writer_preserves_offsets() {
        let text = "TNF induces phosphorylation of p53";
        let a1 = "T1\tProtein 0 3\tTNF\nT2\tProtein 31 34\tp53\n";
        let a2 = "T3\tPositive_regulation 4 11\tinduces\nT4\tPhosphorylation 12 27\tphosphorylation\n\
                  E1\tPhosphorylation:T4 Theme:T2\nE2\tPositive_regulation:T3 Theme:E1 Cause:T1\n";
        let s = load_standoff("d", text, a1, a2).unwrap();
        let (w1, w2) = write_standoff(&s, text);
        assert_eq!(w1, a1);
        assert_eq!(w2, a2);
        assert_eq!(load_standoff("d", text, &w1, &w2).unwrap(), s);
    }
}
