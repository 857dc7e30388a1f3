//! Discrete decoding: BIO tags to mentions, classified pairs to (possibly
//! nested) event structures.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{EventArg, EventStructure, LabelInventory, Mention, Sentence, Span, Tag, TagSequence};
use crate::error::{BeeError, Result};
use crate::linalg::argmax;
use crate::scalar::Scalar;

/// A classified (trigger, argument) pair whose role is not NONE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictedEdge {
    pub head_mention: String,
    pub dep_mention: String,
    pub role: String,
    pub confidence: f64,
}

impl PredictedEdge {
    pub fn new(head: impl Into<String>, dep: impl Into<String>, role: impl Into<String>, confidence: f64) -> Self {
        PredictedEdge {
            head_mention: head.into(),
            dep_mention: dep.into(),
            role: role.into(),
            confidence,
        }
    }
}

/// Maximal `B-t (I-t)*` runs become mentions of type `t`, ids `T1..Tk` in span
/// order. An `I-t` that does not continue a run of `t` opens a new mention.
pub fn decode_bio(tags: &TagSequence, inventory: &LabelInventory) -> Result<Vec<Mention>> {
    let mut runs: Vec<(String, usize, usize)> = Vec::new();
    let mut open: Option<(String, usize)> = None;
    for (i, tag) in tags.tags.iter().enumerate() {
        if let Some(label) = tag.label() {
            if inventory.kind_of(label).is_none() {
                return Err(BeeError::Decode(format!("tag {tag} at position {i} is outside the vocabulary")));
            }
        }
        match tag {
            Tag::Inside(t) if open.as_ref().is_some_and(|(o, _)| o == t) => {}
            Tag::Begin(t) | Tag::Inside(t) => {
                if let Some((label, start)) = open.take() {
                    runs.push((label, start, i - 1));
                }
                open = Some((t.clone(), i));
            }
            Tag::Outside => {
                if let Some((label, start)) = open.take() {
                    runs.push((label, start, i - 1));
                }
            }
        }
    }
    if let Some((label, start)) = open {
        runs.push((label, start, tags.len() - 1));
    }
    Ok(runs
        .into_iter()
        .enumerate()
        .map(|(k, (label, start, end))| {
            let kind = inventory.kind_of(&label).expect("checked above");
            Mention::new(format!("T{}", k + 1), kind, label, Span::new(start, end))
        })
        .collect())
}

/// Per-token argmax over `vocab`, then [`decode_bio`].
pub fn decode_distributions<T: Scalar>(
    dists: &[Vec<T>],
    vocab: &[Tag],
    inventory: &LabelInventory,
) -> Result<Vec<Mention>> {
    let tags = dists
        .iter()
        .enumerate()
        .map(|(i, d)| {
            if d.len() != vocab.len() {
                return Err(BeeError::Decode(format!(
                    "token {i}: distribution of size {} for {} tags",
                    d.len(),
                    vocab.len()
                )));
            }
            Ok(vocab[argmax(d)].clone())
        })
        .collect::<Result<Vec<_>>>()?;
    decode_bio(&TagSequence { tags }, inventory)
}

/// True when `to` is reachable from `from` over `edges`.
fn reaches(edges: &[&PredictedEdge], from: &str, to: &str) -> bool {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut stack = vec![from];
    while let Some(n) = stack.pop() {
        if n == to {
            return true;
        }
        if seen.insert(n) {
            stack.extend(edges.iter().filter(|e| e.head_mention == n).map(|e| e.dep_mention.as_str()));
        }
    }
    false
}

fn breaking_order(a: &PredictedEdge, b: &PredictedEdge) -> std::cmp::Ordering {
    a.confidence
        .total_cmp(&b.confidence)
        .then_with(|| a.head_mention.cmp(&b.head_mention))
        .then_with(|| a.dep_mention.cmp(&b.dep_mention))
        .then_with(|| a.role.cmp(&b.role))
}

/// Groups edges into one event per trigger, after removing trigger→trigger
/// cycles by repeatedly deleting the lowest-confidence edge lying on a cycle.
pub fn assemble_events(triggers: &[Mention], edges: &[PredictedEdge]) -> Result<Vec<EventStructure>> {
    let trigger_ids: HashSet<&str> = triggers.iter().map(|m| m.id.as_str()).collect();
    if let Some(e) = edges.iter().find(|e| !trigger_ids.contains(e.head_mention.as_str())) {
        return Err(BeeError::Contract(format!(
            "edge {} -> {} has a non-trigger head",
            e.head_mention, e.dep_mention
        )));
    }
    let mut removed = vec![false; edges.len()];
    loop {
        let nested: Vec<&PredictedEdge> = edges
            .iter()
            .zip(&removed)
            .filter(|(e, r)| !**r && trigger_ids.contains(e.dep_mention.as_str()))
            .map(|(e, _)| e)
            .collect();
        let victim = edges
            .iter()
            .enumerate()
            .filter(|(i, e)| {
                !removed[*i]
                    && trigger_ids.contains(e.dep_mention.as_str())
                    && reaches(&nested, &e.dep_mention, &e.head_mention)
            })
            .min_by(|(_, a), (_, b)| breaking_order(a, b));
        match victim {
            Some((i, e)) => {
                log::debug!(
                    "breaking cycle: dropping {} -> {} ({}, {:.4})",
                    e.head_mention,
                    e.dep_mention,
                    e.role,
                    e.confidence
                );
                removed[i] = true;
            }
            None => break,
        }
    }
    let mut by_trigger: BTreeMap<usize, Vec<EventArg>> = BTreeMap::new();
    let position: BTreeMap<&str, usize> = triggers.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
    for (e, _) in edges.iter().zip(&removed).filter(|(_, r)| !**r) {
        by_trigger.entry(position[e.head_mention.as_str()]).or_default().push(EventArg {
            role: e.role.clone(),
            arg_id: e.dep_mention.clone(),
        });
    }
    Ok(by_trigger
        .into_iter()
        .map(|(i, args)| EventStructure {
            trigger_id: triggers[i].id.clone(),
            args,
        })
        .collect())
}

/// Document text laid out from token offsets, with spaces in the gaps.
pub fn document_text(sentences: &[Sentence]) -> String {
    let end = sentences
        .iter()
        .flat_map(|s| s.tokens.last())
        .map(|t| t.char_end)
        .max()
        .unwrap_or(0);
    let mut chars = vec![' '; end];
    for t in sentences.iter().flat_map(|s| &s.tokens) {
        for (slot, c) in chars[t.char_start..t.char_end].iter_mut().zip(t.text.chars()) {
            *slot = c;
        }
    }
    chars.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{encode_tags, MentionKind};
    use proptest::prelude::*;

    fn inventory() -> LabelInventory {
        LabelInventory::new(["Protein", "X"], ["Binding", "Regulation"]).unwrap()
    }

    fn tags(s: &[&str]) -> TagSequence {
        TagSequence {
            tags: s.iter().map(|t| t.parse().unwrap()).collect(),
        }
    }

    fn spans(ms: &[Mention]) -> Vec<(String, usize, usize)> {
        ms.iter().map(|m| (m.label.clone(), m.span.start, m.span.end)).collect()
    }

    #[test]
    fn multi_token_entity() {
        let ms = decode_bio(&tags(&["O", "B-Protein", "I-Protein", "O"]), &inventory()).unwrap();
        assert_eq!(spans(&ms), vec![("Protein".into(), 1, 2)]);
        assert_eq!(ms[0].kind, MentionKind::Entity);
        assert_eq!(ms[0].id, "T1");
    }

    #[test]
    fn orphan_inside_is_repaired() {
        let ms = decode_bio(&tags(&["I-Binding", "O"]), &inventory()).unwrap();
        assert_eq!(spans(&ms), vec![("Binding".into(), 0, 0)]);
        assert_eq!(ms[0].kind, MentionKind::Trigger);
    }

    #[test]
    fn adjacent_begins_are_separate() {
        let ms = decode_bio(&tags(&["B-X", "B-X"]), &inventory()).unwrap();
        assert_eq!(spans(&ms), vec![("X".into(), 0, 0), ("X".into(), 1, 1)]);
    }

    #[test]
    fn unknown_label_is_decode_error() {
        assert!(matches!(decode_bio(&tags(&["B-Gene"]), &inventory()), Err(BeeError::Decode(_))));
    }

    #[test]
    fn every_two_token_pattern() {
        let inv = LabelInventory::new(["P"], ["B"]).unwrap();
        let vocab = inv.tag_vocab();
        for a in &vocab {
            for b in &vocab {
                let seq = TagSequence {
                    tags: vec![a.clone(), b.clone()],
                };
                let got = spans(&decode_bio(&seq, &inv).unwrap());
                let expected: Vec<(String, usize, usize)> = match (a.label(), b.label()) {
                    (None, None) => vec![],
                    (Some(x), None) => vec![(x.into(), 0, 0)],
                    (None, Some(y)) => vec![(y.into(), 1, 1)],
                    (Some(x), Some(y)) => {
                        if matches!(b, Tag::Inside(_)) && x == y {
                            vec![(x.into(), 0, 1)]
                        } else {
                            vec![(x.into(), 0, 0), (y.into(), 1, 1)]
                        }
                    }
                };
                assert_eq!(got, expected, "{a} {b}");
            }
        }
    }

    #[test]
    fn distributions_take_argmax() {
        let inv = inventory();
        let vocab = inv.tag_vocab();
        let mut d = vec![vec![0.0f32; vocab.len()]; 2];
        let b = vocab.iter().position(|t| t.to_string() == "B-Protein").unwrap();
        let i = vocab.iter().position(|t| t.to_string() == "I-Protein").unwrap();
        d[0][b] = 1.0;
        d[1][i] = 1.0;
        assert_eq!(spans(&decode_distributions(&d, &vocab, &inv).unwrap()), vec![("Protein".into(), 0, 1)]);
    }

    fn trig(id: &str, at: usize) -> Mention {
        Mention::new(id, MentionKind::Trigger, "Regulation", Span::new(at, at))
    }

    #[test]
    fn single_edge() {
        let ev = assemble_events(&[trig("T2", 1)], &[PredictedEdge::new("T2", "E1", "Theme", 0.9)]).unwrap();
        assert_eq!(ev, vec![EventStructure::new("T2").with_arg("Theme", "E1")]);
    }

    #[test]
    fn nested_pair() {
        let triggers = [trig("T2", 1), trig("T3", 2)];
        let edges = [
            PredictedEdge::new("T3", "T2", "Theme", 0.8),
            PredictedEdge::new("T2", "E1", "Theme", 0.9),
        ];
        let ev = assemble_events(&triggers, &edges).unwrap();
        assert_eq!(
            ev,
            vec![
                EventStructure::new("T2").with_arg("Theme", "E1"),
                EventStructure::new("T3").with_arg("Theme", "T2"),
            ]
        );
    }

    #[test]
    fn two_cycle_drops_weaker_edge() {
        let triggers = [trig("T1", 0), trig("T2", 1)];
        let edges = [
            PredictedEdge::new("T1", "T2", "Theme", 0.6),
            PredictedEdge::new("T2", "T1", "Cause", 0.4),
        ];
        let ev = assemble_events(&triggers, &edges).unwrap();
        assert_eq!(ev, vec![EventStructure::new("T1").with_arg("Theme", "T2")]);
    }

    #[test]
    fn non_trigger_head_is_contract_error() {
        let err = assemble_events(&[trig("T1", 0)], &[PredictedEdge::new("E1", "T1", "Theme", 0.5)]);
        assert!(matches!(err, Err(BeeError::Contract(_))));
    }

    fn nesting_of(ev: &[EventStructure], triggers: &[Mention]) -> Vec<(String, String)> {
        let ids: HashSet<&str> = triggers.iter().map(|m| m.id.as_str()).collect();
        ev.iter()
            .flat_map(|e| {
                e.args
                    .iter()
                    .filter(|a| ids.contains(a.arg_id.as_str()))
                    .map(|a| (e.trigger_id.clone(), a.arg_id.clone()))
            })
            .collect()
    }

    fn acyclic(edges: &[(String, String)]) -> bool {
        crate::corpus::is_acyclic(edges)
    }

    #[test]
    fn exhaustive_small_cycle_configurations() {
        for n in 2..=3usize {
            let triggers: Vec<Mention> = (0..n).map(|i| trig(&format!("T{}", i + 1), i)).collect();
            let all: Vec<(usize, usize)> = (0..n)
                .flat_map(|a| (0..n).filter(move |&b| b != a).map(move |b| (a, b)))
                .collect();
            for mask in 0u32..(1 << all.len()) {
                let chosen: Vec<(usize, usize)> =
                    all.iter().enumerate().filter(|(k, _)| mask & (1 << k) != 0).map(|(_, &e)| e).collect();
                for conf_seed in 0..3usize {
                    let edges: Vec<PredictedEdge> = chosen
                        .iter()
                        .enumerate()
                        .map(|(k, &(a, b))| {
                            let c = if conf_seed == 0 { 0.5 } else { ((k * 7 + conf_seed * 3) % 10 + 1) as f64 / 10.0 };
                            PredictedEdge::new(&triggers[a].id, &triggers[b].id, "Theme", c)
                        })
                        .collect();
                    let ev = assemble_events(&triggers, &edges).unwrap();
                    let kept = nesting_of(&ev, &triggers);
                    assert!(acyclic(&kept), "{edges:?}");
                    let input: Vec<(String, String)> =
                        edges.iter().map(|e| (e.head_mention.clone(), e.dep_mention.clone())).collect();
                    if acyclic(&input) {
                        assert_eq!(kept.len(), input.len());
                    }
                    for e in &input {
                        if !kept.contains(e) {
                            let refs: Vec<&PredictedEdge> = edges.iter().collect();
                            assert!(reaches(&refs, &e.1, &e.0), "{e:?} is on no cycle of {edges:?}");
                        }
                    }
                    assert_eq!(ev, assemble_events(&triggers, &edges).unwrap());
                }
            }
        }
    }

    proptest! {
        #[test]
        fn output_is_acyclic_for_any_edges(
            raw in proptest::collection::vec((0usize..5, 0usize..7, 0usize..3, 1u32..100), 0..25)
        ) {
            let triggers: Vec<Mention> = (0..5).map(|i| trig(&format!("T{i}"), i)).collect();
            let edges: Vec<PredictedEdge> = raw
                .iter()
                .map(|&(h, d, r, c)| {
                    let dep = if d < 5 { format!("T{d}") } else { format!("E{d}") };
                    PredictedEdge::new(format!("T{h}"), dep, ["Theme", "Cause", "Site"][r], c as f64 / 100.0)
                })
                .collect();
            let ev = assemble_events(&triggers, &edges).unwrap();
            prop_assert!(acyclic(&nesting_of(&ev, &triggers)));
        }

        #[test]
        fn bio_round_trip(
            layout in proptest::collection::vec((0usize..3, 1usize..4, 0usize..4), 0..6)
        ) {
            let inv = inventory();
            let labels = ["Protein", "X", "Binding", "Regulation"];
            let mut words = Vec::new();
            let mut mentions = Vec::new();
            for (k, &(gap, len, label)) in layout.iter().enumerate() {
                words.extend((0..gap).map(|_| "o".to_string()));
                let start = words.len();
                words.extend((0..len).map(|_| "m".to_string()));
                let kind = inv.kind_of(labels[label]).unwrap();
                mentions.push(Mention::new(format!("M{k}"), kind, labels[label], Span::new(start, start + len - 1)));
            }
            let mut s = Sentence::from_words("d", &words);
            s.mentions = mentions;
            let decoded = decode_bio(&encode_tags(&s).tags, &inv).unwrap();
            let strip = |ms: &[Mention]| -> Vec<(MentionKind, String, Span)> {
                ms.iter().map(|m| (m.kind, m.label.clone(), m.span)).collect()
            };
            prop_assert_eq!(strip(&decoded), strip(&s.mentions));
        }
    }

    #[test]
    fn text_reconstruction_preserves_offsets() {
        let s = Sentence::from_words("d", &["p53", "binds", "MDM2"]);
        assert_eq!(document_text(&[s]), "p53 binds MDM2");
    }
}
