//! Trigger identification/classification and argument identification/
//! classification scores.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{Sentence, Span};
use crate::error::{BeeError, Result};

/// `(precision, recall, f1)` as fractions; every zero denominator yields 0.
pub fn prf(tp: usize, fp: usize, fn_: usize) -> (f64, f64, f64) {
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let p = ratio(tp, tp + fp);
    let r = ratio(tp, tp + fn_);
    let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl std::ops::Add for Counts {
    type Output = Counts;

    fn add(self, o: Counts) -> Counts {
        Counts {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }
}

/// Precision, recall and F1 in percent.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl From<Counts> for Prf {
    fn from(c: Counts) -> Prf {
        let (p, r, f) = prf(c.tp, c.fp, c.fn_);
        Prf {
            precision: 100.0 * p,
            recall: 100.0 * r,
            f1: 100.0 * f,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SubtaskCounts {
    pub ti: Counts,
    pub tc: Counts,
    pub ai: Counts,
    pub ac: Counts,
}

impl std::ops::Add for SubtaskCounts {
    type Output = SubtaskCounts;

    fn add(self, o: SubtaskCounts) -> SubtaskCounts {
        SubtaskCounts {
            ti: self.ti + o.ti,
            tc: self.tc + o.tc,
            ai: self.ai + o.ai,
            ac: self.ac + o.ac,
        }
    }
}

/// The four subtask scores plus their mean F1 (`total`, rounded to 2 decimals).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub ti: Prf,
    pub tc: Prf,
    pub ai: Prf,
    pub ac: Prf,
    pub total: f64,
    pub counts: SubtaskCounts,
}

/// Rounds half away from zero to 2 decimals.
pub fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Mean of the four F1 percentages, to 2 decimals.
pub fn total(report: &MetricsReport) -> f64 {
    total_of([report.ti.f1, report.tc.f1, report.ai.f1, report.ac.f1])
}

pub fn total_of(f1s: [f64; 4]) -> f64 {
    round2(f1s.iter().sum::<f64>() / 4.0)
}

impl MetricsReport {
    pub fn from_counts(counts: SubtaskCounts) -> Self {
        let mut r = MetricsReport {
            ti: counts.ti.into(),
            tc: counts.tc.into(),
            ai: counts.ai.into(),
            ac: counts.ac.into(),
            total: 0.0,
            counts,
        };
        r.total = total(&r);
        r
    }

    pub fn subtasks(&self) -> [(&'static str, &Prf); 4] {
        [("TI", &self.ti), ("TC", &self.tc), ("AI", &self.ai), ("AC", &self.ac)]
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    /// P/R/F1 table, one row per subtask, values to 2 decimals.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Subtask | P | R | F1 |\n|---|---:|---:|---:|\n");
        for (name, m) in self.subtasks() {
            let _ = writeln!(out, "| {name} | {:.2} | {:.2} | {:.2} |", m.precision, m.recall, m.f1);
        }
        let _ = writeln!(out, "\ntotal: {:.2}", self.total);
        out
    }
}

/// One scored trigger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TriggerItem {
    pub span: Span,
    pub label: String,
}

/// One (event, argument mention) pair with every role linking them.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArgItem {
    pub event_type: String,
    pub span: Span,
    pub roles: BTreeSet<String>,
}

/// Scoreable items of one sentence.
pub fn sentence_items(s: &Sentence) -> (Vec<TriggerItem>, Vec<ArgItem>) {
    let triggers = s
        .triggers()
        .map(|m| TriggerItem {
            span: m.span,
            label: m.label.clone(),
        })
        .collect();
    let mut args: Vec<ArgItem> = Vec::new();
    for ev in &s.events {
        let Some(trigger) = s.mention(&ev.trigger_id) else {
            continue;
        };
        let mut by_arg: Vec<(&str, BTreeSet<String>)> = Vec::new();
        for a in &ev.args {
            match by_arg.iter_mut().find(|(id, _)| *id == a.arg_id) {
                Some((_, roles)) => {
                    roles.insert(a.role.clone());
                }
                None => by_arg.push((a.arg_id.as_str(), BTreeSet::from([a.role.clone()]))),
            }
        }
        for (id, roles) in by_arg {
            if let Some(m) = s.mention(id) {
                args.push(ArgItem {
                    event_type: trigger.label.clone(),
                    span: m.span,
                    roles,
                });
            }
        }
    }
    (triggers, args)
}

/// Size of a maximum one-to-one matching (augmenting paths, predictions
/// tried in order).
pub fn max_matching<P, G>(pred: &[P], gold: &[G], compatible: impl Fn(&P, &G) -> bool) -> usize {
    let adj: Vec<Vec<usize>> = pred
        .iter()
        .map(|p| (0..gold.len()).filter(|&j| compatible(p, &gold[j])).collect())
        .collect();
    let mut owner: Vec<Option<usize>> = vec![None; gold.len()];
    fn augment(i: usize, adj: &[Vec<usize>], owner: &mut [Option<usize>], seen: &mut [bool]) -> bool {
        for &j in &adj[i] {
            if seen[j] {
                continue;
            }
            seen[j] = true;
            if owner[j].is_none_or(|k| augment(k, adj, owner, seen)) {
                owner[j] = Some(i);
                return true;
            }
        }
        false
    }
    let mut matched = 0;
    for i in 0..pred.len() {
        let mut seen = vec![false; gold.len()];
        if augment(i, &adj, &mut owner, &mut seen) {
            matched += 1;
        }
    }
    matched
}

fn counts(tp: usize, n_pred: usize, n_gold: usize) -> Counts {
    Counts {
        tp,
        fp: n_pred - tp,
        fn_: n_gold - tp,
    }
}

/// Counts for one aligned sentence pair.
pub fn score_sentence(gold: &Sentence, pred: &Sentence) -> SubtaskCounts {
    let (gt, ga) = sentence_items(gold);
    let (pt, pa) = sentence_items(pred);
    let ti = max_matching(&pt, &gt, |p, g| p.span == g.span);
    let tc = max_matching(&pt, &gt, |p, g| p.span == g.span && p.label == g.label);
    let ai = max_matching(&pa, &ga, |p, g| p.event_type == g.event_type && p.span == g.span);
    let ac = max_matching(&pa, &ga, |p, g| {
        p.event_type == g.event_type && p.span == g.span && !p.roles.is_disjoint(&g.roles)
    });
    SubtaskCounts {
        ti: counts(ti, pt.len(), gt.len()),
        tc: counts(tc, pt.len(), gt.len()),
        ai: counts(ai, pa.len(), ga.len()),
        ac: counts(ac, pa.len(), ga.len()),
    }
}

/// Checks that two corpora list the same sentences in the same order.
pub fn check_alignment(gold: &[Sentence], pred: &[Sentence]) -> Result<()> {
    if gold.len() != pred.len() {
        return Err(BeeError::Alignment(format!(
            "gold has {} sentences, predictions have {}",
            gold.len(),
            pred.len()
        )));
    }
    for (i, (g, p)) in gold.iter().zip(pred).enumerate() {
        if g.doc_id != p.doc_id || g.len() != p.len() {
            return Err(BeeError::Alignment(format!(
                "sentence {i}: gold {} ({} tokens) vs prediction {} ({} tokens)",
                g.doc_id,
                g.len(),
                p.doc_id,
                p.len()
            )));
        }
    }
    Ok(())
}

/// Micro-averaged scores over aligned corpora.
pub fn score(gold: &[Sentence], pred: &[Sentence]) -> Result<MetricsReport> {
    check_alignment(gold, pred)?;
    let total = gold
        .par_iter()
        .zip(pred)
        .map(|(g, p)| score_sentence(g, p))
        .reduce(SubtaskCounts::default, |a, b| a + b);
    Ok(MetricsReport::from_counts(total))
}

/// Gold and predicted sentences paired by `(doc_id, position within document)`.
pub fn align_by_document(gold: &[Sentence], pred: &[Sentence]) -> Result<Vec<Sentence>> {
    let mut by_doc: HashMap<&str, Vec<&Sentence>> = HashMap::new();
    for p in pred {
        by_doc.entry(p.doc_id.as_str()).or_default().push(p);
    }
    let mut cursor: HashMap<&str, usize> = HashMap::new();
    let mut out = Vec::with_capacity(gold.len());
    for g in gold {
        let k = cursor.entry(g.doc_id.as_str()).or_insert(0);
        match by_doc.get(g.doc_id.as_str()).and_then(|v| v.get(*k)) {
            Some(p) => out.push((*p).clone()),
            None => {
                return Err(BeeError::Alignment(format!(
                    "no prediction for sentence {} of document {}",
                    *k, g.doc_id
                )))
            }
        }
        *k += 1;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EventStructure, Mention, MentionKind};

    #[test]
    fn prf_examples() {
        assert_eq!(prf(1, 0, 0), (1.0, 1.0, 1.0));
        assert_eq!(prf(0, 0, 0), (0.0, 0.0, 0.0));
        let (p, r, f) = prf(2, 1, 2);
        assert!((p - 2.0 / 3.0).abs() < 1e-12);
        assert!((r - 0.5).abs() < 1e-12);
        assert!((f - 4.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn total_rounds_mean_of_f1s() {
        assert_eq!(total_of([82.14, 81.65, 58.52, 56.93]), 69.81);
        assert_eq!(total_of([85.09, 83.36, 72.05, 69.43]), 77.48);
        assert!((total_of([62.83, 61.39, 61.28, 59.41]) - 61.22).abs() <= 0.01 + 1e-9);
    }

    fn sample() -> Sentence {
        let mut s = Sentence::from_words("d", &["A", "binds", "B", "and", "C"]);
        s.mentions = vec![
            Mention::new("T1", MentionKind::Entity, "Protein", Span::new(0, 0)),
            Mention::new("T2", MentionKind::Trigger, "Binding", Span::new(1, 1)),
            Mention::new("T3", MentionKind::Entity, "Protein", Span::new(2, 2)),
            Mention::new("T4", MentionKind::Trigger, "Regulation", Span::new(3, 3)),
            Mention::new("T5", MentionKind::Entity, "Protein", Span::new(4, 4)),
        ];
        s.events = vec![
            EventStructure::new("T2").with_arg("Theme", "T1").with_arg("Theme", "T3"),
            EventStructure::new("T4").with_arg("Theme", "T2").with_arg("Cause", "T5"),
        ];
        s
    }

    #[test]
    fn perfect_and_empty_predictions() {
        let g = vec![sample()];
        let r = score(&g, &g).unwrap();
        for (_, m) in r.subtasks() {
            assert_eq!(m.f1, 100.0);
        }
        let mut empty = sample();
        empty.mentions.clear();
        empty.events.clear();
        let r = score(&g, &[empty]).unwrap();
        for (_, m) in r.subtasks() {
            assert_eq!(m.f1, 0.0);
        }
        assert_eq!(r.total, 0.0);
    }

    #[test]
    fn wrong_role_counts_for_ai_only() {
        let mut p = sample();
        p.events[1].args[1].role = "Theme".into();
        let r = score(&[sample()], &[p]).unwrap();
        assert_eq!(r.counts.ai.tp, 4);
        assert_eq!(r.counts.ac.tp, 3);
    }

    #[test]
    fn misaligned_corpora_are_rejected() {
        assert!(matches!(score(&[sample()], &[]), Err(BeeError::Alignment(_))));
        let mut other = sample();
        other.doc_id = "x".into();
        assert!(matches!(score(&[sample()], &[other]), Err(BeeError::Alignment(_))));
    }

    #[test]
    fn duplicate_predictions_match_once() {
        let mut p = sample();
        p.mentions.push(Mention::new("T9", MentionKind::Trigger, "Binding", Span::new(1, 1)));
        let r = score(&[sample()], &[p]).unwrap();
        assert_eq!(r.counts.ti, Counts { tp: 2, fp: 1, fn_: 0 });
    }

    #[test]
    fn matching_finds_augmenting_paths() {
        // greedy in order would pair p0 with g0 and leave p1 unmatched
        let compat = [[true, true], [true, false]];
        assert_eq!(max_matching(&[0usize, 1], &[0usize, 1], |p, g| compat[*p][*g]), 2);
    }

    #[test]
    fn markdown_lists_every_subtask() {
        let md = score(&[sample()], &[sample()]).unwrap().to_markdown();
        for k in ["TI", "TC", "AI", "AC", "100.00"] {
            assert!(md.contains(k));
        }
    }

    #[test]
    fn documents_align_by_position() {
        let mut a = sample();
        a.doc_id = "a".into();
        let mut b = sample();
        b.doc_id = "b".into();
        let aligned = align_by_document(&[a.clone(), b.clone()], &[b.clone(), a.clone()]).unwrap();
        assert_eq!(aligned, vec![a.clone(), b]);
        assert!(align_by_document(&[a.clone(), a.clone()], std::slice::from_ref(&a)).is_err());
    }
}
