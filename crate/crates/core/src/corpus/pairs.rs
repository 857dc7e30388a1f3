use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{Mention, Sentence};

/// Label of a pair that carries no argument relation.
pub const NONE_ROLE: &str = "NONE";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidatePair {
    pub head_mention: String,
    pub dep_mention: String,
    /// `None` stands for the NONE class.
    pub gold_role: Option<String>,
}

fn by_span<'a>(ms: impl IntoIterator<Item = &'a Mention>) -> Vec<&'a Mention> {
    let mut v: Vec<&Mention> = ms.into_iter().collect();
    v.sort_by(|a, b| a.span.cmp(&b.span).then(a.id.cmp(&b.id)));
    v
}

/// Every (trigger, other mention) pair, ordered by head span then dependent span.
///
/// Gold roles come from `s.events`; when one pair carries several roles the
/// first listed wins.
pub fn generate_candidate_pairs(s: &Sentence, triggers: &[Mention], mentions: &[Mention]) -> Vec<CandidatePair> {
    let mut gold: HashMap<(&str, &str), &str> = HashMap::new();
    for ev in &s.events {
        for arg in &ev.args {
            gold.entry((ev.trigger_id.as_str(), arg.arg_id.as_str()))
                .or_insert(arg.role.as_str());
        }
    }
    let heads = by_span(triggers);
    let deps = by_span(mentions);
    let mut out = Vec::with_capacity(heads.len() * deps.len());
    for h in &heads {
        for d in deps.iter().filter(|d| d.id != h.id) {
            out.push(CandidatePair {
                head_mention: h.id.clone(),
                dep_mention: d.id.clone(),
                gold_role: gold.get(&(h.id.as_str(), d.id.as_str())).map(|r| r.to_string()),
            });
        }
    }
    out
}
