//! Seeded synthetic corpora with inline dependency trees.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use std::fs;
use std::path::Path;

use super::config::RunConfig;
use super::model::group_seed;
use crate::corpus::{save_json_corpus, EventStructure, Mention, MentionKind, Sentence, Span};
use crate::depgraph::{write_conllu, DepEdge};
use crate::error::Result;

pub const ENTITY_TYPES: [&str; 4] = ["Protein", "Chemical", "Gene", "Cell"];
pub const TRIGGER_TYPES: [&str; 3] = ["Binding", "Regulation", "Expression"];
pub const ROLES: [&str; 3] = ["Theme", "Cause", "Site"];

fn word(prefix: &str, k: usize) -> String {
    format!("{prefix}{k}")
}

/// Random tree: each node in `order` after the first hangs off a uniformly
/// chosen earlier node, which becomes its head.
fn random_tree<R: Rng>(order: &[usize], rng: &mut R) -> Vec<DepEdge> {
    (1..order.len())
        .map(|k| DepEdge::new(order[rng.random_range(0..k)], order[k], "dep"))
        .collect()
}

/// Small annotated sentences over four entity types, three trigger types and
/// three roles, including multi-token entities and nested events.
pub fn overfit_corpus(n: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| overfit_sentence(&format!("synth-{i}"), &mut rng)).collect()
}

fn overfit_sentence(doc_id: &str, rng: &mut ChaCha8Rng) -> Sentence {
    let n_ent = rng.random_range(2..=3);
    let n_trig = rng.random_range(1..=2);
    let n_fill = rng.random_range(3..=6);
    // (kind, type index, token length)
    let mut units: Vec<(MentionKind, usize, usize)> = Vec::new();
    for _ in 0..n_ent {
        units.push((MentionKind::Entity, rng.random_range(0..4), rng.random_range(1..=2)));
    }
    for _ in 0..n_trig {
        units.push((MentionKind::Trigger, rng.random_range(0..3), 1));
    }
    for _ in 0..n_fill {
        units.push((MentionKind::Entity, usize::MAX, 1));
    }
    units.shuffle(rng);
    let mut words = Vec::new();
    let mut mentions = Vec::new();
    for (kind, ty, len) in units {
        let start = words.len();
        if ty == usize::MAX {
            words.push(word("w", rng.random_range(0..20)));
            continue;
        }
        for _ in 0..len {
            match kind {
                MentionKind::Entity => words.push(word(&ENTITY_TYPES[ty][..3].to_lowercase(), rng.random_range(0..6))),
                MentionKind::Trigger => words.push(word(&TRIGGER_TYPES[ty][..3].to_lowercase(), rng.random_range(0..4))),
            }
        }
        let label = match kind {
            MentionKind::Entity => ENTITY_TYPES[ty],
            MentionKind::Trigger => TRIGGER_TYPES[ty],
        };
        mentions.push((kind, label, Span::new(start, start + len - 1)));
    }
    let mut s = Sentence::from_words(doc_id, &words);
    s.mentions = mentions
        .into_iter()
        .enumerate()
        .map(|(k, (kind, label, span))| Mention::new(format!("T{}", k + 1), kind, label, span))
        .collect();
    let entities: Vec<String> = s.entities().map(|m| m.id.clone()).collect();
    let triggers: Vec<String> = s.triggers().map(|m| m.id.clone()).collect();
    for (ti, t) in triggers.iter().enumerate() {
        let mut ev = EventStructure::new(t.clone());
        if ti > 0 && rng.random_bool(0.5) {
            ev = ev.with_arg("Theme", triggers[0].clone());
        } else {
            ev = ev.with_arg("Theme", entities[rng.random_range(0..entities.len())].clone());
        }
        if rng.random_bool(0.6) {
            let arg = entities[rng.random_range(0..entities.len())].clone();
            if ev.args.iter().all(|a| a.arg_id != arg) {
                ev = ev.with_arg(ROLES[rng.random_range(1..3)], arg);
            }
        }
        s.events.push(ev);
    }
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.shuffle(rng);
    s.dep_edges = Some(random_tree(&order, rng));
    s
}

/// Sentences with one trigger and several entities where an entity is the
/// trigger's Theme exactly when a dependency arc joins them. Non-arguments sit
/// at least three arcs from the trigger. Word choice and token positions are
/// random, so only the parse separates arguments from non-arguments. The
/// parse is a tree rooted at the trigger.
pub fn ablation_corpus(n: usize, seed: u64) -> Vec<Sentence> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| ablation_sentence(&format!("graph-{i}"), &mut rng)).collect()
}

fn ablation_sentence(doc_id: &str, rng: &mut ChaCha8Rng) -> Sentence {
    let n_theme = rng.random_range(1..=2);
    let n_other = rng.random_range(2..=3);
    let n_fill = rng.random_range(3..=6);
    // node 0 trigger, then themes, others, fillers
    let n = 1 + n_theme + n_other + n_fill;
    let theme = 1..1 + n_theme;
    let other = 1 + n_theme..1 + n_theme + n_other;
    let fill: Vec<usize> = (1 + n_theme + n_other..n).collect();
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![0usize; n];
    for t in theme.clone() {
        parent[t] = 0;
        depth[t] = 1;
    }
    // a filler chain trigger - f0 - f1 guarantees a node at depth 2
    parent[fill[0]] = 0;
    depth[fill[0]] = 1;
    parent[fill[1]] = fill[0];
    depth[fill[1]] = 2;
    for k in 2..fill.len() {
        let choices: Vec<usize> = std::iter::once(0).chain(fill[..k].iter().copied()).collect();
        let p = choices[rng.random_range(0..choices.len())];
        parent[fill[k]] = p;
        depth[fill[k]] = depth[p] + 1;
    }
    let deep: Vec<usize> = fill.iter().copied().filter(|&f| depth[f] >= 2).collect();
    for o in other.clone() {
        parent[o] = deep[rng.random_range(0..deep.len())];
    }
    let mut position: Vec<usize> = (0..n).collect();
    position.shuffle(rng);
    let trigger_type = rng.random_range(0..2);
    let mut words = vec![String::new(); n];
    words[position[0]] = word(&TRIGGER_TYPES[trigger_type][..3].to_lowercase(), rng.random_range(0..4));
    for e in 1..1 + n_theme + n_other {
        words[position[e]] = word("prot", rng.random_range(0..12));
    }
    for &f in &fill {
        words[position[f]] = word("w", rng.random_range(0..24));
    }
    let mut s = Sentence::from_words(doc_id, &words);
    let mut mentions: Vec<(usize, Mention)> = Vec::new();
    mentions.push((
        0,
        Mention::new("", MentionKind::Trigger, TRIGGER_TYPES[trigger_type], Span::new(position[0], position[0])),
    ));
    for e in 1..1 + n_theme + n_other {
        mentions.push((e, Mention::new("", MentionKind::Entity, "Protein", Span::new(position[e], position[e]))));
    }
    mentions.sort_by_key(|(_, m)| m.span);
    let mut id_of = vec![String::new(); n];
    for (k, (node, m)) in mentions.iter_mut().enumerate() {
        m.id = format!("T{}", k + 1);
        id_of[*node] = m.id.clone();
    }
    s.mentions = mentions.into_iter().map(|(_, m)| m).collect();
    let mut ev = EventStructure::new(id_of[0].clone());
    let mut themes: Vec<usize> = theme.collect();
    themes.sort_by_key(|&t| position[t]);
    for t in themes {
        ev = ev.with_arg("Theme", id_of[t].clone());
    }
    s.events.push(ev);
    s.dep_edges = Some(
        (1..n)
            .map(|node| DepEdge::new(position[parent[node]], position[node], "dep"))
            .collect(),
    );
    s
}

/// Split sizes of the graph-determined dataset.
pub const ABLATION_SPLITS: [(&str, usize); 3] = [("train", 400), ("dev", 50), ("test", 100)];

/// Writes `{split}.jsonl` (parse stripped) and `{split}.conllu` for the
/// graph-determined corpus, plus a matching `config.toml`.
pub fn write_ablation_dataset(dir: &Path, seed: u64) -> Result<RunConfig> {
    fs::create_dir_all(dir)?;
    for (split, n) in ABLATION_SPLITS {
        let mut sentences = ablation_corpus(n, group_seed(seed, split));
        fs::write(dir.join(format!("{split}.conllu")), write_conllu(&sentences)?)?;
        for s in &mut sentences {
            s.dep_edges = None;
        }
        save_json_corpus(&dir.join(format!("{split}.jsonl")), &sentences)?;
    }
    let cfg = RunConfig::from_toml(&format!(
        r#"
data.train = "train.jsonl"
data.dev = "dev.jsonl"
data.test = "test.jsonl"
data.train_parse = "train.conllu"
data.dev_parse = "dev.conllu"
data.test_parse = "test.conllu"
train.lr = 0.003
train.epochs = 60
train.batch_size = 8
train.seed = {seed}
output_dir = "out"
"#
    ))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let mut resolved = cfg;
    resolved.resolve_paths(dir);
    Ok(resolved)
}

/// Writes a 20-sentence `train.jsonl` with inline parses and a `config.toml`
/// that trains and validates on it.
pub fn write_overfit_dataset(dir: &Path, seed: u64) -> Result<RunConfig> {
    fs::create_dir_all(dir)?;
    save_json_corpus(&dir.join("train.jsonl"), &overfit_corpus(20, seed))?;
    let cfg = RunConfig::from_toml(&format!(
        r#"
data.train = "train.jsonl"
train.lr = 0.003
train.epochs = 200
train.batch_size = 4
train.seed = {seed}
output_dir = "out"
"#
    ))?;
    fs::write(dir.join("config.toml"), cfg.to_toml())?;
    let mut resolved = cfg;
    resolved.resolve_paths(dir);
    Ok(resolved)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::depgraph::DepGraph;

    #[test]
    fn overfit_corpus_is_valid_and_seeded() {
        let c = overfit_corpus(20, 1);
        assert_eq!(c.len(), 20);
        for s in &c {
            s.validate().unwrap();
            DepGraph::<f64>::from_inline(s).unwrap();
        }
        assert_eq!(c, overfit_corpus(20, 1));
        assert_ne!(c, overfit_corpus(20, 2));
        let entity_types: std::collections::BTreeSet<&str> =
            c.iter().flat_map(|s| s.entities().map(|m| m.label.as_str())).collect();
        assert_eq!(entity_types.len(), 4);
    }

    #[test]
    fn ablation_roles_follow_the_parse() {
        let c = ablation_corpus(200, 3);
        let mut adjacent = 0usize;
        let mut total = 0usize;
        for s in &c {
            s.validate().unwrap();
            let edges = s.dep_edges.as_ref().unwrap();
            assert_eq!(edges.len(), s.len() - 1);
            let trig = s.triggers().next().unwrap();
            let themes: Vec<&str> = s.events[0].args.iter().map(|a| a.arg_id.as_str()).collect();
            for e in s.entities() {
                let linked = edges.iter().any(|d| {
                    (d.head == trig.span.start && d.dependent == e.span.start)
                        || (d.dependent == trig.span.start && d.head == e.span.start)
                });
                assert_eq!(linked, themes.contains(&e.id.as_str()));
                adjacent += linked as usize;
                total += 1;
            }
        }
        let frac = adjacent as f64 / total as f64;
        assert!(frac < 3.0 / 7.0, "{frac}");
    }

    #[test]
    fn written_dataset_loads_with_and_without_parses() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = write_ablation_dataset(dir.path(), 5).unwrap();
        let plain = crate::pipeline::load_corpus(cfg.data.dev.as_ref().unwrap(), None, false).unwrap();
        assert!(plain.iter().all(|s| s.dep_edges.is_none()));
        let parsed =
            crate::pipeline::load_corpus(cfg.data.dev.as_ref().unwrap(), cfg.data.dev_parse.as_deref(), true).unwrap();
        let mut expected = ablation_corpus(50, group_seed(5, "dev"));
        let mut parsed = parsed;
        for s in expected.iter_mut().chain(parsed.iter_mut()) {
            s.dep_edges.as_mut().unwrap().sort_by_key(|e| e.dependent);
            s.mentions.sort_by(|a, b| a.id.cmp(&b.id));
        }
        assert_eq!(parsed, expected);
        assert_eq!(RunConfig::load(&dir.path().join("config.toml")).unwrap(), cfg);
    }
}
