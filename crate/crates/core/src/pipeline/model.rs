//! The event extraction model: encoder, optional GCN, head/dependent MLPs and
//! the two classifiers, with a manual backward pass.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{EncoderKind, RunConfig};
use crate::assembler::{assemble_events, decode_distributions, PredictedEdge};
use crate::corpus::{encode_tags, generate_candidate_pairs, LabelInventory, Mention, Sentence, Tag, NONE_ROLE};
use crate::depgraph::DepGraph;
use crate::encoder::{Encoder, EncoderTrace, ToyEncoder, TrainScope, TransformerEncoder};
use crate::error::{BeeError, Result};
use crate::graphembed::{mention_rep, mention_rep_backward, GcnParams, GcnTrace, HeadDepParams, MlpTrace};
use crate::heads::{PairHead, TagHead};
use crate::linalg::{argmax, Matrix};
use crate::params::ParamsMut;
use crate::scalar::Scalar;

/// Label spaces fixed at training time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocab {
    pub inventory: LabelInventory,
    pub tags: Vec<Tag>,
    /// Role classes; index 0 is NONE.
    pub roles: Vec<String>,
}

impl Vocab {
    pub fn from_sentences(sentences: &[Sentence]) -> Result<Self> {
        let inventory = LabelInventory::from_sentences(sentences)?;
        let mut roles: Vec<String> = sentences
            .iter()
            .flat_map(|s| s.events.iter().flat_map(|e| e.args.iter().map(|a| a.role.clone())))
            .filter(|r| r != NONE_ROLE)
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        roles.insert(0, NONE_ROLE.to_string());
        Ok(Vocab {
            tags: inventory.tag_vocab(),
            inventory,
            roles,
        })
    }

    pub fn tag_index(&self, tag: &Tag) -> Option<usize> {
        self.tags.iter().position(|t| t == tag)
    }

    pub fn role_index(&self, role: Option<&str>) -> usize {
        role.and_then(|r| self.roles.iter().position(|x| x == r)).unwrap_or(0)
    }
}

/// Seed of one parameter group, independent of the others.
pub fn group_seed(seed: u64, group: &str) -> u64 {
    group.bytes().fold(seed ^ 0x9e37_79b9_7f4a_7c15, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct BeeModel<T> {
    pub encoder: Encoder<T>,
    pub gcn: Option<GcnParams<T>>,
    pub mlps: HeadDepParams<T>,
    pub tag_head: TagHead<T>,
    pub pair_head: PairHead<T>,
}

/// A training sentence with its targets resolved to class indices.
#[derive(Debug, Clone)]
pub struct Example<T> {
    pub sentence: Sentence,
    pub words: Vec<String>,
    pub tag_targets: Vec<usize>,
    pub mentions: Vec<Mention>,
    /// `(head mention index, dependent mention index, role index)`
    pub pairs: Vec<(usize, usize, usize)>,
    pub graph: Option<DepGraph<T>>,
}

/// Gradient-free model outputs for one sentence.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction<T> {
    pub sentence: Sentence,
    pub tag_distributions: Vec<Vec<T>>,
    pub pair_distributions: Vec<Vec<T>>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub tag: f64,
    pub pair: f64,
    pub total: f64,
}

fn sentence_id(s: &Sentence) -> String {
    let first = s.tokens.first().map_or(0, |t| t.char_start);
    format!("{}@{first}", s.doc_id)
}

pub fn build_encoder<T: Scalar>(cfg: &RunConfig) -> Result<Encoder<T>> {
    match cfg.encoder.kind {
        EncoderKind::Toy => {
            let mut e = ToyEncoder::new(cfg.encoder.dim, cfg.encoder.seed.unwrap_or(cfg.train.seed));
            e.max_len = cfg.encoder.max_len;
            Ok(Encoder::Toy(e))
        }
        EncoderKind::Pretrained => {
            let mut e = TransformerEncoder::load(std::path::Path::new(&cfg.encoder.model_name))?;
            e.config.max_len = e.config.max_len.min(cfg.encoder.max_len);
            Ok(Encoder::Pretrained(e))
        }
    }
}

/// Fresh GCN for `cfg`, seeded independently of every other group.
pub fn fresh_gcn<T: Scalar>(cfg: &RunConfig, width: usize) -> GcnParams<T> {
    let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.train.seed, "gcn"));
    let d1 = cfg.gnn.hidden_dim.unwrap_or(width);
    let d2 = cfg.gnn.out_dim.unwrap_or(width);
    GcnParams::random(width, d1, d2, cfg.gnn.bias, &mut rng)
}

impl<T: Scalar> BeeModel<T> {
    pub fn new(cfg: &RunConfig, vocab: &Vocab, encoder: Encoder<T>) -> Self {
        let width = encoder.width();
        let gcn = cfg.gnn.enabled.then(|| fresh_gcn(cfg, width));
        let rep = gcn.as_ref().map_or(width, |g| g.output_width());
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.train.seed, "mlp"));
        let mlps = HeadDepParams::random(rep, cfg.mlp.hidden_dim, cfg.mlp.out_dim, &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.train.seed, "tag_head"));
        let tag_head = TagHead::random(rep, vocab.tags.len(), &mut rng);
        let mut rng = ChaCha8Rng::seed_from_u64(group_seed(cfg.train.seed, "pair_head"));
        let pair_head = PairHead::random(cfg.head.mode, cfg.mlp.out_dim, vocab.roles.len(), &mut rng);
        BeeModel {
            encoder,
            gcn,
            mlps,
            tag_head,
            pair_head,
        }
    }

    pub fn uses_graph(&self) -> bool {
        self.gcn.is_some()
    }

    /// Resolves targets (and, in graph mode, the parse) of one gold sentence.
    pub fn prepare(&self, s: &Sentence, vocab: &Vocab) -> Result<Example<T>> {
        let enc = encode_tags(s);
        let tag_targets = enc
            .tags
            .tags
            .iter()
            .map(|t| vocab.tag_index(t).unwrap_or(0))
            .collect();
        let triggers: Vec<Mention> = enc.kept.iter().filter(|m| m.is_trigger()).cloned().collect();
        let index: HashMap<&str, usize> = enc.kept.iter().enumerate().map(|(i, m)| (m.id.as_str(), i)).collect();
        let pairs = generate_candidate_pairs(s, &triggers, &enc.kept)
            .iter()
            .map(|p| {
                (
                    index[p.head_mention.as_str()],
                    index[p.dep_mention.as_str()],
                    vocab.role_index(p.gold_role.as_deref()),
                )
            })
            .collect();
        let graph = if self.uses_graph() {
            Some(DepGraph::from_inline(s)?)
        } else {
            None
        };
        Ok(Example {
            words: s.words(),
            sentence: s.clone(),
            tag_targets,
            mentions: enc.kept,
            pairs,
            graph,
        })
    }

    fn represent(&self, c: &Matrix<T>, graph: Option<&DepGraph<T>>) -> Result<(Matrix<T>, Option<GcnTrace<T>>)> {
        match (&self.gcn, graph) {
            (Some(gcn), Some(g)) => {
                if g.n != c.rows() {
                    return Err(BeeError::Alignment(format!(
                        "parse has {} tokens, encoder output has {}",
                        g.n,
                        c.rows()
                    )));
                }
                let (out, trace) = gcn.forward(c, &g.a_norm)?;
                Ok((out, Some(trace)))
            }
            (Some(_), None) => Err(BeeError::MissingParse("graph model run without a parse".into())),
            (None, _) => Ok((c.clone(), None)),
        }
    }

    /// Encoder output of one sentence.
    pub fn token_encoding(&self, s: &Sentence) -> Result<Matrix<T>> {
        Ok(self.encoder.encode(&sentence_id(s), &s.words())?.vectors)
    }

    /// Token representations fed to the heads: GCN output, or the encoder
    /// output unchanged when the model has no GCN.
    pub fn token_reps(&self, s: &Sentence, graph: Option<&DepGraph<T>>) -> Result<Matrix<T>> {
        Ok(self.represent(&self.token_encoding(s)?, graph)?.0)
    }

    /// Full inference: predicted mentions, pairs over predicted triggers,
    /// assembled events.
    pub fn predict(&self, s: &Sentence, graph: Option<&DepGraph<T>>, vocab: &Vocab) -> Result<Prediction<T>> {
        let reps = self.token_reps(s, graph)?;
        let tag_distributions: Vec<Vec<T>> =
            (0..reps.rows()).map(|i| self.tag_head.forward(reps.row(i)).probs).collect();
        let mentions = decode_distributions(&tag_distributions, &vocab.tags, &vocab.inventory)?;
        let triggers: Vec<Mention> = mentions.iter().filter(|m| m.is_trigger()).cloned().collect();
        let mut out = Sentence {
            doc_id: s.doc_id.clone(),
            tokens: s.tokens.clone(),
            mentions,
            events: Vec::new(),
            dep_edges: None,
        };
        let pairs = generate_candidate_pairs(&out, &triggers, &out.mentions);
        let mut head_cache: HashMap<&str, Vec<T>> = HashMap::new();
        let mut dep_cache: HashMap<&str, Vec<T>> = HashMap::new();
        for m in &out.mentions {
            let u = mention_rep(&reps, m.span);
            if m.is_trigger() {
                head_cache.insert(&m.id, self.mlps.head_rep(&u));
            }
            dep_cache.insert(&m.id, self.mlps.dep_rep(&u));
        }
        let mut edges = Vec::new();
        let mut pair_distributions = Vec::with_capacity(pairs.len());
        for p in &pairs {
            let probs = self
                .pair_head
                .forward(&head_cache[p.head_mention.as_str()], &dep_cache[p.dep_mention.as_str()])
                .probs;
            let k = argmax(&probs);
            if k != 0 {
                edges.push(PredictedEdge::new(
                    &p.head_mention,
                    &p.dep_mention,
                    &vocab.roles[k],
                    probs[k].as_f64(),
                ));
            }
            pair_distributions.push(probs);
        }
        out.events = assemble_events(&triggers, &edges)?;
        Ok(Prediction {
            sentence: out,
            tag_distributions,
            pair_distributions,
        })
    }

    /// Loss of one example; with `scale > 0` also accumulates
    /// `scale · ∇loss` into every gradient buffer.
    pub fn loss_and_backward(
        &mut self,
        ex: &Example<T>,
        cached: Option<&Matrix<T>>,
        scope: TrainScope,
        lambda: f64,
        scale: f64,
    ) -> Result<LossParts> {
        let (c, enc_trace) = match cached {
            Some(c) => (c.clone(), EncoderTrace::Frozen),
            None => {
                let (out, trace) = self.encoder.forward_train(&sentence_id(&ex.sentence), &ex.words, scope)?;
                (out.vectors, trace)
            }
        };
        let (reps, gcn_trace) = self.represent(&c, ex.graph.as_ref())?;
        let n = reps.rows();
        let mut d_reps = Matrix::zeros(n, reps.cols());

        let tag_scale = T::of(scale / n.max(1) as f64);
        let mut tag_loss = 0.0;
        for (i, &gold) in ex.tag_targets.iter().enumerate() {
            let trace = self.tag_head.forward(reps.row(i));
            tag_loss -= trace.probs[gold].as_f64().max(f64::MIN_POSITIVE).ln();
            if scale > 0.0 {
                let g = self.tag_head.backward(reps.row(i), &trace, gold, tag_scale);
                for (o, v) in d_reps.row_mut(i).iter_mut().zip(g) {
                    *o += v;
                }
            }
        }
        tag_loss /= n.max(1) as f64;

        let mut pair_loss = 0.0;
        if !ex.pairs.is_empty() {
            let m = ex.mentions.len();
            let mut heads: Vec<Option<(Vec<T>, MlpTrace<T>)>> = vec![None; m];
            let mut deps: Vec<Option<(Vec<T>, MlpTrace<T>)>> = vec![None; m];
            for &(h, d, _) in &ex.pairs {
                if heads[h].is_none() {
                    heads[h] = Some(self.mlps.head.forward(&mention_rep(&reps, ex.mentions[h].span)));
                }
                if deps[d].is_none() {
                    deps[d] = Some(self.mlps.dep.forward(&mention_rep(&reps, ex.mentions[d].span)));
                }
            }
            let width = self.mlps.head.output_width();
            let mut d_head = vec![vec![T::zero(); width]; m];
            let mut d_dep = vec![vec![T::zero(); width]; m];
            let pair_scale = T::of(scale * lambda / ex.pairs.len() as f64);
            for &(h, d, role) in &ex.pairs {
                let hv = &heads[h].as_ref().expect("filled above").0;
                let dv = &deps[d].as_ref().expect("filled above").0;
                let trace = self.pair_head.forward(hv, dv);
                pair_loss -= trace.probs[role].as_f64().max(f64::MIN_POSITIVE).ln();
                if scale > 0.0 {
                    let (gh, gd) = self.pair_head.backward(hv, dv, &trace, role, pair_scale);
                    for (o, v) in d_head[h].iter_mut().zip(gh) {
                        *o += v;
                    }
                    for (o, v) in d_dep[d].iter_mut().zip(gd) {
                        *o += v;
                    }
                }
            }
            pair_loss /= ex.pairs.len() as f64;
            if scale > 0.0 {
                for k in 0..m {
                    let span = ex.mentions[k].span;
                    if let Some((_, trace)) = &heads[k] {
                        let du = self.mlps.head.backward(trace, &d_head[k]);
                        mention_rep_backward(&mut d_reps, span, &du);
                    }
                    if let Some((_, trace)) = &deps[k] {
                        let du = self.mlps.dep.backward(trace, &d_dep[k]);
                        mention_rep_backward(&mut d_reps, span, &du);
                    }
                }
            }
        }

        if scale > 0.0 {
            let d_c = match (&mut self.gcn, &gcn_trace, &ex.graph) {
                (Some(gcn), Some(trace), Some(g)) => gcn.backward(trace, &g.a_norm, &d_reps)?,
                _ => d_reps,
            };
            self.encoder.backward(&enc_trace, &d_c, scope)?;
        }
        Ok(LossParts {
            tag: tag_loss,
            pair: pair_loss,
            total: tag_loss + lambda * pair_loss,
        })
    }

    /// Every non-encoder parameter, named.
    pub fn head_params_mut(&mut self) -> ParamsMut<'_, T> {
        let mut out = Vec::new();
        if let Some(g) = &mut self.gcn {
            out.extend(g.params_mut());
        }
        out.extend(self.mlps.params_mut());
        out.extend(self.tag_head.params_mut());
        out.extend(self.pair_head.params_mut());
        out
    }

    pub fn zero_grad(&mut self) {
        self.encoder.zero_grad();
        for (_, p) in self.head_params_mut() {
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{EventStructure, MentionKind, Span};
    use crate::depgraph::DepEdge;

    fn corpus() -> Vec<Sentence> {
        let mut s = Sentence::from_words("d", &["A", "binds", "B", "."]);
        s.mentions = vec![
            Mention::new("T1", MentionKind::Entity, "Protein", Span::new(0, 0)),
            Mention::new("T2", MentionKind::Trigger, "Binding", Span::new(1, 1)),
            Mention::new("T3", MentionKind::Entity, "Protein", Span::new(2, 2)),
        ];
        s.events = vec![EventStructure::new("T2").with_arg("Theme", "T1")];
        s.dep_edges = Some(vec![DepEdge::new(1, 0, "nsubj"), DepEdge::new(1, 2, "obj"), DepEdge::new(1, 3, "punct")]);
        vec![s]
    }

    fn config(gnn: bool) -> RunConfig {
        let mut cfg = RunConfig::from_toml("data.train = \"x\"").unwrap();
        cfg.gnn.enabled = gnn;
        cfg.encoder.dim = 8;
        cfg.mlp.hidden_dim = 6;
        cfg.mlp.out_dim = 5;
        cfg
    }

    #[test]
    fn vocab_has_none_first() {
        let v = Vocab::from_sentences(&corpus()).unwrap();
        assert_eq!(v.roles, vec!["NONE", "Theme"]);
        assert_eq!(v.tags.len(), 5);
    }

    #[test]
    fn example_pairs_use_gold_roles() {
        let cfg = config(true);
        let v = Vocab::from_sentences(&corpus()).unwrap();
        let model = BeeModel::<f64>::new(&cfg, &v, build_encoder(&cfg).unwrap());
        let ex = model.prepare(&corpus()[0], &v).unwrap();
        assert_eq!(ex.pairs, vec![(1, 0, 1), (1, 2, 0)]);
        assert!(ex.graph.is_some());
        let plain = BeeModel::<f64>::new(&config(false), &v, build_encoder(&cfg).unwrap());
        assert!(plain.prepare(&corpus()[0], &v).unwrap().graph.is_none());
    }

    #[test]
    fn graph_mode_requires_a_parse() {
        let cfg = config(true);
        let mut c = corpus();
        c[0].dep_edges = None;
        let v = Vocab::from_sentences(&c).unwrap();
        let model = BeeModel::<f64>::new(&cfg, &v, build_encoder(&cfg).unwrap());
        assert!(matches!(model.prepare(&c[0], &v), Err(BeeError::MissingParse(_))));
    }

    #[test]
    fn no_graph_reps_are_encoder_output() {
        let cfg = config(false);
        let v = Vocab::from_sentences(&corpus()).unwrap();
        let model = BeeModel::<f64>::new(&cfg, &v, build_encoder(&cfg).unwrap());
        let s = &corpus()[0];
        let c = model.encoder.encode(&sentence_id(s), &s.words()).unwrap().vectors;
        assert_eq!(model.token_reps(s, None).unwrap(), c);
    }

    #[test]
    fn model_gradients_match_finite_differences() {
        let cfg = config(true);
        let v = Vocab::from_sentences(&corpus()).unwrap();
        let mut model = BeeModel::<f64>::new(&cfg, &v, build_encoder(&cfg).unwrap());
        let ex = model.prepare(&corpus()[0], &v).unwrap();
        model.zero_grad();
        model.loss_and_backward(&ex, None, TrainScope::HeadsOnly, 1.0, 1.0).unwrap();
        let names: Vec<String> = model.head_params_mut().into_iter().map(|(n, _)| n).collect();
        for name in names {
            let (analytic, len) = {
                let mut ps = model.head_params_mut();
                let p = &mut ps.iter_mut().find(|(n, _)| *n == name).unwrap().1;
                (p.grad_mut().as_slice().to_vec(), p.value.as_slice().len())
            };
            for k in (0..len).step_by(7) {
                let eps = 1e-6;
                let bump = |model: &mut BeeModel<f64>, delta: f64| {
                    let mut ps = model.head_params_mut();
                    ps.iter_mut().find(|(n, _)| *n == name).unwrap().1.value.as_mut_slice()[k] += delta;
                };
                bump(&mut model, eps);
                let up = model.loss_and_backward(&ex, None, TrainScope::HeadsOnly, 1.0, 0.0).unwrap().total;
                bump(&mut model, -2.0 * eps);
                let down = model.loss_and_backward(&ex, None, TrainScope::HeadsOnly, 1.0, 0.0).unwrap().total;
                bump(&mut model, eps);
                let numeric = (up - down) / (2.0 * eps);
                assert!((numeric - analytic[k]).abs() < 1e-6, "{name}[{k}]: {numeric} vs {}", analytic[k]);
            }
        }
    }

    #[test]
    fn predictions_are_well_formed() {
        let cfg = config(true);
        let c = corpus();
        let v = Vocab::from_sentences(&c).unwrap();
        let model = BeeModel::<f32>::new(&cfg, &v, build_encoder(&cfg).unwrap());
        let g = DepGraph::from_inline(&c[0]).unwrap();
        let p = model.predict(&c[0], Some(&g), &v).unwrap();
        p.sentence.validate().unwrap();
        assert_eq!(p.tag_distributions.len(), 4);
        for d in p.tag_distributions.iter().chain(&p.pair_distributions) {
            assert!((d.iter().sum::<f32>() - 1.0).abs() < 1e-6);
        }
    }
}
