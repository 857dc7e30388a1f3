//! Training loop, evaluation, checkpoints and GCN-model initialization from a
//! trained encoder-only model.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{Precision, RunConfig};
use super::model::{build_encoder, group_seed, BeeModel, Example, LossParts, Prediction, Vocab};
use crate::assembler::document_text;
use crate::corpus::{load_json_corpus, load_standoff_dir, write_json_corpus, write_standoff, Sentence};
use crate::depgraph::{attach_conllu, DepGraph};
use crate::error::{BeeError, Result};
use crate::linalg::Matrix;
use crate::params::{Adam, AdamConfig};
use crate::scalar::Scalar;
use crate::scorer::{score, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub tag_loss: f64,
    pub pair_loss: f64,
    pub loss: f64,
    pub validation: MetricsReport,
}

/// Everything needed to rebuild a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Checkpoint<T> {
    pub precision: Precision,
    pub config: RunConfig,
    pub vocab: Vocab,
    pub model: BeeModel<T>,
    /// Epoch whose parameters are stored; 0 is the initialization.
    pub epoch: usize,
    pub history: Vec<EpochRecord>,
}

#[derive(Deserialize)]
struct PrecisionProbe {
    precision: Precision,
}

/// Precision a checkpoint file was written with.
pub fn checkpoint_precision(path: &Path) -> Result<Precision> {
    let probe: PrecisionProbe = serde_json::from_str(&fs::read_to_string(path)?)?;
    Ok(probe.precision)
}

impl<T: Scalar> Checkpoint<T> {
    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let ck: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ck.precision.name() != T::NAME {
            return Err(BeeError::Config(format!(
                "checkpoint holds {} parameters, requested {}",
                ck.precision.name(),
                T::NAME
            )));
        }
        Ok(ck)
    }
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    pub fn of<T: Scalar>() -> Self {
        if T::NAME == "f32" {
            Precision::F32
        } else {
            Precision::F64
        }
    }
}

/// Loads a JSON-lines file or standoff directory. The parse sidecar is read
/// only when `need_parse` is set, and then every sentence must have a parse.
pub fn load_corpus(path: &Path, parse: Option<&Path>, need_parse: bool) -> Result<Vec<Sentence>> {
    let mut sentences = if path.is_dir() {
        let load = load_standoff_dir(path)?;
        if load.dropped_cross_sentence > 0 {
            log::warn!(
                "{}: dropped {} cross-sentence event(s)",
                path.display(),
                load.dropped_cross_sentence
            );
        }
        load.sentences
    } else {
        load_json_corpus(path)?
    };
    if need_parse {
        if let Some(p) = parse {
            attach_conllu(&mut sentences, &fs::read_to_string(p)?)?;
        }
        if let Some((i, s)) = sentences.iter().enumerate().find(|(_, s)| s.dep_edges.is_none()) {
            return Err(BeeError::MissingParse(format!(
                "{}: sentence {i} of {} has no dependency parse",
                path.display(),
                s.doc_id
            )));
        }
    }
    Ok(sentences)
}

fn graphs_for<T: Scalar>(model: &BeeModel<T>, sentences: &[Sentence]) -> Result<Vec<Option<DepGraph<T>>>> {
    sentences
        .iter()
        .map(|s| {
            if model.uses_graph() {
                DepGraph::from_inline(s).map(Some)
            } else {
                Ok(None)
            }
        })
        .collect()
}

/// Model outputs over a corpus, in corpus order.
pub fn predict_corpus<T: Scalar>(model: &BeeModel<T>, vocab: &Vocab, sentences: &[Sentence]) -> Result<Vec<Prediction<T>>> {
    let graphs = graphs_for(model, sentences)?;
    sentences
        .par_iter()
        .zip(&graphs)
        .map(|(s, g)| model.predict(s, g.as_ref(), vocab))
        .collect()
}

pub struct Evaluation<T> {
    pub report: MetricsReport,
    pub predictions: Vec<Prediction<T>>,
}

/// End-to-end scores: predicted triggers feed pair classification.
pub fn evaluate<T: Scalar>(model: &BeeModel<T>, vocab: &Vocab, gold: &[Sentence]) -> Result<Evaluation<T>> {
    let predictions = predict_corpus(model, vocab, gold)?;
    let pred: Vec<Sentence> = predictions.iter().map(|p| p.sentence.clone()).collect();
    Ok(Evaluation {
        report: score(gold, &pred)?,
        predictions,
    })
}

/// Fresh model for `cfg` with label spaces from the training split, then trained.
pub fn train<T: Scalar>(
    cfg: &RunConfig,
    train_set: &[Sentence],
    dev: Option<&[Sentence]>,
    out_dir: Option<&Path>,
) -> Result<Checkpoint<T>> {
    let vocab = Vocab::from_sentences(train_set)?;
    let model = BeeModel::new(cfg, &vocab, build_encoder(cfg)?);
    train_model(model, vocab, cfg, train_set, dev, out_dir)
}

/// Trains `model`; the returned checkpoint holds the parameters of the epoch
/// with the best validation total (the initialization for 0 epochs).
pub fn train_model<T: Scalar>(
    mut model: BeeModel<T>,
    vocab: Vocab,
    cfg: &RunConfig,
    train_set: &[Sentence],
    dev: Option<&[Sentence]>,
    out_dir: Option<&Path>,
) -> Result<Checkpoint<T>> {
    let tc = &cfg.train;
    let scope = cfg.encoder.train_scope;
    let examples: Vec<Example<T>> = train_set.iter().map(|s| model.prepare(s, &vocab)).collect::<Result<_>>()?;
    let validation = dev.unwrap_or(train_set);
    if dev.is_none() {
        log::warn!("no validation split; selecting the checkpoint on the training split");
    }
    graphs_for(&model, validation)?;
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
    }
    let frozen = model.encoder.is_frozen(scope);
    let cache: Vec<Option<Matrix<T>>> = if frozen {
        examples
            .par_iter()
            .map(|ex| model.token_encoding(&ex.sentence).map(Some))
            .collect::<Result<_>>()?
    } else {
        vec![None; examples.len()]
    };

    let mut opt = Adam::new(AdamConfig::default());
    let mut rng = ChaCha8Rng::seed_from_u64(group_seed(tc.seed, "shuffle"));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut best = Checkpoint {
        precision: Precision::of::<T>(),
        config: cfg.clone(),
        vocab: vocab.clone(),
        model: model.clone(),
        epoch: 0,
        history: Vec::new(),
    };
    let mut best_total = f64::NEG_INFINITY;
    let mut history = Vec::new();
    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut sums = LossParts::default();
        for batch in order.chunks(tc.batch_size) {
            model.zero_grad();
            let scale = 1.0 / batch.len() as f64;
            for &i in batch {
                let l = model.loss_and_backward(&examples[i], cache[i].as_ref(), scope, tc.lambda, scale)?;
                if !l.total.is_finite() {
                    return Err(BeeError::Contract(format!("non-finite loss at epoch {epoch}")));
                }
                sums.tag += l.tag;
                sums.pair += l.pair;
                sums.total += l.total;
            }
            for (name, p) in model.head_params_mut() {
                opt.step(&name, p, tc.lr);
            }
            if !frozen {
                for (name, p) in model.encoder.trainable_params(scope) {
                    opt.step(&name, p, tc.encoder_lr);
                }
            }
        }
        let n = examples.len().max(1) as f64;
        let report = evaluate(&model, &vocab, validation)?.report;
        let record = EpochRecord {
            epoch,
            tag_loss: sums.tag / n,
            pair_loss: sums.pair / n,
            loss: sums.total / n,
            validation: report,
        };
        log::info!(
            "epoch {epoch}: loss {:.4} (tag {:.4}, pair {:.4}), validation total {:.2}",
            record.loss,
            record.tag_loss,
            record.pair_loss,
            record.validation.total
        );
        if record.validation.total > best_total {
            best_total = record.validation.total;
            best.model = model.clone();
            best.epoch = epoch;
        }
        history.push(record);
        if let Some(dir) = out_dir {
            fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&history)?)?;
        }
    }
    best.history = history;
    if let Some(dir) = out_dir {
        best.save(&dir.join("checkpoint.json"))?;
    }
    Ok(best)
}

/// Graph model initialized from an encoder-only checkpoint: encoder, MLPs and
/// heads copied, GCN freshly seeded from `cfg`.
pub fn init_from<T: Scalar>(source: &Checkpoint<T>, cfg: &RunConfig) -> Result<BeeModel<T>> {
    if source.model.uses_graph() {
        return Err(BeeError::Incompatible(vec!["gcn (source model already has one)".into()]));
    }
    let mut graph_cfg = cfg.clone();
    graph_cfg.gnn.enabled = true;
    let mut target = BeeModel::new(&graph_cfg, &source.vocab, source.model.encoder.clone());
    let src = &source.model;
    let mut mismatched = Vec::new();
    let shapes = |m: &BeeModel<T>| {
        (
            [m.mlps.head.w1.shape(), m.mlps.head.w2.shape(), m.mlps.dep.w1.shape(), m.mlps.dep.w2.shape()],
            [m.tag_head.w.shape(), m.tag_head.b.shape()],
            (m.pair_head.mode, m.pair_head.w.shape(), m.pair_head.a.shape()),
        )
    };
    let (s_mlp, s_tag, s_pair) = shapes(src);
    let (t_mlp, t_tag, t_pair) = shapes(&target);
    if s_mlp != t_mlp {
        mismatched.push(format!("mlp: source {s_mlp:?}, target {t_mlp:?}"));
    }
    if s_tag != t_tag {
        mismatched.push(format!("tag_head: source {s_tag:?}, target {t_tag:?}"));
    }
    if s_pair != t_pair {
        mismatched.push(format!("pair_head: source {s_pair:?}, target {t_pair:?}"));
    }
    if !mismatched.is_empty() {
        return Err(BeeError::Incompatible(mismatched));
    }
    target.mlps = src.mlps.clone();
    target.tag_head = src.tag_head.clone();
    target.pair_head = src.pair_head.clone();
    Ok(target)
}

fn file_stem(doc_id: &str) -> String {
    let s: String = doc_id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
        .collect();
    if s.is_empty() {
        "doc".into()
    } else {
        s
    }
}

/// Writes predictions as `predictions.jsonl` plus `.a1`/`.a2` files per document under `a2/`.
pub fn write_predictions(dir: &Path, predictions: &[Sentence]) -> Result<()> {
    fs::create_dir_all(dir.join("a2"))?;
    fs::write(dir.join("predictions.jsonl"), write_json_corpus(predictions))?;
    let mut docs: Vec<(&str, Vec<Sentence>)> = Vec::new();
    for s in predictions {
        match docs.iter_mut().find(|(d, _)| *d == s.doc_id) {
            Some((_, v)) => v.push(s.clone()),
            None => docs.push((&s.doc_id, vec![s.clone()])),
        }
    }
    for (doc, sentences) in docs {
        let mut numbered = sentences.clone();
        renumber(&mut numbered);
        let text = document_text(&numbered);
        let (a1, a2) = write_standoff(&numbered, &text);
        let stem = file_stem(doc);
        fs::write(dir.join("a2").join(format!("{stem}.txt")), text)?;
        fs::write(dir.join("a2").join(format!("{stem}.a1")), a1)?;
        fs::write(dir.join("a2").join(format!("{stem}.a2")), a2)?;
    }
    Ok(())
}

/// Gives mentions document-unique ids `T1..Tn`.
fn renumber(sentences: &mut [Sentence]) {
    let mut next = 0;
    for s in sentences {
        let mut map = std::collections::HashMap::new();
        for m in &mut s.mentions {
            next += 1;
            let id = format!("T{next}");
            map.insert(std::mem::replace(&mut m.id, id.clone()), id);
        }
        for ev in &mut s.events {
            ev.trigger_id = map[&ev.trigger_id].clone();
            for a in &mut ev.args {
                a.arg_id = map[&a.arg_id].clone();
            }
        }
    }
}

/// Output location for a run, created on demand.
pub fn run_dir(cfg: &RunConfig, sub: &str) -> Result<PathBuf> {
    let dir = if sub.is_empty() { cfg.output_dir.clone() } else { cfg.output_dir.join(sub) };
    fs::create_dir_all(&dir)?;
    Ok(dir)
}
