//! Encoder-only model vs. the same model with a GCN, on one test split.

use std::fmt::Write as _;
use std::fs;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use super::run::load_splits;
use super::train::{evaluate, init_from, run_dir, train, train_model, write_predictions};
use crate::corpus::Sentence;
use crate::error::Result;
use crate::scalar::Scalar;
use crate::scorer::MetricsReport;

pub const NO_GRAPH_NAME: &str = "BioBert-BEE";
pub const WITH_GRAPH_NAME: &str = "BioBert-GNN-BEE";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub no_graph: MetricsReport,
    pub with_graph: MetricsReport,
}

impl AblationReport {
    pub fn rows(&self) -> [(&'static str, &MetricsReport); 2] {
        [(NO_GRAPH_NAME, &self.no_graph), (WITH_GRAPH_NAME, &self.with_graph)]
    }

    /// F1 table: one row per model, columns TI, TC, AI, AC, total.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| Model | TI | TC | AI | AC | total |\n|---|---:|---:|---:|---:|---:|\n");
        for (name, r) in self.rows() {
            let _ = writeln!(
                out,
                "| {name} | {:.2} | {:.2} | {:.2} | {:.2} | {:.2} |",
                r.ti.f1, r.tc.f1, r.ai.f1, r.ac.f1, r.total
            );
        }
        out
    }
}

/// Trains the encoder-only model, initializes the GCN model from it, trains
/// that, and scores both on the test split (dev, then train, when absent).
///
/// Writes `metrics.json`, `report.md` and one subdirectory per model with its
/// epoch history, checkpoint and predictions under `cfg.output_dir`.
pub fn ablate<T: Scalar>(cfg: &RunConfig) -> Result<AblationReport> {
    let mut plain_cfg = cfg.clone();
    plain_cfg.gnn.enabled = false;
    let plain = load_splits(&plain_cfg, false)?;
    let plain_dir = run_dir(cfg, "biobert_bee")?;
    let source = train::<T>(&plain_cfg, &plain.train, plain.dev.as_deref(), Some(&plain_dir))?;
    let eval_plain = evaluate(&source.model, &source.vocab, plain.evaluation_split())?;
    let preds: Vec<Sentence> = eval_plain.predictions.iter().map(|p| p.sentence.clone()).collect();
    write_predictions(&plain_dir, &preds)?;
    drop(plain);

    let mut graph_cfg = cfg.clone();
    graph_cfg.gnn.enabled = true;
    let graph = load_splits(&graph_cfg, true)?;
    let graph_dir = run_dir(cfg, "biobert_gnn_bee")?;
    let model = init_from(&source, &graph_cfg)?;
    let trained = train_model(
        model,
        source.vocab.clone(),
        &graph_cfg,
        &graph.train,
        graph.dev.as_deref(),
        Some(&graph_dir),
    )?;
    let eval_graph = evaluate(&trained.model, &trained.vocab, graph.evaluation_split())?;
    let preds: Vec<Sentence> = eval_graph.predictions.iter().map(|p| p.sentence.clone()).collect();
    write_predictions(&graph_dir, &preds)?;

    let report = AblationReport {
        no_graph: eval_plain.report,
        with_graph: eval_graph.report,
    };
    let dir = run_dir(cfg, "")?;
    fs::write(dir.join("metrics.json"), serde_json::to_string_pretty(&report)?)?;
    fs::write(dir.join("report.md"), report.to_markdown())?;
    Ok(report)
}
