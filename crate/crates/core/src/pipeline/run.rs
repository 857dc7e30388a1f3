//! Single-model runs driven by a config file.

use std::fs;
use std::path::{Path, PathBuf};

use super::config::RunConfig;
use super::train::{evaluate, load_corpus, run_dir, train, write_predictions, Checkpoint, Evaluation};
use crate::corpus::Sentence;
use crate::error::Result;
use crate::scalar::Scalar;

pub(crate) struct Splits {
    pub train: Vec<Sentence>,
    pub dev: Option<Vec<Sentence>>,
    pub test: Option<Vec<Sentence>>,
}

/// Loads the configured splits; parse files are only opened when `with_parse`.
pub(crate) fn load_splits(cfg: &RunConfig, with_parse: bool) -> Result<Splits> {
    let d = &cfg.data;
    let load = |p: &Option<PathBuf>, parse: &Option<PathBuf>| {
        p.as_ref()
            .map(|p| load_corpus(p, parse.as_deref(), with_parse))
            .transpose()
    };
    Ok(Splits {
        train: load_corpus(&d.train, d.train_parse.as_deref(), with_parse)?,
        dev: load(&d.dev, &d.dev_parse)?,
        test: load(&d.test, &d.test_parse)?,
    })
}

impl Splits {
    pub fn evaluation_split(&self) -> &[Sentence] {
        self.test.as_deref().or(self.dev.as_deref()).unwrap_or(&self.train)
    }
}

/// Trains the model `cfg` describes into `cfg.output_dir`. When a test split
/// is configured it is scored and `report.md` plus predictions are written.
pub fn train_from_config<T: Scalar>(cfg: &RunConfig) -> Result<Checkpoint<T>> {
    let splits = load_splits(cfg, cfg.gnn.enabled)?;
    let dir = run_dir(cfg, "")?;
    let ck = train::<T>(cfg, &splits.train, splits.dev.as_deref(), Some(&dir))?;
    if let Some(test) = &splits.test {
        let ev = evaluate(&ck.model, &ck.vocab, test)?;
        write_evaluation(&dir, &ev)?;
    }
    Ok(ck)
}

/// Scores a checkpoint on a corpus; the parse is read only for graph models.
pub fn evaluate_checkpoint<T: Scalar>(ck: &Checkpoint<T>, data: &Path, parse: Option<&Path>) -> Result<Evaluation<T>> {
    let gold = load_corpus(data, parse, ck.model.uses_graph())?;
    evaluate(&ck.model, &ck.vocab, &gold)
}

/// `metrics.json`, `report.md` and prediction dumps for one evaluation.
pub fn write_evaluation<T: Scalar>(dir: &Path, ev: &Evaluation<T>) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("test_metrics.json"), ev.report.to_json())?;
    fs::write(dir.join("report.md"), ev.report.to_markdown())?;
    let preds: Vec<Sentence> = ev.predictions.iter().map(|p| p.sentence.clone()).collect();
    write_predictions(dir, &preds)
}
