use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use bee_core::pipeline::{
    ablate, checkpoint_precision, evaluate_checkpoint, load_corpus, synth, train_from_config, write_evaluation,
    Checkpoint, Precision, RunConfig,
};
use bee_core::scorer::{align_by_document, check_alignment, score, MetricsReport};
use bee_core::Scalar;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bee", version, about = "Biomedical event extraction: train, evaluate, ablate and score")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Markdown,
}

#[derive(Clone, Copy, ValueEnum)]
enum Dataset {
    /// Roles decided by the dependency parse alone.
    Ablation,
    /// 20 sentences with nested events, for overfitting checks.
    Overfit,
}

#[derive(Subcommand)]
enum Command {
    /// Train the model described by a config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score a checkpoint on a corpus (JSON lines file or standoff directory).
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// CoNLL-U parses for `--data`; only read by graph models.
        #[arg(long)]
        parse: Option<PathBuf>,
        /// Directory for the report and prediction dumps.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
    },
    /// Train with and without the dependency graph and compare on the test split.
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Score predictions against gold annotations.
    Score {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long, value_enum, default_value = "markdown")]
        format: Format,
    },
    /// Write a seeded synthetic dataset with a matching config.toml.
    Synth {
        #[arg(long, value_enum)]
        kind: Dataset,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn render(report: &MetricsReport, format: Format) -> String {
    match format {
        Format::Json => report.to_json(),
        Format::Markdown => report.to_markdown(),
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let cfg = RunConfig::load(path).with_context(|| format!("reading config {}", path.display()))?;
    cfg.check()?;
    Ok(cfg)
}

fn run_train<T: Scalar>(cfg: &RunConfig) -> Result<()> {
    let ck = train_from_config::<T>(cfg)?;
    let best = ck.history.iter().find(|r| r.epoch == ck.epoch);
    match best {
        Some(r) => println!(
            "best epoch {} (validation total {:.2}); checkpoint in {}",
            ck.epoch,
            r.validation.total,
            cfg.output_dir.join("checkpoint.json").display()
        ),
        None => println!("no epochs run; checkpoint in {}", cfg.output_dir.join("checkpoint.json").display()),
    }
    Ok(())
}

fn run_evaluate<T: Scalar>(ckpt: &Path, data: &Path, parse: Option<&Path>, out: Option<&Path>, format: Format) -> Result<()> {
    let ck = Checkpoint::<T>::load(ckpt).with_context(|| format!("loading checkpoint {}", ckpt.display()))?;
    let ev = evaluate_checkpoint(&ck, data, parse)?;
    if let Some(dir) = out {
        write_evaluation(dir, &ev)?;
    }
    println!("{}", render(&ev.report, format));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => {
            let cfg = load_config(&config)?;
            match cfg.precision {
                Precision::F32 => run_train::<f32>(&cfg),
                Precision::F64 => run_train::<f64>(&cfg),
            }
        }
        Command::Evaluate {
            ckpt,
            data,
            parse,
            out,
            format,
        } => match checkpoint_precision(&ckpt).with_context(|| format!("reading {}", ckpt.display()))? {
            Precision::F32 => run_evaluate::<f32>(&ckpt, &data, parse.as_deref(), out.as_deref(), format),
            Precision::F64 => run_evaluate::<f64>(&ckpt, &data, parse.as_deref(), out.as_deref(), format),
        },
        Command::Ablate { config } => {
            let cfg = load_config(&config)?;
            let report = match cfg.precision {
                Precision::F32 => ablate::<f32>(&cfg)?,
                Precision::F64 => ablate::<f64>(&cfg)?,
            };
            print!("{}", report.to_markdown());
            Ok(())
        }
        Command::Score { gold, pred, format } => {
            let gold = load_corpus(&gold, None, false).with_context(|| format!("reading {}", gold.display()))?;
            let pred = load_corpus(&pred, None, false).with_context(|| format!("reading {}", pred.display()))?;
            let pred = if check_alignment(&gold, &pred).is_ok() {
                pred
            } else {
                align_by_document(&gold, &pred)?
            };
            println!("{}", render(&score(&gold, &pred)?, format));
            Ok(())
        }
        Command::Synth { kind, out, seed } => {
            match kind {
                Dataset::Ablation => synth::write_ablation_dataset(&out, seed)?,
                Dataset::Overfit => synth::write_overfit_dataset(&out, seed)?,
            };
            println!("wrote {}", out.join("config.toml").display());
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_valid() {
        Cli::command().debug_assert();
    }

    #[test]
    fn unknown_score_format_is_rejected() {
        assert!(Cli::try_parse_from(["bee", "score", "--gold", "g", "--pred", "p", "--format", "xml"]).is_err());
    }
}
