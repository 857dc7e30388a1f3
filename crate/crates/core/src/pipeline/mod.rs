//! Training and evaluation orchestration for the encoder-only model and its
//! GCN variant, checkpoints, and the ablation harness.

mod ablate;
mod config;
mod model;
mod run;
pub mod synth;
mod train;

pub use ablate::{ablate, AblationReport, NO_GRAPH_NAME, WITH_GRAPH_NAME};
pub use config::{DataConfig, EncoderConfig, EncoderKind, GnnConfig, HeadConfig, MlpConfig, Precision, RunConfig, TrainConfig};
pub use model::{build_encoder, fresh_gcn, group_seed, BeeModel, Example, LossParts, Prediction, Vocab};
pub use run::{evaluate_checkpoint, train_from_config, write_evaluation};
pub use train::{
    checkpoint_precision, evaluate, init_from, load_corpus, predict_corpus, run_dir, train, train_model,
    write_predictions, Checkpoint, EpochRecord, Evaluation,
};
