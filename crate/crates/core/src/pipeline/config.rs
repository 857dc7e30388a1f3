//! Run configuration, read from flat TOML with dotted keys.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoder::TrainScope;
use crate::error::{BeeError, Result};
use crate::heads::PairMode;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// JSON-lines file or directory of standoff `.txt/.a1/.a2` files.
    pub train: PathBuf,
    pub dev: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// CoNLL-U sidecars; without them the corpus must carry `dep_edges` inline.
    pub train_parse: Option<PathBuf>,
    pub dev_parse: Option<PathBuf>,
    pub test_parse: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    #[default]
    Toy,
    Pretrained,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EncoderConfig {
    pub kind: EncoderKind,
    /// Weights file of a pretrained encoder.
    pub model_name: String,
    pub train_scope: TrainScope,
    pub max_len: usize,
    /// Width of the toy encoder.
    pub dim: usize,
    /// Seed of the toy encoder's embedding table; defaults to `train.seed`.
    pub seed: Option<u64>,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            kind: EncoderKind::Toy,
            model_name: String::new(),
            train_scope: TrainScope::default(),
            max_len: 512,
            dim: crate::encoder::TOY_DEFAULT_WIDTH,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GnnConfig {
    pub enabled: bool,
    /// `d1`; defaults to the encoder width.
    pub hidden_dim: Option<usize>,
    /// `d2`; defaults to the encoder width.
    pub out_dim: Option<usize>,
    pub bias: bool,
}

impl Default for GnnConfig {
    fn default() -> Self {
        GnnConfig {
            enabled: true,
            hidden_dim: None,
            out_dim: None,
            bias: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpConfig {
    pub hidden_dim: usize,
    pub out_dim: usize,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden_dim: 64,
            out_dim: 64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HeadConfig {
    pub mode: PairMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub encoder_lr: f64,
    pub epochs: usize,
    /// Sentences per optimizer step.
    pub batch_size: usize,
    pub seed: u64,
    pub lambda: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 1e-3,
            encoder_lr: 1e-5,
            epochs: 20,
            batch_size: 8,
            seed: 13,
            lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub gnn: GnnConfig,
    #[serde(default)]
    pub mlp: MlpConfig,
    #[serde(default)]
    pub head: HeadConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub precision: Precision,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl RunConfig {
    pub fn from_toml(src: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(src).map_err(|e| BeeError::Config(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    /// Reads a config file; relative data paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg = Self::from_toml(&std::fs::read_to_string(path)?)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    /// Flat `section.key = value` lines, one per setting.
    pub fn to_toml(&self) -> String {
        let value = toml::Value::try_from(self).expect("configs always serialize");
        let mut out = String::new();
        flatten("", &value, &mut out);
        out
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.data.train);
        for p in [
            &mut self.data.dev,
            &mut self.data.test,
            &mut self.data.train_parse,
            &mut self.data.dev_parse,
            &mut self.data.test_parse,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        fix(&mut self.output_dir);
        if self.encoder.kind == EncoderKind::Pretrained {
            let mut p = PathBuf::from(&self.encoder.model_name);
            fix(&mut p);
            self.encoder.model_name = p.to_string_lossy().into_owned();
        }
    }

    pub fn check(&self) -> Result<()> {
        let t = &self.train;
        if t.batch_size == 0 {
            return Err(BeeError::Config("train.batch_size must be positive".into()));
        }
        if !(t.lr > 0.0 && t.encoder_lr >= 0.0 && t.lambda >= 0.0) {
            return Err(BeeError::Config("learning rates and lambda must be non-negative".into()));
        }
        if self.mlp.hidden_dim == 0 || self.mlp.out_dim == 0 || self.encoder.dim == 0 {
            return Err(BeeError::Config("dimensions must be positive".into()));
        }
        if self.encoder.kind == EncoderKind::Pretrained && self.encoder.model_name.is_empty() {
            return Err(BeeError::Config("encoder.model_name is required for a pretrained encoder".into()));
        }
        Ok(())
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut String) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}{k}."), v, out);
            }
        }
        leaf => {
            out.push_str(prefix.trim_end_matches('.'));
            out.push_str(" = ");
            out.push_str(&leaf.to_string());
            out.push('\n');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_parse() {
        let cfg = RunConfig::from_toml(
            r#"
data.train = "train.jsonl"
gnn.enabled = false
head.mode = "biaffine"
encoder.train_scope = "heads_only"
train.seed = 7
train.lr = 0.01
precision = "f32"
"#,
        )
        .unwrap();
        assert!(!cfg.gnn.enabled);
        assert_eq!(cfg.head.mode, PairMode::Biaffine);
        assert_eq!(cfg.encoder.train_scope, TrainScope::HeadsOnly);
        assert_eq!(cfg.train.seed, 7);
        assert_eq!(cfg.train.epochs, 20);
        assert_eq!(cfg.precision, Precision::F32);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn unknown_key_is_config_error() {
        let err = RunConfig::from_toml("data.train = \"x\"\ngnn.layers = 3\n").unwrap_err();
        assert!(matches!(err, BeeError::Config(_)));
    }

    #[test]
    fn written_config_is_flat_and_reloads() {
        let cfg = RunConfig::from_toml("data.train = \"t.jsonl\"\ntrain.lr = 0.25\ngnn.hidden_dim = 9").unwrap();
        let text = cfg.to_toml();
        assert!(text.lines().all(|l| !l.starts_with('[')), "{text}");
        assert!(text.contains("train.lr = 0.25"), "{text}");
        assert_eq!(RunConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn zero_batch_is_rejected() {
        assert!(RunConfig::from_toml("data.train = \"x\"\ntrain.batch_size = 0\n").is_err());
    }
}
