//! Subword transformer encoder with hand-written backpropagation.
//!
//! Each block is single-head self-attention followed by a ReLU feed-forward
//! layer, both with residual connections:
//!
//! ```text
//! Y = X + softmax(X Wq (X Wk)ᵀ / √d) X Wv Wo
//! Z = Y + ReLU(Y W1 + b1) W2 + b2
//! ```
//!
//! Weights are loaded from a JSON file (see [`TransformerEncoder::load`]); only
//! the parameter groups named by the active [`TrainScope`] receive gradients.

use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{pool_subwords, EncoderOutput, SubwordAlignment, TrainScope, WordPieceVocab};
use crate::error::{BeeError, Result};
use crate::linalg::{softmax, Matrix};
use crate::params::{Param, ParamsMut};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub dim: usize,
    pub ffn_dim: usize,
    pub layers: usize,
    /// Maximum number of pieces including `[CLS]` and `[SEP]`.
    pub max_len: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TransformerBlock<T> {
    pub wq: Param<T>,
    pub wk: Param<T>,
    pub wv: Param<T>,
    pub wo: Param<T>,
    pub w1: Param<T>,
    pub b1: Param<T>,
    pub w2: Param<T>,
    pub b2: Param<T>,
}

#[derive(Debug, Clone)]
struct BlockCache<T> {
    x: Matrix<T>,
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
    p: Matrix<T>,
    o: Matrix<T>,
    y: Matrix<T>,
    u: Matrix<T>,
    r: Matrix<T>,
}

impl<T: Scalar> TransformerBlock<T> {
    fn random(dim: usize, ffn: usize, rng: &mut ChaCha8Rng) -> Self {
        let sq = |fan_in: usize| 1.0 / (fan_in as f64).sqrt();
        let p = |r: usize, c: usize, s: f64, rng: &mut ChaCha8Rng| Param::new(Matrix::random_uniform(r, c, s, rng));
        TransformerBlock {
            wq: p(dim, dim, sq(dim), rng),
            wk: p(dim, dim, sq(dim), rng),
            wv: p(dim, dim, sq(dim), rng),
            wo: p(dim, dim, sq(dim), rng),
            w1: p(dim, ffn, sq(dim), rng),
            b1: Param::new(Matrix::zeros(1, ffn)),
            w2: p(ffn, dim, sq(ffn), rng),
            b2: Param::new(Matrix::zeros(1, dim)),
        }
    }

    fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, BlockCache<T>)> {
        let d = x.cols();
        let scale = T::one() / T::of(d as f64).sqrt();
        let q = x.matmul(&self.wq.value)?;
        let k = x.matmul(&self.wk.value)?;
        let v = x.matmul(&self.wv.value)?;
        let mut s = q.matmul_t(&k)?;
        s.scale(scale);
        let mut p = Matrix::zeros(s.rows(), s.cols());
        for i in 0..s.rows() {
            p.row_mut(i).copy_from_slice(&softmax(s.row(i)));
        }
        let o = p.matmul(&v)?;
        let mut y = o.matmul(&self.wo.value)?;
        y.add_assign(x);
        let mut u = y.matmul(&self.w1.value)?;
        u.add_row_vector(self.b1.value.row(0));
        let r = u.relu();
        let mut z = r.matmul(&self.w2.value)?;
        z.add_row_vector(self.b2.value.row(0));
        z.add_assign(&y);
        let cache = BlockCache {
            x: x.clone(),
            q,
            k,
            v,
            p,
            o,
            y,
            u,
            r,
        };
        Ok((z, cache))
    }

    /// Accumulates parameter gradients and returns `dL/dX`.
    fn backward(&mut self, c: &BlockCache<T>, dz: &Matrix<T>) -> Result<Matrix<T>> {
        let d = c.x.cols();
        let scale = T::one() / T::of(d as f64).sqrt();

        // feed-forward
        self.w2.grad_mut().add_assign(&c.r.t_matmul(dz)?);
        let db2 = dz.col_sums();
        self.b2.grad_mut().row_mut(0).iter_mut().zip(&db2).for_each(|(g, &x)| *g += x);
        let mut du = dz.matmul_t(&self.w2.value)?;
        du.mask_relu(&c.u);
        self.w1.grad_mut().add_assign(&c.y.t_matmul(&du)?);
        let db1 = du.col_sums();
        self.b1.grad_mut().row_mut(0).iter_mut().zip(&db1).for_each(|(g, &x)| *g += x);
        let mut dy = du.matmul_t(&self.w1.value)?;
        dy.add_assign(dz);

        // attention
        self.wo.grad_mut().add_assign(&c.o.t_matmul(&dy)?);
        let d_o = dy.matmul_t(&self.wo.value)?;
        let dp = d_o.matmul_t(&c.v)?;
        let dv = c.p.t_matmul(&d_o)?;
        let mut ds = Matrix::zeros(dp.rows(), dp.cols());
        for i in 0..dp.rows() {
            let prow = c.p.row(i);
            let dprow = dp.row(i);
            let inner: T = prow.iter().zip(dprow).map(|(&p, &g)| p * g).sum();
            for (j, out) in ds.row_mut(i).iter_mut().enumerate() {
                *out = prow[j] * (dprow[j] - inner) * scale;
            }
        }
        let dq = ds.matmul(&c.k)?;
        let dk = ds.t_matmul(&c.q)?;
        self.wq.grad_mut().add_assign(&c.x.t_matmul(&dq)?);
        self.wk.grad_mut().add_assign(&c.x.t_matmul(&dk)?);
        self.wv.grad_mut().add_assign(&c.x.t_matmul(&dv)?);

        let mut dx = dy;
        dx.add_assign(&dq.matmul_t(&self.wq.value)?);
        dx.add_assign(&dk.matmul_t(&self.wk.value)?);
        dx.add_assign(&dv.matmul_t(&self.wv.value)?);
        Ok(dx)
    }

    fn params_mut(&mut self, prefix: &str) -> ParamsMut<'_, T> {
        vec![
            (format!("{prefix}.wq"), &mut self.wq),
            (format!("{prefix}.wk"), &mut self.wk),
            (format!("{prefix}.wv"), &mut self.wv),
            (format!("{prefix}.wo"), &mut self.wo),
            (format!("{prefix}.w1"), &mut self.w1),
            (format!("{prefix}.b1"), &mut self.b1),
            (format!("{prefix}.w2"), &mut self.w2),
            (format!("{prefix}.b2"), &mut self.b2),
        ]
    }
}

#[derive(Debug, Clone)]
pub struct TransformerTrace<T> {
    ids: Vec<usize>,
    alignment: SubwordAlignment,
    caches: Vec<BlockCache<T>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TransformerEncoder<T> {
    pub name: String,
    pub config: TransformerConfig,
    pub vocab: WordPieceVocab,
    pub embeddings: Param<T>,
    pub positions: Param<T>,
    pub blocks: Vec<TransformerBlock<T>>,
}

impl<T: Scalar> TransformerEncoder<T> {
    /// Freshly initialized weights, e.g. to produce a weights file for tests.
    pub fn random(name: impl Into<String>, vocab: WordPieceVocab, config: TransformerConfig, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let embeddings = Param::new(Matrix::random_uniform(vocab.len(), config.dim, 1.0, &mut rng));
        let positions = Param::new(Matrix::random_uniform(config.max_len, config.dim, 0.1, &mut rng));
        let blocks = (0..config.layers)
            .map(|_| TransformerBlock::random(config.dim, config.ffn_dim, &mut rng))
            .collect();
        TransformerEncoder {
            name: name.into(),
            config,
            vocab,
            embeddings,
            positions,
            blocks,
        }
    }

    /// Reads a weights file written by [`TransformerEncoder::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let enc: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        let c = enc.config;
        let shapes_ok = enc.embeddings.shape() == (enc.vocab.len(), c.dim)
            && enc.positions.shape() == (c.max_len, c.dim)
            && enc.blocks.len() == c.layers
            && enc.blocks.iter().all(|b| b.w1.shape() == (c.dim, c.ffn_dim) && b.wq.shape() == (c.dim, c.dim));
        if !shapes_ok {
            return Err(BeeError::Shape(format!(
                "weights in {} do not match their declared configuration",
                path.display()
            )));
        }
        Ok(enc)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    fn pieces(&self, sentence_id: &str, tokens: &[String]) -> Result<(Vec<usize>, SubwordAlignment)> {
        if tokens.is_empty() {
            return Err(BeeError::Shape(format!("sentence {sentence_id} has no tokens")));
        }
        let (ids, alignment) = self.vocab.tokenize(tokens);
        if ids.len() > self.config.max_len {
            return Err(BeeError::Truncation {
                sentence_id: sentence_id.to_string(),
                length: ids.len(),
                max_len: self.config.max_len,
            });
        }
        Ok((ids, alignment))
    }

    fn embed(&self, ids: &[usize]) -> Matrix<T> {
        let mut x = self.embeddings.value.select_rows(ids);
        for p in 0..ids.len() {
            for (a, &b) in x.row_mut(p).iter_mut().zip(self.positions.value.row(p)) {
                *a += b;
            }
        }
        x
    }

    pub fn encode(&self, sentence_id: &str, tokens: &[String]) -> Result<EncoderOutput<T>> {
        Ok(self.forward_trace(sentence_id, tokens)?.0)
    }

    pub fn forward_trace(&self, sentence_id: &str, tokens: &[String]) -> Result<(EncoderOutput<T>, TransformerTrace<T>)> {
        let (ids, alignment) = self.pieces(sentence_id, tokens)?;
        let mut x = self.embed(&ids);
        let mut caches = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (z, c) = b.forward(&x)?;
            caches.push(c);
            x = z;
        }
        let out = pool_subwords(&x, &alignment)?;
        Ok((
            out,
            TransformerTrace {
                ids,
                alignment,
                caches,
            },
        ))
    }

    pub fn backward(&mut self, trace: &TransformerTrace<T>, d_out: &Matrix<T>, scope: TrainScope) -> Result<()> {
        if scope == TrainScope::HeadsOnly || self.blocks.is_empty() {
            return Ok(());
        }
        let mut dx = Matrix::zeros(trace.ids.len(), self.config.dim);
        for (tok, pieces) in trace.alignment.pieces.iter().enumerate() {
            let row = dx.row_mut(pieces[0]);
            for (a, &b) in row.iter_mut().zip(d_out.row(tok)) {
                *a += b;
            }
        }
        let last = self.blocks.len() - 1;
        for (i, block) in self.blocks.iter_mut().enumerate().rev() {
            dx = block.backward(&trace.caches[i], &dx)?;
            if scope == TrainScope::LastEncoderLayerPlusHeads && i == last {
                return Ok(());
            }
        }
        let de = self.embeddings.grad_mut();
        for (p, &id) in trace.ids.iter().enumerate() {
            for (a, &b) in de.row_mut(id).iter_mut().zip(dx.row(p)) {
                *a += b;
            }
        }
        let dp = self.positions.grad_mut();
        for p in 0..trace.ids.len() {
            for (a, &b) in dp.row_mut(p).iter_mut().zip(dx.row(p)) {
                *a += b;
            }
        }
        Ok(())
    }

    pub fn trainable_params(&mut self, scope: TrainScope) -> ParamsMut<'_, T> {
        match scope {
            TrainScope::HeadsOnly => Vec::new(),
            TrainScope::LastEncoderLayerPlusHeads => {
                let last = self.blocks.len().saturating_sub(1);
                match self.blocks.last_mut() {
                    Some(b) => b.params_mut(&format!("encoder.block{last}")),
                    None => Vec::new(),
                }
            }
            TrainScope::All => {
                let mut out: ParamsMut<'_, T> = vec![
                    ("encoder.embeddings".to_string(), &mut self.embeddings),
                    ("encoder.positions".to_string(), &mut self.positions),
                ];
                for (i, b) in self.blocks.iter_mut().enumerate() {
                    out.extend(b.params_mut(&format!("encoder.block{i}")));
                }
                out
            }
        }
    }
}
