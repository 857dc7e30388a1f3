//! Per-token contextual vectors behind one interface: a deterministic toy
//! encoder for offline work and a subword transformer adapter whose weights are
//! loaded from a file and can be partially unfrozen.

mod toy;
mod transformer;
mod wordpiece;

use serde::{Deserialize, Serialize};

use crate::error::{BeeError, Result};
use crate::linalg::Matrix;
use crate::params::ParamsMut;
use crate::scalar::Scalar;

pub use toy::{ToyEncoder, TOY_DEFAULT_WIDTH};
pub use transformer::{TransformerBlock, TransformerConfig, TransformerEncoder, TransformerTrace};
pub use wordpiece::WordPieceVocab;

/// Row `i` holds the vector of token `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<T> {
    pub vectors: Matrix<T>,
}

impl<T: Scalar> EncoderOutput<T> {
    pub fn width(&self) -> usize {
        self.vectors.cols()
    }

    pub fn len(&self) -> usize {
        self.vectors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.rows() == 0
    }
}

/// For each token, the subword piece rows it spans.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SubwordAlignment {
    pub pieces: Vec<Vec<usize>>,
}

/// Which parameter groups an optimizer step may touch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainScope {
    HeadsOnly,
    #[default]
    LastEncoderLayerPlusHeads,
    All,
}

impl std::str::FromStr for TrainScope {
    type Err = BeeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "heads_only" => Ok(TrainScope::HeadsOnly),
            "last_encoder_layer_plus_heads" => Ok(TrainScope::LastEncoderLayerPlusHeads),
            "all" => Ok(TrainScope::All),
            other => Err(BeeError::Config(format!("unknown train scope {other:?}"))),
        }
    }
}

/// Token vector = vector of the token's first subword piece.
pub fn pool_subwords<T: Scalar>(piece_vectors: &Matrix<T>, alignment: &SubwordAlignment) -> Result<EncoderOutput<T>> {
    let mut first = Vec::with_capacity(alignment.pieces.len());
    for (i, pieces) in alignment.pieces.iter().enumerate() {
        let &p = pieces
            .first()
            .ok_or_else(|| BeeError::Alignment(format!("token {i} has no subword pieces")))?;
        if p >= piece_vectors.rows() {
            return Err(BeeError::Alignment(format!(
                "token {i} refers to piece {p} but only {} pieces exist",
                piece_vectors.rows()
            )));
        }
        first.push(p);
    }
    Ok(EncoderOutput {
        vectors: piece_vectors.select_rows(&first),
    })
}

/// Everything needed to backpropagate into the encoder after a forward pass.
#[derive(Debug, Clone)]
pub enum EncoderTrace<T> {
    Frozen,
    Transformer(TransformerTrace<T>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", tag = "kind", rename_all = "snake_case")]
pub enum Encoder<T> {
    Toy(ToyEncoder),
    Pretrained(TransformerEncoder<T>),
}

impl<T: Scalar> Encoder<T> {
    pub fn width(&self) -> usize {
        match self {
            Encoder::Toy(e) => e.dim,
            Encoder::Pretrained(e) => e.config.dim,
        }
    }

    pub fn max_len(&self) -> usize {
        match self {
            Encoder::Toy(e) => e.max_len,
            Encoder::Pretrained(e) => e.config.max_len,
        }
    }

    /// Encodes one sentence; `sentence_id` is reported in length errors.
    pub fn encode(&self, sentence_id: &str, tokens: &[String]) -> Result<EncoderOutput<T>> {
        match self {
            Encoder::Toy(e) => e.encode(sentence_id, tokens),
            Encoder::Pretrained(e) => e.encode(sentence_id, tokens),
        }
    }

    /// Forward pass that keeps what `backward` needs under `scope`.
    pub fn forward_train(
        &self,
        sentence_id: &str,
        tokens: &[String],
        scope: TrainScope,
    ) -> Result<(EncoderOutput<T>, EncoderTrace<T>)> {
        match self {
            Encoder::Pretrained(e) if scope != TrainScope::HeadsOnly => {
                let (out, trace) = e.forward_trace(sentence_id, tokens)?;
                Ok((out, EncoderTrace::Transformer(trace)))
            }
            _ => Ok((self.encode(sentence_id, tokens)?, EncoderTrace::Frozen)),
        }
    }

    /// Accumulates parameter gradients for the groups `scope` unfreezes.
    pub fn backward(&mut self, trace: &EncoderTrace<T>, d_out: &Matrix<T>, scope: TrainScope) -> Result<()> {
        match (self, trace) {
            (Encoder::Pretrained(e), EncoderTrace::Transformer(t)) => e.backward(t, d_out, scope),
            _ => Ok(()),
        }
    }

    /// True when no parameter of the encoder can change under `scope`.
    pub fn is_frozen(&self, scope: TrainScope) -> bool {
        matches!(self, Encoder::Toy(_)) || scope == TrainScope::HeadsOnly
    }

    /// Parameters a step under `scope` may update.
    pub fn trainable_params(&mut self, scope: TrainScope) -> ParamsMut<'_, T> {
        match self {
            Encoder::Toy(_) => Vec::new(),
            Encoder::Pretrained(e) => e.trainable_params(scope),
        }
    }

    /// Every parameter, named.
    pub fn all_params(&mut self) -> ParamsMut<'_, T> {
        self.trainable_params(TrainScope::All)
    }

    pub fn zero_grad(&mut self) {
        for (_, p) in self.all_params() {
            p.zero_grad();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn one_piece_per_token_is_identity() {
        let v = Matrix::<f64>::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let a = SubwordAlignment {
            pieces: vec![vec![0], vec![1]],
        };
        assert_eq!(pool_subwords(&v, &a).unwrap().vectors, v);
    }

    #[test]
    fn multi_piece_token_takes_first_piece() {
        let v = Matrix::<f64>::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]);
        let a = SubwordAlignment {
            pieces: vec![vec![0], vec![1, 2], vec![3]],
        };
        assert_eq!(pool_subwords(&v, &a).unwrap().vectors.as_slice(), &[0.0, 1.0, 3.0]);
    }

    #[test]
    fn empty_piece_list_is_alignment_error() {
        let v = Matrix::<f64>::zeros(2, 1);
        let a = SubwordAlignment {
            pieces: vec![vec![0], vec![]],
        };
        assert!(matches!(pool_subwords(&v, &a), Err(BeeError::Alignment(_))));
    }

    #[test]
    fn scope_parses() {
        assert_eq!("heads_only".parse::<TrainScope>().unwrap(), TrainScope::HeadsOnly);
        assert!("everything".parse::<TrainScope>().is_err());
    }

    proptest! {
        #[test]
        fn pooled_row_is_first_piece_row(lens in prop::collection::vec(1usize..4, 1..8), width in 1usize..5) {
            let total: usize = lens.iter().sum();
            let data: Vec<f64> = (0..total * width).map(|x| x as f64 * 0.5 - 3.0).collect();
            let v = Matrix::from_vec(total, width, data).unwrap();
            let mut pieces = Vec::new();
            let mut next = 0;
            for l in &lens {
                pieces.push((next..next + l).collect::<Vec<_>>());
                next += l;
            }
            let a = SubwordAlignment { pieces };
            let out = pool_subwords(&v, &a).unwrap();
            for (i, p) in a.pieces.iter().enumerate() {
                prop_assert_eq!(out.vectors.row(i), v.row(p[0]));
            }
        }
    }
}
