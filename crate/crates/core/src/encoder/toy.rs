use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::EncoderOutput;
use crate::error::{BeeError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

pub const TOY_DEFAULT_WIDTH: usize = 64;

/// Parameter-free encoder: a seeded hash embedding of the token string plus a
/// sinusoidal encoding of its position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToyEncoder {
    pub dim: usize,
    pub seed: u64,
    pub max_len: usize,
}

impl Default for ToyEncoder {
    fn default() -> Self {
        ToyEncoder {
            dim: TOY_DEFAULT_WIDTH,
            seed: 0,
            max_len: 512,
        }
    }
}

fn fnv1a(seed: u64, text: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(text.as_bytes()) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

impl ToyEncoder {
    pub fn new(dim: usize, seed: u64) -> Self {
        ToyEncoder {
            dim,
            seed,
            ..Default::default()
        }
    }

    /// The position-independent part of a token's vector.
    pub fn token_embedding(&self, text: &str) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(self.seed, text));
        (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    pub fn position_encoding(&self, pos: usize) -> Vec<f64> {
        (0..self.dim)
            .map(|k| {
                let rate = 10000f64.powf((2 * (k / 2)) as f64 / self.dim as f64);
                let angle = pos as f64 / rate;
                if k % 2 == 0 {
                    angle.sin()
                } else {
                    angle.cos()
                }
            })
            .collect()
    }

    pub fn encode<T: Scalar>(&self, sentence_id: &str, tokens: &[String]) -> Result<EncoderOutput<T>> {
        if tokens.is_empty() {
            return Err(BeeError::Shape(format!("sentence {sentence_id} has no tokens")));
        }
        if tokens.len() > self.max_len {
            return Err(BeeError::Truncation {
                sentence_id: sentence_id.to_string(),
                length: tokens.len(),
                max_len: self.max_len,
            });
        }
        let mut data = Vec::with_capacity(tokens.len() * self.dim);
        for (pos, tok) in tokens.iter().enumerate() {
            let e = self.token_embedding(tok);
            let p = self.position_encoding(pos);
            data.extend(e.iter().zip(&p).map(|(a, b)| T::of(a + b)));
        }
        Ok(EncoderOutput {
            vectors: Matrix::from_vec(tokens.len(), self.dim, data)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn words(ws: &[&str]) -> Vec<String> {
        ws.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn shape_and_determinism() {
        let enc = ToyEncoder::default();
        let toks = words(&["p53", "binds", "MDM2"]);
        let a = enc.encode::<f64>("s", &toks).unwrap();
        let b = enc.encode::<f64>("s", &toks).unwrap();
        assert_eq!(a.vectors.shape(), (3, TOY_DEFAULT_WIDTH));
        assert_eq!(a, b);
    }

    #[test]
    fn position_changes_vector_but_context_does_not() {
        let enc = ToyEncoder::default();
        let a = enc.encode::<f64>("a", &words(&["p53", "x", "y", "z"])).unwrap();
        let b = enc.encode::<f64>("b", &words(&["x", "y", "z", "p53"])).unwrap();
        let c = enc.encode::<f64>("c", &words(&["p53", "binds"])).unwrap();
        assert_ne!(a.vectors.row(0), b.vectors.row(3));
        assert_eq!(a.vectors.row(0), c.vectors.row(0));
    }

    #[test]
    fn seed_matters() {
        let toks = words(&["p53"]);
        let a = ToyEncoder::new(8, 1).encode::<f64>("s", &toks).unwrap();
        let b = ToyEncoder::new(8, 2).encode::<f64>("s", &toks).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn too_long_is_an_error_naming_the_sentence() {
        let enc = ToyEncoder {
            max_len: 2,
            ..Default::default()
        };
        let err = enc.encode::<f64>("PMID-7:3", &words(&["a", "b", "c"])).unwrap_err();
        assert!(err.to_string().contains("PMID-7:3"));
        assert!(enc.encode::<f64>("e", &[]).is_err());
    }
}
