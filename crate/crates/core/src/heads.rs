//! Token tag classifier and trigger-argument pair classifier.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{BeeError, Result};
use crate::linalg::{add_outer, dot, matvec, softmax, t_matvec, Matrix};
use crate::params::{Param, ParamsMut};
use crate::scalar::Scalar;

/// Initial value of the output biases; keeps the ReLU in front of the softmax
/// active at the start of training.
pub const HEAD_BIAS_INIT: f64 = 2.0;

fn bias<T: Scalar>(n: usize) -> Param<T> {
    Param::new(Matrix::from_vec(1, n, vec![T::of(HEAD_BIAS_INIT); n]).expect("1×n"))
}

/// `p = softmax(ReLU(Ws · x + bs))`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct TagHead<T> {
    pub w: Param<T>,
    pub b: Param<T>,
}

/// Pre-activation and output distribution of one classifier call.
#[derive(Debug, Clone)]
pub struct HeadTrace<T> {
    pub pre: Vec<T>,
    pub probs: Vec<T>,
}

impl<T: Scalar> TagHead<T> {
    pub fn random<R: Rng + ?Sized>(input: usize, n_tags: usize, rng: &mut R) -> Self {
        TagHead {
            w: Param::new(Matrix::random_uniform(n_tags, input, 1.0 / (input as f64).sqrt(), rng)),
            b: bias(n_tags),
        }
    }

    pub fn n_tags(&self) -> usize {
        self.w.value.rows()
    }

    pub fn input_width(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, rep: &[T]) -> HeadTrace<T> {
        let mut pre = matvec(&self.w.value, rep);
        for (z, &b) in pre.iter_mut().zip(self.b.value.row(0)) {
            *z += b;
        }
        let act: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
        HeadTrace {
            probs: softmax(&act),
            pre,
        }
    }

    /// Backward of `scale · (−log p[gold])`; returns the gradient w.r.t. `rep`.
    pub fn backward(&mut self, rep: &[T], trace: &HeadTrace<T>, gold: usize, scale: T) -> Vec<T> {
        let dz = relu_softmax_ce_grad(trace, gold, scale);
        add_outer(self.w.grad_mut(), &dz, rep);
        for (g, &d) in self.b.grad_mut().row_mut(0).iter_mut().zip(&dz) {
            *g += d;
        }
        t_matvec(&self.w.value, &dz)
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_, T> {
        vec![("tag_head.w".to_string(), &mut self.w), ("tag_head.b".to_string(), &mut self.b)]
    }
}

fn relu_softmax_ce_grad<T: Scalar>(trace: &HeadTrace<T>, gold: usize, scale: T) -> Vec<T> {
    trace
        .probs
        .iter()
        .zip(&trace.pre)
        .enumerate()
        .map(|(i, (&p, &z))| {
            if z > T::zero() {
                let y = if i == gold { T::one() } else { T::zero() };
                scale * (p - y)
            } else {
                T::zero()
            }
        })
        .collect()
}

/// Distribution over the tag vocabulary for one token representation.
pub fn tag_distribution<T: Scalar>(rep: &[T], p: &TagHead<T>) -> Vec<T> {
    p.forward(rep).probs
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    #[default]
    Concat,
    Biaffine,
}

impl std::str::FromStr for PairMode {
    type Err = BeeError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "concat" => Ok(PairMode::Concat),
            "biaffine" => Ok(PairMode::Biaffine),
            other => Err(BeeError::Config(format!("unknown pair head mode {other:?}"))),
        }
    }
}

/// Role classifier over (head, dependent) representations.
///
/// Concat: `softmax(ReLU(Wr [h; d] + br))`. Biaffine: role scores
/// `hᵀ A_ρ d + bᵀh + bᵀd` followed by a softmax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct PairHead<T> {
    pub mode: PairMode,
    pub w: Param<T>,
    pub b: Param<T>,
    /// `A_ρ` stacked row-wise: block `ρ` is rows `ρ·r .. (ρ+1)·r`.
    pub a: Param<T>,
    pub u: Param<T>,
}

impl<T: Scalar> PairHead<T> {
    pub fn random<R: Rng + ?Sized>(mode: PairMode, r: usize, n_roles: usize, rng: &mut R) -> Self {
        let w = Matrix::random_uniform(n_roles, 2 * r, 1.0 / ((2 * r) as f64).sqrt(), rng);
        let a = Matrix::random_uniform(n_roles * r, r, 1.0 / (r as f64), rng);
        PairHead {
            mode,
            w: Param::new(w),
            b: bias(n_roles),
            a: Param::new(a),
            u: Param::new(Matrix::zeros(1, r)),
        }
    }

    pub fn n_roles(&self) -> usize {
        self.w.value.rows()
    }

    pub fn rep_width(&self) -> usize {
        self.w.value.cols() / 2
    }

    fn role_block(&self, rho: usize) -> &[T] {
        let r = self.rep_width();
        &self.a.value.as_slice()[rho * r * r..(rho + 1) * r * r]
    }

    pub fn forward(&self, h: &[T], d: &[T]) -> HeadTrace<T> {
        match self.mode {
            PairMode::Concat => {
                let x: Vec<T> = h.iter().chain(d).copied().collect();
                let mut pre = matvec(&self.w.value, &x);
                for (z, &b) in pre.iter_mut().zip(self.b.value.row(0)) {
                    *z += b;
                }
                let act: Vec<T> = pre.iter().map(|&z| z.max(T::zero())).collect();
                HeadTrace {
                    probs: softmax(&act),
                    pre,
                }
            }
            PairMode::Biaffine => {
                let r = self.rep_width();
                let lin = dot(self.u.value.row(0), h) + dot(self.u.value.row(0), d);
                let pre: Vec<T> = (0..self.n_roles())
                    .map(|rho| {
                        let a = self.role_block(rho);
                        let mut s = lin;
                        for i in 0..r {
                            s += h[i] * dot(&a[i * r..(i + 1) * r], d);
                        }
                        s
                    })
                    .collect();
                HeadTrace {
                    probs: softmax(&pre),
                    pre,
                }
            }
        }
    }

    /// Backward of `scale · (−log p[gold])`; returns gradients w.r.t. `h` and `d`.
    pub fn backward(&mut self, h: &[T], d: &[T], trace: &HeadTrace<T>, gold: usize, scale: T) -> (Vec<T>, Vec<T>) {
        let r = self.rep_width();
        match self.mode {
            PairMode::Concat => {
                let dz = relu_softmax_ce_grad(trace, gold, scale);
                let x: Vec<T> = h.iter().chain(d).copied().collect();
                add_outer(self.w.grad_mut(), &dz, &x);
                for (g, &v) in self.b.grad_mut().row_mut(0).iter_mut().zip(&dz) {
                    *g += v;
                }
                let dx = t_matvec(&self.w.value, &dz);
                (dx[..r].to_vec(), dx[r..].to_vec())
            }
            PairMode::Biaffine => {
                let ds: Vec<T> = trace
                    .probs
                    .iter()
                    .enumerate()
                    .map(|(i, &p)| scale * (p - if i == gold { T::one() } else { T::zero() }))
                    .collect();
                let total: T = ds.iter().copied().sum();
                let u = self.u.value.row(0).to_vec();
                let mut dh: Vec<T> = u.iter().map(|&x| x * total).collect();
                let mut dd = dh.clone();
                for (g, (&hi, &di)) in self.u.grad_mut().row_mut(0).iter_mut().zip(h.iter().zip(d)) {
                    *g += total * (hi + di);
                }
                for (rho, &s) in ds.iter().enumerate() {
                    let a = self.role_block(rho).to_vec();
                    for i in 0..r {
                        let row = &a[i * r..(i + 1) * r];
                        dh[i] += s * dot(row, d);
                        for j in 0..r {
                            dd[j] += s * h[i] * row[j];
                        }
                    }
                    let grad = &mut self.a.grad_mut().as_mut_slice()[rho * r * r..(rho + 1) * r * r];
                    for i in 0..r {
                        for j in 0..r {
                            grad[i * r + j] += s * h[i] * d[j];
                        }
                    }
                }
                (dh, dd)
            }
        }
    }

    /// Parameters used by the active mode.
    pub fn params_mut(&mut self) -> ParamsMut<'_, T> {
        match self.mode {
            PairMode::Concat => vec![("pair_head.w".to_string(), &mut self.w), ("pair_head.b".to_string(), &mut self.b)],
            PairMode::Biaffine => vec![("pair_head.a".to_string(), &mut self.a), ("pair_head.u".to_string(), &mut self.u)],
        }
    }
}

/// Distribution over roles (including NONE) for one (head, dependent) pair.
pub fn pair_distribution<T: Scalar>(h: &[T], d: &[T], p: &PairHead<T>, mode: PairMode) -> Vec<T> {
    if mode == p.mode {
        p.forward(h, d).probs
    } else {
        let mut q = p.clone();
        q.mode = mode;
        q.forward(h, d).probs
    }
}
