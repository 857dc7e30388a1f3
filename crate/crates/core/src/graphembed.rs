//! Two-layer GCN over the normalized dependency adjacency, and the head and
//! dependent MLPs applied after it.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::Span;
use crate::depgraph::DepGraph;
use crate::error::{BeeError, Result};
use crate::linalg::{add_outer, matvec, t_matvec, Matrix};
use crate::params::{Param, ParamsMut};
use crate::scalar::Scalar;

/// `ReLU(Â · H · W)`
pub fn gcn_layer<T: Scalar>(h: &Matrix<T>, a_norm: &Matrix<T>, w: &Matrix<T>) -> Result<Matrix<T>> {
    Ok(propagate(h, a_norm)?.matmul(w)?.relu())
}

fn propagate<T: Scalar>(h: &Matrix<T>, a_norm: &Matrix<T>) -> Result<Matrix<T>> {
    if a_norm.rows() != a_norm.cols() || a_norm.cols() != h.rows() {
        return Err(BeeError::Shape(format!(
            "adjacency {:?} does not match {} node rows",
            a_norm.shape(),
            h.rows()
        )));
    }
    a_norm.matmul(h)
}

fn uniform_param<T: Scalar, R: Rng + ?Sized>(rows: usize, cols: usize, fan_in: usize, rng: &mut R) -> Param<T> {
    Param::new(Matrix::random_uniform(rows, cols, 1.0 / (fan_in as f64).sqrt(), rng))
}

/// Weights of the two GCN layers (`W1: d×d1`, `W2: d1×d2`) with optional biases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct GcnParams<T> {
    pub w1: Param<T>,
    pub b1: Option<Param<T>>,
    pub w2: Param<T>,
    pub b2: Option<Param<T>>,
}

/// Intermediate values of one [`GcnParams::forward`] call.
#[derive(Debug, Clone)]
pub struct GcnTrace<T> {
    ac: Matrix<T>,
    z1: Matrix<T>,
    ah1: Matrix<T>,
    z2: Matrix<T>,
}

impl<T: Scalar> GcnParams<T> {
    /// Uniform initialization in `±1/√fan_in`; biases start at zero.
    pub fn random<R: Rng + ?Sized>(d: usize, d1: usize, d2: usize, bias: bool, rng: &mut R) -> Self {
        GcnParams {
            w1: uniform_param(d, d1, d, rng),
            b1: bias.then(|| Param::new(Matrix::zeros(1, d1))),
            w2: uniform_param(d1, d2, d1, rng),
            b2: bias.then(|| Param::new(Matrix::zeros(1, d2))),
        }
    }

    /// Pass-through weights (`W = I`, zero bias); with `Â = I` and non-negative
    /// inputs the GCN is then the identity.
    pub fn identity(d: usize, bias: bool) -> Self {
        GcnParams {
            w1: Param::new(Matrix::identity(d)),
            b1: bias.then(|| Param::new(Matrix::zeros(1, d))),
            w2: Param::new(Matrix::identity(d)),
            b2: bias.then(|| Param::new(Matrix::zeros(1, d))),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w1.value.rows()
    }

    pub fn output_width(&self) -> usize {
        self.w2.value.cols()
    }

    pub fn forward(&self, c: &Matrix<T>, a_norm: &Matrix<T>) -> Result<(Matrix<T>, GcnTrace<T>)> {
        if c.cols() != self.input_width() {
            return Err(BeeError::Shape(format!(
                "GCN expects width {}, got {}",
                self.input_width(),
                c.cols()
            )));
        }
        let ac = propagate(c, a_norm)?;
        let mut z1 = ac.matmul(&self.w1.value)?;
        if let Some(b) = &self.b1 {
            z1.add_row_vector(b.value.row(0));
        }
        let h1 = z1.relu();
        let ah1 = propagate(&h1, a_norm)?;
        let mut z2 = ah1.matmul(&self.w2.value)?;
        if let Some(b) = &self.b2 {
            z2.add_row_vector(b.value.row(0));
        }
        let out = z2.relu();
        Ok((out, GcnTrace { ac, z1, ah1, z2 }))
    }

    /// Accumulates weight gradients and returns `dL/dC`.
    pub fn backward(&mut self, trace: &GcnTrace<T>, a_norm: &Matrix<T>, d_out: &Matrix<T>) -> Result<Matrix<T>> {
        let mut dz2 = d_out.clone();
        dz2.mask_relu(&trace.z2);
        self.w2.grad_mut().add_assign(&trace.ah1.t_matmul(&dz2)?);
        if let Some(b) = &mut self.b2 {
            accumulate_bias(b, &dz2);
        }
        // Â is symmetric, so Âᵀ G = Â G
        let mut dz1 = a_norm.matmul(&dz2.matmul_t(&self.w2.value)?)?;
        dz1.mask_relu(&trace.z1);
        self.w1.grad_mut().add_assign(&trace.ac.t_matmul(&dz1)?);
        if let Some(b) = &mut self.b1 {
            accumulate_bias(b, &dz1);
        }
        a_norm.matmul(&dz1.matmul_t(&self.w1.value)?)
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_, T> {
        let mut out: ParamsMut<'_, T> = vec![("gcn.w1".to_string(), &mut self.w1)];
        if let Some(b) = &mut self.b1 {
            out.push(("gcn.b1".to_string(), b));
        }
        out.push(("gcn.w2".to_string(), &mut self.w2));
        if let Some(b) = &mut self.b2 {
            out.push(("gcn.b2".to_string(), b));
        }
        out
    }
}

fn accumulate_bias<T: Scalar>(b: &mut Param<T>, dz: &Matrix<T>) {
    let sums = dz.col_sums();
    for (g, s) in b.grad_mut().row_mut(0).iter_mut().zip(sums) {
        *g += s;
    }
}

/// `gcn_layer(gcn_layer(C, Â, W1), Â, W2)` (plus biases when present).
pub fn embed<T: Scalar>(c: &Matrix<T>, g: &DepGraph<T>, p: &GcnParams<T>) -> Result<Matrix<T>> {
    if g.n != c.rows() {
        return Err(BeeError::Alignment(format!(
            "parse has {} tokens, encoder output has {}",
            g.n,
            c.rows()
        )));
    }
    Ok(p.forward(c, &g.a_norm)?.0)
}

/// One hidden ReLU layer followed by a linear output layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct Mlp<T> {
    pub w1: Param<T>,
    pub b1: Param<T>,
    pub w2: Param<T>,
    pub b2: Param<T>,
}

/// Hidden pre-activation kept for the backward pass.
#[derive(Debug, Clone)]
pub struct MlpTrace<T> {
    input: Vec<T>,
    hidden_pre: Vec<T>,
    hidden: Vec<T>,
}

impl<T: Scalar> Mlp<T> {
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, out: usize, rng: &mut R) -> Self {
        Mlp {
            w1: uniform_param(hidden, input, input, rng),
            b1: Param::new(Matrix::zeros(1, hidden)),
            w2: uniform_param(out, hidden, hidden, rng),
            b2: Param::new(Matrix::zeros(1, out)),
        }
    }

    pub fn zeros(input: usize, hidden: usize, out: usize) -> Self {
        Mlp {
            w1: Param::new(Matrix::zeros(hidden, input)),
            b1: Param::new(Matrix::zeros(1, hidden)),
            w2: Param::new(Matrix::zeros(out, hidden)),
            b2: Param::new(Matrix::zeros(1, out)),
        }
    }

    pub fn output_width(&self) -> usize {
        self.w2.value.rows()
    }

    pub fn forward(&self, x: &[T]) -> (Vec<T>, MlpTrace<T>) {
        let mut pre = matvec(&self.w1.value, x);
        for (p, &b) in pre.iter_mut().zip(self.b1.value.row(0)) {
            *p += b;
        }
        let hidden: Vec<T> = pre.iter().map(|&v| v.max(T::zero())).collect();
        let mut out = matvec(&self.w2.value, &hidden);
        for (o, &b) in out.iter_mut().zip(self.b2.value.row(0)) {
            *o += b;
        }
        (
            out,
            MlpTrace {
                input: x.to_vec(),
                hidden_pre: pre,
                hidden,
            },
        )
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        self.forward(x).0
    }

    /// Accumulates gradients and returns `dL/dx`.
    pub fn backward(&mut self, trace: &MlpTrace<T>, d_out: &[T]) -> Vec<T> {
        add_outer(self.w2.grad_mut(), d_out, &trace.hidden);
        for (g, &d) in self.b2.grad_mut().row_mut(0).iter_mut().zip(d_out) {
            *g += d;
        }
        let mut dh = t_matvec(&self.w2.value, d_out);
        for (g, &pre) in dh.iter_mut().zip(&trace.hidden_pre) {
            if pre <= T::zero() {
                *g = T::zero();
            }
        }
        add_outer(self.w1.grad_mut(), &dh, &trace.input);
        for (g, &d) in self.b1.grad_mut().row_mut(0).iter_mut().zip(&dh) {
            *g += d;
        }
        t_matvec(&self.w1.value, &dh)
    }

    fn params_mut(&mut self, prefix: &str) -> ParamsMut<'_, T> {
        vec![
            (format!("{prefix}.w1"), &mut self.w1),
            (format!("{prefix}.b1"), &mut self.b1),
            (format!("{prefix}.w2"), &mut self.w2),
            (format!("{prefix}.b2"), &mut self.b2),
        ]
    }
}

/// Independent head (trigger side) and dependent (argument side) networks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct HeadDepParams<T> {
    pub head: Mlp<T>,
    pub dep: Mlp<T>,
}

impl<T: Scalar> HeadDepParams<T> {
    pub fn random<R: Rng + ?Sized>(input: usize, hidden: usize, out: usize, rng: &mut R) -> Self {
        HeadDepParams {
            head: Mlp::random(input, hidden, out, rng),
            dep: Mlp::random(input, hidden, out, rng),
        }
    }

    pub fn head_rep(&self, c: &[T]) -> Vec<T> {
        self.head.apply(c)
    }

    pub fn dep_rep(&self, c: &[T]) -> Vec<T> {
        self.dep.apply(c)
    }

    pub fn params_mut(&mut self) -> ParamsMut<'_, T> {
        let mut out = self.head.params_mut("mlp_head");
        out.extend(self.dep.params_mut("mlp_dep"));
        out
    }
}

/// Mean of the token rows covered by `span`.
pub fn mention_rep<T: Scalar>(reps: &Matrix<T>, span: Span) -> Vec<T> {
    let mut out = vec![T::zero(); reps.cols()];
    for i in span.tokens() {
        for (o, &x) in out.iter_mut().zip(reps.row(i)) {
            *o += x;
        }
    }
    let k = T::of(span.token_count() as f64);
    out.iter_mut().for_each(|x| *x /= k);
    out
}

/// Spreads a mention-level gradient back over its token rows.
pub fn mention_rep_backward<T: Scalar>(d_reps: &mut Matrix<T>, span: Span, d_mention: &[T]) {
    let k = T::of(span.token_count() as f64);
    for i in span.tokens() {
        for (o, &g) in d_reps.row_mut(i).iter_mut().zip(d_mention) {
            *o += g / k;
        }
    }
}

/// Mean pairwise cosine similarity between node rows (1.0 for fewer than two rows).
pub fn mean_pairwise_cosine<T: Scalar>(h: &Matrix<T>) -> f64 {
    let n = h.rows();
    if n < 2 {
        return 1.0;
    }
    let norms: Vec<f64> = (0..n)
        .map(|i| h.row(i).iter().map(|x| x.as_f64().powi(2)).sum::<f64>().sqrt())
        .collect();
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..n {
        for j in i + 1..n {
            let dot: f64 = h.row(i).iter().zip(h.row(j)).map(|(a, b)| a.as_f64() * b.as_f64()).sum();
            let denom = norms[i] * norms[j];
            total += if denom > 0.0 { dot / denom } else { 0.0 };
            count += 1;
        }
    }
    total / count as f64
}

/// Oversmoothing diagnostic: mean pairwise cosine of `Âᵏ H` for `k = 0..=depth`.
pub fn smoothing_profile<T: Scalar>(h: &Matrix<T>, a_norm: &Matrix<T>, depth: usize) -> Result<Vec<f64>> {
    let mut cur = h.clone();
    let mut out = vec![mean_pairwise_cosine(&cur)];
    for _ in 0..depth {
        cur = propagate(&cur, a_norm)?;
        out.push(mean_pairwise_cosine(&cur));
    }
    Ok(out)
}
