//! Dependency parse ingestion and the normalized adjacency consumed by the GCN.
//!
//! Parses come from an external tool as CoNLL-U (or inline `dep_edges` in the
//! JSON-lines corpus). Arcs are treated as undirected and their relation labels
//! are kept for reference only.

use serde::{Deserialize, Serialize};

use crate::corpus::Sentence;
use crate::error::{BeeError, Result};
use crate::linalg::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DepEdge {
    pub head: usize,
    pub dependent: usize,
    pub relation: String,
}

impl DepEdge {
    pub fn new(head: usize, dependent: usize, relation: impl Into<String>) -> Self {
        DepEdge {
            head,
            dependent,
            relation: relation.into(),
        }
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.head >= n || self.dependent >= n {
            return Err(BeeError::Range(format!(
                "edge {}->{} outside sentence of {n} tokens",
                self.head, self.dependent
            )));
        }
        if self.head == self.dependent {
            return Err(BeeError::Range(format!("self-loop edge on token {}", self.head)));
        }
        Ok(())
    }
}

/// Parses one CoNLL-U sentence into its token count and non-root arcs
/// (0-based indices). Comment lines, multiword ranges and empty nodes are skipped.
pub fn parse_conllu(text: &str) -> Result<(usize, Vec<DepEdge>)> {
    let mut sentences = parse_conllu_document(text)?;
    match sentences.len() {
        0 => Ok((0, Vec::new())),
        1 => Ok(sentences.remove(0)),
        k => Err(BeeError::parse(0, format!("expected one sentence, found {k}"))),
    }
}

/// Parses a multi-sentence CoNLL-U document (sentences separated by blank lines).
pub fn parse_conllu_document(text: &str) -> Result<Vec<(usize, Vec<DepEdge>)>> {
    let mut out = Vec::new();
    let mut rows: Vec<(usize, usize, usize, String)> = Vec::new(); // (line, id, head, rel)

    fn finish(rows: &mut Vec<(usize, usize, usize, String)>, out: &mut Vec<(usize, Vec<DepEdge>)>) -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let n = rows.len();
        let mut edges = Vec::new();
        for (pos, (line, id, head, rel)) in rows.drain(..).enumerate() {
            if id != pos + 1 {
                return Err(BeeError::parse(line, format!("token id {id} out of sequence (expected {})", pos + 1)));
            }
            if head > n {
                return Err(BeeError::Range(format!("line {line}: head {head} exceeds sentence length {n}")));
            }
            if head == id {
                return Err(BeeError::Range(format!("line {line}: token {id} heads itself")));
            }
            if head > 0 {
                edges.push(DepEdge::new(head - 1, id - 1, rel));
            }
        }
        out.push((n, edges));
        Ok(())
    }

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() {
            finish(&mut rows, &mut out)?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 8 {
            return Err(BeeError::parse(line_no, format!("expected 10 columns, found {}", cols.len())));
        }
        if cols[0].contains('-') || cols[0].contains('.') {
            continue;
        }
        let id: usize = cols[0]
            .parse()
            .map_err(|_| BeeError::parse(line_no, format!("non-integer ID {:?}", cols[0])))?;
        let head: usize = cols[6]
            .parse()
            .map_err(|_| BeeError::parse(line_no, format!("non-integer HEAD {:?}", cols[6])))?;
        rows.push((line_no, id, head, cols[7].to_string()));
    }
    finish(&mut rows, &mut out)?;
    Ok(out)
}

/// Symmetric 0/1 adjacency with zero diagonal; arc direction is discarded.
pub fn build_adjacency<T: Scalar>(n: usize, edges: &[DepEdge]) -> Result<Matrix<T>> {
    let mut a = Matrix::zeros(n, n);
    for e in edges {
        e.check(n)?;
        a[(e.head, e.dependent)] = T::one();
        a[(e.dependent, e.head)] = T::one();
    }
    Ok(a)
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
pub fn normalize_adjacency<T: Scalar>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    if a.cols() != n {
        return Err(BeeError::Shape(format!("adjacency must be square, got {:?}", a.shape())));
    }
    let sqrt_deg: Vec<T> = (0..n)
        .map(|i| (T::one() + a.row(i).iter().copied().sum::<T>()).sqrt())
        .collect();
    let mut out = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let raw = if i == j { a[(i, j)] + T::one() } else { a[(i, j)] };
            if raw != T::zero() {
                let v = raw / (sqrt_deg[i] * sqrt_deg[j]);
                out[(i, j)] = v;
                out[(j, i)] = v;
            }
        }
    }
    Ok(out)
}

/// A sentence's parse with its normalized adjacency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DepGraph<T> {
    pub n: usize,
    pub edges: Vec<DepEdge>,
    pub a_norm: Matrix<T>,
}

impl<T: Scalar> DepGraph<T> {
    pub fn new(n: usize, edges: Vec<DepEdge>) -> Result<Self> {
        let a_norm = normalize_adjacency(&build_adjacency::<T>(n, &edges)?)?;
        Ok(DepGraph { n, edges, a_norm })
    }

    /// Graph for a sentence, rejecting parses whose token count differs.
    pub fn for_sentence(sentence: &Sentence, n: usize, edges: Vec<DepEdge>) -> Result<Self> {
        if n != sentence.len() {
            return Err(BeeError::Alignment(format!(
                "parse has {n} tokens but sentence in {} has {}",
                sentence.doc_id,
                sentence.len()
            )));
        }
        Self::new(n, edges)
    }

    /// Graph from the sentence's inline `dep_edges`.
    pub fn from_inline(sentence: &Sentence) -> Result<Self> {
        let edges = sentence
            .dep_edges
            .clone()
            .ok_or_else(|| BeeError::MissingParse(format!("sentence in {} has no dep_edges", sentence.doc_id)))?;
        Self::new(sentence.len(), edges)
    }

    /// Edge-free graph: `Â = I`.
    pub fn edgeless(n: usize) -> Self {
        DepGraph {
            n,
            edges: Vec::new(),
            a_norm: Matrix::identity(n),
        }
    }
}

/// Writes sentences with inline parses as a CoNLL-U document. Tokens without
/// an incoming arc get HEAD 0; a token with two heads is a schema error.
pub fn write_conllu(sentences: &[Sentence]) -> Result<String> {
    let mut out = String::new();
    for (i, s) in sentences.iter().enumerate() {
        let edges = s
            .dep_edges
            .as_ref()
            .ok_or_else(|| BeeError::MissingParse(format!("sentence {i} ({}) has no dep_edges", s.doc_id)))?;
        let mut head: Vec<Option<&DepEdge>> = vec![None; s.len()];
        for e in edges {
            e.check(s.len())?;
            if head[e.dependent].replace(e).is_some() {
                return Err(BeeError::Schema(format!(
                    "sentence {i} ({}): token {} has more than one head",
                    s.doc_id, e.dependent
                )));
            }
        }
        for (t, h) in s.tokens.iter().zip(&head) {
            let (hd, rel) = h.map_or((0, "root"), |e| (e.head + 1, e.relation.as_str()));
            out.push_str(&format!("{}\t{}\t_\t_\t_\t_\t{hd}\t{rel}\t_\t_\n", t.index + 1, t.text));
        }
        out.push('\n');
    }
    Ok(out)
}

/// Attaches a sidecar CoNLL-U document to a corpus, sentence by sentence.
pub fn attach_conllu(sentences: &mut [Sentence], conllu: &str) -> Result<()> {
    let parses = parse_conllu_document(conllu)?;
    if parses.len() != sentences.len() {
        return Err(BeeError::Alignment(format!(
            "parse file has {} sentences, corpus has {}",
            parses.len(),
            sentences.len()
        )));
    }
    for (i, (s, (n, edges))) in sentences.iter_mut().zip(parses).enumerate() {
        if n != s.len() {
            return Err(BeeError::Alignment(format!(
                "sentence {i} ({}): parse has {n} tokens, corpus has {}",
                s.doc_id,
                s.len()
            )));
        }
        s.dep_edges = Some(edges);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: usize, form: &str, head: &str, rel: &str) -> String {
        format!("{id}\t{form}\t_\t_\t_\t_\t{head}\t{rel}\t_\t_\n")
    }

    #[test]
    fn conllu_writer_round_trips() {
        let mut s = Sentence::from_words("d", &["p53", "binds", "MDM2"]);
        s.dep_edges = Some(vec![DepEdge::new(1, 0, "nsubj"), DepEdge::new(1, 2, "obj")]);
        let text = write_conllu(std::slice::from_ref(&s)).unwrap();
        let mut back = s.clone();
        back.dep_edges = None;
        attach_conllu(std::slice::from_mut(&mut back), &text).unwrap();
        assert_eq!(back, s);
        s.dep_edges = Some(vec![DepEdge::new(1, 0, "a"), DepEdge::new(2, 0, "b")]);
        assert!(matches!(write_conllu(&[s]), Err(BeeError::Schema(_))));
    }

    #[test]
    fn root_only_sentence() {
        assert_eq!(parse_conllu(&row(1, "binds", "0", "root")).unwrap(), (1, vec![]));
    }

    #[test]
    fn two_tokens() {
        let src = format!("# text = p53 binds\n{}{}", row(1, "binds", "0", "root"), row(2, "p53", "1", "nsubj"));
        assert_eq!(parse_conllu(&src).unwrap(), (2, vec![DepEdge::new(0, 1, "nsubj")]));
    }

    #[test]
    fn bad_heads() {
        let src = format!("{}{}", row(1, "a", "0", "root"), row(2, "b", "x", "dep"));
        assert!(matches!(parse_conllu(&src), Err(BeeError::Parse { line: 2, .. })));
        let src = format!("{}{}", row(1, "a", "0", "root"), row(2, "b", "5", "dep"));
        assert!(matches!(parse_conllu(&src), Err(BeeError::Range(_))));
    }

    #[test]
    fn token_count_mismatch_is_alignment_error() {
        let s = Sentence::from_words("d", &["a", "b", "c"]);
        let (n, edges) = parse_conllu(&format!("{}{}", row(1, "a", "0", "root"), row(2, "b", "1", "dep"))).unwrap();
        assert!(matches!(DepGraph::<f64>::for_sentence(&s, n, edges), Err(BeeError::Alignment(_))));
        let mut corpus = vec![s];
        assert!(attach_conllu(&mut corpus, &row(1, "a", "0", "root")).is_err());
    }

    #[test]
    fn multi_sentence_document_skips_ranges() {
        let src = format!(
            "{}1-2\tdon't\t_\t_\t_\t_\t_\t_\t_\t_\n{}\n{}",
            row(1, "a", "0", "root"),
            row(2, "b", "1", "dep"),
            row(1, "c", "0", "root")
        );
        let doc = parse_conllu_document(&src).unwrap();
        assert_eq!(doc.len(), 2);
        assert_eq!(doc[1], (1, vec![]));
    }

    #[test]
    fn adjacency_examples() {
        let a: Matrix<f64> = build_adjacency(3, &[]).unwrap();
        assert_eq!(a, Matrix::zeros(3, 3));
        let a: Matrix<f64> = build_adjacency(2, &[DepEdge::new(0, 1, "x")]).unwrap();
        assert_eq!(a.to_rows(), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        // chain 0-1-2-3: ones exactly on the first off-diagonals
        let chain: Vec<DepEdge> = (0..3).map(|i| DepEdge::new(i + 1, i, "dep")).collect();
        let a: Matrix<f64> = build_adjacency(4, &chain).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expect = if usize::abs_diff(i, j) == 1 { 1.0 } else { 0.0 };
                assert_eq!(a[(i, j)], expect, "({i},{j})");
            }
        }
        assert!(build_adjacency::<f64>(2, &[DepEdge::new(0, 2, "x")]).is_err());
    }

    #[test]
    fn normalization_examples() {
        let one: Matrix<f64> = normalize_adjacency(&Matrix::zeros(1, 1)).unwrap();
        assert_eq!(one.to_rows(), vec![vec![1.0]]);

        let g = DepGraph::<f64>::new(2, vec![DepEdge::new(0, 1, "x")]).unwrap();
        for &v in g.a_norm.as_slice() {
            assert!((v - 0.5).abs() < 1e-15);
        }

        // star: center degree 3 with self-loop, leaves degree 2
        let star = DepGraph::<f64>::new(3, vec![DepEdge::new(0, 1, "x"), DepEdge::new(0, 2, "y")]).unwrap();
        assert!((star.a_norm[(0, 1)] - 1.0 / 6f64.sqrt()).abs() < 1e-15);
        assert!((star.a_norm[(0, 1)] - 0.40825).abs() < 1e-5);
        assert!((star.a_norm[(0, 0)] - 1.0 / 3.0).abs() < 1e-15);
        assert!((star.a_norm[(1, 1)] - 0.5).abs() < 1e-15);
        assert_eq!(star.a_norm[(1, 2)], 0.0);
    }

    #[test]
    fn zero_edges_give_identity() {
        let g = DepGraph::<f32>::new(4, vec![]).unwrap();
        assert_eq!(g.a_norm, Matrix::identity(4));
        assert_eq!(DepGraph::<f32>::edgeless(4), g);
    }
}
