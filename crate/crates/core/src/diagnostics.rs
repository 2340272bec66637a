//! Corpus-level drift indicators: label distribution, rater agreement,
//! embedding variability and similarity of mean embedding vectors.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::bow::preprocess;
use crate::ingest::LabeledExample;
use crate::label::Label;
use crate::metrics::fleiss_kappa;
use crate::seed::{self, fnv1a64, STREAM_EMBED};

#[derive(Debug, thiserror::Error)]
pub enum DiagnosticsError {
    #[error("no precomputed embedding for id {0:?}")]
    MissingId(String),
    #[error("dimension mismatch: expected {expected}, found {found}{}", context.as_deref().map(|c| format!(" ({c})")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        found: usize,
        context: Option<String>,
    },
    #[error("embedding file line {line}: {reason}")]
    BadEmbeddingLine { line: usize, reason: String },
    #[error("embedding dimension must be at least 2")]
    DimensionTooSmall,
    #[error("variability needs at least 2 vectors, got {0}")]
    TooFewVectors(usize),
    #[error("corpus {0} has a zero mean vector")]
    ZeroMean(String),
    #[error("cannot compare embeddings from different providers ({0} vs {1})")]
    MixedProviders(String, String),
    #[error("non-finite embedding value")]
    NonFinite,
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Sentence vectors for one corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    pub name: String,
    pub ids: Vec<String>,
    pub vectors: Vec<Vec<f64>>,
    pub provider: String,
}

impl EmbeddingSet {
    pub fn dim(&self) -> usize {
        self.vectors.first().map_or(0, Vec::len)
    }

    pub fn subset(&self, name: &str, rows: &[usize]) -> EmbeddingSet {
        EmbeddingSet {
            name: name.to_string(),
            ids: rows.iter().map(|&r| self.ids[r].clone()).collect(),
            vectors: rows.iter().map(|&r| self.vectors[r].clone()).collect(),
            provider: self.provider.clone(),
        }
    }

    pub fn mean_vector(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim()];
        for v in &self.vectors {
            for (a, x) in m.iter_mut().zip(v) {
                *a += x;
            }
        }
        let n = self.vectors.len().max(1) as f64;
        m.iter_mut().for_each(|a| *a /= n);
        m
    }
}

pub enum EmbeddingProvider {
    /// Each token maps to a fixed standard-normal vector seeded by its
    /// FNV-1a hash; a text is the L2-normalized mean of its token vectors.
    HashedRandomProjection { dim: usize, seed: u64 },
    /// Precomputed vectors keyed by example id.
    File {
        name: String,
        dim: usize,
        table: HashMap<String, Vec<f64>>,
    },
}

impl EmbeddingProvider {
    pub fn tag(&self) -> String {
        match self {
            EmbeddingProvider::HashedRandomProjection { dim, seed } => {
                format!("hashed-random-projection:d={dim}:seed={seed}")
            }
            EmbeddingProvider::File { name, dim, .. } => format!("file:{name}:d={dim}"),
        }
    }

    /// Reads `id<TAB>d<TAB>v1,v2,...` lines.
    pub fn from_file<R: BufRead>(name: &str, reader: R) -> Result<Self, DiagnosticsError> {
        let mut table = HashMap::new();
        let mut dim = None;
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let bad = |reason: &str| DiagnosticsError::BadEmbeddingLine {
                line: i + 1,
                reason: reason.to_string(),
            };
            let mut parts = line.splitn(3, '\t');
            let (Some(id), Some(d), Some(values)) = (parts.next(), parts.next(), parts.next())
            else {
                return Err(bad("expected id<TAB>d<TAB>values"));
            };
            let d: usize = d.trim().parse().map_err(|_| bad("dimension is not an integer"))?;
            let v = values
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| bad("unparseable value"))?;
            if v.len() != d {
                return Err(DiagnosticsError::DimensionMismatch {
                    expected: d,
                    found: v.len(),
                    context: Some(format!("line {}", i + 1)),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(DiagnosticsError::NonFinite);
            }
            match dim {
                None => dim = Some(d),
                Some(expected) if expected != d => {
                    return Err(DiagnosticsError::DimensionMismatch {
                        expected,
                        found: d,
                        context: Some(format!("line {}", i + 1)),
                    })
                }
                _ => {}
            }
            table.insert(id.to_string(), v);
        }
        let dim = dim.unwrap_or(0);
        if dim < 2 {
            return Err(DiagnosticsError::DimensionTooSmall);
        }
        Ok(EmbeddingProvider::File {
            name: name.to_string(),
            dim,
            table,
        })
    }
}

fn token_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed::mix(seed, &[STREAM_EMBED, fnv1a64(token.as_bytes())]));
    (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// Embeds `(id, text)` pairs with `provider`.
pub fn embed_corpus<I, S>(
    name: &str,
    items: I,
    provider: &EmbeddingProvider,
) -> Result<EmbeddingSet, DiagnosticsError>
where
    I: IntoIterator<Item = (S, S)>,
    S: AsRef<str>,
{
    let mut ids = Vec::new();
    let mut vectors = Vec::new();
    match provider {
        EmbeddingProvider::HashedRandomProjection { dim, seed } => {
            if *dim < 2 {
                return Err(DiagnosticsError::DimensionTooSmall);
            }
            let mut cache: HashMap<String, Vec<f64>> = HashMap::new();
            for (id, text) in items {
                let mut v = vec![0.0; *dim];
                for tok in preprocess(text.as_ref()) {
                    let tv = cache
                        .entry(tok)
                        .or_insert_with_key(|t| token_vector(t, *dim, *seed));
                    for (a, x) in v.iter_mut().zip(tv.iter()) {
                        *a += x;
                    }
                }
                let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
                if norm > 0.0 {
                    v.iter_mut().for_each(|x| *x /= norm);
                }
                ids.push(id.as_ref().to_string());
                vectors.push(v);
            }
        }
        EmbeddingProvider::File { table, .. } => {
            for (id, _) in items {
                let v = table
                    .get(id.as_ref())
                    .ok_or_else(|| DiagnosticsError::MissingId(id.as_ref().to_string()))?;
                ids.push(id.as_ref().to_string());
                vectors.push(v.clone());
            }
        }
    }
    Ok(EmbeddingSet {
        name: name.to_string(),
        ids,
        vectors,
        provider: provider.tag(),
    })
}

/// Mean over dimensions of the per-dimension sample variance.
pub fn corpus_variability(emb: &EmbeddingSet) -> Result<f64, DiagnosticsError> {
    let n = emb.vectors.len();
    if n < 2 {
        return Err(DiagnosticsError::TooFewVectors(n));
    }
    // shifted by the first vector: identical vectors give exactly 0
    let origin = &emb.vectors[0];
    let d = origin.len();
    let mut shift = vec![0.0; d];
    for v in &emb.vectors {
        for ((s, x), o) in shift.iter_mut().zip(v).zip(origin) {
            *s += x - o;
        }
    }
    shift.iter_mut().for_each(|s| *s /= n as f64);
    let mut ss = vec![0.0; d];
    for v in &emb.vectors {
        for (((s, x), o), c) in ss.iter_mut().zip(v).zip(origin).zip(&shift) {
            let dev = (x - o) - c;
            *s += dev * dev;
        }
    }
    Ok(ss.iter().sum::<f64>() / ((n - 1) as f64 * d as f64))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimilarityMatrices {
    pub names: Vec<String>,
    /// Cosine similarity of corpus mean vectors.
    pub raw: Vec<Vec<f64>>,
    /// Off-diagonal entries rescaled so the smallest is 0 and the largest 1;
    /// diagonal fixed at 1. If all off-diagonal entries are equal they map
    /// to 1.
    pub display: Vec<Vec<f64>>,
}

pub fn similarity_matrix(corpora: &[EmbeddingSet]) -> Result<SimilarityMatrices, DiagnosticsError> {
    if let Some(first) = corpora.first() {
        for c in corpora {
            if c.provider != first.provider {
                return Err(DiagnosticsError::MixedProviders(
                    first.provider.clone(),
                    c.provider.clone(),
                ));
            }
            if c.dim() != first.dim() {
                return Err(DiagnosticsError::DimensionMismatch {
                    expected: first.dim(),
                    found: c.dim(),
                    context: Some(c.name.clone()),
                });
            }
        }
    }
    let means: Vec<Vec<f64>> = corpora
        .iter()
        .map(|c| {
            let m = c.mean_vector();
            if m.iter().all(|&x| x == 0.0) {
                Err(DiagnosticsError::ZeroMean(c.name.clone()))
            } else {
                Ok(m)
            }
        })
        .collect::<Result<_, _>>()?;

    let n = corpora.len();
    let mut raw = vec![vec![1.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let c = cosine(&means[i], &means[j]);
            raw[i][j] = c;
            raw[j][i] = c;
        }
    }
    let off: Vec<f64> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .map(|(i, j)| raw[i][j])
        .collect();
    let lo = off.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = off.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let display = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j || hi == lo {
                        1.0
                    } else {
                        (raw[i][j] - lo) / (hi - lo)
                    }
                })
                .collect()
        })
        .collect();
    Ok(SimilarityMatrices {
        names: corpora.iter().map(|c| c.name.clone()).collect(),
        raw,
        display,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LabelDistribution {
    pub counts: [usize; 3],
    pub fractions: [f64; 3],
}

impl LabelDistribution {
    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

pub fn label_distribution<'a, I: IntoIterator<Item = &'a Label>>(labels: I) -> LabelDistribution {
    let mut counts = [0usize; 3];
    for l in labels {
        counts[l.index()] += 1;
    }
    let total: usize = counts.iter().sum();
    let fractions = counts.map(|c| if total == 0 { 0.0 } else { c as f64 / total as f64 });
    LabelDistribution { counts, fractions }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorpusSummary {
    pub name: String,
    pub n: usize,
    pub labels: LabelDistribution,
    /// Fleiss' kappa over the items sharing the most common rater count;
    /// `None` when vote counts are unavailable.
    pub kappa: Option<f64>,
    pub variability: Option<f64>,
    pub variability_by_class: [Option<f64>; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagnosticsReport {
    pub provider: String,
    pub corpora: Vec<CorpusSummary>,
    pub similarity: SimilarityMatrices,
    /// Class-conditional mean-vector similarities; `None` for a class that
    /// is missing from some corpus.
    pub similarity_by_class: [Option<SimilarityMatrices>; 3],
}

fn corpus_kappa(examples: &[&LabeledExample]) -> Option<f64> {
    let mut by_n: HashMap<u32, usize> = HashMap::new();
    for e in examples {
        let n: u32 = e.vote_counts.iter().sum();
        if n >= 2 {
            *by_n.entry(n).or_default() += 1;
        }
    }
    let (&n, _) = by_n.iter().max_by_key(|&(n, c)| (*c, std::cmp::Reverse(*n)))?;
    let table: Vec<[u32; 3]> = examples
        .iter()
        .map(|e| e.vote_counts)
        .filter(|v| v.iter().sum::<u32>() == n)
        .collect();
    fleiss_kappa(&table).ok().map(|r| r.kappa)
}

/// Diagnostics for named groups of corpus positions (e.g. time bins).
pub fn diagnose(
    corpus: &[LabeledExample],
    groups: &[(String, Vec<usize>)],
    provider: &EmbeddingProvider,
) -> Result<DiagnosticsReport, DiagnosticsError> {
    let all = embed_corpus(
        "all",
        corpus.iter().map(|e| (e.item_id.as_str(), e.text.as_str())),
        provider,
    )?;

    let mut corpora = Vec::new();
    let mut sets = Vec::new();
    let mut class_sets: [Vec<EmbeddingSet>; 3] = Default::default();
    for (name, rows) in groups {
        let examples: Vec<&LabeledExample> = rows.iter().map(|&r| &corpus[r]).collect();
        let set = all.subset(name, rows);
        let mut variability_by_class = [None; 3];
        for c in Label::ALL {
            let class_rows: Vec<usize> = rows
                .iter()
                .copied()
                .filter(|&r| corpus[r].label == c)
                .collect();
            let class_set = all.subset(name, &class_rows);
            variability_by_class[c.index()] = corpus_variability(&class_set).ok();
            class_sets[c.index()].push(class_set);
        }
        corpora.push(CorpusSummary {
            name: name.clone(),
            n: rows.len(),
            labels: label_distribution(examples.iter().map(|e| &e.label)),
            kappa: corpus_kappa(&examples),
            variability: corpus_variability(&set).ok(),
            variability_by_class,
        });
        sets.push(set);
    }
    let similarity = similarity_matrix(&sets)?;
    let similarity_by_class = class_sets.map(|s| similarity_matrix(&s).ok());
    Ok(DiagnosticsReport {
        provider: provider.tag(),
        corpora,
        similarity,
        similarity_by_class,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

/// Per-corpus summary CSV.
pub fn write_summary_csv<W: Write>(w: W, report: &DiagnosticsReport) -> Result<(), DiagnosticsError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record([
        "corpus",
        "provider",
        "n",
        "n_negative",
        "n_neutral",
        "n_positive",
        "frac_negative",
        "frac_neutral",
        "frac_positive",
        "kappa",
        "variability",
        "variability_negative",
        "variability_neutral",
        "variability_positive",
    ])?;
    for c in &report.corpora {
        let mut row = vec![c.name.clone(), report.provider.clone(), c.n.to_string()];
        row.extend(c.labels.counts.iter().map(|x| x.to_string()));
        row.extend(c.labels.fractions.iter().map(|x| x.to_string()));
        row.push(opt(c.kappa));
        row.push(opt(c.variability));
        row.extend(c.variability_by_class.iter().map(|x| opt(*x)));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Square matrix CSV with a leading `corpus` column.
pub fn write_matrix_csv<W: Write>(
    w: W,
    names: &[String],
    matrix: &[Vec<f64>],
) -> Result<(), DiagnosticsError> {
    let mut wtr = csv::Writer::from_writer(w);
    let mut header = vec!["corpus".to_string()];
    header.extend(names.iter().cloned());
    wtr.write_record(&header)?;
    for (name, row) in names.iter().zip(matrix) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|x| x.to_string()));
        wtr.write_record(&rec)?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(name: &str, vectors: Vec<Vec<f64>>) -> EmbeddingSet {
        EmbeddingSet {
            name: name.into(),
            ids: (0..vectors.len()).map(|i| i.to_string()).collect(),
            vectors,
            provider: "test".into(),
        }
    }

    fn rp() -> EmbeddingProvider {
        EmbeddingProvider::HashedRandomProjection { dim: 256, seed: 5 }
    }

    #[test]
    fn embedding_is_deterministic() {
        let e = embed_corpus("c", [("a", "hello world"), ("b", "hello world")], &rp()).unwrap();
        assert_eq!(e.vectors[0], e.vectors[1]);
        let norm: f64 = e.vectors[0].iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_token_is_its_normalized_vector() {
        let e = embed_corpus("c", [("a", "Vaccine")], &rp()).unwrap();
        let tv = token_vector("vaccine", 256, 5);
        let n = tv.iter().map(|x| x * x).sum::<f64>().sqrt();
        for (x, y) in e.vectors[0].iter().zip(&tv) {
            assert!((x - y / n).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_text_is_zero_vector() {
        let e = embed_corpus("c", [("a", "")], &rp()).unwrap();
        assert!(e.vectors[0].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn disjoint_vocabularies_near_orthogonal() {
        let left: Vec<(String, String)> = (0..50)
            .map(|i| (format!("l{i}"), format!("alpha{} beta{} gamma{}", i, i + 1, i + 2)))
            .collect();
        let right: Vec<(String, String)> = (0..50)
            .map(|i| (format!("r{i}"), format!("delta{} eps{} zeta{}", i, i + 1, i + 2)))
            .collect();
        let a = embed_corpus("a", left.iter().map(|(x, y)| (x.as_str(), y.as_str())), &rp()).unwrap();
        let b = embed_corpus("b", right.iter().map(|(x, y)| (x.as_str(), y.as_str())), &rp()).unwrap();
        let mut max_abs: f64 = 0.0;
        for u in &a.vectors {
            for v in &b.vectors {
                max_abs = max_abs.max(cosine(u, v).abs());
            }
        }
        assert!(max_abs < 0.3, "max |cos| {max_abs}");
        let mean_abs: f64 = a
            .vectors
            .iter()
            .zip(&b.vectors)
            .map(|(u, v)| cosine(u, v).abs())
            .sum::<f64>()
            / 50.0;
        assert!(mean_abs < 0.2, "mean |cos| {mean_abs}");
    }

    #[test]
    fn file_provider() {
        let text = "x\t2\t1,0\ny\t2\t0,1\n";
        let p = EmbeddingProvider::from_file("pre", text.as_bytes()).unwrap();
        let e = embed_corpus("c", [("y", ""), ("x", "")], &p).unwrap();
        assert_eq!(e.vectors, vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(matches!(
            embed_corpus("c", [("z", "")], &p),
            Err(DiagnosticsError::MissingId(_))
        ));
        assert!(matches!(
            EmbeddingProvider::from_file("pre", "x\t3\t1,0\n".as_bytes()),
            Err(DiagnosticsError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            EmbeddingProvider::from_file("pre", "x\t2\t1,0\ny\t3\t1,0,0\n".as_bytes()),
            Err(DiagnosticsError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn variability_examples() {
        assert_eq!(corpus_variability(&set("a", vec![vec![1.0, 2.0]; 4])).unwrap(), 0.0);
        let two = set("a", vec![vec![0.0, 0.0], vec![2.0, 0.0]]);
        assert_eq!(corpus_variability(&two).unwrap(), 1.0);
        assert!(corpus_variability(&set("a", vec![vec![1.0, 2.0]])).is_err());
    }

    #[test]
    fn variability_of_duplicated_corpus() {
        let base = vec![vec![0.0, 1.0], vec![2.0, 5.0], vec![4.0, -1.0]];
        let n = base.len() as f64;
        let v = corpus_variability(&set("a", base.clone())).unwrap();
        let doubled: Vec<_> = base.iter().flat_map(|x| [x.clone(), x.clone()]).collect();
        let v2 = corpus_variability(&set("a", doubled)).unwrap();
        // SS doubles, denominator goes from n-1 to 2n-1
        assert!((v2 - v * 2.0 * (n - 1.0) / (2.0 * n - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn identical_texts_have_zero_variability() {
        let items = (0..40).map(|i| (i.to_string(), "one text repeated verbatim".to_string()));
        let emb = embed_corpus("dup", items, &rp()).unwrap();
        assert_eq!(corpus_variability(&emb).unwrap(), 0.0);
    }

    #[test]
    fn similarity_examples() {
        let a = set("a", vec![vec![1.0, 0.0]]);
        let b = set("b", vec![vec![0.0, 3.0]]);
        let m = similarity_matrix(&[a.clone(), a.clone(), b]).unwrap();
        assert_eq!(m.raw[0][1], 1.0);
        assert_eq!(m.raw[0][2], 0.0);
        assert_eq!(m.raw[2][2], 1.0);

        let zero = set("z", vec![vec![1.0, 0.0], vec![-1.0, 0.0]]);
        match similarity_matrix(&[a, zero]) {
            Err(DiagnosticsError::ZeroMean(name)) => assert_eq!(name, "z"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn display_rescale() {
        // unit vectors with pairwise cosines 0.9 (0,1), 0.8 (0,2), 0.7 (1,2)
        let c01: f64 = 0.9;
        let c02: f64 = 0.8;
        let c12: f64 = 0.7;
        let v0 = vec![1.0, 0.0, 0.0];
        let v1 = vec![c01, (1.0 - c01 * c01).sqrt(), 0.0];
        let y = (c12 - c02 * c01) / v1[1];
        let v2 = vec![c02, y, (1.0 - c02 * c02 - y * y).sqrt()];
        let m = similarity_matrix(&[set("a", vec![v0]), set("b", vec![v1]), set("c", vec![v2])]).unwrap();
        assert!((m.raw[0][1] - 0.9).abs() < 1e-12);
        assert!((m.raw[1][2] - 0.7).abs() < 1e-12);
        assert!((m.display[0][1] - 1.0).abs() < 1e-9);
        assert!((m.display[0][2] - 0.5).abs() < 1e-9);
        assert!(m.display[1][2].abs() < 1e-9);
        assert_eq!(m.display[1][1], 1.0);
    }

    #[test]
    fn rejects_mixed_providers() {
        let a = set("a", vec![vec![1.0, 0.0]]);
        let mut b = a.clone();
        b.provider = "other".into();
        assert!(matches!(similarity_matrix(&[a, b]), Err(DiagnosticsError::MixedProviders(..))));
    }

    #[test]
    fn label_distribution_counts() {
        let empty = label_distribution(&[]);
        assert_eq!(empty.counts, [0, 0, 0]);
        assert_eq!(empty.fractions, [0.0, 0.0, 0.0]);
        let d = label_distribution(&[Label::Positive, Label::Positive, Label::Negative, Label::Neutral]);
        assert_eq!(d.counts, [1, 1, 2]);
        assert_eq!(d.fractions[2], 0.5);
    }

    fn vecs(n: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 3), 2..n)
    }

    proptest! {
        #[test]
        fn variability_translation_invariant(v in vecs(12), shift in prop::collection::vec(-10.0f64..10.0, 3)) {
            let a = corpus_variability(&set("a", v.clone())).unwrap();
            let moved: Vec<Vec<f64>> = v.iter().map(|x| x.iter().zip(&shift).map(|(p, q)| p + q).collect()).collect();
            let b = corpus_variability(&set("a", moved)).unwrap();
            prop_assert!((a - b).abs() < 1e-9 * (1.0 + a.abs()));
        }

        #[test]
        fn similarity_scale_invariant_and_symmetric(a in vecs(6), b in vecs(6), c in vecs(6), scale in 0.1f64..10.0) {
            let sets = vec![set("a", a.clone()), set("b", b), set("c", c)];
            let Ok(m) = similarity_matrix(&sets) else { return Ok(()); };
            let scaled: Vec<Vec<f64>> = a.iter().map(|x| x.iter().map(|y| y * scale).collect()).collect();
            let mut sets2 = sets.clone();
            sets2[0] = set("a", scaled);
            let m2 = similarity_matrix(&sets2).unwrap();
            for i in 0..3 {
                prop_assert!((m.raw[i][i] - 1.0).abs() < 1e-9);
                for j in 0..3 {
                    prop_assert_eq!(m.raw[i][j], m.raw[j][i]);
                    prop_assert!((m.raw[i][j] - m2.raw[i][j]).abs() < 1e-9);
                }
            }
        }

        #[test]
        fn similarity_permutation_equivariant(a in vecs(5), b in vecs(5), c in vecs(5)) {
            let sets = vec![set("a", a), set("b", b), set("c", c)];
            let Ok(m) = similarity_matrix(&sets) else { return Ok(()); };
            let perm = [2usize, 0, 1];
            let permuted: Vec<_> = perm.iter().map(|&i| sets[i].clone()).collect();
            let mp = similarity_matrix(&permuted).unwrap();
            for i in 0..3 {
                for j in 0..3 {
                    prop_assert_eq!(mp.raw[i][j], m.raw[perm[i]][perm[j]]);
                }
            }
        }
    }
}
