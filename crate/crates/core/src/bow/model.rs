use std::collections::{BTreeMap, HashMap};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{text, BowError};
use crate::label::Label;
use crate::seed::{self, fnv1a64, STREAM_INIT};

pub const N_CLASSES: usize = 3;

fn default_dim() -> usize {
    10
}
fn default_epochs() -> usize {
    500
}
fn default_lr0() -> f64 {
    0.01
}
fn default_word_ngrams() -> usize {
    1
}
fn default_bucket_count() -> u64 {
    2_000_000
}
fn default_min_token_count() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_lr0")]
    pub lr0: f64,
    #[serde(default = "default_word_ngrams")]
    pub word_ngrams: usize,
    /// Hash buckets for word bigrams; unused when `word_ngrams == 1`.
    #[serde(default = "default_bucket_count")]
    pub bucket_count: u64,
    #[serde(default = "default_min_token_count")]
    pub min_token_count: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            dim: default_dim(),
            epochs: default_epochs(),
            lr0: default_lr0(),
            word_ngrams: default_word_ngrams(),
            bucket_count: default_bucket_count(),
            min_token_count: default_min_token_count(),
            seed: 0,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), BowError> {
        let bad = |m: &str| Err(BowError::InvalidConfig(m.to_string()));
        if self.dim == 0 {
            return bad("dim must be at least 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be at least 1");
        }
        if !(self.lr0.is_finite() && self.lr0 > 0.0) {
            return bad("lr0 must be positive");
        }
        if !matches!(self.word_ngrams, 1 | 2) {
            return bad("word_ngrams must be 1 or 2");
        }
        if self.word_ngrams > 1 && self.bucket_count == 0 {
            return bad("bucket_count must be positive when word_ngrams > 1");
        }
        if self.min_token_count == 0 {
            return bad("min_token_count must be at least 1");
        }
        Ok(())
    }
}

/// Class probabilities in (negative, neutral, positive) order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbVector(pub [f64; N_CLASSES]);

impl ProbVector {
    pub const UNIFORM: ProbVector = ProbVector([1.0 / 3.0; 3]);

    pub fn p(&self, label: Label) -> f64 {
        self.0[label.index()]
    }

    /// Most probable class. Any tie resolves to neutral.
    pub fn argmax(&self) -> Label {
        let max = self.0.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let winners: Vec<_> = Label::ALL.iter().filter(|l| self.p(**l) == max).collect();
        match winners.as_slice() {
            [only] => **only,
            _ => Label::Neutral,
        }
    }
}

/// Numerically stable softmax of three logits.
pub(crate) fn softmax(logits: &[f64; N_CLASSES]) -> [f64; N_CLASSES] {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e = [0.0; N_CLASSES];
    for (o, &z) in e.iter_mut().zip(logits) {
        *o = (z - max).exp();
    }
    let sum: f64 = e.iter().sum();
    e.map(|x| x / sum)
}

/// Row initialization: uniform in `[-1/dim, 1/dim]`, drawn from a stream
/// keyed by (seed, kind, key) so bucket rows can be materialized lazily.
pub(crate) fn init_row(seed: u64, kind: u64, key: u64, dim: usize) -> Vec<f64> {
    let bound = 1.0 / dim as f64;
    let mut rng = seed::rng(seed::mix(seed, &[STREAM_INIT, kind, key]));
    (0..dim).map(|_| rng.random_range(-bound..=bound)).collect()
}

pub(crate) const ROW_KIND_WORD: u64 = 0;
pub(crate) const ROW_KIND_BUCKET: u64 = 1;

/// Bag-of-words softmax classifier: averaged input rows feed a linear
/// output layer.
///
/// Input rows are addressed by a flat row id: ids below `vocab_len()` are
/// words, ids at or above it are bigram buckets (`vocab_len() + bucket`).
/// Bucket rows are stored sparsely; an untouched bucket reads as its
/// deterministic initial value.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub(crate) config: ClassifierConfig,
    pub(crate) preprocessing: String,
    pub(crate) words: Vec<String>,
    pub(crate) word_index: HashMap<String, usize>,
    pub(crate) input: Vec<f64>,
    pub(crate) buckets: BTreeMap<u64, Vec<f64>>,
    pub(crate) output: Vec<f64>,
}

impl Model {
    /// Fresh model over `words` (row order as given) with initialized input
    /// rows and a zero output layer.
    pub fn new(words: Vec<String>, config: ClassifierConfig) -> Model {
        let dim = config.dim;
        let mut input = Vec::with_capacity(words.len() * dim);
        for i in 0..words.len() {
            input.extend(init_row(config.seed, ROW_KIND_WORD, i as u64, dim));
        }
        let word_index = words
            .iter()
            .enumerate()
            .map(|(i, w)| (w.clone(), i))
            .collect();
        Model {
            preprocessing: text::PREPROCESSING_TAG.to_string(),
            words,
            word_index,
            input,
            buckets: BTreeMap::new(),
            output: vec![0.0; N_CLASSES * dim],
            config,
        }
    }

    pub fn config(&self) -> &ClassifierConfig {
        &self.config
    }

    pub fn preprocessing(&self) -> &str {
        &self.preprocessing
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn vocab_len(&self) -> usize {
        self.words.len()
    }

    pub fn words(&self) -> &[String] {
        &self.words
    }

    /// Output matrix, row-major, one row per class in label order.
    pub fn output_matrix(&self) -> &[f64] {
        &self.output
    }

    pub fn output_matrix_mut(&mut self) -> &mut [f64] {
        &mut self.output
    }

    /// Dense word rows, row-major.
    pub fn word_matrix(&self) -> &[f64] {
        &self.input
    }

    pub fn touched_buckets(&self) -> impl Iterator<Item = (u64, &[f64])> {
        self.buckets.iter().map(|(b, r)| (*b, r.as_slice()))
    }

    pub fn input_row(&self, row: usize) -> std::borrow::Cow<'_, [f64]> {
        let dim = self.dim();
        if row < self.words.len() {
            std::borrow::Cow::Borrowed(&self.input[row * dim..(row + 1) * dim])
        } else {
            let bucket = (row - self.words.len()) as u64;
            match self.buckets.get(&bucket) {
                Some(r) => std::borrow::Cow::Borrowed(r),
                None => std::borrow::Cow::Owned(init_row(
                    self.config.seed,
                    ROW_KIND_BUCKET,
                    bucket,
                    dim,
                )),
            }
        }
    }

    pub fn input_row_mut(&mut self, row: usize) -> &mut [f64] {
        let dim = self.dim();
        let vocab = self.words.len();
        if row < vocab {
            &mut self.input[row * dim..(row + 1) * dim]
        } else {
            let bucket = (row - vocab) as u64;
            let seed = self.config.seed;
            self.buckets
                .entry(bucket)
                .or_insert_with(|| init_row(seed, ROW_KIND_BUCKET, bucket, dim))
        }
    }

    /// Input row ids for a token sequence, with multiplicity. Unknown words
    /// contribute nothing; with `word_ngrams == 2` every adjacent token pair
    /// (known or not) adds its hashed bucket row.
    pub fn features(&self, tokens: &[String]) -> Vec<usize> {
        let mut rows: Vec<usize> = tokens
            .iter()
            .filter_map(|t| self.word_index.get(t).copied())
            .collect();
        if self.config.word_ngrams >= 2 {
            let vocab = self.words.len();
            for pair in tokens.windows(2) {
                let key = format!("{} {}", pair[0], pair[1]);
                let bucket = fnv1a64(key.as_bytes()) % self.config.bucket_count;
                rows.push(vocab + bucket as usize);
            }
        }
        rows
    }

    /// Mean of the given input rows.
    pub(crate) fn hidden(&self, rows: &[usize]) -> Vec<f64> {
        let dim = self.dim();
        let mut h = vec![0.0; dim];
        for &r in rows {
            for (acc, v) in h.iter_mut().zip(self.input_row(r).iter()) {
                *acc += v;
            }
        }
        let scale = 1.0 / rows.len() as f64;
        h.iter_mut().for_each(|x| *x *= scale);
        h
    }

    pub(crate) fn logits(&self, hidden: &[f64]) -> [f64; N_CLASSES] {
        let mut z = [0.0; N_CLASSES];
        for (k, zk) in z.iter_mut().enumerate() {
            *zk = self.output[k * hidden.len()..(k + 1) * hidden.len()]
                .iter()
                .zip(hidden)
                .map(|(a, b)| a * b)
                .sum();
        }
        z
    }

    pub fn predict_tokens(&self, tokens: &[String]) -> ProbVector {
        let rows = self.features(tokens);
        if rows.is_empty() {
            return ProbVector::UNIFORM;
        }
        let h = self.hidden(&rows);
        ProbVector(softmax(&self.logits(&h)))
    }

    pub fn predict(&self, text: &str) -> ProbVector {
        self.predict_tokens(&text::preprocess(text))
    }

    pub fn predict_label(&self, text: &str) -> Label {
        self.predict(text).argmax()
    }

    /// All parameters finite.
    pub fn is_finite(&self) -> bool {
        self.input
            .iter()
            .chain(&self.output)
            .chain(self.buckets.values().flatten())
            .all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        text::preprocess(s)
    }

    #[test]
    fn argmax_ties_go_neutral() {
        assert_eq!(ProbVector([0.4, 0.2, 0.4]).argmax(), Label::Neutral);
        assert_eq!(ProbVector([0.4, 0.4, 0.2]).argmax(), Label::Neutral);
        assert_eq!(ProbVector::UNIFORM.argmax(), Label::Neutral);
        assert_eq!(ProbVector([0.5, 0.2, 0.3]).argmax(), Label::Negative);
    }

    #[test]
    fn unknown_text_is_uniform() {
        let m = Model::new(vec!["a".into()], ClassifierConfig::default());
        assert_eq!(m.predict(""), ProbVector::UNIFORM);
        assert_eq!(m.predict("zzz qqq"), ProbVector::UNIFORM);
    }

    #[test]
    fn init_range() {
        let m = Model::new(
            (0..50).map(|i| i.to_string()).collect(),
            ClassifierConfig::default(),
        );
        assert!(m.word_matrix().iter().all(|x| x.abs() <= 0.1));
        assert!(m.output_matrix().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn bigram_features_hash_into_buckets() {
        let cfg = ClassifierConfig {
            word_ngrams: 2,
            bucket_count: 1000,
            ..Default::default()
        };
        let m = Model::new(vec!["a".into(), "b".into()], cfg);
        let rows = m.features(&toks("a b zzz"));
        assert_eq!(&rows[..2], &[0, 1]);
        assert_eq!(rows.len(), 4);
        let expected = 2 + (fnv1a64(b"a b") % 1000) as usize;
        assert_eq!(rows[2], expected);
        // untouched bucket rows read as their initial value, stably
        assert_eq!(m.input_row(rows[3]), m.input_row(rows[3]));
    }

    #[test]
    fn softmax_normalized_for_extreme_logits() {
        for z in [[1e300, -1e300, 0.0], [0.0, 0.0, 0.0], [-745.0, 700.0, 3.0]] {
            let p = softmax(&z);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.iter().all(|x| x.is_finite() && (0.0..=1.0).contains(x)));
        }
    }
}
