use std::collections::{BTreeMap, HashMap};

use rand::seq::SliceRandom;

use super::model::{softmax, ClassifierConfig, Model, N_CLASSES};
use super::{text, BowError};
use crate::label::Label;
use crate::seed::{self, STREAM_TRAIN};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    /// Examples without any known feature, never visited.
    pub skipped_empty: usize,
    pub examples_used: usize,
    pub updates: usize,
    /// Mean loss over the final epoch.
    pub final_epoch_loss: f64,
}

/// Preprocesses and trains in one step.
pub fn train_texts<S: AsRef<str>>(
    examples: &[(S, Label)],
    config: &ClassifierConfig,
) -> Result<(Model, TrainReport), BowError> {
    let tokenized: Vec<(Vec<String>, Label)> = examples
        .iter()
        .map(|(t, l)| (text::preprocess(t.as_ref()), *l))
        .collect();
    train(&tokenized, config)
}

/// Trains a model with plain per-example SGD.
///
/// Each epoch visits the examples in a seed-determined shuffled order. The
/// learning rate decays linearly from `lr0` to zero over
/// `epochs * n_examples` updates. The vocabulary is every token seen at
/// least `min_token_count` times, in lexicographic row order.
pub fn train(
    examples: &[(Vec<String>, Label)],
    config: &ClassifierConfig,
) -> Result<(Model, TrainReport), BowError> {
    config.validate()?;
    if examples.is_empty() {
        return Err(BowError::EmptyTrainingSet);
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for (tokens, _) in examples {
        for t in tokens {
            *counts.entry(t.as_str()).or_default() += 1;
        }
    }
    let words: Vec<String> = counts
        .into_iter()
        .filter(|&(_, c)| c >= config.min_token_count)
        .map(|(w, _)| w.to_string())
        .collect();
    let mut model = Model::new(words, config.clone());

    let mut report = TrainReport::default();
    let mut data: Vec<(Vec<usize>, Label)> = Vec::with_capacity(examples.len());
    for (tokens, label) in examples {
        let rows = model.features(tokens);
        if rows.is_empty() {
            report.skipped_empty += 1;
        } else {
            data.push((rows, *label));
        }
    }
    if data.is_empty() {
        return Err(BowError::EmptyTrainingSet);
    }
    let mut present = [false; N_CLASSES];
    for (_, l) in &data {
        present[l.index()] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(BowError::SingleClass);
    }
    report.examples_used = data.len();

    let total = (config.epochs * data.len()) as f64;
    let mut rng = seed::rng(seed::mix(config.seed, &[STREAM_TRAIN]));
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut step = 0usize;
    let mut grad = vec![0.0; config.dim];
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let lr = config.lr0 * (1.0 - step as f64 / total);
            let (rows, label) = &data[i];
            epoch_loss += sgd_step(&mut model, rows, *label, lr, &mut grad);
            step += 1;
        }
        report.final_epoch_loss = epoch_loss / data.len() as f64;
    }
    report.updates = step;
    Ok((model, report))
}

/// One ascent step on the log-likelihood of `label`. Returns the loss before
/// the update.
fn sgd_step(model: &mut Model, rows: &[usize], label: Label, lr: f64, grad: &mut [f64]) -> f64 {
    let dim = model.dim();
    let hidden = model.hidden(rows);
    let p = softmax(&model.logits(&hidden));
    grad.iter_mut().for_each(|g| *g = 0.0);
    for (k, pk) in p.iter().enumerate() {
        let target = if k == label.index() { 1.0 } else { 0.0 };
        let alpha = lr * (target - pk);
        let out_row = &mut model.output[k * dim..(k + 1) * dim];
        for ((g, o), h) in grad.iter_mut().zip(out_row.iter_mut()).zip(&hidden) {
            *g += alpha * *o;
            *o += alpha * h;
        }
    }
    let scale = 1.0 / rows.len() as f64;
    for &r in rows {
        for (w, g) in model.input_row_mut(r).iter_mut().zip(grad.iter()) {
            *w += g * scale;
        }
    }
    -p[label.index()].max(f64::MIN_POSITIVE).ln()
}

/// Analytic loss gradient for one example.
///
/// `values` is laid out as the full output matrix (class-major, `3 * dim`)
/// followed by one `dim`-block per entry of `rows`, the distinct input rows
/// the example touches in first-appearance order.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
}

impl Gradient {
    pub fn dim(&self) -> usize {
        self.values.len() / (N_CLASSES + self.rows.len())
    }

    pub fn output_part(&self) -> &[f64] {
        &self.values[..N_CLASSES * self.dim()]
    }

    /// Gradient block of the `i`-th entry of `rows`.
    pub fn row_part(&self, i: usize) -> &[f64] {
        let dim = self.dim();
        let start = (N_CLASSES + i) * dim;
        &self.values[start..start + dim]
    }
}

/// Softmax cross-entropy `-ln p(label)` and its gradient.
pub fn loss_and_gradient(
    model: &Model,
    tokens: &[String],
    label: Label,
) -> Result<(f64, Gradient), BowError> {
    let features = model.features(tokens);
    if features.is_empty() {
        return Err(BowError::NoKnownToken);
    }
    let dim = model.dim();
    let hidden = model.hidden(&features);
    let logits = model.logits(&hidden);
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + logits.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
    let loss = lse - logits[label.index()];
    let p = softmax(&logits);

    let mut values = vec![0.0; N_CLASSES * dim];
    let mut d_hidden = vec![0.0; dim];
    for k in 0..N_CLASSES {
        let delta = p[k] - if k == label.index() { 1.0 } else { 0.0 };
        let out_row = &model.output[k * dim..(k + 1) * dim];
        for j in 0..dim {
            values[k * dim + j] = delta * hidden[j];
            d_hidden[j] += delta * out_row[j];
        }
    }

    let mut multiplicity: HashMap<usize, usize> = HashMap::new();
    let mut rows = Vec::new();
    for &r in &features {
        let m = multiplicity.entry(r).or_insert(0);
        if *m == 0 {
            rows.push(r);
        }
        *m += 1;
    }
    let n = features.len() as f64;
    for &r in &rows {
        let share = multiplicity[&r] as f64 / n;
        values.extend(d_hidden.iter().map(|g| g * share));
    }
    Ok((loss, Gradient { rows, values }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::label::Label::*;

    fn toks(s: &str) -> Vec<String> {
        text::preprocess(s)
    }

    fn separable(n: usize) -> Vec<(Vec<String>, Label)> {
        (0..n)
            .map(|i| {
                if i % 2 == 0 {
                    (toks(&format!("good great nice w{}", i % 7)), Positive)
                } else {
                    (toks(&format!("bad awful poor z{}", i % 5)), Negative)
                }
            })
            .collect()
    }

    fn quick() -> ClassifierConfig {
        ClassifierConfig {
            epochs: 50,
            lr0: 0.2,
            seed: 11,
            ..Default::default()
        }
    }

    #[test]
    fn separable_training_accuracy() {
        let data = separable(100);
        let (model, report) = train(&data, &quick()).unwrap();
        assert_eq!(report.examples_used, 100);
        assert_eq!(report.updates, 5000);
        for (tokens, label) in &data {
            assert_eq!(model.predict_tokens(tokens).argmax(), *label);
        }
        assert!(model.is_finite());
    }

    #[test]
    fn training_is_deterministic() {
        let data = separable(40);
        let (a, _) = train(&data, &quick()).unwrap();
        let (b, _) = train(&data, &quick()).unwrap();
        assert_eq!(a.word_matrix(), b.word_matrix());
        assert_eq!(a.output_matrix(), b.output_matrix());
        let (c, _) = train(&data, &ClassifierConfig { seed: 12, ..quick() }).unwrap();
        assert_ne!(a.output_matrix(), c.output_matrix());
    }

    #[test]
    fn single_class_rejected() {
        let data = vec![(toks("a b c"), Neutral), (toks("d e f"), Neutral)];
        assert!(matches!(train(&data, &quick()), Err(BowError::SingleClass)));
    }

    #[test]
    fn empty_rejected_and_empty_examples_skipped() {
        assert!(matches!(train(&[], &quick()), Err(BowError::EmptyTrainingSet)));
        let mut data = separable(10);
        data.push((vec![], Neutral));
        let (_, report) = train(&data, &quick()).unwrap();
        assert_eq!(report.skipped_empty, 1);
    }

    #[test]
    fn min_token_count_prunes_vocab() {
        let data = vec![(toks("a a b"), Positive), (toks("a c"), Negative)];
        let cfg = ClassifierConfig {
            min_token_count: 2,
            ..quick()
        };
        let (model, _) = train(&data, &cfg).unwrap();
        assert_eq!(model.words(), ["a"]);
    }

    #[test]
    fn uniform_model_loss_is_ln3() {
        let m = Model::new(vec!["a".into(), "b".into()], ClassifierConfig::default());
        let (loss, g) = loss_and_gradient(&m, &toks("a b"), Positive).unwrap();
        assert!((loss - 3f64.ln()).abs() < 1e-15);
        // zero output layer gives zero input gradient
        assert!(g.values[3 * m.dim()..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn saturated_model_has_zero_loss_and_gradient() {
        let mut m = Model::new(vec!["a".into()], ClassifierConfig { dim: 2, ..Default::default() });
        m.input_row_mut(0).copy_from_slice(&[1.0, 0.0]);
        m.output_matrix_mut()
            .copy_from_slice(&[0.0, 0.0, 0.0, 0.0, 1000.0, 0.0]);
        let (loss, g) = loss_and_gradient(&m, &toks("a"), Positive).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.values.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn no_known_token_is_error() {
        let m = Model::new(vec!["a".into()], ClassifierConfig::default());
        assert!(matches!(
            loss_and_gradient(&m, &toks("zzz"), Positive),
            Err(BowError::NoKnownToken)
        ));
    }

    #[test]
    fn gradient_layout_follows_first_appearance() {
        let m = Model::new(
            vec!["a".into(), "b".into(), "c".into()],
            ClassifierConfig { dim: 2, ..Default::default() },
        );
        let (_, g) = loss_and_gradient(&m, &toks("c a c"), Neutral).unwrap();
        assert_eq!(g.rows, vec![2, 0]);
        assert_eq!(g.values.len(), 3 * 2 + 2 * 2);
    }

    #[test]
    fn repeated_token_shifts_prediction() {
        let (m, _) = train(&separable(60), &quick()).unwrap();
        let a = m.predict("good bad");
        let b = m.predict("good good bad");
        assert_ne!(a, b);
        assert!(b.p(Positive) > a.p(Positive));
    }
}
