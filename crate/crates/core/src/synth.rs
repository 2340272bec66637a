//! Synthetic annotated corpora with controlled drift.
//!
//! Items are spread uniformly over the scenario span. Each item's true class
//! is drawn from a piecewise-linear prior schedule; its tokens are drawn from
//! the class vocabulary of the current vocabulary epoch. Inside a drift
//! segment the vocabulary is a linear mixture of the neighbouring epochs, so
//! short segments give sudden drift and long ones gradual drift. Every rater
//! votes the true class with probability `1 - annotator_noise` and a
//! uniformly random class otherwise.
//!
//! Generation is chunked; chunk `c` draws from
//! `mix(seed, [STREAM_SYNTH, c])`, so output does not depend on thread count.

use chrono::Duration;
use rand::distr::{weighted::WeightedIndex, Distribution};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ingest::AnnotationRecord;
use crate::label::Label;
use crate::seed::{self, STREAM_SYNTH};
use crate::timefmt::{self, Timestamp};

const CHUNK: usize = 512;

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unknown preset {0:?}; expected one of static, vocabulary-swap, negative-shift")]
    UnknownPreset(String),
    #[error("scenario file: {0}")]
    Format(String),
}

/// Class prior at `day`; between knots the prior is interpolated linearly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorKnot {
    pub day: f64,
    /// (negative, neutral, positive)
    pub probs: [f64; 3],
}

/// A uniform distribution over a token list, either spelled out or
/// generated as `prefix0 .. prefix{count-1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabComponent {
    pub weight: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tokens: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prefix: Option<String>,
    #[serde(default)]
    pub count: usize,
}

impl VocabComponent {
    pub fn generated(weight: f64, prefix: &str, count: usize) -> Self {
        VocabComponent {
            weight,
            tokens: Vec::new(),
            prefix: Some(prefix.to_string()),
            count,
        }
    }

    pub fn expand(&self) -> Vec<String> {
        let mut out = self.tokens.clone();
        if let Some(p) = &self.prefix {
            out.extend((0..self.count).map(|i| format!("{p}{i}")));
        }
        out
    }
}

/// Per-class unigram mixtures for one vocabulary epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VocabEpoch {
    pub negative: Vec<VocabComponent>,
    pub neutral: Vec<VocabComponent>,
    pub positive: Vec<VocabComponent>,
}

impl VocabEpoch {
    fn class(&self, l: Label) -> &[VocabComponent] {
        match l {
            Label::Negative => &self.negative,
            Label::Neutral => &self.neutral,
            Label::Positive => &self.positive,
        }
    }
}

/// Transition from vocabulary epoch `k` to `k + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftSegment {
    pub start_day: f64,
    pub end_day: f64,
}

fn default_raters() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriftScenario {
    pub n_items: usize,
    pub time_span_days: u32,
    #[serde(with = "timefmt")]
    pub start: Timestamp,
    pub annotator_noise: f64,
    #[serde(default = "default_raters")]
    pub raters_per_item: u32,
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub seed: u64,
    pub priors: Vec<PriorKnot>,
    pub vocab_epochs: Vec<VocabEpoch>,
    #[serde(default)]
    pub drift_segments: Vec<DriftSegment>,
}

/// A generated item with its true class.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticItem {
    pub item_id: String,
    pub text: String,
    pub created_at: Timestamp,
    pub true_label: Label,
    pub votes: Vec<Label>,
}

impl SyntheticItem {
    pub fn records(&self) -> impl Iterator<Item = AnnotationRecord> + '_ {
        self.votes.iter().enumerate().map(|(j, v)| AnnotationRecord {
            item_id: self.item_id.clone(),
            text: self.text.clone(),
            created_at: self.created_at,
            annotator_id: format!("rater{j}"),
            vote: *v,
        })
    }

    pub fn vote_counts(&self) -> [u32; 3] {
        let mut c = [0; 3];
        for v in &self.votes {
            c[v.index()] += 1;
        }
        c
    }
}

/// Sampling tables for one class in one epoch.
struct ClassSampler {
    components: WeightedIndex<f64>,
    tokens: Vec<Vec<String>>,
}

impl ClassSampler {
    fn sample<R: Rng>(&self, rng: &mut R) -> &str {
        let c = &self.tokens[self.components.sample(rng)];
        &c[rng.random_range(0..c.len())]
    }
}

impl DriftScenario {
    pub fn from_toml_str(s: &str) -> Result<Self, SynthError> {
        let sc: DriftScenario = toml::from_str(s).map_err(|e| SynthError::Format(e.to_string()))?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    // negated comparisons also reject NaN
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::Invalid(m));
        if self.n_items == 0 {
            return bad("n_items must be positive".into());
        }
        if self.time_span_days == 0 {
            return bad("time_span_days must be positive".into());
        }
        if !(0.0..1.0).contains(&self.annotator_noise) {
            return bad(format!("annotator_noise {} not in [0, 1)", self.annotator_noise));
        }
        if self.raters_per_item == 0 {
            return bad("raters_per_item must be positive".into());
        }
        if self.min_tokens == 0 || self.min_tokens > self.max_tokens {
            return bad("need 0 < min_tokens <= max_tokens".into());
        }
        if self.priors.is_empty() {
            return bad("at least one prior knot is required".into());
        }
        for k in &self.priors {
            if k.probs.iter().any(|p| !p.is_finite() || *p < 0.0)
                || (k.probs.iter().sum::<f64>() - 1.0).abs() > 1e-6
            {
                return bad(format!("prior at day {} is not on the simplex", k.day));
            }
        }
        if self.priors.windows(2).any(|w| w[0].day >= w[1].day) {
            return bad("prior knots must have increasing days".into());
        }
        if self.vocab_epochs.is_empty() {
            return bad("at least one vocabulary epoch is required".into());
        }
        if self.drift_segments.len() + 1 != self.vocab_epochs.len() {
            return bad(format!(
                "{} vocabulary epochs need {} drift segments, got {}",
                self.vocab_epochs.len(),
                self.vocab_epochs.len() - 1,
                self.drift_segments.len()
            ));
        }
        let mut prev_end = f64::NEG_INFINITY;
        for s in &self.drift_segments {
            if !(s.start_day <= s.end_day) || s.start_day < prev_end {
                return bad("drift segments must be ordered and non-overlapping".into());
            }
            prev_end = s.end_day;
        }
        for (e, epoch) in self.vocab_epochs.iter().enumerate() {
            for l in Label::ALL {
                let comps = epoch.class(l);
                let total: f64 = comps.iter().map(|c| c.weight).sum();
                if comps.is_empty() || !(total > 0.0) {
                    return bad(format!("epoch {e}, class {l}: no vocabulary mass"));
                }
                for c in comps {
                    if !(c.weight >= 0.0) || (c.weight > 0.0 && c.expand().is_empty()) {
                        return bad(format!("epoch {e}, class {l}: bad component"));
                    }
                    if c.expand().iter().any(|t| t.is_empty() || t.contains(char::is_whitespace)) {
                        return bad(format!("epoch {e}, class {l}: tokens must be non-empty words"));
                    }
                }
            }
        }
        Ok(())
    }

    /// Class prior at `day`, constant beyond the outer knots.
    pub fn prior_at(&self, day: f64) -> [f64; 3] {
        let k = &self.priors;
        if day <= k[0].day {
            return k[0].probs;
        }
        for w in k.windows(2) {
            if day <= w[1].day {
                let t = (day - w[0].day) / (w[1].day - w[0].day);
                return std::array::from_fn(|i| (1.0 - t) * w[0].probs[i] + t * w[1].probs[i]);
            }
        }
        k[k.len() - 1].probs
    }

    /// `(epoch, next-epoch weight)` at `day`.
    pub fn epoch_at(&self, day: f64) -> (usize, f64) {
        for (k, s) in self.drift_segments.iter().enumerate() {
            if day < s.start_day {
                return (k, 0.0);
            }
            if day < s.end_day {
                return (k, (day - s.start_day) / (s.end_day - s.start_day));
            }
        }
        (self.drift_segments.len(), 0.0)
    }

    /// Expected rate of votes differing from the true class.
    pub fn expected_disagreement(&self) -> f64 {
        self.annotator_noise * 2.0 / 3.0
    }

    fn samplers(&self) -> Vec<[ClassSampler; 3]> {
        self.vocab_epochs
            .iter()
            .map(|epoch| {
                Label::ALL.map(|l| {
                    let comps: Vec<&VocabComponent> =
                        epoch.class(l).iter().filter(|c| c.weight > 0.0).collect();
                    ClassSampler {
                        components: WeightedIndex::new(comps.iter().map(|c| c.weight))
                            .expect("validated weights"),
                        tokens: comps.iter().map(|c| c.expand()).collect(),
                    }
                })
            })
            .collect()
    }

    pub fn generate_items(&self) -> Result<Vec<SyntheticItem>, SynthError> {
        self.validate()?;
        let samplers = self.samplers();
        let span_secs = i64::from(self.time_span_days) * 86_400;
        let width = self.n_items.to_string().len().max(6);
        let n_chunks = self.n_items.div_ceil(CHUNK);
        let chunks: Vec<Vec<SyntheticItem>> = (0..n_chunks)
            .into_par_iter()
            .map(|c| {
                let mut rng = seed::rng(seed::mix(self.seed, &[STREAM_SYNTH, c as u64]));
                let range = c * CHUNK..((c + 1) * CHUNK).min(self.n_items);
                range
                    .map(|i| {
                        let offset = rng.random_range(0..span_secs);
                        let day = offset as f64 / 86_400.0;
                        let prior = self.prior_at(day);
                        let truth = Label::ALL
                            [WeightedIndex::new(prior).expect("simplex").sample(&mut rng)];
                        let (epoch, lambda) = self.epoch_at(day);
                        let n_tokens = rng.random_range(self.min_tokens..=self.max_tokens);
                        let mut tokens = Vec::with_capacity(n_tokens);
                        for _ in 0..n_tokens {
                            let e = if lambda > 0.0 && rng.random::<f64>() < lambda {
                                epoch + 1
                            } else {
                                epoch
                            };
                            tokens.push(samplers[e][truth.index()].sample(&mut rng));
                        }
                        let votes = (0..self.raters_per_item)
                            .map(|_| {
                                if rng.random::<f64>() < self.annotator_noise {
                                    Label::ALL[rng.random_range(0..3)]
                                } else {
                                    truth
                                }
                            })
                            .collect();
                        SyntheticItem {
                            item_id: format!("s{i:0width$}"),
                            text: tokens.join(" "),
                            created_at: self.start + Duration::seconds(offset),
                            true_label: truth,
                            votes,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(chunks.into_iter().flatten().collect())
    }

    /// Vote records in the ingest input format, grouped by item.
    pub fn generate(&self) -> Result<Vec<AnnotationRecord>, SynthError> {
        Ok(self
            .generate_items()?
            .iter()
            .flat_map(|it| it.records().collect::<Vec<_>>())
            .collect())
    }

    pub fn preset(name: &str) -> Result<DriftScenario, SynthError> {
        match name {
            "static" => Ok(presets::stationary()),
            "vocabulary-swap" | "swap" => Ok(presets::vocabulary_swap()),
            "negative-shift" => Ok(presets::negative_shift()),
            other => Err(SynthError::UnknownPreset(other.to_string())),
        }
    }
}

/// Built-in scenarios.
///
/// All three share a 40-word common vocabulary and 15-word class
/// vocabularies; class words carry 70% of the token mass, so a bag-of-words
/// model separates the classes almost perfectly within an epoch. Priors
/// start at (0.18, 0.36, 0.46). Thirteen full 90-day bins of roughly 760
/// items each.
pub mod presets {
    use super::*;

    pub const PAPER_PRIORS: [f64; 3] = [0.18, 0.36, 0.46];
    pub const SPAN_DAYS: u32 = 1188;
    pub const N_ITEMS: usize = 10_000;

    fn start() -> Timestamp {
        timefmt::parse("2018-01-01T00:00:00Z").unwrap()
    }

    fn class(prefix: &str) -> Vec<VocabComponent> {
        vec![
            VocabComponent::generated(0.3, "common", 40),
            VocabComponent::generated(0.7, prefix, 15),
        ]
    }

    fn epoch(neg: &str, neu: &str, pos: &str) -> VocabEpoch {
        VocabEpoch {
            negative: class(neg),
            neutral: class(neu),
            positive: class(pos),
        }
    }

    fn base(seed: u64) -> DriftScenario {
        DriftScenario {
            n_items: N_ITEMS,
            time_span_days: SPAN_DAYS,
            start: start(),
            annotator_noise: 0.02,
            raters_per_item: 3,
            min_tokens: 8,
            max_tokens: 14,
            seed,
            priors: vec![PriorKnot {
                day: 0.0,
                probs: PAPER_PRIORS,
            }],
            vocab_epochs: vec![epoch("gloom", "plain", "cheer")],
            drift_segments: Vec::new(),
        }
    }

    /// No drift at all.
    pub fn stationary() -> DriftScenario {
        base(11)
    }

    /// Negative and positive vocabularies trade places at mid-span.
    pub fn vocabulary_swap() -> DriftScenario {
        let mid = f64::from(SPAN_DAYS) / 2.0;
        DriftScenario {
            vocab_epochs: vec![
                epoch("gloom", "plain", "cheer"),
                epoch("cheer", "plain", "gloom"),
            ],
            drift_segments: vec![DriftSegment {
                start_day: mid,
                end_day: mid,
            }],
            ..base(12)
        }
    }

    /// From day 700, negative items use words never seen before and the
    /// prior moves toward negative.
    pub fn negative_shift() -> DriftScenario {
        DriftScenario {
            priors: vec![
                PriorKnot {
                    day: 700.0,
                    probs: PAPER_PRIORS,
                },
                PriorKnot {
                    day: 900.0,
                    probs: [0.5, 0.3, 0.2],
                },
            ],
            vocab_epochs: vec![
                epoch("gloom", "plain", "cheer"),
                epoch("dread", "plain", "cheer"),
            ],
            drift_segments: vec![DriftSegment {
                start_day: 700.0,
                end_day: 760.0,
            }],
            ..base(13)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest;
    use crate::metrics::fleiss_kappa;

    fn small(noise: f64, n: usize) -> DriftScenario {
        DriftScenario {
            n_items: n,
            annotator_noise: noise,
            ..presets::stationary()
        }
    }

    #[test]
    fn presets_validate_and_round_trip() {
        for name in ["static", "vocabulary-swap", "negative-shift"] {
            let sc = DriftScenario::preset(name).unwrap();
            sc.validate().unwrap();
            assert_eq!(DriftScenario::from_toml_str(&sc.to_toml_string()).unwrap(), sc);
        }
        assert!(DriftScenario::preset("nope").is_err());
    }

    #[test]
    fn deterministic() {
        let sc = small(0.1, 1500);
        assert_eq!(sc.generate_items().unwrap(), sc.generate_items().unwrap());
        let other = DriftScenario { seed: 99, ..sc.clone() };
        assert_ne!(sc.generate_items().unwrap(), other.generate_items().unwrap());
    }

    #[test]
    fn noiseless_raters_recover_truth() {
        let sc = small(0.0, 2000);
        let items = sc.generate_items().unwrap();
        let truth: std::collections::HashMap<_, _> =
            items.iter().map(|i| (i.item_id.clone(), i.true_label)).collect();
        let records: Vec<_> = items.iter().flat_map(|i| i.records().collect::<Vec<_>>()).collect();
        let (resolved, report) = ingest::resolve_labels(&records);
        assert_eq!(resolved.len(), 2000);
        assert_eq!(report.items_low_agreement, 0);
        for ex in &resolved {
            assert_eq!(ex.label, truth[&ex.item_id]);
            assert_eq!(ex.agreement, 1.0);
        }
    }

    #[test]
    fn class_fractions_match_priors() {
        let sc = small(0.0, 10_000);
        let items = sc.generate_items().unwrap();
        let n = items.len() as f64;
        for l in Label::ALL {
            let p = presets::PAPER_PRIORS[l.index()];
            let frac = items.iter().filter(|i| i.true_label == l).count() as f64 / n;
            let se = (p * (1.0 - p) / n).sqrt();
            assert!((frac - p).abs() < 3.0 * se, "{l}: {frac} vs {p}");
        }
    }

    #[test]
    fn disagreement_rate_matches_noise() {
        for noise in [0.1, 0.3] {
            let sc = small(noise, 5000);
            let items = sc.generate_items().unwrap();
            let votes: Vec<_> = items
                .iter()
                .flat_map(|i| i.votes.iter().map(move |v| *v != i.true_label))
                .collect();
            let rate = votes.iter().filter(|d| **d).count() as f64 / votes.len() as f64;
            assert!((rate - sc.expected_disagreement()).abs() < 0.02, "{noise}: {rate}");
        }
    }

    #[test]
    fn kappa_decreases_with_noise() {
        let kappas: Vec<f64> = [0.0, 0.2, 0.4]
            .iter()
            .map(|&e| {
                let items = small(e, 5000).generate_items().unwrap();
                let table: Vec<[u32; 3]> = items.iter().map(|i| i.vote_counts()).collect();
                fleiss_kappa(&table).unwrap().kappa
            })
            .collect();
        assert!((kappas[0] - 1.0).abs() < 1e-12);
        assert!(kappas[0] > kappas[1] && kappas[1] > kappas[2], "{kappas:?}");
    }

    #[test]
    fn items_pass_ingest_filters() {
        let sc = small(0.0, 3000);
        let (kept, _) = ingest::filter_corpus(sc.generate().unwrap());
        // identical texts are possible but must be rare
        assert!(kept.len() >= 3 * 2990);
    }

    #[test]
    fn interpolation() {
        let sc = presets::negative_shift();
        assert_eq!(sc.prior_at(0.0), presets::PAPER_PRIORS);
        assert_eq!(sc.prior_at(2000.0), [0.5, 0.3, 0.2]);
        let mid = sc.prior_at(800.0);
        assert!((mid[0] - (0.18 + 0.5) / 2.0).abs() < 1e-12);
        assert_eq!(sc.epoch_at(100.0), (0, 0.0));
        assert_eq!(sc.epoch_at(730.0), (0, 0.5));
        assert_eq!(sc.epoch_at(760.0), (1, 0.0));

        let swap = presets::vocabulary_swap();
        assert_eq!(swap.epoch_at(593.9), (0, 0.0));
        assert_eq!(swap.epoch_at(594.0), (1, 0.0));
    }

    #[test]
    fn rejects_bad_scenarios() {
        let ok = presets::stationary();
        let cases = [
            DriftScenario { annotator_noise: 1.0, ..ok.clone() },
            DriftScenario { min_tokens: 20, ..ok.clone() },
            DriftScenario {
                priors: vec![PriorKnot { day: 0.0, probs: [0.5, 0.5, 0.5] }],
                ..ok.clone()
            },
            DriftScenario {
                drift_segments: vec![DriftSegment { start_day: 1.0, end_day: 2.0 }],
                ..ok.clone()
            },
        ];
        for c in cases {
            assert!(c.validate().is_err());
        }
    }
}
