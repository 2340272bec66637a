//! Classification scores, relative change, bootstrap intervals and
//! inter-annotator agreement.
//!
//! Undefined precision, recall or F1 (zero denominator) is reported as 0.
//! This matters most for a rare class that a model stops predicting.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::label::Label;
use crate::seed;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("gold and prediction lengths differ ({golds} vs {preds})")]
    LengthMismatch { golds: usize, preds: usize },
    #[error("nothing to score")]
    Empty,
    #[error("relative change undefined for base score {0}")]
    ZeroBase(f64),
    #[error("bootstrap needs at least 2 values, got {0}")]
    TooFewValues(usize),
    #[error("invalid bootstrap parameters: {0}")]
    InvalidBootstrap(String),
    #[error("item {item} has {found} ratings, expected {expected}")]
    RaggedRaters {
        item: usize,
        found: u32,
        expected: u32,
    },
    #[error("agreement needs at least 2 raters per item")]
    TooFewRaters,
}

/// Rows are gold classes, columns predicted classes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix(pub [[u64; 3]; 3]);

impl ConfusionMatrix {
    pub fn from_labels(golds: &[Label], preds: &[Label]) -> Result<Self, MetricsError> {
        if golds.len() != preds.len() {
            return Err(MetricsError::LengthMismatch {
                golds: golds.len(),
                preds: preds.len(),
            });
        }
        let mut m = [[0u64; 3]; 3];
        for (g, p) in golds.iter().zip(preds) {
            m[g.index()][p.index()] += 1;
        }
        Ok(ConfusionMatrix(m))
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn true_positives(&self, c: Label) -> u64 {
        self.0[c.index()][c.index()]
    }

    pub fn false_positives(&self, c: Label) -> u64 {
        (0..3).map(|g| self.0[g][c.index()]).sum::<u64>() - self.true_positives(c)
    }

    pub fn false_negatives(&self, c: Label) -> u64 {
        self.0[c.index()].iter().sum::<u64>() - self.true_positives(c)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    /// Indexed by [`Label::index`].
    pub per_class: [ClassScores; 3],
    pub f1_macro: f64,
}

impl EvalResult {
    pub fn class(&self, c: Label) -> &ClassScores {
        &self.per_class[c.index()]
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn score_confusion(cm: &ConfusionMatrix) -> EvalResult {
    let per_class = Label::ALL.map(|c| {
        let tp = cm.true_positives(c);
        let fp = cm.false_positives(c);
        let fn_ = cm.false_negatives(c);
        ClassScores {
            precision: ratio(tp, tp + fp),
            recall: ratio(tp, tp + fn_),
            // equals 2PR/(P+R), and 0 when TP = 0
            f1: ratio(2 * tp, 2 * tp + fp + fn_),
        }
    });
    let f1_macro = (per_class[0].f1 + per_class[1].f1 + per_class[2].f1) / 3.0;
    EvalResult {
        per_class,
        f1_macro,
    }
}

pub fn score(golds: &[Label], preds: &[Label]) -> Result<EvalResult, MetricsError> {
    let cm = ConfusionMatrix::from_labels(golds, preds)?;
    if cm.total() == 0 {
        return Err(MetricsError::Empty);
    }
    Ok(score_confusion(&cm))
}

/// `(score - base) / base` for every point of a series.
pub fn relative_change<T: Clone>(
    series: &[(T, f64)],
    base: f64,
) -> Result<Vec<(T, f64)>, MetricsError> {
    if base <= 0.0 || !base.is_finite() {
        return Err(MetricsError::ZeroBase(base));
    }
    Ok(series
        .iter()
        .map(|(t, s)| (t.clone(), (s - base) / base))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalEstimate {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl IntervalEstimate {
    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }

    pub fn half_width(&self) -> f64 {
        (self.upper - self.lower) / 2.0
    }
}

pub const DEFAULT_DRAWS: usize = 1000;
pub const DEFAULT_LEVEL: f64 = 0.95;

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (h - lo as f64)
}

/// Percentile bootstrap interval for the mean.
///
/// Resamples `values` with replacement `draws` times; the bounds are the
/// `(1-level)/2` and `1-(1-level)/2` quantiles of the resampled means. The
/// bounds are clamped so that `min <= lower <= mean <= upper <= max`.
pub fn bootstrap_ci(
    values: &[f64],
    level: f64,
    draws: usize,
    seed: u64,
) -> Result<IntervalEstimate, MetricsError> {
    if values.len() < 2 {
        return Err(MetricsError::TooFewValues(values.len()));
    }
    if !(level > 0.0 && level < 1.0) || draws == 0 {
        return Err(MetricsError::InvalidBootstrap(format!(
            "level {level}, draws {draws}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(MetricsError::InvalidBootstrap("non-finite value".into()));
    }
    let lo_v = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi_v = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let m = mean(values).clamp(lo_v, hi_v);
    if lo_v == hi_v {
        return Ok(IntervalEstimate {
            mean: lo_v,
            lower: lo_v,
            upper: lo_v,
            level,
        });
    }

    let n = values.len();
    let mut rng = seed::rng(seed);
    let mut means: Vec<f64> = (0..draws)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    let lower = quantile_sorted(&means, alpha).clamp(lo_v, m);
    let upper = quantile_sorted(&means, 1.0 - alpha).clamp(m, hi_v);
    Ok(IntervalEstimate {
        mean: m,
        lower,
        upper,
        level,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgreementReport {
    pub kappa: f64,
    pub observed_agreement: f64,
    pub expected_agreement: f64,
    pub n_items: usize,
    pub n_raters: u32,
}

/// Fleiss' kappa over an items x categories count table with a constant
/// number of raters per item.
///
/// When all ratings fall into one category the expected agreement is 1 and
/// kappa is reported as 1.
pub fn fleiss_kappa<T: AsRef<[u32]>>(table: &[T]) -> Result<AgreementReport, MetricsError> {
    let first = table.first().ok_or(MetricsError::Empty)?;
    let n: u32 = first.as_ref().iter().sum();
    if n < 2 {
        return Err(MetricsError::TooFewRaters);
    }
    let k = first.as_ref().len();
    let mut category_totals = vec![0u64; k];
    let mut p_sum = 0.0;
    for (i, row) in table.iter().enumerate() {
        let row = row.as_ref();
        let found: u32 = row.iter().sum();
        if found != n || row.len() != k {
            return Err(MetricsError::RaggedRaters {
                item: i,
                found,
                expected: n,
            });
        }
        let sq: u64 = row.iter().map(|&c| u64::from(c) * u64::from(c)).sum();
        p_sum += (sq - u64::from(n)) as f64 / (f64::from(n) * f64::from(n - 1));
        for (t, &c) in category_totals.iter_mut().zip(row) {
            *t += u64::from(c);
        }
    }
    let n_items = table.len();
    let total_ratings = (n_items as u64 * u64::from(n)) as f64;
    let p_bar = p_sum / n_items as f64;
    let p_e: f64 = category_totals
        .iter()
        .map(|&t| (t as f64 / total_ratings).powi(2))
        .sum();
    let kappa = if p_e >= 1.0 {
        1.0
    } else {
        (p_bar - p_e) / (1.0 - p_e)
    };
    Ok(AgreementReport {
        kappa,
        observed_agreement: p_bar,
        expected_agreement: p_e,
        n_items,
        n_raters: n,
    })
}
