//! Fixed-length time bins, sliding training windows and per-repeat
//! train/eval splits.

use std::io::Write;

use chrono::{Duration, TimeZone, Utc};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::ingest::LabeledExample;
use crate::seed::{self, STREAM_SPLIT};
use crate::timefmt::{self, Timestamp};

const SECS_PER_DAY: i64 = 86_400;

#[derive(Debug, thiserror::Error)]
pub enum TimelineError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("corpus spans less than one full {bin_days}-day bin")]
    NoCompleteBin { bin_days: u32 },
    #[error("origin {origin} is after the earliest example {earliest}")]
    OriginAfterData { origin: String, earliest: String },
    #[error("bin {bin} holds {size} examples but {needed} are required (enable downsample to split proportionally)")]
    UndersizedBin {
        bin: usize,
        size: usize,
        needed: usize,
    },
    #[error("{bins} bins available but windows need {window_bins}")]
    TooFewBins { bins: usize, window_bins: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("plan file: {0}")]
    PlanFormat(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn default_bin_days() -> u32 {
    90
}
fn default_window_bins() -> usize {
    4
}
fn default_n_train() -> usize {
    400
}
fn default_n_eval() -> usize {
    150
}
fn default_repeats() -> usize {
    50
}

/// Temporal slicing and resampling schedule for one experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentPlan {
    #[serde(default = "default_bin_days")]
    pub bin_days: u32,
    #[serde(default = "default_window_bins")]
    pub window_bins: usize,
    #[serde(default = "default_n_train")]
    pub n_train_per_bin: usize,
    #[serde(default = "default_n_eval")]
    pub n_eval_per_bin: usize,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default)]
    pub master_seed: u64,
    /// Start of bin 0. `None` means midnight UTC of the earliest example.
    #[serde(default, with = "timefmt::option", skip_serializing_if = "Option::is_none")]
    pub origin: Option<Timestamp>,
    /// Split undersized bins proportionally instead of failing.
    #[serde(default)]
    pub downsample: bool,
    /// Train examples drawn from each window position, oldest bin first.
    /// Defaults to `n_train_per_bin` for every position; each entry must not
    /// exceed `n_train_per_bin`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_train_counts: Option<Vec<usize>>,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            bin_days: default_bin_days(),
            window_bins: default_window_bins(),
            n_train_per_bin: default_n_train(),
            n_eval_per_bin: default_n_eval(),
            repeats: default_repeats(),
            master_seed: 0,
            origin: None,
            downsample: false,
            window_train_counts: None,
        }
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<(), TimelineError> {
        let bad = |m: &str| Err(TimelineError::InvalidPlan(m.to_string()));
        if self.bin_days == 0 {
            return bad("bin_days must be positive");
        }
        if self.window_bins == 0 {
            return bad("window_bins must be positive");
        }
        if self.n_train_per_bin == 0 || self.n_eval_per_bin == 0 {
            return bad("per-bin sample counts must be positive");
        }
        if self.repeats == 0 {
            return bad("repeats must be at least 1");
        }
        if let Some(counts) = &self.window_train_counts {
            if counts.len() != self.window_bins {
                return bad("window_train_counts must have one entry per window bin");
            }
            if counts.iter().any(|&c| c == 0 || c > self.n_train_per_bin) {
                return bad("window_train_counts entries must be in 1..=n_train_per_bin");
            }
        }
        Ok(())
    }

    /// Train examples taken from each window position, oldest first.
    pub fn train_counts(&self) -> Vec<usize> {
        self.window_train_counts
            .clone()
            .unwrap_or_else(|| vec![self.n_train_per_bin; self.window_bins])
    }

    pub fn bin_length(&self) -> Duration {
        Duration::days(i64::from(self.bin_days))
    }

    pub fn from_toml_str(s: &str) -> Result<Self, TimelineError> {
        let plan: ExperimentPlan =
            toml::from_str(s).map_err(|e| TimelineError::PlanFormat(e.to_string()))?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }
}

/// A contiguous `[start, end)` slice of the corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeBin {
    pub index: usize,
    pub start: Timestamp,
    pub end: Timestamp,
    /// Positions of the member examples in the corpus slice the bins were
    /// built from, in corpus order.
    pub members: Vec<usize>,
}

impl TimeBin {
    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WindowSpec {
    pub window_id: usize,
    pub bin_indices: Vec<usize>,
    pub train_end: Timestamp,
}

impl WindowSpec {
    pub fn last_bin(&self) -> usize {
        *self.bin_indices.last().expect("windows are non-empty")
    }
}

/// One repeat's disjoint train/eval draw from one bin. Ids are corpus
/// positions, as in [`TimeBin::members`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitSample {
    pub repeat_index: usize,
    pub bin_index: usize,
    pub train: Vec<usize>,
    pub eval: Vec<usize>,
}

/// Midnight UTC of the day containing `t`.
pub fn midnight_of(t: Timestamp) -> Timestamp {
    let secs = t.timestamp();
    Utc.timestamp_opt(secs - secs.rem_euclid(SECS_PER_DAY), 0)
        .unwrap()
}

/// Assigns every example to its half-open bin; a trailing partial bin is
/// dropped along with its examples.
pub fn build_bins(
    corpus: &[LabeledExample],
    plan: &ExperimentPlan,
) -> Result<Vec<TimeBin>, TimelineError> {
    plan.validate()?;
    let earliest = corpus
        .iter()
        .map(|e| e.created_at)
        .min()
        .ok_or(TimelineError::EmptyCorpus)?;
    let latest = corpus.iter().map(|e| e.created_at).max().unwrap();
    let origin = plan.origin.unwrap_or_else(|| midnight_of(earliest));
    if origin > earliest {
        return Err(TimelineError::OriginAfterData {
            origin: timefmt::format(&origin),
            earliest: timefmt::format(&earliest),
        });
    }

    let bin_secs = i64::from(plan.bin_days) * SECS_PER_DAY;
    let n_bins = ((latest - origin).num_seconds() / bin_secs) as usize;
    if n_bins == 0 {
        return Err(TimelineError::NoCompleteBin {
            bin_days: plan.bin_days,
        });
    }

    let mut bins: Vec<TimeBin> = (0..n_bins)
        .map(|k| {
            let start = origin + Duration::seconds(bin_secs * k as i64);
            TimeBin {
                index: k,
                start,
                end: start + Duration::seconds(bin_secs),
                members: Vec::new(),
            }
        })
        .collect();
    for (pos, ex) in corpus.iter().enumerate() {
        let k = ((ex.created_at - origin).num_seconds() / bin_secs) as usize;
        if let Some(bin) = bins.get_mut(k) {
            bin.members.push(pos);
        }
    }
    Ok(bins)
}

/// Draws the train/eval split of `bin` for `repeat_index`.
///
/// The draw is a seeded shuffle of the bin's members: the first
/// `n_eval_per_bin` become eval, the next `n_train_per_bin` become train.
/// Smaller window train counts take a prefix of `train`, so nested sample
/// sizes share examples.
pub fn sample_splits(
    bin: &TimeBin,
    plan: &ExperimentPlan,
    repeat_index: usize,
) -> Result<SplitSample, TimelineError> {
    let needed = plan.n_train_per_bin + plan.n_eval_per_bin;
    let size = bin.len();
    let (n_train, n_eval) = if size >= needed {
        (plan.n_train_per_bin, plan.n_eval_per_bin)
    } else if plan.downsample {
        let n_train = size * plan.n_train_per_bin / needed;
        log::warn!(
            "bin {} has {size} examples (< {needed}); splitting {n_train} train / {} eval",
            bin.index,
            size - n_train
        );
        (n_train, size - n_train)
    } else {
        return Err(TimelineError::UndersizedBin {
            bin: bin.index,
            size,
            needed,
        });
    };

    let mut rng = seed::rng(seed::mix(
        plan.master_seed,
        &[STREAM_SPLIT, repeat_index as u64, bin.index as u64],
    ));
    let mut pool = bin.members.clone();
    let (drawn, _) = pool.partial_shuffle(&mut rng, n_eval + n_train);
    let eval = drawn[..n_eval].to_vec();
    let train = drawn[n_eval..].to_vec();
    Ok(SplitSample {
        repeat_index,
        bin_index: bin.index,
        train,
        eval,
    })
}

/// One window per bin `w >= window_bins - 1`, covering the `window_bins`
/// bins ending at `w`.
pub fn build_windows(
    bins: &[TimeBin],
    plan: &ExperimentPlan,
) -> Result<Vec<WindowSpec>, TimelineError> {
    if bins.len() < plan.window_bins || plan.window_bins == 0 {
        return Err(TimelineError::TooFewBins {
            bins: bins.len(),
            window_bins: plan.window_bins,
        });
    }
    Ok((plan.window_bins - 1..bins.len())
        .enumerate()
        .map(|(window_id, last)| WindowSpec {
            window_id,
            bin_indices: (last + 1 - plan.window_bins..=last).collect(),
            train_end: bins[last].end,
        })
        .collect())
}

/// Every repeat's splits, indexed `[repeat][bin]`.
pub fn expand_splits(
    bins: &[TimeBin],
    plan: &ExperimentPlan,
) -> Result<Vec<Vec<SplitSample>>, TimelineError> {
    (0..plan.repeats)
        .map(|r| bins.iter().map(|b| sample_splits(b, plan, r)).collect())
        .collect()
}

/// CSV manifest of bins: `bin,start,end,n_examples`.
pub fn write_bin_manifest<W: Write>(w: W, bins: &[TimeBin]) -> Result<(), TimelineError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["bin", "start", "end", "n_examples"])?;
    for b in bins {
        wtr.write_record([
            b.index.to_string(),
            timefmt::format(&b.start),
            timefmt::format(&b.end),
            b.len().to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// CSV manifest of splits: `repeat,bin,item_id,role`.
pub fn write_split_manifest<W: Write>(
    w: W,
    corpus: &[LabeledExample],
    splits: &[Vec<SplitSample>],
) -> Result<(), TimelineError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["repeat", "bin", "item_id", "role"])?;
    for s in splits.iter().flatten() {
        for (ids, role) in [(&s.train, "train"), (&s.eval, "eval")] {
            for &id in ids {
                wtr.write_record([
                    s.repeat_index.to_string(),
                    s.bin_index.to_string(),
                    corpus[id].item_id.clone(),
                    role.to_string(),
                ])?;
            }
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
