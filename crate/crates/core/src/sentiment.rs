//! Weekly sentiment index and legacy-vs-updated model comparison.
//!
//! The index `s` of a week is the mean of the week's predicted labels
//! mapped to -1 / 0 / +1. Weeks are ISO-8601 weeks in UTC, keyed by their
//! Monday.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bow::{Model, ProbVector};
use crate::label::Label;
use crate::timefmt::{self, Timestamp};

#[derive(Debug, thiserror::Error)]
pub enum SentimentError {
    #[error("model timeline is empty")]
    EmptyTimeline,
    #[error("model timeline is not sorted by train_end")]
    UnsortedTimeline,
    #[error("item at {timestamp} precedes every model's train_end (earliest {earliest})")]
    TooEarly { timestamp: String, earliest: String },
    #[error("line {line_no}: {message}")]
    Parse { line_no: usize, message: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WeekPoint {
    pub week_start: NaiveDate,
    pub s: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct SentimentSeries {
    pub points: Vec<WeekPoint>,
}

impl SentimentSeries {
    /// Mean of `s` over the last `fraction` of the points (at least one).
    pub fn tail_mean(&self, fraction: f64) -> Option<f64> {
        if self.points.is_empty() {
            return None;
        }
        let k = ((self.points.len() as f64 * fraction).ceil() as usize).clamp(1, self.points.len());
        let tail = &self.points[self.points.len() - k..];
        Some(tail.iter().map(|p| p.s).sum::<f64>() / k as f64)
    }

    pub fn final_quarter_mean(&self) -> Option<f64> {
        self.tail_mean(0.25)
    }
}

/// Monday of the ISO week containing `t` (UTC).
pub fn week_start(t: &Timestamp) -> NaiveDate {
    let d = t.date_naive();
    let iso = d.iso_week();
    NaiveDate::from_isoywd_opt(iso.year(), iso.week(), chrono::Weekday::Mon)
        .expect("valid ISO week")
}

pub fn sentiment_index(predictions: &[(Timestamp, Label)]) -> SentimentSeries {
    let mut weeks: BTreeMap<NaiveDate, (i64, usize)> = BTreeMap::new();
    for (t, l) in predictions {
        let e = weeks.entry(week_start(t)).or_default();
        e.0 += l.numeric_value() as i64;
        e.1 += 1;
    }
    SentimentSeries {
        points: weeks
            .into_iter()
            .map(|(week_start, (sum, n))| WeekPoint {
                week_start,
                s: sum as f64 / n as f64,
                n,
            })
            .collect(),
    }
}

/// Anything that maps a text to class probabilities.
pub trait TextClassifier: Sync {
    fn predict_proba(&self, text: &str) -> ProbVector;

    fn predict_class(&self, text: &str) -> Label {
        self.predict_proba(text).argmax()
    }
}

impl TextClassifier for Model {
    fn predict_proba(&self, text: &str) -> ProbVector {
        self.predict(text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StreamItem {
    #[serde(with = "timefmt")]
    pub created_at: Timestamp,
    pub text: String,
}

/// Index into `timeline` of the latest model with `train_end <= t`.
pub fn model_for(timeline: &[Timestamp], t: &Timestamp) -> Option<usize> {
    timeline.partition_point(|end| end <= t).checked_sub(1)
}

/// Scores `stream` with `legacy` everywhere (first series) and with the
/// latest model of `timeline` whose training ended at or before each item
/// (second series).
pub fn compare_legacy_updated<M: TextClassifier>(
    stream: &[StreamItem],
    legacy: &M,
    timeline: &[(Timestamp, M)],
) -> Result<(SentimentSeries, SentimentSeries), SentimentError> {
    if timeline.is_empty() {
        return Err(SentimentError::EmptyTimeline);
    }
    if timeline.windows(2).any(|w| w[0].0 > w[1].0) {
        return Err(SentimentError::UnsortedTimeline);
    }
    let ends: Vec<Timestamp> = timeline.iter().map(|(t, _)| *t).collect();
    let scored: Vec<(Timestamp, Label, Label)> = stream
        .par_iter()
        .map(|item| {
            let k = model_for(&ends, &item.created_at).ok_or_else(|| SentimentError::TooEarly {
                timestamp: timefmt::format(&item.created_at),
                earliest: timefmt::format(&ends[0]),
            })?;
            Ok((
                item.created_at,
                legacy.predict_class(&item.text),
                timeline[k].1.predict_class(&item.text),
            ))
        })
        .collect::<Result<_, SentimentError>>()?;
    let legacy_preds: Vec<_> = scored.iter().map(|(t, l, _)| (*t, *l)).collect();
    let updated_preds: Vec<_> = scored.iter().map(|(t, _, u)| (*t, *u)).collect();
    Ok((sentiment_index(&legacy_preds), sentiment_index(&updated_preds)))
}

/// Reads a JSONL stream of `{"created_at": ..., "text": ...}` objects.
pub fn read_stream<R: BufRead>(r: R) -> Result<Vec<StreamItem>, SentimentError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let item: StreamItem = serde_json::from_str(&line).map_err(|e| SentimentError::Parse {
            line_no: i + 1,
            message: e.to_string(),
        })?;
        out.push(item);
    }
    Ok(out)
}

/// `week_start,s_legacy,n_legacy,s_updated,n_updated`; a week missing from
/// one series leaves that series' cells empty.
pub fn write_comparison_csv<W: Write>(
    w: W,
    legacy: &SentimentSeries,
    updated: &SentimentSeries,
) -> Result<(), SentimentError> {
    let mut rows: BTreeMap<NaiveDate, [Option<WeekPoint>; 2]> = BTreeMap::new();
    for p in &legacy.points {
        rows.entry(p.week_start).or_default()[0] = Some(*p);
    }
    for p in &updated.points {
        rows.entry(p.week_start).or_default()[1] = Some(*p);
    }
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["week_start", "s_legacy", "n_legacy", "s_updated", "n_updated"])?;
    for (week, pair) in rows {
        let mut rec = vec![week.format("%Y-%m-%d").to_string()];
        for p in pair {
            match p {
                Some(p) => {
                    rec.push(p.s.to_string());
                    rec.push(p.n.to_string());
                }
                None => rec.extend([String::new(), String::new()]),
            }
        }
        wtr.write_record(rec)?;
    }
    wtr.flush()?;
    Ok(())
}
