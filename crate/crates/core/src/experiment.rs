//! The sliding-window drift protocol.
//!
//! For every repeat `r` and window `w`, one model is trained on the pooled
//! train splits of `w`'s bins and scored on the eval split of `w`'s last bin
//! (the training-time cell) and of every later bin. Scores are summarized
//! per (window, eval bin) with percentile-bootstrap intervals over repeats,
//! both as raw F1 and as change relative to the same repeat's training-time
//! score.
//!
//! Seeds: the split of bin `b` in repeat `r` comes from
//! `mix(master_seed, [STREAM_SPLIT, r, b])` (see [`crate::timeline`]); the
//! model of cell (r, w) is trained with `mix(master_seed, [STREAM_TRAIN, r, w])`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adapter::{self, AdapterError, ExternalModelSpec};
use crate::bow::{self, BowError, ClassifierConfig, Model};
use crate::ingest::LabeledExample;
use crate::label::Label;
use crate::metrics::{self, EvalResult, IntervalEstimate, MetricsError};
use crate::seed::{self, fnv1a64, STREAM_BOOTSTRAP, STREAM_TRAIN};
use crate::timefmt::{self, Timestamp};
use crate::timeline::{self, ExperimentPlan, TimeBin, TimelineError, WindowSpec};

#[derive(Debug, thiserror::Error)]
pub enum CellError {
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error(transparent)]
    Classifier(#[from] BowError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
}

#[derive(Debug, thiserror::Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Timeline(#[from] TimelineError),
    #[error("window {window_id}, repeat {repeat_index}: {source}")]
    Cell {
        window_id: usize,
        repeat_index: usize,
        source: CellError,
    },
    #[error("invalid ablation: {0}")]
    InvalidAblation(String),
    #[error(transparent)]
    Classifier(#[from] BowError),
    #[error(transparent)]
    Adapter(#[from] AdapterError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum ClassifierChoice {
    BuiltIn(ClassifierConfig),
    External(ExternalModelSpec),
}

impl ClassifierChoice {
    pub fn tag(&self) -> String {
        match self {
            ClassifierChoice::BuiltIn(_) => "bow".to_string(),
            ClassifierChoice::External(spec) => spec.tag.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOptions {
    /// Worker threads; 0 means all available cores.
    pub jobs: usize,
    /// Completed (window, repeat) units are persisted here and reused.
    pub checkpoint_dir: Option<PathBuf>,
    pub bootstrap_draws: usize,
    pub level: f64,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            jobs: 0,
            checkpoint_dir: None,
            bootstrap_draws: metrics::DEFAULT_DRAWS,
            level: metrics::DEFAULT_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub window_id: usize,
    pub eval_bin: usize,
    pub repeat_index: usize,
    pub eval_result: EvalResult,
    pub is_training_time: bool,
}

/// Which score a summary describes: macro F1 or one class's F1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    Macro,
    Class(Label),
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 4] = [
        ScoreKind::Macro,
        ScoreKind::Class(Label::Negative),
        ScoreKind::Class(Label::Neutral),
        ScoreKind::Class(Label::Positive),
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Macro => "macro",
            ScoreKind::Class(l) => l.as_str(),
        }
    }

    pub fn f1(self, r: &EvalResult) -> f64 {
        match self {
            ScoreKind::Macro => r.f1_macro,
            ScoreKind::Class(l) => r.class(l).f1,
        }
    }

    fn code(self) -> u64 {
        match self {
            ScoreKind::Macro => 0,
            ScoreKind::Class(l) => 1 + l.index() as u64,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellSummary {
    pub window_id: usize,
    pub eval_bin: usize,
    pub is_training_time: bool,
    pub kind: ScoreKind,
    pub f1: IntervalEstimate,
    pub n_repeats: usize,
    /// Relative to each repeat's training-time score. `None` when fewer
    /// than one repeat has a positive training-time score.
    pub relative_change: Option<IntervalEstimate>,
    pub n_relative: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftResults {
    pub classifier_tag: String,
    pub plan: ExperimentPlan,
    pub bins: Vec<TimeBin>,
    pub windows: Vec<WindowSpec>,
    /// Sorted by (window, eval bin, repeat).
    pub cells: Vec<CellResult>,
    /// Sorted by (window, eval bin, kind).
    pub summaries: Vec<CellSummary>,
    /// Units whose training set held a single class; they predict that class.
    pub degenerate_units: usize,
}

impl DriftResults {
    pub fn summary(&self, window_id: usize, eval_bin: usize, kind: ScoreKind) -> Option<&CellSummary> {
        self.summaries
            .iter()
            .find(|s| s.window_id == window_id && s.eval_bin == eval_bin && s.kind == kind)
    }

    pub fn cell(&self, window_id: usize, eval_bin: usize, repeat: usize) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.window_id == window_id && c.eval_bin == eval_bin && c.repeat_index == repeat
        })
    }
}

/// Everything needed to train one cell's model.
struct UnitData {
    train: Vec<(usize, Label)>,
    /// (eval bin, corpus positions)
    evals: Vec<(usize, Vec<usize>)>,
}

fn unit_data(
    corpus: &[LabeledExample],
    bins: &[TimeBin],
    plan: &ExperimentPlan,
    window: &WindowSpec,
    repeat: usize,
) -> Result<UnitData, TimelineError> {
    let counts = plan.train_counts();
    let mut train = Vec::new();
    for (&b, &count) in window.bin_indices.iter().zip(&counts) {
        let split = timeline::sample_splits(&bins[b], plan, repeat)?;
        let take = count.min(split.train.len());
        train.extend(split.train[..take].iter().map(|&i| (i, corpus[i].label)));
    }
    let evals = (window.last_bin()..bins.len())
        .map(|b| Ok((b, timeline::sample_splits(&bins[b], plan, repeat)?.eval)))
        .collect::<Result<_, TimelineError>>()?;
    Ok(UnitData { train, evals })
}

/// Trained predictor for one cell.
enum Predictor {
    BuiltIn(Model),
    External(ExternalModelSpec, adapter::ModelHandle),
    Constant(Label),
}

impl Predictor {
    fn predict(&self, texts: &[&str]) -> Result<Vec<Label>, CellError> {
        Ok(match self {
            Predictor::BuiltIn(m) => texts.iter().map(|t| m.predict_label(t)).collect(),
            Predictor::External(spec, handle) => adapter::predict_external(spec, handle, texts)?
                .iter()
                .map(|p| p.argmax())
                .collect(),
            Predictor::Constant(l) => vec![*l; texts.len()],
        })
    }
}

pub fn train_seed(master_seed: u64, repeat: usize, window_id: usize) -> u64 {
    seed::mix(master_seed, &[STREAM_TRAIN, repeat as u64, window_id as u64])
}

fn fit(
    corpus: &[LabeledExample],
    train: &[(usize, Label)],
    classifier: &ClassifierChoice,
    seed: u64,
    window_id: usize,
    repeat: usize,
) -> Result<Predictor, CellError> {
    let mut present: Vec<Label> = train.iter().map(|(_, l)| *l).collect();
    present.sort();
    present.dedup();
    if present.len() == 1 {
        return Ok(Predictor::Constant(present[0]));
    }
    Ok(match classifier {
        ClassifierChoice::BuiltIn(cfg) => {
            let cfg = ClassifierConfig {
                seed,
                ..cfg.clone()
            };
            let data: Vec<(&str, Label)> = train
                .iter()
                .map(|&(i, l)| (corpus[i].text.as_str(), l))
                .collect();
            match bow::train_texts(&data, &cfg) {
                Ok((model, _)) => Predictor::BuiltIn(model),
                // everything left after dropping featureless examples is one class
                Err(BowError::SingleClass) => Predictor::Constant(majority(train)),
                Err(e) => return Err(e.into()),
            }
        }
        ClassifierChoice::External(spec) => {
            let spec = spec.for_cell(window_id, repeat);
            let data: Vec<(&str, Label)> = train
                .iter()
                .map(|&(i, l)| (corpus[i].text.as_str(), l))
                .collect();
            let handle = adapter::train_external(&spec, &data, seed)?;
            Predictor::External(spec, handle)
        }
    })
}

fn majority(train: &[(usize, Label)]) -> Label {
    let mut counts = [0usize; 3];
    for (_, l) in train {
        counts[l.index()] += 1;
    }
    let best = counts.iter().max().copied().unwrap_or(0);
    Label::ALL
        .into_iter()
        .filter(|l| counts[l.index()] == best)
        .min_by_key(|l| (*l != Label::Neutral, *l))
        .unwrap_or(Label::Neutral)
}

#[derive(Debug, Serialize, Deserialize)]
struct UnitCheckpoint {
    fingerprint: String,
    window_id: usize,
    repeat_index: usize,
    degenerate: bool,
    cells: Vec<CellResult>,
}

fn fingerprint(plan: &ExperimentPlan, classifier: &ClassifierChoice, corpus: &[LabeledExample]) -> String {
    let mut buf = serde_json::to_vec(&(plan, classifier)).expect("serializable");
    for e in corpus {
        buf.extend(e.item_id.as_bytes());
        buf.push(0);
    }
    format!("{:016x}", fnv1a64(&buf))
}

fn checkpoint_path(dir: &Path, tag: &str, window_id: usize, repeat: usize) -> PathBuf {
    dir.join(format!("{tag}__w{window_id:03}_r{repeat:03}.json"))
}

fn run_unit(
    corpus: &[LabeledExample],
    bins: &[TimeBin],
    plan: &ExperimentPlan,
    classifier: &ClassifierChoice,
    window: &WindowSpec,
    repeat: usize,
) -> Result<(Vec<CellResult>, bool), CellError> {
    let data = unit_data(corpus, bins, plan, window, repeat)?;
    let seed = train_seed(plan.master_seed, repeat, window.window_id);
    let predictor = fit(corpus, &data.train, classifier, seed, window.window_id, repeat)?;
    let degenerate = matches!(predictor, Predictor::Constant(_));

    let texts: Vec<&str> = data
        .evals
        .iter()
        .flat_map(|(_, ids)| ids.iter().map(|&i| corpus[i].text.as_str()))
        .collect();
    let preds = predictor.predict(&texts)?;
    let mut offset = 0;
    let mut cells = Vec::with_capacity(data.evals.len());
    for (b, ids) in &data.evals {
        let golds: Vec<Label> = ids.iter().map(|&i| corpus[i].label).collect();
        let eval_result = metrics::score(&golds, &preds[offset..offset + ids.len()])?;
        offset += ids.len();
        cells.push(CellResult {
            window_id: window.window_id,
            eval_bin: *b,
            repeat_index: repeat,
            eval_result,
            is_training_time: *b == window.last_bin(),
        });
    }
    Ok((cells, degenerate))
}

fn pool(jobs: usize) -> Result<rayon::ThreadPool, ExperimentError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))
}

/// Runs the full protocol.
pub fn run_drift(
    plan: &ExperimentPlan,
    corpus: &[LabeledExample],
    classifier: &ClassifierChoice,
    options: &RunOptions,
) -> Result<DriftResults, ExperimentError> {
    plan.validate()?;
    match classifier {
        ClassifierChoice::BuiltIn(cfg) => cfg.validate()?,
        ClassifierChoice::External(spec) => spec.validate()?,
    }
    let bins = timeline::build_bins(corpus, plan)?;
    let windows = timeline::build_windows(&bins, plan)?;
    // surface undersized bins before any training starts
    for bin in &bins {
        timeline::sample_splits(bin, plan, 0)?;
    }

    let tag = classifier.tag();
    let fp = fingerprint(plan, classifier, corpus);
    if let Some(dir) = &options.checkpoint_dir {
        fs::create_dir_all(dir)?;
    }
    let mut jobs = options.jobs;
    if let ClassifierChoice::External(spec) = classifier {
        let cap = spec.max_concurrent;
        jobs = if jobs == 0 { cap } else { jobs.min(cap) };
    }

    let units: Vec<(usize, usize)> = (0..plan.repeats)
        .flat_map(|r| (0..windows.len()).map(move |w| (r, w)))
        .collect();
    log::info!(
        "{} bins, {} windows, {} repeats: {} training units",
        bins.len(),
        windows.len(),
        plan.repeats,
        units.len()
    );

    let outcomes: Vec<(Vec<CellResult>, bool)> = pool(jobs)?.install(|| {
        units
            .par_iter()
            .map(|&(repeat, w)| {
                let window = &windows[w];
                let ckpt = options
                    .checkpoint_dir
                    .as_ref()
                    .map(|d| checkpoint_path(d, &tag, window.window_id, repeat));
                if let Some(path) = &ckpt {
                    if let Ok(raw) = fs::read(path) {
                        match serde_json::from_slice::<UnitCheckpoint>(&raw) {
                            Ok(c) if c.fingerprint == fp => return Ok((c.cells, c.degenerate)),
                            _ => log::warn!("ignoring stale checkpoint {}", path.display()),
                        }
                    }
                }
                let (cells, degenerate) =
                    run_unit(corpus, &bins, plan, classifier, window, repeat).map_err(|source| {
                        ExperimentError::Cell {
                            window_id: window.window_id,
                            repeat_index: repeat,
                            source,
                        }
                    })?;
                if let Some(path) = &ckpt {
                    let c = UnitCheckpoint {
                        fingerprint: fp.clone(),
                        window_id: window.window_id,
                        repeat_index: repeat,
                        degenerate,
                        cells: cells.clone(),
                    };
                    let tmp = path.with_extension("json.tmp");
                    let write = || -> std::io::Result<()> {
                        fs::write(&tmp, serde_json::to_vec(&c)?)?;
                        fs::rename(&tmp, path)
                    };
                    write().map_err(|e| ExperimentError::Checkpoint {
                        path: path.clone(),
                        reason: e.to_string(),
                    })?;
                }
                Ok((cells, degenerate))
            })
            .collect::<Result<Vec<_>, ExperimentError>>()
    })?;

    let degenerate_units = outcomes.iter().filter(|(_, d)| *d).count();
    if degenerate_units > 0 {
        log::warn!("{degenerate_units} training units saw a single class");
    }
    let mut cells: Vec<CellResult> = outcomes.into_iter().flat_map(|(c, _)| c).collect();
    cells.sort_by_key(|c| (c.window_id, c.eval_bin, c.repeat_index));
    let summaries = summarize(&cells, plan.master_seed, options)?;
    Ok(DriftResults {
        classifier_tag: tag,
        plan: plan.clone(),
        bins,
        windows,
        cells,
        summaries,
        degenerate_units,
    })
}

fn interval(values: &[f64], level: f64, draws: usize, seed: u64) -> Result<IntervalEstimate, MetricsError> {
    if values.len() == 1 {
        return Ok(IntervalEstimate {
            mean: values[0],
            lower: values[0],
            upper: values[0],
            level,
        });
    }
    metrics::bootstrap_ci(values, level, draws, seed)
}

/// Per (window, eval bin, score kind) bootstrap summaries over repeats.
pub fn summarize(
    cells: &[CellResult],
    master_seed: u64,
    options: &RunOptions,
) -> Result<Vec<CellSummary>, MetricsError> {
    let mut grouped: BTreeMap<(usize, usize), BTreeMap<usize, &CellResult>> = BTreeMap::new();
    for c in cells {
        grouped
            .entry((c.window_id, c.eval_bin))
            .or_default()
            .insert(c.repeat_index, c);
    }
    let training: BTreeMap<(usize, usize), &CellResult> = cells
        .iter()
        .filter(|c| c.is_training_time)
        .map(|c| ((c.window_id, c.repeat_index), c))
        .collect();

    let mut out = Vec::new();
    for ((w, b), by_repeat) in &grouped {
        let is_training_time = by_repeat.values().any(|c| c.is_training_time);
        for kind in ScoreKind::ALL {
            let values: Vec<f64> = by_repeat.values().map(|c| kind.f1(&c.eval_result)).collect();
            let mut rel = Vec::new();
            for (r, c) in by_repeat {
                if let Some(base) = training.get(&(*w, *r)) {
                    let base = kind.f1(&base.eval_result);
                    if let Ok(v) = metrics::relative_change(&[((), kind.f1(&c.eval_result))], base) {
                        rel.push(v[0].1);
                    }
                }
            }
            let seed_for = |metric: u64| {
                seed::mix(
                    master_seed,
                    &[STREAM_BOOTSTRAP, *w as u64, *b as u64, kind.code(), metric],
                )
            };
            let f1 = interval(&values, options.level, options.bootstrap_draws, seed_for(0))?;
            let relative_change = if rel.is_empty() {
                None
            } else {
                Some(interval(&rel, options.level, options.bootstrap_draws, seed_for(1))?)
            };
            out.push(CellSummary {
                window_id: *w,
                eval_bin: *b,
                is_training_time,
                kind,
                f1,
                n_repeats: values.len(),
                relative_change,
                n_relative: rel.len(),
            });
        }
    }
    Ok(out)
}

/// Runs the protocol once per total training size; each window bin
/// contributes `size / window_bins` examples.
pub fn run_size_ablation(
    plan: &ExperimentPlan,
    corpus: &[LabeledExample],
    classifier: &ClassifierChoice,
    sizes: &[usize],
    options: &RunOptions,
) -> Result<Vec<(usize, DriftResults)>, ExperimentError> {
    for &size in sizes {
        if size == 0 || size % plan.window_bins != 0 {
            return Err(ExperimentError::InvalidAblation(format!(
                "training size {size} is not a positive multiple of window_bins = {}",
                plan.window_bins
            )));
        }
    }
    sizes
        .iter()
        .map(|&size| {
            let p = ExperimentPlan {
                n_train_per_bin: size / plan.window_bins,
                window_train_counts: None,
                ..plan.clone()
            };
            Ok((size, run_drift(&p, corpus, classifier, options)?))
        })
        .collect()
}

/// Per-position train counts spreading `total` over `window_bins` bins:
/// floor share everywhere, remainder one each to the most recent bins.
pub fn spread_train_counts(total: usize, window_bins: usize) -> Vec<usize> {
    let base = total / window_bins;
    let rem = total % window_bins;
    (0..window_bins)
        .map(|i| base + usize::from(i >= window_bins - rem))
        .collect()
}

/// Runs the protocol once per window length (in days) with a constant total
/// number of training examples per model.
pub fn run_window_ablation(
    plan: &ExperimentPlan,
    corpus: &[LabeledExample],
    classifier: &ClassifierChoice,
    window_days: &[u32],
    total_train: usize,
    options: &RunOptions,
) -> Result<Vec<(u32, DriftResults)>, ExperimentError> {
    for &days in window_days {
        if days == 0 || days % plan.bin_days != 0 {
            return Err(ExperimentError::InvalidAblation(format!(
                "window length {days} is not a positive multiple of bin_days = {}",
                plan.bin_days
            )));
        }
        let wb = (days / plan.bin_days) as usize;
        if total_train < wb {
            return Err(ExperimentError::InvalidAblation(format!(
                "{total_train} training examples cannot cover {wb} bins"
            )));
        }
    }
    window_days
        .iter()
        .map(|&days| {
            let window_bins = (days / plan.bin_days) as usize;
            let counts = spread_train_counts(total_train, window_bins);
            let p = ExperimentPlan {
                window_bins,
                n_train_per_bin: *counts.iter().max().unwrap(),
                window_train_counts: Some(counts),
                ..plan.clone()
            };
            Ok((days, run_drift(&p, corpus, classifier, options)?))
        })
        .collect()
}

/// One built-in model per window, trained on `repeat`'s splits, keyed by
/// the window's training end.
pub fn train_model_timeline(
    plan: &ExperimentPlan,
    corpus: &[LabeledExample],
    config: &ClassifierConfig,
    repeat: usize,
) -> Result<Vec<(Timestamp, Model)>, ExperimentError> {
    let bins = timeline::build_bins(corpus, plan)?;
    let windows = timeline::build_windows(&bins, plan)?;
    windows
        .iter()
        .map(|w| {
            let data = unit_data(corpus, &bins, plan, w, repeat)?;
            let cfg = ClassifierConfig {
                seed: train_seed(plan.master_seed, repeat, w.window_id),
                ..config.clone()
            };
            let texts: Vec<(&str, Label)> = data
                .train
                .iter()
                .map(|&(i, l)| (corpus[i].text.as_str(), l))
                .collect();
            let (model, _) = bow::train_texts(&texts, &cfg)?;
            Ok((w.train_end, model))
        })
        .collect()
}

/// Tidy per-cell scores: `window_id,eval_bin,repeat,class,metric,value`.
pub fn write_scores_csv<W: Write>(w: W, results: &DriftResults) -> Result<(), ExperimentError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["window_id", "eval_bin", "repeat", "class", "metric", "value"])?;
    for c in &results.cells {
        let key = [
            c.window_id.to_string(),
            c.eval_bin.to_string(),
            c.repeat_index.to_string(),
        ];
        for l in Label::ALL {
            let s = c.eval_result.class(l);
            for (metric, v) in [("precision", s.precision), ("recall", s.recall), ("f1", s.f1)] {
                wtr.write_record(key.iter().cloned().chain([
                    l.to_string(),
                    metric.to_string(),
                    v.to_string(),
                ]))?;
            }
        }
        wtr.write_record(key.iter().cloned().chain([
            "macro".to_string(),
            "f1".to_string(),
            c.eval_result.f1_macro.to_string(),
        ]))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Header of the summary CSV consumed by plotting scripts.
pub const SUMMARY_HEADER: [&str; 16] = [
    "classifier",
    "window_id",
    "window_first_bin",
    "window_last_bin",
    "train_end",
    "eval_bin",
    "eval_bin_start",
    "eval_bin_end",
    "is_training_time",
    "class",
    "metric",
    "n_repeats",
    "mean",
    "lower",
    "upper",
    "level",
];

/// Summary rows: one `f1` and (when defined) one `relative_change` row per
/// (window, eval bin, class), class being `macro` or a label.
pub fn write_summary_csv<W: Write>(w: W, results: &DriftResults) -> Result<(), ExperimentError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(SUMMARY_HEADER)?;
    for s in &results.summaries {
        let window = &results.windows[s.window_id];
        let bin = &results.bins[s.eval_bin];
        let prefix = [
            results.classifier_tag.clone(),
            s.window_id.to_string(),
            window.bin_indices[0].to_string(),
            window.last_bin().to_string(),
            timefmt::format(&window.train_end),
            s.eval_bin.to_string(),
            timefmt::format(&bin.start),
            timefmt::format(&bin.end),
            s.is_training_time.to_string(),
            s.kind.name().to_string(),
        ];
        let mut rows = vec![("f1", s.n_repeats, s.f1)];
        if let Some(rel) = s.relative_change {
            rows.push(("relative_change", s.n_relative, rel));
        }
        for (metric, n, ci) in rows {
            wtr.write_record(prefix.iter().cloned().chain([
                metric.to_string(),
                n.to_string(),
                ci.mean.to_string(),
                ci.lower.to_string(),
                ci.upper.to_string(),
                ci.level.to_string(),
            ]))?;
        }
    }
    wtr.flush()?;
    Ok(())
}
