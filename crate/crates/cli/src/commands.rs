use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use driftscope_core::adapter::ExternalModelSpec;
use driftscope_core::bow::ClassifierConfig;
use driftscope_core::diagnostics::{self, EmbeddingProvider};
use driftscope_core::experiment::{self, ClassifierChoice, DriftResults, RunOptions};
use driftscope_core::ingest::{self, LabeledExample};
use driftscope_core::sentiment::{self, StreamItem};
use driftscope_core::synth::DriftScenario;
use driftscope_core::timefmt;
use driftscope_core::timeline::{self, ExperimentPlan, TimeBin};
use serde::Serialize;

use crate::args::*;
use crate::manifest::Manifest;
use crate::{Classify, Failure};

type Result<T> = std::result::Result<T, Failure>;

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .invalid(|| format!("cannot open {}", path.display()))
}

fn read_string(path: &Path) -> Result<String> {
    fs::read_to_string(path).invalid(|| format!("cannot read {}", path.display()))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .runtime(|| format!("cannot create {}", path.display()))
}

fn make_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).runtime(|| format!("cannot create {}", path.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => make_dir(p),
        _ => Ok(()),
    }
}

fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

fn load_corpus(path: &Path) -> Result<Vec<LabeledExample>> {
    let corpus = ingest::read_resolved(open(path)?)
        .invalid(|| format!("{} is not a resolved corpus", path.display()))?;
    if corpus.is_empty() {
        return Err(Failure::Invalid(anyhow::anyhow!(
            "{} contains no examples",
            path.display()
        )));
    }
    Ok(corpus)
}

fn resolve_plan(a: &PlanArgs) -> Result<ExperimentPlan> {
    let mut plan = match &a.plan {
        Some(p) => ExperimentPlan::from_toml_str(&read_string(p)?)
            .invalid(|| format!("bad plan file {}", p.display()))?,
        None => ExperimentPlan::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f.clone() { plan.$f = v; } )* };
    }
    set!(bin_days, window_bins, n_train_per_bin, n_eval_per_bin, repeats, master_seed);
    if let Some(o) = &a.origin {
        plan.origin = Some(timefmt::parse(o).invalid(|| format!("bad --origin {o:?}"))?);
    }
    plan.downsample |= a.downsample;
    plan.validate().invalid(|| "invalid experiment plan".into())?;
    Ok(plan)
}

fn resolve_classifier(a: &ClassifierArgs) -> Result<ClassifierConfig> {
    let mut cfg = match &a.classifier_config {
        Some(p) => toml::from_str(&read_string(p)?)
            .invalid(|| format!("bad classifier config {}", p.display()))?,
        None => ClassifierConfig::default(),
    };
    macro_rules! set {
        ($($f:ident),*) => { $( if let Some(v) = a.$f { cfg.$f = v; } )* };
    }
    set!(dim, epochs, lr0, word_ngrams, bucket_count, min_token_count);
    cfg.validate().invalid(|| "invalid classifier config".into())?;
    Ok(cfg)
}

fn resolve_choice(a: &RunArgs) -> Result<ClassifierChoice> {
    match &a.external {
        Some(p) => Ok(ClassifierChoice::External(
            ExternalModelSpec::from_toml_str(&read_string(p)?)
                .invalid(|| format!("bad external model spec {}", p.display()))?,
        )),
        None => Ok(ClassifierChoice::BuiltIn(resolve_classifier(&a.classifier)?)),
    }
}

fn run_options(a: &RunArgs, jobs: usize) -> Result<RunOptions> {
    if a.bootstrap_draws == 0 {
        return Err(Failure::Invalid(anyhow::anyhow!("--bootstrap-draws must be positive")));
    }
    if !(a.level > 0.0 && a.level < 1.0) {
        return Err(Failure::Invalid(anyhow::anyhow!("--level must be in (0, 1)")));
    }
    Ok(RunOptions {
        jobs,
        checkpoint_dir: a.checkpoint_dir.clone(),
        bootstrap_draws: a.bootstrap_draws,
        level: a.level,
    })
}

/// Bins, windows and every bin's split size, checked before any training.
fn preflight(plan: &ExperimentPlan, corpus: &[LabeledExample]) -> Result<Vec<TimeBin>> {
    let bins = timeline::build_bins(corpus, plan).invalid(|| "corpus does not fit the plan".into())?;
    timeline::build_windows(&bins, plan).invalid(|| "corpus does not fit the plan".into())?;
    for bin in &bins {
        timeline::sample_splits(bin, plan, 0).invalid(|| "corpus does not fit the plan".into())?;
    }
    Ok(bins)
}

pub fn ingest(a: &IngestArgs) -> Result<()> {
    let parsed = ingest::parse_annotations(open(&a.input)?)
        .invalid(|| format!("cannot parse {}", a.input.display()))?;
    let n_rejects = parsed.rejects.len();
    let (examples, report) = ingest::prepare_corpus(parsed.records);
    log::info!("{} examples resolved, {n_rejects} lines rejected", examples.len());

    ensure_parent(&a.out)?;
    ingest::write_jsonl(create(&a.out)?, &examples).runtime(|| "writing corpus".into())?;
    let mut outputs = vec![a.out.display().to_string()];
    if let Some(p) = &a.rejects {
        ensure_parent(p)?;
        ingest::write_rejects(create(p)?, &parsed.rejects).runtime(|| "writing rejects".into())?;
        outputs.push(p.display().to_string());
    }
    #[derive(Serialize)]
    struct Cfg {
        report: ingest::IngestReport,
        rejected_lines: usize,
    }
    let mut m = Manifest::new("ingest", Cfg { report, rejected_lines: n_rejects }).input("votes", &a.input);
    m.outputs = outputs;
    m.write(&with_suffix(&a.out, ".manifest.json"))
        .runtime(|| "writing manifest".into())
}

pub fn bins(a: &BinsArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let plan = resolve_plan(&a.plan)?;
    let bins = preflight(&plan, &corpus)?;
    let splits = timeline::expand_splits(&bins, &plan).invalid(|| "sampling splits".into())?;

    make_dir(&a.out)?;
    timeline::write_bin_manifest(create(&a.out.join("bins.csv"))?, &bins)
        .runtime(|| "writing bins.csv".into())?;
    timeline::write_split_manifest(create(&a.out.join("splits.csv"))?, &corpus, &splits)
        .runtime(|| "writing splits.csv".into())?;
    let mut m = Manifest::new("bins", &plan).input("corpus", &a.corpus);
    m.outputs = vec!["bins.csv".into(), "splits.csv".into()];
    m.write(&a.out.join("manifest.json")).runtime(|| "writing manifest".into())
}

#[derive(Serialize)]
struct RunConfig<'a> {
    plan: &'a ExperimentPlan,
    classifier: &'a ClassifierChoice,
    bootstrap_draws: usize,
    level: f64,
    summary_columns: &'static [&'static str],
}

fn write_results(dir: &Path, results: &DriftResults) -> Result<Vec<String>> {
    make_dir(dir)?;
    experiment::write_summary_csv(create(&dir.join("summary.csv"))?, results)
        .runtime(|| "writing summary.csv".into())?;
    experiment::write_scores_csv(create(&dir.join("scores.csv"))?, results)
        .runtime(|| "writing scores.csv".into())?;
    timeline::write_bin_manifest(create(&dir.join("bins.csv"))?, &results.bins)
        .runtime(|| "writing bins.csv".into())?;
    if results.degenerate_units > 0 {
        log::warn!(
            "{} of {} models saw one class and predict it constantly",
            results.degenerate_units,
            results.windows.len() * results.plan.repeats
        );
    }
    Ok(vec!["summary.csv".into(), "scores.csv".into(), "bins.csv".into()])
}

pub fn drift(a: &DriftArgs, jobs: usize) -> Result<()> {
    let a = &a.run;
    let corpus = load_corpus(&a.corpus)?;
    let plan = resolve_plan(&a.plan)?;
    let choice = resolve_choice(a)?;
    let options = run_options(a, jobs)?;
    preflight(&plan, &corpus)?;

    let results = experiment::run_drift(&plan, &corpus, &choice, &options)
        .runtime(|| "drift experiment failed".into())?;
    let outputs = write_results(&a.out, &results)?;
    let cfg = RunConfig {
        plan: &plan,
        classifier: &choice,
        bootstrap_draws: options.bootstrap_draws,
        level: options.level,
        summary_columns: &experiment::SUMMARY_HEADER,
    };
    let mut m = Manifest::new("drift", cfg).input("corpus", &a.corpus);
    m.outputs = outputs;
    m.write(&a.out.join("manifest.json")).runtime(|| "writing manifest".into())
}

pub fn ablate_size(a: &AblateSizeArgs, jobs: usize) -> Result<()> {
    let run = &a.run;
    let corpus = load_corpus(&run.corpus)?;
    let plan = resolve_plan(&run.plan)?;
    let choice = resolve_choice(run)?;
    let options = run_options(run, jobs)?;
    for &size in &a.sizes {
        if size == 0 || size % plan.window_bins != 0 {
            return Err(Failure::Invalid(anyhow::anyhow!(
                "size {size} is not a positive multiple of window_bins = {}",
                plan.window_bins
            )));
        }
        let p = ExperimentPlan {
            n_train_per_bin: size / plan.window_bins,
            ..plan.clone()
        };
        preflight(&p, &corpus)?;
    }

    let all = experiment::run_size_ablation(&plan, &corpus, &choice, &a.sizes, &options)
        .runtime(|| "size ablation failed".into())?;
    let mut outputs = Vec::new();
    for (size, results) in &all {
        let sub = format!("size_{size}");
        for f in write_results(&run.out.join(&sub), results)? {
            outputs.push(format!("{sub}/{f}"));
        }
    }
    #[derive(Serialize)]
    struct Cfg<'a> {
        run: RunConfig<'a>,
        sizes: &'a [usize],
    }
    let cfg = Cfg {
        run: RunConfig {
            plan: &plan,
            classifier: &choice,
            bootstrap_draws: options.bootstrap_draws,
            level: options.level,
            summary_columns: &experiment::SUMMARY_HEADER,
        },
        sizes: &a.sizes,
    };
    let mut m = Manifest::new("ablate-size", cfg).input("corpus", &run.corpus);
    m.outputs = outputs;
    m.write(&run.out.join("manifest.json")).runtime(|| "writing manifest".into())
}

pub fn ablate_window(a: &AblateWindowArgs, jobs: usize) -> Result<()> {
    let run = &a.run;
    let corpus = load_corpus(&run.corpus)?;
    let plan = resolve_plan(&run.plan)?;
    let choice = resolve_choice(run)?;
    let options = run_options(run, jobs)?;
    for &days in &a.window_days {
        if days == 0 || days % plan.bin_days != 0 {
            return Err(Failure::Invalid(anyhow::anyhow!(
                "window length {days} is not a positive multiple of bin_days = {}",
                plan.bin_days
            )));
        }
        let wb = (days / plan.bin_days) as usize;
        let counts = experiment::spread_train_counts(a.total_train, wb);
        let p = ExperimentPlan {
            window_bins: wb,
            n_train_per_bin: counts.iter().copied().max().unwrap_or(0),
            window_train_counts: Some(counts),
            ..plan.clone()
        };
        p.validate().invalid(|| format!("window length {days}"))?;
        preflight(&p, &corpus)?;
    }

    let all = experiment::run_window_ablation(
        &plan,
        &corpus,
        &choice,
        &a.window_days,
        a.total_train,
        &options,
    )
    .runtime(|| "window ablation failed".into())?;
    let mut outputs = Vec::new();
    for (days, results) in &all {
        let sub = format!("window_{days}d");
        for f in write_results(&run.out.join(&sub), results)? {
            outputs.push(format!("{sub}/{f}"));
        }
    }
    #[derive(Serialize)]
    struct Cfg<'a> {
        run: RunConfig<'a>,
        window_days: &'a [u32],
        total_train: usize,
    }
    let cfg = Cfg {
        run: RunConfig {
            plan: &plan,
            classifier: &choice,
            bootstrap_draws: options.bootstrap_draws,
            level: options.level,
            summary_columns: &experiment::SUMMARY_HEADER,
        },
        window_days: &a.window_days,
        total_train: a.total_train,
    };
    let mut m = Manifest::new("ablate-window", cfg).input("corpus", &run.corpus);
    m.outputs = outputs;
    m.write(&run.out.join("manifest.json")).runtime(|| "writing manifest".into())
}

pub fn diagnose(a: &DiagnoseArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let plan = resolve_plan(&a.plan)?;
    let bins = timeline::build_bins(&corpus, &plan).invalid(|| "corpus does not fit the plan".into())?;
    let provider = match a.provider {
        ProviderKind::Hashed => {
            if a.embed_dim < 2 {
                return Err(Failure::Invalid(anyhow::anyhow!("--embed-dim must be at least 2")));
            }
            EmbeddingProvider::HashedRandomProjection {
                dim: a.embed_dim,
                seed: a.embed_seed,
            }
        }
        ProviderKind::File => {
            let path = a.embeddings.as_ref().expect("clap enforces --embeddings");
            let name = path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
            EmbeddingProvider::from_file(&name, open(path)?)
                .invalid(|| format!("bad embeddings file {}", path.display()))?
        }
    };
    let width = bins.len().saturating_sub(1).to_string().len().max(2);
    let groups: Vec<(String, Vec<usize>)> = bins
        .iter()
        .map(|b| (format!("bin{:0width$}", b.index), b.members.clone()))
        .collect();

    let report = diagnostics::diagnose(&corpus, &groups, &provider)
        .invalid(|| "diagnostics failed".into())?;
    make_dir(&a.out)?;
    let mut outputs = vec!["diagnostics.csv".to_string()];
    diagnostics::write_summary_csv(create(&a.out.join("diagnostics.csv"))?, &report)
        .runtime(|| "writing diagnostics.csv".into())?;
    let mut matrices = vec![("all", Some(&report.similarity))];
    for l in driftscope_core::Label::ALL {
        matrices.push((l.as_str(), report.similarity_by_class[l.index()].as_ref()));
    }
    for (name, m) in matrices {
        let Some(m) = m else {
            log::warn!("{name}: class missing from some bin; no similarity matrix");
            continue;
        };
        for (kind, values) in [("raw", &m.raw), ("display", &m.display)] {
            let file = format!("similarity_{name}_{kind}.csv");
            diagnostics::write_matrix_csv(create(&a.out.join(&file))?, &m.names, values)
                .runtime(|| format!("writing {file}"))?;
            outputs.push(file);
        }
    }
    #[derive(Serialize)]
    struct Cfg<'a> {
        plan: &'a ExperimentPlan,
        provider: String,
    }
    let mut m = Manifest::new(
        "diagnose",
        Cfg {
            plan: &plan,
            provider: provider.tag(),
        },
    )
    .input("corpus", &a.corpus);
    if let Some(e) = &a.embeddings {
        m = m.input("embeddings", e);
    }
    m.outputs = outputs;
    m.write(&a.out.join("manifest.json")).runtime(|| "writing manifest".into())
}

pub fn sentiment(a: &SentimentArgs) -> Result<()> {
    let corpus = load_corpus(&a.corpus)?;
    let plan = resolve_plan(&a.plan)?;
    let config = resolve_classifier(&a.classifier)?;
    let bins = preflight(&plan, &corpus)?;
    let windows = timeline::build_windows(&bins, &plan).invalid(|| "building windows".into())?;
    if a.legacy_window >= windows.len() {
        return Err(Failure::Invalid(anyhow::anyhow!(
            "--legacy-window {} out of range (0..{})",
            a.legacy_window,
            windows.len()
        )));
    }
    if a.repeat >= plan.repeats {
        return Err(Failure::Invalid(anyhow::anyhow!(
            "--repeat {} out of range (0..{})",
            a.repeat,
            plan.repeats
        )));
    }
    let mut stream: Vec<StreamItem> = sentiment::read_stream(open(&a.stream)?)
        .invalid(|| format!("bad stream {}", a.stream.display()))?;
    let earliest = windows[0].train_end;
    if a.drop_early {
        let before = stream.len();
        stream.retain(|i| i.created_at >= earliest);
        log::info!("dropped {} stream items older than the first model", before - stream.len());
    }
    if let Some(item) = stream.iter().find(|i| i.created_at < earliest) {
        return Err(Failure::Invalid(anyhow::anyhow!(
            "stream item at {} precedes the first model's training end {}",
            timefmt::format(&item.created_at),
            timefmt::format(&earliest)
        )));
    }

    let models = experiment::train_model_timeline(&plan, &corpus, &config, a.repeat)
        .runtime(|| "training model timeline".into())?;
    let legacy = &models[a.legacy_window].1;
    let (s_legacy, s_updated) = sentiment::compare_legacy_updated(&stream, legacy, &models)
        .runtime(|| "scoring stream".into())?;

    make_dir(&a.out)?;
    sentiment::write_comparison_csv(create(&a.out.join("sentiment.csv"))?, &s_legacy, &s_updated)
        .runtime(|| "writing sentiment.csv".into())?;
    #[derive(Serialize)]
    struct Cfg<'a> {
        plan: &'a ExperimentPlan,
        classifier: &'a ClassifierConfig,
        legacy_window: usize,
        legacy_train_end: String,
        drop_early: bool,
        repeat: usize,
        model_train_ends: Vec<String>,
    }
    let cfg = Cfg {
        plan: &plan,
        classifier: &config,
        legacy_window: a.legacy_window,
        legacy_train_end: timefmt::format(&models[a.legacy_window].0),
        drop_early: a.drop_early,
        repeat: a.repeat,
        model_train_ends: models.iter().map(|(t, _)| timefmt::format(t)).collect(),
    };
    let mut m = Manifest::new("sentiment", cfg)
        .input("corpus", &a.corpus)
        .input("stream", &a.stream);
    m.outputs = vec!["sentiment.csv".into()];
    m.write(&a.out.join("manifest.json")).runtime(|| "writing manifest".into())
}

pub fn synth(a: &SynthArgs) -> Result<()> {
    let mut scenario = match (&a.scenario, &a.preset) {
        (Some(p), _) => DriftScenario::from_toml_str(&read_string(p)?)
            .invalid(|| format!("bad scenario {}", p.display()))?,
        (None, Some(name)) => DriftScenario::preset(name).invalid(|| "--preset".into())?,
        (None, None) => unreachable!("clap requires --scenario or --preset"),
    };
    if let Some(s) = a.seed {
        scenario.seed = s;
    }
    if let Some(n) = a.n_items {
        scenario.n_items = n;
    }
    scenario.validate().invalid(|| "invalid scenario".into())?;

    let items = scenario.generate_items().runtime(|| "generating".into())?;
    let records: Vec<_> = items.iter().flat_map(|i| i.records()).collect();
    ensure_parent(&a.out)?;
    ingest::write_jsonl(create(&a.out)?, &records).runtime(|| "writing votes".into())?;
    let mut outputs = vec![a.out.display().to_string()];
    if let Some(p) = &a.truth {
        ensure_parent(p)?;
        let mut w = create(p)?;
        let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
            writeln!(w, "item_id,created_at,true_label")?;
            for i in &items {
                writeln!(w, "{},{},{}", i.item_id, timefmt::format(&i.created_at), i.true_label)?;
            }
            w.flush()
        };
        write(&mut w).runtime(|| format!("writing {}", p.display()))?;
        outputs.push(p.display().to_string());
    }
    if let Some(p) = &a.stream {
        ensure_parent(p)?;
        let stream: Vec<StreamItem> = items
            .iter()
            .map(|i| StreamItem {
                created_at: i.created_at,
                text: i.text.clone(),
            })
            .collect();
        ingest::write_jsonl(create(p)?, &stream).runtime(|| "writing stream".into())?;
        outputs.push(p.display().to_string());
    }
    let mut m = Manifest::new("synth", &scenario);
    if let Some(p) = &a.scenario {
        m = m.input("scenario", p);
    }
    m.outputs = outputs;
    m.write(&with_suffix(&a.out, ".manifest.json"))
        .runtime(|| "writing manifest".into())
}
