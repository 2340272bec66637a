//! Acceptance gate: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails. Runs as a plain binary (`harness = false`) so the report
//! is printed even when the test runner captures output.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use driftscope_core::adapter::{shell_quote, ExternalModelSpec};
use driftscope_core::bow::{self, loss_and_gradient, ClassifierConfig, Model};
use driftscope_core::diagnostics::{self, EmbeddingProvider};
use driftscope_core::experiment::{self, ClassifierChoice, RunOptions, ScoreKind};
use driftscope_core::ingest::{self, LabeledExample};
use driftscope_core::metrics::{self, fleiss_kappa};
use driftscope_core::seed;
use driftscope_core::sentiment::{self, StreamItem};
use driftscope_core::synth::DriftScenario;
use driftscope_core::timeline::{self, ExperimentPlan};
use driftscope_core::Label;
use rand::Rng;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn corpus(preset: &str) -> Vec<LabeledExample> {
    ingest::prepare_corpus(DriftScenario::preset(preset).unwrap().generate().unwrap()).0
}

fn paper_config() -> ClassifierConfig {
    ClassifierConfig {
        dim: 10,
        epochs: 500,
        lr0: 0.01,
        ..ClassifierConfig::default()
    }
}

fn plan(repeats: usize) -> ExperimentPlan {
    ExperimentPlan {
        repeats,
        ..ExperimentPlan::default()
    }
}

fn gradient_oracle() -> Outcome {
    const H: f64 = 1e-5;
    let started = Instant::now();
    let loss = |m: &Model, t: &[String], l: Label| -m.predict_tokens(t).p(l).ln();
    let mut worst: f64 = 0.0;
    for case in 0..20u64 {
        let mut rng = seed::rng(case);
        let dim = rng.random_range(2..=6);
        let vocab: Vec<String> = (0..rng.random_range(3..=8)).map(|i| format!("w{i}")).collect();
        let config = ClassifierConfig {
            dim,
            word_ngrams: 1 + usize::from(case % 2 == 1),
            bucket_count: 13,
            seed: case,
            ..ClassifierConfig::default()
        };
        let mut model = Model::new(vocab.clone(), config);
        for w in model.output_matrix_mut() {
            *w = rng.random_range(-1.0..1.0);
        }
        let tokens: Vec<String> = (0..rng.random_range(1..=6))
            .map(|_| vocab[rng.random_range(0..vocab.len())].clone())
            .collect();
        for r in model.features(&tokens) {
            for v in model.input_row_mut(r) {
                *v = rng.random_range(-1.0..1.0);
            }
        }
        let label = Label::ALL[rng.random_range(0..3)];
        let (_, grad) = loss_and_gradient(&model, &tokens, label).unwrap();

        let mut check = |analytic: f64, perturb: &dyn Fn(&mut Model, f64)| {
            let mut plus = model.clone();
            perturb(&mut plus, H);
            let mut minus = model.clone();
            perturb(&mut minus, -H);
            let fd = (loss(&plus, &tokens, label) - loss(&minus, &tokens, label)) / (2.0 * H);
            let err = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
            worst = worst.max(err);
        };
        for i in 0..3 * dim {
            check(grad.output_part()[i], &|m, h| m.output_matrix_mut()[i] += h);
        }
        for (k, &row) in grad.rows.iter().enumerate() {
            for j in 0..dim {
                check(grad.row_part(k)[j], &|m, h| m.input_row_mut(row)[j] += h);
            }
        }
    }
    let fast = started.elapsed() < Duration::from_secs(5);
    outcome(worst < 1e-4 && fast, format!("max relative error {worst:.2e} over 20 models"))
}

fn classifier_sanity() -> Outcome {
    let started = Instant::now();
    let scenario = DriftScenario {
        n_items: 2500,
        annotator_noise: 0.0,
        seed: 31,
        ..DriftScenario::preset("static").unwrap()
    };
    let items = scenario.generate_items().unwrap();
    let (train, test) = items.split_at(2000);
    let data: Vec<(&str, Label)> = train.iter().map(|i| (i.text.as_str(), i.true_label)).collect();
    let (model, _) = bow::train_texts(&data, &paper_config()).unwrap();
    let golds: Vec<Label> = test.iter().map(|i| i.true_label).collect();
    let preds: Vec<Label> = test.iter().map(|i| model.predict_label(&i.text)).collect();
    let f1 = metrics::score(&golds, &preds).unwrap().f1_macro;
    let fast = started.elapsed() < Duration::from_secs(60);
    outcome(f1 >= 0.95 && fast, format!("f1_macro {f1:.4} on 2000/500"))
}

fn metrics_oracles() -> Outcome {
    let mut rng = seed::rng(77);
    let mut mismatches = 0;
    for _ in 0..100 {
        let n = rng.random_range(1..200);
        let golds: Vec<Label> = (0..n).map(|_| Label::ALL[rng.random_range(0..3)]).collect();
        let preds: Vec<Label> = (0..n).map(|_| Label::ALL[rng.random_range(0..3)]).collect();
        let got = metrics::score(&golds, &preds).unwrap();
        let mut f1s = [0.0; 3];
        for c in Label::ALL {
            let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
            for (g, p) in golds.iter().zip(&preds) {
                match (*g == c, *p == c) {
                    (true, true) => tp += 1,
                    (false, true) => fp += 1,
                    (true, false) => fn_ += 1,
                    _ => {}
                }
            }
            let div = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
            let (p, r) = (div(tp, tp + fp), div(tp, tp + fn_));
            let f1 = div(2 * tp, 2 * tp + fp + fn_);
            let s = got.class(c);
            if s.precision != p || s.recall != r || s.f1 != f1 {
                mismatches += 1;
            }
            let harmonic = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
            if (harmonic - f1).abs() > 1e-12 {
                mismatches += 1;
            }
            f1s[c.index()] = f1;
        }
        if got.f1_macro != (f1s[0] + f1s[1] + f1s[2]) / 3.0 {
            mismatches += 1;
        }
    }
    let perfect = fleiss_kappa(&[[3u32, 0, 0], [0, 3, 0]]).unwrap().kappa;
    let anti = fleiss_kappa(&[[1u32, 1, 1]]).unwrap().kappa;
    let table: Vec<[u32; 3]> = (0..10_000)
        .map(|_| {
            let mut row = [0u32; 3];
            for _ in 0..3 {
                row[rng.random_range(0..3)] += 1;
            }
            row
        })
        .collect();
    let random = fleiss_kappa(&table).unwrap().kappa;
    let ok = mismatches == 0
        && (perfect - 1.0).abs() < 1e-9
        && (anti + 0.5).abs() < 1e-9
        && random.abs() <= 0.05;
    outcome(
        ok,
        format!(
            "{mismatches} f1 mismatches; kappa hand cases {perfect}, {anti}; uniform raters {random:.4}"
        ),
    )
}

fn protocol_geometry(swap: &[LabeledExample]) -> Outcome {
    let cheap = ClassifierChoice::BuiltIn(ClassifierConfig {
        dim: 2,
        epochs: 1,
        ..ClassifierConfig::default()
    });
    let r = experiment::run_drift(&plan(50), swap, &cheap, &RunOptions::default()).unwrap();
    let starts_at_zero = r.windows.iter().all(|w| {
        ScoreKind::ALL.iter().all(|&k| {
            let s = r.summary(w.window_id, w.last_bin(), k).unwrap();
            s.relative_change
                .is_none_or(|c| c.mean == 0.0 && c.lower == 0.0 && c.upper == 0.0)
        })
    }) && r
        .summary(0, r.windows[0].last_bin(), ScoreKind::Macro)
        .unwrap()
        .relative_change
        .is_some();
    outcome(
        r.bins.len() == 13 && r.cells.len() == 2750 && starts_at_zero,
        format!(
            "{} bins, {} windows, {} cells; relative series start at 0: {starts_at_zero}",
            r.bins.len(),
            r.windows.len(),
            r.cells.len()
        ),
    )
}

fn positive_control(swap: &[LabeledExample]) -> Outcome {
    let started = Instant::now();
    let choice = ClassifierChoice::BuiltIn(paper_config());
    let r = experiment::run_drift(&plan(10), swap, &choice, &RunOptions::default()).unwrap();
    let last = r.bins.len() - 1;
    let drop = r
        .summary(0, last, ScoreKind::Macro)
        .and_then(|s| s.relative_change)
        .map_or(f64::NAN, |c| c.mean);
    let stable = r.windows.iter().all(|w| {
        let s = r.summary(w.window_id, w.last_bin(), ScoreKind::Macro).unwrap();
        let mean: f64 = (0..10)
            .map(|rep| r.cell(w.window_id, w.last_bin(), rep).unwrap().eval_result.f1_macro)
            .sum::<f64>()
            / 10.0;
        s.f1.lower <= mean && mean <= s.f1.upper && s.relative_change.is_some_and(|c| c.contains(0.0))
    });
    let elapsed = started.elapsed();
    outcome(
        drop <= -0.15 && stable && elapsed < Duration::from_secs(15 * 60),
        format!(
            "oldest window, final bin: mean relative change {:.1}%; training-time scores within CI: {stable}; {:.0} s",
            drop * 100.0,
            elapsed.as_secs_f64()
        ),
    )
}

fn negative_control() -> Outcome {
    let stat = corpus("static");
    let choice = ClassifierChoice::BuiltIn(paper_config());
    let r = experiment::run_drift(&plan(10), &stat, &choice, &RunOptions::default()).unwrap();
    let mut checked = 0;
    let mut excluded = Vec::new();
    for s in r.summaries.iter().filter(|s| s.kind == ScoreKind::Macro && !s.is_training_time) {
        checked += 1;
        if !s.relative_change.is_some_and(|c| c.contains(0.0)) {
            excluded.push((s.window_id, s.eval_bin));
        }
    }
    outcome(
        excluded.is_empty() && checked == 45,
        format!("{checked} future cells checked, intervals excluding 0: {excluded:?}"),
    )
}

fn diagnostics_check(swap: &[LabeledExample]) -> Outcome {
    let plan = ExperimentPlan::default();
    let bins = timeline::build_bins(swap, &plan).unwrap();
    let groups: Vec<(String, Vec<usize>)> =
        bins.iter().map(|b| (format!("bin{}", b.index), b.members.clone())).collect();
    let provider = EmbeddingProvider::HashedRandomProjection { dim: 256, seed: 0 };
    let report = diagnostics::diagnose(swap, &groups, &provider).unwrap();
    let raw = &report.similarity.raw;
    let n = raw.len();
    let first_last = raw[0][n - 1];
    let min_adjacent = (0..n - 1).map(|i| raw[i][i + 1]).fold(f64::INFINITY, f64::min);

    let text = "the same words every single time";
    let dup = diagnostics::embed_corpus(
        "dup",
        (0..50).map(|i| (i.to_string(), text.to_string())),
        &provider,
    )
    .unwrap();
    let variability = diagnostics::corpus_variability(&dup).unwrap();
    outcome(
        first_last < min_adjacent && variability == 0.0,
        format!(
            "cos(first, last) {first_last:.4} vs min adjacent {min_adjacent:.4}; duplicated-text variability {variability}"
        ),
    )
}

fn sentiment_divergence() -> Outcome {
    let scenario = DriftScenario::preset("negative-shift").unwrap();
    let items = scenario.generate_items().unwrap();
    let train = ingest::prepare_corpus(items.iter().flat_map(|i| i.records()).collect()).0;
    let plan = ExperimentPlan::default();
    let models = experiment::train_model_timeline(&plan, &train, &paper_config(), 0).unwrap();
    let first_end = models[0].0;
    let stream: Vec<StreamItem> = items
        .iter()
        .filter(|i| i.created_at >= first_end)
        .map(|i| StreamItem {
            created_at: i.created_at,
            text: i.text.clone(),
        })
        .collect();
    let (legacy, updated) = sentiment::compare_legacy_updated(&stream, &models[0].1, &models).unwrap();
    let gap = legacy.final_quarter_mean().unwrap() - updated.final_quarter_mean().unwrap();

    let shared = vec![(first_end, models[0].1.clone())];
    let (a, b) = sentiment::compare_legacy_updated(&stream, &models[0].1, &shared).unwrap();
    outcome(
        gap >= 0.2 && a == b,
        format!("final-quarter legacy - updated = {gap:.3}; shared model gives identical series: {}", a == b),
    )
}

fn run_cli(exe: &str, args: &[&str]) {
    let status = Command::new(exe).args(args).status().expect("launch driftscope");
    assert!(status.success(), "driftscope {args:?} failed with {status}");
}

fn pipeline(exe: &str, dir: &Path) -> Vec<u8> {
    let p = |name: &str| dir.join(name).to_string_lossy().into_owned();
    run_cli(exe, &["synth", "--preset", "vocabulary-swap", "--out", &p("votes.jsonl")]);
    run_cli(exe, &["ingest", "--input", &p("votes.jsonl"), "--out", &p("corpus.jsonl")]);
    run_cli(
        exe,
        &[
            "drift",
            "--corpus",
            &p("corpus.jsonl"),
            "--out",
            &p("results"),
            "--repeats",
            "2",
            "--master-seed",
            "17",
        ],
    );
    std::fs::read(dir.join("results/summary.csv")).unwrap()
}

fn determinism() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_driftscope");
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = pipeline(exe, a.path());
    let second = pipeline(exe, b.path());
    outcome(
        first == second && !first.is_empty(),
        format!("summary.csv {} bytes, identical: {}", first.len(), first == second),
    )
}

fn adapter_equivalence(swap: &[LabeledExample]) -> Outcome {
    let exe = shell_quote(env!("CARGO_BIN_EXE_bow-external"));
    let config = ClassifierConfig {
        dim: 10,
        epochs: 40,
        lr0: 0.05,
        ..ClassifierConfig::default()
    };
    let dir = tempfile::tempdir().unwrap();
    let spec = ExternalModelSpec {
        train_command: format!(
            "{exe} train --train-file {{train_file}} --model-dir {{model_dir}} --seed {{seed}} --dim {} --epochs {} --lr0 {}",
            config.dim, config.epochs, config.lr0
        ),
        predict_command: format!(
            "{exe} predict --model-dir {{model_dir}} --input-file {{input_file}} --output-file {{output_file}}"
        ),
        model_dir: dir.path().to_path_buf(),
        timeout_seconds: 600,
        max_concurrent: 2,
        tag: "bow-external".into(),
    };
    let p = plan(2);
    let options = RunOptions::default();
    let inproc = experiment::run_drift(&p, swap, &ClassifierChoice::BuiltIn(config), &options).unwrap();
    let external = experiment::run_drift(&p, swap, &ClassifierChoice::External(spec), &options).unwrap();
    let mut worst: f64 = 0.0;
    for (a, b) in inproc.cells.iter().zip(&external.cells) {
        assert_eq!((a.window_id, a.eval_bin, a.repeat_index), (b.window_id, b.eval_bin, b.repeat_index));
        worst = worst.max((a.eval_result.f1_macro - b.eval_result.f1_macro).abs());
        for l in Label::ALL {
            let (x, y) = (a.eval_result.class(l), b.eval_result.class(l));
            worst = worst
                .max((x.f1 - y.f1).abs())
                .max((x.precision - y.precision).abs())
                .max((x.recall - y.recall).abs());
        }
    }
    let same_count = inproc.cells.len() == external.cells.len();
    outcome(
        same_count && worst <= 1e-9,
        format!("{} cells, max per-cell difference {worst:.1e}", inproc.cells.len()),
    )
}

type Criterion<'a> = (&'static str, Box<dyn Fn() -> Outcome + 'a>);

fn main() {
    // `cargo test -- <filter>` passes arguments; this gate always runs whole.
    let swap = corpus("vocabulary-swap");
    let criteria: Vec<Criterion> = vec![
        ("gradient oracle", Box::new(gradient_oracle)),
        ("classifier sanity", Box::new(classifier_sanity)),
        ("metrics oracles", Box::new(metrics_oracles)),
        ("protocol geometry", Box::new(|| protocol_geometry(&swap))),
        ("positive drift control", Box::new(|| positive_control(&swap))),
        ("negative control", Box::new(negative_control)),
        ("diagnostics", Box::new(|| diagnostics_check(&swap))),
        ("sentiment divergence", Box::new(sentiment_divergence)),
        ("determinism", Box::new(determinism)),
        ("adapter equivalence", Box::new(|| adapter_equivalence(&swap))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let started = Instant::now();
        let o = check();
        if !o.passed {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.1} s]",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            started.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
