//! Multi-annotator ingest: parse raw votes, anonymize, filter, and resolve
//! each item to a single label by qualified majority.
//!
//! Input is line-delimited JSON, one vote per line:
//!
//! ```text
//! {"item_id":"t1","text":"...","created_at":"2018-02-02T10:00:00Z","annotator_id":"a7","vote":"positive"}
//! ```
//!
//! The resolved corpus uses the same framing with [`LabeledExample`] fields.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, Write};
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::label::Label;
use crate::timefmt::{self, Timestamp};

/// Minimum whitespace-token count for an item to be eligible.
pub const MIN_TOKENS: usize = 3;
/// Minimum number of votes an item needs to be resolved.
pub const MIN_VOTES: u32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("{rejected} of {total} lines rejected; input does not look like an annotation file")]
    MostlyRejected { rejected: usize, total: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line_no}: {source}")]
    Json {
        line_no: usize,
        source: serde_json::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// One annotator's vote on one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    pub item_id: String,
    pub text: String,
    #[serde(with = "timefmt")]
    pub created_at: Timestamp,
    pub annotator_id: String,
    pub vote: Label,
}

/// A majority-resolved, time-stamped training unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub item_id: String,
    pub text: String,
    #[serde(with = "timefmt")]
    pub created_at: Timestamp,
    pub label: Label,
    pub agreement: f64,
    pub n_votes: u32,
    /// Votes per class in (negative, neutral, positive) order. Kept so that
    /// agreement statistics can be recomputed on any slice of the corpus.
    #[serde(default)]
    pub vote_counts: [u32; 3],
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reject {
    pub line_no: usize,
    pub reason: String,
}

#[derive(Debug, Default)]
pub struct ParsedAnnotations {
    pub records: Vec<AnnotationRecord>,
    pub rejects: Vec<Reject>,
}

/// Parses line-delimited annotation records.
///
/// Malformed lines are collected into `rejects` (1-based line numbers).
/// Blank lines are ignored. The whole parse fails only when more than half
/// of the non-blank lines are rejected.
pub fn parse_annotations<R: BufRead>(reader: R) -> Result<ParsedAnnotations, IngestError> {
    let mut out = ParsedAnnotations::default();
    let mut total = 0usize;
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        total += 1;
        match serde_json::from_str::<AnnotationRecord>(&line) {
            Ok(rec) => out.records.push(rec),
            Err(e) => out.rejects.push(Reject {
                line_no: idx + 1,
                reason: e.to_string(),
            }),
        }
    }
    if out.rejects.len() * 2 > total {
        return Err(IngestError::MostlyRejected {
            rejected: out.rejects.len(),
            total,
        });
    }
    Ok(out)
}

static URL_RE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)(?:https?://|www\.)\S*").unwrap());
static MENTION_RE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"(^|\s)@\w+").unwrap());

/// Replaces URLs with `url` and leading-`@` mentions with `user`.
pub fn anonymize(text: &str) -> String {
    let no_urls = URL_RE.replace_all(text, "url");
    MENTION_RE.replace_all(&no_urls, "${1}user").into_owned()
}

pub fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Per-record length check; corpus-level duplicate removal is done by
/// [`filter_corpus`].
pub fn filter_eligible(record: &AnnotationRecord) -> bool {
    token_count(&record.text) >= MIN_TOKENS
}

fn dedup_key(text: &str) -> String {
    text.nfc().collect()
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct FilterReport {
    pub items_seen: usize,
    pub items_too_short: usize,
    pub items_duplicate: usize,
}

/// Drops items below the token threshold and items whose (NFC-normalized)
/// text exactly repeats that of an earlier item. Records are expected to be
/// anonymized already; order is preserved.
pub fn filter_corpus(records: Vec<AnnotationRecord>) -> (Vec<AnnotationRecord>, FilterReport) {
    let mut report = FilterReport::default();
    let mut verdict: HashMap<String, bool> = HashMap::new();
    let mut seen_texts: HashSet<String> = HashSet::new();

    for rec in &records {
        if verdict.contains_key(&rec.item_id) {
            continue;
        }
        report.items_seen += 1;
        let keep = if !filter_eligible(rec) {
            report.items_too_short += 1;
            false
        } else if !seen_texts.insert(dedup_key(&rec.text)) {
            report.items_duplicate += 1;
            false
        } else {
            true
        };
        verdict.insert(rec.item_id.clone(), keep);
    }

    let kept = records
        .into_iter()
        .filter(|r| verdict[&r.item_id])
        .collect();
    (kept, report)
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct ResolveReport {
    pub items_resolved: usize,
    pub items_too_few_votes: usize,
    pub items_low_agreement: usize,
}

/// Resolves per-item votes into labeled examples.
///
/// An item is kept when it has at least [`MIN_VOTES`] votes and its modal
/// class holds at least two thirds of them (exactly 2/3 is kept). Output is
/// sorted by `created_at`, then `item_id`.
pub fn resolve_labels(records: &[AnnotationRecord]) -> (Vec<LabeledExample>, ResolveReport) {
    let mut groups: HashMap<&str, (usize, [u32; 3])> = HashMap::new();
    for (i, rec) in records.iter().enumerate() {
        let entry = groups.entry(rec.item_id.as_str()).or_insert((i, [0; 3]));
        entry.1[rec.vote.index()] += 1;
    }

    let mut report = ResolveReport::default();
    let mut out = Vec::new();
    for (first, counts) in groups.into_values() {
        let n: u32 = counts.iter().sum();
        if n < MIN_VOTES {
            report.items_too_few_votes += 1;
            continue;
        }
        let (mode_idx, &mode_count) = counts
            .iter()
            .enumerate()
            .max_by_key(|&(i, c)| (*c, std::cmp::Reverse(i)))
            .unwrap();
        if 3 * mode_count < 2 * n {
            report.items_low_agreement += 1;
            continue;
        }
        let rec = &records[first];
        out.push(LabeledExample {
            item_id: rec.item_id.clone(),
            text: rec.text.clone(),
            created_at: rec.created_at,
            label: Label::from_index(mode_idx).unwrap(),
            agreement: f64::from(mode_count) / f64::from(n),
            n_votes: n,
            vote_counts: counts,
        });
    }
    report.items_resolved = out.len();
    out.sort_by(|a, b| {
        a.created_at
            .cmp(&b.created_at)
            .then_with(|| a.item_id.cmp(&b.item_id))
    });
    (out, report)
}

#[derive(Debug, Default, Clone, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub records_in: usize,
    pub filter: FilterReport,
    pub resolve: ResolveReport,
}

/// Full ingest chain: anonymize, filter, resolve.
pub fn prepare_corpus(records: Vec<AnnotationRecord>) -> (Vec<LabeledExample>, IngestReport) {
    let records_in = records.len();
    let anonymized = records
        .into_iter()
        .map(|mut r| {
            r.text = anonymize(&r.text);
            r
        })
        .collect();
    let (kept, filter) = filter_corpus(anonymized);
    let (examples, resolve) = resolve_labels(&kept);
    (
        examples,
        IngestReport {
            records_in,
            filter,
            resolve,
        },
    )
}

pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<(), IngestError> {
    for item in items {
        serde_json::to_writer(&mut w, item).map_err(|e| IngestError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a resolved corpus. Unlike raw annotations, any malformed line is an
/// error: resolved files are machine-written.
pub fn read_resolved<R: BufRead>(reader: R) -> Result<Vec<LabeledExample>, IngestError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let ex = serde_json::from_str(&line).map_err(|source| IngestError::Json {
            line_no: idx + 1,
            source,
        })?;
        out.push(ex);
    }
    Ok(out)
}

pub fn write_rejects<W: Write>(w: W, rejects: &[Reject]) -> Result<(), IngestError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["line_no", "reason"])?;
    for r in rejects {
        wtr.write_record([r.line_no.to_string(), r.reason.clone()])?;
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(item: &str, text: &str, secs: i64, annotator: &str, vote: Label) -> AnnotationRecord {
        use chrono::TimeZone;
        AnnotationRecord {
            item_id: item.into(),
            text: text.into(),
            created_at: chrono::Utc.timestamp_opt(secs, 0).unwrap(),
            annotator_id: annotator.into(),
            vote,
        }
    }

    fn votes(item: &str, vs: &[Label]) -> Vec<AnnotationRecord> {
        vs.iter()
            .enumerate()
            .map(|(i, &v)| rec(item, "some text here", 0, &format!("a{i}"), v))
            .collect()
    }

    const LINE: &str = r#"{"item_id":"1","text":"a b c","created_at":"2018-02-02T10:00:00Z","annotator_id":"x","vote":"positive"}"#;

    #[test]
    fn parse_single_and_empty() {
        let one = parse_annotations(LINE.as_bytes()).unwrap();
        assert_eq!(one.records.len(), 1);
        assert!(one.rejects.is_empty());
        let none = parse_annotations("".as_bytes()).unwrap();
        assert!(none.records.is_empty() && none.rejects.is_empty());
    }

    #[test]
    fn parse_collects_rejects() {
        let bad = r#"{"item_id":"2","text":"x","created_at":"yesterday","annotator_id":"x","vote":"positive"}"#;
        let input = format!("{LINE}\n{LINE}\n{bad}\n{LINE}\n");
        let parsed = parse_annotations(input.as_bytes()).unwrap();
        assert_eq!(parsed.records.len(), 3);
        assert_eq!(parsed.rejects.len(), 1);
        assert_eq!(parsed.rejects[0].line_no, 3);
    }

    #[test]
    fn parse_fails_on_mostly_garbage() {
        let input = format!("{LINE}\nnot json\nnor this\n");
        assert!(matches!(
            parse_annotations(input.as_bytes()),
            Err(IngestError::MostlyRejected { rejected: 2, total: 3 })
        ));
        // exactly half is tolerated
        let input = format!("{LINE}\nnot json\n");
        assert!(parse_annotations(input.as_bytes()).is_ok());
    }

    #[test]
    fn anonymize_examples() {
        assert_eq!(anonymize("thanks @doc123 see https://x.co/ab"), "thanks user see url");
        assert_eq!(anonymize("no mentions here"), "no mentions here");
        assert_eq!(anonymize("@a @b"), "user user");
        assert_eq!(anonymize("go to www.example.org now"), "go to url now");
        assert_eq!(anonymize("mail me at x@y.com"), "mail me at x@y.com");
        assert_eq!(anonymize("@someone, hi"), "user, hi");
    }

    #[test]
    fn eligibility_threshold() {
        assert!(!filter_eligible(&rec("1", "two words", 0, "a", Label::Neutral)));
        assert!(filter_eligible(&rec("1", "now three words", 0, "a", Label::Neutral)));
    }

    #[test]
    fn duplicates_after_first_dropped() {
        let mut records = votes("a", &[Label::Positive; 3]);
        records.extend(votes("b", &[Label::Negative; 3]));
        let (kept, report) = filter_corpus(records);
        assert!(kept.iter().all(|r| r.item_id == "a"));
        assert_eq!(report.items_duplicate, 1);
    }

    #[test]
    fn duplicates_compare_nfc() {
        let mut records = vec![rec("a", "caf\u{e9} is nice", 0, "x", Label::Neutral)];
        records.push(rec("b", "cafe\u{301} is nice", 0, "x", Label::Neutral));
        let (_, report) = filter_corpus(records);
        assert_eq!(report.items_duplicate, 1);
    }

    #[test]
    fn resolve_examples() {
        use Label::*;
        let (ex, _) = resolve_labels(&votes("i", &[Positive, Positive, Negative]));
        assert_eq!(ex[0].label, Positive);
        assert_eq!(ex[0].agreement, 2.0 / 3.0);

        let (ex, report) = resolve_labels(&votes("i", &[Positive, Neutral, Negative]));
        assert!(ex.is_empty());
        assert_eq!(report.items_low_agreement, 1);

        let (ex, _) = resolve_labels(&votes("i", &[Negative; 3]));
        assert_eq!((ex[0].label, ex[0].agreement), (Negative, 1.0));
        assert_eq!(ex[0].vote_counts, [3, 0, 0]);

        let (ex, report) = resolve_labels(&votes("i", &[Negative; 2]));
        assert!(ex.is_empty());
        assert_eq!(report.items_too_few_votes, 1);

        // 4 voters: 3/4 passes, 2/4 does not
        let (ex, _) = resolve_labels(&votes("i", &[Neutral, Neutral, Neutral, Positive]));
        assert_eq!(ex[0].label, Neutral);
        let (ex, _) = resolve_labels(&votes("i", &[Neutral, Neutral, Positive, Positive]));
        assert!(ex.is_empty());
    }

    #[test]
    fn resolve_sorts_by_time() {
        let mut records = Vec::new();
        for (item, t) in [("late", 50), ("early", 10), ("mid", 30)] {
            for a in 0..3 {
                records.push(rec(item, "x y z", t, &a.to_string(), Label::Neutral));
            }
        }
        let (ex, _) = resolve_labels(&records);
        let ids: Vec<_> = ex.iter().map(|e| e.item_id.as_str()).collect();
        assert_eq!(ids, ["early", "mid", "late"]);
    }

    fn label_strategy() -> impl Strategy<Value = Label> {
        (0usize..3).prop_map(|i| Label::from_index(i).unwrap())
    }

    proptest! {
        #[test]
        fn anonymize_idempotent(s in "[a-z@:/. w]{0,40}") {
            let once = anonymize(&s);
            prop_assert_eq!(anonymize(&once), once);
        }

        #[test]
        fn resolve_permutation_invariant(
            vs in prop::collection::vec(label_strategy(), 0..8),
            perm_seed in any::<u64>(),
        ) {
            use rand::seq::SliceRandom;
            let records = votes("i", &vs);
            let mut shuffled = records.clone();
            shuffled.shuffle(&mut crate::seed::rng(perm_seed));
            let (a, _) = resolve_labels(&records);
            let (b, _) = resolve_labels(&shuffled);
            prop_assert_eq!(a.len(), b.len());
            for (x, y) in a.iter().zip(&b) {
                prop_assert_eq!(x.label, y.label);
                prop_assert_eq!(x.agreement, y.agreement);
                prop_assert!(x.agreement >= 2.0 / 3.0);
            }
        }

        #[test]
        fn filter_and_dedup_commute(texts in prop::collection::vec("(a|b|c)( (a|b|c)){0,3}", 1..12)) {
            let records: Vec<_> = texts
                .iter()
                .enumerate()
                .map(|(i, t)| rec(&i.to_string(), t, 0, "x", Label::Neutral))
                .collect();
            // length filter then dedup
            let short_first: Vec<_> = records.iter().filter(|r| filter_eligible(r)).cloned().collect();
            let (a, _) = filter_corpus(short_first);
            // dedup (ignoring length) then length filter
            let mut seen = HashSet::new();
            let dedup_first: Vec<_> = records
                .iter()
                .filter(|r| seen.insert(dedup_key(&r.text)))
                .filter(|r| filter_eligible(r))
                .cloned()
                .collect();
            let ids = |v: &[AnnotationRecord]| v.iter().map(|r| r.text.clone()).collect::<HashSet<_>>();
            prop_assert_eq!(ids(&a), ids(&dedup_first));
        }
    }
}
