//! Driving classifiers that live outside this process.
//!
//! An external model is two shell command templates. Placeholders are
//! replaced by shell-quoted paths before the command runs under `sh -c`:
//!
//! | placeholder     | meaning                                          |
//! |-----------------|--------------------------------------------------|
//! | `{train_file}`  | UTF-8 TSV, one `label<TAB>text` row per example  |
//! | `{model_dir}`   | directory the model must be written to / read from |
//! | `{input_file}`  | UTF-8, one text per line                         |
//! | `{output_file}` | where predictions must be written                |
//! | `{seed}`        | decimal 64-bit training seed (optional)          |
//!
//! Labels are the literal strings `negative`, `neutral`, `positive`. Tabs and
//! line breaks inside texts are written as single spaces. Each prediction
//! row is `label<TAB>p_negative<TAB>p_neutral<TAB>p_positive` (any
//! whitespace separates fields). Rows whose probabilities sum to within
//! [0.99, 1.01] are renormalized; anything else is rejected. Training
//! succeeds iff the command exits 0 and leaves `{model_dir}` non-empty.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitStatus, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::bow::ProbVector;
use crate::label::Label;

#[derive(Debug, thiserror::Error)]
pub enum AdapterError {
    #[error("invalid external model spec: {0}")]
    InvalidSpec(String),
    #[error("failed to launch `{command}`: {source}")]
    Spawn {
        command: String,
        source: std::io::Error,
    },
    #[error("training command failed ({status}): {stderr}")]
    TrainFailed {
        status: String,
        stdout: String,
        stderr: String,
    },
    #[error("prediction command failed ({status}): {stderr}")]
    PredictFailed {
        status: String,
        stdout: String,
        stderr: String,
    },
    #[error("command timed out after {seconds}s")]
    Timeout {
        seconds: u64,
        stdout: String,
        stderr: String,
    },
    #[error("training command left model directory {0} empty")]
    EmptyModelDir(PathBuf),
    #[error("expected {expected} prediction rows, found {found}")]
    LineCountMismatch { expected: usize, found: usize },
    #[error("prediction row {line}: cannot parse {content:?}")]
    UnparseableRow { line: usize, content: String },
    #[error("prediction row {line}: {reason}")]
    OutOfRange { line: usize, reason: String },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

fn default_timeout() -> u64 {
    3600
}
fn default_concurrency() -> usize {
    1
}
fn default_tag() -> String {
    "external".to_string()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalModelSpec {
    pub train_command: String,
    pub predict_command: String,
    pub model_dir: PathBuf,
    #[serde(default = "default_timeout")]
    pub timeout_seconds: u64,
    /// Upper bound on concurrently running external processes.
    #[serde(default = "default_concurrency")]
    pub max_concurrent: usize,
    /// Identifies this classifier in checkpoints and result files.
    #[serde(default = "default_tag")]
    pub tag: String,
}

impl ExternalModelSpec {
    pub fn validate(&self) -> Result<(), AdapterError> {
        let need = |tpl: &str, name: &str, keys: &[&str]| {
            for k in keys {
                if !tpl.contains(k) {
                    return Err(AdapterError::InvalidSpec(format!("{name} lacks {k}")));
                }
            }
            Ok(())
        };
        need(&self.train_command, "train_command", &["{train_file}", "{model_dir}"])?;
        need(
            &self.predict_command,
            "predict_command",
            &["{model_dir}", "{input_file}", "{output_file}"],
        )?;
        if self.timeout_seconds == 0 {
            return Err(AdapterError::InvalidSpec("timeout_seconds must be positive".into()));
        }
        if self.max_concurrent == 0 {
            return Err(AdapterError::InvalidSpec("max_concurrent must be positive".into()));
        }
        Ok(())
    }

    /// Same spec with a model directory private to one experiment cell.
    pub fn for_cell(&self, window_id: usize, repeat_index: usize) -> ExternalModelSpec {
        ExternalModelSpec {
            model_dir: self
                .model_dir
                .join(&self.tag)
                .join(format!("w{window_id:03}_r{repeat_index:03}")),
            ..self.clone()
        }
    }

    pub fn from_toml_str(s: &str) -> Result<Self, AdapterError> {
        let spec: ExternalModelSpec =
            toml::from_str(s).map_err(|e| AdapterError::InvalidSpec(e.to_string()))?;
        spec.validate()?;
        Ok(spec)
    }
}

/// A trained external model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelHandle {
    pub model_dir: PathBuf,
}

pub fn shell_quote(s: &str) -> String {
    format!("'{}'", s.replace('\'', r"'\''"))
}

fn flatten_line(text: &str) -> String {
    text.replace(['\t', '\r', '\n'], " ")
}

fn expand(template: &str, subs: &[(&str, String)]) -> String {
    subs.iter()
        .fold(template.to_string(), |acc, (k, v)| acc.replace(k, v))
}

struct Finished {
    status: ExitStatus,
    stdout: String,
    stderr: String,
}

enum RunOutcome {
    Done(Finished),
    TimedOut { stdout: String, stderr: String },
}

fn run_shell(command: &str, workdir: &Path, timeout: Duration) -> Result<RunOutcome, AdapterError> {
    use std::os::unix::process::CommandExt;

    let out_path = workdir.join("stdout.log");
    let err_path = workdir.join("stderr.log");
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(command)
        .stdin(Stdio::null())
        .stdout(fs::File::create(&out_path)?)
        .stderr(fs::File::create(&err_path)?)
        .process_group(0)
        .spawn()
        .map_err(|source| AdapterError::Spawn {
            command: command.to_string(),
            source,
        })?;

    let start = Instant::now();
    let status = loop {
        if let Some(status) = child.try_wait()? {
            break Some(status);
        }
        if start.elapsed() >= timeout {
            // kill the whole group so grandchildren of `sh` die too
            unsafe {
                libc::kill(-(child.id() as i32), libc::SIGKILL);
            }
            let _ = child.wait();
            break None;
        }
        std::thread::sleep(Duration::from_millis(5));
    };
    let stdout = fs::read_to_string(&out_path).unwrap_or_default();
    let stderr = fs::read_to_string(&err_path).unwrap_or_default();
    Ok(match status {
        Some(status) => RunOutcome::Done(Finished {
            status,
            stdout,
            stderr,
        }),
        None => RunOutcome::TimedOut { stdout, stderr },
    })
}

pub fn write_train_file<W: Write, S: AsRef<str>>(
    mut w: W,
    train_set: &[(S, Label)],
) -> std::io::Result<()> {
    for (text, label) in train_set {
        writeln!(w, "{}\t{}", label, flatten_line(text.as_ref()))?;
    }
    w.flush()
}

/// Parses a `label<TAB>text` training file.
pub fn read_train_file(content: &str) -> Result<Vec<(String, Label)>, AdapterError> {
    content
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let (label, text) = line.split_once('\t').ok_or(AdapterError::UnparseableRow {
                line: i + 1,
                content: line.to_string(),
            })?;
            let label = label.parse().map_err(|_| AdapterError::UnparseableRow {
                line: i + 1,
                content: line.to_string(),
            })?;
            Ok((text.to_string(), label))
        })
        .collect()
}

/// Writes the train file, runs `train_command` and checks the model dir.
/// Any previous content of `spec.model_dir` is removed first.
pub fn train_external<S: AsRef<str>>(
    spec: &ExternalModelSpec,
    train_set: &[(S, Label)],
    seed: u64,
) -> Result<ModelHandle, AdapterError> {
    spec.validate()?;
    if spec.model_dir.exists() {
        fs::remove_dir_all(&spec.model_dir)?;
    }
    fs::create_dir_all(&spec.model_dir)?;
    let work = tempfile::tempdir()?;
    let train_file = work.path().join("train.tsv");
    write_train_file(std::io::BufWriter::new(fs::File::create(&train_file)?), train_set)?;

    let command = expand(
        &spec.train_command,
        &[
            ("{train_file}", shell_quote(&train_file.to_string_lossy())),
            ("{model_dir}", shell_quote(&spec.model_dir.to_string_lossy())),
            ("{seed}", seed.to_string()),
        ],
    );
    match run_shell(&command, work.path(), Duration::from_secs(spec.timeout_seconds))? {
        RunOutcome::TimedOut { stdout, stderr } => Err(AdapterError::Timeout {
            seconds: spec.timeout_seconds,
            stdout,
            stderr,
        }),
        RunOutcome::Done(f) if !f.status.success() => Err(AdapterError::TrainFailed {
            status: f.status.to_string(),
            stdout: f.stdout,
            stderr: f.stderr,
        }),
        RunOutcome::Done(_) => {
            if fs::read_dir(&spec.model_dir)?.next().is_none() {
                return Err(AdapterError::EmptyModelDir(spec.model_dir.clone()));
            }
            Ok(ModelHandle {
                model_dir: spec.model_dir.clone(),
            })
        }
    }
}

/// Parses and validates prediction rows; see the module docs for the rules.
pub fn parse_predictions(content: &str, expected: usize) -> Result<Vec<ProbVector>, AdapterError> {
    let lines: Vec<&str> = content.lines().collect();
    let lines = match lines.last() {
        Some(l) if l.trim().is_empty() && lines.len() == expected + 1 => &lines[..expected],
        _ => &lines[..],
    };
    if lines.len() != expected {
        return Err(AdapterError::LineCountMismatch {
            expected,
            found: lines.len(),
        });
    }
    lines
        .iter()
        .enumerate()
        .map(|(i, line)| {
            let unparseable = || AdapterError::UnparseableRow {
                line: i + 1,
                content: line.to_string(),
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(unparseable());
            }
            fields[0].parse::<Label>().map_err(|_| unparseable())?;
            let mut p = [0.0; 3];
            for (slot, f) in p.iter_mut().zip(&fields[1..]) {
                *slot = f.parse::<f64>().map_err(|_| unparseable())?;
                if !slot.is_finite() || *slot < 0.0 || *slot > 1.0 {
                    return Err(AdapterError::OutOfRange {
                        line: i + 1,
                        reason: format!("probability {slot} outside [0, 1]"),
                    });
                }
            }
            let sum: f64 = p.iter().sum();
            if !(0.99..=1.01).contains(&sum) {
                return Err(AdapterError::OutOfRange {
                    line: i + 1,
                    reason: format!("probabilities sum to {sum}"),
                });
            }
            Ok(ProbVector(p.map(|x| x / sum)))
        })
        .collect()
}

/// Runs `predict_command` on `texts`; one probability row per text.
pub fn predict_external<S: AsRef<str>>(
    spec: &ExternalModelSpec,
    handle: &ModelHandle,
    texts: &[S],
) -> Result<Vec<ProbVector>, AdapterError> {
    if texts.is_empty() {
        return Ok(Vec::new());
    }
    let work = tempfile::tempdir()?;
    let input_file = work.path().join("input.txt");
    let output_file = work.path().join("output.tsv");
    {
        let mut w = std::io::BufWriter::new(fs::File::create(&input_file)?);
        for t in texts {
            writeln!(w, "{}", flatten_line(t.as_ref()))?;
        }
        w.flush()?;
    }
    let command = expand(
        &spec.predict_command,
        &[
            ("{model_dir}", shell_quote(&handle.model_dir.to_string_lossy())),
            ("{input_file}", shell_quote(&input_file.to_string_lossy())),
            ("{output_file}", shell_quote(&output_file.to_string_lossy())),
        ],
    );
    match run_shell(&command, work.path(), Duration::from_secs(spec.timeout_seconds))? {
        RunOutcome::TimedOut { stdout, stderr } => Err(AdapterError::Timeout {
            seconds: spec.timeout_seconds,
            stdout,
            stderr,
        }),
        RunOutcome::Done(f) if !f.status.success() => Err(AdapterError::PredictFailed {
            status: f.status.to_string(),
            stdout: f.stdout,
            stderr: f.stderr,
        }),
        RunOutcome::Done(_) => {
            let content = fs::read_to_string(&output_file)?;
            parse_predictions(&content, texts.len())
        }
    }
}
