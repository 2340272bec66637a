//! The built-in bag-of-words classifier behind the external-model command
//! protocol, for checking the adapter against in-process runs.
//!
//! ```text
//! train_command   = "bow-external train --train-file {train_file} --model-dir {model_dir} --seed {seed}"
//! predict_command = "bow-external predict --model-dir {model_dir} --input-file {input_file} --output-file {output_file}"
//! ```

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use driftscope_core::adapter::read_train_file;
use driftscope_core::bow::{self, ClassifierConfig};

const MODEL_FILE: &str = "model.bin";

#[derive(Debug, Parser)]
#[command(name = "bow-external", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Subcommand)]
enum Cmd {
    Train {
        #[arg(long)]
        train_file: PathBuf,
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr0: Option<f64>,
        #[arg(long)]
        word_ngrams: Option<usize>,
        #[arg(long)]
        bucket_count: Option<u64>,
        #[arg(long)]
        min_token_count: Option<usize>,
    },
    Predict {
        #[arg(long)]
        model_dir: PathBuf,
        #[arg(long)]
        input_file: PathBuf,
        #[arg(long)]
        output_file: PathBuf,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Cmd::Train {
            train_file,
            model_dir,
            seed,
            dim,
            epochs,
            lr0,
            word_ngrams,
            bucket_count,
            min_token_count,
        } => {
            let d = ClassifierConfig::default();
            let config = ClassifierConfig {
                dim: dim.unwrap_or(d.dim),
                epochs: epochs.unwrap_or(d.epochs),
                lr0: lr0.unwrap_or(d.lr0),
                word_ngrams: word_ngrams.unwrap_or(d.word_ngrams),
                bucket_count: bucket_count.unwrap_or(d.bucket_count),
                min_token_count: min_token_count.unwrap_or(d.min_token_count),
                seed,
            };
            let content = fs::read_to_string(&train_file)
                .with_context(|| format!("reading {}", train_file.display()))?;
            let examples = read_train_file(&content)?;
            let (model, _) = bow::train_texts(&examples, &config)?;
            fs::create_dir_all(&model_dir)?;
            bow::save(&model, &model_dir.join(MODEL_FILE))?;
        }
        Cmd::Predict {
            model_dir,
            input_file,
            output_file,
        } => {
            let model = bow::load(&model_dir.join(MODEL_FILE))?;
            let input = BufReader::new(
                fs::File::open(&input_file)
                    .with_context(|| format!("opening {}", input_file.display()))?,
            );
            let mut out = BufWriter::new(fs::File::create(&output_file)?);
            for line in input.lines() {
                let p = model.predict(&line?);
                writeln!(out, "{}\t{}\t{}\t{}", p.argmax(), p.0[0], p.0[1], p.0[2])?;
            }
            out.flush()?;
        }
    }
    Ok(())
}
