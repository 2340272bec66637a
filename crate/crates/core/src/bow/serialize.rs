//! Binary model container.
//!
//! All integers and reals are little-endian.
//!
//! ```text
//! magic            8 bytes  "DSBOWMDL"
//! version          u32      1
//! real_width       u32      4 or 8 (bytes per stored real)
//! dim              u32
//! epochs           u32
//! lr0              f64
//! word_ngrams      u32
//! bucket_count     u64
//! min_token_count  u32
//! seed             u64
//! preprocessing    u32 length + UTF-8 bytes
//! vocab_len        u64
//! vocab            vocab_len x (u32 length + UTF-8 bytes), row order
//! word rows        vocab_len x dim reals
//! n_buckets        u64
//! buckets          n_buckets x (u64 bucket index, dim reals), ascending
//! output rows      3 x dim reals, class order negative/neutral/positive
//! ```
//!
//! Writers emit `real_width = 8` so a saved model predicts exactly like the
//! in-memory one; readers accept both widths.

use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};

use byteorder::{LittleEndian as LE, ReadBytesExt, WriteBytesExt};

use super::model::{ClassifierConfig, Model, N_CLASSES};
use super::BowError;

pub const MAGIC: &[u8; 8] = b"DSBOWMDL";
pub const VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LE>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> Result<String, BowError> {
    let len = r.read_u32::<LE>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| BowError::Format("string is not UTF-8".into()))
}

fn read_reals<R: Read>(r: &mut R, width: u32, n: usize) -> Result<Vec<f64>, BowError> {
    (0..n)
        .map(|_| {
            Ok(match width {
                4 => f64::from(r.read_f32::<LE>()?),
                _ => r.read_f64::<LE>()?,
            })
        })
        .collect()
}

fn write_reals<W: Write>(w: &mut W, xs: &[f64]) -> std::io::Result<()> {
    xs.iter().try_for_each(|&x| w.write_f64::<LE>(x))
}

pub fn write_model<W: Write>(mut w: W, model: &Model) -> Result<(), BowError> {
    let c = &model.config;
    w.write_all(MAGIC)?;
    w.write_u32::<LE>(VERSION)?;
    w.write_u32::<LE>(8)?;
    w.write_u32::<LE>(c.dim as u32)?;
    w.write_u32::<LE>(c.epochs as u32)?;
    w.write_f64::<LE>(c.lr0)?;
    w.write_u32::<LE>(c.word_ngrams as u32)?;
    w.write_u64::<LE>(c.bucket_count)?;
    w.write_u32::<LE>(c.min_token_count as u32)?;
    w.write_u64::<LE>(c.seed)?;
    write_str(&mut w, &model.preprocessing)?;
    w.write_u64::<LE>(model.words.len() as u64)?;
    for word in &model.words {
        write_str(&mut w, word)?;
    }
    write_reals(&mut w, &model.input)?;
    w.write_u64::<LE>(model.buckets.len() as u64)?;
    for (b, row) in &model.buckets {
        w.write_u64::<LE>(*b)?;
        write_reals(&mut w, row)?;
    }
    write_reals(&mut w, &model.output)?;
    w.flush()?;
    Ok(())
}

pub fn read_model<R: Read>(mut r: R) -> Result<Model, BowError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(BowError::Format("bad magic header".into()));
    }
    let version = r.read_u32::<LE>()?;
    if version != VERSION {
        return Err(BowError::Format(format!("unsupported version {version}")));
    }
    let width = r.read_u32::<LE>()?;
    if width != 4 && width != 8 {
        return Err(BowError::Format(format!("unsupported real width {width}")));
    }
    let config = ClassifierConfig {
        dim: r.read_u32::<LE>()? as usize,
        epochs: r.read_u32::<LE>()? as usize,
        lr0: r.read_f64::<LE>()?,
        word_ngrams: r.read_u32::<LE>()? as usize,
        bucket_count: r.read_u64::<LE>()?,
        min_token_count: r.read_u32::<LE>()? as usize,
        seed: r.read_u64::<LE>()?,
    };
    config.validate()?;
    let dim = config.dim;
    let preprocessing = read_str(&mut r)?;
    let vocab_len = r.read_u64::<LE>()? as usize;
    let words = (0..vocab_len)
        .map(|_| read_str(&mut r))
        .collect::<Result<Vec<_>, _>>()?;
    let input = read_reals(&mut r, width, vocab_len * dim)?;
    let n_buckets = r.read_u64::<LE>()? as usize;
    let mut buckets = BTreeMap::new();
    for _ in 0..n_buckets {
        let b = r.read_u64::<LE>()?;
        buckets.insert(b, read_reals(&mut r, width, dim)?);
    }
    let output = read_reals(&mut r, width, N_CLASSES * dim)?;
    let word_index: HashMap<String, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.clone(), i))
        .collect();
    if word_index.len() != words.len() {
        return Err(BowError::Format("duplicate vocabulary entry".into()));
    }
    Ok(Model {
        config,
        preprocessing,
        words,
        word_index,
        input,
        buckets,
        output,
    })
}

pub fn save(model: &Model, path: &std::path::Path) -> Result<(), BowError> {
    let f = std::fs::File::create(path)?;
    write_model(std::io::BufWriter::new(f), model)
}

pub fn load(path: &std::path::Path) -> Result<Model, BowError> {
    let f = std::fs::File::open(path)?;
    read_model(std::io::BufReader::new(f))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bow::{text::preprocess, train::train};
    use crate::label::Label;

    #[test]
    fn round_trip_is_exact() {
        let cfg = ClassifierConfig {
            epochs: 5,
            word_ngrams: 2,
            bucket_count: 97,
            seed: 3,
            ..Default::default()
        };
        let data = vec![
            (preprocess("good day sunshine"), Label::Positive),
            (preprocess("bad day rain"), Label::Negative),
            (preprocess("a day"), Label::Neutral),
        ];
        let (model, _) = train(&data, &cfg).unwrap();
        let mut buf = Vec::new();
        write_model(&mut buf, &model).unwrap();
        assert_eq!(&buf[..8], MAGIC);
        let back = read_model(buf.as_slice()).unwrap();
        assert_eq!(back, model);
    }

    #[test]
    fn rejects_garbage() {
        assert!(read_model(&b"NOTAMODEL..........."[..]).is_err());
        assert!(read_model(&MAGIC[..]).is_err());
    }
}
