//! DPLF feature files.
//!
//! Little-endian layout:
//!
//! ```text
//! "DPLF" | version u32 | flags u32 | N u64 | K u32 | d_img u32 | d_txt u32
//! N x ( mask u8 | label | d_img x f32 | d_txt x f32 )
//! ```
//!
//! `flags` bit 0 marks a multilabel file, whose labels are K bytes of 0/1;
//! multiclass labels are a u32. Mask bit 0 is the image, bit 1 the text.
//! Missing modalities are zero-filled on disk and `None` in memory.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, Label, Sample, Task};
use crate::error::{Error, Result};

pub const FEATURE_MAGIC: &[u8; 4] = b"DPLF";
pub const FEATURE_VERSION: u32 = 1;
const HEADER_LEN: usize = 32;
const FLAG_MULTILABEL: u32 = 1;
const MASK_IMAGE: u8 = 0b01;
const MASK_TEXT: u8 = 0b10;

pub fn load_features(path: &Path) -> Result<Dataset> {
    let file = fs::File::open(path).map_err(|e| Error::DataUnavailable {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    read_features(std::io::BufReader::new(file))
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> &'a [u8] {
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        out
    }

    fn u32(&mut self) -> u32 {
        u32::from_le_bytes(self.take(4).try_into().unwrap())
    }

    fn f32s(&mut self, n: usize) -> Vec<f64> {
        self.take(4 * n)
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect()
    }
}

/// Parses a whole DPLF stream. Nothing is returned unless every record
/// parses.
pub fn read_features<R: Read>(mut input: R) -> Result<Dataset> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if bytes.len() < 4 {
        return Err(Error::TruncatedFile);
    }
    if &bytes[..4] != FEATURE_MAGIC {
        return Err(Error::BadMagic { expected: "DPLF" });
    }
    if bytes.len() < HEADER_LEN {
        return Err(Error::TruncatedFile);
    }
    let mut cur = Cursor { bytes: &bytes, pos: 4 };
    let version = cur.u32();
    if version != FEATURE_VERSION {
        return Err(Error::VersionMismatch { found: version, expected: FEATURE_VERSION });
    }
    let flags = cur.u32();
    if flags & !FLAG_MULTILABEL != 0 {
        return Err(Error::InconsistentHeader(format!("unknown flag bits {flags:#x}")));
    }
    let n = u64::from_le_bytes(cur.take(8).try_into().unwrap());
    let classes = cur.u32() as usize;
    let image_dim = cur.u32() as usize;
    let text_dim = cur.u32() as usize;
    if classes == 0 {
        return Err(Error::InconsistentHeader("K = 0".into()));
    }
    let task = if flags & FLAG_MULTILABEL != 0 { Task::Multilabel } else { Task::Multiclass };
    let label_len = match task {
        Task::Multiclass => 4,
        Task::Multilabel => classes,
    };
    let record_len = 1 + label_len + 4 * (image_dim + text_dim);
    let expected = usize::try_from(n)
        .ok()
        .and_then(|n| n.checked_mul(record_len))
        .and_then(|p| p.checked_add(HEADER_LEN))
        .ok_or_else(|| Error::InconsistentHeader(format!("N = {n} overflows")))?;
    if bytes.len() < expected {
        return Err(Error::TruncatedFile);
    }
    if bytes.len() > expected {
        return Err(Error::InconsistentHeader(format!(
            "{} trailing bytes after {n} records",
            bytes.len() - expected
        )));
    }

    let mut samples = Vec::with_capacity(n as usize);
    for index in 0..n as usize {
        let mask = cur.take(1)[0];
        if mask & !(MASK_IMAGE | MASK_TEXT) != 0 || mask == 0 {
            return Err(Error::BadRecord { index, reason: format!("presence mask {mask:#04b}") });
        }
        let label = match task {
            Task::Multiclass => {
                let c = cur.u32() as usize;
                if c >= classes {
                    return Err(Error::BadRecord { index, reason: format!("label {c} >= K") });
                }
                Label::Class(c)
            }
            Task::Multilabel => {
                let raw = cur.take(classes);
                if raw.iter().any(|b| *b > 1) {
                    return Err(Error::BadRecord { index, reason: "label byte not 0/1".into() });
                }
                Label::Multi(raw.iter().map(|b| *b == 1).collect())
            }
        };
        let image = cur.f32s(image_dim);
        let text = cur.f32s(text_dim);
        samples.push(Sample {
            image: (mask & MASK_IMAGE != 0).then_some(image),
            text: (mask & MASK_TEXT != 0).then_some(text),
            label,
        });
    }
    Ok(Dataset { task, classes, image_dim, text_dim, samples })
}

/// Serializes a dataset. Features are narrowed to f32.
pub fn write_features<W: Write>(data: &Dataset, mut out: W) -> Result<()> {
    let mut buf = Vec::with_capacity(HEADER_LEN);
    buf.extend_from_slice(FEATURE_MAGIC);
    buf.extend_from_slice(&FEATURE_VERSION.to_le_bytes());
    let flags = match data.task {
        Task::Multiclass => 0,
        Task::Multilabel => FLAG_MULTILABEL,
    };
    buf.extend_from_slice(&flags.to_le_bytes());
    buf.extend_from_slice(&(data.samples.len() as u64).to_le_bytes());
    for v in [data.classes, data.image_dim, data.text_dim] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for (index, s) in data.samples.iter().enumerate() {
        let bad = |reason: String| Error::BadRecord { index, reason };
        let mask = (s.image.is_some() as u8) * MASK_IMAGE | (s.text.is_some() as u8) * MASK_TEXT;
        if mask == 0 {
            return Err(bad("no modality present".into()));
        }
        buf.push(mask);
        match (&s.label, data.task) {
            (Label::Class(c), Task::Multiclass) if *c < data.classes => {
                buf.extend_from_slice(&(*c as u32).to_le_bytes())
            }
            (Label::Multi(v), Task::Multilabel) if v.len() == data.classes => {
                buf.extend(v.iter().map(|b| *b as u8))
            }
            _ => return Err(bad("label does not match header".into())),
        }
        for (feat, dim) in [(s.image(), data.image_dim), (s.text(), data.text_dim)] {
            match feat {
                Some(f) if f.len() == dim => {
                    for x in f {
                        buf.extend_from_slice(&(*x as f32).to_le_bytes());
                    }
                }
                Some(f) => return Err(bad(format!("feature length {} != {dim}", f.len()))),
                None => buf.extend(std::iter::repeat_n(0u8, 4 * dim)),
            }
        }
    }
    out.write_all(&buf)?;
    Ok(())
}
