//! EMB1 / LAB1 binary formats.
//!
//! ```text
//! EMB1: b"EMB1" | rows: u64 LE | cols: u64 LE | rows*cols f32 LE, row-major
//! LAB1: b"LAB1" | count: u64 LE | count u32 LE
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::{EmbeddingMatrix, LabelVector};
use crate::error::{Error, Result};

pub const EMBEDDINGS_MAGIC: [u8; 4] = *b"EMB1";
pub const LABELS_MAGIC: [u8; 4] = *b"LAB1";

pub fn write_embeddings<W: Write>(m: &EmbeddingMatrix, mut w: W) -> std::io::Result<()> {
    w.write_all(&EMBEDDINGS_MAGIC)?;
    w.write_all(&(m.rows() as u64).to_le_bytes())?;
    w.write_all(&(m.cols() as u64).to_le_bytes())?;
    for v in m.data() {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

pub fn read_embeddings<R: Read>(mut r: R) -> Result<EmbeddingMatrix> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != EMBEDDINGS_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected EMB1",
            String::from_utf8_lossy(&magic)
        )));
    }
    let rows = read_u64(&mut r, "row count")?;
    let cols = read_u64(&mut r, "column count")?;
    let total = rows
        .checked_mul(cols)
        .filter(|&t| t <= (usize::MAX / 4) as u64)
        .ok_or_else(|| Error::Format(format!("implausible shape {rows}x{cols}")))?
        as usize;
    let mut bytes = Vec::new();
    r.take(total as u64 * 4)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("read error: {e}")))?;
    if bytes.len() != total * 4 {
        return Err(Error::Format(format!(
            "truncated payload: expected {} bytes, found {}",
            total * 4,
            bytes.len()
        )));
    }
    let data: Vec<f32> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    EmbeddingMatrix::new(rows as usize, cols as usize, data).map_err(|e| match e {
        Error::Validation(msg) => Error::Format(msg),
        other => other,
    })
}

pub fn write_labels<W: Write>(labels: &LabelVector, mut w: W) -> Result<()> {
    let io = |e| Error::Format(format!("write error: {e}"));
    w.write_all(&LABELS_MAGIC).map_err(io)?;
    w.write_all(&(labels.len() as u64).to_le_bytes())
        .map_err(io)?;
    for &l in labels.as_slice() {
        let l = u32::try_from(l)
            .map_err(|_| Error::Validation(format!("label {l} does not fit in u32")))?;
        w.write_all(&l.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_labels<R: Read>(mut r: R) -> Result<LabelVector> {
    let mut magic = [0u8; 4];
    read_exact(&mut r, &mut magic, "magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected LAB1",
            String::from_utf8_lossy(&magic)
        )));
    }
    let count = read_u64(&mut r, "label count")?;
    let mut bytes = Vec::new();
    r.take(count.saturating_mul(4))
        .read_to_end(&mut bytes)
        .map_err(|e| Error::Format(format!("read error: {e}")))?;
    if (bytes.len() as u64) != count.saturating_mul(4) {
        return Err(Error::Format(format!(
            "truncated payload: expected {count} labels, found {} bytes",
            bytes.len()
        )));
    }
    Ok(LabelVector::new(
        bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]) as usize)
            .collect(),
    ))
}

pub fn save_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_embeddings(m, BufWriter::new(f)).map_err(|e| Error::io(path, e))
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(f)).map_err(|e| annotate(e, path))
}

pub fn save_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = File::create(path).map_err(|e| Error::io(path, e))?;
    write_labels(labels, BufWriter::new(f))
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let f = File::open(path).map_err(|e| Error::io(path, e))?;
    read_labels(BufReader::new(f)).map_err(|e| annotate(e, path))
}

fn annotate(e: Error, path: &Path) -> Error {
    match e {
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("truncated header: missing {what}")))
}

fn read_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    let mut buf = [0u8; 8];
    read_exact(r, &mut buf, what)?;
    Ok(u64::from_le_bytes(buf))
}
