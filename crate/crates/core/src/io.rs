//! On-disk formats.
//!
//! `EMB1` (embeddings) and `CNF1` (confidences) share one layout, all
//! integers and floats little-endian:
//!
//! ```text
//! magic   4 bytes   "EMB1" | "CNF1"
//! rows    u32       M
//! cols    u32       D (embeddings) or C (confidences)
//! values  f32 x M*cols, row-major
//! ids     u32 x M
//! ```
//!
//! Labels are CSV with header `id,label`. Anchor class sidecars are CSV
//! with header `id,class`, one row per anchor in the same order as the
//! anchor `EMB1` file.

use std::fs;
use std::path::Path;

use crate::data::{AnchorSet, ConfidenceMatrix, EmbeddingMatrix, LabelKind, LabelSet};
use crate::error::{Error, Result};

pub const EMBEDDING_MAGIC: &[u8; 4] = b"EMB1";
pub const CONFIDENCE_MAGIC: &[u8; 4] = b"CNF1";

const HEADER_LEN: u64 = 12;

pub(crate) fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|source| Error::File { path: path.to_path_buf(), source })
}

/// Raw contents of an `EMB1`/`CNF1` file before type-level validation.
struct RawMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f32>,
    ids: Vec<u32>,
}

fn encode_matrix(magic: &[u8; 4], rows: usize, cols: usize, values: &[f32], ids: &[u32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN as usize + 4 * (values.len() + ids.len()));
    out.extend_from_slice(magic);
    out.extend_from_slice(&(rows as u32).to_le_bytes());
    out.extend_from_slice(&(cols as u32).to_le_bytes());
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for id in ids {
        out.extend_from_slice(&id.to_le_bytes());
    }
    out
}

pub(crate) fn check_magic(bytes: &[u8], magic: &[u8; 4]) -> Result<()> {
    if bytes.len() < 4 {
        return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() as u64 });
    }
    if &bytes[..4] != magic {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(magic).into_owned(),
            found: String::from_utf8_lossy(&bytes[..4]).into_owned(),
        });
    }
    Ok(())
}

pub(crate) fn read_u32(bytes: &[u8], offset: usize) -> u32 {
    u32::from_le_bytes(bytes[offset..offset + 4].try_into().expect("4-byte slice"))
}

pub(crate) fn read_f32s(bytes: &[u8]) -> Vec<f32> {
    bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect()
}

/// Checks that `bytes` holds exactly `expected` bytes.
pub(crate) fn check_length(bytes: &[u8], expected: u64) -> Result<()> {
    let found = bytes.len() as u64;
    if found < expected {
        return Err(Error::Truncated { expected, found });
    }
    if found > expected {
        return Err(Error::TrailingBytes { expected, found });
    }
    Ok(())
}

fn decode_matrix(bytes: &[u8], magic: &[u8; 4]) -> Result<RawMatrix> {
    check_magic(bytes, magic)?;
    if (bytes.len() as u64) < HEADER_LEN {
        return Err(Error::Truncated { expected: HEADER_LEN, found: bytes.len() as u64 });
    }
    let rows = u64::from(read_u32(bytes, 4));
    let cols = u64::from(read_u32(bytes, 8));
    let overflow = Error::DimensionOverflow { rows, cols };
    let cells = rows.checked_mul(cols).ok_or(overflow)?;
    let payload = cells
        .checked_add(rows)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or(Error::DimensionOverflow { rows, cols })?;
    if usize::try_from(payload).is_err() {
        return Err(Error::DimensionOverflow { rows, cols });
    }
    check_length(bytes, payload)?;
    let split = HEADER_LEN as usize + 4 * cells as usize;
    let values = read_f32s(&bytes[HEADER_LEN as usize..split]);
    let ids = bytes[split..].chunks_exact(4).map(|c| read_u32(c, 0)).collect();
    Ok(RawMatrix { rows: rows as usize, cols: cols as usize, values, ids })
}

pub fn encode_embeddings(m: &EmbeddingMatrix) -> Vec<u8> {
    encode_matrix(EMBEDDING_MAGIC, m.len(), m.dim(), m.values(), m.ids())
}

pub fn decode_embeddings(bytes: &[u8]) -> Result<EmbeddingMatrix> {
    let raw = decode_matrix(bytes, EMBEDDING_MAGIC)?;
    EmbeddingMatrix::new(raw.rows, raw.cols, raw.values, raw.ids)
}

pub fn write_embeddings(m: &EmbeddingMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_embeddings(m))
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingMatrix> {
    decode_embeddings(&read_file(path.as_ref())?)
}

pub fn encode_confidences(m: &ConfidenceMatrix) -> Vec<u8> {
    encode_matrix(CONFIDENCE_MAGIC, m.len(), m.num_classes(), m.values(), m.ids())
}

pub fn decode_confidences(bytes: &[u8]) -> Result<ConfidenceMatrix> {
    let raw = decode_matrix(bytes, CONFIDENCE_MAGIC)?;
    ConfidenceMatrix::new(raw.rows, raw.cols, raw.values, raw.ids)
}

pub fn write_confidences(m: &ConfidenceMatrix, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), &encode_confidences(m))
}

pub fn read_confidences(path: impl AsRef<Path>) -> Result<ConfidenceMatrix> {
    decode_confidences(&read_file(path.as_ref())?)
}

/// Parses `id,<column>` CSV rows.
fn parse_pairs(text: &str, column: &str) -> Result<Vec<(u32, u64)>> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(text.as_bytes());
    let headers = reader.headers()?.clone();
    if headers.len() != 2 || &headers[0] != "id" || &headers[1] != column {
        return Err(Error::invalid(format!(
            "expected CSV header \"id,{column}\", found {:?}",
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<u64> {
            record[i]
                .trim()
                .parse::<u64>()
                .map_err(|_| Error::invalid(format!("line {line}: cannot parse {:?}", &record[i])))
        };
        let id = u32::try_from(field(0)?).map_err(|_| Error::invalid(format!("line {line}: id exceeds u32")))?;
        out.push((id, field(1)?));
    }
    Ok(out)
}

pub fn parse_labels(text: &str, num_classes: usize, kind: LabelKind) -> Result<LabelSet> {
    let pairs = parse_pairs(text, "label")?;
    if let Some((row, &(_, label))) = pairs.iter().enumerate().find(|(_, (_, l))| *l >= num_classes as u64) {
        return Err(Error::LabelOutOfRange { row, label, num_classes });
    }
    let (ids, labels) = pairs.into_iter().map(|(id, l)| (id, l as usize)).unzip();
    LabelSet::new(ids, labels, num_classes, kind)
}

fn format_pairs(column: &str, ids: &[u32], values: &[usize]) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    writer.write_record(["id", column])?;
    for (id, v) in ids.iter().zip(values) {
        writer.write_record([id.to_string(), v.to_string()])?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is ascii"))
}

pub fn format_labels(labels: &LabelSet) -> Result<String> {
    format_pairs("label", labels.ids(), labels.labels())
}

pub fn read_labels(path: impl AsRef<Path>, num_classes: usize, kind: LabelKind) -> Result<LabelSet> {
    let bytes = read_file(path.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|_| Error::invalid("labels file is not UTF-8"))?;
    parse_labels(&text, num_classes, kind)
}

pub fn write_labels(labels: &LabelSet, path: impl AsRef<Path>) -> Result<()> {
    write_file(path.as_ref(), format_labels(labels)?.as_bytes())
}

/// Reads an anchor `EMB1` file plus its `id,class` sidecar.
pub fn read_anchors(
    embeddings: impl AsRef<Path>,
    sidecar: impl AsRef<Path>,
    num_classes: usize,
) -> Result<AnchorSet> {
    let emb = read_embeddings(embeddings)?;
    let bytes = read_file(sidecar.as_ref())?;
    let text = String::from_utf8(bytes).map_err(|_| Error::invalid("anchor sidecar is not UTF-8"))?;
    let pairs = parse_pairs(&text, "class")?;
    if pairs.len() != emb.len() {
        return Err(Error::CardinalityMismatch {
            what: "anchor sidecar rows vs anchor embeddings",
            left: pairs.len(),
            right: emb.len(),
        });
    }
    let mut classes = Vec::with_capacity(pairs.len());
    for (row, (&(id, class), &emb_id)) in pairs.iter().zip(emb.ids()).enumerate() {
        if id != emb_id {
            return Err(Error::IdMismatch { row, left: emb_id, right: id });
        }
        if class >= num_classes as u64 {
            return Err(Error::LabelOutOfRange { row, label: class, num_classes });
        }
        classes.push(class as usize);
    }
    AnchorSet::new(emb, classes, num_classes)
}

pub fn write_anchors(anchors: &AnchorSet, embeddings: impl AsRef<Path>, sidecar: impl AsRef<Path>) -> Result<()> {
    write_embeddings(anchors.embeddings(), embeddings)?;
    let text = format_pairs("class", anchors.embeddings().ids(), anchors.classes())?;
    write_file(sidecar.as_ref(), text.as_bytes())
}
