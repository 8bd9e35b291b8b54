//! Binary feature file (`SHSV`) and CSV import.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "SHSV" | version u32 | dim u32 | count u32
//! count x [ writer_id u32 | kind u8 | seq_index u32 | dim x f32 ]
//! ```

use std::path::Path;

use super::{Dataset, FeatureVector, SignatureKind, SignatureRecord};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"SHSV";
pub const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: usize = 16;

/// One record as it appears in a feature file, before dataset validation.
pub(crate) struct RawRecord {
    pub writer_id: u32,
    pub kind_code: u8,
    pub seq_index: u32,
    pub values: Vec<f32>,
}

pub(crate) fn encode(dim: usize, records: &[RawRecord]) -> Result<Vec<u8>> {
    let dim32 = u32::try_from(dim)
        .map_err(|_| Error::Data(format!("dim {dim} does not fit the u32 header field")))?;
    let count = u32::try_from(records.len()).map_err(|_| {
        Error::Data(format!(
            "record count {} does not fit the u32 header field",
            records.len()
        ))
    })?;
    let mut out = Vec::with_capacity(HEADER_LEN + records.len() * (9 + 4 * dim));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&dim32.to_le_bytes());
    out.extend_from_slice(&count.to_le_bytes());
    for r in records {
        debug_assert_eq!(r.values.len(), dim);
        out.extend_from_slice(&r.writer_id.to_le_bytes());
        out.push(r.kind_code);
        out.extend_from_slice(&r.seq_index.to_le_bytes());
        for v in &r.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.bytes.len(),
                what: format!("{what} needs {n} bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub(crate) fn decode(bytes: &[u8]) -> Result<(usize, Vec<RawRecord>)> {
    let mut c = Cursor { bytes, pos: 0 };
    let magic = c.take(4, "magic")?;
    if magic != MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(magic),
            std::str::from_utf8(MAGIC).unwrap()
        )));
    }
    let version = c.u32("version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Format(format!("unsupported format version {version}")));
    }
    let dim = c.u32("dim")? as usize;
    let count = c.u32("record count")? as usize;
    if dim == 0 && count > 0 {
        return Err(Error::Format("dim 0 with non-empty record list".into()));
    }
    let mut records = Vec::with_capacity(count.min(1 << 20));
    for n in 0..count {
        let start = c.pos;
        let writer_id = c.u32("writer_id")?;
        let kind_code = c.take(1, "kind")?[0];
        let seq_index = c.u32("seq_index")?;
        let raw = c.take(4 * dim, "feature values")?;
        let values: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Format(format!(
                "non-finite value in record {n} (offset {start}) component {k}"
            )));
        }
        records.push(RawRecord {
            writer_id,
            kind_code,
            seq_index,
            values,
        });
    }
    if c.pos != bytes.len() {
        return Err(Error::Format(format!(
            "{} trailing bytes after {count} records",
            bytes.len() - c.pos
        )));
    }
    Ok((dim, records))
}

/// Serialize a dataset to bytes. Output is deterministic for a given dataset.
pub fn write_dataset(dataset: &Dataset) -> Result<Vec<u8>> {
    let raw: Vec<RawRecord> = dataset
        .records()
        .iter()
        .map(|r| RawRecord {
            writer_id: r.writer_id,
            kind_code: r.kind.code(),
            seq_index: r.seq_index,
            values: r.features.as_slice().iter().map(|&v| v as f32).collect(),
        })
        .collect();
    encode(dataset.dim(), &raw)
}

pub fn read_dataset(bytes: &[u8]) -> Result<Dataset> {
    let (dim, raw) = decode(bytes)?;
    let records = raw
        .into_iter()
        .enumerate()
        .map(|(n, r)| {
            let kind = SignatureKind::from_code(r.kind_code)
                .ok_or_else(|| Error::Format(format!("record {n}: bad kind byte {}", r.kind_code)))?;
            Ok(SignatureRecord {
                writer_id: r.writer_id,
                kind,
                seq_index: r.seq_index,
                features: FeatureVector::new(r.values.into_iter().map(f64::from).collect())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if dim == 0 {
        return Err(Error::Format("dim 0 in header".into()));
    }
    Dataset::new(dim, records)
}

pub fn save_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = write_dataset(dataset)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_dataset(&bytes)
}

fn parse_kind(s: &str) -> Option<SignatureKind> {
    match s.trim().to_ascii_lowercase().as_str() {
        "0" | "g" | "genuine" => Some(SignatureKind::Genuine),
        "1" | "sk" | "skilled" | "skilled_forgery" => Some(SignatureKind::SkilledForgery),
        _ => None,
    }
}

/// Import `writer_id,kind,seq,f0,...,f{K-1}` CSV. `kind` accepts `0`/`1`,
/// `G`/`SK` or `genuine`/`skilled`.
pub fn import_csv(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let headers = rdr.headers().map_err(|e| csv_err(path, e))?.clone();
    let cols: Vec<&str> = headers.iter().map(str::trim).collect();
    if cols.len() < 4 || cols[0] != "writer_id" || cols[1] != "kind" || cols[2] != "seq" {
        return Err(Error::Format(format!(
            "{}: header must start with writer_id,kind,seq,f0",
            path.display()
        )));
    }
    let dim = cols.len() - 3;
    for (k, c) in cols[3..].iter().enumerate() {
        if *c != format!("f{k}") {
            return Err(Error::Format(format!(
                "{}: feature column {} named {c:?}, expected f{k}",
                path.display(),
                k + 3
            )));
        }
    }
    let mut records = Vec::new();
    for (line, row) in rdr.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let at = |what: &str| Error::Format(format!("{}: row {}: bad {what}", path.display(), line + 2));
        if row.len() != cols.len() {
            return Err(at("field count"));
        }
        let writer_id: u32 = row[0].trim().parse().map_err(|_| at("writer_id"))?;
        let kind = parse_kind(&row[1]).ok_or_else(|| at("kind"))?;
        let seq_index: u32 = row[2].trim().parse().map_err(|_| at("seq"))?;
        let values = row
            .iter()
            .skip(3)
            .map(|v| v.trim().parse::<f64>().map_err(|_| at("feature value")))
            .collect::<Result<Vec<_>>>()?;
        records.push(SignatureRecord {
            writer_id,
            kind,
            seq_index,
            features: FeatureVector::new(values)?,
        });
    }
    Dataset::new(dim, records)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}
