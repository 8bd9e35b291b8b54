//! Signature feature data: vectors, records, datasets, persistence,
//! user splits and the synthetic embedding generator.

mod io;
mod split;
mod synth;

use std::collections::{BTreeMap, HashSet};

use crate::error::{Error, Result};

pub(crate) use io::{decode as decode_raw, encode as encode_raw, RawRecord};
pub use io::{import_csv, load_dataset, read_dataset, save_dataset, write_dataset, FORMAT_VERSION, MAGIC};
pub use split::{split_users, SelectionOrder, SplitConfig, UserSplit};
pub use synth::{generate_synthetic, SynthConfig};

/// A K-dimensional real embedding. Values are always finite.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Data("feature vector must have dim >= 1".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!(
                "non-finite feature value {} at index {i}",
                values[i]
            )));
        }
        Ok(Self(values))
    }

    pub fn zeros(dim: usize) -> Self {
        assert!(dim > 0);
        Self(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Round every component to single precision, the storage precision of
    /// the feature file format.
    pub(crate) fn quantize_f32(&mut self) {
        for v in &mut self.0 {
            *v = *v as f32 as f64;
        }
    }
}

impl AsRef<[f64]> for FeatureVector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// Stored signature kinds. Random forgeries are genuine records of another
/// writer and are chosen at pairing time, so they have no stored kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SignatureKind {
    Genuine,
    SkilledForgery,
}

impl SignatureKind {
    pub fn code(self) -> u8 {
        match self {
            SignatureKind::Genuine => 0,
            SignatureKind::SkilledForgery => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SignatureKind::Genuine),
            1 => Some(SignatureKind::SkilledForgery),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignatureRecord {
    pub writer_id: u32,
    pub kind: SignatureKind,
    pub seq_index: u32,
    pub features: FeatureVector,
}

/// Record indices of one writer, each list sorted by `seq_index`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct WriterRecords {
    pub genuine: Vec<usize>,
    pub skilled: Vec<usize>,
}

/// An immutable collection of signature records sharing one dimension.
#[derive(Debug, Clone)]
pub struct Dataset {
    records: Vec<SignatureRecord>,
    dim: usize,
    writer_index: BTreeMap<u32, WriterRecords>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.dim == other.dim && self.records == other.records
    }
}

impl Dataset {
    /// Build a dataset, quantizing features to single precision.
    ///
    /// Fails on dimension mismatches, duplicate `(writer, kind, seq)` keys and
    /// writers without any genuine signature.
    pub fn new(dim: usize, mut records: Vec<SignatureRecord>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("dataset dim must be >= 1".into()));
        }
        let mut seen = HashSet::with_capacity(records.len());
        let mut writer_index: BTreeMap<u32, WriterRecords> = BTreeMap::new();
        for (i, r) in records.iter_mut().enumerate() {
            if r.features.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: r.features.dim(),
                });
            }
            if !seen.insert((r.writer_id, r.kind, r.seq_index)) {
                return Err(Error::Data(format!(
                    "duplicate record (writer {}, {:?}, seq {})",
                    r.writer_id, r.kind, r.seq_index
                )));
            }
            r.features.quantize_f32();
            let entry = writer_index.entry(r.writer_id).or_default();
            match r.kind {
                SignatureKind::Genuine => entry.genuine.push(i),
                SignatureKind::SkilledForgery => entry.skilled.push(i),
            }
        }
        for (writer, entry) in writer_index.iter_mut() {
            if entry.genuine.is_empty() {
                return Err(Error::Data(format!(
                    "writer {writer} has no genuine signatures"
                )));
            }
            entry.genuine.sort_by_key(|&i| records[i].seq_index);
            entry.skilled.sort_by_key(|&i| records[i].seq_index);
        }
        Ok(Self {
            records,
            dim,
            writer_index,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn records(&self) -> &[SignatureRecord] {
        &self.records
    }

    pub fn record(&self, index: usize) -> &SignatureRecord {
        &self.records[index]
    }

    pub fn writer_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.writer_index.keys().copied()
    }

    pub fn writer_count(&self) -> usize {
        self.writer_index.len()
    }

    pub fn writer(&self, writer_id: u32) -> Option<&WriterRecords> {
        self.writer_index.get(&writer_id)
    }

    pub(crate) fn writer_or_err(&self, writer_id: u32) -> Result<&WriterRecords> {
        self.writer(writer_id)
            .ok_or_else(|| Error::Data(format!("writer {writer_id} not in dataset")))
    }
}
