//! Soft-margin RBF-kernel SVM trained by sequential minimal optimization.

mod cache;
mod smo;

use std::path::Path;

use crate::dissimilarity::DissimilaritySample;
use crate::error::{check_dim, Error, Result};
use crate::featurestore::FeatureVector;
use crate::linear_sgd::Reader;

pub use cache::{CacheStats, KernelCache};
pub use smo::{dual_objective, fit_smo, kkt_audit, KktReport, SmoFit, SmoParams};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SHKM";
const CHECKPOINT_VERSION: u32 = 1;

/// Default kernel coefficient, 2^-11.
pub const DEFAULT_GAMMA: f64 = 1.0 / 2048.0;

/// `exp(-gamma * ||x1 - x2||^2)`.
pub fn rbf(x1: &FeatureVector, x2: &FeatureVector, gamma: f64) -> Result<f64> {
    check_dim(x1.dim(), x2.dim())?;
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::Config(format!("gamma must be finite and > 0, got {gamma}")));
    }
    Ok(rbf_slice(x1.as_slice(), x2.as_slice(), gamma))
}

pub(crate) fn rbf_slice(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Trained kernel machine `f(x) = sum_i alpha_i y_i k(sv_i, x) + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelModel {
    dim: usize,
    sv: Vec<f64>,
    alphas_y: Vec<f64>,
    b: f64,
    gamma: f64,
    c: f64,
}

impl KernelModel {
    pub fn new(
        dim: usize,
        support_vectors: Vec<FeatureVector>,
        alphas_y: Vec<f64>,
        b: f64,
        gamma: f64,
        c: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Data("kernel model dim must be >= 1".into()));
        }
        if support_vectors.len() != alphas_y.len() {
            return Err(Error::Data(format!(
                "{} support vectors but {} coefficients",
                support_vectors.len(),
                alphas_y.len()
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0 && c.is_finite() && c > 0.0 && b.is_finite()) {
            return Err(Error::Data("kernel model needs finite b and positive gamma and C".into()));
        }
        if alphas_y.iter().any(|a| !a.is_finite() || a.abs() > c * (1.0 + 1e-9)) {
            return Err(Error::Data("support vector coefficient outside [-C, C]".into()));
        }
        let mut sv = Vec::with_capacity(dim * support_vectors.len());
        for v in &support_vectors {
            check_dim(dim, v.dim())?;
            sv.extend_from_slice(v.as_slice());
        }
        Ok(Self {
            dim,
            sv,
            alphas_y,
            b,
            gamma,
            c,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn sv_count(&self) -> usize {
        self.alphas_y.len()
    }

    pub fn support_vector(&self, i: usize) -> &[f64] {
        &self.sv[i * self.dim..(i + 1) * self.dim]
    }

    pub fn alphas_y(&self) -> &[f64] {
        &self.alphas_y
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn decision(&self, dvec: &FeatureVector) -> Result<f64> {
        check_dim(self.dim, dvec.dim())?;
        Ok(self.score(dvec.as_slice()))
    }

    pub(crate) fn score(&self, x: &[f64]) -> f64 {
        let mut s = self.b;
        for (sv, ay) in self.sv.chunks_exact(self.dim).zip(&self.alphas_y) {
            s += ay * rbf_slice(sv, x, self.gamma);
        }
        s
    }

    /// Checkpoint bytes; support vectors are stored in single precision.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(40 + self.sv_count() * (8 + 4 * self.dim));
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.sv_count() as u32).to_le_bytes());
        for v in [self.gamma, self.c, self.b] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for (sv, ay) in self.sv.chunks_exact(self.dim).zip(&self.alphas_y) {
            out.extend_from_slice(&ay.to_le_bytes());
            for v in sv {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad kernel model magic".into()));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported kernel model version {version}")));
        }
        let dim = r.u32()? as usize;
        let count = r.u32()? as usize;
        let gamma = r.f64()?;
        let c = r.f64()?;
        let b = r.f64()?;
        let mut svs = Vec::with_capacity(count.min(1 << 20));
        let mut alphas_y = Vec::with_capacity(count.min(1 << 20));
        for _ in 0..count {
            alphas_y.push(r.f64()?);
            let v = (0..dim)
                .map(|_| r.f32().map(f64::from))
                .collect::<Result<Vec<_>>>()?;
            svs.push(FeatureVector::new(v)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in kernel model checkpoint".into()));
        }
        Self::new(dim, svs, alphas_y, b, gamma, c)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

pub(crate) fn training_matrix(data: &[DissimilaritySample]) -> Result<(usize, Vec<f64>, Vec<f64>)> {
    let first = data
        .first()
        .ok_or_else(|| Error::Data("cannot train on an empty development set".into()))?;
    let dim = first.dvec.dim();
    let mut x = Vec::with_capacity(dim * data.len());
    let mut y = Vec::with_capacity(data.len());
    for s in data {
        check_dim(dim, s.dvec.dim())?;
        x.extend_from_slice(s.dvec.as_slice());
        y.push(s.label.sign());
    }
    Ok((dim, x, y))
}
