//! Linear soft-margin classifier trained by SGD on the primal hinge
//! objective `(C/2)||w||^2 + (1/N) sum max(0, 1 - y (w.x + b))`.

use std::path::Path;

use crate::dissimilarity::DissimilaritySample;
use crate::error::{check_dim, Error, Result};
use crate::featurestore::FeatureVector;
use crate::rng::{derive, tag, SplitMix64};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"SHWM";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SgdParams {
    /// Regularization constant `C`.
    pub c: f64,
    pub lr0: f64,
    pub lr_t0: f64,
}

impl SgdParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("lr0", self.lr0), ("lr_t0", self.lr_t0)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("SGD {name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Sample order for one SGD pass.
pub enum SampleOrder<'a> {
    AsGiven,
    Shuffled(&'a mut SplitMix64),
}

/// Linear decision function `w.x + b`, positive class `+1`.
///
/// An optional input center `c` changes how the bias is stepped: updates are
/// taken in the coordinates `(w, b + w.c)`, i.e. on centered inputs, while
/// the stored `(w, b)` always score uncentered inputs. The objective being
/// minimized is the same; only the conditioning of the bias direction
/// changes.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    w: Vec<f64>,
    b: f64,
    step_count: u64,
    params: SgdParams,
    center: Option<Vec<f64>>,
}

impl LinearModel {
    /// Zero-initialized model.
    pub fn new(dim: usize, params: SgdParams) -> Result<Self> {
        params.validate()?;
        if dim == 0 {
            return Err(Error::Config("model dim must be >= 1".into()));
        }
        Ok(Self {
            w: vec![0.0; dim],
            b: 0.0,
            step_count: 0,
            params,
            center: None,
        })
    }

    pub fn from_parts(w: Vec<f64>, b: f64, step_count: u64, params: SgdParams) -> Result<Self> {
        params.validate()?;
        if w.is_empty() || !w.iter().all(|v| v.is_finite()) || !b.is_finite() {
            return Err(Error::Data("model parameters must be finite and non-empty".into()));
        }
        Ok(Self {
            w,
            b,
            step_count,
            params,
            center: None,
        })
    }

    pub fn with_center(mut self, center: Vec<f64>) -> Result<Self> {
        check_dim(self.w.len(), center.len())?;
        if !center.iter().all(|v| v.is_finite()) {
            return Err(Error::Data("model center must be finite".into()));
        }
        self.center = Some(center);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.w.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.w
    }

    pub fn bias(&self) -> f64 {
        self.b
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn params(&self) -> SgdParams {
        self.params
    }

    pub fn center(&self) -> Option<&[f64]> {
        self.center.as_deref()
    }

    pub fn decision(&self, dvec: &FeatureVector) -> Result<f64> {
        check_dim(self.dim(), dvec.dim())?;
        Ok(self.score(dvec.as_slice()))
    }

    pub(crate) fn score(&self, x: &[f64]) -> f64 {
        dot(&self.w, x) + self.b
    }

    /// Learning rate used by step `t`.
    pub fn learning_rate(&self, t: u64) -> f64 {
        self.params.lr0 / (1.0 + t as f64 / self.params.lr_t0)
    }

    fn check_batch(&self, batch: &[DissimilaritySample]) -> Result<()> {
        for s in batch {
            check_dim(self.dim(), s.dvec.dim())?;
        }
        Ok(())
    }

    /// Regularized mean hinge loss over `batch`.
    pub fn objective(&self, batch: &[DissimilaritySample]) -> Result<f64> {
        if batch.is_empty() {
            return Err(Error::Data("objective of an empty batch".into()));
        }
        self.check_batch(batch)?;
        let hinge: f64 = batch
            .iter()
            .map(|s| (1.0 - s.label.sign() * self.score(s.dvec.as_slice())).max(0.0))
            .sum();
        Ok(0.5 * self.params.c * dot(&self.w, &self.w) + hinge / batch.len() as f64)
    }

    /// Subgradient of [`objective`](Self::objective) with respect to `(w, b)`.
    pub fn subgradient(&self, batch: &[DissimilaritySample]) -> Result<(Vec<f64>, f64)> {
        if batch.is_empty() {
            return Err(Error::Data("subgradient of an empty batch".into()));
        }
        self.check_batch(batch)?;
        let n = batch.len() as f64;
        let mut gw: Vec<f64> = self.w.iter().map(|w| self.params.c * w).collect();
        let mut gb = 0.0;
        for s in batch {
            let y = s.label.sign();
            if y * self.score(s.dvec.as_slice()) < 1.0 {
                for (g, x) in gw.iter_mut().zip(s.dvec.as_slice()) {
                    *g -= y * x / n;
                }
                gb -= y / n;
            }
        }
        Ok((gw, gb))
    }

    fn step(&mut self, x: &[f64], y: f64) {
        let eta = self.learning_rate(self.step_count);
        let c = self.params.c;
        let violated = y * self.score(x) < 1.0;
        match &self.center {
            None => {
                if violated {
                    for (w, xi) in self.w.iter_mut().zip(x) {
                        *w -= eta * (c * *w - y * xi);
                    }
                    self.b += eta * y;
                } else {
                    for w in self.w.iter_mut() {
                        *w -= eta * (c * *w);
                    }
                }
            }
            Some(center) => {
                let b_centered = self.b + dot(&self.w, center);
                if violated {
                    for ((w, xi), ci) in self.w.iter_mut().zip(x).zip(center) {
                        *w -= eta * (c * *w - y * (xi - ci));
                    }
                    self.b = b_centered + eta * y - dot(&self.w, center);
                } else {
                    for w in self.w.iter_mut() {
                        *w -= eta * (c * *w);
                    }
                    self.b = b_centered - dot(&self.w, center);
                }
            }
        }
        self.step_count += 1;
    }

    /// One SGD pass over `batch`, continuing the step counter. On a
    /// non-finite update the model is left unchanged and an error returned.
    pub fn partial_fit(&mut self, batch: &[DissimilaritySample], order: SampleOrder<'_>) -> Result<()> {
        self.check_batch(batch)?;
        if batch.is_empty() {
            return Ok(());
        }
        let mut idx: Vec<usize> = (0..batch.len()).collect();
        if let SampleOrder::Shuffled(rng) = order {
            rng.shuffle(&mut idx);
        }
        let snapshot = (self.w.clone(), self.b, self.step_count);
        for i in idx {
            let s = &batch[i];
            self.step(s.dvec.as_slice(), s.label.sign());
        }
        if !(self.b.is_finite() && self.w.iter().all(|v| v.is_finite())) {
            let at = self.step_count;
            (self.w, self.b, self.step_count) = snapshot;
            return Err(Error::Numerical(format!(
                "non-finite SGD update before step {at} (lr0 {}, C {}); lower the learning rate",
                self.params.lr0, self.params.c
            )));
        }
        Ok(())
    }

    /// `epochs` shuffled passes over `data`.
    pub fn fit_batch(&mut self, data: &[DissimilaritySample], epochs: usize, seed: u64) -> Result<()> {
        if data.is_empty() {
            return Err(Error::Data("cannot fit on an empty development set".into()));
        }
        let mut rng = SplitMix64::new(derive(seed, &[tag::SGD]));
        for _ in 0..epochs {
            self.partial_fit(data, SampleOrder::Shuffled(&mut rng))?;
        }
        Ok(())
    }

    /// Checkpoint bytes. Version 1 is the plain model; version 2 appends the
    /// input center as `dim` f64 values.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(56 + 16 * self.dim());
        out.extend_from_slice(CHECKPOINT_MAGIC);
        let version: u32 = if self.center.is_some() { 2 } else { 1 };
        out.extend_from_slice(&version.to_le_bytes());
        out.extend_from_slice(&(self.dim() as u32).to_le_bytes());
        out.extend_from_slice(&self.step_count.to_le_bytes());
        for v in [self.params.c, self.params.lr0, self.params.lr_t0, self.b] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in self.w.iter().chain(self.center.iter().flatten()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::Format("bad linear model magic".into()));
        }
        let version = r.u32()?;
        if version != 1 && version != 2 {
            return Err(Error::Format(format!("unsupported linear model version {version}")));
        }
        let dim = r.u32()? as usize;
        let step_count = r.u64()?;
        let params = SgdParams {
            c: r.f64()?,
            lr0: r.f64()?,
            lr_t0: r.f64()?,
        };
        let b = r.f64()?;
        let w = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let mut model = Self::from_parts(w, b, step_count, params)?;
        if version == 2 {
            let center = (0..dim).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
            model = model.with_center(center)?;
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes in linear model checkpoint".into()));
        }
        Ok(model)
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

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl<'a> Reader<'a> {
    pub fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Truncated {
                offset: self.bytes.len(),
                what: format!("checkpoint needs {n} more bytes at offset {}", self.pos),
            });
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}
