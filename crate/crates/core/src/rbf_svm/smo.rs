use rayon::prelude::*;

use super::{rbf_slice, training_matrix, CacheStats, KernelCache, KernelModel, DEFAULT_GAMMA};
use crate::dissimilarity::DissimilaritySample;
use crate::error::{Error, Result};
use crate::rng::{derive, tag, SplitMix64};

const PARALLEL_ROW_WORK: usize = 1 << 16;

#[derive(Debug, Clone, PartialEq)]
pub struct SmoParams {
    pub c: f64,
    pub gamma: f64,
    pub tol: f64,
    /// Outer-loop pass limit; `None` means `10 * N`.
    pub max_passes: Option<usize>,
    pub cache_bytes: usize,
    /// Record the dual objective after every accepted pair update.
    pub record_dual: bool,
}

impl Default for SmoParams {
    fn default() -> Self {
        Self {
            c: 1.0,
            gamma: DEFAULT_GAMMA,
            tol: 1e-3,
            max_passes: None,
            cache_bytes: 256 << 20,
            record_dual: false,
        }
    }
}

impl SmoParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("C", self.c), ("gamma", self.gamma), ("tol", self.tol)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("SVM {name} must be finite and > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SmoFit {
    pub model: KernelModel,
    /// Dual variables for every training sample, in input order.
    pub alphas: Vec<f64>,
    /// False when the pass limit was reached before the KKT conditions held.
    pub converged: bool,
    pub passes: usize,
    pub pair_updates: usize,
    pub dual_objective: f64,
    pub dual_trace: Vec<f64>,
    pub cache: CacheStats,
}

struct Solver<'a> {
    dim: usize,
    x: &'a [f64],
    y: &'a [f64],
    c: f64,
    gamma: f64,
    tol: f64,
    alpha: Vec<f64>,
    /// `sum_j alpha_j y_j k(x_j, x_i)`, without the bias.
    f: Vec<f64>,
    b: f64,
    cache: KernelCache,
    rng: SplitMix64,
    record_dual: bool,
    trace: Vec<f64>,
    updates: usize,
}

impl Solver<'_> {
    fn n(&self) -> usize {
        self.y.len()
    }

    fn point(&self, i: usize) -> &[f64] {
        &self.x[i * self.dim..(i + 1) * self.dim]
    }

    fn kernel(&self, i: usize, j: usize) -> f64 {
        if i == j {
            1.0
        } else {
            rbf_slice(self.point(i), self.point(j), self.gamma)
        }
    }

    fn row(&mut self, i: usize) -> std::sync::Arc<[f64]> {
        let (x, dim, gamma, n) = (self.x, self.dim, self.gamma, self.y.len());
        self.cache.get_or_insert_with(i, || {
            let xi = &x[i * dim..(i + 1) * dim];
            let k = |j: usize| {
                if j == i {
                    1.0
                } else {
                    rbf_slice(xi, &x[j * dim..(j + 1) * dim], gamma)
                }
            };
            if n * dim >= PARALLEL_ROW_WORK {
                (0..n).into_par_iter().map(k).collect()
            } else {
                (0..n).map(k).collect()
            }
        })
    }

    fn error(&self, i: usize) -> f64 {
        self.f[i] + self.b - self.y[i]
    }

    fn non_bound(&self, i: usize) -> bool {
        self.alpha[i] > 0.0 && self.alpha[i] < self.c
    }

    fn dual(&self) -> f64 {
        self.alpha
            .iter()
            .zip(self.y)
            .zip(&self.f)
            .map(|((a, y), f)| a - 0.5 * a * y * f)
            .sum()
    }

    fn take_step(&mut self, i1: usize, i2: usize) -> bool {
        if i1 == i2 {
            return false;
        }
        let (a1, a2) = (self.alpha[i1], self.alpha[i2]);
        let (y1, y2) = (self.y[i1], self.y[i2]);
        let (e1, e2) = (self.error(i1), self.error(i2));
        let s = y1 * y2;
        let c = self.c;
        let (lo, hi) = if y1 != y2 {
            ((a2 - a1).max(0.0), (c + a2 - a1).min(c))
        } else {
            ((a1 + a2 - c).max(0.0), (a1 + a2).min(c))
        };
        if hi - lo <= 1e-12 * c {
            return false;
        }
        let k12 = self.kernel(i1, i2);
        let eta = 2.0 - 2.0 * k12;
        let mut a2n = if eta > 1e-12 {
            (a2 + y2 * (e1 - e2) / eta).clamp(lo, hi)
        } else {
            // Degenerate direction: compare the dual objective at both ends.
            let v1 = self.f[i1] - y1 * a1 - y2 * a2 * k12;
            let v2 = self.f[i2] - y1 * a1 * k12 - y2 * a2;
            let at = |a2x: f64| {
                let a1x = a1 + s * (a2 - a2x);
                a1x + a2x
                    - 0.5 * (a1x * a1x + a2x * a2x + 2.0 * s * k12 * a1x * a2x)
                    - y1 * a1x * v1
                    - y2 * a2x * v2
            };
            let (lobj, hobj) = (at(lo), at(hi));
            if lobj > hobj + 1e-12 {
                lo
            } else if hobj > lobj + 1e-12 {
                hi
            } else {
                a2
            }
        };
        if a2n < 1e-12 * c {
            a2n = 0.0;
        } else if a2n > c * (1.0 - 1e-12) {
            a2n = c;
        }
        if (a2n - a2).abs() < 1e-12 * (a2n + a2 + 1e-12) {
            return false;
        }
        let mut a1n = a1 + s * (a2 - a2n);
        if a1n < 1e-12 * c {
            a1n = 0.0;
        } else if a1n > c * (1.0 - 1e-12) {
            a1n = c;
        }
        let (d1, d2) = (y1 * (a1n - a1), y2 * (a2n - a2));
        let b1 = self.b - e1 - d1 - d2 * k12;
        let b2 = self.b - e2 - d1 * k12 - d2;
        self.alpha[i1] = a1n;
        self.alpha[i2] = a2n;
        self.b = if self.non_bound(i1) {
            b1
        } else if self.non_bound(i2) {
            b2
        } else {
            0.5 * (b1 + b2)
        };
        let r1 = self.row(i1);
        let r2 = self.row(i2);
        for ((f, k1), k2) in self.f.iter_mut().zip(r1.iter()).zip(r2.iter()) {
            *f += d1 * k1 + d2 * k2;
        }
        self.updates += 1;
        if self.record_dual {
            self.trace.push(self.dual());
        }
        true
    }

    /// Bias from the final multipliers that minimizes the largest KKT
    /// violation. Sample `i` asks for `b >= y_i - f_i` (at 0 when positive,
    /// at C when negative), `b <= y_i - f_i` (the other two cases) or both
    /// (free); the answer is the middle of the tightest bounds.
    fn final_bias(&self) -> f64 {
        let (mut lo, mut hi) = (f64::NEG_INFINITY, f64::INFINITY);
        for i in 0..self.n() {
            let v = self.y[i] - self.f[i];
            let free = self.non_bound(i);
            let lower = (self.y[i] > 0.0) == (self.alpha[i] <= 0.0);
            if free || lower {
                lo = lo.max(v);
            }
            if free || !lower {
                hi = hi.min(v);
            }
        }
        match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo,
            (false, true) => hi,
            (false, false) => self.b,
        }
    }

    fn violates(&self, i: usize) -> bool {
        let r = self.error(i) * self.y[i];
        (r < -self.tol && self.alpha[i] < self.c) || (r > self.tol && self.alpha[i] > 0.0)
    }

    fn examine(&mut self, i2: usize) -> bool {
        if !self.violates(i2) {
            return false;
        }
        let n = self.n();
        let e2 = self.error(i2);
        let mut best = None;
        let mut best_gap = -1.0;
        let mut non_bound = 0usize;
        for i in 0..n {
            if self.non_bound(i) {
                non_bound += 1;
                let gap = (self.error(i) - e2).abs();
                if gap > best_gap {
                    best_gap = gap;
                    best = Some(i);
                }
            }
        }
        if non_bound > 1 {
            if let Some(i1) = best {
                if self.take_step(i1, i2) {
                    return true;
                }
            }
        }
        let start = self.rng.below(n);
        for k in 0..n {
            let i1 = (start + k) % n;
            if self.non_bound(i1) && self.take_step(i1, i2) {
                return true;
            }
        }
        let start = self.rng.below(n);
        for k in 0..n {
            let i1 = (start + k) % n;
            if self.take_step(i1, i2) {
                return true;
            }
        }
        false
    }
}

/// Train with SMO: a full pass over all samples alternates with passes over
/// the non-bound samples; each violating sample is paired with the partner
/// maximizing `|E_i - E_j|`, falling back to scans from a seeded offset.
///
/// Both classes must be present. When the pass limit is hit, the current
/// model is returned with `converged == false`.
pub fn fit_smo(data: &[DissimilaritySample], params: &SmoParams, seed: u64) -> Result<SmoFit> {
    params.validate()?;
    let (dim, x, y) = training_matrix(data)?;
    let n = y.len();
    if !(y.iter().any(|&v| v > 0.0) && y.iter().any(|&v| v < 0.0)) {
        return Err(Error::Data("SVM training needs both classes".into()));
    }
    let max_passes = params.max_passes.unwrap_or(10 * n).max(1);
    let mut s = Solver {
        dim,
        x: &x,
        y: &y,
        c: params.c,
        gamma: params.gamma,
        tol: params.tol,
        alpha: vec![0.0; n],
        f: vec![0.0; n],
        b: 0.0,
        cache: KernelCache::new(params.cache_bytes, n),
        rng: SplitMix64::new(derive(seed, &[tag::SMO])),
        record_dual: params.record_dual,
        trace: Vec::new(),
        updates: 0,
    };

    let mut passes = 0;
    let mut examine_all = true;
    let mut changed = 0usize;
    while (changed > 0 || examine_all) && passes < max_passes {
        changed = 0;
        for i in 0..n {
            if (examine_all || s.non_bound(i)) && s.examine(i) {
                changed += 1;
            }
        }
        if examine_all {
            examine_all = false;
        } else if changed == 0 {
            examine_all = true;
        }
        passes += 1;
    }
    let converged = !(changed > 0 || examine_all);
    s.b = s.final_bias();
    if !s.b.is_finite() || s.f.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("SMO produced non-finite values".into()));
    }

    let dual_objective = s.dual();
    let mut svs = Vec::new();
    let mut coef = Vec::new();
    for i in 0..n {
        if s.alpha[i] > 0.0 {
            svs.push(data[i].dvec.clone());
            coef.push(s.alpha[i] * y[i]);
        }
    }
    let model = KernelModel::new(dim, svs, coef, s.b, params.gamma, params.c)?;
    Ok(SmoFit {
        model,
        alphas: s.alpha,
        converged,
        passes,
        pair_updates: s.updates,
        dual_objective,
        dual_trace: s.trace,
        cache: s.cache.stats(),
    })
}

/// Dual objective `sum a - 1/2 sum_ij a_i a_j y_i y_j k(x_i, x_j)`, computed
/// directly in `O(N^2)`.
pub fn dual_objective(data: &[DissimilaritySample], alphas: &[f64], gamma: f64) -> f64 {
    let mut quad = 0.0;
    for (i, si) in data.iter().enumerate() {
        for (j, sj) in data.iter().enumerate() {
            quad += alphas[i]
                * alphas[j]
                * si.label.sign()
                * sj.label.sign()
                * rbf_slice(si.dvec.as_slice(), sj.dvec.as_slice(), gamma);
        }
    }
    alphas.iter().sum::<f64>() - 0.5 * quad
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktReport {
    pub violations: usize,
    /// Largest violation margin over all samples.
    pub max_violation: f64,
    /// `|sum_i alpha_i y_i|`.
    pub equality_residual: f64,
    pub box_ok: bool,
}

impl KktReport {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.box_ok && self.equality_residual <= 1e-8
    }
}

/// Check the KKT conditions of a trained model on its training data, scoring
/// every sample through the model itself.
pub fn kkt_audit(
    data: &[DissimilaritySample],
    alphas: &[f64],
    model: &KernelModel,
    tol: f64,
) -> KktReport {
    let c = model.c();
    let mut violations = 0;
    let mut max_violation: f64 = 0.0;
    let mut residual = 0.0;
    let mut box_ok = true;
    for (s, &a) in data.iter().zip(alphas) {
        let y = s.label.sign();
        residual += a * y;
        if !(0.0..=c).contains(&a) {
            box_ok = false;
        }
        let m = y * model.score(s.dvec.as_slice());
        let v = if a <= 0.0 {
            (1.0 - tol) - m
        } else if a >= c {
            m - (1.0 + tol)
        } else {
            (m - 1.0).abs() - tol
        };
        if v > 0.0 {
            violations += 1;
        }
        max_violation = max_violation.max(v + tol);
    }
    KktReport {
        violations,
        max_violation,
        equality_residual: f64::abs(residual),
        box_ok,
    }
}
