#![allow(dead_code)]

use shsv::dissimilarity::{ClaimKind, DissimilaritySample, Label, SampleMeta};
use shsv::featurestore::FeatureVector;

pub fn sample(x: &[f64], label: Label) -> DissimilaritySample {
    DissimilaritySample {
        dvec: FeatureVector::new(x.to_vec()).unwrap(),
        label,
        meta: SampleMeta {
            claimant: 0,
            reference_writer: 0,
            source_writer: 0,
            kind: match label {
                Label::Positive => ClaimKind::Genuine,
                Label::Negative => ClaimKind::RandomForgery,
            },
            reference_seq: 0,
            claim_seq: 0,
            chunk: None,
        },
    }
}

fn kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    (-gamma * d2).exp()
}

/// Dual value `sum a - 1/2 sum_ij a_i a_j y_i y_j k(x_i, x_j)`.
pub fn dual_value(x: &[Vec<f64>], y: &[f64], a: &[f64], gamma: f64) -> f64 {
    let n = x.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * kernel(&x[i], &x[j], gamma);
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Euclidean projection onto `{0 <= a <= c, y . a = 0}` by bisection on the
/// multiplier of the equality constraint.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> {
        v.iter()
            .zip(y)
            .map(|(vi, yi)| (vi - lam * yi).clamp(0.0, c))
            .collect()
    };
    let resid = |a: &[f64]| a.iter().zip(y).map(|(ai, yi)| ai * yi).sum::<f64>();
    let bound = v.iter().map(|x| x.abs()).fold(0.0, f64::max) + c + 1.0;
    let (mut lo, mut hi) = (-bound, bound);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if resid(&at(mid)) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Maximum of the soft-margin dual by projected gradient ascent.
pub fn qp_oracle(x: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> f64 {
    let n = x.len();
    let q: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| y[i] * y[j] * kernel(&x[i], &x[j], gamma)).collect())
        .collect();
    let step = 1.0 / n as f64;
    let mut a = vec![0.0; n];
    for _ in 0..40_000 {
        let g: Vec<f64> = (0..n)
            .map(|i| 1.0 - (0..n).map(|j| q[i][j] * a[j]).sum::<f64>())
            .collect();
        let v: Vec<f64> = a.iter().zip(&g).map(|(ai, gi)| ai + step * gi).collect();
        a = project(&v, y, c);
    }
    dual_value(x, y, &a, gamma)
}

/// EER by sweeping thresholds on a fixed grid over `[lo, hi]`: the grid point
/// with the smallest `|FAR - FRR|` and the mean of the two rates there.
pub fn eer_grid(genuine: &[f64], forgery: &[f64], lo: f64, hi: f64, step: f64) -> f64 {
    let mut g = genuine.to_vec();
    let mut f = forgery.to_vec();
    g.sort_by(f64::total_cmp);
    f.sort_by(f64::total_cmp);
    let steps = ((hi - lo) / step).round() as usize;
    let mut best = (f64::INFINITY, 0.0);
    for k in 0..=steps {
        let tau = lo + k as f64 * step;
        let frr = g.partition_point(|&s| s < tau) as f64 / g.len() as f64;
        let far = (f.len() - f.partition_point(|&s| s < tau)) as f64 / f.len() as f64;
        let gap = (far - frr).abs();
        if gap < best.0 {
            best = (gap, 0.5 * (far + frr));
        }
    }
    best.1
}

/// Otsu by the textbook definition: maximize `w0 w1 (mu0 - mu1)^2` over
/// thresholds with a non-empty lower class, smallest threshold on ties.
/// Exact rational comparison for small histograms.
pub fn otsu_sweep(h: &[u64; 256]) -> u8 {
    let n: i128 = h.iter().map(|&c| c as i128).sum();
    let mut best: Option<(i128, i128, usize)> = None;
    for t in 0..256 {
        let n0: i128 = h[..=t].iter().map(|&c| c as i128).sum();
        if n0 == 0 {
            continue;
        }
        let n1 = n - n0;
        let s0: i128 = (0..=t).map(|i| i as i128 * h[i] as i128).sum();
        let s1: i128 = (t + 1..256).map(|i| i as i128 * h[i] as i128).sum();
        // n0 n1 (s0/n0 - s1/n1)^2 = (s0 n1 - s1 n0)^2 / (n0 n1)
        let (num, den) = if n1 == 0 {
            (0, 1)
        } else {
            ((s0 * n1 - s1 * n0).pow(2), n0 * n1)
        };
        match best {
            Some((bn, bd, _)) if num * bd <= bn * den => {}
            _ => best = Some((num, den, t)),
        }
    }
    best.expect("non-empty histogram").2 as u8
}
