use super::{Dataset, FeatureVector, SignatureKind, SignatureRecord};
use crate::error::{Error, Result};
use crate::rng::{derive, tag, SplitMix64};

/// Parameters of the synthetic embedding generator.
///
/// Writer `i` has a mean `mu_i ~ N(0, I)` and a fixed unit direction `u_i`.
/// With `style_dims_per_writer > 0` each writer also gets that many random
/// style coordinates: `mu_i` gains `+-style_scale` on them and `u_i` is drawn
/// on the style coordinates only.
/// Sample `s` of writer `i` is
///
/// ```text
/// genuine: mu_i                         + genuine_noise_sigma * scale(i, s) * n
/// skilled: mu_i + skilled_offset_scale * u_i + skilled_noise_sigma * scale(i, s) * n
/// ```
///
/// with `n ~ N(0, I)` and a per-coordinate noise scale
///
/// ```text
/// scale(i, s)[k] = exp(z_k * dim_noise_spread + a_ik * writer_noise_spread + s * v_k)
///                  * (unstable_dim_factor if k is unstable for writer i else 1)
/// ```
///
/// where `z_k, a_ik ~ N(0, 1)`, `v_k ~ N(0, drift_velocity_sigma^2)` is the
/// drift of coordinate `k` per session and each writer has
/// `unstable_dims_per_writer` random unstable coordinates. With the spread,
/// drift and unstable knobs at zero this is the plain isotropic model.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub writer_count: usize,
    pub genuine_per_writer: usize,
    pub skilled_per_writer: usize,
    pub dim: usize,
    pub genuine_noise_sigma: f64,
    pub skilled_offset_scale: f64,
    pub skilled_noise_sigma: f64,
    pub drift_velocity_sigma: f64,
    pub dim_noise_spread: f64,
    pub writer_noise_spread: f64,
    pub unstable_dims_per_writer: usize,
    pub unstable_dim_factor: f64,
    pub style_dims_per_writer: usize,
    pub style_scale: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            writer_count: 300,
            genuine_per_writer: 24,
            skilled_per_writer: 24,
            dim: 64,
            genuine_noise_sigma: 1.0,
            skilled_offset_scale: 5.0,
            skilled_noise_sigma: 1.2,
            drift_velocity_sigma: 0.03,
            dim_noise_spread: 0.7,
            writer_noise_spread: 0.7,
            unstable_dims_per_writer: 0,
            unstable_dim_factor: 1.0,
            style_dims_per_writer: 0,
            style_scale: 0.0,
            seed: 1,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.writer_count == 0 {
            return bad("synth writer_count must be >= 1".into());
        }
        if self.genuine_per_writer == 0 {
            return bad("synth genuine_per_writer must be >= 1".into());
        }
        if self.dim == 0 {
            return bad("synth dim must be >= 1".into());
        }
        let sigmas = [
            ("genuine_noise_sigma", self.genuine_noise_sigma),
            ("skilled_offset_scale", self.skilled_offset_scale),
            ("skilled_noise_sigma", self.skilled_noise_sigma),
            ("drift_velocity_sigma", self.drift_velocity_sigma),
            ("dim_noise_spread", self.dim_noise_spread),
            ("writer_noise_spread", self.writer_noise_spread),
            ("style_scale", self.style_scale),
        ];
        for (name, v) in sigmas {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("synth {name} must be finite and >= 0, got {v}"));
            }
        }
        if self.skilled_noise_sigma < self.genuine_noise_sigma {
            return bad(format!(
                "synth skilled_noise_sigma ({}) must be >= genuine_noise_sigma ({})",
                self.skilled_noise_sigma, self.genuine_noise_sigma
            ));
        }
        if self.unstable_dims_per_writer > self.dim {
            return bad(format!(
                "synth unstable_dims_per_writer ({}) exceeds dim ({})",
                self.unstable_dims_per_writer, self.dim
            ));
        }
        if self.style_dims_per_writer > self.dim {
            return bad(format!(
                "synth style_dims_per_writer ({}) exceeds dim ({})",
                self.style_dims_per_writer, self.dim
            ));
        }
        if !(self.unstable_dim_factor.is_finite() && self.unstable_dim_factor > 0.0) {
            return bad(format!(
                "synth unstable_dim_factor must be finite and > 0, got {}",
                self.unstable_dim_factor
            ));
        }
        Ok(())
    }
}

/// Generate a synthetic dataset. Writers are numbered `0..writer_count` and
/// every writer draws from its own derived seed, so writer `i` does not
/// depend on how many writers are generated after it.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<Dataset> {
    cfg.validate()?;
    let dim = cfg.dim;
    let mut global = SplitMix64::new(derive(cfg.seed, &[tag::SYNTH]));
    let z: Vec<f64> = (0..dim).map(|_| global.normal()).collect();
    let velocity: Vec<f64> = (0..dim)
        .map(|_| cfg.drift_velocity_sigma * global.normal())
        .collect();

    let mut records =
        Vec::with_capacity(cfg.writer_count * (cfg.genuine_per_writer + cfg.skilled_per_writer));
    for writer in 0..cfg.writer_count {
        let mut rng = SplitMix64::new(derive(cfg.seed, &[tag::SYNTH, writer as u64 + 1]));
        let mut mu: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let mut u: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        if cfg.style_dims_per_writer > 0 {
            let mut srng = SplitMix64::new(derive(cfg.seed, &[tag::SYNTH, writer as u64 + 1, 1]));
            let style = srng.sample_indices(dim, cfg.style_dims_per_writer);
            u.iter_mut().for_each(|v| *v = 0.0);
            for k in style {
                let sign = if srng.next_u64() & 1 == 0 { 1.0 } else { -1.0 };
                mu[k] += sign * cfg.style_scale;
                u[k] = srng.normal();
            }
        }
        let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            u.iter_mut().for_each(|v| *v /= norm);
        }
        let mut base_log: Vec<f64> = (0..dim)
            .map(|k| z[k] * cfg.dim_noise_spread + rng.normal() * cfg.writer_noise_spread)
            .collect();
        for k in rng.sample_indices(dim, cfg.unstable_dims_per_writer) {
            base_log[k] += cfg.unstable_dim_factor.ln();
        }

        let sample = |rng: &mut SplitMix64, s: usize, sigma: f64, offset: f64| {
            let values: Vec<f64> = (0..dim)
                .map(|k| {
                    let scale = (base_log[k] + s as f64 * velocity[k]).exp();
                    mu[k] + offset * u[k] + sigma * scale * rng.normal()
                })
                .collect();
            FeatureVector::new(values)
        };
        for s in 0..cfg.genuine_per_writer {
            records.push(SignatureRecord {
                writer_id: writer as u32,
                kind: SignatureKind::Genuine,
                seq_index: s as u32,
                features: sample(&mut rng, s, cfg.genuine_noise_sigma, 0.0)?,
            });
        }
        for s in 0..cfg.skilled_per_writer {
            records.push(SignatureRecord {
                writer_id: writer as u32,
                kind: SignatureKind::SkilledForgery,
                seq_index: s as u32,
                features: sample(
                    &mut rng,
                    s,
                    cfg.skilled_noise_sigma,
                    cfg.skilled_offset_scale,
                )?,
            });
        }
    }
    Dataset::new(dim, records)
}
