//! Dichotomy transformation and development/exploitation pair generation.

use std::sync::Arc;

use crate::error::{check_dim, Error, Result};
use crate::featurestore::{
    decode_raw, encode_raw, Dataset, FeatureVector, RawRecord, SelectionOrder, SplitConfig,
};
use crate::rng::{derive, tag, SplitMix64};

/// Componentwise absolute difference `|x1 - x2|`.
pub fn dt(x1: &FeatureVector, x2: &FeatureVector) -> Result<FeatureVector> {
    check_dim(x1.dim(), x2.dim())?;
    Ok(FeatureVector::new(dt_slice(x1.as_slice(), x2.as_slice()))
        .expect("difference of finite vectors is finite"))
}

pub(crate) fn dt_slice(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Positive,
    Negative,
}

impl Label {
    /// `+1` for positive, `-1` for negative.
    pub fn sign(self) -> f64 {
        match self {
            Label::Positive => 1.0,
            Label::Negative => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClaimKind {
    Genuine,
    RandomForgery,
    SkilledForgery,
}

impl ClaimKind {
    pub const ALL: [ClaimKind; 3] = [
        ClaimKind::Genuine,
        ClaimKind::RandomForgery,
        ClaimKind::SkilledForgery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClaimKind::Genuine => "G",
            ClaimKind::RandomForgery => "RF",
            ClaimKind::SkilledForgery => "SK",
        }
    }

    pub fn label(self) -> Label {
        match self {
            ClaimKind::Genuine => Label::Positive,
            _ => Label::Negative,
        }
    }
}

impl std::str::FromStr for ClaimKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "G" => Ok(ClaimKind::Genuine),
            "RF" => Ok(ClaimKind::RandomForgery),
            "SK" => Ok(ClaimKind::SkilledForgery),
            _ => Err(Error::Format(format!("unknown claim kind {s:?}"))),
        }
    }
}

/// Where a dissimilarity vector came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleMeta {
    /// Identity claimed by the questioned signature.
    pub claimant: u32,
    pub reference_writer: u32,
    /// Writer who actually produced the questioned signature.
    pub source_writer: u32,
    pub kind: ClaimKind,
    pub reference_seq: u32,
    pub claim_seq: u32,
    /// Stream chunk index, `None` for development pairs.
    pub chunk: Option<u32>,
}

impl SampleMeta {
    /// Positive iff the claim is a genuine of the reference writer.
    pub fn expected_label(&self) -> Label {
        if self.kind == ClaimKind::Genuine && self.reference_writer == self.claimant {
            Label::Positive
        } else {
            Label::Negative
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissimilaritySample {
    pub dvec: FeatureVector,
    pub label: Label,
    pub meta: SampleMeta,
}

/// Balanced training set of dissimilarity samples.
#[derive(Debug, Clone, PartialEq)]
pub struct DevSet {
    samples: Vec<DissimilaritySample>,
    positives: usize,
    negatives: usize,
}

impl DevSet {
    /// Wrap samples, checking dimensions and class balance.
    pub fn from_samples(samples: Vec<DissimilaritySample>) -> Result<Self> {
        if let Some(first) = samples.first() {
            let dim = first.dvec.dim();
            for s in &samples {
                check_dim(dim, s.dvec.dim())?;
            }
        }
        let positives = samples
            .iter()
            .filter(|s| s.label == Label::Positive)
            .count();
        let negatives = samples.len() - positives;
        if positives != negatives {
            return Err(Error::Data(format!(
                "development set is unbalanced: {positives} positive, {negatives} negative"
            )));
        }
        Ok(Self {
            samples,
            positives,
            negatives,
        })
    }

    pub fn samples(&self) -> &[DissimilaritySample] {
        &self.samples
    }

    pub fn positives_count(&self) -> usize {
        self.positives
    }

    pub fn negatives_count(&self) -> usize {
        self.negatives
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn dim(&self) -> Option<usize> {
        self.samples.first().map(|s| s.dvec.dim())
    }

    /// Per-coordinate mean of the dissimilarity vectors.
    pub fn mean(&self) -> Option<Vec<f64>> {
        let dim = self.dim()?;
        let mut m = vec![0.0; dim];
        for s in &self.samples {
            for (a, v) in m.iter_mut().zip(s.dvec.as_slice()) {
                *a += v;
            }
        }
        let n = self.samples.len() as f64;
        m.iter_mut().for_each(|a| *a /= n);
        Some(m)
    }
}

/// Encode a development set in the binary feature format. The kind byte
/// carries the label (0 positive, 1 negative), `writer_id` the claimant and
/// `seq_index` the sample position.
pub fn write_devset(devset: &DevSet) -> Result<Vec<u8>> {
    let dim = devset
        .dim()
        .ok_or_else(|| Error::Data("cannot export an empty development set".into()))?;
    let raw: Vec<RawRecord> = devset
        .samples
        .iter()
        .enumerate()
        .map(|(n, s)| RawRecord {
            writer_id: s.meta.claimant,
            kind_code: match s.label {
                Label::Positive => 0,
                Label::Negative => 1,
            },
            seq_index: n as u32,
            values: s.dvec.as_slice().iter().map(|&v| v as f32).collect(),
        })
        .collect();
    encode_raw(dim, &raw)
}

/// Decode a development set written by [`write_devset`]. Only the label and
/// claimant survive the round trip; other provenance fields are zeroed.
pub fn read_devset(bytes: &[u8]) -> Result<DevSet> {
    let (_, raw) = decode_raw(bytes)?;
    let samples = raw
        .into_iter()
        .enumerate()
        .map(|(n, r)| {
            let label = match r.kind_code {
                0 => Label::Positive,
                1 => Label::Negative,
                k => return Err(Error::Format(format!("sample {n}: bad label byte {k}"))),
            };
            let dvec = FeatureVector::new(r.values.into_iter().map(f64::from).collect())?;
            if dvec.as_slice().iter().any(|&v| v < 0.0) {
                return Err(Error::Data(format!("sample {n}: negative dissimilarity")));
            }
            Ok(DissimilaritySample {
                dvec,
                label,
                meta: SampleMeta {
                    claimant: r.writer_id,
                    reference_writer: r.writer_id,
                    source_writer: r.writer_id,
                    kind: match label {
                        Label::Positive => ClaimKind::Genuine,
                        Label::Negative => ClaimKind::RandomForgery,
                    },
                    reference_seq: 0,
                    claim_seq: n as u32,
                    chunk: None,
                },
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DevSet::from_samples(samples)
}

/// All genuine records of a set of writers, grouped contiguously by writer.
struct GenuinePool {
    records: Vec<usize>,
    /// `(writer, start, end)` ranges into `records`.
    ranges: Vec<(u32, usize, usize)>,
}

impl GenuinePool {
    fn new(dataset: &Dataset, users: &[u32]) -> Result<Self> {
        let mut records = Vec::new();
        let mut ranges = Vec::with_capacity(users.len());
        for &u in users {
            let w = dataset.writer_or_err(u)?;
            let start = records.len();
            records.extend_from_slice(&w.genuine);
            ranges.push((u, start, records.len()));
        }
        Ok(Self { records, ranges })
    }

    /// `k` genuine record indices of writers other than `exclude`, without
    /// replacement when the pool is large enough.
    fn draw_others(&self, exclude: u32, k: usize, rng: &mut SplitMix64) -> Result<Vec<usize>> {
        let (s, e) = self
            .ranges
            .iter()
            .find(|r| r.0 == exclude)
            .map(|r| (r.1, r.2))
            .unwrap_or((0, 0));
        let m = self.records.len() - (e - s);
        if m == 0 {
            return Err(Error::Data(
                "random forgeries need at least two users in the set".into(),
            ));
        }
        let map = |r: usize| self.records[if r < s { r } else { r + (e - s) }];
        Ok(if k <= m {
            rng.sample_indices(m, k).into_iter().map(map).collect()
        } else {
            (0..k).map(|_| map(rng.below(m))).collect()
        })
    }
}

fn check_users(users: &[u32], what: &str) -> Result<()> {
    let mut sorted = users.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != users.len() {
        return Err(Error::Data(format!("duplicate writer in {what} user list")));
    }
    if users.len() < 2 {
        return Err(Error::Data(format!(
            "{what} set needs at least 2 users to draw random forgeries, got {}",
            users.len()
        )));
    }
    Ok(())
}

/// Development pairs: all genuine pairs `k < j` of the selected genuines as
/// positives and the first `n - 1` selected genuines against `n / 2` random
/// forgeries as negatives, per user.
pub fn gen_dev_set(dataset: &Dataset, dev_users: &[u32], cfg: &SplitConfig) -> Result<DevSet> {
    cfg.validate()?;
    check_users(dev_users, "development")?;
    let n = cfg.dev_genuine_per_user;
    let pool = GenuinePool::new(dataset, dev_users)?;
    let mut users = dev_users.to_vec();
    users.sort_unstable();

    let mut samples = Vec::with_capacity(users.len() * n * (n - 1));
    for &u in &users {
        let w = dataset.writer_or_err(u)?;
        if w.genuine.len() < n {
            return Err(Error::Data(format!(
                "development writer {u} has {} genuine signatures, {n} required",
                w.genuine.len()
            )));
        }
        let mut rng = SplitMix64::new(derive(cfg.seed, &[tag::DEV_SET, u as u64]));
        let chosen: Vec<usize> = match cfg.selection {
            SelectionOrder::Random => rng
                .sample_indices(w.genuine.len(), n)
                .into_iter()
                .map(|i| w.genuine[i])
                .collect(),
            SelectionOrder::Chronological => w.genuine[..n].to_vec(),
        };
        let forgeries = pool.draw_others(u, n / 2, &mut rng)?;

        let pair = |r: usize, c: usize, kind: ClaimKind| {
            let rr = dataset.record(r);
            let cr = dataset.record(c);
            let meta = SampleMeta {
                claimant: u,
                reference_writer: rr.writer_id,
                source_writer: cr.writer_id,
                kind,
                reference_seq: rr.seq_index,
                claim_seq: cr.seq_index,
                chunk: None,
            };
            DissimilaritySample {
                dvec: dt(&rr.features, &cr.features).expect("dataset dims agree"),
                label: meta.expected_label(),
                meta,
            }
        };
        for k in 0..n - 1 {
            for j in k + 1..n {
                samples.push(pair(chosen[k], chosen[j], ClaimKind::Genuine));
            }
        }
        for &g in &chosen[..n - 1] {
            for &f in &forgeries {
                samples.push(pair(g, f, ClaimKind::RandomForgery));
            }
        }
    }
    DevSet::from_samples(samples)
}

/// Stored reference genuines of one enrolled user.
#[derive(Debug, Clone, PartialEq)]
pub struct References {
    pub writer_id: u32,
    /// `(seq_index, features)` per reference.
    pub records: Vec<(u32, FeatureVector)>,
}

/// One verification request: a questioned signature under a claimed identity.
#[derive(Debug, Clone, PartialEq)]
pub struct Claim {
    pub claimant: u32,
    pub kind: ClaimKind,
    pub source_writer: u32,
    pub seq: u32,
    /// Position `j` of this claim among the user's claims of its kind.
    pub claim_index: u32,
    pub features: FeatureVector,
    pub references: Arc<References>,
}

impl Claim {
    /// Dissimilarities against every reference of the claimed user.
    pub fn dissimilarities(&self, chunk: Option<u32>) -> Vec<DissimilaritySample> {
        self.references
            .records
            .iter()
            .map(|(rseq, r)| {
                let meta = SampleMeta {
                    claimant: self.claimant,
                    reference_writer: self.references.writer_id,
                    source_writer: self.source_writer,
                    kind: self.kind,
                    reference_seq: *rseq,
                    claim_seq: self.seq,
                    chunk,
                };
                DissimilaritySample {
                    dvec: dt(r, &self.features).expect("exploitation dims agree"),
                    label: meta.expected_label(),
                    meta,
                }
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploitUser {
    pub writer_id: u32,
    pub references: Arc<References>,
    pub genuine: Vec<Claim>,
    pub random: Vec<Claim>,
    pub skilled: Vec<Claim>,
}

impl ExploitUser {
    pub fn claims(&self, kind: ClaimKind) -> &[Claim] {
        match kind {
            ClaimKind::Genuine => &self.genuine,
            ClaimKind::RandomForgery => &self.random,
            ClaimKind::SkilledForgery => &self.skilled,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExploitSet {
    pub users: Vec<ExploitUser>,
    pub claims_per_user: usize,
    pub dim: usize,
}

impl ExploitSet {
    /// Every reference/claim dissimilarity, user by user.
    pub fn materialize(&self) -> Vec<DissimilaritySample> {
        let mut out = Vec::new();
        for u in &self.users {
            for kind in ClaimKind::ALL {
                for c in u.claims(kind) {
                    out.extend(c.dissimilarities(None));
                }
            }
        }
        out
    }
}

/// Select references and claims for every exploitation user.
///
/// Random order draws `refs_per_user + claims_per_user` distinct genuines
/// (references first) and `claims_per_user` skilled forgeries. Chronological
/// order uses the earliest genuines as references, the following ones as
/// claims and the skilled forgeries starting at the same session as the
/// genuine claims where available.
pub fn gen_exploit_set(
    dataset: &Dataset,
    exploit_users: &[u32],
    cfg: &SplitConfig,
) -> Result<ExploitSet> {
    cfg.validate()?;
    check_users(exploit_users, "exploitation")?;
    let (nr, nc) = (cfg.refs_per_user, cfg.claims_per_user);
    let pool = GenuinePool::new(dataset, exploit_users)?;
    let mut ids = exploit_users.to_vec();
    ids.sort_unstable();

    let mut users = Vec::with_capacity(ids.len());
    for &u in &ids {
        let w = dataset.writer_or_err(u)?;
        if !cfg.exploit_eligible(w.genuine.len(), w.skilled.len()) {
            return Err(Error::Data(format!(
                "exploitation writer {u} has {} genuine and {} skilled signatures, needs {} and {nc}",
                w.genuine.len(),
                w.skilled.len(),
                nr + nc
            )));
        }
        let mut rng = SplitMix64::new(derive(cfg.seed, &[tag::EXPLOIT_SET, u as u64]));
        let (gen_sel, sk_sel): (Vec<usize>, Vec<usize>) = match cfg.selection {
            SelectionOrder::Random => (
                rng.sample_indices(w.genuine.len(), nr + nc),
                rng.sample_indices(w.skilled.len(), nc),
            ),
            SelectionOrder::Chronological => {
                let start = nr.min(w.skilled.len() - nc);
                ((0..nr + nc).collect(), (start..start + nc).collect())
            }
        };
        let forgeries = pool.draw_others(u, nc, &mut rng)?;

        let references = Arc::new(References {
            writer_id: u,
            records: gen_sel[..nr]
                .iter()
                .map(|&i| {
                    let r = dataset.record(w.genuine[i]);
                    (r.seq_index, r.features.clone())
                })
                .collect(),
        });
        let claim = |rec: usize, kind: ClaimKind, j: usize| {
            let r = dataset.record(rec);
            Claim {
                claimant: u,
                kind,
                source_writer: r.writer_id,
                seq: r.seq_index,
                claim_index: j as u32,
                features: r.features.clone(),
                references: Arc::clone(&references),
            }
        };
        let genuine = gen_sel[nr..]
            .iter()
            .enumerate()
            .map(|(j, &i)| claim(w.genuine[i], ClaimKind::Genuine, j))
            .collect();
        let random = forgeries
            .iter()
            .enumerate()
            .map(|(j, &rec)| claim(rec, ClaimKind::RandomForgery, j))
            .collect();
        let skilled = sk_sel
            .iter()
            .enumerate()
            .map(|(j, &i)| claim(w.skilled[i], ClaimKind::SkilledForgery, j))
            .collect();
        users.push(ExploitUser {
            writer_id: u,
            references,
            genuine,
            random,
            skilled,
        });
    }
    Ok(ExploitSet {
        users,
        claims_per_user: nc,
        dim: dataset.dim(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::featurestore::{generate_synthetic, split_users, SynthConfig};

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    fn data(writers: usize, genuine: usize, skilled: usize) -> Dataset {
        generate_synthetic(&SynthConfig {
            writer_count: writers,
            genuine_per_writer: genuine,
            skilled_per_writer: skilled,
            dim: 3,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn dt_examples() {
        assert_eq!(dt(&fv(&[1.0, 4.0]), &fv(&[3.0, 1.0])).unwrap(), fv(&[2.0, 3.0]));
        let x = fv(&[0.5, -7.0, 3.0]);
        assert_eq!(dt(&x, &x).unwrap(), FeatureVector::zeros(3));
        assert!(matches!(
            dt(&fv(&[1.0]), &fv(&[1.0, 2.0])),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn dev_counts_small() {
        let d = data(8, 6, 0);
        let cfg = SplitConfig {
            dev_genuine_per_user: 4,
            ..SplitConfig::default()
        };
        let users = [0, 1, 2, 3, 4];
        let dev = gen_dev_set(&d, &users, &cfg).unwrap();
        assert_eq!(dev.len(), 5 * (6 + 6));
        assert_eq!(dev.positives_count(), 30);
        assert_eq!(dev.negatives_count(), 30);
    }

    #[test]
    fn dev_needs_two_users_and_even_count() {
        let d = data(4, 4, 0);
        let cfg = SplitConfig {
            dev_genuine_per_user: 2,
            ..SplitConfig::default()
        };
        assert!(gen_dev_set(&d, &[1], &cfg).is_err());
        let odd = SplitConfig {
            dev_genuine_per_user: 3,
            ..cfg
        };
        assert!(matches!(gen_dev_set(&d, &[0, 1], &odd), Err(Error::Config(_))));
        let many = SplitConfig {
            dev_genuine_per_user: 6,
            ..SplitConfig::default()
        };
        assert!(matches!(gen_dev_set(&d, &[0, 1], &many), Err(Error::Data(_))));
    }

    #[test]
    fn dev_forgeries_from_other_users() {
        let d = data(6, 8, 0);
        let cfg = SplitConfig {
            dev_genuine_per_user: 8,
            ..SplitConfig::default()
        };
        let dev = gen_dev_set(&d, &[0, 2, 4], &cfg).unwrap();
        for s in dev.samples() {
            match s.meta.kind {
                ClaimKind::Genuine => assert_eq!(s.meta.source_writer, s.meta.claimant),
                _ => {
                    assert_ne!(s.meta.source_writer, s.meta.claimant);
                    assert!([0, 2, 4].contains(&s.meta.source_writer));
                }
            }
        }
    }

    #[test]
    fn exploit_structure() {
        let d = data(10, 9, 5);
        let cfg = SplitConfig {
            dev_user_count: 2,
            dev_genuine_per_user: 2,
            exploit_user_count: 2,
            refs_per_user: 3,
            claims_per_user: 4,
            ..SplitConfig::default()
        };
        let split = split_users(&d, &cfg).unwrap();
        let ex = gen_exploit_set(&d, &split.exploit, &cfg).unwrap();
        assert_eq!(ex.materialize().len(), 72);
        for u in &ex.users {
            assert_eq!(u.references.records.len(), 3);
            let ref_seqs: Vec<u32> = u.references.records.iter().map(|r| r.0).collect();
            for c in &u.genuine {
                assert!(!ref_seqs.contains(&c.seq));
            }
            for c in &u.random {
                assert_ne!(c.source_writer, u.writer_id);
            }
        }
    }

    #[test]
    fn chronological_selection() {
        let d = data(6, 8, 8);
        let cfg = SplitConfig {
            dev_genuine_per_user: 4,
            refs_per_user: 3,
            claims_per_user: 4,
            selection: SelectionOrder::Chronological,
            ..SplitConfig::default()
        };
        let ex = gen_exploit_set(&d, &[0, 1], &cfg).unwrap();
        let u = &ex.users[0];
        assert_eq!(
            u.references.records.iter().map(|r| r.0).collect::<Vec<_>>(),
            vec![0, 1, 2]
        );
        assert_eq!(u.genuine.iter().map(|c| c.seq).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        assert_eq!(u.skilled.iter().map(|c| c.seq).collect::<Vec<_>>(), vec![3, 4, 5, 6]);
        let dev = gen_dev_set(&d, &[2, 3], &cfg).unwrap();
        assert!(dev
            .samples()
            .iter()
            .filter(|s| s.label == Label::Positive)
            .all(|s| s.meta.reference_seq < 4 && s.meta.claim_seq < 4));
    }

    #[test]
    fn devset_export_round_trip() {
        let d = data(4, 4, 0);
        let cfg = SplitConfig {
            dev_genuine_per_user: 4,
            ..SplitConfig::default()
        };
        let dev = gen_dev_set(&d, &[0, 1, 2], &cfg).unwrap();
        let back = read_devset(&write_devset(&dev).unwrap()).unwrap();
        assert_eq!(back.len(), dev.len());
        for (a, b) in dev.samples().iter().zip(back.samples()) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.meta.claimant, b.meta.claimant);
            for (x, y) in a.dvec.as_slice().iter().zip(b.dvec.as_slice()) {
                assert_eq!(*x as f32, *y as f32);
            }
        }
    }
}
