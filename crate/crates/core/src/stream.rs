//! Signature stream construction and the prequential test-then-train loop.

use std::collections::VecDeque;
use std::path::Path;

use rayon::prelude::*;

use crate::dissimilarity::{dt_slice, Claim, ClaimKind, DissimilaritySample, ExploitSet, Label};
use crate::error::{check_dim, Error, Result};
use crate::evaluation::fuse_max;
use crate::featurestore::FeatureVector;
use crate::linear_sgd::{LinearModel, SampleOrder};
use crate::rbf_svm::KernelModel;
use crate::rng::{derive, tag, SplitMix64};

/// A frozen decision function over dissimilarity vectors.
pub trait Scorer: Sync {
    fn dim(&self) -> usize;
    /// Decision value; `x.len()` must equal [`dim`](Scorer::dim).
    fn score(&self, x: &[f64]) -> f64;
}

/// A scorer that can learn from labeled dissimilarities.
pub trait Adaptive: Scorer + Clone {
    fn update(&mut self, batch: &[DissimilaritySample], rng: &mut SplitMix64) -> Result<()>;
}

impl Scorer for LinearModel {
    fn dim(&self) -> usize {
        LinearModel::dim(self)
    }

    fn score(&self, x: &[f64]) -> f64 {
        LinearModel::score(self, x)
    }
}

impl Adaptive for LinearModel {
    fn update(&mut self, batch: &[DissimilaritySample], rng: &mut SplitMix64) -> Result<()> {
        self.partial_fit(batch, SampleOrder::Shuffled(rng))
    }
}

impl Scorer for KernelModel {
    fn dim(&self) -> usize {
        KernelModel::dim(self)
    }

    fn score(&self, x: &[f64]) -> f64 {
        KernelModel::score(self, x)
    }
}

/// One arrival set: claim `index - 1` of every kind for every user.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamChunk {
    /// 1-based chunk index.
    pub index: u32,
    pub claims: Vec<Claim>,
}

/// Arrange the exploitation claims into `claims_per_user` chunks. Chunk
/// membership is fixed; the arrival order inside a chunk is a seeded shuffle.
pub fn build_stream(exploit: &ExploitSet, seed: u64) -> Vec<StreamChunk> {
    (0..exploit.claims_per_user)
        .map(|j| {
            let mut claims: Vec<Claim> = exploit
                .users
                .iter()
                .flat_map(|u| ClaimKind::ALL.map(|k| u.claims(k)[j].clone()))
                .collect();
            SplitMix64::new(derive(seed, &[tag::STREAM, j as u64])).shuffle(&mut claims);
            StreamChunk {
                index: j as u32 + 1,
                claims,
            }
        })
        .collect()
}

/// Interleave chunk streams: each next chunk is drawn from a source with
/// probability proportional to its remaining chunk count, and every source
/// keeps its internal order.
pub fn mixed_stream(streams: Vec<Vec<StreamChunk>>, seed: u64) -> Result<Vec<StreamChunk>> {
    let mut dim = None;
    for c in streams.iter().flatten().flat_map(|ch| &ch.claims) {
        match dim {
            None => dim = Some(c.features.dim()),
            Some(d) => check_dim(d, c.features.dim())?,
        }
    }
    let mut rng = SplitMix64::new(derive(seed, &[tag::MIX]));
    let mut sources: Vec<VecDeque<StreamChunk>> = streams.into_iter().map(VecDeque::from).collect();
    let mut remaining: usize = sources.iter().map(VecDeque::len).sum();
    let mut out = Vec::with_capacity(remaining);
    while remaining > 0 {
        let mut pick = rng.below(remaining);
        let src = sources
            .iter_mut()
            .find(|s| {
                if pick < s.len() {
                    true
                } else {
                    pick -= s.len();
                    false
                }
            })
            .expect("pick within remaining");
        out.push(src.pop_front().expect("non-empty source"));
        remaining -= 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerificationEvent {
    pub position: usize,
    pub chunk: u32,
    pub user: u32,
    pub kind: ClaimKind,
    pub score: f64,
    pub label: Label,
    pub model_version: u64,
}

/// Fused score of a questioned vector against reference vectors: the
/// maximum decision value over all reference dissimilarities.
pub fn claim_score<M: Scorer + ?Sized>(model: &M, refs: &[FeatureVector], claim: &FeatureVector) -> Result<f64> {
    if refs.is_empty() {
        return Err(Error::Data("claim has no reference signatures".into()));
    }
    check_dim(model.dim(), claim.dim())?;
    let scores: Vec<f64> = refs
        .iter()
        .map(|r| {
            check_dim(model.dim(), r.dim())?;
            Ok(model.score(&dt_slice(r.as_slice(), claim.as_slice())))
        })
        .collect::<Result<_>>()?;
    fuse_max(&scores)
}

fn score_claim<M: Scorer + ?Sized>(model: &M, claim: &Claim) -> Result<f64> {
    let refs = &claim.references.records;
    if refs.is_empty() {
        return Err(Error::Data(format!("user {} has no references", claim.claimant)));
    }
    check_dim(model.dim(), claim.features.dim())?;
    let x = claim.features.as_slice();
    let mut best = f64::NEG_INFINITY;
    for (_, r) in refs {
        check_dim(model.dim(), r.dim())?;
        best = best.max(model.score(&dt_slice(r.as_slice(), x)));
    }
    Ok(best)
}

/// Score one claim and record it as an event.
pub fn test_claim<M: Scorer + ?Sized>(
    model: &M,
    claim: &Claim,
    position: usize,
    chunk: u32,
    model_version: u64,
) -> Result<VerificationEvent> {
    Ok(VerificationEvent {
        position,
        chunk,
        user: claim.claimant,
        kind: claim.kind,
        score: score_claim(model, claim)?,
        label: claim.kind.label(),
        model_version,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdatePolicy {
    Static,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamEvalConfig {
    /// Claims tested between model updates.
    pub c_size: usize,
    pub w_size: usize,
    pub w_step: usize,
    pub run_count: usize,
    pub seed: u64,
    pub policy: UpdatePolicy,
    /// Number of most recent model versions kept in the run history.
    pub history_limit: usize,
}

impl StreamEvalConfig {
    /// Defaults for `exploit_users` users: one update per chunk of `3 nE`
    /// claims, windows of one chunk sliding by `nE` claims.
    pub fn for_users(exploit_users: usize) -> Self {
        let chunk = 3 * exploit_users.max(1);
        Self {
            c_size: chunk,
            w_size: chunk,
            w_step: exploit_users.max(1),
            run_count: 5,
            seed: 1,
            policy: UpdatePolicy::Adaptive,
            history_limit: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_size == 0 || self.w_size == 0 || self.w_step == 0 || self.run_count == 0 {
            return Err(Error::Config(
                "c_size, w_size, w_step and run_count must be positive".into(),
            ));
        }
        if self.w_step > self.w_size {
            return Err(Error::Config(format!(
                "w_step ({}) must not exceed w_size ({})",
                self.w_step, self.w_size
            )));
        }
        Ok(())
    }
}

/// One applied update: version `from_version` became `from_version + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub from_version: u64,
    /// Stream positions of the claims whose dissimilarities were used.
    pub positions: Vec<usize>,
    pub positives: usize,
    pub negatives: usize,
}

#[derive(Debug, Clone)]
pub struct StreamRun<M> {
    pub events: Vec<VerificationEvent>,
    pub updates: Vec<UpdateRecord>,
    /// `(version, model)` snapshots, at most `history_limit` of them.
    pub history: Vec<(u64, M)>,
    pub final_model: M,
}

impl<M> StreamRun<M> {
    pub fn model_versions(&self) -> u64 {
        self.updates.len() as u64 + 1
    }
}

/// Score every claim with a frozen model, in stream order.
pub fn static_run<M: Scorer>(stream: &[StreamChunk], model: &M) -> Result<Vec<VerificationEvent>> {
    let flat: Vec<(u32, &Claim)> = stream
        .iter()
        .flat_map(|ch| ch.claims.iter().map(move |c| (ch.index, c)))
        .collect();
    flat.par_iter()
        .enumerate()
        .map(|(p, (chunk, c))| test_claim(model, c, p, *chunk, 0))
        .collect()
}

/// Prequential evaluation. Claims are tested against the current model;
/// after every `c_size` tested claims the model is updated with the
/// reference dissimilarities of the tested genuine (positive) and random
/// forgery (negative) claims, paired one to one so every update is balanced.
/// Unpaired claims carry over to the next update. Skilled forgeries are
/// never used for updates. Any tested claims left at the end of the stream
/// trigger a final update.
pub fn prequential_run<M: Adaptive>(
    stream: &[StreamChunk],
    model: M,
    cfg: &StreamEvalConfig,
) -> Result<StreamRun<M>> {
    cfg.validate()?;
    let flat: Vec<(u32, &Claim)> = stream
        .iter()
        .flat_map(|ch| ch.claims.iter().map(move |c| (ch.index, c)))
        .collect();
    let mut rng = SplitMix64::new(derive(cfg.seed, &[tag::UPDATE]));
    let mut model = model;
    let mut version = 0u64;
    let mut events = Vec::with_capacity(flat.len());
    let mut updates = Vec::new();
    let mut history = Vec::new();
    let mut pending_g: VecDeque<usize> = VecDeque::new();
    let mut pending_rf: VecDeque<usize> = VecDeque::new();

    let mut pos = 0;
    while pos < flat.len() {
        let end = (pos + cfg.c_size).min(flat.len());
        let frozen = &model;
        let tested: Vec<VerificationEvent> = flat[pos..end]
            .par_iter()
            .enumerate()
            .map(|(k, (chunk, c))| test_claim(frozen, c, pos + k, *chunk, version))
            .collect::<Result<_>>()?;
        for e in &tested {
            match e.kind {
                ClaimKind::Genuine => pending_g.push_back(e.position),
                ClaimKind::RandomForgery => pending_rf.push_back(e.position),
                ClaimKind::SkilledForgery => {}
            }
        }
        events.extend(tested);
        pos = end;

        if cfg.policy == UpdatePolicy::Static {
            continue;
        }
        let pairs = pending_g.len().min(pending_rf.len());
        if pairs == 0 {
            continue;
        }
        let mut batch = Vec::new();
        let mut positions = Vec::with_capacity(2 * pairs);
        let (mut positives, mut negatives) = (0, 0);
        for _ in 0..pairs {
            let g = pending_g.pop_front().expect("paired");
            let f = pending_rf.pop_front().expect("paired");
            for p in [g, f] {
                let (chunk, claim) = flat[p];
                let d = claim.dissimilarities(Some(chunk));
                match claim.kind {
                    ClaimKind::Genuine => positives += d.len(),
                    _ => negatives += d.len(),
                }
                batch.extend(d);
                positions.push(p);
            }
        }
        model.update(&batch, &mut rng)?;
        updates.push(UpdateRecord {
            from_version: version,
            positions,
            positives,
            negatives,
        });
        version += 1;
        if cfg.history_limit > 0 {
            if history.len() == cfg.history_limit {
                history.remove(0);
            }
            history.push((version, model.clone()));
        }
    }
    Ok(StreamRun {
        events,
        updates,
        history,
        final_model: model,
    })
}

/// Count events whose claim fed an update applied before the event was
/// tested. Zero for a correct test-then-train run.
pub fn causality_violations(events: &[VerificationEvent], updates: &[UpdateRecord]) -> usize {
    updates
        .iter()
        .flat_map(|u| u.positions.iter().map(move |&p| (p, u.from_version)))
        .filter(|&(p, from)| events.get(p).is_none_or(|e| e.model_version > from))
        .count()
}

pub const EVENT_LOG_HEADER: &str = "position,chunk,user,kind,score,label,model_version";

/// Event log CSV with scores written in shortest round-trip form.
pub fn write_event_log(events: &[VerificationEvent], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(EVENT_LOG_HEADER.split(','))
        .map_err(|e| csv_err(path, e))?;
    for e in events {
        w.write_record([
            e.position.to_string(),
            e.chunk.to_string(),
            e.user.to_string(),
            e.kind.as_str().to_string(),
            e.score.to_string(),
            match e.label {
                Label::Positive => "1".to_string(),
                Label::Negative => "-1".to_string(),
            },
            e.model_version.to_string(),
        ])
        .map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_event_log(path: impl AsRef<Path>) -> Result<Vec<VerificationEvent>> {
    let path = path.as_ref();
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.join(",") != EVENT_LOG_HEADER {
        return Err(Error::Format(format!(
            "{}: event log header must be {EVENT_LOG_HEADER}",
            path.display()
        )));
    }
    let mut events = Vec::new();
    for (n, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_err(path, e))?;
        let bad = |what: &str| Error::Format(format!("{}: row {}: bad {what}", path.display(), n + 2));
        let kind: ClaimKind = row[3].parse().map_err(|_| bad("kind"))?;
        let label = match &row[5] {
            "1" => Label::Positive,
            "-1" => Label::Negative,
            _ => return Err(bad("label")),
        };
        if label != kind.label() {
            return Err(bad("label for kind"));
        }
        let position: usize = row[0].parse().map_err(|_| bad("position"))?;
        if position != n {
            return Err(bad("position (events must be consecutive from 0)"));
        }
        let score: f64 = row[4].parse().map_err(|_| bad("score"))?;
        if score.is_nan() {
            return Err(bad("score"));
        }
        events.push(VerificationEvent {
            position,
            chunk: row[1].parse().map_err(|_| bad("chunk"))?,
            user: row[2].parse().map_err(|_| bad("user"))?,
            kind,
            score,
            label,
            model_version: row[6].parse().map_err(|_| bad("model_version"))?,
        });
    }
    Ok(events)
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}
