//! End-to-end experiment driver behind the command-line tool.
//!
//! Run `r` of an experiment uses the seed `derive(master_seed, [RUN, r])`
//! for its user split, record selection, stream order, SGD shuffling and SMO
//! tie breaking, so any single run can be reproduced on its own with
//! [`run_once`]. The dataset itself is synthesized once from the master seed.

use std::fs;
use std::path::{Path, PathBuf};

use crate::config::ExperimentConfig;
use crate::dissimilarity::{gen_dev_set, gen_exploit_set, ClaimKind, DevSet, ExploitSet};
use crate::error::{Error, Result};
use crate::evaluation::{aggregate_runs, eer_global, report_csv, svg_chart, windowed_metrics, Eer, RunAggregate};
use crate::featurestore::{generate_synthetic, load_dataset, split_users, Dataset, SplitConfig, UserSplit};
use crate::linear_sgd::LinearModel;
use crate::rbf_svm::{fit_smo, KernelModel};
use crate::rng::{derive, tag};
use crate::stream::{
    build_stream, prequential_run, static_run, write_event_log, read_event_log, Scorer, UpdatePolicy,
    UpdateRecord, VerificationEvent,
};

/// Seed of run `r`.
pub fn run_seed(master: u64, r: usize) -> u64 {
    derive(master, &[tag::RUN, r as u64])
}

/// Dataset named by the config, or the synthetic one when none is given.
pub fn load_or_synthesize(cfg: &ExperimentConfig) -> Result<Dataset> {
    match &cfg.dataset {
        Some(p) => load_dataset(p),
        None => generate_synthetic(&synth_config(cfg)),
    }
}

pub fn synth_config(cfg: &ExperimentConfig) -> crate::featurestore::SynthConfig {
    crate::featurestore::SynthConfig {
        seed: cfg.seed,
        ..cfg.synth.clone()
    }
}

fn split_config(cfg: &ExperimentConfig, seed: u64) -> SplitConfig {
    SplitConfig {
        seed,
        ..cfg.split.clone()
    }
}

/// Split plus the development and exploitation sets of one run.
pub struct RunData {
    pub seed: u64,
    pub split: UserSplit,
    pub dev: DevSet,
    pub exploit: ExploitSet,
}

pub fn prepare_run(cfg: &ExperimentConfig, dataset: &Dataset, seed: u64) -> Result<RunData> {
    let split_cfg = split_config(cfg, seed);
    let split = split_users(dataset, &split_cfg)?;
    let dev = gen_dev_set(dataset, &split.dev, &split_cfg)?;
    let exploit = gen_exploit_set(dataset, &split.exploit, &split_cfg)?;
    Ok(RunData {
        seed,
        split,
        dev,
        exploit,
    })
}

/// Initial linear model trained on the development set.
pub fn train_sgd(cfg: &ExperimentConfig, dev: &DevSet, seed: u64) -> Result<LinearModel> {
    let dim = dev
        .dim()
        .ok_or_else(|| Error::Data("empty development set".into()))?;
    let mut model = LinearModel::new(dim, cfg.sgd_params(dev.len())?)?;
    if cfg.sgd_center {
        model = model.with_center(dev.mean().expect("non-empty"))?;
    }
    model.fit_batch(dev.samples(), cfg.sgd_epochs, seed)?;
    Ok(model)
}

/// Static kernel SVM trained on the development set. Reaching the pass limit
/// is reported, not treated as an error.
pub fn train_svm(cfg: &ExperimentConfig, dev: &DevSet, seed: u64) -> Result<(KernelModel, bool)> {
    let fit = fit_smo(dev.samples(), &cfg.smo_params(), seed)?;
    Ok((fit.model, fit.converged))
}

/// Everything one run produced.
pub struct RunOutcome {
    pub seed: u64,
    pub dev_len: usize,
    pub sgd_initial: LinearModel,
    pub sgd_final: LinearModel,
    pub svm: KernelModel,
    pub svm_converged: bool,
    pub shsv_events: Vec<VerificationEvent>,
    pub svm_events: Vec<VerificationEvent>,
    pub frozen_sgd_events: Option<Vec<VerificationEvent>>,
    pub updates: Vec<UpdateRecord>,
}

pub fn run_once(cfg: &ExperimentConfig, dataset: &Dataset, r: usize) -> Result<RunOutcome> {
    let seed = run_seed(cfg.seed, r);
    let data = prepare_run(cfg, dataset, seed)?;
    let stream = build_stream(&data.exploit, seed);
    let sgd = train_sgd(cfg, &data.dev, seed)?;
    let (svm, svm_converged) = train_svm(cfg, &data.dev, seed)?;
    let scfg = cfg.stream_config(seed, UpdatePolicy::Adaptive);
    let shsv = prequential_run(&stream, sgd.clone(), &scfg)?;
    let svm_events = static_run(&stream, &svm)?;
    let frozen_sgd_events = if cfg.frozen_sgd {
        Some(static_run(&stream, &sgd)?)
    } else {
        None
    };
    Ok(RunOutcome {
        seed,
        dev_len: data.dev.len(),
        sgd_initial: sgd,
        sgd_final: shsv.final_model,
        svm,
        svm_converged,
        shsv_events: shsv.events,
        svm_events,
        frozen_sgd_events,
        updates: shsv.updates,
    })
}

/// Aggregated reports of a full experiment.
pub struct ExperimentReport {
    pub shsv: RunAggregate,
    pub svm: RunAggregate,
    pub frozen_sgd: Option<RunAggregate>,
    pub svm_unconverged: usize,
    pub updates: usize,
    pub events_per_run: usize,
}

/// Run all `run_count` runs and write per-run event logs and models under
/// `run_<r>/`, then `report_shsv.csv`, `report_svm.csv` (and
/// `report_sgd_static.csv`, `chart.svg` when enabled) in `output_dir`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let dataset = load_or_synthesize(cfg)?;
    let out = &cfg.output_dir;
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let scfg = cfg.stream_config(cfg.seed, UpdatePolicy::Adaptive);

    let mut shsv_w = Vec::new();
    let mut svm_w = Vec::new();
    let mut sgd_w = Vec::new();
    let mut svm_unconverged = 0;
    let mut updates = 0;
    let mut events_per_run = 0;
    for r in 0..cfg.run_count {
        let run = run_once(cfg, &dataset, r)?;
        let dir = out.join(format!("run_{r}"));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        write_event_log(&run.shsv_events, dir.join("events_shsv.csv"))?;
        write_event_log(&run.svm_events, dir.join("events_svm.csv"))?;
        run.sgd_initial.save(dir.join("sgd_initial.shwm"))?;
        run.sgd_final.save(dir.join("sgd_final.shwm"))?;
        run.svm.save(dir.join("svm.shkm"))?;
        shsv_w.push(windowed_metrics(&run.shsv_events, scfg.w_size, scfg.w_step)?);
        svm_w.push(windowed_metrics(&run.svm_events, scfg.w_size, scfg.w_step)?);
        if let Some(ev) = &run.frozen_sgd_events {
            write_event_log(ev, dir.join("events_sgd_static.csv"))?;
            sgd_w.push(windowed_metrics(ev, scfg.w_size, scfg.w_step)?);
        }
        svm_unconverged += usize::from(!run.svm_converged);
        updates += run.updates.len();
        events_per_run = run.shsv_events.len();
    }

    let shsv = aggregate_runs(&shsv_w)?;
    let svm = aggregate_runs(&svm_w)?;
    let frozen_sgd = if cfg.frozen_sgd {
        Some(aggregate_runs(&sgd_w)?)
    } else {
        None
    };
    write_text(&out.join("report_shsv.csv"), &report_csv(&shsv))?;
    write_text(&out.join("report_svm.csv"), &report_csv(&svm))?;
    let mut series = vec![("SHSV (adaptive SGD)", &shsv), ("SVM (static)", &svm)];
    if let Some(a) = &frozen_sgd {
        write_text(&out.join("report_sgd_static.csv"), &report_csv(a))?;
        series.push(("SGD (static)", a));
    }
    if cfg.svg {
        write_text(&out.join("chart.svg"), &svg_chart(&series))?;
    }
    write_text(&out.join("config.txt"), &cfg.to_text())?;
    Ok(ExperimentReport {
        shsv,
        svm,
        frozen_sgd,
        svm_unconverged,
        updates,
        events_per_run,
    })
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Recompute the aggregate report from event logs, one log per run.
pub fn report_from_logs(paths: &[PathBuf], w_size: usize, w_step: usize) -> Result<RunAggregate> {
    if paths.is_empty() {
        return Err(Error::Data("no event logs given".into()));
    }
    let mut runs = Vec::with_capacity(paths.len());
    let mut expected = None;
    for p in paths {
        let events = read_event_log(p)?;
        if events.is_empty() {
            return Err(Error::Data(format!("{}: event log is empty", p.display())));
        }
        let windows = windowed_metrics(&events, w_size, w_step)?;
        match expected {
            None => expected = Some((windows.len(), p)),
            Some((n, first)) if n != windows.len() => {
                return Err(Error::Data(format!(
                    "{}: {} windows, but {} has {n}",
                    p.display(),
                    windows.len(),
                    first.display()
                )))
            }
            Some(_) => {}
        }
        runs.push(windows);
    }
    aggregate_runs(&runs)
}

/// Global EERs of a frozen model over every claim of an exploitation set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchEer {
    pub skilled: Eer,
    pub random: Eer,
    pub combined: Eer,
}

pub fn batch_eer<M: Scorer>(model: &M, exploit: &ExploitSet) -> Result<BatchEer> {
    let events = static_run(&build_stream(exploit, 0), model)?;
    let pick = |k: ClaimKind| -> Vec<f64> {
        events.iter().filter(|e| e.kind == k).map(|e| e.score).collect()
    };
    let g = pick(ClaimKind::Genuine);
    let rf = pick(ClaimKind::RandomForgery);
    let sk = pick(ClaimKind::SkilledForgery);
    let both: Vec<f64> = rf.iter().chain(&sk).copied().collect();
    Ok(BatchEer {
        skilled: eer_global(&g, &sk)?,
        random: eer_global(&g, &rf)?,
        combined: eer_global(&g, &both)?,
    })
}
