//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any criterion fails.

mod common;

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::Command;
use std::time::{Duration, Instant};

use common::{eer_grid, qp_oracle, sample};
use shsv::config::ExperimentConfig;
use shsv::dissimilarity::{dt, gen_dev_set, gen_exploit_set, ClaimKind, DissimilaritySample, Label};
use shsv::evaluation::{eer_global, far_frr};
use shsv::experiment::{batch_eer, prepare_run, run_experiment, run_seed, train_sgd, train_svm};
use shsv::featurestore::{generate_synthetic, FeatureVector, SelectionOrder, SplitConfig, SynthConfig};
use shsv::linear_sgd::{LinearModel, SgdParams};
use shsv::rbf_svm::{fit_smo, kkt_audit, SmoParams};
use shsv::rng::SplitMix64;
use shsv::stream::{build_stream, causality_violations, prequential_run, static_run, UpdatePolicy};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn pair_counts() -> Outcome {
    let d = generate_synthetic(&SynthConfig {
        writer_count: 12,
        dim: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let users: Vec<u32> = (0..12).collect();
    let mut parts = Vec::new();
    for n in [2usize, 4, 8, 12] {
        let cfg = SplitConfig {
            dev_genuine_per_user: n,
            ..SplitConfig::default()
        };
        let dev = gen_dev_set(&d, &users, &cfg).unwrap();
        let mut per_user: HashMap<u32, (usize, usize)> = HashMap::new();
        for s in dev.samples() {
            let e = per_user.entry(s.meta.claimant).or_default();
            match s.label {
                Label::Positive => e.0 += 1,
                Label::Negative => e.1 += 1,
            }
        }
        let (pos, neg) = (n * (n - 1) / 2, (n - 1) * (n / 2));
        let ok = per_user.len() == users.len() && per_user.values().all(|&c| c == (pos, neg)) && pos == neg;
        if !ok {
            return Err(format!("nD_G={n}: expected {pos}/{neg} per user, got {per_user:?}"));
        }
        parts.push(format!("nD_G={n}: {pos}+{neg}"));
    }
    Ok(parts.join(", "))
}

fn exploit_cardinality() -> Outcome {
    let d = generate_synthetic(&SynthConfig {
        writer_count: 60,
        genuine_per_writer: 20,
        skilled_per_writer: 10,
        dim: 4,
        ..SynthConfig::default()
    })
    .unwrap();
    let mut rng = SplitMix64::new(42);
    for case in 0..20 {
        let ne = 2 + rng.below(19);
        let cfg = SplitConfig {
            exploit_user_count: ne,
            refs_per_user: 1 + rng.below(10),
            claims_per_user: 1 + rng.below(10),
            selection: if case % 2 == 0 { SelectionOrder::Random } else { SelectionOrder::Chronological },
            seed: rng.next_u64(),
            ..SplitConfig::default()
        };
        let users: Vec<u32> = rng.sample_indices(60, ne).into_iter().map(|u| u as u32).collect();
        let ex = gen_exploit_set(&d, &users, &cfg).unwrap();
        let got = ex.materialize().len();
        let want = ne * cfg.refs_per_user * cfg.claims_per_user * 3;
        if got != want {
            return Err(format!("config {case}: {got} samples, expected {want}"));
        }
    }
    Ok("20 configs match nE*nE_R*nE_C*3".into())
}

fn audit_label(s: &DissimilaritySample) -> bool {
    let same_writer = s.meta.source_writer == s.meta.reference_writer;
    let expected = if s.meta.kind == ClaimKind::Genuine && same_writer {
        Label::Positive
    } else {
        Label::Negative
    };
    let rf_ok = s.meta.kind != ClaimKind::RandomForgery || !same_writer;
    s.label == expected && rf_ok
}

fn dt_suite() -> Outcome {
    let mut rng = SplitMix64::new(3);
    for i in 0..10_000 {
        let n = 1 + rng.below(64);
        let a = FeatureVector::new((0..n).map(|_| 10.0 * rng.normal()).collect()).unwrap();
        let b = FeatureVector::new((0..n).map(|_| 10.0 * rng.normal()).collect()).unwrap();
        let ab = dt(&a, &b).unwrap();
        let ok = ab == dt(&b, &a).unwrap()
            && ab.as_slice().iter().all(|&v| v >= 0.0)
            && dt(&a, &a).unwrap().as_slice().iter().all(|&v| v == 0.0);
        if !ok {
            return Err(format!("pair {i} breaks a DT property"));
        }
    }
    let cfg = ExperimentConfig::default();
    let d = generate_synthetic(&cfg.synth).unwrap();
    let run = prepare_run(&cfg, &d, run_seed(cfg.seed, 0)).unwrap();
    let all: Vec<DissimilaritySample> = run
        .dev
        .samples()
        .iter()
        .cloned()
        .chain(run.exploit.materialize())
        .collect();
    let bad = all.iter().filter(|s| !audit_label(s)).count();
    check(
        bad == 0,
        format!("10000 pairs ok, {} labels audited, {bad} wrong", all.len()),
    )
}

fn sgd_anchor() -> Outcome {
    let mut rng = SplitMix64::new(4);
    let params = SgdParams {
        c: 0.05,
        lr0: 0.01,
        lr_t0: 100.0,
    };
    for _ in 0..10 {
        let dim = 1 + rng.below(16);
        let half = 1 + rng.below(20);
        let batch: Vec<_> = (0..2 * half)
            .map(|i| {
                let x: Vec<f64> = (0..dim).map(|_| rng.normal().abs()).collect();
                sample(&x, if i < half { Label::Positive } else { Label::Negative })
            })
            .collect();
        let obj = LinearModel::new(dim, params).unwrap().objective(&batch).unwrap();
        if obj != 1.0 {
            return Err(format!("zero model objective {obj}"));
        }
    }
    let (mut points, mut worst) = (0, 0.0f64);
    while points < 50 {
        let dim = 2 + rng.below(6);
        let batch: Vec<_> = (0..12)
            .map(|i| {
                let x: Vec<f64> = (0..dim).map(|_| rng.normal().abs()).collect();
                sample(&x, if i % 2 == 0 { Label::Positive } else { Label::Negative })
            })
            .collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let b = rng.normal();
        let m = LinearModel::from_parts(w.clone(), b, 0, params).unwrap();
        let near_kink = batch
            .iter()
            .any(|s| (1.0 - s.label.sign() * m.decision(&s.dvec).unwrap()).abs() < 1e-3);
        if near_kink {
            continue;
        }
        points += 1;
        let (gw, gb) = m.subgradient(&batch).unwrap();
        let h = 1e-6;
        let obj = |w: &[f64], b: f64| {
            LinearModel::from_parts(w.to_vec(), b, 0, params)
                .unwrap()
                .objective(&batch)
                .unwrap()
        };
        let mut fd = Vec::with_capacity(dim + 1);
        for k in 0..dim {
            let (mut up, mut dn) = (w.clone(), w.clone());
            up[k] += h;
            dn[k] -= h;
            fd.push((obj(&up, b) - obj(&dn, b)) / (2.0 * h));
        }
        fd.push((obj(&w, b + h) - obj(&w, b - h)) / (2.0 * h));
        let analytic: Vec<f64> = gw.iter().copied().chain([gb]).collect();
        let num: f64 = fd.iter().zip(&analytic).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let den: f64 = analytic.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        worst = worst.max(num / den);
    }
    check(
        worst <= 1e-5,
        format!("zero-model objective 1.0 on 10 batches, worst gradient rel. error {worst:.2e} at 50 points"),
    )
}

fn smo_oracle() -> Outcome {
    let mut rng = SplitMix64::new(5);
    let mut worst = 0.0f64;
    for inst in 0..20 {
        let n = 2 + rng.below(7);
        let dim = 1 + rng.below(4);
        let c = 0.1 + 4.9 * rng.next_f64();
        let gamma = 0.05 + 2.0 * rng.next_f64();
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..dim).map(|_| rng.normal()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let data: Vec<_> = x
            .iter()
            .zip(&y)
            .map(|(xi, &yi)| sample(xi, if yi > 0.0 { Label::Positive } else { Label::Negative }))
            .collect();
        let fit = fit_smo(&data, &SmoParams { c, gamma, ..SmoParams::default() }, inst).unwrap();
        worst = worst.max((fit.dual_objective - qp_oracle(&x, &y, c, gamma)).abs());
        if !kkt_audit(&data, &fit.alphas, &fit.model, 1e-3).passed() {
            return Err(format!("instance {inst}: KKT audit failed"));
        }
    }
    let d = generate_synthetic(&SynthConfig {
        writer_count: 250,
        genuine_per_writer: 4,
        skilled_per_writer: 1,
        dim: 2048,
        ..SynthConfig::default()
    })
    .unwrap();
    let users: Vec<u32> = (0..250).collect();
    let cfg = SplitConfig {
        dev_genuine_per_user: 2,
        ..SplitConfig::default()
    };
    let dev = gen_dev_set(&d, &users, &cfg).unwrap();
    let fit = fit_smo(dev.samples(), &SmoParams::default(), 1).unwrap();
    let kkt = kkt_audit(dev.samples(), &fit.alphas, &fit.model, 1e-3);
    check(
        worst <= 1e-3 && kkt.passed() && fit.converged,
        format!(
            "worst dual gap {worst:.2e} over 20 instances; dim-2048 set of {} samples: converged {}, {} KKT violations",
            dev.len(),
            fit.converged,
            kkt.violations
        ),
    )
}

fn eer_oracle() -> Outcome {
    let mut rng = SplitMix64::new(6);
    let mut worst_ratio = 0.0f64;
    for set in 0..500 {
        let ng = 1 + rng.below(80);
        let nf = 1 + rng.below(80);
        let g: Vec<f64> = (0..ng).map(|_| rng.next_f64()).collect();
        let f: Vec<f64> = (0..nf).map(|_| rng.next_f64().powi(2)).collect();
        let e = eer_global(&g, &f).unwrap().eer;
        let o = eer_grid(&g, &f, -1e-4, 1.0 + 1e-4, 1e-4);
        let tol = 1.0 / (2.0 * ng.min(nf) as f64);
        worst_ratio = worst_ratio.max((e - o).abs() / tol);
        if (e - o).abs() > tol + 1e-12 {
            return Err(format!("set {set}: eer {e} vs oracle {o}, tol {tol}"));
        }
        let mut prev = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..=200 {
            let (far, frr) = far_frr(&g, &f, k as f64 / 200.0).unwrap();
            if far > prev.0 || frr < prev.1 {
                return Err(format!("set {set}: FAR/FRR sweep not monotone"));
            }
            prev = (far, frr);
        }
    }
    Ok(format!("500 sets, worst |eer - oracle| / tol = {worst_ratio:.3}, sweeps monotone"))
}

fn prequential_checks() -> Outcome {
    let cfg = ExperimentConfig::default();
    let d = generate_synthetic(&cfg.synth).unwrap();
    let seed = run_seed(cfg.seed, 0);
    let run = prepare_run(&cfg, &d, seed).unwrap();
    let stream = build_stream(&run.exploit, seed);
    let sgd = train_sgd(&cfg, &run.dev, seed).unwrap();
    let adaptive = prequential_run(&stream, sgd.clone(), &cfg.stream_config(seed, UpdatePolicy::Adaptive)).unwrap();
    let violations = causality_violations(&adaptive.events, &adaptive.updates);
    let unbalanced = adaptive.updates.iter().filter(|u| u.positives != u.negatives).count();
    let frozen = prequential_run(&stream, sgd.clone(), &cfg.stream_config(seed, UpdatePolicy::Static)).unwrap();
    let batch = static_run(&stream, &sgd).unwrap();
    let equal = frozen.events.len() == batch.len()
        && frozen
            .events
            .iter()
            .zip(&batch)
            .all(|(a, b)| a.score.to_bits() == b.score.to_bits());
    check(
        violations == 0 && unbalanced == 0 && equal && !adaptive.updates.is_empty(),
        format!(
            "{} events, {} updates, {violations} causality violations, {unbalanced} unbalanced updates, static scores bitwise equal: {equal}",
            adaptive.events.len(),
            adaptive.updates.len()
        ),
    )
}

fn drift_experiment(dev_users: usize) -> (f64, f64, f64, f64) {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("selection", "chronological"),
        ("exploit_users", "200"),
        ("run_count", "5"),
        ("svg", "false"),
    ] {
        cfg.set(k, v).unwrap();
    }
    cfg.split.dev_user_count = dev_users;
    cfg.output_dir = tmp.path().to_path_buf();
    let rep = run_experiment(&cfg).unwrap();
    let (a, b) = (rep.shsv.last().unwrap(), rep.svm.last().unwrap());
    (a.skilled.mean, a.skilled.std, b.skilled.mean, b.skilled.std)
}

fn adaptive_beats_static() -> Outcome {
    let mut gaps = Vec::new();
    let mut lines = Vec::new();
    let mut ok = true;
    for nd in [10, 50] {
        let (sgd, sgd_sd, svm, svm_sd) = drift_experiment(nd);
        let pooled = ((sgd_sd * sgd_sd + svm_sd * svm_sd) / 2.0).sqrt();
        let gap = svm - sgd;
        ok &= gap >= pooled;
        gaps.push(gap);
        lines.push(format!(
            "nD={nd}: SHSV {sgd:.4}+-{sgd_sd:.4} vs SVM {svm:.4}+-{svm_sd:.4}, gap {gap:.4} pooled sd {pooled:.4}"
        ));
    }
    ok &= gaps[0] > gaps[1];
    check(ok, lines.join("; "))
}

fn users_beat_signatures() -> Outcome {
    let mut cfg = ExperimentConfig::default();
    for (k, v) in [
        ("synth_dim", "32"),
        ("synth_drift_sigma", "0"),
        ("synth_dim_spread", "0"),
        ("synth_writer_spread", "0"),
        ("synth_style_dims", "2"),
        ("synth_style_scale", "8"),
    ] {
        cfg.set(k, v).unwrap();
    }
    let d = generate_synthetic(&cfg.synth).unwrap();
    let mut means = Vec::new();
    for (users, genuine) in [(50, 2), (10, 12)] {
        let mut c = cfg.clone();
        c.split.dev_user_count = users;
        c.split.dev_genuine_per_user = genuine;
        let (mut sgd, mut svm) = (0.0, 0.0);
        for r in 0..5 {
            let seed = run_seed(c.seed, r);
            let run = prepare_run(&c, &d, seed).unwrap();
            sgd += batch_eer(&train_sgd(&c, &run.dev, seed).unwrap(), &run.exploit).unwrap().skilled.eer / 5.0;
            svm += batch_eer(&train_svm(&c, &run.dev, seed).unwrap().0, &run.exploit).unwrap().skilled.eer / 5.0;
        }
        means.push((sgd, svm));
    }
    let (wide, deep) = (means[0], means[1]);
    check(
        wide.0 <= deep.0 && wide.1 <= deep.1,
        format!(
            "(50 users, 2 G) SGD {:.4} SVM {:.4} vs (10 users, 12 G) SGD {:.4} SVM {:.4}",
            wide.0, wide.1, deep.0, deep.1
        ),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut reports = Vec::new();
    for name in ["a", "b"] {
        let dir = tmp.path().join(name);
        let out = Command::new(env!("CARGO_BIN_EXE_shsv"))
            .args(["run", "--set"])
            .arg(format!("output_dir={}", dir.display()))
            .output()
            .unwrap();
        if !out.status.success() {
            return Err(format!("run failed: {}", String::from_utf8_lossy(&out.stderr)));
        }
        reports.push((
            std::fs::read(dir.join("report_shsv.csv")).unwrap(),
            std::fs::read(dir.join("report_svm.csv")).unwrap(),
        ));
    }
    check(
        reports[0] == reports[1],
        format!("two runs, report sizes {} and {} bytes", reports[0].0.len(), reports[0].1.len()),
    )
}

fn main() {
    let criteria: Vec<(u32, &str, Duration, fn() -> Outcome)> = vec![
        (1, "pair-count identity", Duration::from_secs(1), pair_counts),
        (2, "exploitation cardinality", Duration::from_secs(1), exploit_cardinality),
        (3, "dichotomy transform properties", Duration::from_secs(5), dt_suite),
        (4, "hinge objective anchor and gradient", Duration::from_secs(10), sgd_anchor),
        (5, "SMO oracle equivalence and KKT", Duration::from_secs(60), smo_oracle),
        (6, "EER oracle", Duration::from_secs(30), eer_oracle),
        (7, "prequential causality and balance", Duration::from_secs(60), prequential_checks),
        (8, "adaptive SGD beats static SVM under drift", Duration::from_secs(600), adaptive_beats_static),
        (9, "more users beat more signatures", Duration::from_secs(300), users_beat_signatures),
        (10, "determinism of run reports", Duration::from_secs(600), determinism),
    ];
    let mut failed = 0;
    for (id, name, budget, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over time budget {budget:?}")),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "criterion {id:>2} {}: {name}: {detail} ({:.1}s)",
            if ok { "PASS" } else { "FAIL" },
            took.as_secs_f64()
        );
    }
    if failed > 0 {
        println!("acceptance: {failed} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
