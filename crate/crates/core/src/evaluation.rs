//! Score fusion, error rates, global-threshold EER, windowed metrics and
//! multi-run aggregation.

use std::fmt::Write as _;

use crate::dissimilarity::ClaimKind;
use crate::error::{Error, Result};
use crate::stream::VerificationEvent;

/// Largest score.
pub fn fuse_max(scores: &[f64]) -> Result<f64> {
    scores
        .iter()
        .copied()
        .reduce(f64::max)
        .ok_or_else(|| Error::Data("cannot fuse an empty score list".into()))
}

fn check_classes(genuine: &[f64], forgery: &[f64]) -> Result<()> {
    if genuine.is_empty() || forgery.is_empty() {
        return Err(Error::Data(format!(
            "error rates need both classes ({} genuine, {} forgery scores)",
            genuine.len(),
            forgery.len()
        )));
    }
    Ok(())
}

/// `(FAR, FRR)` at threshold `tau`; a claim is accepted iff `score >= tau`.
pub fn far_frr(genuine: &[f64], forgery: &[f64], tau: f64) -> Result<(f64, f64)> {
    check_classes(genuine, forgery)?;
    let accepted = forgery.iter().filter(|&&s| s >= tau).count();
    let rejected = genuine.iter().filter(|&&s| s < tau).count();
    Ok((
        accepted as f64 / forgery.len() as f64,
        rejected as f64 / genuine.len() as f64,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eer {
    pub eer: f64,
    pub threshold: f64,
    pub far: f64,
    pub frr: f64,
}

/// Global-threshold EER.
///
/// Candidate thresholds are every distinct score plus `-inf` and `+inf`. The
/// candidate with the smallest `|FAR - FRR|` wins, the smallest threshold on
/// ties, and the EER is `(FAR + FRR) / 2` there.
pub fn eer_global(genuine: &[f64], forgery: &[f64]) -> Result<Eer> {
    check_classes(genuine, forgery)?;
    if genuine.iter().chain(forgery).any(|s| s.is_nan()) {
        return Err(Error::Numerical("NaN score in EER computation".into()));
    }
    let mut g = genuine.to_vec();
    let mut f = forgery.to_vec();
    g.sort_by(f64::total_cmp);
    f.sort_by(f64::total_cmp);
    let mut candidates: Vec<f64> = g.iter().chain(&f).copied().collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    let (ng, nf) = (g.len() as i128, f.len() as i128);
    // At tau = -inf every forgery is accepted and no genuine rejected.
    let mut best = (nf * ng, f64::NEG_INFINITY, nf, 0i128);
    let (mut gi, mut fi) = (0usize, 0usize);
    for &tau in candidates.iter().chain(std::iter::once(&f64::INFINITY)) {
        while gi < g.len() && g[gi] < tau {
            gi += 1;
        }
        while fi < f.len() && f[fi] < tau {
            fi += 1;
        }
        let accepted = nf - fi as i128;
        let rejected = gi as i128;
        // |FAR - FRR| scaled by nf * ng, exact in integers.
        let gap = (accepted * ng - rejected * nf).abs();
        if gap < best.0 {
            best = (gap, tau, accepted, rejected);
        }
    }
    let far = best.2 as f64 / nf as f64;
    let frr = best.3 as f64 / ng as f64;
    Ok(Eer {
        eer: 0.5 * (far + frr),
        threshold: best.1,
        far,
        frr,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct KindCounts {
    pub genuine: usize,
    pub random: usize,
    pub skilled: usize,
}

/// Metrics over `w_size` consecutive events. An EER is `None` when the window
/// lacks one of its two classes.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsWindow {
    pub start: usize,
    pub eer_skilled: Option<Eer>,
    pub eer_random: Option<Eer>,
    pub eer_combined: Option<Eer>,
    pub counts: KindCounts,
}

impl MetricsWindow {
    pub fn is_complete(&self) -> bool {
        self.eer_skilled.is_some() && self.eer_random.is_some() && self.eer_combined.is_some()
    }
}

fn window_metrics(start: usize, events: &[VerificationEvent]) -> Result<MetricsWindow> {
    let mut g = Vec::new();
    let mut rf = Vec::new();
    let mut sk = Vec::new();
    for e in events {
        match e.kind {
            ClaimKind::Genuine => g.push(e.score),
            ClaimKind::RandomForgery => rf.push(e.score),
            ClaimKind::SkilledForgery => sk.push(e.score),
        }
    }
    let both: Vec<f64> = rf.iter().chain(&sk).copied().collect();
    let eer = |f: &[f64]| -> Result<Option<Eer>> {
        if g.is_empty() || f.is_empty() {
            Ok(None)
        } else {
            eer_global(&g, f).map(Some)
        }
    };
    Ok(MetricsWindow {
        start,
        eer_skilled: eer(&sk)?,
        eer_random: eer(&rf)?,
        eer_combined: eer(&both)?,
        counts: KindCounts {
            genuine: g.len(),
            random: rf.len(),
            skilled: sk.len(),
        },
    })
}

/// Windows of `w_size` events starting at `0, w_step, 2 w_step, ...`; a
/// trailing partial window is dropped.
pub fn windowed_metrics(
    events: &[VerificationEvent],
    w_size: usize,
    w_step: usize,
) -> Result<Vec<MetricsWindow>> {
    if w_size == 0 || w_step == 0 || w_step > w_size {
        return Err(Error::Config(format!(
            "window needs 0 < w_step <= w_size, got w_size {w_size}, w_step {w_step}"
        )));
    }
    let mut out = Vec::new();
    let mut start = 0;
    while start + w_size <= events.len() {
        out.push(window_metrics(start, &events[start..start + w_size])?);
        start += w_step;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanStd {
    pub mean: f64,
    pub std: f64,
}

/// Sample mean and `n - 1` standard deviation; the deviation is 0 for a
/// single value.
pub fn mean_std(values: &[f64]) -> Result<MeanStd> {
    if values.is_empty() {
        return Err(Error::Data("mean of an empty list".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Ok(MeanStd { mean, std })
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateWindow {
    pub start: usize,
    pub skilled: MeanStd,
    pub random: MeanStd,
    pub combined: MeanStd,
    pub threshold_mean: f64,
    pub n_runs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunAggregate {
    pub windows: Vec<AggregateWindow>,
    pub run_count: usize,
}

impl RunAggregate {
    pub fn last(&self) -> Option<&AggregateWindow> {
        self.windows.last()
    }
}

/// Per-window mean and standard deviation across runs. Windows missing an
/// EER in any run are left out; `threshold_mean` averages the skilled EER
/// thresholds.
pub fn aggregate_runs(runs: &[Vec<MetricsWindow>]) -> Result<RunAggregate> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Data("no runs to aggregate".into()))?;
    for (r, run) in runs.iter().enumerate() {
        if run.len() != first.len() {
            return Err(Error::Data(format!(
                "run {r} has {} windows, run 0 has {}",
                run.len(),
                first.len()
            )));
        }
    }
    let mut windows = Vec::new();
    for w in 0..first.len() {
        if !runs.iter().all(|run| run[w].is_complete()) {
            continue;
        }
        let collect = |pick: fn(&MetricsWindow) -> Option<Eer>| -> Vec<Eer> {
            runs.iter().map(|run| pick(&run[w]).expect("complete")).collect()
        };
        let sk = collect(|m| m.eer_skilled);
        let rf = collect(|m| m.eer_random);
        let co = collect(|m| m.eer_combined);
        let stat = |v: &[Eer]| mean_std(&v.iter().map(|e| e.eer).collect::<Vec<_>>());
        let thresholds: Vec<f64> = sk.iter().map(|e| e.threshold).collect();
        windows.push(AggregateWindow {
            start: first[w].start,
            skilled: stat(&sk)?,
            random: stat(&rf)?,
            combined: stat(&co)?,
            threshold_mean: thresholds.iter().sum::<f64>() / thresholds.len() as f64,
            n_runs: runs.len(),
        });
    }
    Ok(RunAggregate {
        windows,
        run_count: runs.len(),
    })
}

pub const REPORT_HEADER: &str = "window_start,eer_skilled_mean,eer_skilled_std,eer_random_mean,eer_random_std,eer_combined_mean,eer_combined_std,threshold_mean,n_runs";

/// Report CSV text. Numbers use the shortest representation that reads back
/// to the same value.
pub fn report_csv(agg: &RunAggregate) -> String {
    let mut out = String::from(REPORT_HEADER);
    out.push('\n');
    for w in &agg.windows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            w.start,
            w.skilled.mean,
            w.skilled.std,
            w.random.mean,
            w.random.std,
            w.combined.mean,
            w.combined.std,
            w.threshold_mean,
            w.n_runs
        )
        .expect("write to string");
    }
    out
}

/// Line chart of the skilled-forgery EER per window for one or more named
/// series, as standalone SVG.
pub fn svg_chart(series: &[(&str, &RunAggregate)]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 400.0;
    const M: f64 = 50.0;
    const COLORS: [&str; 6] = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"];
    let x_max = series
        .iter()
        .flat_map(|(_, a)| a.windows.iter().map(|w| w.start))
        .max()
        .unwrap_or(0)
        .max(1) as f64;
    let y_max = series
        .iter()
        .flat_map(|(_, a)| a.windows.iter().map(|w| w.skilled.mean + w.skilled.std))
        .fold(0.0f64, f64::max)
        .max(0.05);
    let px = |x: f64| M + x / x_max * (W - 2.0 * M);
    let py = |y: f64| H - M - y / y_max * (H - 2.0 * M);

    let mut s = String::new();
    writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#
    )
    .unwrap();
    writeln!(s, r#"<rect width="{W}" height="{H}" fill="white"/>"#).unwrap();
    writeln!(
        s,
        r#"<path d="M{M} {} L{M} {} L{} {}" stroke="black" fill="none"/>"#,
        M,
        H - M,
        W - M,
        H - M
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">window start</text>"#,
        W / 2.0,
        H - 15.0
    )
    .unwrap();
    writeln!(
        s,
        r#"<text x="15" y="{}" font-size="12" transform="rotate(-90 15 {})" text-anchor="middle">EER (skilled)</text>"#,
        H / 2.0,
        H / 2.0
    )
    .unwrap();
    for (k, frac) in [0.0, 0.5, 1.0].iter().enumerate() {
        let y = y_max * frac;
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="10" text-anchor="end" data-tick="{k}">{:.3}</text>"#,
            M - 5.0,
            py(y) + 3.0,
            y
        )
        .unwrap();
    }
    for (i, (name, agg)) in series.iter().enumerate() {
        let color = COLORS[i % COLORS.len()];
        let mut d = String::new();
        for (j, w) in agg.windows.iter().enumerate() {
            let cmd = if j == 0 { 'M' } else { 'L' };
            write!(d, "{cmd}{:.2} {:.2} ", px(w.start as f64), py(w.skilled.mean)).unwrap();
        }
        writeln!(
            s,
            r#"<path d="{}" stroke="{color}" stroke-width="2" fill="none"/>"#,
            d.trim_end()
        )
        .unwrap();
        writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12" fill="{color}">{}</text>"#,
            W - M - 100.0,
            M + 15.0 * i as f64,
            escape(name)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}
