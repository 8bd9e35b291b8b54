//! Command-line interface. Every subcommand ends with one `#SUMMARY` line on
//! stdout; failures exit with 2 (config), 3 (data) or 4 (numerical).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::ExperimentConfig;
use crate::dissimilarity::{read_devset, write_devset};
use crate::error::{Error, Result};
use crate::evaluation::report_csv;
use crate::experiment::{
    load_or_synthesize, prepare_run, report_from_logs, run_experiment, run_seed, synth_config, train_sgd,
    train_svm, write_text,
};
use crate::featurestore::{generate_synthetic, import_csv, save_dataset};
use crate::preprocess::{preprocess, read_pgm, write_pgm, PipelineConfig};

#[derive(Debug, Parser)]
#[command(name = "shsv", version, about = "Stream-based writer-independent signature verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ConfigArgs {
    /// Config file of `key = value` lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override one key, applied after the file; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl ConfigArgs {
    pub fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got {kv:?}")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic feature dataset.
    Synth {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the image pipeline over every PGM file in a directory.
    Preprocess {
        #[arg(long)]
        in_dir: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        canvas_w: usize,
        #[arg(long)]
        canvas_h: usize,
    },
    /// Convert a feature CSV (writer_id,kind,seq,f0,...) into a dataset file.
    ImportCsv {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Split users and write the development set of run 0.
    Split {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Train the linear and kernel models on a development set file.
    Train {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        devset: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Full experiment: every run, event logs, reports and chart.
    Run {
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Recompute a report from event logs, one per run.
    Report {
        #[arg(long)]
        w_size: usize,
        #[arg(long)]
        w_step: usize,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
}

/// Execute a parsed command and return its `#SUMMARY` line.
pub fn execute(cmd: &Command) -> Result<String> {
    match cmd {
        Command::Synth { config, out } => {
            let cfg = config.load()?;
            let ds = generate_synthetic(&synth_config(&cfg))?;
            save_dataset(&ds, out)?;
            Ok(format!(
                "#SUMMARY cmd=synth writers={} records={} dim={} out={}",
                ds.writer_count(),
                ds.len(),
                ds.dim(),
                out.display()
            ))
        }
        Command::Preprocess {
            in_dir,
            out_dir,
            canvas_w,
            canvas_h,
        } => cmd_preprocess(in_dir, out_dir, *canvas_w, *canvas_h),
        Command::ImportCsv { input, out } => {
            let ds = import_csv(input)?;
            save_dataset(&ds, out)?;
            Ok(format!(
                "#SUMMARY cmd=import-csv writers={} records={} dim={} out={}",
                ds.writer_count(),
                ds.len(),
                ds.dim(),
                out.display()
            ))
        }
        Command::Split { config, out_dir } => {
            let cfg = config.load()?;
            let ds = load_or_synthesize(&cfg)?;
            let run = prepare_run(&cfg, &ds, run_seed(cfg.seed, 0))?;
            fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            let mut roles = String::from("writer_id,role\n");
            for (ids, role) in [(&run.split.dev, "dev"), (&run.split.exploit, "exploit")] {
                for id in ids.iter() {
                    roles.push_str(&format!("{id},{role}\n"));
                }
            }
            write_text(&out_dir.join("split.csv"), &roles)?;
            let path = out_dir.join("devset.shdv");
            fs::write(&path, write_devset(&run.dev)?).map_err(|e| Error::io(&path, e))?;
            Ok(format!(
                "#SUMMARY cmd=split dev_users={} exploit_users={} positives={} negatives={} exploit_samples={}",
                run.split.dev.len(),
                run.split.exploit.len(),
                run.dev.positives_count(),
                run.dev.negatives_count(),
                run.exploit.materialize().len()
            ))
        }
        Command::Train {
            config,
            devset,
            out_dir,
        } => {
            let cfg = config.load()?;
            let bytes = fs::read(devset).map_err(|e| Error::io(devset, e))?;
            let dev = read_devset(&bytes)?;
            let seed = run_seed(cfg.seed, 0);
            let sgd = train_sgd(&cfg, &dev, seed)?;
            let (svm, converged) = train_svm(&cfg, &dev, seed)?;
            fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
            sgd.save(out_dir.join("sgd.shwm"))?;
            svm.save(out_dir.join("svm.shkm"))?;
            Ok(format!(
                "#SUMMARY cmd=train samples={} sgd_steps={} svm_support_vectors={} svm_converged={converged}",
                dev.len(),
                sgd.step_count(),
                svm.sv_count()
            ))
        }
        Command::Run { config } => {
            let cfg = config.load()?;
            let rep = run_experiment(&cfg)?;
            let last = |a: &crate::evaluation::RunAggregate| {
                a.last()
                    .map(|w| format!("{}", w.skilled.mean))
                    .unwrap_or_else(|| "none".into())
            };
            Ok(format!(
                "#SUMMARY cmd=run runs={} events_per_run={} updates={} windows={} final_eer_skilled_shsv={} final_eer_skilled_svm={} svm_unconverged={} out={}",
                cfg.run_count,
                rep.events_per_run,
                rep.updates,
                rep.shsv.windows.len(),
                last(&rep.shsv),
                last(&rep.svm),
                rep.svm_unconverged,
                cfg.output_dir.display()
            ))
        }
        Command::Report {
            w_size,
            w_step,
            out,
            logs,
        } => {
            let agg = report_from_logs(logs, *w_size, *w_step)?;
            let csv = report_csv(&agg);
            match out {
                Some(p) => write_text(p, &csv)?,
                None => print!("{csv}"),
            }
            Ok(format!(
                "#SUMMARY cmd=report runs={} windows={}",
                agg.run_count,
                agg.windows.len()
            ))
        }
    }
}

fn cmd_preprocess(in_dir: &Path, out_dir: &Path, canvas_w: usize, canvas_h: usize) -> Result<String> {
    let cfg = PipelineConfig::with_canvas(canvas_w, canvas_h);
    let mut entries: Vec<PathBuf> = fs::read_dir(in_dir)
        .map_err(|e| Error::io(in_dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    entries.sort();
    if entries.is_empty() {
        eprintln!("warning: no files in {}", in_dir.display());
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (mut done, mut skipped) = (0usize, 0usize);
    for path in &entries {
        let result = read_pgm(path).and_then(|img| preprocess(&img, &cfg)).and_then(|(img, t)| {
            write_pgm(&img, out_dir.join(path.file_name().expect("file")))?;
            Ok(t)
        });
        match result {
            Ok(t) => {
                eprintln!("{}: otsu_threshold={t}", path.display());
                done += 1;
            }
            Err(e) => {
                eprintln!("warning: skipping {}: {e}", path.display());
                skipped += 1;
            }
        }
    }
    if done == 0 && skipped > 0 {
        return Err(Error::Data(format!(
            "none of the {skipped} files in {} could be processed",
            in_dir.display()
        )));
    }
    Ok(format!("#SUMMARY cmd=preprocess processed={done} skipped={skipped}"))
}

/// Parse `args` (including the program name), execute, and return the exit
/// code after printing the summary or the error.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
