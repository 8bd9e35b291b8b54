use std::path::Path;
use std::process::{Command, Output};

use shsv::featurestore::load_dataset;
use shsv::preprocess::{read_pgm, write_pgm, GrayImage};

fn shsv(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_shsv"))
        .args(args)
        .output()
        .expect("run shsv")
}

fn summary(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .find(|l| l.starts_with("#SUMMARY"))
        .unwrap_or_default()
        .to_string()
}

fn small_run_args(out_dir: &Path) -> Vec<String> {
    [
        "synth_writers=40",
        "synth_genuine=10",
        "synth_skilled=4",
        "synth_dim=8",
        "dev_users=8",
        "dev_genuine=4",
        "exploit_users=12",
        "refs_per_user=4",
        "claims_per_user=4",
        "run_count=1",
    ]
    .iter()
    .flat_map(|kv| ["--set".to_string(), kv.to_string()])
    .chain(["--set".to_string(), format!("output_dir={}", out_dir.display())])
    .collect()
}

#[test]
fn synth_is_loadable_and_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.shsv");
    let b = tmp.path().join("b.shsv");
    for p in [&a, &b] {
        let out = shsv(&["synth", "--set", "seed=11", "--set", "synth_writers=20", "--out", p.to_str().unwrap()]);
        assert!(out.status.success());
        assert!(summary(&out).contains("writers=20"));
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(load_dataset(&a).unwrap().writer_count(), 20);
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let out_path = tmp.path().join("x.shsv");
    let out = shsv(&["synth", "--set", "synth_genuine_sigma=-0.5", "--out", out_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("config error"));
    let cfg = tmp.path().join("bad.conf");
    std::fs::write(&cfg, "not_a_key = 3\n").unwrap();
    let out = shsv(&["run", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn data_errors_exit_3() {
    let tmp = tempfile::tempdir().unwrap();
    let bogus = tmp.path().join("bogus.shsv");
    std::fs::write(&bogus, b"nope").unwrap();
    let out = shsv(&["run", "--set", &format!("dataset={}", bogus.display())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn preprocess_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let (inp, outp) = (tmp.path().join("in"), tmp.path().join("out"));
    std::fs::create_dir_all(&inp).unwrap();

    let empty = shsv(&[
        "preprocess", "--in-dir", inp.to_str().unwrap(), "--out-dir", outp.to_str().unwrap(),
        "--canvas-w", "300", "--canvas-h", "200",
    ]);
    assert!(empty.status.success());
    assert!(summary(&empty).contains("processed=0 skipped=0"));

    std::fs::write(inp.join("notes.txt"), "hello").unwrap();
    let only_bad = shsv(&[
        "preprocess", "--in-dir", inp.to_str().unwrap(), "--out-dir", outp.to_str().unwrap(),
        "--canvas-w", "300", "--canvas-h", "200",
    ]);
    assert_eq!(only_bad.status.code(), Some(3));

    let px: Vec<u8> = (0..60 * 40).map(|i| if i % 9 == 0 { 20 } else { 240 }).collect();
    write_pgm(&GrayImage::new(60, 40, px).unwrap(), inp.join("sig.pgm")).unwrap();
    let out = shsv(&[
        "preprocess", "--in-dir", inp.to_str().unwrap(), "--out-dir", outp.to_str().unwrap(),
        "--canvas-w", "300", "--canvas-h", "200",
    ]);
    assert!(out.status.success());
    assert!(summary(&out).contains("processed=1 skipped=1"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("otsu_threshold="));
    let img = read_pgm(outp.join("sig.pgm")).unwrap();
    assert_eq!((img.height(), img.width()), (150, 220));
}

#[test]
fn split_train_and_import() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("split");
    let out = shsv(&[
        "split", "--set", "synth_writers=200", "--set", "dev_users=10", "--set", "dev_genuine=4",
        "--out-dir", dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(summary(&out).contains("positives=60 negatives=60"));
    let roles = std::fs::read_to_string(dir.join("split.csv")).unwrap();
    assert_eq!(roles.lines().count(), 1 + 10 + 100);

    let models = tmp.path().join("models");
    let out = shsv(&[
        "train", "--devset", dir.join("devset.shdv").to_str().unwrap(),
        "--out-dir", models.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(summary(&out).contains("samples=120"));
    assert!(models.join("sgd.shwm").exists() && models.join("svm.shkm").exists());

    let csv = tmp.path().join("f.csv");
    std::fs::write(&csv, "writer_id,kind,seq,f0,f1\n1,G,0,0.5,1\n1,SK,0,2,3\n2,genuine,0,1,1\n").unwrap();
    let ds = tmp.path().join("f.shsv");
    let out = shsv(&["import-csv", "--input", csv.to_str().unwrap(), "--out", ds.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(summary(&out).contains("records=3"));
}

#[test]
fn run_then_report_reproduces_and_single_run_has_zero_std() {
    let tmp = tempfile::tempdir().unwrap();
    let out_dir = tmp.path().join("exp");
    let args = small_run_args(&out_dir);
    let mut argv = vec!["run"];
    argv.extend(args.iter().map(String::as_str));
    let out = shsv(&argv);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(summary(&out).starts_with("#SUMMARY cmd=run runs=1"));

    let report = std::fs::read_to_string(out_dir.join("report_shsv.csv")).unwrap();
    let mut lines = report.lines();
    assert_eq!(lines.next().unwrap(), shsv::evaluation::REPORT_HEADER);
    for line in lines {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 9);
        for k in [2, 4, 6] {
            assert_eq!(cols[k], "0", "{line}");
        }
        assert_eq!(cols[8], "1");
    }

    let again = tmp.path().join("again.csv");
    let log = out_dir.join("run_0/events_shsv.csv");
    let out = shsv(&[
        "report", "--w-size", "36", "--w-step", "12", "--out", again.to_str().unwrap(), log.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert_eq!(std::fs::read_to_string(again).unwrap(), report);

    let empty = tmp.path().join("empty.csv");
    std::fs::write(&empty, format!("{}\n", shsv::stream::EVENT_LOG_HEADER)).unwrap();
    let out = shsv(&["report", "--w-size", "36", "--w-step", "12", empty.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3));
}
