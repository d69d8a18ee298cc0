use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rnr_core::datasetio::{read_manifest, GeneratorConfig};
use rnr_core::degrade::{apply_fog, FogLayer};
use rnr_core::grpo::{read_checkpoint, render_checkpoint, TrainConfig, TrainState};
use rnr_core::imgcore::io::{read_png, write_png};
use rnr_core::imgcore::psnr;
use rnr_core::scene::{indexed_scene, test_chart};

fn rnr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rnr"))
        .args(args)
        .env_remove("REASON_RESTORE_JOBS")
        .output()
        .expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn clean_dir(n: u64, side: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for i in 0..n {
        write_png(dir.path().join(format!("{i:02}.png")), &indexed_scene(11, i, side, side).unwrap()).unwrap();
    }
    dir
}

fn tree(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = vec![];
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((path.strip_prefix(root).unwrap().to_path_buf(), fs::read(&path).unwrap()));
            }
        }
    }
    out.sort();
    out
}

/// A generated dataset under a temp root.
fn dataset(n: u64) -> tempfile::TempDir {
    let input = clean_dir(n, 40);
    let root = tempfile::tempdir().unwrap();
    let ds = root.path().join("ds");
    let o = rnr(&["degrade", "--clean", p(input.path()), "--out", p(&ds), "--seed", "7"]);
    assert!(o.status.success(), "{}", stderr(&o));
    root
}

#[test]
fn degrade_writes_a_manifest_and_is_deterministic() {
    let input = clean_dir(5, 40);
    let out = tempfile::tempdir().unwrap();
    let (a, b) = (out.path().join("a"), out.path().join("b"));
    for dir in [&a, &b] {
        let o = rnr(&["degrade", "--clean", p(input.path()), "--out", p(dir), "--seed", "7"]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        assert!(stdout(&o).contains("5 records"));
    }
    assert_eq!(read_manifest(&a).unwrap().record_count, 5);
    assert_eq!(tree(&a), tree(&b));
}

#[test]
fn missing_clean_flag_is_a_usage_error() {
    let o = rnr(&["degrade", "--out", "ds"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--clean"));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn help_exits_zero() {
    assert_eq!(rnr(&["--help"]).status.code(), Some(0));
}

#[test]
fn missing_input_directory_is_an_io_error() {
    let out = tempfile::tempdir().unwrap();
    let o = rnr(&["degrade", "--clean", "/nonexistent/rnr-input", "--out", p(out.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("--clean"));
}

#[test]
fn bad_generator_config_names_the_flag() {
    let input = clean_dir(2, 40);
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gen.json");
    fs::write(&cfg, r#"{"test_fraction": 3.0}"#).unwrap();
    let o = rnr(&["degrade", "--clean", p(input.path()), "--out", p(&dir.path().join("ds")), "--config", p(&cfg)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--config"), "{}", stderr(&o));

    let cfg_ok = dir.path().join("ok.json");
    let config = GeneratorConfig {
        test_fraction: 0.5,
        ..GeneratorConfig::default()
    };
    fs::write(&cfg_ok, serde_json::to_string(&config).unwrap()).unwrap();
    let o = rnr(&["degrade", "--clean", p(input.path()), "--out", p(&dir.path().join("ds")), "--config", p(&cfg_ok)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_manifest(&dir.path().join("ds")).unwrap().config, config);
}

#[test]
fn diagnose_fans_out_over_a_directory() {
    let dir = clean_dir(10, 40);
    let o = rnr(&["diagnose", p(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert_eq!(out.lines().count(), 11);
    assert!(out.starts_with("image\tfog\tshake\train\tnoise\n"));
    for i in 0..10 {
        let report = fs::read_to_string(dir.path().join(format!("{i:02}.report.txt"))).unwrap();
        assert!(report.starts_with("Report schema: rnr-report/1\n"), "{report}");
    }
}

#[test]
fn clean_chart_reports_no_degradations() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("chart.png");
    write_png(&img, &test_chart(96, 96).unwrap()).unwrap();
    let o = rnr(&["diagnose", p(&img)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let report = fs::read_to_string(dir.path().join("chart.report.txt")).unwrap();
    let verdicts: Vec<_> = report.lines().filter(|l| l.contains("(")).collect();
    assert_eq!(verdicts.len(), 4, "{report}");
    assert!(verdicts.iter().all(|l| l.contains(": No (")), "{report}");
}

#[test]
fn record_format_emits_json() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("a.png");
    write_png(&img, &indexed_scene(1, 0, 40, 40).unwrap()).unwrap();
    let o = rnr(&["diagnose", p(&img), "--format", "record"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("a.report.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["schema"], "rnr-report/1");
    assert_eq!(v["report"]["presence"].as_array().unwrap().len(), 4);
}

#[test]
fn undecodable_image_is_a_partial_failure() {
    let dir = clean_dir(3, 40);
    fs::write(dir.path().join("zz.png"), b"not a png").unwrap();
    let o = rnr(&["diagnose", p(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(stdout(&o).lines().count(), 4);
    assert!(stderr(&o).contains("zz.png"));
    assert!(dir.path().join("02.report.txt").exists());
}

#[test]
fn restore_without_checkpoint_warns_and_keeps_clean_inputs() {
    let dir = tempfile::tempdir().unwrap();
    let img = dir.path().join("chart.png");
    let chart = test_chart(96, 96).unwrap();
    write_png(&img, &chart).unwrap();
    let out = dir.path().join("out");
    let o = rnr(&["restore", p(&img), "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"));
    let restored = read_png(out.join("chart.png")).unwrap();
    assert!(psnr(&restored, &read_png(&img).unwrap()).unwrap() >= 35.0);
}

#[test]
fn restore_uses_checkpoint_and_rejects_other_versions() {
    let dir = tempfile::tempdir().unwrap();
    let clean = indexed_scene(5, 0, 64, 64).unwrap();
    let foggy = apply_fog(&clean, &FogLayer::uniform([0.9, 0.9, 0.92], 0.4, 64, 64).unwrap()).unwrap();
    let img = dir.path().join("fog.png");
    write_png(&img, &foggy).unwrap();

    let ckpt = dir.path().join("policy.ckpt");
    let state = TrainState::new(TrainConfig::default()).unwrap();
    fs::write(&ckpt, render_checkpoint(&state)).unwrap();
    let (with, without) = (dir.path().join("with"), dir.path().join("without"));
    let o = rnr(&["restore", p(&img), "--out", p(&with), "--checkpoint", p(&ckpt)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(!stderr(&o).contains("warning"));
    assert_eq!(rnr(&["restore", p(&img), "--out", p(&without)]).status.code(), Some(0));
    // A zero offset reproduces the report-seeded restoration.
    assert_eq!(fs::read(with.join("fog.png")).unwrap(), fs::read(without.join("fog.png")).unwrap());
    let restored = read_png(with.join("fog.png")).unwrap();
    assert!(psnr(&restored, &clean).unwrap() > psnr(&read_png(&img).unwrap(), &clean).unwrap());

    fs::write(&ckpt, render_checkpoint(&state).replace("rnr-checkpoint/1", "rnr-checkpoint/2")).unwrap();
    let o = rnr(&["restore", p(&img), "--out", p(&with), "--checkpoint", p(&ckpt)]);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("rnr-checkpoint/2") && err.contains("rnr-checkpoint/1"), "{err}");
}

#[test]
fn train_writes_checkpoint_and_log_deterministically() {
    let root = dataset(6);
    let ds = root.path().join("ds");
    let (a, b) = (root.path().join("a"), root.path().join("b"));
    for out in [&a, &b] {
        let o = rnr(&[
            "train", "--dataset", p(&ds), "--out", p(out), "--steps", "5", "--group", "4", "--seed", "7", "--batch", "2",
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    let log = fs::read_to_string(a.join("train_log.tsv")).unwrap();
    assert_eq!(log.lines().count(), 5);
    assert!(log.lines().all(|l| l.split('\t').count() == 5));
    assert_eq!(log, fs::read_to_string(b.join("train_log.tsv")).unwrap());
    let state = read_checkpoint(a.join("policy.ckpt")).unwrap();
    assert_eq!(state.step, 5);
    assert_eq!(state.config.seed, 7);
    assert!(!a.join("policy.ckpt.tmp").exists());
}

#[test]
fn zero_learning_rate_leaves_the_policy_unchanged() {
    let root = dataset(4);
    let out = root.path().join("t");
    let o = rnr(&[
        "train", "--dataset", p(&root.path().join("ds")), "--out", p(&out), "--steps", "3", "--group", "3", "--lr", "0",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(read_checkpoint(out.join("policy.ckpt")).unwrap().offset, [0.0; 7]);
}

#[test]
fn invalid_training_flags_are_named() {
    let root = dataset(3);
    let ds = root.path().join("ds");
    let out = root.path().join("t");
    for (flag, value) in [("--group", "1"), ("--lr", "-0.5"), ("--tau", "-1"), ("--tau", "warm"), ("--steps", "0")] {
        let o = rnr(&["train", "--dataset", p(&ds), "--out", p(&out), flag, value]);
        assert_eq!(o.status.code(), Some(1), "{flag} {value}");
        let err = stderr(&o);
        assert!(err.contains(flag.trim_start_matches('-')), "{flag}: {err}");
    }
    assert!(!out.join("policy.ckpt").exists());
}

#[test]
fn eval_scores_and_flags_missing_restorations() {
    let root = dataset(4);
    let ds = root.path().join("ds");
    let perfect = rnr(&["eval", "--dataset", p(&ds), "--restored", p(&ds.join("clean"))]);
    assert_eq!(perfect.status.code(), Some(0), "{}", stderr(&perfect));
    assert!(stdout(&perfect).ends_with("MEAN\t99.0000\t1.000000\n"));

    let table = root.path().join("table.tsv");
    let degraded = rnr(&["eval", "--dataset", p(&ds), "--restored", p(&ds.join("degraded")), "--out", p(&table)]);
    assert_eq!(degraded.status.code(), Some(0));
    assert_eq!(fs::read_to_string(&table).unwrap(), stdout(&degraded));
    let mean = stdout(&degraded).lines().last().unwrap().split('\t').nth(1).unwrap().parse::<f64>().unwrap();
    assert!(mean < 99.0);

    let partial = root.path().join("partial");
    fs::create_dir(&partial).unwrap();
    fs::copy(ds.join("clean/00000.png"), partial.join("00000.png")).unwrap();
    let o = rnr(&["eval", "--dataset", p(&ds), "--restored", p(&partial)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("missing"));
}

#[test]
fn zero_jobs_is_rejected() {
    let o = rnr(&["--jobs", "0", "diagnose", "."]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--jobs"));
}
