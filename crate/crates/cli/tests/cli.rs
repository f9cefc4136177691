use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use physimage::dataset::DatasetManifest;
use physimage::encoders::{EncoderKind, EncoderSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_physimage"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Relative path -> bytes for every file under `root`.
fn tree(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Small cohort written and encoded under `root`; returns the dataset root.
fn small_datasets(root: &Path) -> PathBuf {
    let (sessions, datasets) = (root.join("sessions"), root.join("datasets"));
    ok(&["synth", "--out", s(&sessions), "--users", "3", "--scale", "0", "--min-windows", "60"]);
    ok(&["encode", "--input", s(&sessions), "--out", s(&datasets)]);
    datasets
}

#[test]
fn synth_writes_one_directory_per_user_and_is_repeatable() {
    let d = tempfile::tempdir().unwrap();
    let (a, b) = (d.path().join("a"), d.path().join("b"));
    for out in [&a, &b] {
        ok(&["synth", "--users", "4", "--seed", "7", "--out", s(out), "--duration-s", "60"]);
    }
    for u in 1..=4 {
        assert!(a.join(format!("user{u}")).join("session.meta").is_file());
    }
    // the snapshot records the output path itself; everything else matches
    let strip = |p: &Path| {
        let mut t = tree(p);
        t.remove(Path::new("resolved.conf")).unwrap();
        t
    };
    assert_eq!(strip(&a), strip(&b));
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let d = tempfile::tempdir().unwrap();
    let conf = d.path().join("bad.conf");
    fs::write(&conf, "users=2\nwindow_sz=30\n").unwrap();
    let o = run(&["synth", "--config", s(&conf), "--out", s(&d.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("window_sz"));

    let o = run(&["encode", "--not-a-key", "1"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not-a-key"));

    let o = run(&["synth", "--runs", "zero"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn runtime_errors_exit_1() {
    let d = tempfile::tempdir().unwrap();
    let o = run(&["encode", "--input", s(&d.path().join("missing")), "--out", s(&d.path().join("o"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_documents_every_key() {
    let d = tempfile::tempdir().unwrap();
    ok(&["synth", "--out", s(d.path()), "--users", "1", "--duration-s", "40"]);
    let snap = fs::read_to_string(d.path().join("resolved.conf")).unwrap();
    let keys: Vec<&str> = snap.lines().map(|l| l.split_once('=').unwrap().0).collect();
    assert!(keys.len() > 30);
    for cmd in ["synth", "train", "compare"] {
        let o = ok(&[cmd, "--help"]);
        let text = String::from_utf8_lossy(&o.stdout);
        for k in &keys {
            assert!(text.contains(&format!("  {k} ")), "{cmd} --help misses {k}");
        }
    }
}

#[test]
fn snapshot_round_trips_through_the_parser() {
    let d = tempfile::tempdir().unwrap();
    let first = d.path().join("first");
    ok(&["synth", "--out", s(&first), "--users", "1", "--duration-s", "40", "--encoder", "gadf", "--lr", "0.01"]);
    let snap = first.join("resolved.conf");
    let second = d.path().join("second");
    ok(&["synth", "--config", s(&snap), "--out", s(&second)]);
    let a = fs::read_to_string(&snap).unwrap();
    let b = fs::read_to_string(second.join("resolved.conf")).unwrap();
    assert_eq!(a.replace(s(&first), ""), b.replace(s(&second), ""));
    assert!(a.contains("encoder=gadf\n") && a.contains("lr=0.01\n"));
}

#[test]
fn encode_sixty_seconds_gives_77_pngs_and_records_encoder() {
    let d = tempfile::tempdir().unwrap();
    let sessions = d.path().join("sessions");
    ok(&["synth", "--out", s(&sessions), "--users", "1", "--duration-s", "60"]);
    let out = d.path().join("ds");
    ok(&["encode", "--input", s(&sessions.join("user1")), "--out", s(&out)]);
    let files = tree(&out.join("user1"));
    assert_eq!(files.keys().filter(|p| p.extension().is_some_and(|e| e == "png")).count(), 77);
    let m = DatasetManifest::read(&out.join("user1")).unwrap();
    assert_eq!(m.encoder_spec.kind, EncoderKind::RpContinuous);

    let mtf = d.path().join("mtf");
    ok(&["encode", "--input", s(&sessions), "--out", s(&mtf), "--encoder", "mtf", "--mtf-states", "128"]);
    let m = DatasetManifest::read(&mtf.join("user1")).unwrap();
    assert_eq!(m.encoder_spec, EncoderSpec::mtf(128));
}

#[test]
fn experiments_write_tables_and_repeat_byte_for_byte() {
    let d = tempfile::tempdir().unwrap();
    let datasets = small_datasets(d.path());
    let quick = ["--pca-k", "20", "--runs", "2"];
    let outs: Vec<PathBuf> = (0..2).map(|i| d.path().join(format!("cmp{i}"))).collect();
    for (i, out) in outs.iter().enumerate() {
        let jobs = if i == 0 { "0" } else { "1" };
        let mut args = vec!["compare", "--input", s(&datasets), "--out", s(out), "--jobs", jobs];
        args.extend(quick);
        let o = ok(&args);
        assert!(String::from_utf8_lossy(&o.stdout).contains("Significance"));
    }
    for f in ["runs.jsonl", "table2.csv", "table3.csv", "table4.csv", "classwise_recall.csv", "table2.txt", "table4.txt"] {
        let a = fs::read(outs[0].join(f)).unwrap();
        assert_eq!(a, fs::read(outs[1].join(f)).unwrap(), "{f} differs");
    }
    let t4 = fs::read_to_string(outs[0].join("table4.txt")).unwrap();
    assert!(t4.contains("p < ") || t4.contains("p = "));

    // report rebuilds the same tables from the run log
    let rep = d.path().join("rep");
    ok(&["report", "--input", s(&outs[0]), "--out", s(&rep)]);
    for f in ["table2.csv", "table3.csv", "table4.csv", "classwise_recall.csv"] {
        assert_eq!(fs::read(rep.join(f)).unwrap(), fs::read(outs[0].join(f)).unwrap(), "{f}");
    }

    // precomputed (f32) embeddings feed the same harness and table layout
    let feats = d.path().join("feats");
    ok(&["features", "--input", s(&datasets), "--out", s(&feats)]);
    let xa = d.path().join("xa");
    let xb = d.path().join("xb");
    let mut args = vec!["xmatrix", "--input", s(&datasets), "--out", s(&xa)];
    args.extend(quick);
    ok(&args);
    let mut args = vec!["xmatrix", "--input", s(&datasets), "--out", s(&xb), "--features", s(&feats)];
    args.extend(quick);
    ok(&args);
    let head = |p: &Path| fs::read_to_string(p.join("table2.csv")).unwrap().lines().next().unwrap().to_string();
    assert_eq!(head(&xa), head(&xb));
    assert_eq!(fs::read_to_string(xa.join("table2.csv")).unwrap().lines().count(), 10);
}

#[test]
fn single_run_train_is_flagged_and_saves_a_checkpoint() {
    let d = tempfile::tempdir().unwrap();
    let datasets = small_datasets(d.path());
    let out = d.path().join("train");
    let o = ok(&["train", "--input", s(&datasets), "--user", "1", "--runs", "1", "--pca-k", "20", "--out", s(&out)]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains('†'), "{stdout}");
    assert!(out.join("model_run0.pmlp").is_file());
    assert!(!out.join("model_run1.pmlp").exists());
    let runs = fs::read_to_string(out.join("runs.jsonl")).unwrap();
    assert_eq!(runs.lines().count(), 1);
    assert!(runs.contains("\"personalized\""));
}
