//! End-to-end tests of the `tac` binary: exit codes, determinism, golden
//! machine-format reports, and the train/compress/eval flow.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use tempfile::tempdir;

fn tac() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tac"))
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &Path, epochs: usize) -> PathBuf {
    let path = dir.join("pipeline.toml");
    fs::write(
        &path,
        format!(
            r#"
model = "mnist-small"
out_dir = "{}"

[dataset]
name = "synthetic"
train_count = 64
test_count = 32

[train]
epochs = {epochs}
batch_size = 16
fine_tune_lr = 1e-4
finetune_epochs = 1
seed = 11
"#,
            dir.join("runs").display()
        ),
    )
    .unwrap();
    path
}

#[test]
fn train_writes_checkpoint_and_log() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    let out = tac()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let ckpt = dir.path().join("runs/checkpoint");
    assert!(ckpt.join("manifest.txt").exists());
    let log = fs::read_to_string(ckpt.join("train.log")).unwrap();
    assert_eq!(log.lines().count(), 2);
    for line in log.lines() {
        assert!(line.starts_with("epoch "), "{line}");
        assert!(line.contains(" loss ") && line.contains(" acc "));
    }
}

#[test]
fn same_seed_gives_byte_identical_checkpoints() {
    let d1 = tempdir().unwrap();
    let d2 = tempdir().unwrap();
    for d in [&d1, &d2] {
        let cfg = write_config(d.path(), 2);
        let out = tac()
            .args(["train", "--config"])
            .arg(&cfg)
            .args(["--seed", "99"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let c1 = d1.path().join("runs/checkpoint");
    let c2 = d2.path().join("runs/checkpoint");
    let mut names: Vec<String> = fs::read_dir(&c1)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert!(!names.is_empty());
    for name in names {
        assert_eq!(
            fs::read(c1.join(&name)).unwrap(),
            fs::read(c2.join(&name)).unwrap(),
            "{name} differs between identically seeded runs"
        );
    }
}

#[test]
fn different_seed_changes_the_checkpoint() {
    let d1 = tempdir().unwrap();
    let d2 = tempdir().unwrap();
    for (d, seed) in [(&d1, "1"), (&d2, "2")] {
        let cfg = write_config(d.path(), 2);
        let out = tac()
            .args(["train", "--config"])
            .arg(&cfg)
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert!(out.status.success());
    }
    let w1 = fs::read(d1.path().join("runs/checkpoint/l0.w.bin")).unwrap();
    let w2 = fs::read(d2.path().join("runs/checkpoint/l0.w.bin")).unwrap();
    assert_ne!(w1, w2);
}

#[test]
fn compress_records_schedule_and_bits() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    assert!(tac()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap()
        .status
        .success());
    let ckpt = dir.path().join("runs/checkpoint");
    let out = tac()
        .args(["compress", "--checkpoint"])
        .arg(&ckpt)
        .args(["--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = fs::read_to_string(dir.path().join("runs/compressed/manifest.txt")).unwrap();
    assert!(manifest.contains("stage quantized"));
    assert!(manifest.contains("pruned-rate 0.75"));
    assert!(manifest.contains("quant-bits 4"));
    assert!(manifest.contains("prune-schedule 0.2,0.4,0.6,0.7,0.75"));

    // The compressed model evaluates cleanly.
    let out = tac()
        .args(["eval", "--checkpoint"])
        .arg(dir.path().join("runs/compressed"))
        .args(["--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("top-1"));
    assert!(stdout(&out).contains("top-5"));
}

#[test]
fn compress_with_empty_rates_only_quantizes() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), 2);
    assert!(tac()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap()
        .status
        .success());
    let out = tac()
        .args(["compress", "--checkpoint"])
        .arg(dir.path().join("runs/checkpoint"))
        .args(["--config"])
        .arg(&cfg)
        .args(["--rates", ""])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = fs::read_to_string(dir.path().join("runs/compressed/manifest.txt")).unwrap();
    assert!(manifest.contains("stage quantized"));
    assert!(manifest.contains("pruned-rate -"));
}

#[test]
fn compress_rejects_corrupt_checkpoint_with_exit_2() {
    let dir = tempdir().unwrap();
    let cfg = write_config(dir.path(), 1);
    let fake = dir.path().join("fake-ckpt");
    fs::create_dir_all(&fake).unwrap();
    fs::write(fake.join("manifest.txt"), "garbage").unwrap();
    let out = tac()
        .args(["compress", "--checkpoint"])
        .arg(&fake)
        .args(["--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn analyze_matches_golden_reports() {
    for (golden, graph, policy, index_bits) in [
        ("golden/alexnet_full.tsv", "alexnet", "full", "16"),
        ("golden/alexnet_xnor.tsv", "alexnet", "xnor", "0"),
        ("golden/alexnet_tac.tsv", "alexnet", "tac", "0"),
        ("golden/vgg9_tac.tsv", "vgg9", "tac", "0"),
    ] {
        let out = tac()
            .args(["analyze", graph, "--policy", policy, "--index-bits", index_bits, "--machine"])
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        let want = fs::read_to_string(
            Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(golden),
        )
        .unwrap();
        assert_eq!(stdout(&out), want, "{golden} drifted");
    }
}

#[test]
fn analyze_writes_machine_file_and_prints_table() {
    let dir = tempdir().unwrap();
    let fout = dir.path().join("report.tsv");
    let out = tac()
        .args(["analyze", "alexnet", "--policy", "tac", "--index-bits", "0", "--out"])
        .arg(&fout)
        .output()
        .unwrap();
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.contains("compression rate:   26.126x"));
    assert!(text.contains("computation saving: 5.673x"));
    let machine = fs::read_to_string(&fout).unwrap();
    assert!(machine.contains("compression_rate\t26.125701"));
}

#[test]
fn analyze_unknown_graph_exits_1_listing_known() {
    let out = tac().args(["analyze", "lenet"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("alexnet") && err.contains("mnist-small"), "{err}");
}

#[test]
fn analyze_unknown_policy_exits_1() {
    let out = tac()
        .args(["analyze", "alexnet", "--policy", "ternary"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_with_missing_dataset_exits_2() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    fs::write(
        &cfg,
        r#"
model = "mnist-small"
[dataset]
name = "mnist"
path = "/definitely/not/here"
"#,
    )
    .unwrap();
    let out = tac()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("dataset file"));
}

#[test]
fn config_with_unknown_key_exits_1() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    fs::write(
        &cfg,
        r#"
model = "mnist-small"
[dataset]
name = "synthetic"
[train]
learning_rte = 0.1
"#,
    )
    .unwrap();
    let out = tac()
        .args(["train", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
}

#[test]
fn verify_passes_and_reports_per_suite() {
    let out = tac()
        .args(["verify", "--seed", "7", "--instances", "40"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("kernel-equivalence: 40 instances, pass"));
    assert!(text.contains("pruning-oracle: 40 instances, pass"));
    assert!(text.contains("quantization-roundtrip: 40 instances, pass"));
    assert!(text.contains("seed 7"));

    // Identical seeds regenerate identical output.
    let again = tac()
        .args(["verify", "--seed", "7", "--instances", "40"])
        .output()
        .unwrap();
    assert_eq!(out.stdout, again.stdout);
}

#[test]
fn verify_with_injected_fault_exits_3() {
    let out = tac()
        .args(["verify", "--seed", "7", "--instances", "10"])
        .env("TAC_VERIFY_FAULT", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", stdout(&out));
    assert!(stdout(&out).contains("FAIL"));
}

#[test]
fn shipped_default_config_trains_above_90_percent() {
    // The committed desk-scale config must actually learn its task.
    use tac_core::config::PipelineConfig;
    use tac_core::train::train_binary_net;

    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/mnist-small.toml");
    let cfg = PipelineConfig::from_path(&path).unwrap();
    let (train_set, _) = cfg.load_datasets().unwrap();
    let state = train_binary_net(&cfg.resolve_graph().unwrap(), &train_set, &cfg.train_config())
        .unwrap();
    let final_train_acc = state.history.last().unwrap().accuracy;
    assert!(
        final_train_acc > 0.9,
        "shipped config reached only {final_train_acc}"
    );
}

#[test]
fn usage_error_exits_1_and_help_exits_0() {
    let out = tac().args(["frobnicate"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = tac().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout(&out).contains("train"));
    assert!(stdout(&out).contains("verify"));
}
