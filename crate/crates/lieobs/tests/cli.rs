//! End-to-end tests of the `lieobs` binary: flag handling, exit codes,
//! file outputs, and byte-level reproducibility.

use std::path::Path;
use std::process::{Command, Output};

fn lieobs() -> Command {
    Command::new(env!("CARGO_BIN_EXE_lieobs"))
}

fn run(args: &[&str]) -> Output {
    lieobs().args(args).output().expect("binary runs")
}

fn assert_success(out: &Output) {
    assert!(
        out.status.success(),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn dir_snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut entries = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(current) = stack.pop() {
        for entry in std::fs::read_dir(&current).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let name = path.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                entries.push((name, std::fs::read(&path).unwrap()));
            }
        }
    }
    entries.sort_by(|a, b| a.0.cmp(&b.0));
    entries
}

#[test]
fn generate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir_a = tmp.path().join("a");
    let dir_b = tmp.path().join("b");
    for dir in [&dir_a, &dir_b] {
        let out = run(&[
            "--threads",
            "1",
            "generate",
            "--out",
            dir.to_str().unwrap(),
            "--n",
            "10",
            "--m",
            "5",
            "--seed",
            "1",
            "--sigmas",
            "0.1",
            "--infer-count",
            "2",
            "--infer-length",
            "6",
        ]);
        assert_success(&out);
    }
    assert_eq!(dir_snapshot(&dir_a), dir_snapshot(&dir_b));
}

#[test]
fn generate_echoes_effective_config_with_provenance() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate",
        "--out",
        tmp.path().join("ds").to_str().unwrap(),
        "--n",
        "5",
        "--m",
        "3",
        "--sigmas",
        "0.1",
        "--infer-count",
        "1",
        "--infer-length",
        "4",
    ]);
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("effective config (generate):"));
    assert!(stdout.contains("[flag]"));
    assert!(stdout.contains("[default]"));
    assert!(stdout.contains("seed"));
}

#[test]
fn generate_rejects_zero_length_sequences() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "generate",
        "--out",
        tmp.path().join("ds").to_str().unwrap(),
        "--m",
        "0",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("m must be at least 1"));
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let out = run(&["generate", "--does-not-exist"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn missing_dataset_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "train",
        "--data",
        tmp.path().join("nope").to_str().unwrap(),
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_layers_under_flags() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("lieobs.toml");
    std::fs::write(
        &config_path,
        "[generate]\nn = 7\nm = 4\nseed = 123\n",
    )
    .unwrap();
    let ds = tmp.path().join("ds");
    // File sets n/m/seed; the flag overrides n.
    let out = lieobs()
        .env(lieobs::cli::CONFIG_ENV_VAR, &config_path)
        .args([
            "generate",
            "--out",
            ds.to_str().unwrap(),
            "--n",
            "6",
            "--sigmas",
            "0.1",
            "--infer-count",
            "1",
            "--infer-length",
            "3",
        ])
        .output()
        .unwrap();
    assert_success(&out);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("[file]"), "{stdout}");
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(ds.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["num_sequences"], 6);
    assert_eq!(manifest["sequence_length"], 4);
    assert_eq!(manifest["seed"], 123);
}

#[test]
fn malformed_config_file_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config_path = tmp.path().join("bad.toml");
    std::fs::write(&config_path, "[generate]\nnot_a_key = 1\n").unwrap();
    let out = lieobs()
        .args([
            "--config",
            config_path.to_str().unwrap(),
            "generate",
            "--out",
            tmp.path().join("ds").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn train_with_zero_iterations_warns_and_writes_initial_checkpoint() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    assert_success(&run(&[
        "generate",
        "--out",
        ds.to_str().unwrap(),
        "--n",
        "10",
        "--m",
        "4",
        "--sigmas",
        "0.1",
        "--infer-count",
        "1",
        "--infer-length",
        "4",
    ]));
    let out_dir = tmp.path().join("run");
    let out = run(&[
        "train",
        "--data",
        ds.to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
        "--hidden",
        "4",
        "--max-iters",
        "0",
    ]);
    assert_success(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
    assert!(out_dir.join("best.ckpt").exists());
    assert!(out_dir.join("checkpoint_00000000.ckpt").exists());
    let history = std::fs::read_to_string(out_dir.join("history.csv")).unwrap();
    assert_eq!(history, "step,train_loss,val_loss\n");
}

#[test]
fn full_pipeline_markers_and_trace_lengths() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    assert_success(&run(&[
        "generate",
        "--out",
        ds.to_str().unwrap(),
        "--n",
        "10",
        "--m",
        "5",
        "--seed",
        "3",
        "--sigmas",
        "0.1",
        "--infer-count",
        "3",
        "--infer-length",
        "20",
    ]));

    let run_dir = tmp.path().join("run");
    assert_success(&run(&[
        "train",
        "--data",
        ds.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--hidden",
        "4",
        "--max-iters",
        "2",
        "--batch-size",
        "4",
        "--seed",
        "11",
    ]));
    assert!(run_dir.join("best.ckpt").exists());
    assert!(run_dir.join("history.csv").exists());

    let report = tmp.path().join("report");
    assert_success(&run(&[
        "evaluate",
        "--data",
        ds.to_str().unwrap(),
        "--checkpoint",
        run_dir.join("best.ckpt").to_str().unwrap(),
        "--out",
        report.to_str().unwrap(),
        "--sigma",
        "0.1",
        "--skip",
        "10",
    ]));
    // 20-epoch rollouts with the first 10 skipped: 10 rows plus a header.
    for channel in lieobs::eval::CHANNELS {
        let text =
            std::fs::read_to_string(report.join("traces").join(format!("{channel}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 11, "{channel}");
    }

    let sweep_dir = tmp.path().join("sweep");
    assert_success(&run(&[
        "sweep",
        "--checkpoint",
        run_dir.join("best.ckpt").to_str().unwrap(),
        "--out",
        sweep_dir.to_str().unwrap(),
        "--sigmas",
        "0.1,0.2,0.3,0.4,0.5",
        "--count",
        "2",
        "--length",
        "15",
        "--skip",
        "2",
    ]));
    let sweep = std::fs::read_to_string(sweep_dir.join("sweep.csv")).unwrap();
    let rows = lieobs::eval::parse_sweep_csv(&sweep).unwrap();
    assert_eq!(rows.len(), 5);
    for row in &rows {
        // Untrained weights: the manifold column stays structural anyway.
        assert!(row.manifold <= 1e-6);
    }
}

#[test]
fn evaluate_requires_matching_inference_set() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = tmp.path().join("ds");
    assert_success(&run(&[
        "generate",
        "--out",
        ds.to_str().unwrap(),
        "--n",
        "5",
        "--m",
        "4",
        "--sigmas",
        "0.1",
        "--infer-count",
        "1",
        "--infer-length",
        "5",
    ]));
    let run_dir = tmp.path().join("run");
    assert_success(&run(&[
        "train",
        "--data",
        ds.to_str().unwrap(),
        "--out",
        run_dir.to_str().unwrap(),
        "--hidden",
        "3",
        "--max-iters",
        "0",
    ]));
    let out = run(&[
        "evaluate",
        "--data",
        ds.to_str().unwrap(),
        "--checkpoint",
        run_dir.join("best.ckpt").to_str().unwrap(),
        "--out",
        tmp.path().join("report").to_str().unwrap(),
        "--sigma",
        "0.3",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no inference set"));
}

#[test]
fn gradcheck_passes_and_corruption_fails() {
    let ok = run(&["gradcheck", "--h", "3", "--m", "2"]);
    assert_success(&ok);
    assert!(String::from_utf8_lossy(&ok.stdout).contains("gradcheck PASS"));

    let bad = run(&["gradcheck", "--h", "3", "--m", "2", "--corrupt"]);
    assert_eq!(bad.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&bad.stderr);
    assert!(stderr.contains("gradcheck FAIL"), "{stderr}");
    assert!(stderr.contains("gru1.input_weights[0]"), "{stderr}");
}

#[test]
fn missing_checkpoint_is_a_runtime_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&[
        "sweep",
        "--checkpoint",
        tmp.path().join("none.ckpt").to_str().unwrap(),
        "--out",
        tmp.path().join("report").to_str().unwrap(),
        "--sigmas",
        "0.1",
        "--count",
        "1",
        "--length",
        "5",
        "--skip",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
}
