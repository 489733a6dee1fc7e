//! End-to-end exercises of the `vito` binary on a miniature Darcy setup.

use std::path::Path;
use std::process::{Command, Output};

fn vito(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vito"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vito(args);
    assert!(
        out.status.success(),
        "command {:?} failed:\n{}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn generate(dir: &Path, seed: &str) {
    ok(&[
        "generate",
        "--problem",
        "darcy",
        "--fine",
        "32",
        "--sr",
        "4",
        "--n",
        "6",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ]);
}

#[test]
fn full_pipeline_on_tiny_darcy() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    generate(&data, "42");
    assert!(data.join("manifest").is_file());
    assert!(data.join("config.txt").is_file());

    // Same seed regenerates bit-identical payloads.
    let data2 = tmp.path().join("data2");
    generate(&data2, "42");
    for f in ["inputs.bin", "targets.bin", "manifest"] {
        assert_eq!(read(&data.join(f)), read(&data2.join(f)), "{f} differs");
    }

    // Train briefly, twice, with one fixed seed.
    let run = tmp.path().join("run");
    let train_args = |out: &Path| {
        vec![
            "train".to_string(),
            "--data".into(),
            data.display().to_string(),
            "--epochs".into(),
            "2".into(),
            "--batch".into(),
            "4".into(),
            "--out".into(),
            out.display().to_string(),
        ]
    };
    let args: Vec<String> = train_args(&run);
    let arg_refs: Vec<&str> = args.iter().map(|s| s.as_str()).collect();
    let stdout = ok(&arg_refs);
    assert!(stdout.contains("trainable parameters"));
    assert!(run.join("model_best.ckpt").is_file());
    assert!(run.join("config.txt").is_file());
    let history = std::fs::read_to_string(run.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 3);

    let run2 = tmp.path().join("run2");
    let args2: Vec<String> = train_args(&run2);
    let arg_refs2: Vec<&str> = args2.iter().map(|s| s.as_str()).collect();
    ok(&arg_refs2);
    assert_eq!(
        history,
        std::fs::read_to_string(run2.join("history.csv")).unwrap(),
        "training history is not reproducible"
    );

    // Evaluate: both the model metric and the baseline must be printed.
    let eval_dir = tmp.path().join("eval");
    let ckpt = run.join("model_best.ckpt");
    let stdout = ok(&[
        "eval",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--split",
        "test",
        "--out",
        eval_dir.to_str().unwrap(),
    ]);
    assert!(stdout.contains("mean_rel_l2="));
    assert!(stdout.contains("baseline_rel_l2="));
    assert!(eval_dir.join("summary.txt").is_file());
    assert!(eval_dir.join("metrics.csv").is_file());
    assert!(eval_dir.join("panels.png").is_file());

    // Predict: exactly one panel (and one tensor) per requested index.
    let pred_dir = tmp.path().join("pred");
    ok(&[
        "predict",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--index",
        "5",
        "--out",
        pred_dir.to_str().unwrap(),
    ]);
    let pngs: Vec<_> = std::fs::read_dir(&pred_dir)
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .collect();
    assert_eq!(pngs.len(), 1);
    assert!(pred_dir.join("predict_5.png").is_file());
    assert!(pred_dir.join("predict_5.bin").is_file());

    // Report over two summaries gives a header plus two rows.
    let table = ok(&[
        "report",
        "--run",
        eval_dir.to_str().unwrap(),
        "--run",
        eval_dir.to_str().unwrap(),
    ]);
    assert_eq!(table.lines().count(), 3);
    assert!(table.lines().next().unwrap().contains("mean_rel_l2"));
}

#[test]
fn unknown_config_key_fails_with_category() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("bad.cfg");
    std::fs::write(&cfg, "no_such_key=1\n").unwrap();
    let out = vito(&[
        "generate",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("category=invalid-config"),
        "stderr: {stderr}"
    );
    assert_eq!(stderr.trim().lines().count(), 1, "stderr: {stderr}");
}

#[test]
fn t_final_rejected_for_darcy() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vito(&[
        "generate",
        "--problem",
        "darcy",
        "--t-final",
        "5",
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("category=invalid-argument"));
}

#[test]
fn missing_dataset_fails_cleanly() {
    let tmp = tempfile::tempdir().unwrap();
    let out = vito(&[
        "train",
        "--data",
        tmp.path().join("nowhere").to_str().unwrap(),
        "--out",
        tmp.path().join("run").to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error: category="));
}
