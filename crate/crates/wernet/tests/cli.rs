//! End-to-end checks of the `wernet` binary: wiring, outputs and exit codes.

use std::path::Path;
use std::process::{Command, Output};

use wernet::formats::{img, vxg, wen};

fn wernet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wernet"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = wernet(args);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{args:?}\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn help_everywhere() {
    for sub in ["phantom", "layout", "project", "noise", "art", "train", "transfer", "eval", "slices", "run"] {
        let out = wernet(&[sub, "--help"]);
        assert_eq!(out.status.code(), Some(0), "{sub}");
        assert!(String::from_utf8_lossy(&out.stdout).contains("Usage"), "{sub}");
    }
    assert_eq!(wernet(&["--help"]).status.code(), Some(0));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &["frobnicate"][..],
        &["eval", "--a", "x.vxg"],
        &["eval", "--a", "x", "--b", "y", "--bogus"],
        &["train", "--variant", "deep"],
        &[],
    ] {
        let out = wernet(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_config_names_the_path() {
    let out = wernet(&["train", "--config", "/no/such/dir/c.json"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/such/dir/c.json"));
}

#[test]
fn missing_input_file_is_a_usage_error() {
    let out = wernet(&["eval", "--a", "/no/a.vxg", "--b", "/no/b.vxg"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/no/a.vxg"));
}

#[test]
fn corrupt_grid_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.vxg");
    std::fs::write(&bad, b"VXG1\x02\x00\x00\x00{}").unwrap();
    let out = wernet(&["eval", "--a", s(&bad), "--b", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("byte"));
}

#[test]
fn stepwise_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let work = d.join("work");
    let w = s(&work);

    let printed = ok(&["phantom", "--kind", "jet", "--dims", "8,24,8", "--voxel-size", "0.5", "--out", w]);
    let grid_path = work.join("phantom.vxg");
    assert_eq!(printed.trim(), s(&grid_path));
    let truth = vxg::read(&grid_path).unwrap();
    assert_eq!(truth.dims(), [8, 24, 8]);

    ok(&["layout", "--grid", s(&grid_path), "--views", "3", "--step", "40", "--rows", "12", "--cols", "36", "--out", w]);
    let layout = work.join("layout.json");

    let images = d.join("images");
    ok(&["project", "--grid", s(&grid_path), "--layout", s(&layout), "--pgm", "--out", s(&images)]);
    for v in 0..3 {
        let (im, pose) = img::read(&images.join(img::file_name(v))).unwrap();
        assert_eq!((im.view_id, im.rows(), im.cols()), (v, 12, 36));
        assert!(pose.is_some());
        assert!(images.join(format!("view_{v:03}.pgm")).exists());
    }
    assert!(!images.join(img::file_name(3)).exists());

    let noisy = d.join("noisy");
    ok(&["noise", "--images", s(&images), "--fraction", "0.05", "--seed", "3", "--out", s(&noisy)]);
    let again = d.join("noisy2");
    ok(&["noise", "--images", s(&images), "--fraction", "0.05", "--seed", "3", "--out", s(&again)]);
    let a = std::fs::read(noisy.join(img::file_name(1))).unwrap();
    assert_eq!(a, std::fs::read(again.join(img::file_name(1))).unwrap());
    assert_ne!(a, std::fs::read(images.join(img::file_name(1))).unwrap());

    let eval: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--a", s(&grid_path), "--b", s(&grid_path)])).unwrap();
    assert_eq!(eval["S_C"], 1.0);
    assert_eq!(eval["D_C"], 0.0);

    let inputs = ["--images", s(&images), "--layout", s(&layout), "--grid", s(&grid_path)];
    let art_out = d.join("art");
    let mut args = vec!["art", "--sweeps", "3", "--out", s(&art_out)];
    args.extend(inputs);
    let summary: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
    let sc = summary["final_similarity"].as_f64().unwrap();
    assert!(sc > 0.5 && sc <= 1.0);
    assert_eq!(summary["final_distance"].as_f64().unwrap(), 1.0 - sc);
    let recon = art_out.join("recon.vxg");
    let eval: serde_json::Value =
        serde_json::from_str(&ok(&["eval", "--a", s(&recon), "--b", s(&grid_path)])).unwrap();
    assert_eq!(eval["S_C"].as_f64().unwrap(), sc);
    let csv = std::fs::read_to_string(art_out.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);

    let train_out = d.join("train");
    let mut args = vec!["train", "--epochs", "2", "--batch-samples", "4", "--rays-per-sample", "20", "--out", s(&train_out)];
    args.extend(inputs);
    ok(&args);
    let (encoder, provenance) = wen::read(&train_out.join("encoder.wen")).unwrap();
    assert_eq!(encoder.variant.name(), "no_bias_bn");
    assert_eq!(provenance["epochs"], 2);
    assert!(train_out.join("iterations.csv").exists());

    let transfer_out = d.join("transfer");
    let ckpt = train_out.join("encoder.wen");
    let mut args = vec!["transfer", "--checkpoint", s(&ckpt), "--epochs", "1", "--out", s(&transfer_out)];
    args.extend(inputs);
    ok(&args);
    assert!(transfer_out.join("recon.vxg").exists());

    let slices_out = d.join("slices");
    let printed = ok(&[
        "slices", "--grid", s(&recon), "--axis", "y", "--positions", "3,12", "--reference", s(&grid_path), "--out",
        s(&slices_out),
    ]);
    assert_eq!(printed.lines().count(), 4);
    assert!(slices_out.join("slice_y012_diff.pgm").exists());

    let out = wernet(&["slices", "--grid", s(&recon), "--axis", "y", "--positions", "24", "--out", s(&slices_out)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn out_is_required_for_writers() {
    let out = wernet(&["phantom", "--kind", "jet"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--out"));
}
