//! The batch runner: determinism, manifest completeness, stage failures.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::Command;

use wernet::config::ExperimentConfig;
use wernet::experiment::{run_experiment, sha256_hex, Manifest, Status, MANIFEST};
use wernet::seeds::{self, sub_seed};

fn config(extra: &str) -> ExperimentConfig {
    let text = format!(
        r#"{{
        "schema_version": 1,
        "seed": 5,
        "grid": {{"dims": [8, 24, 8], "voxel_size_mm": 0.5}},
        "phantom": {{"kind": "turbulent"}},
        "cases": [
            {{"name": "three", "layout": {{"n_views": 3, "view_angle_step": 40, "rows": 12, "cols": 36}}}},
            {{"name": "two", "layout": {{"n_views": 2, "view_angle_step": 90, "rows": 12, "cols": 36,
                                        "distance": {{"uniform_random": {{"min": 5500, "max": 6500, "seed": 0}}}}}}}}
        ],
        "noise": {{"fraction": 0.05}},
        "art": {{"sweeps": 3}},
        "wernet": {{"epochs": 2, "batch_samples": 4, "rays_per_sample": 20}},
        "slices": {{"axis": "y", "positions": [4, 12]}},
        "dataset": {{"write_cache": true}}
        {extra}
    }}"#
    );
    let c = ExperimentConfig::from_json(&text, Path::new("inline"), None).unwrap();
    c.validate().unwrap();
    c
}

fn walk(dir: &Path, root: &Path, out: &mut BTreeSet<String>) {
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            walk(&p, root, out);
        } else {
            let rel = p.strip_prefix(root).unwrap();
            out.insert(rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/"));
        }
    }
}

#[test]
fn rerun_reproduces_metrics_and_manifest_lists_every_file() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = config("");
    let ma = run_experiment(&c, a.path(), false).unwrap();
    let mb = run_experiment(&c, b.path(), false).unwrap();
    assert_eq!(ma.status, Status::Ok, "{:?}", ma.errors);
    assert_eq!(ma.cases, mb.cases);
    assert_eq!(ma.seeds, mb.seeds);
    for case in &ma.cases {
        let (art, wer) = (case.art.as_ref().unwrap(), case.wernet.as_ref().unwrap());
        for r in [art, wer] {
            assert_eq!(r.final_distance, 1.0 - r.final_similarity);
            assert!((-1.0..=1.0).contains(&r.final_similarity));
        }
        assert!(case.rays.unwrap() > 0);
    }

    let on_disk = Manifest::read(a.path()).unwrap();
    assert_eq!(on_disk, ma);
    let mut files = BTreeSet::new();
    walk(a.path(), a.path(), &mut files);
    files.remove(MANIFEST);
    let listed: BTreeSet<String> = ma.files.iter().map(|f| f.path.clone()).collect();
    assert_eq!(files, listed);
    for f in &ma.files {
        let bytes = std::fs::read(a.path().join(&f.path)).unwrap();
        assert_eq!(f.sha256, sha256_hex(&bytes), "{}", f.path);
        assert_eq!(f.bytes, bytes.len() as u64);
    }
    for expected in [
        "phantom.vxg",
        "cases/three/layout.json",
        "cases/three/images/view_002.img",
        "cases/three/dataset.rds",
        "cases/two/art/recon.vxg",
        "cases/two/art/slices/slice_y012_diff.pgm",
        "cases/two/wernet/encoder.wen",
        "cases/two/wernet/metrics.csv",
    ] {
        assert!(listed.contains(expected), "{expected}");
    }

    // Everything except wall-clock columns is reproduced byte for byte.
    let hashes = |m: &Manifest| -> Vec<(String, String)> {
        m.files
            .iter()
            .filter(|f| !f.path.ends_with(".csv") || f.path.contains("/art/"))
            .map(|f| (f.path.clone(), f.sha256.clone()))
            .collect()
    };
    assert_eq!(hashes(&ma), hashes(&mb));
}

#[test]
fn seeds_derive_from_the_master_seed() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&config(""), dir.path(), false).unwrap();
    assert_eq!(m.seeds.master, 5);
    for (name, seed) in &m.seeds.derived {
        assert_eq!(*seed, sub_seed(5, name));
    }
    for name in [seeds::PHANTOM, seeds::LAYOUT, seeds::DATASET, seeds::WERNET, "noise/0"] {
        assert!(m.seeds.derived.contains_key(name), "{name}");
    }

    let other = tempfile::tempdir().unwrap();
    let mut c = config("");
    c.seed = 6;
    let m6 = run_experiment(&c, other.path(), false).unwrap();
    assert_ne!(m6.cases[0].wernet, m.cases[0].wernet);
}

#[test]
fn stage_failure_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let mut c = config("");
    c.cases[1].layout.rows = 0;
    let m = run_experiment(&c, dir.path(), false).unwrap();
    assert_eq!(m.status, Status::Failed);
    assert_eq!(m.errors.len(), 1);
    assert!(m.errors[0].starts_with("two/project"), "{:?}", m.errors);
    assert!(m.case("three").unwrap().wernet.is_some());
    assert!(m.case("two").unwrap().art.is_none());
    assert_eq!(Manifest::read(dir.path()).unwrap().status, Status::Failed);
}

#[test]
fn target_distance_flags_each_run() {
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&config(r#", "target_distance": 2.0"#), dir.path(), false).unwrap();
    for case in &m.cases {
        assert_eq!(case.art.as_ref().unwrap().passed, Some(true));
        assert_eq!(case.wernet.as_ref().unwrap().passed, Some(true));
    }
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&config(r#", "target_distance": 1e-12"#), dir.path(), false).unwrap();
    assert_eq!(m.cases[0].art.as_ref().unwrap().passed, Some(false));
}

#[test]
fn transfer_uses_a_checkpoint_from_an_earlier_run() {
    let first = tempfile::tempdir().unwrap();
    run_experiment(&config(""), first.path(), false).unwrap();
    let ckpt = first.path().join("cases/three/wernet/encoder.wen");
    let extra = format!(r#", "transfer": {{"checkpoint": {:?}, "scratch_baseline": false}}"#, ckpt.to_str().unwrap());
    let mut c = config(&extra);
    c.art = None;
    let dir = tempfile::tempdir().unwrap();
    let m = run_experiment(&c, dir.path(), false).unwrap();
    assert_eq!(m.status, Status::Ok, "{:?}", m.errors);
    for case in &m.cases {
        assert!(case.wernet.is_none() && case.art.is_none());
        assert!(case.transfer.is_some());
    }
    assert!(dir.path().join("cases/two/transfer/recon.vxg").exists());
    assert!(!dir.path().join("cases/two/transfer/encoder.wen").exists());
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wernet"))
}

#[test]
fn run_subcommand_and_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.json");
    std::fs::write(&cfg_path, serde_json::to_string(&config("")).unwrap()).unwrap();
    let out_dir: PathBuf = dir.path().join("out");
    let status = bin()
        .args(["run", "--config", cfg_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--threads", "1"])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    let printed: serde_json::Value = serde_json::from_slice(&status.stdout).unwrap();
    assert_eq!(printed["status"], "ok");
    let m = Manifest::read(&out_dir).unwrap();
    let direct = run_experiment(&config(""), &dir.path().join("direct"), false).unwrap();
    assert_eq!(m.cases, direct.cases);

    let mut broken = config("");
    broken.cases[0].layout.cols = 0;
    std::fs::write(&cfg_path, serde_json::to_string(&broken).unwrap()).unwrap();
    let status = bin()
        .args(["run", "--config", cfg_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(2));

    std::fs::write(&cfg_path, r#"{"schema_version": 1, "typo": true}"#).unwrap();
    let status = bin().args(["run", "--config", cfg_path.to_str().unwrap()]).output().unwrap();
    assert_eq!(status.status.code(), Some(1));
}

#[test]
fn train_from_config_runs_only_training() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("c.json");
    let mut c = config("");
    c.cases.truncate(1);
    std::fs::write(&cfg_path, serde_json::to_string(&c).unwrap()).unwrap();
    let out_dir = dir.path().join("out");
    let out = bin()
        .args(["train", "--config", cfg_path.to_str().unwrap(), "--out", out_dir.to_str().unwrap(), "--epochs", "1"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = Manifest::read(&out_dir).unwrap();
    assert!(m.cases[0].art.is_none());
    assert_eq!(m.cases[0].wernet.as_ref().unwrap().epochs, 1);
}

#[test]
fn shipped_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut n = 0;
    for e in std::fs::read_dir(&dir).unwrap() {
        let p = e.unwrap().path();
        if p.extension().is_some_and(|x| x == "json") {
            let text = std::fs::read_to_string(&p).unwrap();
            let c = ExperimentConfig::from_json(&text, &p, p.parent()).unwrap();
            if c.transfer.is_none() {
                c.validate().unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            }
            n += 1;
        }
    }
    assert!(n >= 4);
}
