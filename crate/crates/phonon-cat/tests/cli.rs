//! End-to-end checks of the `phonon-cat` binary: exit-code contract,
//! manifest integrity, and bit-for-bit reproducibility of seeded runs.

use sha2::{Digest, Sha256};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_phonon-cat"))
}

/// Fresh scratch directory under the target-specific temp root.
fn scratch(label: &str) -> PathBuf {
    let dir = std::env::temp_dir()
        .join("phonon-cat-cli-tests")
        .join(format!("{label}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn sha256_hex(path: &Path) -> String {
    let bytes = fs::read(path).unwrap();
    let mut h = Sha256::new();
    h.update(&bytes);
    format!("{:x}", h.finalize())
}

const POINT_B_DEVICE: &str = r#"{
  "device": {
    "z_zpf_m": 200e-15,
    "omega_m_hz": 1.8e6,
    "quality_factor": 4.2e8,
    "temperature_k": 0.010,
    "gamma_z_hz": 10.0,
    "g2_gradient_t_per_m2": 9e15
  }
}"#;

#[test]
fn unknown_config_keys_exit_2() {
    let dir = scratch("badkey");
    let cfg = write_config(&dir, "bad.json", r#"{"device": {"z_zpf_m": 1e-13, "bogus": 1}}"#);
    let out = bin()
        .args(["params", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn missing_section_exits_2() {
    let dir = scratch("nosection");
    let cfg = write_config(&dir, "empty.json", "{}");
    let out = bin()
        .args(["steady-sweep", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn params_manifest_and_reproducibility() {
    let dir = scratch("params");
    let cfg = write_config(&dir, "cfg.json", POINT_B_DEVICE);
    let run = |out_dir: &Path| {
        let out = bin()
            .args(["params", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    let out1 = dir.join("run1");
    let out2 = dir.join("run2");
    run(&out1);
    run(&out2);

    // derived rates land where expected
    let csv = fs::read_to_string(out1.join("params.csv")).unwrap();
    let row: Vec<f64> = csv
        .lines()
        .filter(|l| !l.starts_with('#'))
        .nth(1)
        .unwrap()
        .split(',')
        .map(|v| v.parse().unwrap())
        .collect();
    let (g2_hz, cooperativity) = (row[0], row[4]);
    assert!((g2_hz - 5.0).abs() / 5.0 < 0.02, "g2 = {g2_hz}");
    assert!((cooperativity - 20.0).abs() / 20.0 < 0.05, "C = {cooperativity}");

    // manifest checksums match the files on disk
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out1.join("manifest.json")).unwrap()).unwrap();
    let outputs = manifest["outputs"].as_array().unwrap();
    assert!(!outputs.is_empty());
    for entry in outputs {
        let name = entry["file"].as_str().unwrap();
        let recorded = entry["sha256"].as_str().unwrap();
        assert_eq!(recorded, sha256_hex(&out1.join(name)), "checksum mismatch for {name}");
    }

    // identical inputs produce identical bytes
    assert_eq!(
        fs::read(out1.join("params.csv")).unwrap(),
        fs::read(out2.join("params.csv")).unwrap()
    );
}

#[test]
fn tomography_sampling_is_seeded() {
    let dir = scratch("tomo");
    let base = serde_json::json!({
        "system": {
            "g2_hz": 5.0,
            "omega_hz": 2.0,
            "gamma_m_hz": 4.2857142857142855e-3,
            "n_th": 115.28,
            "gamma_z_hz": 10.0
        },
        "tomography": { "amplitude": 1.0, "n_angles": 4, "shots": 500 },
        "run": { "n_max": 40, "seed": 5 }
    });
    let cfg = write_config(&dir, "cfg.json", &base.to_string());
    let mut reseeded = base.clone();
    reseeded["run"]["seed"] = serde_json::json!(6);
    let cfg_reseeded = write_config(&dir, "cfg6.json", &reseeded.to_string());

    let run = |cfg: &Path, out_dir: &Path| {
        let out = bin()
            .args(["tomography", "--config"])
            .arg(cfg)
            .arg("--out")
            .arg(out_dir)
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    };
    let (a, b, c) = (dir.join("a"), dir.join("b"), dir.join("c"));
    run(&cfg, &a);
    run(&cfg, &b);
    run(&cfg_reseeded, &c);

    let counts = |d: &Path| fs::read(d.join("tomography_generated.csv")).unwrap();
    assert_eq!(counts(&a), counts(&b), "same seed must reproduce identical samples");
    assert_ne!(counts(&a), counts(&c), "different seeds must differ");
}

#[test]
fn presets_are_listed_and_magnetics_preset_runs() {
    let dir = scratch("preset");
    let out = bin()
        .args(["magnetics", "--preset", "fig2c", "--out"])
        .arg(dir.join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    for f in ["gradients_vs_offset.csv", "g2_vs_gap.csv", "manifest.json"] {
        assert!(dir.join("out").join(f).exists(), "missing {f}");
    }
}
