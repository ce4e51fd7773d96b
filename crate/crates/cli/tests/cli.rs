//! Binary-level and command-level integration checks.

use mtpinn_cli::checkpoint::Checkpoint;
use mtpinn_cli::commands::cmd_eval;
use mtpinn_core::closed_form::HJBConfig;
use std::process::Command;

/// A closed-form stub checkpoint evaluates to all-zero error reports.
#[test]
fn exact_stub_eval_reports_zero_error() {
    let cfg = HJBConfig {
        kappa: 0.15,
        sigma: 0.1,
        lambda: 0.06,
        horizon_t: 3.0,
        x_range: (-8.0, 8.0),
        s_range: (20.0, 80.0),
    };
    let dir = tempfile::tempdir().unwrap();
    let ckpt_path = dir.path().join("exact.json");
    Checkpoint::new_exact(&cfg).save(&ckpt_path).unwrap();

    let out = dir.path().join("eval");
    let stats = cmd_eval(&ckpt_path, &out, 3, 40, 0.05).unwrap();
    assert_eq!(stats.n, 40);
    // Euler rollout of the exact policy still lands near zero inventory.
    assert!(stats.mean_abs < 0.05 * cfg.x_range.1, "{}", stats.mean_abs);

    // surface errors: every metric column is exactly zero
    let surface = std::fs::read_to_string(out.join("surface_errors.csv")).unwrap();
    let row = surface.lines().nth(1).unwrap();
    let vals: Vec<f64> = row.split(',').map(|v| v.parse().unwrap()).collect();
    for &v in &vals[..7] {
        assert_eq!(v, 0.0, "surface row: {row}");
    }

    // path error curves: mean and std zero at every node for all three curves
    let curves = std::fs::read_to_string(out.join("path_errors.csv")).unwrap();
    for line in curves.lines().skip(1) {
        let cols: Vec<&str> = line.split(',').collect();
        for c in &cols[2..] {
            if !c.is_empty() {
                assert_eq!(c.parse::<f64>().unwrap(), 0.0, "curve row: {line}");
            }
        }
    }
}

/// A config missing a required key fails with a nonzero exit naming the key.
#[test]
fn missing_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    // complete desk config minus `model.lr`
    let fc = mtpinn_cli::config::FileConfig::for_scale(
        mtpinn_core::trainer::Preset::MtPinnCurriculum,
        mtpinn_cli::config::Scale::Desk,
    );
    let text = toml::to_string_pretty(&fc).unwrap();
    let stripped: String = text
        .lines()
        .filter(|l| !l.starts_with("lr ="))
        .collect::<Vec<_>>()
        .join("\n");
    std::fs::write(&cfg_path, stripped).unwrap();

    let output = Command::new(env!("CARGO_BIN_EXE_mtpinn"))
        .args(["train", "--config"])
        .arg(&cfg_path)
        .args(["--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert!(!output.status.success());
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("lr"), "stderr: {stderr}");
}
