use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pinn_ntk::network::{forward_value, init_glorot, MlpArchitecture};
use pinn_ntk::output::data_rows;
use pinn_ntk::pde::exact_two_scale;
use pinn_ntk::Activation;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pinn-ntk"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"))
        .join("cli")
        .join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run_with_config(sub: &str, preset: &str, body: &str, out: &Path) -> std::process::Output {
    let cfg = out.with_extension("cfg");
    fs::write(&cfg, body).unwrap();
    bin()
        .args([sub, "--preset", preset, "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    data_rows(&text)
        .iter()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn flow_check_writes_headed_csv() {
    let out = scratch("flow");
    let status = bin()
        .args(["flow-check", "--seed", "3", "--out"])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let text = fs::read_to_string(out.join("flow_check.csv")).unwrap();
    assert!(text.starts_with("# pinn-ntk version="));
    assert!(text.contains("# seed=3\n"));
    assert!(text.contains("# experiment=flow-check\n"));
    assert!(text.contains("# adam_defaults="));
    let r = rows(&out.join("flow_check.csv"));
    assert_eq!(r.len(), 4);
    // 17 significant digits in scientific notation
    assert_eq!(r[0][0], "1.0000000000000000e-8");
    assert_eq!(fs::read_to_string(out.join("status.txt")).unwrap(), "ok\n");
    assert!(out.join("summary.json").exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let out = scratch("bad");
    let o = run_with_config("flow-check", "flow", "frobnicate=1\n", &out);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown key"));
    let o = bin()
        .args(["ntk-scan", "--preset", "fig1"])
        .output()
        .unwrap();
    assert!(!o.status.success());
}

#[test]
fn zero_iterations_give_only_the_initial_spectrum() {
    let out = scratch("freq0");
    let o = run_with_config(
        "freq-principle",
        "fig1",
        "schedule=\nhidden_widths=8,8\nn_c=32\neval_points=64\n",
        &out,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&out.join("spectra.csv"));
    assert_eq!(r.len(), 33);
    assert!(r.iter().all(|row| row[0] == "0"));
}

#[test]
fn two_scale_untrained_regression_column_is_the_initial_network() {
    let out = scratch("two0");
    let body = "trials=1\nhidden_widths=6,6\nn_c=16\neval_points=50\nregression_points=20\n\
                regression_schedule=\npoisson_schedule=\ndarcy_schedule=\nseed=11\n";
    let o = run_with_config("two-scale", "fig4", body, &out);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let arch = MlpArchitecture::new(vec![6, 6], Activation::Tanh).unwrap();
    let p = init_glorot(&arch, 11);
    let r = rows(&out.join("predictions.csv"));
    assert_eq!(r.len(), 50);
    for row in &r {
        let x: f64 = row[0].parse().unwrap();
        let exact: f64 = row[1].parse().unwrap();
        let u_r: f64 = row[2].parse().unwrap();
        assert_eq!(exact, exact_two_scale(1.0 / 32.0, x));
        let want = forward_value(&p, &arch, x).unwrap();
        assert!(
            (u_r - want).abs() <= 1e-14 * (1.0 + want.abs()),
            "{u_r} vs {want}"
        );
    }
    assert_eq!(rows(&out.join("errors.csv")).len(), 3);
}

#[test]
fn single_epsilon_scan_has_no_slope() {
    let out = scratch("scan1");
    let o = run_with_config(
        "ntk-scan",
        "fig2a",
        "epsilons=1/10\nn_seeds=1\nn_c=32\n",
        &out,
    );
    assert!(o.status.success());
    let summary = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(summary.contains("\"slope\": null"), "{summary}");
    assert_eq!(rows(&out.join("scan.csv")).len(), 1);
}

#[test]
fn spectrum_has_one_eigenvalue_per_collocation_point() {
    let out = scratch("spec");
    let o = run_with_config(
        "ntk-spectrum",
        "fig3",
        "n_c=40\nphase_trained=false\n",
        &out,
    );
    assert!(o.status.success());
    assert_eq!(rows(&out.join("spectrum.csv")).len(), 40);
}

#[test]
fn reruns_are_byte_identical() {
    let body = "schedule=adam:30:1e-3\nhidden_widths=8\nn_c=16\neval_points=32\nrecord_stride=10\n";
    let a = scratch("det_a");
    let b = scratch("det_b");
    assert!(run_with_config("freq-principle", "fig1", body, &a)
        .status
        .success());
    assert!(run_with_config("freq-principle", "fig1", body, &b)
        .status
        .success());
    for f in ["spectra.csv", "history.csv"] {
        let ta = fs::read_to_string(a.join(f)).unwrap();
        let tb = fs::read_to_string(b.join(f)).unwrap();
        assert_eq!(data_rows(&ta), data_rows(&tb));
    }
}
