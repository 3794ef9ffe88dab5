use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn mpflow(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mpflow"))
        .args(["--quiet", "--config"])
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("mpflow runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

const FLAT: &str = r#"
name = "flat"
dimension = 2
horizon = 1.0

[[noise]]
kind = "constant"
value = [1.0, 0.0]

[[noise]]
kind = "constant"
value = [0.0, 1.0]

[drift]
kind = "constant"
value = [0.0, 0.0]

[landmarks]
points = [[0.0, 0.0], [0.5, -0.5]]

[outputs]
plot = false
ensemble = { samples = 500, steps = 20 }
"#;

#[test]
fn missing_horizon_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "bad.toml", &FLAT.replace("horizon = 1.0\n", ""));
    let out = dir.path().join("out");
    let res = mpflow(&["run"], &cfg, &out);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("horizon"));
    assert!(!out.exists());
}

#[test]
fn unknown_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "bad.toml",
        &FLAT.replace("horizon = 1.0", "horizon = 1.0\nhorizn = 2.0"),
    );
    let res = mpflow(&["run"], &cfg, &dir.path().join("out"));
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("horizn"));
}

#[test]
fn degenerate_noise_exits_with_ellipticity_code() {
    let dir = tempfile::tempdir().unwrap();
    let text = FLAT.replace("[[noise]]\nkind = \"constant\"\nvalue = [0.0, 1.0]\n", "");
    let cfg = write(dir.path(), "degenerate.toml", &text);
    let res = mpflow(&["shoot"], &cfg, &dir.path().join("out"));
    assert_eq!(
        res.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&res.stderr)
    );
}

#[test]
fn om_of_a_flat_straight_line() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flat.toml", FLAT);
    let mut csv = String::from("t,x1,x2\n");
    for k in 0..=100 {
        let t = k as f64 / 100.0;
        csv.push_str(&format!("{t},{t},0\n"));
    }
    let path = write(dir.path(), "line.csv", &csv);
    let res = mpflow(
        &["om-eval", path.to_str().unwrap()],
        &cfg,
        &dir.path().join("out"),
    );
    assert!(res.status.success());
    let value: f64 = String::from_utf8_lossy(&res.stdout).trim().parse().unwrap();
    assert!((value - 0.5).abs() < 1e-9, "{value}");
}

#[test]
fn bvp_summary_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "flat.toml",
        &FLAT.replace(
            "[outputs]",
            "[bvp]\ntargets = [[1.0, 0.0], [0.5, 0.5]]\n\n[outputs]",
        ),
    );
    let out = dir.path().join("out");
    assert!(mpflow(&["run"], &cfg, &out).status.success());
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("bvp_summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["all_converged"], true);
    let v0 = &summary["landmarks"][1]["v0"];
    assert!(
        (v0[0].as_f64().unwrap()).abs() < 1e-12 && (v0[1].as_f64().unwrap() - 1.0).abs() < 1e-12
    );
    assert!(!out.join("figure.svg").exists());

    assert!(mpflow(&["plot"], &cfg, &out).status.success());
    let svg = std::fs::read_to_string(out.join("figure.svg")).unwrap();
    assert_eq!(svg.matches("<polyline").count(), 6);
}

#[test]
fn ensembles_depend_only_on_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "flat.toml", FLAT);
    let read =
        |name: &str| std::fs::read(dir.path().join(name).join("ensemble_summary.json")).unwrap();
    let one = Command::new(env!("CARGO_BIN_EXE_mpflow"))
        .args(["--quiet", "--threads", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.path().join("a"))
        .arg("simulate")
        .status()
        .unwrap();
    assert!(one.success());
    assert!(mpflow(&["simulate"], &cfg, &dir.path().join("b"))
        .status
        .success());
    assert!(
        mpflow(&["--seed", "9", "simulate"], &cfg, &dir.path().join("c"))
            .status
            .success()
    );
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn epdiff_drift_conserves_energy_and_reloads() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(scenarios().join("epdiff_circle.toml"))
        .unwrap()
        .replace("equation = \"optu\"", "equation = \"epdiff\"")
        .replace("samples = 2000", "samples = 50");
    let cfg = write(dir.path(), "circle.toml", &text);
    let out = dir.path().join("out");
    assert!(mpflow(&["epdiff-drift"], &cfg, &out).status.success());
    let drift: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("epdiff_drift.json")).unwrap())
            .unwrap();
    let e: Vec<f64> = drift["energies"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    assert_eq!(e.len(), 101);
    assert!(e.iter().all(|v| ((v - e[0]) / e[0]).abs() < 1e-4));

    // the written file drives the same paths as the inline computation
    assert!(mpflow(&["mpp"], &cfg, &out).status.success());
    let file = out.join("epdiff_drift.json");
    let reload = text.replace(
        "subtract_ito_correction = false",
        &format!(
            "subtract_ito_correction = false\nfile = {:?}",
            file.to_str().unwrap()
        ),
    );
    let cfg2 = write(dir.path(), "reload.toml", &reload);
    let out2 = dir.path().join("out2");
    assert!(mpflow(&["mpp"], &cfg2, &out2).status.success());
    assert_eq!(
        std::fs::read(out.join("mpp_forward.csv")).unwrap(),
        std::fs::read(out2.join("mpp_forward.csv")).unwrap()
    );
}
