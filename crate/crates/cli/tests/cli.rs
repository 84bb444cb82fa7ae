use std::path::Path;
use std::process::{Command, Output};

fn semshape(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_semshape"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

const FILES: [&str; 6] = [
    "--model",
    "model.json",
    "--spec",
    "spec.json",
    "--regressor",
    "regressor.json",
];

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = semshape(dir, &[&FILES[..], args].concat());
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(dir: &Path, name: &str) -> serde_json::Value {
    serde_json::from_slice(&std::fs::read(dir.join(name)).unwrap()).unwrap()
}

#[test]
fn gen_model_writes_model_spec_and_provenance() {
    let dir = tempfile::tempdir().unwrap();
    run(
        dir.path(),
        &["gen-model", "--vertices", "300", "--coeffs", "12"],
    );
    for f in ["model.json", "spec.json", "provenance.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let prov = json(dir.path(), "provenance.json");
    assert_eq!(prov["num_coeffs"], 12);
    assert!(prov["timing"]["wall_time_s"].is_number());
}

#[test]
fn exit_codes_follow_the_error_class() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(semshape(p, &["frobnicate"]).status.code(), Some(2));
    assert_eq!(
        semshape(p, &["gen-model", "--vertices", "100", "--coeffs", "0"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        semshape(
            p,
            &["--model", "missing.json", "--spec", "x.json", "measure"]
        )
        .status
        .code(),
        Some(3)
    );

    run(p, &["gen-model", "--vertices", "200", "--coeffs", "10"]);
    run(p, &["fit", "--samples", "2000"]);
    let unknown = semshape(
        p,
        &[&FILES[..], &["offset", "--measure", "nose=+5"]].concat(),
    );
    assert_eq!(unknown.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&unknown.stderr).contains("chest_width"));

    std::fs::write(
        p.join("obs.json"),
        r#"{"observations":[{"id":"a","mean_mm":[],"variance_mm2":[]}]}"#,
    )
    .unwrap();
    let bad = semshape(
        p,
        &[&FILES[..], &["fuse", "--observations", "obs.json"]].concat(),
    );
    assert_eq!(bad.status.code(), Some(3));

    semshape::save_observations(
        &[semshape::MeasurementObservation::new(
            "a",
            semshape::DiagGaussian::new(
                nalgebra::DVector::zeros(23),
                nalgebra::DVector::from_element(23, 1e-4),
            )
            .unwrap(),
        )],
        p.join("obs.json"),
    )
    .unwrap();
    let capped = semshape(
        p,
        &[
            &FILES[..],
            &[
                "fuse",
                "--observations",
                "obs.json",
                "--full-covariance",
                "--max-full-vertices",
                "10",
            ],
        ]
        .concat(),
    );
    assert_eq!(capped.status.code(), Some(4));
}

#[test]
fn too_few_samples_warn_about_rank() {
    let dir = tempfile::tempdir().unwrap();
    run(
        dir.path(),
        &["gen-model", "--vertices", "200", "--coeffs", "30"],
    );
    let out = run(dir.path(), &["fit", "--samples", "10"]);
    let report = json(dir.path(), "fit_report.json");
    assert_eq!(report["rank_deficient"], true);
    assert!(!report["warnings"].as_array().unwrap().is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn reports_are_deterministic_apart_from_timing() {
    let run_once = || {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path();
        run(p, &["gen-model", "--vertices", "300", "--coeffs", "20"]);
        run(p, &["--seed", "3", "fit", "--samples", "5000"]);
        run(p, &["--seed", "3", "eval", "recon", "--bodies", "500"]);
        let mut report = json(p, "eval_recon.json");
        report.as_object_mut().unwrap().remove("timing");
        let csv = std::fs::read(p.join("eval_recon.csv")).unwrap();
        let reg = std::fs::read(p.join("regressor.bin")).unwrap();
        (report, csv, reg)
    };
    assert_eq!(run_once(), run_once());
}

#[test]
fn exact_linear_spec_reconstructs_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    run(
        p,
        &[
            "gen-model",
            "--vertices",
            "80",
            "--coeffs",
            "10",
            "--profile",
            "random-smooth",
            "--spec-kind",
            "axis-difference",
            "--measurements",
            "6",
        ],
    );
    run(p, &["fit", "--samples", "10000"]);
    run(p, &["eval", "recon", "--bodies", "2000"]);
    let report = json(p, "eval_recon.json");
    assert!(report["meas_mae_mm"].as_f64().unwrap() < 1e-6);
}

#[test]
fn units_flag_switches_key_suffixes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    run(p, &["gen-model", "--vertices", "200", "--coeffs", "10"]);
    run(p, &["measure"]);
    let mm = json(p, "measurements.json");
    run(p, &["--units", "m", "measure"]);
    let m = json(p, "measurements.json");
    let a = mm["measurements"][0]["value_mm"].as_f64().unwrap();
    let b = m["measurements"][0]["value_m"].as_f64().unwrap();
    assert!((a - 1e3 * b).abs() < 1e-9 * a.abs());
}

#[test]
fn offsets_write_one_mesh_per_request() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    run(p, &["gen-model", "--vertices", "300", "--coeffs", "30"]);
    run(p, &["fit", "--samples", "5000"]);
    run(
        p,
        &[
            "offset",
            "--measure",
            "chest_width=+50",
            "--measure",
            "calf_length=-20",
        ],
    );
    for f in [
        "base.obj",
        "offset_chest_width.obj",
        "offset_calf_length.obj",
        "offsets.csv",
    ] {
        assert!(p.join(f).exists(), "{f}");
    }
    let csv = std::fs::read_to_string(p.join("offsets.csv")).unwrap();
    assert!(csv.starts_with("input,measurement,requested_mm,achieved_mm"));
}
