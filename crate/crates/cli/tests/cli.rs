use std::process::Command;

use freeconv_cli::{describe, parse_config, resolve, run, with_workers, CliError};

const SC_PENCIL: &str = r#""pencil": {"a0": [[0]], "generators": [[[1]]]}"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_freeconv"))
}

fn cfg(body: &str) -> freeconv_cli::Config {
    parse_config(body).unwrap()
}

fn csv_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(2).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn solve_semicircle_at_3i() {
    let out = run(cfg(&format!(r#"{{ {SC_PENCIL}, "lambda": [0, 3] }}"#)), "solve", None).unwrap();
    assert!(out.pass());
    let g = &out.record["results"]["g"][0][0];
    let im = g[1].as_f64().unwrap();
    // (z − √(z² − 4))/2 at z = 3i
    let exact = (3.0 - 13f64.sqrt()) / 2.0;
    assert!((im - exact).abs() < 1e-10 && g[0].as_f64().unwrap().abs() < 1e-12);
    assert!((im + 0.302776).abs() < 1e-6);
    assert!(out.record["results"]["residual"].as_f64().unwrap() <= 1e-10);
    assert!(out.csv.starts_with(&format!("# config-hash: {}\nrow,col,re,im\n", out.hash)));
}

#[test]
fn density_marchenko_pastur_row_at_two() {
    let out = run(cfg(&format!(r#"{{ {SC_PENCIL}, "model": "marchenko_pastur:1" }}"#)), "density", None).unwrap();
    let row = csv_rows(&out.csv)
        .into_iter()
        .find(|r| (r[0].parse::<f64>().unwrap() - 2.0).abs() < 1e-9)
        .expect("grid contains x = 2");
    let d: f64 = row[1].parse().unwrap();
    assert!((d - 1.0 / (2.0 * std::f64::consts::PI)).abs() <= 5e-3, "{d}");
    assert!(out.pass());
}

#[test]
fn missing_field_is_named() {
    let err = run(cfg(r#"{"polynomial": {"text": "x1", "generators": 1}}"#), "converge", None).unwrap_err();
    assert!(matches!(err, CliError::Config(_)));
    assert!(err.to_string().contains("n_values"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"polynomial": {"text": "x1", "generators": 1}}"#).unwrap();
    let out = bin().args(["converge", "--config"]).arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_values"));
}

#[test]
fn unknown_and_unused_fields_are_rejected() {
    let err = parse_config(r#"{"n_valuez": [1, 2]}"#).unwrap_err();
    assert!(err.to_string().contains("n_valuez"), "{err}");
    let err = parse_config(r#"{"tolerances": {"slope": 1}}"#).unwrap_err();
    assert!(err.to_string().contains("slope"), "{err}");
    let err = run(cfg(&format!(r#"{{ {SC_PENCIL}, "lambda": [0, 3], "replicas": 10 }}"#)), "solve", None).unwrap_err();
    assert!(err.to_string().contains("replicas"), "{err}");
    let err = run(cfg(&format!(r#"{{ {SC_PENCIL}, "lambda": [0, 3], "experiment": "density" }}"#)), "solve", None)
        .unwrap_err();
    assert!(err.to_string().contains("experiment"), "{err}");
    let err = run(cfg(&format!(r#"{{ {SC_PENCIL}, "n_values": [10], "distribution": "cauchy" }}"#)), "containment", None)
        .unwrap_err();
    assert!(err.to_string().contains("distribution"), "{err}");
}

#[test]
fn describe_texts() {
    let text = describe("master-check-iid").unwrap();
    assert!(text.contains("κ₄") && text.contains("n⁻²"));
    assert!(text.contains("slope_n2"));
    assert!(describe("containment").unwrap().contains("ε-thickened support"));
    let err = describe("nope").unwrap_err().to_string();
    for name in freeconv_cli::EXPERIMENTS {
        assert!(err.contains(name));
    }
    let out = bin().args(["describe", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let out = bin().args(["describe", "wishart-ibp"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains("p >= n + 2"));
}

#[test]
fn config_hash_semantics() {
    let hash = |body: &str, exp: &str| resolve(cfg(body), exp, None).unwrap().hash;
    let a = hash(r#"{"lambda": [0, 3], "pencil": {"generators": [[[1]]], "a0": [[0]]}}"#, "solve");
    let b = hash(r#"{"pencil": {"a0": [[0]], "generators": [[[1]]]}, "lambda": [0, 3]}"#, "solve");
    assert_eq!(a, b);
    // explicit defaults, output dir and equivalent number forms change nothing
    let c = hash(
        r#"{"pencil": {"a0": [[[0, 0]]], "generators": [[[[1, 0]]]]}, "lambda": [0, 3], "model": "semicircular",
            "output": "elsewhere", "tolerances": {"residual_max": 1e-10}}"#,
        "solve",
    );
    assert_eq!(a, c);
    assert_ne!(a, hash(r#"{"pencil": {"a0": [[0]], "generators": [[[1]]]}, "lambda": [0, 3.5]}"#, "solve"));
    assert_ne!(
        a,
        hash(r#"{"pencil": {"a0": [[0]], "generators": [[[1]]]}, "lambda": [0, 3], "model": "marchenko_pastur:1"}"#, "solve")
    );
    let both = resolve(cfg(&format!(r#"{{ {SC_PENCIL}, "word": [1], "n_values": [10, 20, 40] }}"#)), "variance-check", None);
    assert!(both.is_err());
    let base = r#"{ "word": [1, 1], "n_values": [10, 20, 40] }"#;
    let h0 = resolve(cfg(base), "variance-check", None).unwrap().hash;
    let h1 = resolve(cfg(base), "variance-check", Some(1)).unwrap().hash;
    let h0b = resolve(cfg(base), "variance-check", Some(0)).unwrap().hash;
    assert_ne!(h0, h1);
    assert_eq!(h0, h0b);
}

#[test]
fn identical_csv_across_reruns_and_workers() {
    let body = format!(r#"{{ {SC_PENCIL}, "distribution": "uniform", "n_values": [20, 40, 80], "replicas": 60 }}"#);
    let one = with_workers(Some(1), || run(cfg(&body), "master-check-iid", Some(5))).unwrap().unwrap();
    let again = with_workers(Some(1), || run(cfg(&body), "master-check-iid", Some(5))).unwrap().unwrap();
    let three = with_workers(Some(3), || run(cfg(&body), "master-check-iid", Some(5))).unwrap().unwrap();
    assert_eq!(one.csv, again.csv);
    assert_eq!(one.csv, three.csv);
    let other = with_workers(Some(2), || run(cfg(&body), "master-check-iid", Some(6))).unwrap().unwrap();
    assert_ne!(one.csv, other.csv);
}

#[test]
fn binary_writes_files_and_reports_contract_failure() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("solve.json");
    std::fs::write(&path, format!(r#"{{ {SC_PENCIL}, "lambda": [0, 3] }}"#)).unwrap();
    let out = bin()
        .args(["solve", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("o"))
        .env("FREECONV_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let files: Vec<_> = std::fs::read_dir(dir.path().join("o")).unwrap().map(|e| e.unwrap().file_name()).collect();
    assert_eq!(files.len(), 2);
    assert!(files.iter().all(|f| f.to_string_lossy().starts_with("solve-")));

    // an unattainable residual bound is a contract failure, not an error
    std::fs::write(&path, format!(r#"{{ {SC_PENCIL}, "lambda": [0, 3], "tolerances": {{"residual_max": 0}} }}"#)).unwrap();
    let out = bin().args(["solve", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stdout).contains("FAIL"));

    // inner-module preconditions surface verbatim as errors
    std::fs::write(&path, r#"{"cases": [{"n": 10, "p": 11, "phi": "trace"}], "replicas": 10}"#).unwrap();
    let out = bin().args(["wishart-ibp", "--config"]).arg(&path).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("p >= n + 2"));
}

#[test]
fn pass_fail_is_recomputable_from_the_table() {
    let body = r#"{"cases": [{"n": 8, "p": 16, "phi": "trace"}, {"n": 8, "p": 12, "phi": "resolvent", "direction": [1, 2]},
                             {"n": 8, "p": 12, "phi": "zero"}], "replicas": 2000}"#;
    let out = run(cfg(body), "wishart-ibp", Some(3)).unwrap();
    for (row, contract) in csv_rows(&out.csv).iter().zip(&out.contracts) {
        let re: f64 = row[4].parse().unwrap();
        let im: f64 = row[5].parse().unwrap();
        let se: f64 = row[6].parse().unwrap();
        assert_eq!(re.hypot(im) <= 4.0 * se, contract.pass);
    }
    assert_eq!(out.contracts.len(), 3);
    assert!(out.contracts[2].pass);

    let body = format!(r#"{{ {SC_PENCIL}, "n_values": [50], "seeds": [1, 2, 3, 4] }}"#);
    let out = run(cfg(&body), "containment", None).unwrap();
    let rows = csv_rows(&out.csv);
    let rate = rows.iter().filter(|r| r[5] == "1").count() as f64 / rows.len() as f64;
    assert_eq!(rate >= 0.95, out.contracts[0].pass);
}

#[test]
fn every_experiment_runs_on_a_small_config() {
    let cases = [
        ("norm-predict", r#"{"polynomial": {"text": "x1^2", "generators": 1}}"#.to_string()),
        (
            "converge",
            r#"{"polynomial": {"text": "x1 + x2", "generators": 2}, "n_values": [20, 40], "seeds": [1, 2, 3]}"#.into(),
        ),
        ("master-check-wishart", format!(r#"{{ {SC_PENCIL}, "n_values": [10, 20, 40], "replicas": 40 }}"#)),
        ("correction-check", format!(r#"{{ {SC_PENCIL}, "n_values": [10, 20], "replicas": 40, "distribution": "uniform" }}"#)),
        ("variance-check", format!(r#"{{ {SC_PENCIL}, "n_values": [10, 20, 40], "replicas": 50 }}"#)),
        ("variance-check", r#"{"word": [], "n_values": [10, 20, 40], "replicas": 50}"#.into()),
        ("containment", format!(r#"{{ {SC_PENCIL}, "model": "marchenko_pastur:2", "n_values": [30] }}"#)),
    ];
    for (exp, body) in cases {
        let out = run(cfg(&body), exp, None).unwrap_or_else(|e| panic!("{exp}: {e}"));
        assert!(!out.contracts.is_empty());
        assert!(out.record["wall_clock_seconds"].as_f64().is_some());
    }
    let out = run(cfg(r#"{"polynomial": {"text": "x1^2", "generators": 1}}"#), "norm-predict", None).unwrap();
    assert!((out.record["results"]["prediction"].as_f64().unwrap() - 4.0).abs() < 1e-3);
    let out = run(cfg(r#"{"word": [], "n_values": [10, 20, 40], "replicas": 50}"#), "variance-check", None).unwrap();
    assert!(out.pass());
}
