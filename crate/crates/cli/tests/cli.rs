use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phdae(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phdae"))
        .args(args)
        .env("PHDAE_NUM_THREADS", "2")
        .output()
        .expect("spawn phdae")
}

fn ok(args: &[&str]) -> String {
    let out = phdae(args);
    assert!(out.status.success(), "{args:?}\nstdout: {}\nstderr: {}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_validate_info() {
    let tmp = tempfile::tempdir().unwrap();
    let fom = tmp.path().join("fom");
    ok(&["generate", "--category", "proper-index-1-2", "--n", "30", "--m", "2", "--seed", "7", "--out", p(&fom)]);
    assert!(ok(&["validate", p(&fom)]).contains("valid staircase"));
    let info: serde_json::Value = serde_json::from_str(&ok(&["info", p(&fom)])).unwrap();
    assert_eq!(info["index"], 2);
    assert_eq!(info["rank_dinf"], 0);
    assert_eq!(info["m"], 2);
    assert!(info["nnz"]["A"].as_u64().unwrap() > 0);
}

#[test]
fn generation_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    for d in [&a, &b] {
        ok(&["generate", "--category", "improper-index-2", "--n", "24", "--m", "1", "--seed", "11", "--out", p(d)]);
    }
    let mut names: Vec<_> = fs::read_dir(&a).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    for n in names {
        assert_eq!(fs::read(a.join(&n)).unwrap(), fs::read(b.join(&n)).unwrap(), "{n:?}");
    }
}

#[test]
fn corrupted_bundle_fails_with_json_error() {
    let tmp = tempfile::tempdir().unwrap();
    let fom = tmp.path().join("fom");
    ok(&["generate", "--category", "index-1", "--n", "20", "--out", p(&fom)]);
    fs::write(fom.join("E22.mtx"), "%%MatrixMarket matrix coordinate real general\n3 3 1\n9 9 1.0\n").unwrap();
    let out = phdae(&["validate", p(&fom)]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert!(err["error"]["kind"].is_string());
}

#[test]
fn invalid_model_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let fom = tmp.path().join("fom");
    ok(&["generate", "--category", "index-0", "--n", "6", "--out", p(&fom)]);
    // indefinite E22
    fs::write(fom.join("E22.mtx"), "%%MatrixMarket matrix coordinate real general\n6 6 6\n1 1 -1\n2 2 1\n3 3 1\n4 4 1\n5 5 1\n6 6 1\n").unwrap();
    let out = phdae(&["validate", p(&fom)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stdout).contains("NOT"));
}

#[test]
fn reduce_outputs_validate_and_report_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let fom = tmp.path().join("fom");
    ok(&["generate", "--category", "improper-index-1-2", "--n", "30", "--m", "2", "--seed", "5", "--out", p(&fom)]);
    let shifts = tmp.path().join("shifts.json");
    fs::write(&shifts, r#"{"shifts": [[0.0, 0.3], [0.0, 3.0], [1.0, 0.0]]}"#).unwrap();

    let runs: [(&str, &[&str]); 5] = [
        ("fixed", &["--method", "fixed", "--order", "5", "--shifts", p(&shifts)]),
        ("irka", &["--method", "irka", "--order", "4", "--auto", "--max-iter", "30"]),
        ("trksm", &["--method", "trksm", "--order", "5"]),
        ("iha", &["--method", "iha", "--order", "5", "--shifts", p(&shifts)]),
        ("kyp", &["--method", "irka", "--order", "4", "--kyp-minus", "--max-iter", "30"]),
    ];
    for (name, extra) in runs {
        let out = tmp.path().join(name);
        let mut args = vec!["reduce", p(&fom)];
        args.extend_from_slice(extra);
        args.extend_from_slice(&["--out", p(&out)]);
        let summary: serde_json::Value = serde_json::from_str(&ok(&args)).unwrap();
        assert_eq!(summary["q"], 2, "{name}");
        ok(&["validate", p(&out)]);
        let prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("provenance.json")).unwrap()).unwrap();
        assert!(prov["shifts"].as_array().is_some_and(|s| !s.is_empty()), "{name}");
    }
    let fixed_prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("fixed/provenance.json")).unwrap()).unwrap();
    assert_eq!(fixed_prov["shifts"].as_array().unwrap().len(), 5);

    let ej = tmp.path().join("err.json");
    let stdout = ok(&["error", p(&fom), p(&tmp.path().join("iha")), "--norm", "h2", "--out", p(&ej)]);
    assert!(stdout.contains("unbounded (feedthrough mismatch)"), "{stdout}");
    let rep: serde_json::Value = serde_json::from_str(&fs::read_to_string(&ej).unwrap()).unwrap();
    assert_eq!(rep["h2"]["status"], "unbounded");
    let iha_prov: serde_json::Value = serde_json::from_str(&fs::read_to_string(tmp.path().join("iha/provenance.json")).unwrap()).unwrap();
    assert_eq!(iha_prov["h2_unbounded"], true);

    let stdout = ok(&["error", p(&fom), p(&tmp.path().join("fixed")), "--norm", "both"]);
    assert!(stdout.contains("(gramian)"), "{stdout}");
}

#[test]
fn response_csv_layout() {
    let tmp = tempfile::tempdir().unwrap();
    let fom = tmp.path().join("fom");
    ok(&["generate", "--category", "index-1", "--n", "20", "--m", "2", "--out", p(&fom)]);
    let csv = tmp.path().join("r.csv");
    ok(&["response", p(&fom), "--fmin", "0.1", "--fmax", "10", "--points", "7", "--out", p(&csv)]);
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "omega,Re_H11,Im_H11,Re_H12,Im_H12,Re_H21,Im_H21,Re_H22,Im_H22,sigma_max");
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 7);
    assert!(rows.iter().all(|r| r.split(',').count() == 10));
}

#[test]
fn bad_arguments_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let out = phdae(&["generate", "--category", "index-7", "--n", "10", "--out", p(tmp.path())]);
    assert!(!out.status.success());
    let err: serde_json::Value = serde_json::from_slice(&out.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_input");
    let out = phdae(&["generate", "--category", "ladder-index12", "--cells", "3", "--out", p(&tmp.path().join("l"))]);
    assert!(out.status.success());
    let out = phdae(&["info", p(&tmp.path().join("missing"))]);
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&out.stderr).unwrap()["error"]["kind"], "io");
}
