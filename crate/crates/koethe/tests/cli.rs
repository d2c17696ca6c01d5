use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use koethe::files::{MatrixFile, OperatorFile, SpecError};
use koethe::report::{ProbeReport, Report, ReportBody};
use koethe_core::KoetheError;
use serde_json::Value;

fn koethe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_koethe"))
        .args(args)
        .output()
        .unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn poly(dir: &Path, levels: usize, dims: usize) -> PathBuf {
    write(
        dir,
        &format!("poly{levels}x{dims}.toml"),
        &format!("kind = \"expr\"\nlevels = {levels}\ndims = {dims}\nexpr = \"k*ln(n)\"\n"),
    )
}

fn identity(dir: &Path, dims: usize) -> PathBuf {
    let pairs: Vec<String> = (1..=dims).map(|n| format!("[{n}, {n}, 1.0]")).collect();
    write(
        dir,
        "identity.toml",
        &format!(
            "kind = \"quasi_diagonal\"\npairs = [{}]\n",
            pairs.join(", ")
        ),
    )
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn check_b_divergent_verdict_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let a = poly(dir.path(), 4, 256);
    let out = koethe(&[
        "check-b",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--schedules",
        "k+1",
        "--ladder",
        "16,64,256",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json(&out);
    let body = &r["result"]["condition"];
    assert_eq!(body["condition"], "thm2_B");
    assert_eq!(body["verdict"], "DIVERGENT_C");
    assert_eq!(body["schedules"], serde_json::json!(["k+1"]));
    assert_eq!(body["ladder"], serde_json::json!([16, 64, 256]));
    assert!(body["witnesses"].as_array().unwrap().is_empty());
    let branches = body["branches"].as_array().unwrap();
    assert!(branches
        .iter()
        .all(|b| b["log_C"].as_array().unwrap().len() == 3));
    assert!(branches.iter().any(|b| b["divergent"] == true));
}

#[test]
fn extract_on_regraded_identity() {
    let dir = tempfile::tempdir().unwrap();
    let a = poly(dir.path(), 3, 300);
    let t = identity(dir.path(), 300);
    let report = dir.path().join("cert.json");
    let out = koethe(&[
        "extract",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--op",
        s(&t),
        "--nk",
        "1,2,3",
        "--log-m",
        "0,0,0",
        "--kcycle",
        "2",
        "--j",
        "3",
        "--out",
        s(&report),
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(out.stdout.is_empty());
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    let ex = &r["result"]["extraction"];
    assert_eq!(ex["regrade"]["n_k"], serde_json::json!([1, 2, 3]));
    let outcome = &ex["outcome"];
    assert_eq!(outcome["outcome"], "extracted");
    let ns: Vec<u64> = outcome["certificate"]["selections"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["n_j"].as_u64().unwrap())
        .collect();
    assert_eq!(ns, vec![4, 16, 17]);
    for clause in ["coordinate", "sampled", "ratios"] {
        assert_eq!(outcome["verification"][clause]["status"], "PASS");
    }
}

#[test]
fn failed_selection_is_a_result_not_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let a = poly(dir.path(), 3, 40);
    let t = identity(dir.path(), 40);
    let out = koethe(&[
        "extract",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--op",
        s(&t),
        "--nk",
        "1,2,3",
        "--j",
        "8",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let outcome = &json(&out)["result"]["extraction"]["outcome"];
    // n ≥ 2^(j + k_j) leaves 40 behind at j = 4
    assert_eq!(outcome["outcome"], "nj_not_found");
    assert_eq!(outcome["j"], 4);
}

#[test]
fn invalid_input_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let a = poly(dir.path(), 4, 64);
    let missing = dir.path().join("missing.toml");

    let out = koethe(&["check-b", "--a", s(&missing), "--b", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(out.stdout.is_empty());

    let bad_row = write(
        dir.path(),
        "dense.toml",
        "kind = \"dense\"\ndomain_dims = 2\nrange_dims = 3\ntheta = [\n  [1, 0, 0],\n  [0, 1],\n]\n",
    );
    let out = koethe(&[
        "opnorm",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--op",
        s(&bad_row),
        "--p",
        "1",
        "--q",
        "1",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(
        err.contains("theta row 2") && err.contains("line 6"),
        "{err}"
    );

    // ladder beyond the matrix size
    let out = koethe(&[
        "check-b",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--ladder",
        "16,64,256",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = koethe(&["check-b", "--a", s(&a), "--b", s(&a), "--schedules", "k-1"]);
    assert_eq!(out.status.code(), Some(2));

    let out = koethe(&[
        "probe",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--i",
        "1",
        "--v",
        "1",
        "--p",
        "1",
        "--q",
        "1",
        "--norm",
        "sup",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let out = koethe(&["check-b", "--a", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unwritable_output_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let a = poly(dir.path(), 4, 64);
    let out = koethe(&[
        "check-b",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--schedules",
        "k+1",
        "--ladder",
        "16,32,64",
        "--out",
        s(&dir.path().join("no/such/dir/r.json")),
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn explicit_matrix_violation_is_forwarded() {
    let text =
        "kind = \"explicit\"\nlevels = 2\ndims = 3\nentries = [0.0, 1.0, 2.0, 0.0, 0.5, 2.0]\n";
    let err = MatrixFile::parse(text).unwrap().build().unwrap_err();
    let SpecError::Koethe(KoetheError::ValidationFailed(v)) = err else {
        panic!("{err:?}");
    };
    assert_eq!(v.len(), 1);

    let dir = tempfile::tempdir().unwrap();
    let bad = write(dir.path(), "bad.toml", text);
    let out = koethe(&["check-s", "--a", s(&bad), "--b", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn valid_power_series_pair_parses_without_operator() {
    let a = MatrixFile::parse(
        "kind = \"power_series_infinite\"\nlevels = 3\ndims = 8\nalpha.expr = \"ln(n)\"\n",
    )
    .unwrap();
    let b = MatrixFile::parse("kind = \"power_series_finite\"\nlevels = 3\ndims = 8\nalpha.list = [1, 2, 3, 4, 5, 6, 7, 8]\n").unwrap();
    assert!(a.build().is_ok() && b.build().is_ok());
}

#[test]
fn reports_are_reproducible_modulo_timestamp() {
    let dir = tempfile::tempdir().unwrap();
    let a = poly(dir.path(), 3, 64);
    let t = identity(dir.path(), 64);
    let args = [
        "opnorm",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--op",
        s(&t),
        "--p",
        "2",
        "--q",
        "1",
        "--seed",
        "3",
    ];
    let strip = |out: Output| {
        let mut r = Report::parse(std::str::from_utf8(&out.stdout).unwrap()).unwrap();
        r.timestamp = 0;
        r.to_json()
    };
    let first = strip(koethe(&args));
    assert_eq!(first, strip(koethe(&args)));

    // the digest tracks file contents, not paths
    let copy = write(
        dir.path(),
        "copy.toml",
        &std::fs::read_to_string(&a).unwrap(),
    );
    let moved = strip(koethe(&[
        "opnorm",
        "--a",
        s(&copy),
        "--b",
        s(&copy),
        "--op",
        s(&t),
        "--p",
        "2",
        "--q",
        "1",
        "--seed",
        "3",
    ]));
    assert_eq!(first, moved);

    let reseeded = strip(koethe(&[
        "opnorm",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--op",
        s(&t),
        "--p",
        "2",
        "--q",
        "1",
        "--seed",
        "4",
    ]));
    assert_ne!(first, reseeded);
}

#[test]
fn non_finite_logs_survive_json() {
    let report = Report::new(
        "probe",
        0,
        "00".into(),
        0,
        ReportBody::Probe(ProbeReport {
            a: "a".into(),
            b: "b".into(),
            i: 1,
            v: 1,
            p: 1,
            q: 1,
            log_value: f64::NEG_INFINITY,
        }),
    );
    let text = report.to_json();
    assert!(text.contains("\"-inf\""));
    let back = Report::parse(&text).unwrap();
    assert_eq!(back, report);
    assert_eq!(back.digest(), report.digest());
}

#[test]
fn zero_operator_has_log_norm_minus_infinity() {
    let dir = tempfile::tempdir().unwrap();
    let a = poly(dir.path(), 2, 8);
    let t = write(
        dir.path(),
        "zero.toml",
        "kind = \"rank_one\"\ni = 1\nv = 1\nscale = 0.0\n",
    );
    let out = koethe(&[
        "opnorm",
        "--a",
        s(&a),
        "--b",
        s(&a),
        "--op",
        s(&t),
        "--p",
        "1",
        "--q",
        "1",
    ]);
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let r = json(&out);
    assert_eq!(r["result"]["opnorm"]["bound"]["log_value"], "-inf");
}

#[test]
fn operator_file_from_dense_rows() {
    let f = OperatorFile::parse(
        "kind = \"dense\"\ndomain_dims = 2\nrange_dims = 2\ntheta = [[0.0, 2.0], [0.5, 0.0]]\n",
    )
    .unwrap();
    let t = f.operator().unwrap();
    // T e_1 = 2 e_2, T e_2 = 0.5 e_1
    assert_eq!(t.basis_image(1), vec![(2, 2.0)]);
    assert_eq!(t.basis_image(2), vec![(1, 0.5)]);
}
