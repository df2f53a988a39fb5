use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use undulation_core::exactnum::PrimeField;
use undulation_core::linalg::SparseMatrix;
use undulation_core::undulation::InvariantReportFile;

fn undulate(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_undulate")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn int(v: &Value) -> i128 {
    v.as_str().unwrap().parse().unwrap()
}

#[test]
fn generated_undulation_curve_has_zero_invariant_and_its_line() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("u.json");
    assert!(undulate(&["gen", "undulation", "--seed", "7", "--out", path(&curve)]).status.success());
    let witness: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("u.witness.json")).unwrap()).unwrap();

    let o = undulate(&["--format", "json", "invariant", path(&curve)]);
    assert!(o.status.success());
    let report: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(report["format"], 1);
    assert_eq!(report["value"], "0");
    assert_eq!(report["verdict"], "zero");
    let v: Vec<i128> = witness["v"].as_array().unwrap().iter().map(int).collect();
    let found = report["lines"].as_array().unwrap().iter().any(|l| {
        let l: Vec<i128> = l.as_array().unwrap().iter().map(int).collect();
        l[1] * v[2] == l[2] * v[1] && l[0] * v[2] == l[2] * v[0] && l[0] * v[1] == l[1] * v[0]
    });
    assert!(found, "{report}");

    let typed: InvariantReportFile = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(serde_json::to_value(&typed).unwrap(), report);

    let o = undulate(&["invariant", path(&curve), "--fail-on-undulation"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("verdict zero"));
}

#[test]
fn generation_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    for p in [&a, &b] {
        assert!(undulate(&["gen", "undulation", "-r", "4", "--seed", "7", "--out", path(p)]).status.success());
    }
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(dir.path().join("a.witness.json")).unwrap(),
        std::fs::read(dir.path().join("b.witness.json")).unwrap()
    );
    let r1 = undulate(&["gen", "random", "--seed", "3"]);
    let r2 = undulate(&["gen", "random", "--seed", "3"]);
    assert_eq!(r1.stdout, r2.stdout);
    assert_ne!(r1.stdout, undulate(&["gen", "random", "--seed", "4"]).stdout);
}

#[test]
fn random_curve_is_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let curve = dir.path().join("g.json");
    assert!(undulate(&["gen", "random", "--seed", "3", "--out", path(&curve)]).status.success());
    let o = undulate(&["invariant", path(&curve), "--fail-on-undulation"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("verdict nonzero"));
}

#[test]
fn bad_curve_files_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.json");
    std::fs::write(&empty, "").unwrap();
    assert_eq!(undulate(&["invariant", path(&empty)]).status.code(), Some(1));
    let quintic = dir.path().join("q.json");
    assert!(undulate(&["gen", "random", "-r", "5", "--out", path(&quintic)]).status.success());
    let o = undulate(&["invariant", path(&quintic)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("quartic"));
    assert_eq!(undulate(&["invariant", "/nonexistent/curve.json"]).status.code(), Some(1));
}

#[test]
fn dimension_examples() {
    for (args, want) in [(["-r", "4", "-n", "3", "-m", "5"], 63), (["-r", "5", "-n", "2", "-m", "6"], 6), (["-r", "4", "-n", "1", "-m", "4"], 0)] {
        let mut full = vec!["--format", "json", "dims"];
        full.extend(args);
        let o = undulate(&full);
        assert!(o.status.success());
        let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
        assert_eq!(v["dim"], want, "{args:?}");
        assert_eq!(v["primes"].as_array().unwrap().len(), 2);
    }
    assert!(undulate(&["dims", "-n", "2", "-m", "4", "--expect", "1"]).status.success());
    assert_eq!(undulate(&["dims", "-n", "2", "-m", "4", "--expect", "2"]).status.code(), Some(1));
}

#[test]
fn triangle_and_refined_cells() {
    let o = undulate(&["--format", "json", "dims", "-n", "2", "-m", "5", "--triangle", "--prime", "2147483647"]);
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    let cells = v["cells"].as_array().unwrap();
    assert_eq!(cells.iter().map(|c| c["dim"].as_u64().unwrap()).sum::<u64>(), 3);
    let nonzero: Vec<&Value> = cells.iter().filter(|c| c["dim"] != 0).collect();
    assert_eq!(nonzero.len(), 3);
    let o = undulate(&["dims", "-n", "2", "-m", "5", "--refined", "5,4,4", "--expect", "1"]);
    assert!(o.status.success(), "{}", stdout(&o));
    assert_eq!(undulate(&["dims", "-n", "2", "-m", "5", "--refined", "5,4"]).status.code(), Some(2));
    assert_eq!(undulate(&["dims", "-n", "2", "-m", "5", "--refined", "5,4,5"]).status.code(), Some(1));
}

#[test]
fn heavy_gate() {
    let o = undulate(&["dims", "-r", "5", "-n", "6", "-m", "7"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--heavy"));
    assert_eq!(undulate(&["quintic"]).status.code(), Some(1));
}

#[test]
fn quintic_budget_exhaustion_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let ck = dir.path().join("q.jsonl");
    let o = undulate(&["quintic", "--heavy", "--budget-secs", "0", "--checkpoint", path(&ck)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(ck.exists());
}

#[test]
fn verify_default_and_corrupted() {
    let o = undulate(&["verify"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let out = stdout(&o);
    assert!(!out.contains("FAIL"));
    assert!(out.lines().filter(|l| l.starts_with("PASS ratio")).count() == 2);
    assert!(!out.contains("probabilistic"));

    let o = undulate(&["verify", "--prime", "2147483647", "--curves", "5", "--points", "10"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("probabilistic, add --prime for confirmation"));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    let text = undulation_core::undulation::embedded_appendix_text().replacen("beta 1 :", "beta 1 : a*v1^5 +", 1);
    std::fs::write(&bad, text).unwrap();
    let o = undulate(&["verify", "--appendix", path(&bad)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("checksum"));
}

#[test]
fn dump_round_trips_through_triplets() {
    let o = undulate(&["dump", "-n", "2", "-m", "4", "--prime", "2147483647"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("# format 1 prime 2147483647"));
    let m = SparseMatrix::from_triplets(PrimeField::new(2147483647).unwrap(), &text).unwrap();
    assert_eq!(m.ncols(), 1800);
    assert!(m.nrows() > m.ncols());
}

#[test]
fn basis_lifts_to_rationals() {
    let o = undulate(&["--format", "json", "basis", "-n", "2", "-m", "4"]);
    assert!(o.status.success());
    let v: Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["coefficients"], "rational");
    let polys = v["polys"].as_array().unwrap();
    assert_eq!(polys.len(), 1);
    assert!(polys[0].as_str().unwrap().contains("1/4*C[3,1,0]*C[1,2,1]*v2*v3^3"));
}
