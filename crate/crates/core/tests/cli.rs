use std::path::Path;
use std::process::Command;

fn dbar(out: &Path, args: &[&str]) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_dbar"))
        .arg("--out")
        .arg(out)
        .args(args)
        .output()
        .expect("run dbar");
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stderr).into_owned())
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn kernels_writes_csv_and_record() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = dbar(dir.path(), &["kernels", "--pairs", "20"]);
    assert_eq!(code, 0, "{err}");
    let csv = std::fs::read_to_string(dir.path().join("kernels.csv")).unwrap();
    assert!(csv.starts_with("w_re,w_im,z_re,z_im,ReS,ImS,ReK,ImK,bound_ratio"));
    assert_eq!(csv.lines().count(), 21);
    let v = json(&dir.path().join("kernels.json"));
    assert_eq!(v["subcommand"], "kernels");
    assert_eq!(v["status"], "pass");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dbar(dir.path(), &["frobnicate"]).0, 2);
    assert_eq!(dbar(dir.path(), &["kernels", "--domain", "hexagon"]).0, 2);
}

#[test]
fn records_are_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args = ["--seed", "7", "appendix-check", "--test", "identity", "--count", "100"];
    assert_eq!(dbar(a.path(), &args).0, 0);
    assert_eq!(dbar(b.path(), &args).0, 0);
    let read = |d: &Path| std::fs::read(d.join("appendix-check.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn bidisc_solve_reports_defects() {
    let dir = tempfile::tempdir().unwrap();
    let (code, err) = dbar(dir.path(), &["solve", "--domains", "disc,disc", "--form", "monomial11", "--mode", "tilde"]);
    assert_eq!(code, 0, "{err}");
    let v = json(&dir.path().join("solve.json"));
    assert_eq!(v["config"]["command"]["mode"], "tilde");
    assert!(v["result"].to_string().contains("defect"));
}
