use std::path::Path;
use std::process::{Command, Output};

use fxcert::certify::Witness;
use fxcert::guarantee::Certificate;

fn fxcert(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fxcert"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const REDUCED: &str = r#"{"format":{"p":3,"q":4,"p_prime":2,"q_prime":4,"rounding":"floor"},"n":2,
 "Q":[24,4,4,16],"c_min":[-16,-16],"c_max":[16,16],"l":[-8,-8],"u":[8,8]}"#;

/// Gradient `Q x` leaves the (2.4) range for large `x`.
const OVERFLOWING: &str = r#"{"format":{"p":2,"q":4,"p_prime":2,"q_prime":2,"rounding":"floor"},"n":1,
 "Q":[15],"c_min":[-15],"c_max":[15],"l":[-15],"u":[15]}"#;

fn write_problem(dir: &Path, text: &str) -> String {
    let p = dir.join("problem.json");
    std::fs::write(&p, text).unwrap();
    path(&p).to_string()
}

#[test]
fn example6_prints_exact_values() {
    let out = fxcert(&["example6"]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("0.069580078125"), "{text}");
    assert!(text.contains("0.078125"), "{text}");
    assert!(text.contains("12.28"), "{text}");
}

#[test]
fn missing_problem_is_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nope.json");
    let out = fxcert(&["certify", "--problem", path(&missing), "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = fxcert(&["solve", "--problem", path(&missing), "--certificate", path(&missing)]);
    assert_eq!(code(&out), 2);
}

#[test]
fn malformed_arguments_are_input_errors() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), REDUCED);
    let out = fxcert(&["certify", "--problem", &problem, "--format", "3.x", "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    let bad = write_problem(dir.path(), "{\"format\": 1}");
    let out = fxcert(&["certify", "--problem", &bad, "--out", path(dir.path())]);
    assert_eq!(code(&out), 2);
    let out = fxcert(&["no-such-command"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn certify_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), REDUCED);
    let out_dir = dir.path().join("run");
    let out = fxcert(&["certify", "--problem", &problem, "--out", path(&out_dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["certificate.json", "report.json", "report.txt", "timings.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let cert = Certificate::load(&out_dir.join("certificate.json")).unwrap();
    assert_eq!(cert.recompute().unwrap(), cert);

    let cert_path = out_dir.join("certificate.json");
    let solve_dir = dir.path().join("solve");
    let out = fxcert(&[
        "solve",
        "--problem",
        &problem,
        "--certificate",
        path(&cert_path),
        "--c",
        "0.5,-0.25",
        "--x0",
        "-0.5,0.5",
        "--out",
        path(&solve_dir),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(solve_dir.join("trace.csv")).unwrap();
    assert!(csv.starts_with("k,x0,x1,next0,next1,dhat2_raw,exact_d,err_sq"));
    assert!(solve_dir.join("solve_report.json").exists());
}

#[test]
fn certificates_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), REDUCED);
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = fxcert(&["certify", "--problem", &problem, "--out", path(&d)]);
        assert_eq!(code(&out), 0);
        (
            std::fs::read(d.join("certificate.json")).unwrap(),
            std::fs::read(d.join("report.json")).unwrap(),
        )
    };
    assert_eq!(run("a"), run("b"));
}

#[test]
fn failed_check_writes_replayable_witness() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), REDUCED);
    let run = |name: &str| {
        let d = dir.path().join(name);
        let out = fxcert(&["certify", "--problem", &problem, "--omega", "1e-9", "--out", path(&d)]);
        assert_eq!(code(&out), 1);
        std::fs::read(d.join("witness.json")).unwrap()
    };
    let a = run("a");
    assert_eq!(a, run("b"));
    let w = Witness::load(&dir.path().join("a").join("witness.json")).unwrap();
    let replay = w.replay().unwrap();
    assert!(replay.violates);
    assert_eq!(replay.value, w.value());
}

#[test]
fn passing_check_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), REDUCED);
    let out = fxcert(&["certify", "--problem", &problem, "--omega", "1", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0);
    assert!(!dir.path().join("witness.json").exists());
}

#[test]
fn overflow_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let problem = write_problem(dir.path(), OVERFLOWING);
    let out = fxcert(&["certify", "--problem", &problem, "--out", path(dir.path())]);
    assert_eq!(code(&out), 3);
    assert!(dir.path().join("witness.json").exists());
}

#[test]
fn mpc_build_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = fxcert(&["mpc-build", "--preset", "scalar", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0);
    for f in ["problem.json", "mpc_config.json", "mpc_report.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let out = fxcert(&["mpc-build", "--preset", "three-mass-spring", "--out", path(dir.path())]);
    assert_eq!(code(&out), 0);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("match"), "{text}");
    let file = fxcert::qp::ProblemFile::load(&dir.path().join("problem.json")).unwrap();
    assert_eq!(file.n, 4);

    // the written config reproduces the same problem
    let again = dir.path().join("again");
    let cfg = dir.path().join("mpc_config.json");
    let out = fxcert(&["mpc-build", "--config", path(&cfg), "--out", path(&again)]);
    assert_eq!(code(&out), 0);
    assert_eq!(
        std::fs::read(again.join("problem.json")).unwrap(),
        std::fs::read(dir.path().join("problem.json")).unwrap()
    );
}
