use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn gsvd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gsvd"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn json(path: PathBuf) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn example1(n: usize) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let out = gsvd(&["generate", "example1", "--n", &n.to_string(), "--out", s(&dir.path().join("pair"))]);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        Fixture { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn a(&self) -> String {
        s(&self.path("pair/A.mtx")).to_string()
    }

    fn l(&self) -> String {
        s(&self.path("pair/L.mtx")).to_string()
    }

    fn run(&self, out: &str, extra: &[&str]) -> Output {
        let (a, l, o) = (self.a(), self.l(), self.path(out));
        let mut args = vec!["run", "--a", &a, "--l", &l, "--out", s(&o)];
        args.extend_from_slice(extra);
        gsvd(&args)
    }

    fn oracle(&self, out: &str) -> Output {
        let (a, l, o) = (self.a(), self.l(), self.path(out));
        gsvd(&["oracle", "--a", &a, "--l", &l, "--out", s(&o)])
    }
}

#[test]
fn generate_example1_writes_pair_and_truth() {
    let fx = Fixture::example1(200);
    for f in ["A.mtx", "L.mtx", "truth.json"] {
        assert!(fx.path("pair").join(f).exists(), "{f}");
    }
    let truth = json(fx.path("pair/truth.json"));
    assert_eq!(truth["c"][0].as_f64(), Some(1.0));
    assert_eq!(truth["n"].as_u64(), Some(200));
}

#[test]
fn generate_designed_pair() {
    let dir = tempfile::tempdir().unwrap();
    let out = gsvd(&[
        "generate",
        "designed",
        "--n",
        "10",
        "--r",
        "8",
        "--c",
        "0.9,0.8,0.7,0.6,0.5,0.4,0.3,0.2",
        "--out",
        s(dir.path()),
    ]);
    assert_eq!(code(&out), 0);
    let truth = json(dir.path().join("truth.json"));
    assert_eq!(truth["r"].as_u64(), Some(8));
    assert_eq!(truth["c"].as_array().unwrap().len(), 8);
}

#[test]
fn bad_generate_parameters_fail() {
    let dir = tempfile::tempdir().unwrap();
    let o = s(dir.path());
    assert_ne!(code(&gsvd(&["generate", "example3", "--n", "20", "--out", o])), 0);
    assert_ne!(code(&gsvd(&["generate", "designed", "--n", "3", "--c", "0.1,0.5,0.9", "--out", o])), 0);
    assert_ne!(code(&gsvd(&["generate", "example1", "--n", "4", "--out", o])), 0);
    assert_ne!(code(&gsvd(&["generate", "nonsense", "--n", "4", "--out", o])), 0);
}

#[test]
fn generated_pair_passes_oracle_identities() {
    let fx = Fixture::example1(100);
    assert_eq!(code(&fx.oracle("ref")), 0);
    let o = json(fx.path("ref/oracle.json"));
    let ids = &o["identities"];
    let nu = ids["nu"].as_f64().unwrap();
    for key in ["a_relation", "l_relation", "cross_relation", "normal_relation"] {
        assert!(ids[key].as_f64().unwrap() <= 1e-9 * nu, "{key}");
    }
    assert_eq!(o["r"].as_u64(), Some(100));
    assert!(fx.path("ref/X1.mtx").exists() && fx.path("ref/manifest.json").exists());
}

#[test]
fn oracle_on_trivial_diagonal_pair() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("A.mtx");
    let l = dir.path().join("L.mtx");
    std::fs::write(&a, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 3.0\n2 2 1.0\n").unwrap();
    std::fs::write(&l, "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 4.0\n2 2 1.0\n").unwrap();
    let out = gsvd(&["oracle", "--a", s(&a), "--l", s(&l), "--out", s(&dir.path().join("ref"))]);
    assert_eq!(code(&out), 0);
    let m = json(dir.path().join("ref/manifest.json"));
    let c: Vec<f64> = m["c"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    assert!((c[0] - 1.0 / 2f64.sqrt()).abs() <= 1e-14);
    assert!((c[1] - 0.6).abs() <= 1e-14);
}

#[test]
fn oracle_over_size_limit_exits_one() {
    let fx = Fixture::example1(60);
    let (a, l, o) = (fx.a(), fx.l(), fx.path("ref"));
    let out = Command::new(env!("CARGO_BIN_EXE_gsvd"))
        .args(["oracle", "--a", &a, "--l", &l, "--out", s(&o)])
        .env("GSVD_DENSE_LIMIT", "50")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("desk-scale"));
}

#[test]
fn run_example1_top_three() {
    let fx = Fixture::example1(200);
    let out = fx.run("run", &["--largest", "3", "--reorth", "full", "--tol", "1e-10"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["history.csv", "summary.json", "X.mtx", "PA.mtx", "PL.mtx"] {
        assert!(fx.path("run").join(f).exists(), "{f}");
    }
    let sum = json(fx.path("run/summary.json"));
    let tuples = sum["tuples"].as_array().unwrap();
    assert_eq!(tuples.len(), 3);
    for (t, c) in tuples.iter().zip([1.0, 0.95, 0.90]) {
        assert_eq!(t["converged"], Value::Bool(true));
        assert!((t["c"].as_f64().unwrap() - c).abs() <= 1e-10);
    }
    assert_eq!(sum["all_converged"], Value::Bool(true));
    assert_eq!(sum["config"]["largest"].as_u64(), Some(3));
    assert_eq!(sum["seed"], sum["config"]["seed"]);
    assert_eq!(sum["pair_hash"].as_str().unwrap().len(), 64);
    assert!(sum["breakdown_tol"].as_f64().unwrap() > 0.0);
    assert_eq!(sum["ghost_detected"], Value::Null);
}

#[test]
fn run_without_reorth_flags_ghosts() {
    let fx = Fixture::example1(200);
    assert_eq!(code(&fx.oracle("ref")), 0);
    let r = fx.path("ref");
    let out = fx.run(
        "run",
        &["--largest", "3", "--reorth", "none", "--max-iters", "400", "--reference", s(&r)],
    );
    assert_ne!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let sum = json(fx.path("run/summary.json"));
    assert_eq!(sum["ghost_detected"], Value::Bool(true));
    assert!(sum["ghost_events"].as_u64().unwrap() > 0);
}

#[test]
fn l_side_avoids_zero() {
    let fx = Fixture::example1(200);
    assert_eq!(code(&fx.oracle("ref")), 0);
    let r = fx.path("ref");
    let out = fx.run(
        "run",
        &["--side", "L", "--largest", "0", "--smallest", "3", "--reference", s(&r), "--no-early-stop", "--max-iters", "120"],
    );
    assert_ne!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let sum = json(fx.path("run/summary.json"));
    let truth = json(fx.path("pair/truth.json"));
    let s_true: Vec<f64> = truth["s"].as_array().unwrap().iter().map(|v| v.as_f64().unwrap()).collect();
    for (t, want) in sum["tuples"].as_array().unwrap().iter().zip(&s_true[1..4]) {
        assert!((t["s"].as_f64().unwrap() - want).abs() <= 1e-9);
    }
    let csv = std::fs::read_to_string(fx.path("run/history.csv")).unwrap();
    for line in csv.lines().skip(2) {
        let theta: f64 = line.split(',').nth(3).unwrap().parse().unwrap();
        assert!(theta >= 1e-6, "{line}");
    }
}

#[test]
fn max_iters_exit_two_and_bad_input_exit_one() {
    let fx = Fixture::example1(50);
    let out = fx.run("short", &["--largest", "2", "--max-iters", "4"]);
    assert_eq!(code(&out), 2);
    let sum = json(fx.path("short/summary.json"));
    assert_eq!(sum["stop"]["reason"].as_str(), Some("max_iters"));

    let missing = fx.path("missing.mtx");
    let l = fx.l();
    let out = gsvd(&["run", "--a", s(&missing), "--l", &l, "--out", s(&fx.path("x"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.mtx"));

    assert_eq!(code(&gsvd(&["run", "--bogus"])), 1);
    assert_eq!(code(&fx.run("bad", &["--tol", "-1"])), 1);
}

#[test]
fn identical_config_gives_identical_history() {
    let fx = Fixture::example1(80);
    let args = ["--largest", "2", "--smallest", "1", "--seed", "99", "--no-early-stop", "--max-iters", "40"];
    assert_ne!(code(&fx.run("r1", &args)), 1);
    assert_ne!(code(&fx.run("r2", &args)), 1);
    let h1 = std::fs::read(fx.path("r1/history.csv")).unwrap();
    let h2 = std::fs::read(fx.path("r2/history.csv")).unwrap();
    assert_eq!(h1, h2);
    assert!(String::from_utf8_lossy(&h1).starts_with("#schema="));
}

fn compare_rows(path: PathBuf) -> Vec<Value> {
    json(path)["rows"].as_array().unwrap().clone()
}

#[test]
fn compare_against_self_oracle_and_other_side() {
    let fx = Fixture::example1(200);
    assert_eq!(code(&fx.oracle("ref")), 0);
    assert_eq!(code(&fx.run("a", &["--largest", "3", "--smallest", "3"])), 0);
    assert_eq!(code(&fx.run("l", &["--side", "L", "--largest", "3", "--smallest", "3"])), 0);
    let (a, l, r) = (fx.path("a"), fx.path("l"), fx.path("ref"));

    assert_eq!(code(&gsvd(&["compare", s(&a), s(&a), "--out", s(&fx.path("self"))])), 0);
    for row in compare_rows(fx.path("self/compare.json")) {
        assert_eq!(row["err_value"].as_f64(), Some(0.0));
        assert!(row["err_sin_x"].as_f64().unwrap() <= 1e-15);
    }
    assert!(fx.path("self/compare.csv").exists());

    assert_eq!(code(&gsvd(&["compare", s(&a), s(&r)])), 0);
    let rows = compare_rows(a.join("compare.json"));
    assert_eq!(rows.len(), 6);
    for row in rows {
        assert!(row["err_value"].as_f64().unwrap() <= 1e-8, "{row}");
        assert!(row["err_sin_x"].as_f64().unwrap() <= 1e-8, "{row}");
    }

    // L largest s = A smallest c, and vice versa, away from c = 1
    assert_eq!(code(&gsvd(&["compare", s(&l), s(&a), "--out", s(&fx.path("la"))])), 0);
    let paired: Vec<Value> = compare_rows(fx.path("la/compare.json"))
        .into_iter()
        .filter(|r| !r["matched"].is_null())
        .collect();
    assert!(paired.len() >= 4, "{paired:?}");
    for row in paired {
        assert!(row["err_gamma_rel"].as_f64().unwrap() <= 1e-7, "{row}");
    }
}

#[test]
fn compare_refuses_different_pairs() {
    let fx = Fixture::example1(30);
    let other = tempfile::tempdir().unwrap();
    let g = gsvd(&["generate", "example1", "--n", "30", "--seed", "5", "--out", s(other.path())]);
    assert_eq!(code(&g), 0);
    assert_eq!(code(&fx.run("a", &[])), 0);
    let out = gsvd(&[
        "oracle",
        "--a",
        s(&other.path().join("A.mtx")),
        "--l",
        s(&other.path().join("L.mtx")),
        "--out",
        s(&other.path().join("ref")),
    ]);
    assert_eq!(code(&out), 0);
    let out = gsvd(&["compare", s(&fx.path("a")), s(&other.path().join("ref"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("hash"));
}
