use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

const FIELDS: &str = r#"{"fields": [
  {"family": "polynomial", "dim_in": 2, "components": [
    [{"coeff": 0.25, "powers": [0, 2]}, {"coeff": 0.1, "powers": [0, 0]}],
    [{"coeff": -0.15, "powers": [1, 1]}]]},
  {"family": "affine", "matrix": [[0.0, -0.3], [0.3, 0.0]], "offset": [0.1, 0.0]}
]}"#;

const TERMINAL: &str = r#"{"family": "polynomial", "dim_in": 2, "components": [
  [{"coeff": 1.0, "powers": [2, 1]}, {"coeff": 0.7, "powers": [1, 0]}]]}"#;

const MU: &str = "weight,x1,x2\n0.5,0.1,0.2\n0.25,-0.3,0.4\n0.25,0,0\n";

fn roughkit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roughkit"))
        .args(args)
        .env_remove("ROUGHKIT_THREADS")
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

struct Work {
    dir: TempDir,
}

impl Work {
    fn new() -> Self {
        Work {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, text: &str) -> String {
        let p = self.dir.path().join(name);
        std::fs::write(&p, text).unwrap();
        p.display().to_string()
    }

    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).display().to_string()
    }

    /// A 2-d fBm driver at gamma 0.45 on 65 knots.
    fn driver(&self) -> String {
        let out = self.path("w.json");
        let o = roughkit(&["sig", "--fbm", "2", "--gamma", "0.45", "--knots", "65", "--seed", "3", "--out", &out]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        out
    }
}

fn read(p: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn help_documents_schemas() {
    let o = roughkit(&["--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for key in ["tensor JSON", "rough path JSON", "fields JSON", "particles CSV", "Exit status"] {
        assert!(text.contains(key), "missing {key}");
    }
}

#[test]
fn usage_and_config_errors_exit_2() {
    assert_eq!(roughkit(&["frobnicate"]).status.code(), Some(2));
    let w = Work::new();
    let o = roughkit(&["sig", "--fbm", "1", "--gamma", "1.5", "--out", &w.path("x.json")]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
    let o = roughkit(&["sig", "--fbm", "1", "--gamma", "0.3", "--level", "2"]);
    assert_eq!(o.status.code(), Some(2));
    let o = roughkit(&["sig", "--fbm", "1", "--gamma", "0.3", "--mesh", "-1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = roughkit(&["rde", "--driver", &w.path("missing.json"), "--fields", "f", "--x0", "0"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("cannot read"));
}

#[test]
fn malformed_tensor_json_reports_location() {
    let w = Work::new();
    let t = w.file("t.json", "{\"dim\": 2, \"level\": 2,\n \"terms\": [{\"word\": [1], \"coeff\": }]}");
    let o = roughkit(&["sig", "--tensor", &t]);
    assert_eq!(o.status.code(), Some(2));
    let e = stderr(&o);
    assert!(e.contains("io::tensor_from_json"), "{e}");
    assert!(e.contains("line 2 column"), "{e}");
}

#[test]
fn tensor_inverse_and_character_check() {
    let w = Work::new();
    let good = w.file(
        "g.json",
        r#"{"dim": 1, "level": 2, "terms": [{"word": [], "coeff": 1}, {"word": [1], "coeff": 2}, {"word": [1, 1], "coeff": 2}]}"#,
    );
    let out = w.path("inv.json");
    let o = roughkit(&["sig", "--tensor", &good, "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let inv: serde_json::Value = serde_json::from_slice(&read(&out)).unwrap();
    let coeff = |i: usize| inv["terms"][i]["coeff"].as_f64().unwrap();
    assert_eq!((coeff(1), coeff(2)), (-2.0, 2.0));
    let bad = w.file(
        "b.json",
        r#"{"dim": 1, "level": 2, "terms": [{"word": [], "coeff": 1}, {"word": [1], "coeff": 2}]}"#,
    );
    let o = roughkit(&["sig", "--tensor", &bad]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("character"), "{}", stderr(&o));
}

#[test]
fn malformed_csv_reports_line_and_column() {
    let w = Work::new();
    let p = w.file("p.csv", "t,x1\n0,0\n0.5,zz\n1,1\n");
    let o = roughkit(&["sig", "--path", &p, "--gamma", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3, column 2"), "{}", stderr(&o));
}

#[test]
fn exploding_linear_rde_exits_3_with_cell() {
    let w = Work::new();
    let p = w.file("p.csv", "t,x1\n0,0\n1000,1000\n");
    let drv = w.path("w.json");
    let o = roughkit(&["sig", "--path", &p, "--gamma", "0.9", "--out", &drv]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let f = w.file("f.json", r#"{"fields": [{"family": "affine", "matrix": [[1.0]], "offset": [0.0]}]}"#);
    let o = roughkit(&["rde", "--driver", &drv, "--fields", &f, "--x0", "1", "--mesh", "1", "--out", &w.path("x.csv")]);
    assert_eq!(o.status.code(), Some(3));
    let e = stderr(&o);
    assert!(e.contains("rde::solve_rde") && e.contains("cell"), "{e}");
    // level 1 at gamma 0.9: x doubles per unit step and 2^499 > 1e150 > 2^498
    assert!(e.contains("cell 498 "), "{e}");
}

#[test]
fn rde_matches_library_and_is_reproducible() {
    let w = Work::new();
    let drv = w.driver();
    let f = w.file("f.json", FIELDS);
    let run = |out: &str, threads: &str| {
        let o = roughkit(&["rde", "--driver", &drv, "--fields", &f, "--x0", "0.1,-0.2", "--out", out, "--threads", threads]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        read(out)
    };
    let a = run(&w.path("a.csv"), "1");
    let b = run(&w.path("b.csv"), "3");
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,x1,x2"));
    assert_eq!(lines.next(), Some("0,0.1,-0.2"));
    assert_eq!(text.lines().count(), 66);
}

#[test]
fn reports_are_byte_identical_and_hashed() {
    let w = Work::new();
    let drv = w.driver();
    let f = w.file("f.json", FIELDS);
    let g = w.file("g.json", TERMINAL);
    let mu = w.file("mu.csv", MU);
    let run = |report: &str, threads: &str| {
        let o = roughkit(&[
            "verify", "continuity", "--driver", &drv, "--fields", &f, "--mu", &mu, "--cells", "32", "--report", report,
            "--threads", threads,
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        read(report)
    };
    let a = run(&w.path("a.json"), "1");
    let b = run(&w.path("b.json"), "2");
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(v["pass"], true);

    let o = roughkit(&[
        "verify", "duality", "--driver", &drv, "--fields", &f, "--terminal", &g, "--mu", &mu, "--mesh", "1e-3",
        "--tolerance", "1e-6", "--report", &w.path("d.json"),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let d: serde_json::Value = serde_json::from_slice(&read(w.path("d.json"))).unwrap();
    assert_ne!(d["config_hash"], v["config_hash"]);
}

#[test]
fn failed_verification_exits_1() {
    let w = Work::new();
    let drv = w.driver();
    let f = w.file("f.json", FIELDS);
    let g = w.file("g.json", TERMINAL);
    let mu = w.file("mu.csv", MU);
    let report = w.path("d.json");
    let o = roughkit(&[
        "verify", "duality", "--driver", &drv, "--fields", &f, "--terminal", &g, "--mu", &mu, "--tolerance", "0",
        "--report", &report,
    ]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("drift"));
    let d: serde_json::Value = serde_json::from_slice(&read(&report)).unwrap();
    assert_eq!(d["pass"], false);
}

#[test]
fn transport_and_continuity_agree_on_a_dirac() {
    let w = Work::new();
    let drv = w.driver();
    let f = w.file("f.json", FIELDS);
    let g = w.file("g.json", TERMINAL);
    let q = w.file("q.csv", "t,x1,x2\n0,0.1,0.2\n");
    let mu = w.file("mu.csv", "weight,x1,x2\n1,0.1,0.2\n");
    let u = w.path("u.csv");
    let o = roughkit(&["transport", "--driver", &drv, "--fields", &f, "--terminal", &g, "--query", &q, "--out", &u]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let rho = w.path("rho.csv");
    let o = roughkit(&["continuity", "--driver", &drv, "--fields", &f, "--mu", &mu, "--out", &rho]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let last = |p: &str| -> Vec<f64> {
        let t = String::from_utf8(read(p)).unwrap();
        t.lines().last().unwrap().split(',').map(|x| x.parse().unwrap()).collect()
    };
    let u = last(&u)[3];
    let r = last(&rho);
    let (x, y) = (r[2], r[3]);
    assert!((u - (x * x * y + 0.7 * x)).abs() < 1e-12, "{u} vs {x} {y}");
}

#[test]
fn threads_env_fallback_and_validation() {
    let w = Work::new();
    let o = Command::new(env!("CARGO_BIN_EXE_roughkit"))
        .args(["sig", "--fbm", "1", "--gamma", "0.5", "--knots", "9", "--out", &w.path("a.json")])
        .env("ROUGHKIT_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("threads"));
    let o = Command::new(env!("CARGO_BIN_EXE_roughkit"))
        .args(["sig", "--fbm", "1", "--gamma", "0.5", "--knots", "9", "--out", &w.path("b.json")])
        .env("ROUGHKIT_THREADS", "2")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn selftest_subset_writes_report() {
    let w = Work::new();
    let report = w.path("s.json");
    let o = roughkit(&["selftest", "--criteria", "1,2", "--report", &report]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&read(&report)).unwrap();
    assert_eq!(v["checks"].as_array().unwrap().len(), 2);
    assert_eq!(v["pass"], true);
    let o = roughkit(&["selftest", "--criteria", "99"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn full_selftest_at_gamma_one_half() {
    let w = Work::new();
    let report = w.path("s.json");
    let o = roughkit(&["selftest", "--gamma", "0.5", "--report", &report]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_slice(&read(&report)).unwrap();
    let checks = v["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 12);
    assert!(checks.iter().all(|c| c["pass"] == true));
}
