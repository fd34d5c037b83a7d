// SPDX-License-Identifier: Apache-2.0

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const ADDER: &str =
    "module add4(input [7:0] a, input [7:0] b, input [7:0] c, input [7:0] d, output [7:0] y);
  assign y = ((a + b) + c) + d;
endmodule
";

fn rtlopt(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rtlopt"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn setup(config: &str) -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("add4.rtl"), ADDER).unwrap();
    fs::write(dir.path().join("config.json"), config).unwrap();
    dir
}

fn only_run(dir: &Path) -> PathBuf {
    let runs: Vec<_> = fs::read_dir(dir.join("runs"))
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    assert_eq!(runs.len(), 1);
    runs[0].clone()
}

#[test]
fn optimize_writes_artifacts_and_summary() {
    let dir = setup(r#"{"run":{"iterations":3}}"#);
    let o = rtlopt(
        &[
            "optimize",
            "--design",
            "add4.rtl",
            "--config",
            "config.json",
            "--skills",
            "lib.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("-0.02 (-91.3%)"), "{out}");
    assert!(out.contains("96 (0.0%)"), "{out}");
    let run = only_run(dir.path());
    for f in ["state.json", "skills.json", "result.json"] {
        assert!(run.join(f).is_file(), "{f} missing");
    }
    let result: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run.join("result.json")).unwrap()).unwrap();
    assert_eq!(result["best"]["wns"].as_f64(), Some(-0.02));
    assert!(dir.path().join("lib.json").is_file());

    let list = rtlopt(&["skills", "list", "--skills", "lib.json"], dir.path());
    assert!(list.status.success());
    assert!(stdout(&list).contains("wide-arithmetic/tree-rebalance"));

    let csv = rtlopt(
        &["report", "--run", run.to_str().unwrap(), "--format", "csv"],
        dir.path(),
    );
    assert!(csv.status.success());
    let text = stdout(&csv);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "t,best_wns,best_tns,best_area,best_score,sec_pass_rate_cum"
    );
    assert_eq!(lines.len(), 4);
    assert!(lines[1].starts_with("0,-0.02,-0.02,96,"));

    let json = rtlopt(
        &["report", "--run", run.to_str().unwrap(), "--format", "json"],
        dir.path(),
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&json)).unwrap();
    assert_eq!(v["series"].as_array().unwrap().len(), 3);

    let show = rtlopt(
        &["show", "--run", run.to_str().unwrap(), "--iteration", "0"],
        dir.path(),
    );
    assert!(show.status.success());
    assert!(stdout(&show).contains("tree-rebalance"));
    let bad = rtlopt(
        &["show", "--run", run.to_str().unwrap(), "--iteration", "7"],
        dir.path(),
    );
    assert!(!bad.status.success());
    assert!(stderr(&bad).contains("0..=2"), "{}", stderr(&bad));
}

#[test]
fn bad_config_exits_1_without_run_dir() {
    let dir = setup(r#"{"run":{"iterations":0}}"#);
    let o = rtlopt(
        &[
            "optimize",
            "--design",
            "add4.rtl",
            "--config",
            "config.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("runs").exists());

    fs::write(dir.path().join("config.json"), r#"{"nonsense":true}"#).unwrap();
    let o = rtlopt(
        &[
            "optimize",
            "--design",
            "add4.rtl",
            "--config",
            "config.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unsynthesizable_design_exits_2() {
    let dir = setup("{}");
    fs::write(
        dir.path().join("bad.rtl"),
        "module m(input [3:0] a, output [7:0] y);\n  assign y = a;\nendmodule\n",
    )
    .unwrap();
    let o = rtlopt(
        &["optimize", "--design", "bad.rtl", "--config", "config.json"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("width"), "{}", stderr(&o));
}

#[test]
fn eval_matches_delay_table() {
    let dir = setup("{}");
    let o = rtlopt(
        &["eval", "--design", "add4.rtl", "--config", "config.json"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    // clk-to-q + three 8-bit adders (0.05 + 0.02*8 each) + setup at a 0.5 ns clock
    assert_eq!(v["wns"].as_f64(), Some(-0.23));
    assert_eq!(v["tns"].as_f64(), Some(-0.23));
    // three adders at 4 area units per bit
    assert_eq!(v["area"].as_f64(), Some(96.0));

    let o = rtlopt(
        &[
            "eval",
            "--design",
            "add4.rtl",
            "--golden",
            "add4.rtl",
            "--config",
            "config.json",
        ],
        dir.path(),
    );
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["sec_pass"], serde_json::Value::Bool(true));

    fs::write(
        dir.path().join("other.rtl"),
        "module add4(input [7:0] a, output [7:0] y);\n  assign y = a;\nendmodule\n",
    )
    .unwrap();
    let o = rtlopt(
        &[
            "eval",
            "--design",
            "other.rtl",
            "--golden",
            "add4.rtl",
            "--config",
            "config.json",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("interface"), "{}", stderr(&o));
}

#[test]
fn skills_commands() {
    let dir = setup("{}");
    let list = rtlopt(&["skills", "list", "--skills", "none.json"], dir.path());
    assert!(list.status.success());
    assert_eq!(stdout(&list).lines().count(), 1);

    let o = rtlopt(
        &[
            "optimize",
            "--design",
            "add4.rtl",
            "--config",
            "config.json",
            "--skills",
            "a.json",
        ],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let e = rtlopt(
        &["skills", "export", "--skills", "a.json", "--out", "b.json"],
        dir.path(),
    );
    assert!(e.status.success());
    assert_eq!(
        fs::read(dir.path().join("a.json")).unwrap(),
        fs::read(dir.path().join("b.json")).unwrap()
    );
    let m = rtlopt(
        &["skills", "merge", "--out", "m.json", "a.json", "b.json"],
        dir.path(),
    );
    assert!(m.status.success(), "{}", stderr(&m));
    // Importing a library into itself is a no-op: every source is already counted.
    let i = rtlopt(
        &["skills", "import", "--skills", "b.json", "--from", "a.json"],
        dir.path(),
    );
    assert!(i.status.success(), "{}", stderr(&i));

    fs::write(dir.path().join("v9.json"), r#"[{"version":9}]"#).unwrap();
    let bad = rtlopt(
        &[
            "skills", "import", "--skills", "b.json", "--from", "v9.json",
        ],
        dir.path(),
    );
    assert!(!bad.status.success());
}

#[test]
fn missing_run_dir_is_an_error() {
    let dir = setup("{}");
    let o = rtlopt(&["report", "--run", "nowhere"], dir.path());
    assert!(!o.status.success());
    assert!(stderr(&o).contains("does not exist"));
}
