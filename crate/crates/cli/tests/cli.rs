use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::tempdir;

fn vatlab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vatlab"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = vatlab(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    vatlab(args).status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn gen_data_writes_the_three_splits_and_latent_points() {
    let dir = tempdir().unwrap();
    ok(&["gen-data", "--task", "circles", "--seed", "4", "--out", p(dir.path())]);
    let lines = |name: &str| fs::read_to_string(dir.path().join(name)).unwrap().lines().count();
    assert_eq!(lines("train.csv"), 1 + 16);
    assert_eq!(lines("validation.csv"), 1 + 1000);
    assert_eq!(lines("test.csv"), 1 + 1000);
    assert_eq!(lines("latent.csv"), 1 + 2016);
    let train = fs::read_to_string(dir.path().join("train.csv")).unwrap();
    let first = train.lines().nth(1).unwrap();
    assert_eq!(first.split(',').count(), 101);

    let again = tempdir().unwrap();
    ok(&["gen-data", "--task", "circles", "--seed", "4", "--out", p(again.path())]);
    assert_eq!(train, fs::read_to_string(again.path().join("train.csv")).unwrap());
}

#[test]
fn train_eval_boundary_round_trip() {
    let dir = tempdir().unwrap();
    let run = dir.path().join("run");
    let stdout = ok(&[
        "train", "--task", "moons", "--reg", "vat", "--epsilon", "0.5", "--seed", "3", "--out", p(&run),
    ]);
    let summary = json(&run.join("summary.json"));
    assert_eq!(serde_json::from_str::<Value>(&stdout).unwrap(), summary);
    assert_eq!(summary["method"], "vat");
    assert_eq!(summary["parameter"], 0.5);
    assert_eq!(summary["updates"], 1000);
    let test_err = summary["test_err"].as_f64().unwrap();
    assert!(test_err < 0.15, "test error {test_err}");

    let record = fs::read_to_string(run.join("record.csv")).unwrap();
    let last = record.lines().last().unwrap();
    assert!(last.starts_with("1000,"), "{last}");

    let eval_path = dir.path().join("eval.json");
    ok(&["eval", "--checkpoint", p(&run.join("model.ckpt")), "--out", p(&eval_path)]);
    let report = json(&eval_path);
    assert_eq!(report["test"]["rows"], 1000);
    assert!((report["test"]["error"].as_f64().unwrap() - test_err).abs() < 1e-12);
    assert_eq!(report["train"]["error"].as_f64().unwrap(), 0.0);

    let b = dir.path().join("boundary");
    ok(&["boundary", "--checkpoint", p(&run.join("model.ckpt")), "--resolution", "120", "--out", p(&b)]);
    let svg = fs::read_to_string(b.join("boundary.svg")).unwrap();
    assert!(svg.contains("<polyline"));
    assert_eq!(svg.matches("class=\"y0\"").count(), 8);
    assert_eq!(svg.matches("class=\"y1\"").count(), 8);
    let csv = fs::read_to_string(b.join("boundary.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 120 * 120);
}

/// A network whose final layer is all zeros predicts 0.5 everywhere.
#[test]
fn flat_network_has_no_boundary() {
    let dir = tempdir().unwrap();
    let ck = dir.path().join("zero.ckpt");
    let zeros = |n: usize| vec!["0"; n].join(" ");
    let text = format!(
        "vatlab-checkpoint 1\nmeta data_seed 1\nmeta reg none\nmeta task moons\n\
         layer 100 3 relu\nw {}\nb {}\nlayer 3 2 identity\nw {}\nb {}\n",
        zeros(300),
        zeros(3),
        zeros(6),
        zeros(2)
    );
    fs::write(&ck, text).unwrap();
    let out = dir.path().join("b");
    ok(&["boundary", "--checkpoint", p(&ck), "--resolution", "30", "--out", p(&out)]);
    let csv = fs::read_to_string(out.join("boundary.csv")).unwrap();
    for line in csv.lines().skip(1) {
        assert_eq!(line.rsplit(',').next(), Some("0.5"));
    }
    assert!(!fs::read_to_string(out.join("boundary.svg")).unwrap().contains("<polyline"));
}

#[test]
fn same_seed_same_checkpoint() {
    let dir = tempdir().unwrap();
    let args = |out: &str| {
        vec![
            "train".to_string(), "--task".into(), "circles".into(), "--reg".into(), "adv-l2".into(),
            "--epsilon".into(), "0.3".into(), "--updates".into(), "200".into(), "--seed".into(), "9".into(),
            "--out".into(), out.to_string(),
        ]
    };
    for name in ["a", "b"] {
        let a = args(p(&dir.path().join(name)));
        ok(&a.iter().map(String::as_str).collect::<Vec<_>>());
    }
    let read = |name: &str| fs::read(dir.path().join(name).join("model.ckpt")).unwrap();
    assert_eq!(read("a"), read("b"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# small run\ntask = moons\nreg = vat\nepsilon = 0.3\nupdates = 20\nseed = 5\n").unwrap();
    let out = dir.path().join("run");
    ok(&["train", "--config", p(&cfg), "--epsilon", "0.7", "--out", p(&out)]);
    let summary = json(&out.join("summary.json"));
    assert_eq!(summary["parameter"], 0.7);
    assert_eq!(summary["updates"], 20);
    assert_eq!(summary["seed"], 5);
}

#[test]
fn singleton_grid_is_reproducible() {
    let dir = tempdir().unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        ok(&[
            "grid", "--task", "moons", "--methods", "vat", "--values", "0.5", "--selection-reps", "1",
            "--final-reps", "2", "--updates", "50", "--threads", "1", "--out", p(&out),
        ]);
        fs::read_to_string(out).unwrap()
    };
    let first = run("a.csv");
    assert_eq!(first, run("b.csv"));
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "task,method,value,selection_error,test_error_mean,test_error_sd,final_reps");
    assert!(lines[1].starts_with("moons,vat,0.5,"), "{}", lines[1]);
    assert!(lines[1].ends_with(",2"));
}

#[test]
fn audit_cost_reports_propagations() {
    let out = ok(&["audit-cost", "--ip", "1"]);
    let row = |term: &str| -> Vec<String> {
        let line = out.lines().find(|l| l.starts_with(term)).expect("row present");
        line.split_whitespace().skip(1).map(String::from).collect()
    };
    assert_eq!(row("likelihood"), ["1", "1"]);
    assert_eq!(row("regularizer"), ["3", "2"]);
    let out = ok(&["audit-cost", "--ip", "3"]);
    let line = out.lines().find(|l| l.starts_with("regularizer")).unwrap();
    assert_eq!(line.split_whitespace().skip(1).collect::<Vec<_>>(), ["5", "4"]);
}

#[test]
fn exit_codes_follow_the_error_kind() {
    let dir = tempdir().unwrap();
    let out = |n: &str| dir.path().join(n).to_str().unwrap().to_string();

    // configuration and usage
    assert_eq!(code(&["train", "--task", "svhn", "--out", &out("a")]), 2);
    assert_eq!(code(&["train", "--task", "moons", "--reg", "l2", "--out", &out("b")]), 2);
    assert_eq!(code(&["train", "--task", "moons", "--updates", "ten", "--out", &out("c")]), 2);
    let bad_cfg = dir.path().join("bad.cfg");
    fs::write(&bad_cfg, "epsilom = 0.1\n").unwrap();
    assert_eq!(code(&["train", "--config", p(&bad_cfg), "--out", &out("d")]), 2);

    // numeric: weight decay this strong makes the momentum update diverge
    assert_eq!(
        code(&["train", "--task", "moons", "--reg", "l2", "--lambda", "200", "--out", &out("e")]),
        3
    );

    // data and format
    assert_eq!(code(&["eval", "--checkpoint", &out("missing.ckpt")]), 4);
    let garbage = dir.path().join("garbage.ckpt");
    fs::write(&garbage, "not a checkpoint\n").unwrap();
    assert_eq!(code(&["eval", "--checkpoint", p(&garbage)]), 4);
    assert_eq!(
        code(&["train", "--task", "mnist", "--mnist-dir", &out("nowhere"), "--out", &out("f")]),
        4
    );
}
