use std::path::Path;
use std::process::{Command, Output};

use fusion_core::block::FusionBlockConfig;
use fusion_core::{FusionDiagram, Spin};

fn fusion(args: &[&str], out_dir: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fusion"));
    cmd.args(args);
    match out_dir {
        Some(d) => cmd.env("FUSION_OUT_DIR", d),
        None => cmd.env_remove("FUSION_OUT_DIR"),
    };
    cmd.output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn records(text: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r.records().map(|x| x.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

fn tiny_model_json() -> &'static str {
    r#"{"architecture":"cofd","layers":1,"channels":2,"cutoff":2.5,"j_max":1,"radial_channels":3,"gate_hidden":3,"readout_hidden":4}"#
}

#[test]
fn cg_table_singlet() {
    let o = fusion(&["cg-table", "--ja", "0.5", "--jb", "1/2", "--jc", "0"], None);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = records(&stdout(&o));
    assert_eq!(header, ["two_ma", "two_mb", "two_mc", "value"]);
    assert_eq!(rows.len(), 2);
    // singlet (|↑↓⟩ - |↓↑⟩)/√2
    let expect = std::f64::consts::FRAC_1_SQRT_2;
    for r in &rows {
        let v: f64 = r[3].parse().unwrap();
        let sign = if r[0] == "1" { 1.0 } else { -1.0 };
        assert!((v - sign * expect).abs() < 1e-15);
        // 17 significant digits
        assert_eq!(r[3].trim_start_matches('-').split('e').next().unwrap().len(), 18);
    }
}

#[test]
fn cg_table_writes_under_out_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = fusion(&["cg-table", "--ja", "1", "--jb", "1", "--jc", "2", "--out", "t.csv", "--seed", "5"], Some(dir.path()));
    assert_eq!(o.status.code(), Some(0));
    let (_, rows) = records(&std::fs::read_to_string(dir.path().join("t.csv")).unwrap());
    // every (ma, mb) pair of 1 ⊗ 1 has |ma + mb| ≤ 2 and a nonzero coefficient
    assert_eq!(rows.len(), 9);
}

#[test]
fn inadmissible_triple_and_usage_errors() {
    assert_eq!(fusion(&["cg-table", "--ja", "1", "--jb", "1", "--jc", "3"], None).status.code(), Some(1));
    assert_eq!(fusion(&["cg-table", "--ja", "1", "--jb", "1", "--jc", "0.3"], None).status.code(), Some(2));
    let o = fusion(&["cg-table", "--ja", "1", "--jb", "1", "--jc", "0", "--frobnicate"], None);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(fusion(&["no-such-command"], None).status.code(), Some(2));
}

#[test]
fn diagram_validate_reports_violation() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(
        &bad,
        r#"{"leaves":[{"slot":0,"two_j":2},{"slot":1,"two_j":2}],"tree":{"left":{"slot":0},"right":{"slot":1}},"two_J":6}"#,
    )
    .unwrap();
    let o = fusion(&["diagram", "validate", bad.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("violation"));

    let good = dir.path().join("good.json");
    let d = FusionDiagram::left_comb(&[Spin::ONE, Spin::ONE, Spin::ONE], &[Spin::ONE], Spin::ONE).unwrap();
    std::fs::write(&good, d.to_json()).unwrap();
    assert_eq!(fusion(&["diagram", "validate", good.to_str().unwrap()], None).status.code(), Some(0));

    std::fs::write(&bad, "{not json").unwrap();
    assert_eq!(fusion(&["diagram", "validate", bad.to_str().unwrap()], None).status.code(), Some(2));
}

#[test]
fn diagram_enumerate_lists_assignments() {
    let o = fusion(&["diagram", "enumerate", "--leaves", "2,2,2", "--root", "2", "--shape", "left-comb"], None);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = records(&stdout(&o));
    assert_eq!(header, ["index", "two_k0"]);
    // spins on the command line are j, not 2j: k runs over 2 ⊗ 2 = {0..4}, all reaching 2
    let ks: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(ks, ["0", "2", "4", "6", "8"]);
    let r = fusion(&["diagram", "enumerate", "--leaves", "2,2,2", "--root", "2", "--shape", "right-comb"], None);
    assert_eq!(records(&stdout(&r)).1.len(), 5);
}

#[test]
fn block_check_passes_on_valid_config() {
    let dir = tempfile::tempdir().unwrap();
    let d1 = FusionDiagram::left_comb(&[Spin::ONE, Spin::ONE, Spin::ONE], &[Spin::ONE], Spin::ONE).unwrap();
    let d2 = FusionDiagram::left_comb(&[Spin::ONE, Spin::ONE, Spin::ONE], &[Spin::integer(2)], Spin::ONE).unwrap();
    let cfg = FusionBlockConfig::with_random_mixing(vec![d1, d2], 2, 3, 7).unwrap().with_aggregated_slots(vec![1]).unwrap();
    let path = dir.path().join("block.json");
    std::fs::write(&path, cfg.to_json()).unwrap();
    let o = fusion(&["block", "check", "--config", path.to_str().unwrap(), "--trials", "4", "--seed", "3"], None);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let (_, rows) = records(&stdout(&o));
    assert!(rows[0][1].parse::<f64>().unwrap() <= 1e-12);
    assert!(rows[0][2].parse::<f64>().unwrap() <= 1e-12);
    // identical flags, identical output
    let again = fusion(&["block", "check", "--config", path.to_str().unwrap(), "--trials", "4", "--seed", "3"], None);
    assert_eq!(o.stdout, again.stdout);
    // an impossible tolerance turns the same run into a validation failure
    let strict = fusion(&["block", "check", "--config", path.to_str().unwrap(), "--trials", "4", "--tol", "0"], None);
    assert_eq!(strict.status.code(), Some(1));
}

#[test]
fn model_describe_and_gradcheck() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("model.json");
    std::fs::write(&cfg, tiny_model_json()).unwrap();
    let o = fusion(&["model", "describe", "--config", cfg.to_str().unwrap()], None);
    assert_eq!(o.status.code(), Some(0));
    let (header, rows) = records(&stdout(&o));
    assert_eq!(header, ["parameter", "rows", "cols", "count"]);
    let total: usize = rows.last().unwrap()[3].parse().unwrap();
    let summed: usize = rows[..rows.len() - 1].iter().map(|r| r[3].parse::<usize>().unwrap()).sum();
    assert_eq!(total, summed);

    let g = fusion(&["gradcheck", "--config", cfg.to_str().unwrap(), "--seed", "4", "--atoms", "4"], None);
    assert_eq!(g.status.code(), Some(0), "{}", stdout(&g));
    let (header, rows) = records(&stdout(&g));
    assert_eq!(header, ["group", "count", "max_rel_error", "passed"]);
    assert_eq!(rows.last().unwrap()[0], "positions");
    assert!(rows.iter().all(|r| r[3] == "true"));

    std::fs::write(&cfg, r#"{"architecture":"cofd","layers":1}"#).unwrap();
    assert_eq!(fusion(&["model", "describe", "--config", cfg.to_str().unwrap()], None).status.code(), Some(2));
}

#[test]
fn data_train_evaluate_plot_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path();
    std::fs::write(out.join("model.cfg.json"), tiny_model_json()).unwrap();
    let gen = ["gen-data", "--samples", "8", "--atoms", "3", "--potential", "morse-angular", "--seed", "2", "--out", "data.jsonl"];
    assert_eq!(fusion(&gen, Some(out)).status.code(), Some(0));
    let first = std::fs::read(out.join("data.jsonl")).unwrap();
    assert_eq!(fusion(&gen, Some(out)).status.code(), Some(0));
    assert_eq!(first, std::fs::read(out.join("data.jsonl")).unwrap());
    for line in String::from_utf8(first).unwrap().lines() {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(v["positions"].as_array().unwrap().len(), 3);
    }

    let cfg = out.join("model.cfg.json");
    let data = out.join("data.jsonl");
    let t = fusion(
        &["train", "--config", cfg.to_str().unwrap(), "--data", data.to_str().unwrap(), "--epochs", "2", "--out-dir", "run", "--seed", "1"],
        Some(out),
    );
    assert_eq!(t.status.code(), Some(0), "{}", String::from_utf8_lossy(&t.stderr));
    let (header, rows) = records(&stdout(&t));
    assert_eq!(header, ["split", "samples", "energy_mae", "force_mae"]);
    assert_eq!(rows.len(), 3);
    let run = out.join("run");
    let record: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(run.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["epochs"].as_array().unwrap().len(), 3);

    let p = fusion(&["plot-data", "--run", run.join("run.json").to_str().unwrap()], None);
    assert_eq!(p.status.code(), Some(0));
    assert_eq!(stdout(&p), std::fs::read_to_string(run.join("curve.csv")).unwrap());
    let (header, rows) = records(&stdout(&p));
    assert_eq!(header, ["epoch", "train_loss", "val_loss"]);
    assert_eq!(rows.len(), 3);

    let e1 = fusion(&["evaluate", "--model", run.join("model.json").to_str().unwrap(), "--data", data.to_str().unwrap()], None);
    let e4 = fusion(
        &["evaluate", "--model", run.join("model.json").to_str().unwrap(), "--data", data.to_str().unwrap(), "--jobs", "4"],
        None,
    );
    assert_eq!(e1.status.code(), Some(0));
    assert_eq!(e1.stdout, e4.stdout);
    let fresh = fusion(&["evaluate", "--model", cfg.to_str().unwrap(), "--data", data.to_str().unwrap()], None);
    assert_eq!(fresh.status.code(), Some(0));
    assert_ne!(fresh.stdout, e1.stdout);
}

#[test]
fn every_command_accepts_seed() {
    let help_for = |args: &[&str]| {
        let mut a = args.to_vec();
        a.push("--help");
        stdout(&fusion(&a, None))
    };
    for cmd in [
        vec!["cg-table"],
        vec!["diagram", "validate"],
        vec!["diagram", "enumerate"],
        vec!["block", "check"],
        vec!["model", "describe"],
        vec!["gradcheck"],
        vec!["gen-data"],
        vec!["train"],
        vec!["evaluate"],
        vec!["plot-data"],
    ] {
        assert!(help_for(&cmd).contains("--seed"), "{cmd:?}");
    }
}
