use redsched_core::{verify_design, DesignFile};
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn redsched(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_redsched"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

/// CSV body as rows of named fields.
fn rows(csv: &str) -> Vec<std::collections::HashMap<String, String>> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().expect("header").split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(String::from)).collect())
        .collect()
}

fn num(row: &std::collections::HashMap<String, String>, key: &str) -> f64 {
    row[key].parse().unwrap_or_else(|_| panic!("{key}={} is not numeric", row[key]))
}

#[test]
fn design_gen_r5_has_21_verified_blocks() {
    let o = redsched(&["design", "gen", "--r", "5"]);
    assert_eq!(code(&o), 0);
    let file = DesignFile::from_json(stdout(&o).trim()).unwrap();
    assert_eq!((file.n, file.r, file.lambda), (21, 5, 1));
    assert_eq!(file.blocks.len(), 21);
    assert!(verify_design(&file.design()).passed);
}

#[test]
fn design_gen_r7_reports_no_design() {
    let o = redsched(&["design", "gen", "--r", "7"]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("no (43,7,1) design exists"));
}

#[test]
fn design_verify_accepts_generated_and_rejects_tampered() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.json");
    let p = path.to_str().unwrap();
    assert_eq!(code(&redsched(&["design", "gen", "--r", "4", "--out", p])), 0);
    let ok = redsched(&["design", "verify", "--file", p]);
    assert_eq!(code(&ok), 0);
    assert!(stdout(&ok).contains("result: PASS"));

    let mut file = DesignFile::from_json(&fs::read_to_string(&path).unwrap()).unwrap();
    file.blocks[0][0] = (file.blocks[0][0] + 2) % file.n;
    file.blocks[0].sort_unstable();
    fs::write(&path, file.to_json()).unwrap();
    let bad = redsched(&["design", "verify", "--file", p]);
    assert_eq!(code(&bad), 1);
    assert!(stdout(&bad).contains("witness="));
    assert!(stdout(&bad).contains("result: FAIL"));
}

#[test]
fn design_verify_of_garbage_is_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.json");
    fs::write(&path, "{not json").unwrap();
    assert_eq!(code(&redsched(&["design", "verify", "--file", path.to_str().unwrap()])), 64);
}

#[test]
fn indicators_all_gives_three_rows_on_the_family() {
    let o = redsched(&["indicators", "--policy", "all", "--r", "4", "--reps", "50"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.starts_with("policy,n,r,T,lag,reps,lbf,lbf_ci95,rdf,rdf_ci95\n"));
    let rows = rows(&out);
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["n"] == "13" && r["T"] == "130"));
    let names: Vec<&str> = rows.iter().map(|r| r["policy"].as_str()).collect();
    assert_eq!(names, ["random", "round-robin", "bibd"]);
}

#[test]
fn indicators_bibd_is_exact() {
    let o = redsched(&["indicators", "--policy", "bibd", "--r", "5"]);
    assert_eq!(code(&o), 0);
    let row = &rows(&stdout(&o))[0];
    assert_eq!((num(row, "lbf"), num(row, "rdf"), row["n"].as_str()), (1.0, 1.0, "21"));
}

#[test]
fn indicators_random_rdf_matches_hypergeometric_value() {
    let o = redsched(&["indicators", "--policy", "random", "--n", "21", "--r", "5", "--reps", "2000"]);
    assert_eq!(code(&o), 0);
    let row = &rows(&stdout(&o))[0];
    let se = num(row, "rdf_ci95") / 1.96;
    assert!((num(row, "rdf") - 7.0 / 15.0).abs() <= 3.0 * se, "{row:?}");
}

#[test]
fn indicators_reject_bad_parameters() {
    // bibd off the r(r-1)+1 family
    assert_eq!(code(&redsched(&["indicators", "--policy", "bibd", "--n", "20", "--r", "5"])), 64);
    // lag must be below the number of balls
    assert_eq!(code(&redsched(&["indicators", "--policy", "random", "--r", "3", "--T", "2", "--lag", "2"])), 64);
    assert_eq!(code(&redsched(&["indicators", "--policy", "bibd", "--r", "7"])), 2);
}

#[test]
fn sweep_indicators_rows_and_missing_design_marker() {
    let o = redsched(&["sweep-indicators", "--r", "3,4,5,6", "--reps", "50"]);
    assert_eq!(code(&o), 0);
    assert_eq!(rows(&stdout(&o)).len(), 12);

    let o = redsched(&["sweep-indicators", "--r", "7", "--reps", "20"]);
    assert_eq!(code(&o), 0);
    let out = stdout(&o);
    assert!(out.contains("bibd,43,7,430,1,0,NoDesign,NoDesign,NoDesign,NoDesign"), "{out}");
    assert!(out.contains("\nrandom,43,7,"));
}

#[test]
fn simulate_mm1_matches_analytic_wait() {
    let o = redsched(&[
        "simulate", "--p", "0", "--q", "1", "--r", "1", "--n", "1", "--policy", "random", "--lambda", "5", "--mu1",
        "10", "--jobs", "2e5", "--reps", "10",
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let row = &rows(&stdout(&o))[0];
    let (w, ci) = (num(row, "mean_queue_time"), num(row, "ci95"));
    assert!((w - 0.1).abs() <= ci, "W={w} ci={ci}");
    assert!((num(row, "util_mean") - 0.5).abs() < 0.02);
    assert_eq!(row["unstable"], "false");
}

#[test]
fn sweep_orders_policies_at_moderate_load() {
    let o = redsched(&["sweep", "--load", "0.6", "--jobs", "2e5", "--reps", "5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let rows = rows(&stdout(&o));
    let w = |p: &str| num(rows.iter().find(|r| r["policy"] == p).unwrap(), "mean_queue_time");
    assert!(w("bibd") < w("random") && w("random") < w("round-robin"));
    let lambda = num(&rows[0], "lambda");
    assert!((lambda - 0.6 * 21.0 / 0.19).abs() < 1e-9);
}

#[test]
fn sweep_rows_follow_policy_then_rate_order() {
    let o = redsched(&["sweep", "--lambdas", "20:40:10", "--jobs", "5000", "--reps", "2"]);
    assert_eq!(code(&o), 0);
    let got: Vec<(String, String)> = rows(&stdout(&o))
        .into_iter()
        .map(|r| (r["policy"].clone(), r["lambda"].clone()))
        .collect();
    let mut want = Vec::new();
    for p in ["random", "round-robin", "bibd"] {
        for l in ["20", "30", "40"] {
            want.push((p.to_string(), l.to_string()));
        }
    }
    assert_eq!(got, want);
}

#[test]
fn usage_errors_exit_64() {
    assert_eq!(code(&redsched(&["simulate", "--lambda", "0", "--jobs", "1000"])), 64);
    assert_eq!(code(&redsched(&["simulate", "--lambda", "5,6", "--jobs", "1000"])), 64);
    assert_eq!(code(&redsched(&["simulate", "--jobs", "1000"])), 64);
    assert_eq!(code(&redsched(&["simulate", "--lambda", "5", "--load", "0.5"])), 64);
    assert_eq!(code(&redsched(&["frobnicate"])), 64);
    assert_eq!(code(&redsched(&[])), 64);
    assert_eq!(code(&redsched(&["--help"])), 0);
    assert_eq!(code(&redsched(&["--version"])), 0);
}

#[test]
fn near_saturation_warns_but_runs() {
    let o = redsched(&["simulate", "--policy", "random", "--load", "0.97", "--jobs", "5000", "--reps", "1"]);
    assert_eq!(code(&o), 0);
    assert!(stderr(&o).contains("warning"));
    assert_eq!(rows(&stdout(&o)).len(), 1);
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "# M/M/1\nn=1\nr=1\nq=1\np=0\npolicy=random\nlambda=5\njobs=4000\nreps=2\n").unwrap();
    let c = cfg.to_str().unwrap();
    let o = redsched(&["simulate", "--config", c]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(rows(&stdout(&o))[0]["reps"], "2");
    let o = redsched(&["simulate", "--config", c, "--reps", "3"]);
    assert_eq!(rows(&stdout(&o))[0]["reps"], "3");

    fs::write(&cfg, "no-such-flag=1\n").unwrap();
    assert_eq!(code(&redsched(&["simulate", "--config", c])), 64);
}

#[test]
fn design_file_drives_the_bibd_policy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("plane.json");
    let d = d.to_str().unwrap();
    assert_eq!(code(&redsched(&["design", "gen", "--r", "3", "--out", d])), 0);
    let o = redsched(&["indicators", "--policy", "bibd", "--r", "3", "--design-file", d]);
    assert_eq!(code(&o), 0);
    let row = &rows(&stdout(&o))[0];
    assert_eq!((num(row, "lbf"), num(row, "rdf")), (1.0, 1.0));
}

#[test]
fn manifest_replay_is_bit_exact() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = redsched(&[
        "sweep", "--load", "0.5,0.8", "--jobs", "20000", "--reps", "3", "--seed", "9", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).is_empty());

    let mpath = dir.path().join("sweep.csv.manifest.json");
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(&mpath).unwrap()).unwrap();
    assert_eq!(manifest["command"], "sweep");
    assert_eq!(manifest["seed"], 9);
    assert_eq!(manifest["params"]["sweep"]["reps"], 3);
    assert!(manifest["finished_unix_ms"].as_u64() >= manifest["started_unix_ms"].as_u64());
    assert_eq!(Path::new(manifest["output"].as_str().unwrap()), out);

    let m = mpath.to_str().unwrap();
    let check = redsched(&["replay", "--manifest", m, "--check"]);
    assert_eq!(code(&check), 0, "{}", stderr(&check));

    let again = dir.path().join("again.csv");
    assert_eq!(code(&redsched(&["replay", "--manifest", m, "--out", again.to_str().unwrap()])), 0);
    assert_eq!(fs::read(&again).unwrap(), fs::read(&out).unwrap());
    assert!(dir.path().join("again.csv.manifest.json").exists());

    let mut tampered = fs::read_to_string(&out).unwrap();
    tampered.push_str("extra\n");
    fs::write(&out, tampered).unwrap();
    assert_eq!(code(&redsched(&["replay", "--manifest", m, "--check"])), 1);
}
