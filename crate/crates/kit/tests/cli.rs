use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use igo_kit::config::{parse_pairs, RunConfig};
use igo_kit::trace_io::{read_csv, read_jsonl, TRACE_VERSION_LINE};

fn igo_kit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_igo-kit"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 temp path")
}

const HAPPY: [&str; 15] = [
    "run", "--algo", "pbil", "--objective", "onemax", "--dim", "16", "--lambda", "200", "--q",
    "0.25", "--dt", "0.5", "--steps", "100",
];

#[test]
fn run_writes_a_hundred_row_trace_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.csv");
    let mut args = HAPPY.to_vec();
    args.extend(["--seed", "42", "--out", path_str(&out)]);
    let res = igo_kit(&args);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let text = fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().next(), Some(TRACE_VERSION_LINE));
    let records = read_csv(text.as_bytes()).unwrap();
    assert_eq!(records.len(), 100);
    assert!(records.iter().enumerate().all(|(i, r)| r.step == i + 1 && r.eta.len() == 16));

    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("t.csv.summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["steps"], 100);
    assert_eq!(summary["seed"], 42);
    assert_eq!(summary["final_eta"].as_array().unwrap().len(), 16);
    assert_eq!(summary["config"]["algo"], "pbil");
}

#[test]
fn step_sizes_above_one_need_the_uncertified_flag() {
    let res = igo_kit(&["run", "--dt", "1.5"]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("dt") && err.contains("<= 1") && err.contains("--uncertified"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("u.csv");
    let res = igo_kit(&[
        "run", "--dt", "1.5", "--uncertified", "--steps", "5", "--out", path_str(&out),
    ]);
    // the run itself may leave the domain; configuration is accepted
    assert_ne!(res.status.code(), Some(2), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn identical_seeds_give_byte_identical_traces() {
    let dir = tempfile::tempdir().unwrap();
    for format in ["csv", "jsonl"] {
        let mut traces = Vec::new();
        for k in 0..2 {
            let out = dir.path().join(format!("t{k}.{format}"));
            let mut args = HAPPY.to_vec();
            args.extend(["--seed", "42", "--format", format, "--out", path_str(&out)]);
            assert_eq!(igo_kit(&args).status.code(), Some(0));
            traces.push(fs::read(&out).unwrap());
        }
        assert_eq!(traces[0], traces[1], "{format}");
    }
}

#[test]
fn effective_configuration_echoes_back() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("run.conf");
    fs::write(
        &file,
        "# base settings\nalgo = cma_rank_mu\nobjective = sphere\ndim = 3\nlambda = 30\n\
         q = 0.3\ndt = 0.2\nsteps = 7\nseed = 5\n",
    )
    .unwrap();
    let out = dir.path().join("c.csv");
    let res = igo_kit(&[
        "run",
        "--config",
        path_str(&file),
        "--dt",
        "0.4",
        "--dt-c",
        "0.1",
        "--out",
        path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let echoed = String::from_utf8(res.stderr).unwrap();
    let used = RunConfig::from_pairs(&parse_pairs(&echoed).unwrap()).unwrap();
    assert_eq!(used.algo.dt, 0.4, "flag overrides the file");
    assert_eq!(used.algo.dt_c, Some(0.1));
    assert_eq!(used.algo.lambda, 30, "file value kept");
    assert_eq!(used.algo.max_steps, 7);
    assert_eq!(used.out.as_deref(), Some(out.as_path()));

    // the echoed block reproduces the run exactly
    let again = dir.path().join("echo.conf");
    fs::write(&again, &echoed).unwrap();
    let out2 = dir.path().join("c2.csv");
    let res = igo_kit(&["run", "--config", path_str(&again), "--out", path_str(&out2)]);
    assert_eq!(res.status.code(), Some(0));
    assert_eq!(fs::read(&out).unwrap(), fs::read(&out2).unwrap());
}

#[test]
fn unknown_keys_and_values_are_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("bad.conf");
    fs::write(&file, "algo = pbil\npopulation = 10\n").unwrap();
    assert_eq!(igo_kit(&["run", "--config", path_str(&file)]).status.code(), Some(2));
    assert_eq!(igo_kit(&["run", "--algo", "simplex"]).status.code(), Some(2));
    assert_eq!(igo_kit(&["run", "--lambda", "1"]).status.code(), Some(2));
    assert_eq!(igo_kit(&["run", "--bogus"]).status.code(), Some(2));
}

#[test]
fn halt_policy_reports_domain_exit() {
    // PBIL at dt = 1 jumps onto the winner, a vertex of the cube
    let res = igo_kit(&[
        "run", "--algo", "pbil", "--dim", "4", "--lambda", "8", "--dt", "1", "--steps", "5",
        "--domain-exit", "halt",
    ]);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("domain exit"));
}

#[test]
fn jsonl_traces_parse_back() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.jsonl");
    let res = igo_kit(&[
        "run", "--algo", "rpp", "--objective", "random-reward", "--dim", "5", "--dt", "0.5",
        "--steps", "20", "--format", "jsonl", "--out", path_str(&out),
    ]);
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let records = read_jsonl(fs::read_to_string(&out).unwrap().as_bytes()).unwrap();
    assert_eq!(records.len(), 20);
    assert!(records.iter().all(|r| r.emp_quantile_q.is_none() && r.kl_prev >= 0.0));
}

#[test]
fn verify_rejects_unknown_suites() {
    let res = igo_kit(&["verify", "no-such-suite"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("quantile-improvement"));
    assert_eq!(igo_kit(&["verify", "kl-expansion", "--grid", "huge"]).status.code(), Some(2));
}

#[test]
fn verify_prints_a_json_report() {
    let res = igo_kit(&["verify", "kl-expansion"]);
    assert_eq!(res.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&res.stdout).unwrap();
    assert_eq!(report["suite"], "kl-expansion");
    assert_eq!(report["passed"], true);
    assert!(report["summary"]["max_ratio"].as_f64().unwrap() <= 0.25);
}

#[test]
fn list_names_everything() {
    let res = igo_kit(&["list"]);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8_lossy(&res.stdout);
    for name in ["pbil", "cma_rank_mu", "onemax", "sphere", "equivalence"] {
        assert!(text.contains(name), "{name} missing from:\n{text}");
    }
}
