use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn swipt_mm(args: &[&str], threads_env: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_swipt-mm"));
    cmd.args(args);
    match threads_env {
        Some(v) => cmd.env("SWIPT_MM_THREADS", v),
        None => cmd.env_remove("SWIPT_MM_THREADS"),
    };
    cmd.output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_owned()
}

const SMALL: &str = r#"{
    "scenario": { "n_tx": 4, "info_users": 2, "harvest_users": 2, "alpha": [1, 3] },
    "experiment": { "type": "convergence", "seeds": [0, 1], "tolerances": { "max_iters": 200 } }
}"#;

fn strip_timing(csv: &str) -> Vec<String> {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let t = header.iter().position(|h| *h == "time_s").unwrap();
    lines
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f[t] = "";
            f.join(",")
        })
        .collect()
}

#[test]
fn run_writes_csv_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = swipt_mm(
        &[
            "run",
            "--config",
            &config,
            "--out",
            out.to_str().unwrap(),
            "--solvers",
            "mmq-sum,mmq-hybrid,bd",
        ],
        None,
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(out.join("convergence.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header
        .starts_with("experiment,solver,seed,iter,time_s,objective,sum_rate_bits,rate_u1,rate_u2"));
    assert!(header.ends_with("omega_u1,omega_u2,status"));
    let solvers: std::collections::BTreeSet<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap())
        .collect();
    assert_eq!(
        solvers.into_iter().collect::<Vec<_>>(),
        ["bd-hybrid", "bd-sum", "mmq-hybrid", "mmq-sum"]
    );
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["csv_version"], 1);
    assert_eq!(summary["experiment"], "convergence");
}

#[test]
fn seed_and_thread_overrides_keep_output_stable() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), SMALL);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let args = |out: &Path| {
        vec![
            "run".to_owned(),
            "--config".into(),
            config.clone(),
            "--out".into(),
            out.to_str().unwrap().to_owned(),
            "--seed".into(),
            "7".into(),
            "--solvers".into(),
            "mmq-hybrid,mml".into(),
        ]
    };
    let mut args_a = args(&a);
    args_a.extend(["--threads".into(), "1".into()]);
    let args_a: Vec<&str> = args_a.iter().map(String::as_str).collect();
    let args_b = args(&b);
    let args_b: Vec<&str> = args_b.iter().map(String::as_str).collect();
    assert!(swipt_mm(&args_a, None).status.success());
    assert!(swipt_mm(&args_b, Some("3")).status.success());
    let ca = fs::read_to_string(a.join("convergence.csv")).unwrap();
    let cb = fs::read_to_string(b.join("convergence.csv")).unwrap();
    assert_eq!(strip_timing(&ca), strip_timing(&cb));
    assert!(strip_timing(&ca).iter().all(|l| l.contains(",7,")));
}

#[test]
fn config_errors_exit_with_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let bad = write_config(
        dir.path(),
        r#"{ "scenario": { "n_tx": 4 }, "experiment": { "type": "nope" } }"#,
    );
    let o = swipt_mm(
        &["run", "--config", &bad, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    let good = write_config(dir.path(), SMALL);
    let o = swipt_mm(
        &[
            "run",
            "--config",
            &good,
            "--out",
            out.to_str().unwrap(),
            "--solvers",
            "simplex",
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
    let o = swipt_mm(
        &["run", "--config", &good, "--out", out.to_str().unwrap()],
        Some("zero"),
    );
    assert_eq!(o.status.code(), Some(2));
    let o = swipt_mm(
        &[
            "run",
            "--config",
            "/nonexistent/config.json",
            "--out",
            out.to_str().unwrap(),
        ],
        None,
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unreachable_harvest_target_exits_with_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
        "scenario": { "n_tx": 4, "info_users": 2, "harvest_users": 2, "q": [0.0, 50.0] },
        "experiment": { "type": "convergence", "solvers": ["mmq-hybrid"] }
    }"#,
    );
    let out = dir.path().join("out");
    let o = swipt_mm(
        &["run", "--config", &config, "--out", out.to_str().unwrap()],
        None,
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
}
