use std::path::Path;
use std::process::{Command, Output};

fn fairflip(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fairflip")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_field(body: &str, column: &str) -> String {
    let mut lines = body.lines();
    let header: Vec<_> = lines.next().unwrap().split(',').collect();
    let row: Vec<_> = lines.next().unwrap().split(',').collect();
    row[header.iter().position(|h| *h == column).unwrap()].to_string()
}

#[test]
fn blum_ci_attack_has_bias_one_quarter() {
    let o = fairflip(&["attack", "--protocol", "blum", "--attacker", "ci", "--target", "1", "--mode", "exact"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["bias"], 0.25);
    assert_eq!(v["schema_version"], 1);
    for key in ["protocol", "corrupted", "target", "bias", "pr_one", "abort_hist", "mode", "n", "seed"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
}

#[test]
fn martingale_jump_row() {
    let o = fairflip(&["martingale", "--protocol", "majority:3", "--theta", "auto"]);
    assert!(o.status.success());
    let p: f64 = csv_field(&stdout(&o), "gap_probability").parse().unwrap();
    assert!(p >= 0.05);
}

#[test]
fn estimator_failure_rate_within_rho() {
    let o = fairflip(&["estimator", "--protocol", "majority:3", "--rho", "0.5", "--trials", "200", "--seed", "7"]);
    assert!(o.status.success());
    let body = stdout(&o);
    assert!(body.starts_with("protocol,k,rho,v,trials,failures,failure_rate,seed\n"));
    let rate: f64 = csv_field(&body, "failure_rate").parse().unwrap();
    assert!(rate <= 0.5);
}

#[test]
fn independence_rows_pass() {
    let o = fairflip(&["independence", "--protocol", "skewed_gap:3", "-k", "8"]);
    assert!(o.status.success());
    let body = stdout(&o);
    assert!(body.starts_with("protocol,k,round,party,corr,bound,pass\n"));
    assert_eq!(body.lines().count(), 1 + 2 * 3);
}

#[test]
fn certify_and_validate_exit_codes() {
    let o = fairflip(&["certify", "--protocol", "skewed_gap:3"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["measured_bias_exact"], "5/32");

    let o = fairflip(&["validate", "--protocol", "majority:3"]);
    assert!(o.status.success());
}

#[test]
fn same_seed_gives_identical_files() {
    let dir = tempfile::tempdir().unwrap();
    let run = |name: &str| {
        let path = dir.path().join(name);
        let o = fairflip(&[
            "attack",
            "--protocol",
            "majority:3",
            "--attacker",
            "gap",
            "--corrupted",
            "B",
            "--target",
            "0",
            "--mode",
            "sampled",
            "--samples",
            "100000",
            "--oracle",
            "estimator",
            "--rho",
            "0.02",
            "-k",
            "2",
            "--seed",
            "42",
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        std::fs::read(path).unwrap()
    };
    assert_eq!(run("a.json"), run("b.json"));
}

#[test]
fn usage_and_capacity_errors() {
    let o = fairflip(&["estimator", "--protocol", "majority:3", "--rho", "0.5"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));

    let o = fairflip(&["attack", "--protocol", "majority:4"]);
    assert_eq!(o.status.code(), Some(2));

    let o = Command::new(env!("CARGO_BIN_EXE_fairflip"))
        .args(["attack", "--protocol", "majority:7"])
        .env("FAIRFLIP_BUDGET", "1000")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("FAIRFLIP_BUDGET"));
}

fn write_attack(dir: &Path, name: &str, protocol: &str, attacker: &str, target: &str) {
    let path = dir.join(name);
    let o = fairflip(&[
        "attack",
        "--protocol",
        protocol,
        "--attacker",
        attacker,
        "--target",
        target,
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(o.status.success());
}

#[test]
fn report_tables() {
    let o = fairflip(&["report", "--format", "csv"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);

    let dir = tempfile::tempdir().unwrap();
    write_attack(dir.path(), "blum.json", "blum", "ci", "1");
    write_attack(dir.path(), "maj.json", "majority:3", "optimal", "1");
    let pattern = format!("{}/*.json", dir.path().display());
    let o = fairflip(&["report", "--format", "csv", &pattern]);
    assert!(o.status.success());
    let body = stdout(&o);
    let blum = body.lines().find(|l| l.starts_with("blum,")).unwrap();
    assert!(blum.contains(",0.25,"));
    assert!(blum.ends_with("true"));
    assert_eq!(blum.matches("true").count(), 3);

    let md = fairflip(&["report", &pattern]);
    assert!(stdout(&md).starts_with("| protocol | attacker |"));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{").unwrap();
    let o = fairflip(&["report", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("bad.json"));
}
