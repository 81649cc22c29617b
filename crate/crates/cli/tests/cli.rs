use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn zrh(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zrh")).args(args).output().expect("binary runs")
}

fn zrh_env(args: &[&str], key: &str, value: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_zrh"))
        .args(args)
        .env(key, value)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SIM: &[&str] = &[
    "simulate", "--N", "40", "--alpha", "1", "--t-end", "0.3", "--rho0", "-1:0:1", "--replicas", "6", "--seed", "9",
    "--ell", "3",
];

#[test]
fn simulate_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let o = zrh(&[SIM, &["--dt-obs", "0.1", "--out", path(&out)]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("replica,t,u,density\n"));
    let times: std::collections::BTreeSet<&str> = csv.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(times.into_iter().collect::<Vec<_>>(), ["0", "0.1", "0.2", "0.3"]);
    let side: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(side["replicas"].as_array().unwrap().len(), 6);
    for key in ["destroyed_count", "exited_left", "exited_right", "events", "wall_seconds"] {
        assert!(side.get(key).is_some(), "{key}");
    }
    assert!(side["destroyed_count"].as_u64().unwrap() > 0);
}

#[test]
fn output_does_not_depend_on_thread_count() {
    let a = zrh_env(SIM, "ZRH_THREADS", "1");
    let b = zrh_env(SIM, "ZRH_THREADS", "3");
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
    let bad = zrh_env(SIM, "ZRH_THREADS", "many");
    assert_eq!(code(&bad), 2);
}

#[test]
fn usage_and_model_errors_exit_2() {
    assert_eq!(code(&zrh(&["simulate"])), 2);
    assert_eq!(code(&zrh(&["no-such-command"])), 2);
    let o = zrh(&["simulate", "--p", "0.3", "--t-end", "1", "--rho0", "-1:0:1"]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("p = 0.3"));
    assert_eq!(code(&zrh(&["oracle", "--exact", "--ode"])), 2);
}

#[test]
fn oracle_outputs_feed_compare() {
    let dir = tempfile::tempdir().unwrap();
    let exact = dir.path().join("exact.csv");
    let ode = dir.path().join("ode.csv");
    let common = ["--N", "100", "--alpha", "1", "--rho0", "cos:-0.5:0.5:1", "--times", "0.2,0.4"];
    let o = zrh(&[&["oracle", "--exact", "--du", "0.01", "--out", path(&exact)], &common[..]].concat());
    assert_eq!(code(&o), 0);
    let o = zrh(&[&["oracle", "--ode", "--out", path(&ode)], &common[..]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("ode.json").exists());
    let cmp = |tol: &str| {
        zrh(&[
            "compare", "--empirical", path(&ode), "--target", path(&exact), "--interval=-2:2", "--du", "0.01",
            "--exclude", "0,0.2,0.4", "--tolerance", tol,
        ])
    };
    let ok = cmp("0.05");
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stdout));
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.starts_with("t,l1,se,tolerance,pass\n"));
    assert_eq!(text.lines().count(), 3);
    assert_eq!(code(&cmp("0")), 1);
}

#[test]
fn killprob_and_correlation_report_pass() {
    let o = zrh(&["oracle", "--killprob", "--N", "100", "--alpha", "1", "--replicas", "4000", "--seed", "2"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!((v["estimate"]["expected"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    let o = zrh(&["oracle", "--correlation", "--N", "40", "--alpha", "1", "--times", "0.2", "--replicas", "50"]);
    assert_eq!(code(&o), 2, "fewer replicas than the estimator needs");
}

fn experiment(tolerance: f64) -> String {
    format!(
        "name = \"lin\"\np = 0.75\nalpha = 1.0\nn = [40]\nrho0 = \"-1:0:1\"\ntimes = [0.3]\nell = 3\nreplicas = 8\nseed = 3\n\
         du = 0.05\ntarget = \"oracle\"\ninterval = [-2.0, 2.0]\nexclude_singular = true\ntolerance = {tolerance}\n"
    )
}

#[test]
fn compare_config_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("lin.toml");
    fs::write(&cfg, experiment(0.5)).unwrap();
    let out = dir.path().join("out");
    let o = zrh(&["compare", "--config", path(&cfg), "--out", path(&out), "--plot"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["lin.csv", "lin_profiles.csv", "lin.json", "lin.svg"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let first = fs::read(out.join("lin.json")).unwrap();
    let o = zrh(&["compare", "--config", path(&cfg), "--out", path(&out)]);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(out.join("lin.json")).unwrap(), first, "reruns are byte-identical");

    fs::write(&cfg, experiment(0.0)).unwrap();
    let o = zrh(&["compare", "--config", path(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(String::from_utf8_lossy(&o.stdout).contains(",false"));
}

#[test]
fn suite_exit_codes_and_parse_errors() {
    let dir = tempfile::tempdir().unwrap();
    let suite = dir.path().join("s.toml");
    fs::write(&suite, "").unwrap();
    let o = zrh(&["suite", path(&suite)]);
    assert_eq!(code(&o), 0);
    assert_eq!(String::from_utf8_lossy(&o.stdout), "experiment,n,t,l1,tolerance,pass\n");

    fs::write(&suite, format!("[[experiment]]\n{}", experiment(0.0))).unwrap();
    let out = dir.path().join("out");
    let o = zrh(&["suite", path(&suite), "--out", path(&out)]);
    assert_eq!(code(&o), 1);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.lines().nth(1).unwrap().starts_with("lin,40,0.3,"));
    assert!(summary.trim_end().ends_with("false"));

    fs::write(&suite, "[[experiment]]\nname = \"x\"\np = 0.75\nn = [10]\nrho0 = \"-1:0:1\"\ntimes = [0.1]\ninterval = [-1.0, 1.0]\nreplicas = \"many\"\n").unwrap();
    let o = zrh(&["suite", path(&suite)]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 8"), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn invariant_reports_residual_and_validates() {
    let o = zrh(&["invariant", "--N", "50", "--alpha", "1", "--c1", "-0.2", "--c2", "0.5"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["residual"].as_f64().unwrap() <= 1e-10);
    let o = zrh(&[
        "invariant", "--N", "30", "--p", "1", "--alpha", "1", "--m-plus", "0.8", "--window=-150:40", "--closed", "--validate",
        "--replicas", "40", "--t-end", "0.3", "--sites=-20,-1,0,1,20",
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["stationarity"]["sites"].as_array().unwrap().len(), 5);
    assert_eq!(code(&zrh(&["invariant", "--m-plus", "1", "--c1", "0"])), 2);
}

#[test]
fn pde_check_passes_and_balances_mass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pde.csv");
    let o = zrh(&["pde", "--N", "100", "--alpha", "1", "--rho0", "-1:0:1", "--du", "0.02", "--T", "0.5", "--check", "--out", path(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(fs::read_to_string(&out).unwrap().starts_with("t,u,rho\n"));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("pde.json")).unwrap()).unwrap();
    assert_eq!(v["max_principle_violations"], 0);
    assert!(v["boundary_flux_gap"].as_f64().unwrap() < 1e-9);
    assert!(v["right_check"]["pass"].as_bool().unwrap());
    assert!(v["final_mass"].as_f64().unwrap() < v["initial_mass"].as_f64().unwrap());
}

#[test]
fn couple_modes_share_the_csv_layout() {
    let base = ["couple", "--N", "40", "--alpha", "1", "--t-end", "0.2", "--dt-obs", "0.1", "--replicas", "4", "--ell", "3"];
    for extra in [
        &["--mode", "second-class"][..],
        &["--mode", "basic", "--preset", "lemma44-beta0"][..],
        &["--mode", "labeled", "--p", "1", "--beta", "1", "--window-margin", "2"][..],
    ] {
        let o = zrh(&[&base[..], extra].concat());
        assert_eq!(code(&o), 0, "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
        let text = String::from_utf8_lossy(&o.stdout);
        assert!(text.starts_with("t,K_t,left_mass,discrepancy,entropy_functional\n"));
        assert_eq!(text.lines().count(), 4);
    }
    let o = zrh(&[&base[..], &["--mode", "basic", "--rho0-second", "-1:0:2"]].concat());
    let v: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(v["order_violations"], 0, "ordered initial pair stays ordered");
}
