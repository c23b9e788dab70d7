use std::process::Command;

fn mcfdd(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_mcfdd")).args(args).output().unwrap()
}

fn stdout(o: &std::process::Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn data_rows(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn validate_prints_config_and_derived() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("sys.cfg");
    std::fs::write(&cfg, "# comment\ngamma = 0.3\n").unwrap();
    let o = mcfdd(&["validate", cfg.to_str().unwrap()]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# config_fingerprint = "));
    let rows = data_rows(&text);
    assert_eq!(rows[0], "name,value");
    assert!(rows.contains(&"gamma,3e-1"));
    assert!(rows.iter().any(|r| r.starts_with("zeta,")));
}

#[test]
fn invalid_config_names_field_and_fails() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "N = 701\n").unwrap();
    let o = mcfdd(&["--config", cfg.to_str().unwrap(), "validate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("`N`"));
    let o = mcfdd(&["--config", "/nonexistent.cfg", "analytic"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn psd_table_shape() {
    let o = mcfdd(&["psd", "--cm", "6e17", "--ci", "4e17", "--fmin", "0.1", "--fmax", "100", "--points", "7"]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows = data_rows(&text);
    assert_eq!(rows[0], "f,S_b,S_f,S_total");
    assert_eq!(rows.len(), 8);
    let first: Vec<f64> = rows[1].split(',').map(|v| v.parse().unwrap()).collect();
    assert!((first[0] - 0.1).abs() < 1e-12);
    assert!((first[1] + first[2] - first[3]).abs() <= 1e-12 * first[3]);
}

#[test]
fn analytic_lists_thresholds() {
    let text = stdout(&mcfdd(&["analytic"]));
    for key in ["gamma_td,", "gamma_fd,", "tdd_bep,", "fdd_bep,"] {
        assert!(text.lines().any(|l| l.starts_with(key)), "missing {key}");
    }
}

#[test]
fn simulate_writes_readable_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.csv");
    let o = mcfdd(&["--out", out.to_str().unwrap(), "--threads", "2", "simulate", "--trials", "100", "--seed", "5"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = mcfdd::harness::read_report(&out).unwrap();
    assert_eq!((r.trials, r.master_seed), (100, 5));
    let again = mcfdd(&["--threads", "1", "simulate", "--trials", "100", "--seed", "5"]);
    assert_eq!(stdout(&again), std::fs::read_to_string(&out).unwrap());
}

#[test]
fn sweep_rows_and_errors() {
    let o = mcfdd(&["sweep", "--param", "gamma", "--values", "0.3,0.7", "--trials", "100", "--seed", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("# param = gamma"));
    assert_eq!(data_rows(&text).len(), 3);
    let o = mcfdd(&["sweep", "--param", "bogus", "--values", "1,2"]);
    assert_eq!(o.status.code(), Some(4));
    let o = mcfdd(&["sweep", "--param", "gamma", "--values", "0.7,0.3,0.5", "--trials", "100"]);
    assert_eq!(o.status.code(), Some(4));
}
