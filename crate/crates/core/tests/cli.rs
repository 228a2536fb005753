use std::process::Command;

use bcfeedback::harness::read_csv;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bcfeedback"))
}

#[test]
fn simulate_writes_csv_and_config_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let conf = dir.path().join("run.conf");
    std::fs::write(
        &conf,
        format!(
            "scheme = eol\nusers = 2\nk = 2\nn = 6\nsnr_db = 0, 2\nfb-noise-db = perfect\ntrials = 3000\nmin-errors = 0\nseed = 4\nout = {}\n",
            out.display()
        ),
    )
    .unwrap();
    let status = bin()
        .args(["simulate", "--config"])
        .arg(&conf)
        .args(["--scheme", "ol", "--fb-noise-db", "-30"])
        .status()
        .unwrap();
    assert!(status.success());
    let rows = read_csv(&out).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.scheme == "ol" && r.sigma_f2_db == Some(-30.0)));
    assert!(rows.iter().all(|r| r.trials == 3000 && r.bits == 2 && r.uses == 6));
}

#[test]
fn bad_input_exits_non_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("x.csv");
    let run = |args: &[&str]| {
        bin()
            .args(["simulate", "--out"])
            .arg(&out)
            .args(args)
            .output()
            .unwrap()
    };
    let unknown = run(&["--scheme", "turbo", "--k", "1", "--n", "2", "--snr-db", "0"]);
    assert!(!unknown.status.success());
    let odd = run(&["--scheme", "sk-tdd", "--k", "1", "--n", "3", "--snr-db", "0"]);
    assert!(!odd.status.success());
    assert!(String::from_utf8_lossy(&odd.stderr).contains("even"));
    let missing = run(&["--scheme", "ol", "--k", "1", "--n", "4"]);
    assert!(!missing.status.success());
}

#[test]
fn capacity_table() {
    let out = bin().args(["capacity", "--snr-db", "10", "--max-users", "8"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "L,c_sum,lqg_sum_rate,c_limit");
    assert_eq!(lines.len(), 5);
    let two: Vec<f64> = lines[2].split(',').map(|v| v.parse().unwrap()).collect();
    assert_eq!(two[0], 2.0);
    assert!((two[1] - two[2]).abs() < 1e-6);
    assert!(two[1] < two[3]);
}
