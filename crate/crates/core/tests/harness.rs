use bcfeedback::harness::{
    build_code, read_csv, run_monte_carlo, sweep, sweep_to_csv, CodeOptions, SchemeKind, SimSpec,
    SweepSpec, CSV_HEADER,
};
use bcfeedback::ChannelConfig;

fn small_sweep(scheme: SchemeKind, out_trials: u64) -> SweepSpec {
    SweepSpec {
        scheme,
        users: 2,
        bits: 3,
        uses: 9,
        power: 1.0,
        snr_db: vec![2.0, 4.0],
        fb_db: vec![None, Some(-20.0)],
        sim: SimSpec::fixed(out_trials),
        seed: 11,
        code: CodeOptions::default(),
    }
}

#[test]
fn thread_count_does_not_change_results() {
    for kind in [SchemeKind::Ol, SchemeKind::Bmcl, SchemeKind::Lqg] {
        let cfg = ChannelConfig::from_db(2, 9, 1.0, 3.0, Some(-25.0), 5).unwrap();
        let code = build_code(kind, &cfg, 3, CodeOptions::default()).unwrap();
        let spec = |threads| SimSpec {
            trials: 150_000,
            min_errors: 400,
            threads: Some(threads),
        };
        let one = run_monte_carlo(code.as_ref(), &cfg, &spec(1)).unwrap();
        let many = run_monte_carlo(code.as_ref(), &cfg, &spec(8)).unwrap();
        assert_eq!(one.trials, many.trials, "{kind}");
        assert_eq!(one.errors, many.errors, "{kind}");
        assert_eq!(one.audit, many.audit, "{kind}");
    }
}

#[test]
fn early_stop_lands_on_a_batch_boundary() {
    let cfg = ChannelConfig::from_db(2, 9, 1.0, 0.0, None, 3).unwrap();
    let code = build_code(SchemeKind::Bmcl, &cfg, 3, CodeOptions::default()).unwrap();
    let spec = SimSpec {
        trials: 1_000_000,
        min_errors: 50,
        threads: None,
    };
    let r = run_monte_carlo(code.as_ref(), &cfg, &spec).unwrap();
    assert!(r.trials < spec.trials);
    assert_eq!(r.trials % bcfeedback::harness::BATCH, 0);
    assert!(r.errors.iter().all(|&e| e >= 50));
}

#[test]
fn csv_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ol.csv");
    let spec = small_sweep(SchemeKind::Ol, 4_000);
    let rows = sweep_to_csv(&spec, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    let parsed = read_csv(&path).unwrap();
    assert_eq!(parsed.len(), rows.len() * 2);
    for (pr, r) in parsed.chunks(2).zip(&rows) {
        for (l, row) in pr.iter().enumerate() {
            assert_eq!(row.scheme, "ol");
            assert_eq!(row.user, l + 1);
            assert_eq!(row.errors, r.errors[l]);
            assert_eq!(row.trials, r.trials);
            assert_eq!(row.sigma_f2_db, r.sigma_f2_db);
            assert!((row.bler - r.bler(l)).abs() <= 1e-7 * r.bler(l).max(1e-300));
        }
    }
    assert!(text.contains(",-inf,"), "perfect feedback row missing");
}

#[test]
fn rerun_is_byte_identical_and_resume_skips_done_points() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let spec = small_sweep(SchemeKind::Eol, 4_000);
    sweep_to_csv(&spec, &a).unwrap();
    sweep_to_csv(&spec, &b).unwrap();
    let first = std::fs::read(&a).unwrap();
    assert_eq!(first, std::fs::read(&b).unwrap());

    // A second call finds every grid point already present.
    let again = sweep_to_csv(&spec, &a).unwrap();
    assert!(again.is_empty());
    assert_eq!(first, std::fs::read(&a).unwrap());

    // Resuming a truncated file completes it to the same bytes.
    let text = String::from_utf8(first.clone()).unwrap();
    let keep: Vec<&str> = text.lines().take(3).collect();
    std::fs::write(&b, keep.join("\n") + "\n").unwrap();
    let resumed = sweep_to_csv(&spec, &b).unwrap();
    assert_eq!(resumed.len(), 3);
    assert_eq!(first, std::fs::read(&b).unwrap());
}

#[test]
fn sweep_rows_respect_the_power_budget() {
    for kind in SchemeKind::ALL {
        let mut spec = small_sweep(kind, 20_000);
        if kind == SchemeKind::SkTdd {
            spec.uses = 8;
        }
        if kind == SchemeKind::Uncoded {
            spec.uses = 8;
        }
        for r in sweep(&spec).unwrap() {
            assert!(r.power_ok(), "{kind}: {}", r.avg_power());
        }
    }
}
