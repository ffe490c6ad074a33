use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn roi_meta(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_roi-meta"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn simulate(dir: &Path, name: &str, extra: &[&str]) -> PathBuf {
    let path = dir.join(name);
    let mut args = vec!["simulate", "--out", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    let o = roi_meta(&args);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    path
}

fn golden() -> String {
    let path =
        Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/golden/report_seed42.json");
    fs::read_to_string(path).unwrap()
}

#[test]
fn simulate_evaluate_report_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(
        dir.path(),
        "sim.csv",
        &["--seed", "42", "--set", "n_campaigns=12"],
    );
    let saved = dir.path().join("report.json");
    let eval = roi_meta(&[
        "evaluate",
        data.to_str().unwrap(),
        "--out",
        saved.to_str().unwrap(),
        "--format",
        "json",
    ]);
    assert!(matches!(eval.status.code(), Some(0 | 1)));
    assert_eq!(stdout(&eval), golden());
    assert_eq!(fs::read_to_string(&saved).unwrap(), golden());

    let report = roi_meta(&["report", saved.to_str().unwrap(), "--format", "json"]);
    assert_eq!(report.status.code(), eval.status.code());
    assert_eq!(stdout(&report), golden());

    let human = roi_meta(&["report", saved.to_str().unwrap()]);
    let text = stdout(&human);
    assert!(text.contains("Method           Parameter"));
    assert!(text.contains("Recommendation:"));
}

#[test]
fn simulation_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.csv", &["--seed", "9"]);
    let b = simulate(dir.path(), "b.csv", &["--seed", "9"]);
    assert_eq!(fs::read(a).unwrap(), fs::read(b).unwrap());
}

#[test]
fn accepted_lift_exits_zero_and_ramps() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(
        dir.path(),
        "lift.csv",
        &["--seed", "3", "--set", "treatment_lift=0.1"],
    );
    let o = roi_meta(&["evaluate", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Decision: Accept"));
    assert!(stdout(&o).contains("ramp treatment traffic to 10.00% (requires approval)"));
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(
        dir.path(),
        "lift.csv",
        &["--seed", "3", "--set", "treatment_lift=0.1"],
    );
    let cfg = dir.path().join("eval.cfg");
    fs::write(
        &cfg,
        "# ramp state\ncurrent_share = 0.5\naa_repeats_k = 3\n",
    )
    .unwrap();
    let from_file = roi_meta(&[
        "evaluate",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
    ]);
    assert!(stdout(&from_file).contains("promote treatment to baseline"));
    let overridden = roi_meta(&[
        "evaluate",
        data.to_str().unwrap(),
        "--config",
        cfg.to_str().unwrap(),
        "--current_share",
        "0.1",
    ]);
    assert!(stdout(&overridden).contains("ramp treatment traffic to 20.00%"));
}

#[test]
fn null_data_is_rejected_with_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "null.csv", &["--seed", "1"]);
    let o = roi_meta(&["evaluate", data.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("halt the experiment"));
}

#[test]
fn input_and_config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--seed", "1"]);
    let cases: Vec<Vec<&str>> = vec![
        vec!["evaluate", "/nonexistent/parts.csv"],
        vec![
            "evaluate",
            data.to_str().unwrap(),
            "--confidence_level",
            "1.5",
        ],
        vec!["evaluate", data.to_str().unwrap(), "--current_share", "0.3"],
        vec!["evaluate", data.to_str().unwrap(), "--format", "xml"],
        vec!["simulate", "--out", "/nonexistent/dir/x.csv"],
        vec!["report", data.to_str().unwrap()],
    ];
    for args in cases {
        let o = roi_meta(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(
            String::from_utf8_lossy(&o.stderr).starts_with("error:"),
            "{args:?}"
        );
    }

    let bad = dir.path().join("bad.csv");
    fs::write(
        &bad,
        "campaign_id,arm,part_id,impressions,spend,value\nc,C,0,100,1.00,1.00\n",
    )
    .unwrap();
    let o = roi_meta(&["evaluate", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 2"));
}

#[test]
fn calibrate_and_subgroup_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.csv", &["--seed", "2"]);
    let cal = roi_meta(&["calibrate", data.to_str().unwrap(), "--aa_repeats_k", "4"]);
    assert_eq!(cal.status.code(), Some(0));
    let text = stdout(&cal);
    assert!(text.contains("Micro") && text.contains("Macro (median)"));
    assert_eq!(text.lines().count(), 4);

    let sg = roi_meta(&["subgroup", data.to_str().unwrap(), "--format", "json"]);
    assert_eq!(sg.status.code(), Some(0));
    assert!(stdout(&sg).contains("\"q_between\""));
    let sg = roi_meta(&[
        "subgroup",
        data.to_str().unwrap(),
        "--subgroup_fractions",
        "0.5,0.5",
    ]);
    assert!(stdout(&sg).contains("spend-2"));
}
