use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_rarecause"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn rarecause")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn field<'a>(line: &'a str, key: &str) -> &'a str {
    line.split_whitespace()
        .find_map(|kv| kv.strip_prefix(key).and_then(|v| v.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no {key} in {line}"))
}

#[test]
fn test_on_hand_fixture() {
    let path = fixture("hand_fixture.csv");
    let o = run(&["test", path.to_str().unwrap(), "--method", "dkw"]);
    assert!(o.status.success());
    let out = stdout(&o);
    let line = out.lines().next().unwrap();
    assert_eq!(field(line, "statistic"), "0.25");
    assert_eq!(field(line, "method"), "dkw-conservative");
    assert_eq!(field(line, "p_value"), "NA");
    assert!(out.lines().nth(1).unwrap().starts_with("fail-to-reject"));
}

#[test]
fn default_method_is_monte_carlo_null() {
    let path = fixture("hand_fixture.csv");
    let o = run(&["test", path.to_str().unwrap(), "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let line = out.lines().next().unwrap();
    assert_eq!(field(line, "statistic"), "0.25");
    assert_eq!(field(line, "method"), "monte-carlo-null");
    assert_ne!(field(line, "p_value"), "NA");
}

#[test]
fn event_free_is_a_data_error() {
    let path = fixture("event_free.csv");
    let o = run(&["test", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no event-bearing trajectories"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["simulate", "--n", "0"]).status.code(), Some(2));
    assert_eq!(
        run(&["simulate", "--n", "5", "--scenario", "nope"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(run(&["nope"]).status.code(), Some(2));
    let path = fixture("hand_fixture.csv");
    assert_eq!(
        run(&["test", path.to_str().unwrap(), "--alpha", "2"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        run(&[
            "test",
            path.to_str().unwrap(),
            "--method",
            "mc",
            "--replications",
            "10"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn missing_input_is_a_data_error() {
    assert_eq!(run(&["test", "/nonexistent/x.csv"]).status.code(), Some(3));
}

#[test]
fn baseline_on_hand_fixture() {
    let path = fixture("hand_fixture.csv");
    let o = run(&["baseline", path.to_str().unwrap(), "--t", "1"]);
    assert!(o.status.success());
    let out = stdout(&o);
    assert_eq!(field(&out, "statistic"), "0.5");
    assert_eq!(field(&out, "n_conditional"), "1");
    // t = 2 is past the shortest horizon
    assert_eq!(
        run(&["baseline", path.to_str().unwrap(), "--t", "2"])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn cdf_dump_matches_hand_values() {
    let path = fixture("hand_fixture.csv");
    let o = run(&["cdf", path.to_str().unwrap()]);
    assert_eq!(stdout(&o), "x_1,b1,b2\n1,0,0.25\n2,0.5,0.75\n3,1,1\n");
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    for p in [&a, &b] {
        let o = run(&[
            "simulate",
            "--scenario",
            "single-link-H1",
            "--n",
            "20",
            "--seed",
            "7",
            "--out",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = std::fs::read(&a).unwrap();
    assert_eq!(text, std::fs::read(&b).unwrap());
    let text = String::from_utf8(text).unwrap();
    assert_eq!(text.lines().count(), 1 + 20 * 501);
    assert!(text.starts_with("traj_id,t,x_1,event\n0,0,"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "scenario = multi-link-H0\nn = 4\nlinks = 3\nhorizon = 6\nseed = 1\n",
    )
    .unwrap();
    let o = run(&["simulate", "--config", cfg.to_str().unwrap(), "--n", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    assert!(out.starts_with("traj_id,t,x_1,x_2,x_3,event\n"));
    assert_eq!(out.lines().count(), 1 + 2 * 7);
}

#[test]
fn curves_rows_and_reruns() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("curves.csv");
    let args = [
        "curves",
        "--scenario",
        "single-link-H0",
        "--n",
        "250",
        "--seeds",
        "1",
        "--set",
        "horizon=100",
        "--out",
        out.to_str().unwrap(),
    ];
    assert!(run(&args).status.success());
    let first = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "scenario,N,seed,method,statistic");
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("single-link-H0,250,1,ours,"));
    assert!(lines[2].starts_with("single-link-H0,250,1,baseline,"));
    assert!(run(&args).status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap(), first);
}

#[test]
fn ingest_then_test() {
    let dir = tempfile::tempdir().unwrap();
    let det = dir.path().join("detectors.csv");
    let inc = dir.path().join("incidents.csv");
    std::fs::write(
        &det,
        "date,time,detector_id,flow\n\
         2022-03-01,06:00,D1,0\n2022-03-01,06:00,D2,2\n\
         2022-03-01,06:05,D1,2\n2022-03-01,06:05,D2,2\n\
         2022-03-01,06:10,D1,2\n2022-03-01,06:10,D2,2\n\
         2022-03-02,06:00,D1,3\n2022-03-02,06:05,D1,3\n2022-03-02,06:10,D1,3\n",
    )
    .unwrap();
    std::fs::write(
        &inc,
        "date,time,link_id\n2022-03-01,06:07,L\n2022-03-02,06:02,L\n",
    )
    .unwrap();
    let traj = dir.path().join("traj.csv");
    let o = run(&[
        "ingest",
        "--detectors",
        det.to_str().unwrap(),
        "--incidents",
        inc.to_str().unwrap(),
        "--window",
        "06:00-06:15",
        "--bin",
        "5m",
        "--link",
        "L",
        "--link-detectors",
        "D1,D2",
        "--out",
        traj.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read_to_string(&traj).unwrap(),
        "traj_id,t,x_1,event\n2022-03-01,0,1,\n2022-03-01,1,2,0\n2022-03-01,2,2,1\n\
         2022-03-02,0,3,\n2022-03-02,1,3,1\n2022-03-02,2,3,0\n"
    );
    let o = run(&["test", traj.to_str().unwrap()]);
    assert_eq!(field(&stdout(&o), "statistic"), "0.25");

    let bad = run(&[
        "ingest",
        "--detectors",
        det.to_str().unwrap(),
        "--incidents",
        inc.to_str().unwrap(),
        "--bin",
        "7m",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn fixture_ingest_test_reproduces_recorded_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(run(&["fixture", d.to_str().unwrap()]).status.success());
    let traj = d.join("traj.csv");
    let o = run(&[
        "ingest",
        "--detectors",
        d.join("detectors.csv").to_str().unwrap(),
        "--incidents",
        d.join("incidents.csv").to_str().unwrap(),
        "--window",
        "06:00-14:00",
        "--bin",
        "5m",
        "--out",
        traj.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let expected = std::fs::read_to_string(fixture("ingest_expected.txt")).unwrap();
    let want: Vec<&str> = expected.lines().filter(|l| !l.starts_with('#')).collect();
    let dkw = stdout(&run(&["test", traj.to_str().unwrap(), "--method", "dkw"]));
    assert_eq!(dkw.lines().next().unwrap(), want[1]);
    let mc = stdout(&run(&[
        "test",
        traj.to_str().unwrap(),
        "--method",
        "mc",
        "--replications",
        "200",
        "--seed",
        "7",
    ]));
    assert_eq!(mc.lines().next().unwrap(), want[2]);
}
